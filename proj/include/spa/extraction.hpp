#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spa/activation.hpp"

namespace spa {

/// Half-open byte range within a prompt text.
struct CharRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  bool operator==(const CharRange&) const = default;
};

inline constexpr std::string_view kExampleSpanName = "example_code";

/// Positive prompt template. The negative prompt is the same template with
/// `objective_phrase` removed.
struct PromptTemplate {
  std::string positive = "Write a python code example of <<OBJECTIVE>>.\n\n<<EXAMPLE_CODE>>";
  std::string objective_phrase = " of <<OBJECTIVE>>";
};

struct PromptPair {
  std::string positive_text;
  std::string negative_text;
  std::string objective;
  std::string example_code;
  CharRange positive_code;
  CharRange negative_code;
};

PromptPair build_prompt_pair(std::string_view objective, std::string_view example_code,
                             const PromptTemplate& tmpl = {});

struct FeatureScore {
  std::uint32_t feature = 0;
  double d = 0.0;

  bool operator==(const FeatureScore&) const = default;
};

/// Per-feature sum of positive-span activations minus sum of negative-span
/// activations. Features whose difference is exactly zero are omitted; the
/// result is ordered by feature index.
std::vector<FeatureScore> activation_difference(const FeatureActivationMatrix& pos,
                                                const FeatureActivationMatrix& neg, TokenRange pos_span,
                                                TokenRange neg_span);

struct TargetFeatureSet {
  std::vector<FeatureScore> features;  // d descending, ties by feature ascending
  std::size_t requested_k = 0;
  bool short_of_k = false;

  std::vector<std::uint32_t> indices() const;
};

/// Top-k by d; ties broken by ascending feature index.
TargetFeatureSet select_target_features(std::vector<FeatureScore> scores, std::size_t k);

/// What an activation source knows about the prompt it is asked to run.
struct PromptContext {
  std::optional<std::size_t> instruction_index;
  std::optional<CharRange> example_code;
};

/// Produces residual activations for prompt texts: a real-model export on
/// disk or the simulator.
class ActivationProvider {
 public:
  virtual ~ActivationProvider() = default;
  virtual ActivationDump activations(std::string_view prompt_text, const PromptContext& context) = 0;
};

TargetFeatureSet extract_target_features(std::string_view objective, std::string_view example_code,
                                         const SaeParameters& sae, ActivationProvider& provider, std::size_t k,
                                         const PromptTemplate& tmpl = {});

}  // namespace spa
