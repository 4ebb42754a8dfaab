#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "spa/activation.hpp"
#include "spa/corpus.hpp"
#include "spa/extraction.hpp"

namespace spa {

enum class MergeOrder { problem_first, instruction_first };

/// Problem text and instruction joined by a newline. An empty instruction
/// leaves the problem text unchanged.
std::string merge_prompt(std::string_view problem_text, std::string_view instruction,
                         MergeOrder order = MergeOrder::problem_first);

/// Seeded sample of `sample_size` distinct corpus indices (partial
/// Fisher-Yates, portable RNG). Same seed, same subset.
std::vector<std::size_t> sample_problem_indices(std::size_t corpus_size, std::size_t sample_size,
                                                std::uint64_t seed);

struct SamplePromptSet {
  std::size_t instruction_index = 0;
  std::vector<std::string> prompts;
  std::vector<std::string> problem_ids;
};

SamplePromptSet assemble_sample_prompts(std::size_t instruction_index, std::string_view instruction,
                                        const ProblemCorpus& problems, std::size_t sample_size, std::uint64_t seed,
                                        MergeOrder order = MergeOrder::problem_first);

/// Fraction of tokens on which `feature` is active (> 0).
double normalized_activation_frequency(const FeatureActivationMatrix& acts, std::uint32_t feature);

/// Per-feature sums over prompts of the activation frequency, keyed by feature.
std::map<std::uint32_t, double> feature_frequency_sums(const TargetFeatureSet& tf,
                                                       std::span<const FeatureActivationMatrix> encoded_prompts);

/// Sum over target features (ascending index) of the per-feature sums above.
double predict_instruction_score(const TargetFeatureSet& tf, std::span<const FeatureActivationMatrix> encoded_prompts);

/// Descending by score; ties by ascending instruction index.
std::vector<std::size_t> rank_instructions(const std::map<std::size_t, double>& scores);

struct InstructionScore {
  std::size_t index = 0;
  std::string text;
  double score = 0.0;
  std::map<std::uint32_t, double> per_feature;
};

struct PredictionReport {
  std::string scenario_name;
  std::uint64_t seed = 0;
  std::size_t sample_size = 0;
  std::vector<std::string> problem_ids;
  TargetFeatureSet target_features;
  std::vector<InstructionScore> instructions;
  std::vector<std::size_t> ranking;
  std::size_t forward_passes = 0;

  std::map<std::size_t, double> scores() const;
};

struct PredictOptions {
  std::size_t sample_size = 10;
  std::uint64_t seed = 0;
  MergeOrder order = MergeOrder::problem_first;
  bool count_special_tokens = true;
};

PredictionReport predict(const InstructionSet& scenario, const TargetFeatureSet& tf, const ProblemCorpus& problems,
                         const SaeParameters& sae, ActivationProvider& provider, const PredictOptions& options);

}  // namespace spa
