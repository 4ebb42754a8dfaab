#pragma once

// Seeded stand-in for an LLM plus its SAE. Planted features respond to the
// objective phrase (extraction) and to per-instruction strengths
// (prediction), and simulated completions contain target structures at the
// same strengths, so the prediction hypothesis holds by construction and the
// pipeline itself is what gets tested.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spa/activation.hpp"
#include "spa/corpus.hpp"
#include "spa/evaluation.hpp"
#include "spa/extraction.hpp"
#include "spa/syntax.hpp"

namespace spa {

struct ObjectiveSpec {
  std::string name;
  std::string phrase;  // text whose presence in a prompt drives the planted features
  StructureKind kind = StructureKind::try_except;
  std::size_t n_features = 5;
  std::vector<std::uint32_t> features;  // explicit indices; drawn from the seed when empty
};

struct WorldConfig {
  std::uint64_t seed = 0;
  std::size_t d_model = 64;
  std::size_t d_sae = 256;
  std::vector<ObjectiveSpec> objectives;
  std::string active_objective;
  std::vector<double> instruction_strengths;
  double noise_rate = 0.0;
  double generic_rate = 0.3;
  std::size_t generation_slots = 3;
  float threshold = 0.5f;
  std::string model_id = "toy-lm";
  std::uint32_t layer = 16;
};

struct PlantedObjective {
  std::string name;
  std::string phrase;
  StructureKind kind = StructureKind::try_except;
  std::vector<std::uint32_t> features;  // ascending
};

struct PlantedWorld {
  WorldConfig config;
  std::vector<PlantedObjective> objectives;
  std::vector<bool> planted;  // per SAE feature
  std::vector<std::uint32_t> unplanted;
  SaeParameters sae;

  const PlantedObjective& objective(std::string_view name) const;
  const PlantedObjective& active() const;
  double strength(std::size_t instruction_index) const;
};

/// Planted encoder rows are orthonormal; every other row is a random unit
/// vector orthogonal to the planted subspace, so planted features never pick
/// up crosstalk.
PlantedWorld build_world(const WorldConfig& config);

struct WordToken {
  std::string text;
  std::size_t begin = 0;
  std::size_t end = 0;
};

std::vector<WordToken> whitespace_tokens(std::string_view text);

/// Token range covering the words that lie inside `chars`.
TokenRange char_range_to_tokens(const std::vector<WordToken>& tokens, CharRange chars);

ActivationDump synth_prompt_dump(const PlantedWorld& world, std::string_view prompt_text,
                                 std::optional<std::size_t> instruction_index,
                                 std::optional<CharRange> example_code = std::nullopt);

/// One simulated completion: a fenced python block with `generation_slots`
/// slots, each holding the target structure with probability equal to the
/// instruction's strength. Prefill and decode are charged as forward passes.
Generation synth_generation(const PlantedWorld& world, std::string_view prompt, std::size_t instruction_index,
                            StructureKind kind, std::uint64_t run);

/// MBPP-shaped synthetic problems with ids "1".."n".
ProblemCorpus synth_problems(std::size_t n, std::uint64_t seed);

class SimulatedActivations final : public ActivationProvider {
 public:
  explicit SimulatedActivations(const PlantedWorld& world) : world_(world) {}
  ActivationDump activations(std::string_view prompt_text, const PromptContext& context) override;

 private:
  const PlantedWorld& world_;
};

class SimulatedGenerator final : public Generator {
 public:
  explicit SimulatedGenerator(const PlantedWorld& world) : world_(world) {}
  Generation generate(std::string_view prompt, std::size_t instruction_index, std::uint64_t run) override;

 private:
  const PlantedWorld& world_;
};

}  // namespace spa
