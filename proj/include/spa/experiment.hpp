#pragma once

// End-to-end orchestration shared by the CLI and the acceptance suite.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "spa/corpus.hpp"
#include "spa/evaluation.hpp"
#include "spa/extraction.hpp"
#include "spa/prediction.hpp"
#include "spa/simulator.hpp"

namespace spa {

/// Defaults: five target features, ten sampled
/// problems, five attempts, inference averaged over three runs.
struct RunParameters {
  std::size_t k = 5;
  std::size_t sample_size = 10;
  std::size_t attempts = 5;
  std::size_t runs = 3;
  std::uint64_t seed = 0;
  MergeOrder order = MergeOrder::problem_first;
  bool count_special_tokens = true;
  PromptTemplate prompt_template;
};

/// Sampling seed for attempt `attempt`; attempts differ only in this seed.
std::uint64_t attempt_seed(std::uint64_t seed, std::size_t attempt);

/// Stable file stem for a prompt's activation dump: 16 hex digits of FNV-1a.
std::string prompt_id(std::string_view prompt_text);

struct PlannedPrompt {
  std::string id;
  std::string text;
  std::string role;  // extraction_positive | extraction_negative | sample
  std::optional<std::size_t> instruction_index;
  std::optional<std::size_t> attempt;
  std::optional<CharRange> example_code;
};

/// Every distinct prompt the extraction and prediction phases will request.
std::vector<PlannedPrompt> plan_prompts(const Scenario& scenario, const ProblemCorpus& problems,
                                        const RunParameters& params);

/// Reads `<dir>/<prompt_id>.spad` for each requested prompt.
class DumpDirectoryProvider final : public ActivationProvider {
 public:
  explicit DumpDirectoryProvider(std::filesystem::path dir) : dir_(std::move(dir)) {}
  ActivationDump activations(std::string_view prompt_text, const PromptContext& context) override;

 private:
  std::filesystem::path dir_;
};

struct SpaRun {
  TargetFeatureSet target_features;
  std::vector<PredictionReport> predictions;  // one per attempt
  double extraction_seconds = 0.0;
  double prediction_seconds = 0.0;
};

SpaRun run_spa(const Scenario& scenario, const ProblemCorpus& problems, const SaeParameters& sae,
               ActivationProvider& provider, const RunParameters& params);

/// Predictions for every attempt given an already extracted feature set.
std::vector<PredictionReport> predict_attempts(const Scenario& scenario, const TargetFeatureSet& tf,
                                               const ProblemCorpus& problems, const SaeParameters& sae,
                                               ActivationProvider& provider, const RunParameters& params);

/// Problems used by attempt `attempt`, in sampled order.
ProblemCorpus attempt_subset(const ProblemCorpus& problems, const RunParameters& params, std::size_t attempt);

struct ExperimentResult {
  SpaRun spa;
  GroundTruthSeries truth;
  std::vector<GroundTruthSeries> baseline;
  CorrelationReport spa_correlation;
  std::optional<CorrelationReport> baseline_correlation;
  std::optional<std::string> baseline_note;
  std::vector<double> spearman_to_planted;  // per attempt
  CostReport cost;
  double full_inference_seconds = 0.0;
  double baseline_seconds = 0.0;
};

/// Full inference truth over `problems` (averaged over runs).
GroundTruthSeries simulated_truth(const PlantedWorld& world, const Scenario& scenario, const ProblemCorpus& problems,
                                  const RunParameters& params);

/// Sampled-inference baseline tallies, one series per attempt.
std::vector<GroundTruthSeries> simulated_baseline(const PlantedWorld& world, const Scenario& scenario,
                                                  const ProblemCorpus& problems, const RunParameters& params);

ExperimentResult run_simulated_experiment(const PlantedWorld& world, const Scenario& scenario,
                                          const ProblemCorpus& problems, const RunParameters& params);

}  // namespace spa
