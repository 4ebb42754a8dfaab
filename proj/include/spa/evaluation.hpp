#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spa/corpus.hpp"
#include "spa/prediction.hpp"
#include "spa/syntax.hpp"

namespace spa {

/// Sample Pearson correlation. Throws undefined_correlation when either
/// series is constant.
double pearson(std::span<const double> xs, std::span<const double> ys);

/// Pearson correlation of average ranks (ties share the mean rank).
double spearman(std::span<const double> xs, std::span<const double> ys);

/// |r| is clamped to this before atanh so r = +-1 stays finite.
inline constexpr double kFisherClamp = 1.0 - 1e-7;

/// tanh of the mean of atanh(r_i).
double fisher_z_mean(std::span<const double> rs);

enum class TruthSource { full_inference, sampled_inference, simulator };

std::string_view to_string(TruthSource source) noexcept;

struct GroundTruthSeries {
  std::map<std::size_t, double> tallies;  // instruction index -> tally averaged over runs
  std::size_t runs = 1;
  TruthSource source = TruthSource::full_inference;
  std::size_t generations = 0;
  std::size_t decode_steps = 0;
  std::size_t failed_generations = 0;
  bool partial = false;
};

struct Generation {
  std::string text;
  std::size_t decode_steps = 0;
};

/// Produces one completion per prompt. `run` selects an independent sampling
/// stream for the same prompt.
class Generator {
 public:
  virtual ~Generator() = default;
  virtual Generation generate(std::string_view prompt, std::size_t instruction_index, std::uint64_t run) = 0;
};

/// Generates for every (instruction, problem, run), counts `kind`, and
/// averages the per-instruction totals over runs.
GroundTruthSeries run_inference(const InstructionSet& instructions, const ProblemCorpus& problems,
                                Generator& generator, StructureKind kind, std::size_t runs,
                                std::uint64_t run_offset = 0, MergeOrder order = MergeOrder::problem_first);

/// One generation per sampled problem per instruction; the subset is the one
/// the prediction used.
GroundTruthSeries run_sampled_inference_baseline(const InstructionSet& instructions, const ProblemCorpus& subset,
                                                 Generator& generator, StructureKind kind, std::uint64_t run,
                                                 MergeOrder order = MergeOrder::problem_first);

struct CorrelationReport {
  std::string scenario_name;
  std::vector<double> per_attempt_r;
  double fisher_mean_r = 0.0;
  std::size_t attempts = 0;
};

/// Pearson(P, tally) per attempt, then the Fisher-z mean.
CorrelationReport evaluate(std::span<const PredictionReport> attempts, const GroundTruthSeries& truth);

/// Same, for a baseline that produced its own tallies per attempt.
CorrelationReport evaluate_series(std::string_view scenario_name, std::span<const GroundTruthSeries> attempts,
                                  const GroundTruthSeries& truth);

struct CostInputs {
  std::size_t instructions = 0;
  std::size_t sample_size = 0;
  std::size_t benchmark_size = 0;
  std::size_t runs = 1;
  double mean_decode_steps = 0.0;  // generated tokens per completion
  std::map<std::string, double> wall_times;
};

struct CostReport {
  std::size_t spa_forward_passes = 0;
  std::size_t baseline_forward_passes = 0;        // prompt prefills
  std::size_t baseline_generations = 0;
  double baseline_generation_passes = 0.0;        // prefills + decode steps
  std::size_t full_inference_forward_passes = 0;  // prompt prefills per run
  double full_inference_generation_passes = 0.0;  // over all runs, with decode
  double operation_reduction = 0.0;               // 1 - spa / full prefills
  std::map<std::string, double> wall_times;
};

CostReport cost_accounting(const CostInputs& inputs);

}  // namespace spa
