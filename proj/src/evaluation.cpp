#include "spa/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "spa/error.hpp"

namespace spa {

double pearson(std::span<const double> xs, std::span<const double> ys) {
  require(xs.size() == ys.size(), ErrorKind::contract_violation, "pearson inputs differ in length");
  require(xs.size() >= 2, ErrorKind::contract_violation, "pearson needs at least two points");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  require(sxx > 0.0 && syy > 0.0, ErrorKind::undefined_correlation, "correlation undefined for a constant series");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> xs, std::span<const double> ys) {
  require(xs.size() == ys.size(), ErrorKind::contract_violation, "spearman inputs differ in length");
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  return pearson(rx, ry);
}

double fisher_z_mean(std::span<const double> rs) {
  require(!rs.empty(), ErrorKind::empty_input, "fisher_z_mean of no correlations");
  double sum = 0.0;
  for (double r : rs) {
    require(std::isfinite(r) && std::abs(r) <= 1.0, ErrorKind::contract_violation, "|r| must not exceed 1");
    sum += std::atanh(std::clamp(r, -kFisherClamp, kFisherClamp));
  }
  return std::tanh(sum / static_cast<double>(rs.size()));
}

std::string_view to_string(TruthSource source) noexcept {
  switch (source) {
    case TruthSource::full_inference: return "full_inference";
    case TruthSource::sampled_inference: return "sampled_inference";
    case TruthSource::simulator: return "simulator";
  }
  return "unknown";
}

GroundTruthSeries run_inference(const InstructionSet& instructions, const ProblemCorpus& problems,
                                Generator& generator, StructureKind kind, std::size_t runs, std::uint64_t run_offset,
                                MergeOrder order) {
  require(runs >= 1, ErrorKind::contract_violation, "runs must be at least 1");
  require(!instructions.instructions.empty(), ErrorKind::empty_input, "no instructions");
  GroundTruthSeries truth;
  truth.runs = runs;
  truth.source = TruthSource::full_inference;
  for (std::size_t i = 0; i < instructions.instructions.size(); ++i) {
    std::vector<std::string> outputs;
    outputs.reserve(problems.size() * runs);
    for (std::size_t r = 0; r < runs; ++r) {
      for (const auto& problem : problems) {
        const auto prompt = merge_prompt(problem.text, instructions.instructions[i], order);
        try {
          auto g = generator.generate(prompt, i, run_offset + r);
          truth.decode_steps += g.decode_steps;
          outputs.push_back(std::move(g.text));
          ++truth.generations;
        } catch (const std::exception&) {
          ++truth.failed_generations;
          truth.partial = true;
        }
      }
    }
    const auto tally = tally_corpus(outputs, kind);
    truth.tallies[i] = static_cast<double>(tally.total) / static_cast<double>(runs);
  }
  return truth;
}

GroundTruthSeries run_sampled_inference_baseline(const InstructionSet& instructions, const ProblemCorpus& subset,
                                                 Generator& generator, StructureKind kind, std::uint64_t run,
                                                 MergeOrder order) {
  auto truth = run_inference(instructions, subset, generator, kind, 1, run, order);
  truth.source = TruthSource::sampled_inference;
  return truth;
}

namespace {

CorrelationReport correlate(std::string_view scenario_name, const std::vector<std::map<std::size_t, double>>& series,
                            const GroundTruthSeries& truth) {
  require(!series.empty(), ErrorKind::empty_input, "no attempts to evaluate");
  CorrelationReport report;
  report.scenario_name = scenario_name;
  report.attempts = series.size();
  for (const auto& scores : series) {
    std::vector<double> xs, ys;
    require(scores.size() == truth.tallies.size(), ErrorKind::index_mismatch,
            "prediction covers " + std::to_string(scores.size()) + " instructions, truth covers " +
                std::to_string(truth.tallies.size()));
    for (const auto& [index, score] : scores) {
      const auto it = truth.tallies.find(index);
      require(it != truth.tallies.end(), ErrorKind::index_mismatch,
              "instruction " + std::to_string(index) + " has no ground truth");
      xs.push_back(score);
      ys.push_back(it->second);
    }
    report.per_attempt_r.push_back(pearson(xs, ys));
  }
  report.fisher_mean_r = fisher_z_mean(report.per_attempt_r);
  return report;
}

}  // namespace

CorrelationReport evaluate(std::span<const PredictionReport> attempts, const GroundTruthSeries& truth) {
  std::vector<std::map<std::size_t, double>> series;
  for (const auto& a : attempts) series.push_back(a.scores());
  return correlate(attempts.empty() ? "" : attempts.front().scenario_name, series, truth);
}

CorrelationReport evaluate_series(std::string_view scenario_name, std::span<const GroundTruthSeries> attempts,
                                  const GroundTruthSeries& truth) {
  std::vector<std::map<std::size_t, double>> series;
  for (const auto& a : attempts) series.push_back(a.tallies);
  return correlate(scenario_name, series, truth);
}

CostReport cost_accounting(const CostInputs& in) {
  CostReport cost;
  const std::size_t prompts = in.instructions * in.sample_size;
  cost.spa_forward_passes = prompts + 2;
  cost.baseline_forward_passes = prompts;
  cost.baseline_generations = prompts;
  cost.baseline_generation_passes = static_cast<double>(prompts) * (1.0 + in.mean_decode_steps);
  cost.full_inference_forward_passes = in.benchmark_size * in.instructions;
  cost.full_inference_generation_passes = static_cast<double>(cost.full_inference_forward_passes) *
                                          static_cast<double>(in.runs) * (1.0 + in.mean_decode_steps);
  if (cost.full_inference_forward_passes > 0) {
    cost.operation_reduction = 1.0 - static_cast<double>(cost.spa_forward_passes) /
                                         static_cast<double>(cost.full_inference_forward_passes);
  }
  cost.wall_times = in.wall_times;
  return cost;
}

}  // namespace spa
