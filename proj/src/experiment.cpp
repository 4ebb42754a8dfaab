#include "spa/experiment.hpp"

#include <chrono>
#include <set>

#include "spa/error.hpp"
#include "spa/report_io.hpp"
#include "spa/rng.hpp"
#include "spa/spad_format.hpp"

namespace spa {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

constexpr std::uint64_t kBaselineRunBase = 1'000'000;

}  // namespace

std::uint64_t attempt_seed(std::uint64_t seed, std::size_t attempt) {
  return combine_seed(seed, static_cast<std::uint64_t>(attempt));
}

std::string prompt_id(std::string_view prompt_text) { return hex64(fnv1a64(prompt_text)); }

std::vector<PlannedPrompt> plan_prompts(const Scenario& scenario, const ProblemCorpus& problems,
                                        const RunParameters& params) {
  std::vector<PlannedPrompt> plan;
  std::set<std::string> seen;
  auto add = [&](PlannedPrompt p) {
    p.id = prompt_id(p.text);
    if (seen.insert(p.id).second) plan.push_back(std::move(p));
  };
  const auto pair = build_prompt_pair(scenario.objective, scenario.example_code, params.prompt_template);
  add({"", pair.positive_text, "extraction_positive", std::nullopt, std::nullopt, pair.positive_code});
  add({"", pair.negative_text, "extraction_negative", std::nullopt, std::nullopt, pair.negative_code});
  const auto& instructions = scenario.instruction_set.instructions;
  for (std::size_t a = 0; a < params.attempts; ++a) {
    for (std::size_t i = 0; i < instructions.size(); ++i) {
      const auto set = assemble_sample_prompts(i, instructions[i], problems, params.sample_size,
                                               attempt_seed(params.seed, a), params.order);
      for (const auto& text : set.prompts) add({"", text, "sample", i, a, std::nullopt});
    }
  }
  return plan;
}

ActivationDump DumpDirectoryProvider::activations(std::string_view prompt_text, const PromptContext&) {
  return load_dump(dir_ / (prompt_id(prompt_text) + ".spad"));
}

std::vector<PredictionReport> predict_attempts(const Scenario& scenario, const TargetFeatureSet& tf,
                                               const ProblemCorpus& problems, const SaeParameters& sae,
                                               ActivationProvider& provider, const RunParameters& params) {
  require(params.attempts >= 1, ErrorKind::contract_violation, "attempts must be at least 1");
  std::vector<PredictionReport> out;
  for (std::size_t a = 0; a < params.attempts; ++a) {
    PredictOptions options;
    options.sample_size = params.sample_size;
    options.seed = attempt_seed(params.seed, a);
    options.order = params.order;
    options.count_special_tokens = params.count_special_tokens;
    out.push_back(predict(scenario.instruction_set, tf, problems, sae, provider, options));
  }
  return out;
}

SpaRun run_spa(const Scenario& scenario, const ProblemCorpus& problems, const SaeParameters& sae,
               ActivationProvider& provider, const RunParameters& params) {
  SpaRun run;
  auto start = Clock::now();
  run.target_features = extract_target_features(scenario.objective, scenario.example_code, sae, provider, params.k,
                                                 params.prompt_template);
  run.extraction_seconds = seconds_since(start);
  start = Clock::now();
  run.predictions = predict_attempts(scenario, run.target_features, problems, sae, provider, params);
  run.prediction_seconds = seconds_since(start);
  return run;
}

ProblemCorpus attempt_subset(const ProblemCorpus& problems, const RunParameters& params, std::size_t attempt) {
  ProblemCorpus subset;
  for (auto i : sample_problem_indices(problems.size(), params.sample_size, attempt_seed(params.seed, attempt))) {
    subset.push_back(problems[i]);
  }
  return subset;
}

GroundTruthSeries simulated_truth(const PlantedWorld& world, const Scenario& scenario, const ProblemCorpus& problems,
                                  const RunParameters& params) {
  SimulatedGenerator generator(world);
  auto truth = run_inference(scenario.instruction_set, problems, generator, world.active().kind, params.runs, 0,
                             params.order);
  truth.source = TruthSource::simulator;
  return truth;
}

std::vector<GroundTruthSeries> simulated_baseline(const PlantedWorld& world, const Scenario& scenario,
                                                  const ProblemCorpus& problems, const RunParameters& params) {
  SimulatedGenerator generator(world);
  std::vector<GroundTruthSeries> out;
  for (std::size_t a = 0; a < params.attempts; ++a) {
    out.push_back(run_sampled_inference_baseline(scenario.instruction_set, attempt_subset(problems, params, a),
                                                 generator, world.active().kind, kBaselineRunBase + a, params.order));
  }
  return out;
}

ExperimentResult run_simulated_experiment(const PlantedWorld& world, const Scenario& scenario,
                                          const ProblemCorpus& problems, const RunParameters& params) {
  ExperimentResult result;
  SimulatedActivations provider(world);
  result.spa = run_spa(scenario, problems, world.sae, provider, params);

  auto start = Clock::now();
  result.truth = simulated_truth(world, scenario, problems, params);
  result.full_inference_seconds = seconds_since(start);

  start = Clock::now();
  result.baseline = simulated_baseline(world, scenario, problems, params);
  result.baseline_seconds = seconds_since(start);

  start = Clock::now();
  result.spa_correlation = evaluate(result.spa.predictions, result.truth);
  try {
    result.baseline_correlation = evaluate_series(scenario.instruction_set.scenario_name, result.baseline, result.truth);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::undefined_correlation) throw;
    result.baseline_note = e.what();
  }
  std::vector<double> strengths;
  for (std::size_t i = 0; i < scenario.instruction_set.instructions.size(); ++i) {
    strengths.push_back(world.strength(i));
  }
  for (const auto& p : result.spa.predictions) {
    std::vector<double> scores;
    for (const auto& rec : p.instructions) scores.push_back(rec.score);
    result.spearman_to_planted.push_back(spearman(scores, strengths));
  }
  const double evaluation_seconds = seconds_since(start);

  CostInputs inputs;
  inputs.instructions = scenario.instruction_set.instructions.size();
  inputs.sample_size = params.sample_size;
  inputs.benchmark_size = problems.size();
  inputs.runs = params.runs;
  inputs.mean_decode_steps = result.truth.generations == 0 ? 0.0
                                                           : static_cast<double>(result.truth.decode_steps) /
                                                                 static_cast<double>(result.truth.generations);
  inputs.wall_times = {{"extraction", result.spa.extraction_seconds},
                       {"prediction", result.spa.prediction_seconds},
                       {"full_inference", result.full_inference_seconds},
                       {"sampled_inference", result.baseline_seconds},
                       {"evaluation", evaluation_seconds}};
  result.cost = cost_accounting(inputs);
  return result;
}

}  // namespace spa
