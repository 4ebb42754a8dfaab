#include "spa/prediction.hpp"

#include <algorithm>
#include <numeric>

#include "spa/error.hpp"
#include "spa/kernels.hpp"
#include "spa/rng.hpp"

namespace spa {

std::string merge_prompt(std::string_view problem_text, std::string_view instruction, MergeOrder order) {
  if (instruction.empty()) return std::string(problem_text);
  std::string out;
  if (order == MergeOrder::problem_first) {
    out.append(problem_text).append("\n").append(instruction);
  } else {
    out.append(instruction).append("\n").append(problem_text);
  }
  return out;
}

std::vector<std::size_t> sample_problem_indices(std::size_t corpus_size, std::size_t sample_size,
                                                std::uint64_t seed) {
  require(sample_size >= 1, ErrorKind::contract_violation, "sample size must be at least 1");
  require(corpus_size >= sample_size, ErrorKind::corpus_too_small,
          "cannot sample " + std::to_string(sample_size) + " problems from a corpus of " +
              std::to_string(corpus_size));
  std::vector<std::size_t> order(corpus_size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(combine_seed(seed, std::string_view("problem-sample")));
  for (std::size_t i = 0; i < sample_size; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(corpus_size - i));
    std::swap(order[i], order[j]);
  }
  order.resize(sample_size);
  return order;
}

SamplePromptSet assemble_sample_prompts(std::size_t instruction_index, std::string_view instruction,
                                        const ProblemCorpus& problems, std::size_t sample_size, std::uint64_t seed,
                                        MergeOrder order) {
  SamplePromptSet set;
  set.instruction_index = instruction_index;
  for (auto i : sample_problem_indices(problems.size(), sample_size, seed)) {
    set.prompts.push_back(merge_prompt(problems[i].text, instruction, order));
    set.problem_ids.push_back(problems[i].id);
  }
  return set;
}

double normalized_activation_frequency(const FeatureActivationMatrix& acts, std::uint32_t feature) {
  require(acts.n_tokens() > 0, ErrorKind::contract_violation, "frequency of an empty activation matrix");
  require(feature < acts.d_sae(), ErrorKind::contract_violation, "feature index out of range");
  std::size_t active = 0;
  for (std::size_t t = 0; t < acts.n_tokens(); ++t) {
    if (acts.value(t, feature) > 0.0f) ++active;
  }
  return static_cast<double>(active) / static_cast<double>(acts.n_tokens());
}

std::map<std::uint32_t, double> feature_frequency_sums(const TargetFeatureSet& tf,
                                                       std::span<const FeatureActivationMatrix> encoded_prompts) {
  auto features = tf.indices();
  std::sort(features.begin(), features.end());
  features.erase(std::unique(features.begin(), features.end()), features.end());
  for (const auto& m : encoded_prompts) {
    for (auto f : features) {
      require(f < m.d_sae(), ErrorKind::contract_violation, "target feature exceeds d_sae");
    }
  }
  std::vector<double> grid(features.size() * encoded_prompts.size());
  kernels::omp::frequency_grid(encoded_prompts, features, grid);

  std::map<std::uint32_t, double> sums;
  for (std::size_t i = 0; i < features.size(); ++i) {
    double inner = 0.0;
    for (std::size_t p = 0; p < encoded_prompts.size(); ++p) inner += grid[i * encoded_prompts.size() + p];
    sums[features[i]] = inner;
  }
  return sums;
}

double predict_instruction_score(const TargetFeatureSet& tf, std::span<const FeatureActivationMatrix> encoded_prompts) {
  double score = 0.0;
  for (const auto& [feature, sum] : feature_frequency_sums(tf, encoded_prompts)) score += sum;
  return score;
}

std::vector<std::size_t> rank_instructions(const std::map<std::size_t, double>& scores) {
  std::vector<std::pair<std::size_t, double>> items(scores.begin(), scores.end());
  std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::size_t> ranking;
  for (const auto& [index, score] : items) ranking.push_back(index);
  return ranking;
}

std::map<std::size_t, double> PredictionReport::scores() const {
  std::map<std::size_t, double> out;
  for (const auto& r : instructions) out[r.index] = r.score;
  return out;
}

PredictionReport predict(const InstructionSet& scenario, const TargetFeatureSet& tf, const ProblemCorpus& problems,
                         const SaeParameters& sae, ActivationProvider& provider, const PredictOptions& options) {
  require(!scenario.instructions.empty(), ErrorKind::empty_input, "scenario has no instructions");
  PredictionReport report;
  report.scenario_name = scenario.scenario_name;
  report.seed = options.seed;
  report.sample_size = options.sample_size;
  report.target_features = tf;

  // Only the target features enter the score, so only they are encoded.
  auto features = tf.indices();
  std::sort(features.begin(), features.end());
  features.erase(std::unique(features.begin(), features.end()), features.end());
  for (auto f : features) require(f < sae.d_sae, ErrorKind::contract_violation, "target feature exceeds d_sae");

  for (std::size_t i = 0; i < scenario.instructions.size(); ++i) {
    const auto set = assemble_sample_prompts(i, scenario.instructions[i], problems, options.sample_size, options.seed,
                                             options.order);
    if (i == 0) report.problem_ids = set.problem_ids;
    std::vector<FeatureActivationMatrix> encoded;
    encoded.reserve(set.prompts.size());
    for (const auto& prompt : set.prompts) {
      auto dump = provider.activations(prompt, {i, std::nullopt});
      if (!options.count_special_tokens) dump = without_special_tokens(dump);
      encoded.push_back(encode_sequence(dump, sae, features));
      ++report.forward_passes;
    }
    InstructionScore record;
    record.index = i;
    record.text = scenario.instructions[i];
    record.per_feature = feature_frequency_sums(tf, encoded);
    for (const auto& [feature, sum] : record.per_feature) record.score += sum;
    report.instructions.push_back(std::move(record));
  }
  report.ranking = rank_instructions(report.scores());
  return report;
}

}  // namespace spa
