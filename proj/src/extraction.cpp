#include "spa/extraction.hpp"

#include <algorithm>

#include "spa/error.hpp"
#include "spa/kernels.hpp"

namespace spa {
namespace {

constexpr std::string_view kObjectiveSlot = "<<OBJECTIVE>>";
constexpr std::string_view kCodeSlot = "<<EXAMPLE_CODE>>";

std::size_t find_once(std::string_view haystack, std::string_view needle, const char* what) {
  const auto at = haystack.find(needle);
  require(at != std::string_view::npos && haystack.find(needle, at + 1) == std::string_view::npos,
          ErrorKind::contract_violation, std::string("template must contain ") + what + " exactly once");
  return at;
}

// Fills the code slot of a template that no longer contains the objective slot.
std::pair<std::string, CharRange> fill_code(std::string_view text, std::string_view code) {
  const auto at = find_once(text, kCodeSlot, "<<EXAMPLE_CODE>>");
  std::string out(text.substr(0, at));
  const CharRange range{out.size(), out.size() + code.size()};
  out += code;
  out += text.substr(at + kCodeSlot.size());
  return {out, range};
}

std::string replace_all(std::string text, std::string_view from, std::string_view to) {
  for (auto at = text.find(from); at != std::string::npos; at = text.find(from, at + to.size())) {
    text.replace(at, from.size(), to);
  }
  return text;
}

}  // namespace

PromptPair build_prompt_pair(std::string_view objective, std::string_view example_code, const PromptTemplate& tmpl) {
  require(!objective.empty(), ErrorKind::contract_violation, "objective must be non-empty");
  require(!example_code.empty(), ErrorKind::contract_violation, "example code must be non-empty");
  find_once(tmpl.objective_phrase, kObjectiveSlot, "<<OBJECTIVE>> in the objective phrase");
  const auto phrase_at = find_once(tmpl.positive, tmpl.objective_phrase, "the objective phrase");
  find_once(tmpl.positive, kObjectiveSlot, "<<OBJECTIVE>>");
  require(tmpl.objective_phrase.find(kCodeSlot) == std::string::npos, ErrorKind::contract_violation,
          "objective phrase must not contain the code slot");

  std::string negative_template = tmpl.positive;
  negative_template.erase(phrase_at, tmpl.objective_phrase.size());
  const std::string positive_template = replace_all(tmpl.positive, kObjectiveSlot, objective);

  PromptPair pair;
  pair.objective = objective;
  pair.example_code = example_code;
  std::tie(pair.positive_text, pair.positive_code) = fill_code(positive_template, example_code);
  std::tie(pair.negative_text, pair.negative_code) = fill_code(negative_template, example_code);
  require(pair.negative_text.find(objective) == std::string::npos, ErrorKind::contract_violation,
          "negative prompt would still mention the objective '" + std::string(objective) + "'");
  return pair;
}

std::vector<FeatureScore> activation_difference(const FeatureActivationMatrix& pos,
                                                const FeatureActivationMatrix& neg, TokenRange pos_span,
                                                TokenRange neg_span) {
  require(pos.d_sae() == neg.d_sae(), ErrorKind::dimension_mismatch,
          "positive and negative activations have different d_sae");
  std::vector<double> pos_sums(pos.d_sae());
  std::vector<double> neg_sums(neg.d_sae());
  kernels::omp::span_feature_sums(pos, pos_span, pos_sums);
  kernels::omp::span_feature_sums(neg, neg_span, neg_sums);
  std::vector<FeatureScore> scores;
  for (std::size_t f = 0; f < pos_sums.size(); ++f) {
    const double d = pos_sums[f] - neg_sums[f];
    if (d != 0.0) scores.push_back({static_cast<std::uint32_t>(f), d});
  }
  return scores;
}

std::vector<std::uint32_t> TargetFeatureSet::indices() const {
  std::vector<std::uint32_t> out;
  out.reserve(features.size());
  for (const auto& s : features) out.push_back(s.feature);
  return out;
}

TargetFeatureSet select_target_features(std::vector<FeatureScore> scores, std::size_t k) {
  require(k >= 1, ErrorKind::contract_violation, "k must be at least 1");
  std::sort(scores.begin(), scores.end(), [](const FeatureScore& a, const FeatureScore& b) {
    return a.d != b.d ? a.d > b.d : a.feature < b.feature;
  });
  TargetFeatureSet tf;
  tf.requested_k = k;
  tf.short_of_k = scores.size() < k;
  scores.resize(std::min(k, scores.size()));
  tf.features = std::move(scores);
  return tf;
}

TargetFeatureSet extract_target_features(std::string_view objective, std::string_view example_code,
                                         const SaeParameters& sae, ActivationProvider& provider, std::size_t k,
                                         const PromptTemplate& tmpl) {
  const auto pair = build_prompt_pair(objective, example_code, tmpl);
  const auto pos_dump = provider.activations(pair.positive_text, {std::nullopt, pair.positive_code});
  const auto neg_dump = provider.activations(pair.negative_text, {std::nullopt, pair.negative_code});
  const std::string span_name(kExampleSpanName);
  require(pos_dump.spans.contains(span_name) && neg_dump.spans.contains(span_name), ErrorKind::contract_violation,
          "extraction dumps must carry an 'example_code' span");
  const auto pos = encode_sequence(pos_dump, sae);
  const auto neg = encode_sequence(neg_dump, sae);
  return select_target_features(
      activation_difference(pos, neg, pos_dump.spans.at(span_name), neg_dump.spans.at(span_name)), k);
}

}  // namespace spa
