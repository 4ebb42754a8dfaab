#include "spa/report_io.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "spa/error.hpp"
#include "spa/rng.hpp"

namespace spa {

namespace {

template <class T>
T get(const nlohmann::json& j, const char* key) {
  require(j.is_object() && j.contains(key), ErrorKind::malformed_input, std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorKind::malformed_input, std::string("field '") + key + "' has the wrong type");
  }
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Json to_json(const TargetFeatureSet& tf, std::string_view objective) {
  Json j;
  j["objective"] = objective;
  j["k"] = tf.requested_k;
  j["short"] = tf.short_of_k;
  j["features"] = Json::array();
  for (const auto& s : tf.features) j["features"].push_back({{"feature", s.feature}, {"d", s.d}});
  return j;
}

TargetFeatureSet target_features_from_json(const nlohmann::json& j) {
  TargetFeatureSet tf;
  tf.requested_k = get<std::size_t>(j, "k");
  const auto features = get<nlohmann::json>(j, "features");
  require(features.is_array(), ErrorKind::malformed_input, "features must be a list");
  for (const auto& f : features) tf.features.push_back({get<std::uint32_t>(f, "feature"), get<double>(f, "d")});
  tf.short_of_k = j.value("short", tf.features.size() < tf.requested_k);
  return tf;
}

Json to_json(const PredictionReport& r) {
  Json j;
  j["scenario_name"] = r.scenario_name;
  j["seed"] = r.seed;
  j["sample_size"] = r.sample_size;
  j["problem_ids"] = r.problem_ids;
  j["target_features"] = to_json(r.target_features, "");
  j["target_features"].erase("objective");
  j["forward_passes"] = r.forward_passes;
  std::vector<std::size_t> rank_of(r.instructions.size() + 1, 0);
  for (std::size_t pos = 0; pos < r.ranking.size(); ++pos) {
    if (r.ranking[pos] < rank_of.size()) rank_of[r.ranking[pos]] = pos + 1;
  }
  j["instructions"] = Json::array();
  for (const auto& rec : r.instructions) {
    Json row;
    row["index"] = rec.index;
    row["text"] = rec.text;
    row["P"] = rec.score;
    row["rank"] = rec.index < rank_of.size() ? rank_of[rec.index] : 0;
    row["per_feature_frequencies"] = Json::object();
    for (const auto& [f, v] : rec.per_feature) row["per_feature_frequencies"][std::to_string(f)] = v;
    j["instructions"].push_back(std::move(row));
  }
  j["ranking"] = r.ranking;
  j["warnings"] = Json::array();
  if (r.target_features.short_of_k) {
    j["warnings"].push_back("target feature set has " + std::to_string(r.target_features.features.size()) + " of " +
                            std::to_string(r.target_features.requested_k) + " requested features");
  }
  return j;
}

PredictionReport prediction_from_json(const nlohmann::json& j) {
  PredictionReport r;
  r.scenario_name = get<std::string>(j, "scenario_name");
  r.seed = get<std::uint64_t>(j, "seed");
  r.sample_size = get<std::size_t>(j, "sample_size");
  r.problem_ids = get<std::vector<std::string>>(j, "problem_ids");
  r.target_features = target_features_from_json(get<nlohmann::json>(j, "target_features"));
  r.forward_passes = j.value("forward_passes", std::size_t{0});
  for (const auto& row : get<nlohmann::json>(j, "instructions")) {
    InstructionScore rec;
    rec.index = get<std::size_t>(row, "index");
    rec.text = get<std::string>(row, "text");
    rec.score = get<double>(row, "P");
    if (row.contains("per_feature_frequencies")) {
      for (const auto& [key, v] : row["per_feature_frequencies"].items()) {
        rec.per_feature[static_cast<std::uint32_t>(std::stoul(key))] = v.get<double>();
      }
    }
    r.instructions.push_back(std::move(rec));
  }
  r.ranking = get<std::vector<std::size_t>>(j, "ranking");
  return r;
}

Json predictions_to_json(std::span<const PredictionReport> attempts) {
  if (attempts.size() == 1) return to_json(attempts.front());
  Json j;
  j["attempts"] = Json::array();
  for (const auto& a : attempts) j["attempts"].push_back(to_json(a));
  return j;
}

std::vector<PredictionReport> predictions_from_json(const nlohmann::json& j) {
  std::vector<PredictionReport> out;
  if (j.is_object() && j.contains("attempts")) {
    for (const auto& a : j["attempts"]) out.push_back(prediction_from_json(a));
  } else {
    out.push_back(prediction_from_json(j));
  }
  return out;
}

std::string csv_field(std::string_view text) {
  if (text.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(text);
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string predictions_to_csv(std::span<const PredictionReport> attempts) {
  const bool many = attempts.size() > 1;
  std::string out = many ? "attempt,index,text,P,rank\n" : "index,text,P,rank\n";
  for (std::size_t a = 0; a < attempts.size(); ++a) {
    const auto& r = attempts[a];
    for (std::size_t pos = 0; pos < r.ranking.size(); ++pos) {
      const auto index = r.ranking[pos];
      const auto it = std::find_if(r.instructions.begin(), r.instructions.end(),
                                   [&](const InstructionScore& s) { return s.index == index; });
      if (it == r.instructions.end()) continue;
      if (many) out += std::to_string(a) + ",";
      out += std::to_string(index) + "," + csv_field(it->text) + "," + format_double(it->score) + "," +
             std::to_string(pos + 1) + "\n";
    }
  }
  return out;
}

Json to_json(const CorrelationReport& r) {
  Json j;
  j["scenario_name"] = r.scenario_name;
  j["attempts"] = r.attempts;
  j["per_attempt_r"] = r.per_attempt_r;
  j["fisher_mean_r"] = r.fisher_mean_r;
  return j;
}

Json to_json(const CostReport& c) {
  Json j;
  j["spa_forward_passes"] = c.spa_forward_passes;
  j["baseline_forward_passes"] = c.baseline_forward_passes;
  j["baseline_generations"] = c.baseline_generations;
  j["baseline_generation_passes"] = c.baseline_generation_passes;
  j["full_inference_forward_passes"] = c.full_inference_forward_passes;
  j["full_inference_generation_passes"] = c.full_inference_generation_passes;
  j["operation_reduction"] = c.operation_reduction;
  j["wall_times"] = c.wall_times;
  return j;
}

Json to_json(const GroundTruthSeries& t) {
  Json j;
  j["source"] = to_string(t.source);
  j["runs"] = t.runs;
  j["tallies"] = Json::object();
  for (const auto& [i, v] : t.tallies) j["tallies"][std::to_string(i)] = v;
  j["generations"] = t.generations;
  j["failed_generations"] = t.failed_generations;
  j["partial"] = t.partial;
  return j;
}

std::string truth_to_csv(const GroundTruthSeries& truth) {
  std::string out = "instruction_index,tally\n";
  for (const auto& [i, v] : truth.tallies) out += std::to_string(i) + "," + format_double(v) + "\n";
  return out;
}

GroundTruthSeries parse_truth_csv(std::string_view csv, std::size_t runs) {
  require(runs >= 1, ErrorKind::contract_violation, "runs must be at least 1");
  std::istringstream in{std::string(csv)};
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::empty_input, "truth CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const bool per_output = line == "id,count";
  require(per_output || line == "instruction_index,tally", ErrorKind::malformed_input,
          "truth CSV header must be 'instruction_index,tally' or 'id,count'");
  GroundTruthSeries truth;
  truth.runs = per_output ? runs : 1;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    require(comma != std::string::npos, ErrorKind::malformed_input, "truth CSV line " + std::to_string(line_no));
    const auto key = line.substr(0, comma);
    const auto value = line.substr(comma + 1);
    try {
      if (per_output) {
        require(key.size() > 1 && key[0] == 'i' && key.find('/') != std::string::npos, ErrorKind::malformed_input,
                "id '" + key + "' does not start with i<instruction>/");
        const auto index = std::stoul(key.substr(1, key.find('/') - 1));
        truth.tallies[index] += std::stod(value);
      } else {
        truth.tallies[std::stoul(key)] = std::stod(value);
      }
    } catch (const std::logic_error&) {
      fail(ErrorKind::malformed_input, "truth CSV line " + std::to_string(line_no) + " is not numeric");
    }
  }
  require(!truth.tallies.empty(), ErrorKind::empty_input, "truth CSV has no rows");
  if (per_output) {
    for (auto& [i, v] : truth.tallies) v /= static_cast<double>(runs);
  }
  return truth;
}

WorldConfig world_config_from_json(const nlohmann::json& j) {
  WorldConfig c;
  c.seed = j.value("seed", std::uint64_t{0});
  c.d_model = j.value("d_model", c.d_model);
  c.d_sae = j.value("d_sae", c.d_sae);
  c.noise_rate = j.value("noise_rate", c.noise_rate);
  c.generic_rate = j.value("generic_rate", c.generic_rate);
  c.generation_slots = j.value("generation_slots", c.generation_slots);
  c.threshold = j.value("threshold", c.threshold);
  c.model_id = j.value("model_id", c.model_id);
  c.layer = j.value("layer", c.layer);
  c.instruction_strengths = get<std::vector<double>>(j, "instruction_strengths");
  for (const auto& o : get<nlohmann::json>(j, "objectives")) {
    ObjectiveSpec spec;
    spec.name = get<std::string>(o, "name");
    spec.phrase = get<std::string>(o, "phrase");
    const auto kind = parse_structure_kind(get<std::string>(o, "kind"));
    require(kind.has_value(), ErrorKind::malformed_input, "unknown structure kind for objective " + spec.name);
    spec.kind = *kind;
    spec.n_features = o.value("n_features", spec.n_features);
    spec.features = o.value("features", std::vector<std::uint32_t>{});
    c.objectives.push_back(std::move(spec));
  }
  c.active_objective = j.value("active_objective", c.objectives.empty() ? std::string() : c.objectives.front().name);
  return c;
}

Json to_json(const WorldConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["d_model"] = c.d_model;
  j["d_sae"] = c.d_sae;
  j["noise_rate"] = c.noise_rate;
  j["generic_rate"] = c.generic_rate;
  j["generation_slots"] = c.generation_slots;
  j["threshold"] = c.threshold;
  j["model_id"] = c.model_id;
  j["layer"] = c.layer;
  j["active_objective"] = c.active_objective;
  j["instruction_strengths"] = c.instruction_strengths;
  j["objectives"] = Json::array();
  for (const auto& o : c.objectives) {
    j["objectives"].push_back({{"name", o.name},
                               {"phrase", o.phrase},
                               {"kind", to_string(o.kind)},
                               {"n_features", o.n_features},
                               {"features", o.features}});
  }
  return j;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::string fingerprint(const nlohmann::json& normalized) { return hex64(fnv1a64(normalized.dump())); }

}  // namespace spa
