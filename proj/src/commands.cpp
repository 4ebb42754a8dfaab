#include "spa/commands.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "spa/corpus.hpp"
#include "spa/error.hpp"
#include "spa/evaluation.hpp"
#include "spa/experiment.hpp"
#include "spa/extraction.hpp"
#include "spa/prediction.hpp"
#include "spa/report_io.hpp"
#include "spa/rng.hpp"
#include "spa/simulator.hpp"
#include "spa/spad_format.hpp"
#include "spa/syntax.hpp"

namespace spa {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Where a failure happened, for the error report.
struct Stage {
  std::string command;
  std::string module = "cli";
  std::string phase = "setup";

  void at(std::string m, std::string p) {
    module = std::move(m);
    phase = std::move(p);
  }
};

const std::set<std::string> kPathKeys = {"scenario", "sae", "dumps", "features", "problems", "in",  "predictions",
                                         "truth",    "world", "out",  "out_dir",  "outputs",  "baseline"};
const std::set<std::string> kNumericKeys = {"k", "sample_size", "attempts", "runs", "seed", "benchmark_size"};

json resolve_paths(json cfg, const fs::path& base) {
  for (auto it = cfg.begin(); it != cfg.end(); ++it) {
    if (kPathKeys.count(it.key()) == 0 || !it.value().is_string()) continue;
    fs::path p(it.value().get<std::string>());
    if (p.is_relative()) it.value() = (base / p).lexically_normal().string();
  }
  return cfg;
}

json load_config_file(const fs::path& path) {
  json cfg;
  try {
    cfg = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    fail(ErrorKind::malformed_input, "config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  require(cfg.is_object(), ErrorKind::malformed_input, "config '" + path.string() + "' must be a JSON object");
  return resolve_paths(std::move(cfg), path.parent_path());
}

// Explicit settings only; defaults are applied by the accessors.
class Settings {
 public:
  Settings() : values_(json::object()) {}
  explicit Settings(json values) : values_(std::move(values)) {}

  const json& values() const { return values_; }
  bool has(const std::string& key) const { return values_.contains(key) && !values_.at(key).is_null(); }

  fs::path path(const std::string& key) const {
    require(has(key), ErrorKind::invalid_value, "missing setting '" + key + "'");
    return fs::path(values_.at(key).get<std::string>());
  }
  std::string str(const std::string& key, std::string fallback) const {
    return has(key) ? values_.at(key).get<std::string>() : fallback;
  }
  std::size_t size(const std::string& key, std::size_t fallback) const {
    return has(key) ? values_.at(key).get<std::size_t>() : fallback;
  }

  Settings with(const std::string& key, json value) const {
    Settings s = *this;
    s.values_[key] = std::move(value);
    return s;
  }
  Settings overlay(const json& other) const {
    Settings s = *this;
    for (auto it = other.begin(); it != other.end(); ++it) s.values_[it.key()] = it.value();
    return s;
  }

  RunParameters params() const {
    RunParameters p;
    p.k = size("k", p.k);
    p.sample_size = size("sample_size", p.sample_size);
    p.attempts = size("attempts", p.attempts);
    p.runs = size("runs", p.runs);
    p.seed = has("seed") ? values_.at("seed").get<std::uint64_t>() : p.seed;
    const auto order = str("order", "problem_first");
    if (order == "problem_first") {
      p.order = MergeOrder::problem_first;
    } else if (order == "instruction_first") {
      p.order = MergeOrder::instruction_first;
    } else {
      fail(ErrorKind::invalid_value, "order must be problem_first or instruction_first, got '" + order + "'");
    }
    if (has("count_special_tokens")) p.count_special_tokens = values_.at("count_special_tokens").get<bool>();
    if (has("template")) {
      const auto& t = values_.at("template");
      p.prompt_template.positive = t.value("positive", p.prompt_template.positive);
      p.prompt_template.objective_phrase = t.value("objective_phrase", p.prompt_template.objective_phrase);
    }
    require(p.attempts >= 1, ErrorKind::invalid_value, "attempts must be at least 1");
    require(p.runs >= 1, ErrorKind::invalid_value, "runs must be at least 1");
    return p;
  }

 private:
  json values_;
};

std::string digest(std::string_view bytes) { return hex64(fnv1a64(bytes)); }

Json scenario_to_json(const Scenario& s) {
  Json j;
  j["scenario_name"] = s.instruction_set.scenario_name;
  j["objective"] = s.objective;
  j["example_code"] = s.example_code;
  j["instructions"] = s.instruction_set.instructions;
  return j;
}

json params_json(const RunParameters& p) {
  return {{"k", p.k},
          {"sample_size", p.sample_size},
          {"attempts", p.attempts},
          {"runs", p.runs},
          {"seed", p.seed},
          {"order", p.order == MergeOrder::problem_first ? "problem_first" : "instruction_first"},
          {"count_special_tokens", p.count_special_tokens},
          {"template", {{"positive", p.prompt_template.positive},
                        {"objective_phrase", p.prompt_template.objective_phrase}}}};
}

// Hash of the command, its parameters and the content of its inputs, so
// that the same inputs under different paths give the same fingerprint.
std::string command_fingerprint(std::string_view command, const RunParameters& p, const json& inputs) {
  return fingerprint(json{{"command", command}, {"params", params_json(p)}, {"inputs", inputs}});
}

std::string scenario_digest(const Scenario& s) { return fingerprint(json(scenario_to_json(s))); }
std::string problems_digest(const ProblemCorpus& c) { return digest(problems_to_jsonl(c)); }
std::string file_digest(const fs::path& p) { return digest(read_text_file(p)); }

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

void write_text(const fs::path& path, std::string_view text) {
  ensure_parent(path);
  write_file_atomic(path, text);
}

std::string json_text(const Json& j) { return j.dump(2) + "\n"; }

// Writes to --out when set, to stdout otherwise.
void emit(const Settings& s, std::string_view content, std::ostream& out) {
  if (s.has("out")) {
    write_text(s.path("out"), content);
  } else {
    out << content;
  }
}

std::string format_of(const Settings& s) {
  const auto f = s.str("format", "json");
  require(f == "json" || f == "csv", ErrorKind::invalid_value, "format must be json or csv, got '" + f + "'");
  return f;
}

ProblemCorpus load_problem_source(const Settings& s) {
  require(s.has("problems"), ErrorKind::invalid_value, "missing setting 'problems'");
  const auto& v = s.values().at("problems");
  if (v.is_object()) {
    require(v.contains("synthetic"), ErrorKind::invalid_value, "problems object needs a 'synthetic' count");
    return synth_problems(v.at("synthetic").get<std::size_t>(), v.value("seed", std::uint64_t{0}));
  }
  return load_problems(v.get<std::string>());
}

Scenario load_scenario_setting(const Settings& s, Stage& stage) {
  stage.at("cli", "load_scenario");
  return load_scenario(s.path("scenario"));
}

SaeParameters load_sae_setting(const Settings& s, Stage& stage) {
  stage.at("activation-model", "load_sae");
  return load_sae(s.path("sae"));
}

void add_short_warning(Json& j, const TargetFeatureSet& tf) {
  if (!tf.short_of_k) return;
  j["warnings"] = Json::array({"target feature set is short: " + std::to_string(tf.features.size()) +
                               " features for k = " + std::to_string(tf.requested_k)});
}

// ---- extract -------------------------------------------------------------

std::string cmd_extract(const Settings& s, Stage& stage) {
  const auto params = s.params();
  const auto scenario = load_scenario_setting(s, stage);
  const auto sae_path = s.path("sae");
  const auto sae = load_sae_setting(s, stage);
  stage.at("feature-extraction", "extract");
  DumpDirectoryProvider provider(s.path("dumps"));
  const auto tf = extract_target_features(scenario.objective, scenario.example_code, sae, provider, params.k,
                                          params.prompt_template);
  stage.at("cli", "write");
  if (format_of(s) == "csv") {
    std::string csv = "feature,d\n";
    for (const auto& f : tf.features) csv += std::to_string(f.feature) + "," + Json(f.d).dump() + "\n";
    return csv;
  }
  auto j = to_json(tf, scenario.objective);
  add_short_warning(j, tf);
  j["config_fingerprint"] =
      command_fingerprint("extract", params, {{"scenario", scenario_digest(scenario)}, {"sae", file_digest(sae_path)}});
  return json_text(j);
}

// ---- predict -------------------------------------------------------------

TargetFeatureSet apply_k(TargetFeatureSet tf, std::size_t k) {
  if (k < tf.features.size()) tf.features.resize(k);
  tf.requested_k = k;
  tf.short_of_k = tf.features.size() < k;
  return tf;
}

struct PredictResult {
  std::vector<PredictionReport> reports;
  std::string content;
};

PredictResult cmd_predict(const Settings& s, Stage& stage) {
  const auto params = s.params();
  const auto scenario = load_scenario_setting(s, stage);
  const auto sae_path = s.path("sae");
  const auto sae = load_sae_setting(s, stage);
  stage.at("cli", "load_problems");
  const auto problems = load_problem_source(s);
  stage.at("feature-extraction", "load_features");
  const auto features_text = read_text_file(s.path("features"));
  auto tf = target_features_from_json(json::parse(features_text));
  if (s.has("k")) tf = apply_k(std::move(tf), params.k);
  stage.at("prevalence-prediction", "predict");
  DumpDirectoryProvider provider(s.path("dumps"));
  PredictResult result;
  result.reports = predict_attempts(scenario, tf, problems, sae, provider, params);
  stage.at("cli", "write");
  if (format_of(s) == "csv") {
    result.content = predictions_to_csv(result.reports);
  } else {
    auto j = predictions_to_json(result.reports);
    add_short_warning(j, tf);
    j["config_fingerprint"] = command_fingerprint("predict", params,
                                                  {{"scenario", scenario_digest(scenario)},
                                                   {"sae", file_digest(sae_path)},
                                                   {"problems", problems_digest(problems)},
                                                   {"features", fingerprint(json(to_json(tf, scenario.objective)))}});
    result.content = json_text(j);
  }
  return result;
}

// ---- count ---------------------------------------------------------------

struct OutputRow {
  std::string id;
  std::string text;
};

std::vector<OutputRow> load_outputs(const fs::path& path) {
  const auto text = read_text_file(path);
  std::vector<OutputRow> rows;
  std::set<std::string> ids;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = path.string() + " line " + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      fail(ErrorKind::malformed_input, where + ": not valid JSON");
    }
    require(j.is_object() && j.contains("id") && j.contains("output_text") && j.at("output_text").is_string(),
            ErrorKind::malformed_input, where + ": expected {id, output_text}");
    OutputRow row;
    row.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
    row.text = j.at("output_text").get<std::string>();
    require(ids.insert(row.id).second, ErrorKind::duplicate_id, where + ": duplicate id '" + row.id + "'");
    rows.push_back(std::move(row));
  }
  require(!rows.empty(), ErrorKind::empty_input, "'" + path.string() + "' has no outputs");
  return rows;
}

std::string cmd_count(const Settings& s, Stage& stage) {
  stage.at("cli", "parse_kind");
  const auto kind_name = s.str("kind", "");
  const auto kind = parse_structure_kind(kind_name);
  require(kind.has_value(), ErrorKind::invalid_value,
          "kind must be try_except, comment or print, got '" + kind_name + "'");
  stage.at("syntax-counter", "load_outputs");
  const auto rows = load_outputs(s.path("in"));
  std::vector<std::string> texts;
  texts.reserve(rows.size());
  for (const auto& r : rows) texts.push_back(r.text);
  stage.at("syntax-counter", "count");
  const auto tally = tally_corpus(texts, *kind);
  stage.at("cli", "write");
  if (format_of(s) == "json") {
    Json j;
    j["kind"] = to_string(*kind);
    j["total"] = tally.total;
    j["counts"] = Json::array();
    for (std::size_t i = 0; i < rows.size(); ++i) j["counts"].push_back({{"id", rows[i].id}, {"count", tally.per_output[i]}});
    return json_text(j);
  }
  std::string csv = "id,count\n";
  for (std::size_t i = 0; i < rows.size(); ++i) csv += csv_field(rows[i].id) + "," + std::to_string(tally.per_output[i]) + "\n";
  return csv;
}

// ---- eval ----------------------------------------------------------------

struct EvalResult {
  CorrelationReport correlation;
  std::optional<CostReport> cost;
  GroundTruthSeries truth;
  std::string content;
};

EvalResult cmd_eval(const Settings& s, Stage& stage) {
  const auto params = s.params();
  stage.at("evaluation-harness", "load_predictions");
  const auto predictions_text = read_text_file(s.path("predictions"));
  auto reports = predictions_from_json(json::parse(predictions_text));
  require(!reports.empty(), ErrorKind::empty_input, "predictions file has no attempts");
  if (s.has("attempts")) {
    require(reports.size() >= params.attempts, ErrorKind::index_mismatch,
            "predictions hold " + std::to_string(reports.size()) + " attempts, " + std::to_string(params.attempts) +
                " requested");
    reports.resize(params.attempts);
  }
  stage.at("evaluation-harness", "load_truth");
  const auto truth_path = s.path("truth");
  EvalResult result;
  result.truth = parse_truth_csv(read_text_file(truth_path), params.runs);
  stage.at("evaluation-harness", "correlate");
  result.correlation = evaluate(reports, result.truth);

  std::optional<std::size_t> benchmark_size;
  if (s.has("benchmark_size")) benchmark_size = s.size("benchmark_size", 0);
  if (s.has("problems")) {
    stage.at("cli", "load_problems");
    benchmark_size = load_problem_source(s).size();
  }
  if (benchmark_size) {
    stage.at("evaluation-harness", "cost");
    CostInputs inputs;
    inputs.instructions = reports.front().instructions.size();
    inputs.sample_size = reports.front().sample_size;
    inputs.benchmark_size = *benchmark_size;
    inputs.runs = params.runs;
    if (s.has("mean_decode_steps")) inputs.mean_decode_steps = s.values().at("mean_decode_steps").get<double>();
    result.cost = cost_accounting(inputs);
  }
  stage.at("cli", "write");
  Json j;
  j["correlation"] = to_json(result.correlation);
  j["cost"] = result.cost ? to_json(*result.cost) : Json(nullptr);
  json inputs = {{"predictions", digest(predictions_text)}, {"truth", file_digest(truth_path)}};
  if (benchmark_size) inputs["benchmark_size"] = *benchmark_size;
  j["config_fingerprint"] = command_fingerprint("eval", params, inputs);
  result.content = json_text(j);
  return result;
}

// ---- prompts -------------------------------------------------------------

Json planned_prompt_json(const PlannedPrompt& p) {
  Json j;
  j["id"] = p.id;
  j["text"] = p.text;
  j["role"] = p.role;
  if (p.instruction_index) j["instruction_index"] = *p.instruction_index;
  if (p.attempt) j["attempt"] = *p.attempt;
  if (p.example_code) j["example_code"] = {{"begin", p.example_code->begin}, {"end", p.example_code->end}};
  return j;
}

std::string prompts_jsonl(const std::vector<PlannedPrompt>& plan) {
  std::string text;
  for (const auto& p : plan) text += planned_prompt_json(p).dump() + "\n";
  return text;
}

std::string cmd_prompts(const Settings& s, Stage& stage) {
  const auto params = s.params();
  const auto scenario = load_scenario_setting(s, stage);
  stage.at("cli", "load_problems");
  const auto problems = load_problem_source(s);
  stage.at("prevalence-prediction", "plan_prompts");
  return prompts_jsonl(plan_prompts(scenario, problems, params));
}

// ---- simulate ------------------------------------------------------------

struct SimulateResult {
  fs::path dir;
  StructureKind kind = StructureKind::try_except;
  std::vector<double> strengths;
};

SimulateResult cmd_simulate(const Settings& s, Stage& stage) {
  const auto params = s.params();
  const auto dir = s.path("out_dir");
  stage.at("toy-lm-simulator", "build_world");
  const auto config = world_config_from_json(s.values());
  const auto world = build_world(config);
  const auto scenario = load_scenario_setting(s, stage);
  require(scenario.instruction_set.instructions.size() == config.instruction_strengths.size(),
          ErrorKind::infeasible_config,
          "scenario has " + std::to_string(scenario.instruction_set.instructions.size()) +
              " instructions but the world defines " + std::to_string(config.instruction_strengths.size()) +
              " strengths");
  stage.at("cli", "load_problems");
  const auto problems = load_problem_source(s);

  stage.at("toy-lm-simulator", "write_inputs");
  fs::create_directories(dir / "dumps");
  save_sae(dir / "sae.spaw", world.sae);
  write_text(dir / "problems.jsonl", problems_to_jsonl(problems));
  write_text(dir / "scenario.json", json_text(scenario_to_json(scenario)));
  Json world_json = to_json(config);
  world_json["planted"] = Json::object();
  for (const auto& o : world.objectives) world_json["planted"][o.name] = o.features;
  write_text(dir / "world.json", json_text(world_json));

  stage.at("toy-lm-simulator", "synthesize_dumps");
  const auto plan = plan_prompts(scenario, problems, params);
  for (const auto& p : plan) {
    save_dump(dir / "dumps" / (p.id + ".spad"), synth_prompt_dump(world, p.text, p.instruction_index, p.example_code));
  }
  write_text(dir / "prompts.jsonl", prompts_jsonl(plan));

  stage.at("toy-lm-simulator", "generate");
  const auto kind = world.active().kind;
  SimulatedGenerator generator(world);
  GroundTruthSeries truth;
  truth.runs = params.runs;
  truth.source = TruthSource::simulator;
  std::string outputs;
  const auto& instructions = scenario.instruction_set.instructions;
  for (std::size_t i = 0; i < instructions.size(); ++i) {
    std::vector<std::string> texts;
    for (std::size_t r = 0; r < params.runs; ++r) {
      for (const auto& problem : problems) {
        auto g = generator.generate(merge_prompt(problem.text, instructions[i], params.order), i, r);
        Json row;
        row["id"] = "i" + std::to_string(i) + "/p" + problem.id + "/r" + std::to_string(r);
        row["output_text"] = g.text;
        row["decode_steps"] = g.decode_steps;
        outputs += row.dump() + "\n";
        truth.decode_steps += g.decode_steps;
        ++truth.generations;
        texts.push_back(std::move(g.text));
      }
    }
    truth.tallies[i] = static_cast<double>(tally_corpus(texts, kind).total) / static_cast<double>(params.runs);
  }
  write_text(dir / "outputs.jsonl", outputs);
  write_text(dir / "truth.csv", truth_to_csv(truth));

  stage.at("toy-lm-simulator", "sampled_baseline");
  std::string baseline = "attempt,instruction_index,tally\n";
  const auto series = simulated_baseline(world, scenario, problems, params);
  for (std::size_t a = 0; a < series.size(); ++a) {
    for (const auto& [i, v] : series[a].tallies) {
      baseline += std::to_string(a) + "," + std::to_string(i) + "," + Json(v).dump() + "\n";
    }
  }
  write_text(dir / "baseline.csv", baseline);

  Json manifest;
  manifest["kind"] = to_string(kind);
  manifest["model_id"] = config.model_id;
  manifest["layer"] = config.layer;
  manifest["dumps"] = plan.size();
  manifest["generations"] = truth.generations;
  manifest["mean_decode_steps"] =
      truth.generations == 0 ? 0.0 : static_cast<double>(truth.decode_steps) / static_cast<double>(truth.generations);
  manifest["params"] = params_json(params);
  manifest["config_fingerprint"] = command_fingerprint("simulate", params,
                                                       {{"world", fingerprint(json(to_json(config)))},
                                                        {"scenario", scenario_digest(scenario)},
                                                        {"problems", problems_digest(problems)}});
  write_text(dir / "manifest.json", json_text(manifest));
  return {dir, kind, config.instruction_strengths};
}

// ---- pipeline ------------------------------------------------------------

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::vector<GroundTruthSeries> load_baseline_csv(const fs::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  std::getline(in, line);
  std::vector<GroundTruthSeries> series;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    require(c1 != std::string::npos && c2 != std::string::npos, ErrorKind::malformed_input,
            "baseline line '" + line + "'");
    const auto a = std::stoul(line.substr(0, c1));
    if (series.size() <= a) series.resize(a + 1);
    series[a].source = TruthSource::sampled_inference;
    series[a].tallies[std::stoul(line.substr(c1 + 1, c2 - c1 - 1))] = std::stod(line.substr(c2 + 1));
  }
  return series;
}

int cmd_pipeline(const Settings& s, Stage& stage, std::ostream& out) {
  const auto params = s.params();
  const fs::path dir = s.has("out_dir") ? s.path("out_dir") : fs::path("spa-out");
  const auto mode = s.str("mode", "simulator");
  require(mode == "simulator" || mode == "real", ErrorKind::invalid_value,
          "mode must be simulator or real, got '" + mode + "'");
  fs::create_directories(dir);
  std::map<std::string, double> timing;
  Settings run = s;
  std::optional<SimulateResult> sim;
  std::optional<std::string> kind_name;
  if (s.has("kind")) kind_name = s.str("kind", "");
  json fingerprint_inputs = {{"mode", mode}};

  if (mode == "simulator") {
    stage.at("toy-lm-simulator", "load_world");
    const auto world_path = s.path("world");
    const auto world_cfg = load_config_file(world_path);
    json run_keys = json::object();
    for (const auto& key : {"k", "sample_size", "attempts", "runs", "seed", "order", "count_special_tokens", "template"}) {
      if (s.has(key)) run_keys[key] = s.values().at(key);
    }
    const auto t = Clock::now();
    const auto sim_settings = Settings(world_cfg).overlay(run_keys).with("out_dir", (dir / "sim").string());
    sim = cmd_simulate(sim_settings, stage);
    timing["simulate"] = seconds_since(t);
    fingerprint_inputs["world"] = fingerprint(world_cfg);
    run = run.with("scenario", (sim->dir / "scenario.json").string())
              .with("sae", (sim->dir / "sae.spaw").string())
              .with("dumps", (sim->dir / "dumps").string())
              .with("problems", (sim->dir / "problems.jsonl").string())
              .with("outputs", (sim->dir / "outputs.jsonl").string());
    if (!kind_name) kind_name = std::string(to_string(sim->kind));
  }

  auto t = Clock::now();
  const auto tf_path = dir / "target_features.json";
  const auto tf_text = cmd_extract(run.with("format", "json").with("out", tf_path.string()), stage);
  write_text(tf_path, tf_text);
  timing["extract"] = seconds_since(t);

  t = Clock::now();
  const auto pred_path = dir / "predictions.json";
  const auto predicted =
      cmd_predict(run.with("format", "json").with("features", tf_path.string()).with("out", pred_path.string()), stage);
  write_text(pred_path, predicted.content);
  timing["predict"] = seconds_since(t);

  stage.at("cli", "report");
  Json report;
  report["mode"] = mode;
  report["scenario_name"] = predicted.reports.front().scenario_name;
  report["target_features"] = json::parse(tf_text);
  report["attempts"] = Json::array();
  for (const auto& p : predicted.reports) {
    Json a;
    a["seed"] = p.seed;
    a["ranking"] = Json::array();
    for (std::size_t r = 0; r < p.ranking.size(); ++r) {
      const auto& rec = p.instructions.at(p.ranking[r]);
      a["ranking"].push_back({{"rank", r + 1}, {"index", rec.index}, {"text", rec.text}, {"P", rec.score}});
    }
    report["attempts"].push_back(std::move(a));
  }

  if (run.has("outputs")) {
    t = Clock::now();
    const auto counts_path = dir / "counts.csv";
    write_text(counts_path, cmd_count(run.with("format", "csv").with("kind", kind_name.value_or(""))
                                          .with("in", run.path("outputs").string()),
                                      stage));
    timing["count"] = seconds_since(t);

    t = Clock::now();
    auto eval_settings = run.with("predictions", pred_path.string()).with("truth", counts_path.string());
    if (sim) {
      eval_settings = eval_settings.with(
          "mean_decode_steps", json::parse(read_text_file(sim->dir / "manifest.json")).at("mean_decode_steps"));
    }
    const auto evaluated = cmd_eval(eval_settings, stage);
    write_text(dir / "report.json", evaluated.content);
    timing["eval"] = seconds_since(t);
    report["correlation"] = to_json(evaluated.correlation);
    report["cost"] = evaluated.cost ? to_json(*evaluated.cost) : Json(nullptr);

    if (sim) {
      stage.at("evaluation-harness", "simulator_checks");
      Json checks;
      checks["spearman_to_planted"] = Json::array();
      for (const auto& p : predicted.reports) {
        std::vector<double> scores;
        for (const auto& rec : p.instructions) scores.push_back(rec.score);
        checks["spearman_to_planted"].push_back(spearman(scores, sim->strengths));
      }
      try {
        const auto baseline = load_baseline_csv(sim->dir / "baseline.csv");
        checks["sampled_inference_baseline"] =
            to_json(evaluate_series(report["scenario_name"].get<std::string>(), baseline, evaluated.truth));
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::undefined_correlation) throw;
        checks["sampled_inference_baseline"] = {{"undefined", e.what()}};
      }
      report["simulator"] = checks;
    }
  }
  report["config_fingerprint"] = command_fingerprint("pipeline", params, fingerprint_inputs);
  Json timing_json = Json::object();
  for (const auto& [k, v] : timing) timing_json[k] = v;
  report["timing"] = timing_json;
  write_text(dir / "pipeline.json", json_text(report));
  out << json_text(report);
  return 0;
}

// ---- dispatch ------------------------------------------------------------

std::string key_of(const CLI::Option* opt) {
  auto name = opt->get_lnames().front();
  std::replace(name.begin(), name.end(), '-', '_');
  return name;
}

json parse_value(const std::string& key, const std::string& raw) {
  if (kNumericKeys.count(key) != 0) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(raw, &used);
    } catch (const std::logic_error&) {
      used = 0;
    }
    require(used == raw.size() && !raw.empty() && raw[0] != '-', ErrorKind::invalid_value,
            "--" + key + " expects a non-negative integer, got '" + raw + "'");
    return static_cast<std::uint64_t>(v);
  }
  return raw;
}

void write_error(std::ostream& err, const Stage& stage, std::string_view kind, std::string_view message) {
  Json j;
  j["error"] = {{"command", stage.command},
                {"module", stage.module},
                {"phase", stage.phase},
                {"kind", kind},
                {"message", message}};
  err << j.dump() << "\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sparse-autoencoder prompt analysis: extract target features, predict instruction rankings, "
               "count structures, evaluate"};
  app.name("spa");
  app.require_subcommand(1);
  std::map<std::string, std::string> raw;

  auto add = [&](CLI::App* sub, const std::string& flag, const std::string& help) {
    auto key = flag.substr(2);
    std::replace(key.begin(), key.end(), '-', '_');
    sub->add_option(flag, raw[key], help);
  };
  auto common = [&](CLI::App* sub) {
    add(sub, "--config", "JSON config; its relative paths resolve against the config's directory");
    add(sub, "--seed", "sampling seed");
    add(sub, "--k", "number of target features");
    add(sub, "--sample-size", "problems sampled per instruction");
    add(sub, "--attempts", "independent sampling attempts");
    add(sub, "--runs", "inference runs averaged into the ground truth");
    add(sub, "--out", "output file (stdout when omitted)");
    add(sub, "--format", "json or csv");
  };

  auto* extract = app.add_subcommand("extract", "select target features from a positive/negative prompt pair");
  common(extract);
  add(extract, "--scenario", "scenario JSON");
  add(extract, "--sae", "SAE weights (SPAW)");
  add(extract, "--dumps", "directory of activation dumps (SPAD)");

  auto* predict = app.add_subcommand("predict", "score and rank instructions");
  common(predict);
  add(predict, "--scenario", "scenario JSON");
  add(predict, "--sae", "SAE weights (SPAW)");
  add(predict, "--dumps", "directory of activation dumps (SPAD)");
  add(predict, "--features", "target features JSON from extract");
  add(predict, "--problems", "problems JSONL");

  auto* count = app.add_subcommand("count", "count a syntactic structure in generated outputs");
  common(count);
  add(count, "--kind", "try_except, comment or print");
  add(count, "--in", "outputs JSONL with {id, output_text}");

  auto* eval = app.add_subcommand("eval", "correlate predicted scores with ground-truth tallies");
  common(eval);
  add(eval, "--predictions", "predictions JSON");
  add(eval, "--truth", "truth CSV (instruction_index,tally or id,count)");
  add(eval, "--problems", "problems JSONL, for cost accounting");
  add(eval, "--benchmark-size", "benchmark size, for cost accounting");

  auto* simulate = app.add_subcommand("simulate", "write a planted toy world as dumps, weights and truth");
  common(simulate);
  add(simulate, "--out-dir", "output directory");
  add(simulate, "--scenario", "scenario JSON");
  add(simulate, "--problems", "problems JSONL");

  auto* pipeline = app.add_subcommand("pipeline", "extract, predict, count and evaluate in one run");
  common(pipeline);
  add(pipeline, "--out-dir", "output directory");

  auto* prompts = app.add_subcommand("prompts", "list the prompts whose activations the analysis needs");
  common(prompts);
  add(prompts, "--scenario", "scenario JSON");
  add(prompts, "--problems", "problems JSONL");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  Stage stage;
  stage.command = sub->get_name();
  try {
    json overrides = json::object();
    for (const auto* opt : sub->get_options()) {
      if (opt->count() == 0 || opt->get_lnames().empty()) continue;
      const auto key = key_of(opt);
      if (key == "help" || key == "config") continue;
      overrides[key] = parse_value(key, raw[key]);
    }
    Settings settings;
    if (!raw["config"].empty()) {
      stage.at("cli", "load_config");
      settings = Settings(load_config_file(raw["config"]));
    }
    settings = settings.overlay(overrides);

    const auto& name = stage.command;
    if (name == "extract") {
      emit(settings, cmd_extract(settings, stage), out);
    } else if (name == "predict") {
      emit(settings, cmd_predict(settings, stage).content, out);
    } else if (name == "count") {
      if (!settings.has("format")) settings = settings.with("format", "csv");
      emit(settings, cmd_count(settings, stage), out);
    } else if (name == "eval") {
      emit(settings, cmd_eval(settings, stage).content, out);
    } else if (name == "simulate") {
      const auto result = cmd_simulate(settings, stage);
      out << read_text_file(result.dir / "manifest.json");
    } else if (name == "pipeline") {
      return cmd_pipeline(settings, stage, out);
    } else if (name == "prompts") {
      emit(settings, cmd_prompts(settings, stage), out);
    }
    return 0;
  } catch (const Error& e) {
    write_error(err, stage, to_string(e.kind()), e.what());
  } catch (const json::exception& e) {
    write_error(err, stage, "malformed_input", e.what());
  } catch (const fs::filesystem_error& e) {
    write_error(err, stage, "io", e.what());
  } catch (const std::exception& e) {
    write_error(err, stage, "internal", e.what());
  }
  return 1;
}

}  // namespace spa
