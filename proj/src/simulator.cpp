#include "spa/simulator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

#include "spa/error.hpp"
#include "spa/rng.hpp"

namespace spa {

const PlantedObjective& PlantedWorld::objective(std::string_view name) const {
  for (const auto& o : objectives) {
    if (o.name == name) return o;
  }
  fail(ErrorKind::unknown_index, "world has no objective '" + std::string(name) + "'");
}

const PlantedObjective& PlantedWorld::active() const { return objective(config.active_objective); }

double PlantedWorld::strength(std::size_t instruction_index) const {
  require(instruction_index < config.instruction_strengths.size(), ErrorKind::unknown_index,
          "world has no instruction " + std::to_string(instruction_index));
  return config.instruction_strengths[instruction_index];
}

namespace {

using Vec = std::vector<double>;

double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void normalize(Vec& v) {
  const double n = std::sqrt(dot(v, v));
  for (auto& x : v) x /= n;
}

Vec gaussian(Rng& rng, std::size_t n) {
  Vec v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

// Removes the components along `basis` (orthonormal) twice for stability.
void project_out(Vec& v, const std::vector<Vec>& basis) {
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& b : basis) {
      const double c = dot(v, b);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= c * b[i];
    }
  }
}

void validate_config(const WorldConfig& c) {
  require(c.d_model >= 8, ErrorKind::infeasible_config, "d_model must be at least 8");
  require(!c.objectives.empty(), ErrorKind::infeasible_config, "world needs at least one objective");
  std::size_t planted = 0;
  for (const auto& o : c.objectives) {
    require(!o.phrase.empty(), ErrorKind::infeasible_config, "objective '" + o.name + "' has an empty phrase");
    planted += o.features.empty() ? o.n_features : o.features.size();
  }
  require(planted >= 1, ErrorKind::infeasible_config, "world plants no features");
  require(c.d_sae >= planted, ErrorKind::infeasible_config,
          "d_sae " + std::to_string(c.d_sae) + " cannot hold " + std::to_string(planted) + " planted features");
  require(c.d_model > planted, ErrorKind::infeasible_config,
          "d_model must exceed the number of planted features to keep them orthogonal");
  require(c.noise_rate >= 0.0 && c.noise_rate < 1.0, ErrorKind::infeasible_config, "noise_rate must be in [0, 1)");
  require(c.generic_rate >= 0.0 && c.generic_rate <= 1.0, ErrorKind::infeasible_config,
          "generic_rate must be in [0, 1]");
  for (double s : c.instruction_strengths) {
    require(s >= 0.0 && s <= 1.0, ErrorKind::infeasible_config, "instruction strengths must lie in [0, 1]");
  }
  require(c.threshold > 0.0f && c.threshold < 1.0f, ErrorKind::infeasible_config, "threshold must be in (0, 1)");
}

constexpr double kMaxPlantedDot = 0.1;

}  // namespace

PlantedWorld build_world(const WorldConfig& config) {
  validate_config(config);
  PlantedWorld world;
  world.config = config;
  world.planted.assign(config.d_sae, false);

  Rng pick(combine_seed(config.seed, std::string_view("planted-features")));
  for (const auto& spec : config.objectives) {
    PlantedObjective o{spec.name, spec.phrase, spec.kind, spec.features};
    if (o.features.empty()) {
      while (o.features.size() < spec.n_features) {
        const auto f = static_cast<std::uint32_t>(pick.below(config.d_sae));
        if (!world.planted[f]) {
          world.planted[f] = true;
          o.features.push_back(f);
        }
      }
    } else {
      for (auto f : o.features) {
        require(f < config.d_sae, ErrorKind::infeasible_config, "planted feature index exceeds d_sae");
        require(!world.planted[f], ErrorKind::infeasible_config,
                "planted feature " + std::to_string(f) + " is shared between objectives");
        world.planted[f] = true;
      }
    }
    std::sort(o.features.begin(), o.features.end());
    world.objectives.push_back(std::move(o));
  }
  for (std::uint32_t f = 0; f < config.d_sae; ++f) {
    if (!world.planted[f]) world.unplanted.push_back(f);
  }
  if (!config.active_objective.empty()) world.objective(config.active_objective);

  std::vector<std::uint32_t> planted_ids;
  for (const auto& o : world.objectives) planted_ids.insert(planted_ids.end(), o.features.begin(), o.features.end());

  const std::size_t d = config.d_model;
  std::vector<float> w_enc(config.d_sae * d);
  for (std::uint64_t attempt = 0;; ++attempt) {
    require(attempt < 8, ErrorKind::infeasible_config, "could not generate near-orthogonal planted directions");
    Rng rng(combine_seed(config.seed, combine_seed(attempt, std::string_view("encoder"))));
    std::vector<Vec> basis;
    for (std::size_t i = 0; i < planted_ids.size(); ++i) {
      auto v = gaussian(rng, d);
      project_out(v, basis);
      normalize(v);
      basis.push_back(v);
    }
    for (std::size_t i = 0; i < planted_ids.size(); ++i) {
      for (std::size_t j = 0; j < d; ++j) w_enc[planted_ids[i] * d + j] = static_cast<float>(basis[i][j]);
    }
    for (auto f : world.unplanted) {
      auto v = gaussian(rng, d);
      project_out(v, basis);
      normalize(v);
      for (std::size_t j = 0; j < d; ++j) w_enc[f * d + j] = static_cast<float>(v[j]);
    }
    bool ok = true;
    for (std::size_t a = 0; a < planted_ids.size() && ok; ++a) {
      for (std::size_t b = a + 1; b < planted_ids.size() && ok; ++b) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          s += static_cast<double>(w_enc[planted_ids[a] * d + j]) * w_enc[planted_ids[b] * d + j];
        }
        ok = std::abs(s) < kMaxPlantedDot;
      }
    }
    if (ok) break;
  }

  auto& sae = world.sae;
  sae.d_model = d;
  sae.d_sae = config.d_sae;
  sae.activation_fn = ActivationFn::jumprelu;
  sae.w_enc = w_enc;
  sae.b_enc.assign(config.d_sae, 0.0f);
  sae.threshold = std::vector<float>(config.d_sae, config.threshold);
  sae.w_dec = std::move(w_enc);
  sae.b_dec = std::vector<float>(d, 0.0f);
  return world;
}

std::vector<WordToken> whitespace_tokens(std::string_view text) {
  std::vector<WordToken> out;
  std::size_t i = 0;
  auto space = [](char c) { return c == ' ' || c == '\n' || c == '\t' || c == '\r' || c == '\f' || c == '\v'; };
  while (i < text.size()) {
    while (i < text.size() && space(text[i])) ++i;
    const auto begin = i;
    while (i < text.size() && !space(text[i])) ++i;
    if (i > begin) out.push_back({std::string(text.substr(begin, i - begin)), begin, i});
  }
  return out;
}

TokenRange char_range_to_tokens(const std::vector<WordToken>& tokens, CharRange chars) {
  TokenRange r{tokens.size(), tokens.size()};
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (tokens[t].begin >= chars.begin) {
      r.begin = t;
      break;
    }
  }
  r.end = r.begin;
  while (r.end < tokens.size() && tokens[r.end].end <= chars.end) ++r.end;
  return r;
}

namespace {

// Draw layout per token is fixed regardless of outcomes so streams never
// shift when a probability changes.
struct Contribution {
  std::uint32_t feature;
  double amplitude;
};

void add_direction(const PlantedWorld& world, std::vector<double>& acc, const Contribution& c) {
  const auto row = world.sae.encoder_row(c.feature);
  for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += c.amplitude * static_cast<double>(row[j]);
}

double amplitude(double u) { return 1.0 + 0.5 * u; }

void token_contributions(const PlantedWorld& world, const WordToken& token, bool in_objective_context,
                         const PlantedObjective* context_objective, const PlantedObjective* active, double strength,
                         Rng& prompt_stream, std::vector<Contribution>& out) {
  const auto& cfg = world.config;
  out.clear();

  Rng word(combine_seed(cfg.seed, "word|" + token.text));
  const bool generic = word.bernoulli(cfg.generic_rate);
  const auto generic_feature = world.unplanted.empty() ? 0u : world.unplanted[word.below(world.unplanted.size())];
  const double generic_amp = amplitude(word.uniform());
  if (generic && !world.unplanted.empty()) out.push_back({generic_feature, generic_amp});

  if (in_objective_context && context_objective) {
    for (auto f : context_objective->features) {
      Rng carry(combine_seed(cfg.seed, "carry|" + std::to_string(f) + "|" + token.text));
      out.push_back({f, amplitude(carry.uniform())});
    }
  }

  if (active) {
    for (auto f : active->features) {
      const bool fire = prompt_stream.bernoulli(strength);
      const double amp = amplitude(prompt_stream.uniform());
      if (fire) out.push_back({f, amp});
    }
  }

  const bool noisy = prompt_stream.bernoulli(cfg.noise_rate);
  const auto noise_feature = static_cast<std::uint32_t>(prompt_stream.below(cfg.d_sae));
  const double noise_amp = amplitude(prompt_stream.uniform());
  if (noisy) out.push_back({noise_feature, noise_amp});
}

}  // namespace

ActivationDump synth_prompt_dump(const PlantedWorld& world, std::string_view prompt_text,
                                 std::optional<std::size_t> instruction_index, std::optional<CharRange> example_code) {
  const auto& cfg = world.config;
  const auto words = whitespace_tokens(prompt_text);
  const double strength = instruction_index ? world.strength(*instruction_index) : 0.0;
  const PlantedObjective* active =
      (instruction_index && !cfg.active_objective.empty()) ? &world.active() : nullptr;

  // Earliest objective phrase in the text; its planted features stay on from
  // that point to the end of the prompt.
  const PlantedObjective* context_objective = nullptr;
  std::size_t context_start = prompt_text.size();
  for (const auto& o : world.objectives) {
    const auto at = prompt_text.find(o.phrase);
    if (at != std::string_view::npos && at < context_start) {
      context_start = at;
      context_objective = &o;
    }
  }

  ActivationDump dump;
  dump.model_id = cfg.model_id;
  dump.layer = cfg.layer;
  dump.d_model = cfg.d_model;
  dump.residuals.reserve(words.size() * cfg.d_model);
  Rng prompt_stream(combine_seed(cfg.seed, "prompt|" + std::string(prompt_text)));
  std::vector<Contribution> contributions;
  std::vector<double> acc(cfg.d_model);
  for (const auto& w : words) {
    token_contributions(world, w, w.end > context_start, context_objective, active, strength, prompt_stream,
                        contributions);
    std::fill(acc.begin(), acc.end(), 0.0);
    for (const auto& c : contributions) add_direction(world, acc, c);
    for (double v : acc) dump.residuals.push_back(static_cast<float>(v));
    dump.tokens.push_back(w.text);
  }
  if (example_code) dump.spans[std::string(kExampleSpanName)] = char_range_to_tokens(words, *example_code);
  return dump;
}

namespace {

std::string target_structure(StructureKind kind, std::size_t slot) {
  const auto i = std::to_string(slot);
  switch (kind) {
    case StructureKind::try_except:
      return "    try:\n        result = transform_" + i + "(result)\n    except ValueError:\n        result = None\n";
    case StructureKind::comment:
      return "    # step " + i + ": update the result\n    result = transform_" + i + "(result)\n";
    case StructureKind::print_call:
      return "    result = transform_" + i + "(result)\n    print(\"step\", " + i + ", result)\n";
  }
  return {};
}

// Lexical traps that must never be counted as the target structure.
std::string filler(StructureKind kind, std::size_t slot) {
  const auto i = std::to_string(slot);
  switch (kind) {
    case StructureKind::try_except:
      return "    result = retry_" + i + "(result)\n    note_" + i + " = \"try: later\"\n";
    case StructureKind::comment:
      return "    result = transform_" + i + "(result)\n    tag_" + i + " = \"step # " + i + "\"\n";
    case StructureKind::print_call:
      return "    result = transform_" + i + "(result)\n    note_" + i + " = \"print(result)\"\n";
  }
  return {};
}

}  // namespace

Generation synth_generation(const PlantedWorld& world, std::string_view prompt, std::size_t instruction_index,
                            StructureKind kind, std::uint64_t run) {
  const double strength = world.strength(instruction_index);

  // Prefill: the same forward computation the prompt dump performs.
  const auto prefill = synth_prompt_dump(world, prompt, instruction_index);

  Rng rng(combine_seed(world.config.seed, "gen|" + std::string(to_string(kind)) + "|" + std::to_string(run) + "|" +
                                              std::string(prompt)));
  std::string body = "def solve(data):\n    result = data\n";
  for (std::size_t slot = 0; slot < world.config.generation_slots; ++slot) {
    body += rng.bernoulli(strength) ? target_structure(kind, slot) : filler(kind, slot);
  }
  body += "    return result\n";

  Generation g;
  g.text = "Here is a solution.\n\n```python\n" + body + "```\n\nThis covers the edge cases. # try: it out\n";

  // Decode: one forward step per generated word, over the growing sequence.
  std::string running(prompt);
  for (const auto& w : whitespace_tokens(g.text)) {
    running += ' ';
    running += w.text;
  }
  const auto full = synth_prompt_dump(world, running, instruction_index);
  g.decode_steps = full.n_tokens() - prefill.n_tokens();
  return g;
}

ProblemCorpus synth_problems(std::size_t n, std::uint64_t seed) {
  static constexpr std::array<std::string_view, 12> verbs = {
      "find", "count", "sum", "sort", "reverse", "remove", "merge", "check", "return", "compute", "filter", "group"};
  static constexpr std::array<std::string_view, 10> adjectives = {
      "largest", "smallest", "unique", "even", "odd", "duplicate", "first", "last", "common", "missing"};
  static constexpr std::array<std::string_view, 10> nouns = {
      "elements", "numbers", "characters", "words", "pairs", "digits", "keys", "values", "tuples", "substrings"};
  static constexpr std::array<std::string_view, 6> containers = {"list", "string", "tuple",
                                                                 "dictionary", "array", "matrix"};
  Rng rng(combine_seed(seed, std::string_view("problems")));
  ProblemCorpus corpus;
  corpus.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Problem p;
    p.id = std::to_string(i + 1);
    p.text = "Write a function to " + std::string(verbs[rng.below(verbs.size())]) + " the " +
             std::string(adjectives[rng.below(adjectives.size())]) + " " +
             std::string(nouns[rng.below(nouns.size())]) + " in a given " +
             std::string(containers[rng.below(containers.size())]) + ".";
    corpus.push_back(std::move(p));
  }
  return corpus;
}

ActivationDump SimulatedActivations::activations(std::string_view prompt_text, const PromptContext& context) {
  return synth_prompt_dump(world_, prompt_text, context.instruction_index, context.example_code);
}

Generation SimulatedGenerator::generate(std::string_view prompt, std::size_t instruction_index, std::uint64_t run) {
  const auto kind = world_.config.active_objective.empty() ? StructureKind::try_except : world_.active().kind;
  return synth_generation(world_, prompt, instruction_index, kind, run);
}

}  // namespace spa
