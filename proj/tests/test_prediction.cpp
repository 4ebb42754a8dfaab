#include <doctest.h>

#include <set>

#include "spa/error.hpp"
#include "spa/prediction.hpp"
#include "spa/simulator.hpp"
#include "support.hpp"

using namespace spa;

namespace {

FeatureActivationMatrix active_on(std::size_t n_tokens, std::size_t d_sae, std::uint32_t feature,
                                  std::size_t active_tokens) {
  std::vector<float> dense(n_tokens * d_sae, 0.0f);
  for (std::size_t t = 0; t < active_tokens; ++t) dense[t * d_sae + feature] = 1.0f;
  return FeatureActivationMatrix::from_dense(dense, n_tokens, d_sae);
}

TargetFeatureSet tf_of(std::initializer_list<std::uint32_t> features) {
  TargetFeatureSet tf;
  for (auto f : features) tf.features.push_back({f, 1.0});
  tf.requested_k = tf.features.size();
  return tf;
}

ProblemCorpus corpus(std::size_t n) {
  ProblemCorpus c;
  for (std::size_t i = 0; i < n; ++i) c.push_back({std::to_string(i + 1), "Problem " + std::to_string(i + 1), {}});
  return c;
}

}  // namespace

TEST_SUITE("prediction") {
  TEST_CASE("merging problem text and instruction") {
    CHECK(merge_prompt("Write f.", "Add a handler.") == "Write f.\nAdd a handler.");
    CHECK(merge_prompt("Write f.", "Add a handler.", MergeOrder::instruction_first) == "Add a handler.\nWrite f.");
    CHECK(merge_prompt("Write f.", "") == "Write f.");
  }

  TEST_CASE("the same seed gives the same problems for every instruction") {
    const auto c = corpus(50);
    const auto a = assemble_sample_prompts(0, "A", c, 10, 77);
    const auto b = assemble_sample_prompts(1, "B", c, 10, 77);
    CHECK(a.problem_ids == b.problem_ids);
    CHECK(a.prompts != b.prompts);
  }

  TEST_CASE("ten distinct problems out of 427") {
    const auto idx = sample_problem_indices(427, 10, 5);
    CHECK(idx.size() == 10);
    CHECK(std::set<std::size_t>(idx.begin(), idx.end()).size() == 10);
    for (auto i : idx) CHECK(i < 427);
    CHECK(sample_problem_indices(427, 10, 6) != idx);
  }

  TEST_CASE("sample larger than the corpus") {
    try {
      sample_problem_indices(5, 6, 0);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::corpus_too_small);
    }
    CHECK(sample_problem_indices(5, 5, 0).size() == 5);
  }

  TEST_CASE("sampling is a uniform permutation prefix") {
    std::vector<int> hits(8, 0);
    for (std::uint64_t s = 0; s < 8000; ++s) ++hits[sample_problem_indices(8, 1, s)[0]];
    for (int h : hits) CHECK(h > 850);
  }

  TEST_CASE("normalized activation frequency") {
    CHECK(normalized_activation_frequency(active_on(12, 4, 2, 3), 2) == 0.25);
    CHECK(normalized_activation_frequency(active_on(12, 4, 2, 3), 1) == 0.0);
    CHECK(normalized_activation_frequency(active_on(7, 4, 0, 7), 0) == 1.0);
    CHECK_THROWS_AS(normalized_activation_frequency(FeatureActivationMatrix(4), 0), Error);
  }

  TEST_CASE("scores on hand-built grids") {
    const std::vector<FeatureActivationMatrix> one{active_on(4, 3, 1, 1)};
    CHECK(predict_instruction_score(tf_of({1}), one) == 0.25);

    // f grid {{0.1, 0.2}, {0.3, 0.4}} over features {0, 1} and two prompts
    std::vector<float> d1(10 * 2, 0.0f), d2(10 * 2, 0.0f);
    for (int t = 0; t < 1; ++t) d1[t * 2 + 0] = 1;
    for (int t = 0; t < 3; ++t) d1[t * 2 + 1] = 1;
    for (int t = 0; t < 2; ++t) d2[t * 2 + 0] = 1;
    for (int t = 0; t < 4; ++t) d2[t * 2 + 1] = 1;
    const std::vector<FeatureActivationMatrix> two{FeatureActivationMatrix::from_dense(d1, 10, 2),
                                                   FeatureActivationMatrix::from_dense(d2, 10, 2)};
    CHECK(predict_instruction_score(tf_of({0, 1}), two) == doctest::Approx(1.0).epsilon(1e-15));

    const std::vector<FeatureActivationMatrix> none{active_on(4, 3, 1, 0)};
    CHECK(predict_instruction_score(tf_of({0, 1, 2}), none) == 0.0);
  }

  TEST_CASE("score bounds and invariances") {
    Rng rng(9);
    for (int trial = 0; trial < 40; ++trial) {
      const std::size_t d = 8;
      std::vector<FeatureActivationMatrix> prompts, scaled;
      for (std::size_t p = 0, n = 1 + rng.below(6); p < n; ++p) {
        const std::size_t len = 1 + rng.below(9);
        std::vector<float> dense(len * d, 0.0f);
        for (auto& v : dense) {
          if (rng.bernoulli(0.4)) v = static_cast<float>(0.1 + rng.uniform());
        }
        prompts.push_back(FeatureActivationMatrix::from_dense(dense, len, d));
        for (auto& v : dense) v *= 3.0f;
        scaled.push_back(FeatureActivationMatrix::from_dense(dense, len, d));
      }
      const auto tf = tf_of({0, 3, 5});
      const double P = predict_instruction_score(tf, prompts);
      CHECK(P >= 0.0);
      CHECK(P <= 3.0 * static_cast<double>(prompts.size()));
      CHECK(predict_instruction_score(tf, scaled) == P);

      // a silent feature leaves P unchanged
      std::vector<FeatureActivationMatrix> padded;
      for (const auto& m : prompts) {
        std::vector<float> dense(m.n_tokens() * (d + 1), 0.0f);
        for (std::size_t t = 0; t < m.n_tokens(); ++t) {
          for (const auto& e : m.row(t)) dense[t * (d + 1) + e.feature] = e.value;
        }
        padded.push_back(FeatureActivationMatrix::from_dense(dense, m.n_tokens(), d + 1));
      }
      CHECK(predict_instruction_score(tf_of({0, 3, 5, 8}), padded) == P);
    }
  }

  TEST_CASE("ranking") {
    CHECK(rank_instructions({{0, 0.5}, {1, 0.9}, {2, 0.9}}) == std::vector<std::size_t>{1, 2, 0});
    CHECK(rank_instructions({{3, 1.0}}) == std::vector<std::size_t>{3});
  }

  TEST_CASE("predict on a planted world") {
    WorldConfig c;
    c.seed = 12;
    c.objectives = {{"exception", "a try-except clause", StructureKind::try_except, 5, {}}};
    c.active_objective = "exception";
    c.instruction_strengths = {0.05, 0.25, 0.45, 0.65, 0.85};
    const auto world = build_world(c);
    SimulatedActivations provider(world);
    InstructionSet set{"exception", {"", "a", "b", "c", "d"}};
    TargetFeatureSet tf;
    for (auto f : world.active().features) tf.features.push_back({f, 1.0});
    tf.requested_k = 5;
    const auto problems = synth_problems(60, 1);
    PredictOptions options;
    options.seed = 3;
    const auto report = predict(set, tf, problems, world.sae, provider, options);
    CHECK(report.instructions.size() == 5);
    CHECK(report.ranking == std::vector<std::size_t>{4, 3, 2, 1, 0});
    CHECK(report.forward_passes == 50);
    CHECK(report.problem_ids.size() == 10);
    for (const auto& rec : report.instructions) {
      double sum = 0.0;
      for (const auto& [f, v] : rec.per_feature) sum += v;
      CHECK(sum == rec.score);
    }

    options.sample_size = 1;
    const auto single = predict(set, tf, problems, world.sae, provider, options);
    CHECK(single.forward_passes == 5);
    CHECK(single.ranking.size() == 5);
  }

  TEST_CASE("special-token flag changes the token total") {
    struct WithBos final : ActivationProvider {
      ActivationDump activations(std::string_view, const PromptContext&) override {
        ActivationDump d;
        d.d_model = 1;
        d.tokens = {"<bos>", "a", "b", "c"};
        d.residuals = {0, 1, 1, 0};
        return d;
      }
    } provider;
    SaeParameters p;
    p.d_model = 1;
    p.d_sae = 1;
    p.w_enc = {1};
    p.b_enc = {0};
    const InstructionSet set{"s", {"x"}};
    const auto problems = corpus(1);
    PredictOptions options;
    options.sample_size = 1;
    CHECK(predict(set, tf_of({0}), problems, p, provider, options).instructions[0].score == 0.5);
    options.count_special_tokens = false;
    CHECK(predict(set, tf_of({0}), problems, p, provider, options).instructions[0].score == 2.0 / 3.0);
  }
}
