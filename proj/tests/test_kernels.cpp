#include <doctest.h>

#include <cstring>

#include "spa/kernels.hpp"
#include "spa/simulator.hpp"
#include "spa/syntax.hpp"
#include "support.hpp"

using namespace spa;

namespace {

FeatureActivationMatrix random_sparse(Rng& rng, std::size_t n_tokens, std::size_t d_sae, double density) {
  std::vector<float> dense(n_tokens * d_sae, 0.0f);
  for (auto& v : dense) {
    if (rng.bernoulli(density)) v = static_cast<float>(rng.uniform() * 4.0);
  }
  return FeatureActivationMatrix::from_dense(dense, n_tokens, d_sae);
}

template <class T>
bool bitwise_equal(const std::vector<T>& a, const std::vector<T>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
}

}  // namespace

TEST_SUITE("kernels") {
  TEST_CASE("encode_rows: serial and parallel agree bit-for-bit") {
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
      SaeParameters p;
      p.d_model = 1 + rng.below(40);
      p.d_sae = 1 + rng.below(300);
      p.activation_fn = trial % 2 ? ActivationFn::relu : ActivationFn::jumprelu;
      p.w_enc.resize(p.d_model * p.d_sae);
      for (auto& w : p.w_enc) w = static_cast<float>(rng.normal());
      p.b_enc.resize(p.d_sae);
      for (auto& b : p.b_enc) b = static_cast<float>(rng.normal());
      if (p.activation_fn == ActivationFn::jumprelu) p.threshold = std::vector<float>(p.d_sae, 0.3f);
      const std::size_t n = rng.below(50);
      std::vector<float> x(n * p.d_model);
      for (auto& v : x) v = static_cast<float>(rng.normal());
      std::vector<float> a(n * p.d_sae), b(n * p.d_sae);
      kernels::serial::encode_rows(x, n, p, a);
      kernels::omp::encode_rows(x, n, p, b);
      CHECK(bitwise_equal(a, b));
    }
  }

  TEST_CASE("encode_rows_subset: matches full encoding on the chosen features") {
    Rng rng(23);
    for (int trial = 0; trial < 20; ++trial) {
      const auto p = spa::testing::random_sae(rng, 1 + rng.below(24), 1 + rng.below(64), trial % 2 == 0, false);
      const std::size_t n = rng.below(30);
      std::vector<float> x(n * p.d_model);
      for (auto& v : x) v = static_cast<float>(rng.normal());
      std::vector<std::uint32_t> features;
      for (std::size_t f = 0; f < p.d_sae; ++f) {
        if (rng.bernoulli(0.3)) features.push_back(static_cast<std::uint32_t>(f));
      }
      std::vector<float> full(n * p.d_sae), a(n * p.d_sae, 9.0f), b(n * p.d_sae, 9.0f);
      kernels::serial::encode_rows(x, n, p, full);
      kernels::serial::encode_rows_subset(x, n, p, features, a);
      kernels::omp::encode_rows_subset(x, n, p, features, b);
      CHECK(bitwise_equal(a, b));
      std::vector<float> masked(full.size(), 0.0f);
      for (std::size_t t = 0; t < n; ++t) {
        for (auto f : features) masked[t * p.d_sae + f] = full[t * p.d_sae + f];
      }
      CHECK(bitwise_equal(a, masked));
    }
    const auto p = spa::testing::random_sae(rng, 2, 3, false, false);
    std::vector<float> x(2), out(3);
    const std::vector<std::uint32_t> bad{3};
    CHECK_THROWS(kernels::omp::encode_rows_subset(x, 1, p, bad, out));
  }

  TEST_CASE("span_feature_sums: serial and parallel agree bit-for-bit") {
    Rng rng(22);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t n = 1 + rng.below(60);
      const std::size_t d = 1 + rng.below(900);
      const auto m = random_sparse(rng, n, d, 0.1);
      const auto b = rng.below(n + 1);
      const TokenRange r{b, b + rng.below(n - b + 1)};
      std::vector<double> s(d), q(d);
      kernels::serial::span_feature_sums(m, r, s);
      kernels::omp::span_feature_sums(m, r, q);
      CHECK(bitwise_equal(s, q));
    }
  }

  TEST_CASE("span_feature_sums restricts to the range") {
    const std::vector<float> dense{1, 0, 2, 0, 4, 8};  // 3 tokens x 2 features
    const auto m = FeatureActivationMatrix::from_dense(dense, 3, 2);
    std::vector<double> s(2);
    kernels::serial::span_feature_sums(m, {1, 3}, s);
    CHECK(s == std::vector<double>{6, 8});
  }

  TEST_CASE("frequency_grid: serial and parallel agree bit-for-bit") {
    Rng rng(23);
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t d = 1 + rng.below(64);
      std::vector<FeatureActivationMatrix> prompts;
      for (std::size_t p = 0, np = 1 + rng.below(12); p < np; ++p) {
        prompts.push_back(random_sparse(rng, 1 + rng.below(30), d, 0.3));
      }
      std::vector<std::uint32_t> features;
      for (std::size_t i = 0, nf = 1 + rng.below(8); i < nf; ++i) features.push_back(static_cast<std::uint32_t>(rng.below(d)));
      std::vector<double> a(features.size() * prompts.size()), b(a.size());
      kernels::serial::frequency_grid(prompts, features, a);
      kernels::omp::frequency_grid(prompts, features, b);
      CHECK(bitwise_equal(a, b));
    }
  }

  TEST_CASE("count_outputs: serial and parallel agree") {
    WorldConfig c;
    c.seed = 4;
    c.objectives = {{"p", "print statements", StructureKind::print_call, 3, {}}};
    c.instruction_strengths = {0.5};
    const auto world = build_world(c);
    std::vector<std::string> outputs;
    for (std::uint64_t r = 0; r < 200; ++r) outputs.push_back(synth_generation(world, "task", 0, StructureKind::print_call, r).text);
    CHECK(kernels::serial::count_outputs(outputs, StructureKind::print_call) ==
          kernels::omp::count_outputs(outputs, StructureKind::print_call));
  }

  TEST_CASE("thread count is positive") { CHECK(kernels::thread_count() >= 1); }
}
