#include <doctest.h>

#include <cmath>

#include "spa/activation.hpp"
#include "spa/error.hpp"
#include "spa/rng.hpp"

using namespace spa;

namespace {

SaeParameters identity2(ActivationFn fn) {
  SaeParameters p;
  p.d_model = 2;
  p.d_sae = 2;
  p.activation_fn = fn;
  p.w_enc = {1, 0, 0, 1};
  p.b_enc = {0, -5};
  if (fn == ActivationFn::jumprelu) p.threshold = std::vector<float>{2, 0};
  return p;
}

SaeParameters random_sae(Rng& rng, std::size_t d_model, std::size_t d_sae, ActivationFn fn) {
  SaeParameters p;
  p.d_model = d_model;
  p.d_sae = d_sae;
  p.activation_fn = fn;
  p.w_enc.resize(d_model * d_sae);
  for (auto& w : p.w_enc) w = static_cast<float>(rng.normal());
  p.b_enc.resize(d_sae);
  for (auto& b : p.b_enc) b = static_cast<float>(rng.normal());
  if (fn == ActivationFn::jumprelu) {
    p.threshold = std::vector<float>(d_sae);
    for (auto& t : *p.threshold) t = static_cast<float>(rng.uniform());
  }
  return p;
}

ActivationDump random_dump(Rng& rng, std::size_t n, std::size_t d_model) {
  ActivationDump d;
  d.model_id = "m";
  d.d_model = d_model;
  for (std::size_t t = 0; t < n; ++t) d.tokens.push_back("t" + std::to_string(t));
  d.residuals.resize(n * d_model);
  for (auto& x : d.residuals) x = static_cast<float>(rng.normal());
  return d;
}

}  // namespace

TEST_SUITE("activation") {
  TEST_CASE("zero residual and zero bias encode to zero") {
    SaeParameters p;
    p.d_model = 3;
    p.d_sae = 4;
    p.w_enc.assign(12, 0.7f);
    p.b_enc.assign(4, 0.0f);
    const std::vector<float> x(3, 0.0f);
    CHECK(sae_encode(x, p) == std::vector<float>(4, 0.0f));
  }

  TEST_CASE("relu on the identity encoder") {
    const std::vector<float> x{3, 2};
    CHECK(sae_encode(x, identity2(ActivationFn::relu)) == std::vector<float>{3, 0});
  }

  TEST_CASE("jumprelu passes only values above the threshold") {
    const std::vector<float> x{3, 2};
    CHECK(sae_encode(x, identity2(ActivationFn::jumprelu)) == std::vector<float>{3, 0});
    auto p = identity2(ActivationFn::jumprelu);
    (*p.threshold)[0] = 3.0f;
    CHECK(sae_encode(x, p)[0] == 0.0f);  // equal to threshold does not pass
  }

  TEST_CASE("pre-activation accumulates in double before rounding") {
    SaeParameters p;
    p.d_model = 3;
    p.d_sae = 1;
    p.w_enc = {1.0f, 1.0f, 1.0f};
    p.b_enc = {0.0f};
    const std::vector<float> x{1e8f, 1.0f, -1e8f};
    CHECK(sae_encode(x, p)[0] == 1.0f);
  }

  TEST_CASE("dimension mismatch is rejected") {
    const std::vector<float> x{1, 2, 3};
    try {
      sae_encode(x, identity2(ActivationFn::relu));
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::dimension_mismatch);
    }
  }

  TEST_CASE("jumprelu without thresholds is invalid") {
    auto p = identity2(ActivationFn::jumprelu);
    p.threshold.reset();
    CHECK_THROWS_AS(p.validate(), Error);
  }

  TEST_CASE("outputs are non-negative for random inputs") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
      const auto fn = trial % 2 ? ActivationFn::relu : ActivationFn::jumprelu;
      const auto p = random_sae(rng, 1 + rng.below(8), 1 + rng.below(16), fn);
      std::vector<float> x(p.d_model);
      for (auto& v : x) v = static_cast<float>(rng.normal() * 10);
      for (float y : sae_encode(x, p)) CHECK(y >= 0.0f);
    }
  }

  TEST_CASE("relu is positively homogeneous in residual and bias") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
      auto p = random_sae(rng, 4, 8, ActivationFn::relu);
      std::vector<float> x(4);
      for (auto& v : x) v = static_cast<float>(rng.normal());
      const float c = 4.0f;  // power of two keeps the scaling exact
      auto scaled = p;
      for (auto& b : scaled.b_enc) b *= c;
      std::vector<float> cx = x;
      for (auto& v : cx) v *= c;
      const auto a = sae_encode(x, p);
      const auto b = sae_encode(cx, scaled);
      for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == a[i] * c);
    }
  }

  TEST_CASE("encode_sequence of an empty dump") {
    Rng rng(1);
    const auto p = random_sae(rng, 4, 6, ActivationFn::relu);
    ActivationDump d;
    d.d_model = 4;
    const auto m = encode_sequence(d, p);
    CHECK(m.n_tokens() == 0);
    CHECK(m.nnz() == 0);
  }

  TEST_CASE("encode_sequence matches per-token encoding") {
    Rng rng(2);
    for (std::size_t n : {1u, 3u, 17u}) {
      const auto p = random_sae(rng, 5, 9, ActivationFn::jumprelu);
      const auto d = random_dump(rng, n, 5);
      const auto m = encode_sequence(d, p);
      REQUIRE(m.n_tokens() == n);
      for (std::size_t t = 0; t < n; ++t) {
        const auto dense = sae_encode(d.row(t), p);
        for (std::uint32_t f = 0; f < 9; ++f) CHECK(m.value(t, f) == dense[f]);
      }
    }
  }

  TEST_CASE("sparse matrix stores strictly positive entries in feature order") {
    const std::vector<float> dense{0.0f, 2.0f, 0.0f, 1.0f, 0.5f, 0.0f};
    const auto m = FeatureActivationMatrix::from_dense(dense, 2, 3);
    CHECK(m.nnz() == 3);
    const auto r0 = m.row(0);
    REQUIRE(r0.size() == 1);
    CHECK(r0[0] == FeatureEntry{1, 2.0f});
    const auto r1 = m.row(1);
    REQUIRE(r1.size() == 2);
    CHECK(r1[0].feature == 0);
    CHECK(r1[1].feature == 1);
    CHECK(m.value(1, 2) == 0.0f);
  }

  TEST_CASE("special tokens") {
    CHECK(is_special_token("<bos>"));
    CHECK(is_special_token("<start_of_turn>"));
    CHECK_FALSE(is_special_token("<"));
    CHECK_FALSE(is_special_token("a<b>"));
    CHECK_FALSE(is_special_token("x"));
  }

  TEST_CASE("without_special_tokens shifts spans") {
    ActivationDump d;
    d.d_model = 1;
    d.tokens = {"<bos>", "a", "b", "c"};
    d.residuals = {0, 1, 2, 3};
    d.spans["example_code"] = {2, 4};
    const auto s = without_special_tokens(d);
    CHECK(s.tokens == std::vector<std::string>{"a", "b", "c"});
    CHECK(s.residuals == std::vector<float>{1, 2, 3});
    CHECK(s.spans.at("example_code") == TokenRange{1, 3});
  }

  TEST_CASE("dump validation") {
    ActivationDump d;
    d.d_model = 2;
    d.tokens = {"a"};
    d.residuals = {1.0f, NAN};
    CHECK_THROWS_AS(d.validate(), Error);
    d.residuals = {1.0f, 2.0f};
    d.spans["s"] = {0, 2};
    try {
      d.validate();
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::span_out_of_range);
    }
  }

  TEST_CASE("activation function names") {
    CHECK(to_string(ActivationFn::jumprelu) == "jumprelu");
    CHECK(parse_activation_fn("relu") == ActivationFn::relu);
    CHECK_THROWS_AS(parse_activation_fn("gelu"), Error);
  }
}
