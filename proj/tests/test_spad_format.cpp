#include <doctest.h>

#include <filesystem>

#include "spa/corpus.hpp"
#include "spa/error.hpp"
#include "spa/spad_format.hpp"
#include "support.hpp"

using namespace spa;
using spa::testing::craft;

namespace {

ErrorKind dump_error(const std::vector<std::uint8_t>& bytes) {
  try {
    read_dump(bytes);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("read_dump accepted malformed bytes");
  return ErrorKind::io;
}

ErrorKind sae_error(const std::vector<std::uint8_t>& bytes) {
  try {
    read_sae(bytes);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("read_sae accepted malformed bytes");
  return ErrorKind::io;
}

const char* kTwoTokenHeader =
    R"({"model_id":"m","layer":16,"n_tokens":2,"d_model":2,"dtype":"f32","tokens":["a","b"],"spans":{}})";

}  // namespace

TEST_SUITE("spad_format") {
  TEST_CASE("two-token dump round-trips") {
    ActivationDump d;
    d.model_id = "toy";
    d.layer = 16;
    d.d_model = 3;
    d.tokens = {"def", "f"};
    d.residuals = {1, -2, 0.5f, -0.0f, 3e-41f, 7};
    d.spans["example_code"] = {1, 2};
    const auto back = read_dump(write_dump(d));
    CHECK(back.model_id == d.model_id);
    CHECK(back.layer == d.layer);
    CHECK(back.tokens == d.tokens);
    CHECK(back.spans == d.spans);
    CHECK(spa::testing::same_bits(back.residuals, d.residuals));
  }

  TEST_CASE("byte layout of the preamble") {
    ActivationDump d;
    d.d_model = 1;
    const auto bytes = write_dump(d);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "SPAD");
    CHECK(bytes[4] == 1);
    CHECK(bytes[5] == 0);
    const std::uint32_t len = bytes[8] | bytes[9] << 8 | bytes[10] << 16 | static_cast<std::uint32_t>(bytes[11]) << 24;
    CHECK(len + 12 == bytes.size());
  }

  TEST_CASE("randomized dumps round-trip bit-exactly") {
    Rng rng(99);
    for (int trial = 0; trial < 100; ++trial) {
      const auto d = spa::testing::random_dump(rng, rng.below(6), 1 + rng.below(5));
      const auto back = read_dump(write_dump(d));
      CHECK(spa::testing::same_bits(back.residuals, d.residuals));
      CHECK(back.tokens == d.tokens);
      CHECK(back.spans == d.spans);
    }
  }

  TEST_CASE("randomized SAE weights round-trip bit-exactly") {
    Rng rng(98);
    for (int trial = 0; trial < 100; ++trial) {
      const auto p = spa::testing::random_sae(rng, 1 + rng.below(5), 1 + rng.below(7), trial % 2 == 0, trial % 3 == 0);
      const auto back = read_sae(write_sae(p));
      CHECK(back.activation_fn == p.activation_fn);
      CHECK(spa::testing::same_bits(back.w_enc, p.w_enc));
      CHECK(spa::testing::same_bits(back.b_enc, p.b_enc));
      CHECK(back.threshold.has_value() == p.threshold.has_value());
      if (p.threshold) CHECK(spa::testing::same_bits(*back.threshold, *p.threshold));
      CHECK(back.w_dec.has_value() == p.w_dec.has_value());
      if (p.w_dec) CHECK(spa::testing::same_bits(*back.w_dec, *p.w_dec));
    }
  }

  TEST_CASE("malformed dumps") {
    const std::vector<float> four(4, 1.0f);
    CHECK(dump_error(craft("SPAX", 1, kTwoTokenHeader, four)) == ErrorKind::bad_magic);
    CHECK(dump_error(craft("SPAW", 1, kTwoTokenHeader, four)) == ErrorKind::bad_magic);
    CHECK(dump_error({'S', 'P', 'A', 'D', 1, 0}) == ErrorKind::truncated_payload);
    CHECK(dump_error(craft("SPAD", 2, kTwoTokenHeader, four)) == ErrorKind::unsupported_version);
    CHECK(dump_error(craft("SPAD", 1, kTwoTokenHeader, four, 5000)) == ErrorKind::truncated_payload);
    CHECK(dump_error(craft("SPAD", 1, "{not json", four)) == ErrorKind::malformed_header);
    CHECK(dump_error(craft("SPAD", 1, R"({"model_id":"m"})", four)) == ErrorKind::malformed_header);
    CHECK(dump_error(craft("SPAD", 1,
                           R"({"model_id":"m","layer":1,"n_tokens":2,"d_model":2,"dtype":"f16","tokens":["a","b"]})",
                           four)) == ErrorKind::malformed_header);
    CHECK(dump_error(craft("SPAD", 1, kTwoTokenHeader, {1, 2, 3})) == ErrorKind::truncated_payload);
    CHECK(dump_error(craft("SPAD", 1, kTwoTokenHeader, {1, 2, 3, 4, 5})) == ErrorKind::size_mismatch);
    CHECK(dump_error(craft("SPAD", 1,
                           R"({"model_id":"m","layer":1,"n_tokens":3,"d_model":2,"dtype":"f32","tokens":["a","b"]})",
                           four)) == ErrorKind::size_mismatch);
    CHECK(dump_error(craft("SPAD", 1,
                           R"({"model_id":"m","layer":1,"n_tokens":2,"d_model":2,"dtype":"f32","tokens":["a","b"],"spans":{"example_code":[1,3]}})",
                           four)) == ErrorKind::span_out_of_range);
    CHECK(dump_error(craft("SPAD", 1, kTwoTokenHeader, {1, 2, NAN, 4})) == ErrorKind::invalid_value);
  }

  TEST_CASE("four declared tokens with three payload rows is truncated") {
    const auto header =
        R"({"model_id":"m","layer":1,"n_tokens":4,"d_model":1,"dtype":"f32","tokens":["a","b","c","d"]})";
    CHECK(dump_error(craft("SPAD", 1, header, {1, 2, 3})) == ErrorKind::truncated_payload);
  }

  TEST_CASE("malformed SAE files") {
    const auto ok = R"({"d_model":2,"d_sae":1,"activation_fn":"relu","arrays":[{"name":"W_enc","rows":1,"cols":2},{"name":"b_enc","rows":1,"cols":1}]})";
    CHECK_NOTHROW(read_sae(craft("SPAW", 1, ok, {1, 2, 3})));
    CHECK(sae_error(craft("SPAD", 1, ok, {1, 2, 3})) == ErrorKind::bad_magic);
    CHECK(sae_error(craft("SPAW", 7, ok, {1, 2, 3})) == ErrorKind::unsupported_version);
    CHECK(sae_error(craft("SPAW", 1, ok, {1, 2})) == ErrorKind::truncated_payload);
    CHECK(sae_error(craft("SPAW", 1, ok, {1, 2, 3, 4})) == ErrorKind::size_mismatch);
    const auto swapped = R"({"d_model":2,"d_sae":1,"activation_fn":"relu","arrays":[{"name":"b_enc","rows":1,"cols":1},{"name":"W_enc","rows":1,"cols":2}]})";
    CHECK(sae_error(craft("SPAW", 1, swapped, {1, 2, 3})) == ErrorKind::malformed_header);
    const auto wrong_dims = R"({"d_model":2,"d_sae":1,"activation_fn":"relu","arrays":[{"name":"W_enc","rows":2,"cols":1},{"name":"b_enc","rows":1,"cols":1}]})";
    CHECK(sae_error(craft("SPAW", 1, wrong_dims, {1, 2, 3})) == ErrorKind::size_mismatch);
    const auto no_threshold = R"({"d_model":2,"d_sae":1,"activation_fn":"jumprelu","arrays":[{"name":"W_enc","rows":1,"cols":2},{"name":"b_enc","rows":1,"cols":1}]})";
    CHECK(sae_error(craft("SPAW", 1, no_threshold, {1, 2, 3})) == ErrorKind::contract_violation);
    const auto missing_bias = R"({"d_model":2,"d_sae":1,"activation_fn":"relu","arrays":[{"name":"W_enc","rows":1,"cols":2}]})";
    CHECK(sae_error(craft("SPAW", 1, missing_bias, {1, 2})) == ErrorKind::malformed_header);
    const auto unknown_fn = R"({"d_model":2,"d_sae":1,"activation_fn":"gelu","arrays":[]})";
    CHECK_THROWS_AS(read_sae(craft("SPAW", 1, unknown_fn, {})), Error);
  }

  TEST_CASE("files on disk") {
    const auto dir = std::filesystem::temp_directory_path() / "spa_spad_test";
    std::filesystem::create_directories(dir);
    Rng rng(3);
    const auto d = spa::testing::random_dump(rng, 4, 3);
    save_dump(dir / "a.spad", d);
    CHECK(spa::testing::same_bits(load_dump(dir / "a.spad").residuals, d.residuals));
    try {
      load_sae(dir / "missing.spaw");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::io);
      CHECK(std::string(e.what()).find("missing.spaw") != std::string::npos);
    }
    std::filesystem::remove_all(dir);
  }
}
