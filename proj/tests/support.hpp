#pragma once

// Shared builders for tests and the acceptance suite.

#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "spa/activation.hpp"
#include "spa/rng.hpp"

namespace spa::testing {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

/// Hand-assembled file: magic | version | header length | header | payload.
inline std::vector<std::uint8_t> craft(std::string_view magic, std::uint32_t version, std::string_view header,
                                       const std::vector<float>& payload,
                                       std::uint32_t declared_header_len = UINT32_MAX) {
  std::vector<std::uint8_t> out(magic.begin(), magic.end());
  put_u32(out, version);
  put_u32(out, declared_header_len == UINT32_MAX ? static_cast<std::uint32_t>(header.size()) : declared_header_len);
  out.insert(out.end(), header.begin(), header.end());
  for (float f : payload) put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

/// Any bit pattern that is a finite f32, including subnormals and -0.
inline float random_finite(Rng& rng) {
  for (;;) {
    const auto bits = static_cast<std::uint32_t>(rng.next());
    if (((bits >> 23) & 0xffu) != 0xffu) return std::bit_cast<float>(bits);
  }
}

inline ActivationDump random_dump(Rng& rng, std::size_t n_tokens, std::size_t d_model) {
  ActivationDump d;
  d.model_id = "model-" + std::to_string(rng.below(100));
  d.layer = static_cast<std::uint32_t>(rng.below(40));
  d.d_model = d_model;
  for (std::size_t t = 0; t < n_tokens; ++t) d.tokens.push_back("tok" + std::to_string(rng.below(1000)));
  d.residuals.resize(n_tokens * d_model);
  for (auto& x : d.residuals) x = random_finite(rng);
  if (n_tokens > 0) {
    const auto b = rng.below(n_tokens + 1);
    d.spans["example_code"] = {b, b + rng.below(n_tokens - b + 1)};
  }
  return d;
}

inline SaeParameters random_sae(Rng& rng, std::size_t d_model, std::size_t d_sae, bool jump, bool decoder) {
  SaeParameters p;
  p.d_model = d_model;
  p.d_sae = d_sae;
  p.activation_fn = jump ? ActivationFn::jumprelu : ActivationFn::relu;
  p.w_enc.resize(d_model * d_sae);
  for (auto& w : p.w_enc) w = random_finite(rng);
  p.b_enc.resize(d_sae);
  for (auto& b : p.b_enc) b = random_finite(rng);
  if (jump) {
    p.threshold = std::vector<float>(d_sae);
    for (auto& t : *p.threshold) t = std::fabs(random_finite(rng));
  }
  if (decoder) {
    p.w_dec = std::vector<float>(d_model * d_sae);
    for (auto& w : *p.w_dec) w = random_finite(rng);
    p.b_dec = std::vector<float>(d_model);
    for (auto& b : *p.b_dec) b = random_finite(rng);
  }
  return p;
}

/// Bitwise comparison, so that -0 and subnormals are distinguished.
inline bool same_bits(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::bit_cast<std::uint32_t>(a[i]) != std::bit_cast<std::uint32_t>(b[i])) return false;
  }
  return true;
}

}  // namespace spa::testing
