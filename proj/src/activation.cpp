#include "spa/activation.hpp"

#include <algorithm>
#include <cmath>

#include "spa/error.hpp"
#include "spa/kernels.hpp"

namespace spa {

std::span<const float> ActivationDump::row(std::size_t token) const {
  require(token < n_tokens(), ErrorKind::contract_violation,
          "token index " + std::to_string(token) + " out of range");
  return {residuals.data() + token * d_model, d_model};
}

void ActivationDump::validate() const {
  require(d_model > 0, ErrorKind::dimension_mismatch, "dump d_model must be positive");
  require(residuals.size() == tokens.size() * d_model, ErrorKind::dimension_mismatch,
          "dump has " + std::to_string(residuals.size()) + " residual values, expected " +
              std::to_string(tokens.size() * d_model));
  for (const auto& [name, range] : spans) {
    require(range.begin <= range.end && range.end <= tokens.size(), ErrorKind::span_out_of_range,
            "span '" + name + "' exceeds " + std::to_string(tokens.size()) + " tokens");
  }
  require(std::all_of(residuals.begin(), residuals.end(), [](float v) { return std::isfinite(v); }),
          ErrorKind::invalid_value, "dump contains non-finite residual values");
}

std::string to_string(ActivationFn fn) { return fn == ActivationFn::relu ? "relu" : "jumprelu"; }

ActivationFn parse_activation_fn(const std::string& name) {
  if (name == "relu") return ActivationFn::relu;
  if (name == "jumprelu") return ActivationFn::jumprelu;
  fail(ErrorKind::malformed_header, "unknown activation_fn '" + name + "'");
}

std::span<const float> SaeParameters::encoder_row(std::size_t feature) const {
  return {w_enc.data() + feature * d_model, d_model};
}

void SaeParameters::validate() const {
  require(d_model > 0 && d_sae > 0, ErrorKind::dimension_mismatch, "SAE dimensions must be positive");
  require(w_enc.size() == d_sae * d_model, ErrorKind::dimension_mismatch, "W_enc is not d_sae x d_model");
  require(b_enc.size() == d_sae, ErrorKind::dimension_mismatch, "b_enc length differs from d_sae");
  const bool jump = activation_fn == ActivationFn::jumprelu;
  require(threshold.has_value() == jump, ErrorKind::contract_violation,
          jump ? "jumprelu SAE requires a threshold" : "threshold given for a relu SAE");
  if (threshold) {
    require(threshold->size() == d_sae, ErrorKind::dimension_mismatch, "threshold length differs from d_sae");
    require(std::all_of(threshold->begin(), threshold->end(), [](float t) { return t >= 0.0f; }),
            ErrorKind::invalid_value, "threshold must be non-negative");
  }
  if (w_dec) {
    require(w_dec->size() == d_sae * d_model, ErrorKind::dimension_mismatch, "W_dec is not d_sae x d_model");
  }
  if (b_dec) {
    require(b_dec->size() == d_model, ErrorKind::dimension_mismatch, "b_dec length differs from d_model");
  }
  auto finite = [](const std::vector<float>& v) {
    return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
  };
  require(finite(w_enc) && finite(b_enc) && (!threshold || finite(*threshold)), ErrorKind::invalid_value,
          "SAE parameters contain non-finite values");
}

void FeatureActivationMatrix::append_dense_row(std::span<const float> dense) {
  require(dense.size() == d_sae_, ErrorKind::dimension_mismatch, "dense row length differs from d_sae");
  for (std::size_t f = 0; f < dense.size(); ++f) {
    if (dense[f] > 0.0f) entries_.push_back({static_cast<std::uint32_t>(f), dense[f]});
  }
  offsets_.push_back(entries_.size());
}

FeatureActivationMatrix FeatureActivationMatrix::from_dense(std::span<const float> dense, std::size_t n_tokens,
                                                            std::size_t d_sae) {
  require(dense.size() == n_tokens * d_sae, ErrorKind::dimension_mismatch, "dense matrix size mismatch");
  FeatureActivationMatrix m(d_sae);
  for (std::size_t t = 0; t < n_tokens; ++t) m.append_dense_row(dense.subspan(t * d_sae, d_sae));
  return m;
}

std::span<const FeatureEntry> FeatureActivationMatrix::row(std::size_t token) const {
  require(token < n_tokens(), ErrorKind::contract_violation, "row index out of range");
  return {entries_.data() + offsets_[token], offsets_[token + 1] - offsets_[token]};
}

float FeatureActivationMatrix::value(std::size_t token, std::uint32_t feature) const {
  const auto r = row(token);
  const auto it = std::lower_bound(r.begin(), r.end(), feature,
                                   [](const FeatureEntry& e, std::uint32_t f) { return e.feature < f; });
  return (it != r.end() && it->feature == feature) ? it->value : 0.0f;
}

std::vector<float> sae_encode(std::span<const float> residual, const SaeParameters& params) {
  require(residual.size() == params.d_model, ErrorKind::dimension_mismatch,
          "residual length " + std::to_string(residual.size()) + " differs from d_model " +
              std::to_string(params.d_model));
  require(params.w_enc.size() == params.d_sae * params.d_model && params.b_enc.size() == params.d_sae,
          ErrorKind::dimension_mismatch, "SAE parameters are dimensionally inconsistent");
  std::vector<float> out(params.d_sae);
  kernels::encode_row(residual, params, out);
  return out;
}

namespace {

void check_encodable(const ActivationDump& dump, const SaeParameters& params) {
  require(dump.d_model == params.d_model, ErrorKind::dimension_mismatch,
          "dump d_model " + std::to_string(dump.d_model) + " differs from SAE d_model " +
              std::to_string(params.d_model));
  require(dump.residuals.size() == dump.n_tokens() * dump.d_model, ErrorKind::dimension_mismatch,
          "dump residual count does not match its tokens");
}

}  // namespace

FeatureActivationMatrix encode_sequence(const ActivationDump& dump, const SaeParameters& params) {
  check_encodable(dump, params);
  std::vector<float> dense(dump.n_tokens() * params.d_sae);
  kernels::omp::encode_rows(dump.residuals, dump.n_tokens(), params, dense);
  return FeatureActivationMatrix::from_dense(dense, dump.n_tokens(), params.d_sae);
}

FeatureActivationMatrix encode_sequence(const ActivationDump& dump, const SaeParameters& params,
                                        std::span<const std::uint32_t> features) {
  check_encodable(dump, params);
  std::vector<float> dense(dump.n_tokens() * params.d_sae);
  kernels::omp::encode_rows_subset(dump.residuals, dump.n_tokens(), params, features, dense);
  return FeatureActivationMatrix::from_dense(dense, dump.n_tokens(), params.d_sae);
}

bool is_special_token(const std::string& token) {
  if (token.size() < 3 || token.front() != '<' || token.back() != '>') return false;
  return std::none_of(token.begin() + 1, token.end() - 1,
                      [](char c) { return c == '<' || c == '>' || c == ' ' || c == '\n' || c == '\t'; });
}

ActivationDump without_special_tokens(const ActivationDump& dump) {
  ActivationDump out;
  out.model_id = dump.model_id;
  out.layer = dump.layer;
  out.d_model = dump.d_model;
  std::vector<std::size_t> new_index(dump.n_tokens() + 1, 0);
  for (std::size_t t = 0; t < dump.n_tokens(); ++t) {
    new_index[t] = out.tokens.size();
    if (is_special_token(dump.tokens[t])) continue;
    out.tokens.push_back(dump.tokens[t]);
    const auto r = dump.row(t);
    out.residuals.insert(out.residuals.end(), r.begin(), r.end());
  }
  new_index[dump.n_tokens()] = out.tokens.size();
  for (const auto& [name, range] : dump.spans) out.spans[name] = {new_index[range.begin], new_index[range.end]};
  return out;
}

}  // namespace spa
