#include "spa/kernels.hpp"

#include <algorithm>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "spa/error.hpp"
#include "spa/syntax.hpp"

namespace spa::kernels {

float encode_feature(std::span<const float> residual, const SaeParameters& params, std::uint32_t feature) {
  const std::size_t d_model = params.d_model;
  const float* row = params.w_enc.data() + static_cast<std::size_t>(feature) * d_model;
  double acc = 0.0;
  for (std::size_t j = 0; j < d_model; ++j) acc += static_cast<double>(row[j]) * static_cast<double>(residual[j]);
  acc += static_cast<double>(params.b_enc[feature]);
  const float pre = static_cast<float>(acc);
  if (params.activation_fn == ActivationFn::jumprelu) return pre > (*params.threshold)[feature] ? pre : 0.0f;
  return pre > 0.0f ? pre : 0.0f;
}

void encode_row(std::span<const float> residual, const SaeParameters& params, std::span<float> out) {
  for (std::size_t f = 0; f < params.d_sae; ++f) out[f] = encode_feature(residual, params, static_cast<std::uint32_t>(f));
}

int thread_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace {

void check_encode_args(std::span<const float> residuals, std::size_t n_tokens, const SaeParameters& params,
                       std::span<float> out) {
  require(residuals.size() == n_tokens * params.d_model, ErrorKind::dimension_mismatch,
          "residual block is not n_tokens x d_model");
  require(out.size() == n_tokens * params.d_sae, ErrorKind::dimension_mismatch,
          "output block is not n_tokens x d_sae");
}

void check_subset_args(std::span<const float> residuals, std::size_t n_tokens, const SaeParameters& params,
                       std::span<const std::uint32_t> features, std::span<float> out) {
  check_encode_args(residuals, n_tokens, params, out);
  for (auto f : features) {
    require(f < params.d_sae, ErrorKind::contract_violation, "feature " + std::to_string(f) + " exceeds d_sae");
  }
}

void check_range(const FeatureActivationMatrix& acts, TokenRange range, std::span<double> sums) {
  require(range.begin <= range.end && range.end <= acts.n_tokens(), ErrorKind::span_out_of_range,
          "token span [" + std::to_string(range.begin) + ", " + std::to_string(range.end) + ") exceeds " +
              std::to_string(acts.n_tokens()) + " tokens");
  require(sums.size() == acts.d_sae(), ErrorKind::dimension_mismatch, "sums length differs from d_sae");
}

void check_grid(std::span<const FeatureActivationMatrix> prompts, std::span<const std::uint32_t> features,
                std::span<double> grid) {
  require(grid.size() == prompts.size() * features.size(), ErrorKind::dimension_mismatch,
          "frequency grid has wrong size");
  for (const auto& m : prompts) {
    require(m.n_tokens() > 0, ErrorKind::contract_violation, "frequency of an empty activation matrix");
  }
}

double frequency(const FeatureActivationMatrix& acts, std::uint32_t feature) {
  std::size_t active = 0;
  for (std::size_t t = 0; t < acts.n_tokens(); ++t) {
    if (acts.value(t, feature) > 0.0f) ++active;
  }
  return static_cast<double>(active) / static_cast<double>(acts.n_tokens());
}

}  // namespace

namespace serial {

void encode_rows(std::span<const float> residuals, std::size_t n_tokens, const SaeParameters& params,
                 std::span<float> out) {
  check_encode_args(residuals, n_tokens, params, out);
  for (std::size_t t = 0; t < n_tokens; ++t) {
    encode_row(residuals.subspan(t * params.d_model, params.d_model), params,
               out.subspan(t * params.d_sae, params.d_sae));
  }
}

void encode_rows_subset(std::span<const float> residuals, std::size_t n_tokens, const SaeParameters& params,
                        std::span<const std::uint32_t> features, std::span<float> out) {
  check_subset_args(residuals, n_tokens, params, features, out);
  std::fill(out.begin(), out.end(), 0.0f);
  for (std::size_t t = 0; t < n_tokens; ++t) {
    const auto residual = residuals.subspan(t * params.d_model, params.d_model);
    for (auto f : features) out[t * params.d_sae + f] = encode_feature(residual, params, f);
  }
}

void span_feature_sums(const FeatureActivationMatrix& acts, TokenRange range, std::span<double> sums) {
  check_range(acts, range, sums);
  std::fill(sums.begin(), sums.end(), 0.0);
  for (std::size_t t = range.begin; t < range.end; ++t) {
    for (const auto& e : acts.row(t)) sums[e.feature] += static_cast<double>(e.value);
  }
}

void frequency_grid(std::span<const FeatureActivationMatrix> prompts, std::span<const std::uint32_t> features,
                    std::span<double> grid) {
  check_grid(prompts, features, grid);
  for (std::size_t i = 0; i < features.size(); ++i) {
    for (std::size_t p = 0; p < prompts.size(); ++p) grid[i * prompts.size() + p] = frequency(prompts[p], features[i]);
  }
}

std::vector<std::size_t> count_outputs(std::span<const std::string> outputs, StructureKind kind) {
  std::vector<std::size_t> counts(outputs.size(), 0);
  for (std::size_t i = 0; i < outputs.size(); ++i) counts[i] = count_output(outputs[i], kind);
  return counts;
}

}  // namespace serial

namespace omp {

void encode_rows(std::span<const float> residuals, std::size_t n_tokens, const SaeParameters& params,
                 std::span<float> out) {
  check_encode_args(residuals, n_tokens, params, out);
  const auto n = static_cast<std::ptrdiff_t>(n_tokens);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t t = 0; t < n; ++t) {
    const auto row = static_cast<std::size_t>(t);
    encode_row(residuals.subspan(row * params.d_model, params.d_model), params,
               out.subspan(row * params.d_sae, params.d_sae));
  }
}

void encode_rows_subset(std::span<const float> residuals, std::size_t n_tokens, const SaeParameters& params,
                        std::span<const std::uint32_t> features, std::span<float> out) {
  check_subset_args(residuals, n_tokens, params, features, out);
  std::fill(out.begin(), out.end(), 0.0f);
  const auto n = static_cast<std::ptrdiff_t>(n_tokens);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t t = 0; t < n; ++t) {
    const auto row = static_cast<std::size_t>(t);
    const auto residual = residuals.subspan(row * params.d_model, params.d_model);
    for (auto f : features) out[row * params.d_sae + f] = encode_feature(residual, params, f);
  }
}

// Threads own disjoint feature blocks and each walks the whole span, so every
// per-feature sum still accumulates tokens in ascending order.
void span_feature_sums(const FeatureActivationMatrix& acts, TokenRange range, std::span<double> sums) {
  check_range(acts, range, sums);
  std::fill(sums.begin(), sums.end(), 0.0);
  const std::size_t d_sae = acts.d_sae();
  const std::size_t block = 256;
  const auto n_blocks = static_cast<std::ptrdiff_t>((d_sae + block - 1) / block);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t b = 0; b < n_blocks; ++b) {
    const auto lo = static_cast<std::uint32_t>(static_cast<std::size_t>(b) * block);
    const auto hi = static_cast<std::uint32_t>(std::min(d_sae, static_cast<std::size_t>(b + 1) * block));
    for (std::size_t t = range.begin; t < range.end; ++t) {
      const auto row = acts.row(t);
      auto it = std::lower_bound(row.begin(), row.end(), lo,
                                 [](const FeatureEntry& e, std::uint32_t f) { return e.feature < f; });
      for (; it != row.end() && it->feature < hi; ++it) sums[it->feature] += static_cast<double>(it->value);
    }
  }
}

void frequency_grid(std::span<const FeatureActivationMatrix> prompts, std::span<const std::uint32_t> features,
                    std::span<double> grid) {
  check_grid(prompts, features, grid);
  const auto cells = static_cast<std::ptrdiff_t>(grid.size());
  const std::size_t n_prompts = prompts.size();
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t c = 0; c < cells; ++c) {
    const auto cell = static_cast<std::size_t>(c);
    grid[cell] = frequency(prompts[cell % n_prompts], features[cell / n_prompts]);
  }
}

std::vector<std::size_t> count_outputs(std::span<const std::string> outputs, StructureKind kind) {
  std::vector<std::size_t> counts(outputs.size(), 0);
  const auto n = static_cast<std::ptrdiff_t>(outputs.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < n; ++i) counts[static_cast<std::size_t>(i)] = count_output(outputs[static_cast<std::size_t>(i)], kind);
  return counts;
}

}  // namespace omp

}  // namespace spa::kernels
