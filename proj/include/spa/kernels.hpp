#pragma once

// Data-parallel kernels behind the pipeline. Each kernel has a serial
// reference under kernels::serial and an OpenMP variant under kernels::omp.
// The variants partition work so that every output element is produced by the
// same sequence of floating-point operations; results agree bit-for-bit.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spa/activation.hpp"

namespace spa {
enum class StructureKind;
}

namespace spa::kernels {

/// Pre-activation accumulated in double over d_model (ascending), rounded to
/// f32, then the SAE nonlinearity.
float encode_feature(std::span<const float> residual, const SaeParameters& params, std::uint32_t feature);
void encode_row(std::span<const float> residual, const SaeParameters& params, std::span<float> out);

/// Number of OpenMP threads the parallel variants will use (1 without OpenMP).
int thread_count();

namespace serial {

void encode_rows(std::span<const float> residuals, std::size_t n_tokens, const SaeParameters& params,
                 std::span<float> out);

/// Like encode_rows, but only `features` are computed; every other column is 0.
void encode_rows_subset(std::span<const float> residuals, std::size_t n_tokens, const SaeParameters& params,
                        std::span<const std::uint32_t> features, std::span<float> out);

/// sums[f] = sum over tokens in `range` (ascending) of the activation of f.
void span_feature_sums(const FeatureActivationMatrix& acts, TokenRange range, std::span<double> sums);

/// grid[i * prompts.size() + p] = fraction of prompt p's tokens on which
/// features[i] is active.
void frequency_grid(std::span<const FeatureActivationMatrix> prompts, std::span<const std::uint32_t> features,
                    std::span<double> grid);

std::vector<std::size_t> count_outputs(std::span<const std::string> outputs, StructureKind kind);

}  // namespace serial

namespace omp {

void encode_rows(std::span<const float> residuals, std::size_t n_tokens, const SaeParameters& params,
                 std::span<float> out);

void encode_rows_subset(std::span<const float> residuals, std::size_t n_tokens, const SaeParameters& params,
                        std::span<const std::uint32_t> features, std::span<float> out);

void span_feature_sums(const FeatureActivationMatrix& acts, TokenRange range, std::span<double> sums);

void frequency_grid(std::span<const FeatureActivationMatrix> prompts, std::span<const std::uint32_t> features,
                    std::span<double> grid);

std::vector<std::size_t> count_outputs(std::span<const std::string> outputs, StructureKind kind);

}  // namespace omp

}  // namespace spa::kernels
