#pragma once

// Binary containers for activation dumps (SPAD) and SAE weights (SPAW).
//
//   magic[4] | u32 LE version (=1) | u32 LE header_len | JSON header | payload
//
// Payloads are raw little-endian f32. A dump payload is n_tokens x d_model,
// row-major. A weights payload is the header's `arrays` concatenated in the
// order W_enc, b_enc, [threshold], [W_dec], [b_dec].

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "spa/activation.hpp"

namespace spa {

inline constexpr std::uint32_t kFormatVersion = 1;

std::vector<std::uint8_t> write_dump(const ActivationDump& dump);
ActivationDump read_dump(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> write_sae(const SaeParameters& params);
SaeParameters read_sae(std::span<const std::uint8_t> bytes);

ActivationDump load_dump(const std::filesystem::path& path);
void save_dump(const std::filesystem::path& path, const ActivationDump& dump);
SaeParameters load_sae(const std::filesystem::path& path);
void save_sae(const std::filesystem::path& path, const SaeParameters& params);

}  // namespace spa
