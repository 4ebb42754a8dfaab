#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace spa {

/// Half-open token index range [begin, end).
struct TokenRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const noexcept { return end - begin; }
  bool operator==(const TokenRange&) const = default;
};

/// Residual-stream vectors captured for one prompt at one layer.
struct ActivationDump {
  std::string model_id;
  std::uint32_t layer = 0;
  std::vector<std::string> tokens;
  std::size_t d_model = 0;
  std::vector<float> residuals;  // tokens.size() x d_model, row-major
  std::map<std::string, TokenRange> spans;

  std::size_t n_tokens() const noexcept { return tokens.size(); }
  std::span<const float> row(std::size_t token) const;

  /// Throws unless row count, span bounds and finiteness all hold.
  void validate() const;
};

enum class ActivationFn { relu, jumprelu };

std::string to_string(ActivationFn fn);
ActivationFn parse_activation_fn(const std::string& name);

/// Encoder side of a sparse autoencoder. Decoder arrays are carried through
/// serialization but never used for encoding.
struct SaeParameters {
  std::size_t d_model = 0;
  std::size_t d_sae = 0;
  ActivationFn activation_fn = ActivationFn::relu;
  std::vector<float> w_enc;  // d_sae x d_model, row-major
  std::vector<float> b_enc;  // d_sae
  std::optional<std::vector<float>> threshold;  // d_sae, jumprelu only
  std::optional<std::vector<float>> w_dec;      // d_sae x d_model
  std::optional<std::vector<float>> b_dec;      // d_model

  std::span<const float> encoder_row(std::size_t feature) const;
  void validate() const;
};

struct FeatureEntry {
  std::uint32_t feature = 0;
  float value = 0.0f;

  bool operator==(const FeatureEntry&) const = default;
};

/// tokens x features activations, storing only strictly positive values.
/// Rows are kept sorted by feature index.
class FeatureActivationMatrix {
 public:
  FeatureActivationMatrix() = default;
  explicit FeatureActivationMatrix(std::size_t d_sae) : d_sae_(d_sae) {}

  /// Appends one token row given as a dense length-d_sae vector.
  void append_dense_row(std::span<const float> dense);

  static FeatureActivationMatrix from_dense(std::span<const float> dense, std::size_t n_tokens,
                                            std::size_t d_sae);

  std::size_t n_tokens() const noexcept { return offsets_.size() - 1; }
  std::size_t d_sae() const noexcept { return d_sae_; }
  std::size_t nnz() const noexcept { return entries_.size(); }

  std::span<const FeatureEntry> row(std::size_t token) const;
  float value(std::size_t token, std::uint32_t feature) const;

  bool operator==(const FeatureActivationMatrix&) const = default;

 private:
  std::size_t d_sae_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<FeatureEntry> entries_;
};

/// Encodes one residual vector. Output is d_sae long and elementwise >= 0.
std::vector<float> sae_encode(std::span<const float> residual, const SaeParameters& params);

/// Encodes every token of a dump. Uses the parallel kernel.
FeatureActivationMatrix encode_sequence(const ActivationDump& dump, const SaeParameters& params);

/// Encodes only `features`; their values match the full encoding bit for bit
/// and every other feature reads as inactive.
FeatureActivationMatrix encode_sequence(const ActivationDump& dump, const SaeParameters& params,
                                        std::span<const std::uint32_t> features);

/// Drops rows whose token text looks like a chat-template marker (`<...>`).
ActivationDump without_special_tokens(const ActivationDump& dump);
bool is_special_token(const std::string& token);

}  // namespace spa
