#include "spa/spad_format.hpp"

#include <bit>
#include <cstring>
#include <json.hpp>
#include <string_view>

#include "spa/corpus.hpp"
#include "spa/error.hpp"

namespace spa {
namespace {

constexpr std::string_view kDumpMagic = "SPAD";
constexpr std::string_view kSaeMagic = "SPAW";
constexpr std::size_t kPreambleSize = 12;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[at + i]) << (8 * i);
  return v;
}

void put_floats(std::vector<std::uint8_t>& out, std::span<const float> values) {
  out.reserve(out.size() + values.size() * 4);
  for (float f : values) put_u32(out, std::bit_cast<std::uint32_t>(f));
}

std::vector<float> get_floats(std::span<const std::uint8_t> bytes, std::size_t at, std::size_t count) {
  std::vector<float> values(count);
  for (std::size_t i = 0; i < count; ++i) values[i] = std::bit_cast<float>(get_u32(bytes, at + 4 * i));
  return values;
}

std::vector<std::uint8_t> frame(std::string_view magic, const nlohmann::ordered_json& header) {
  std::string text;
  try {
    text = header.dump();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::invalid_value, std::string("header is not encodable as UTF-8 JSON: ") + e.what());
  }
  std::vector<std::uint8_t> out(magic.begin(), magic.end());
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  return out;
}

struct Framed {
  nlohmann::json header;
  std::span<const std::uint8_t> payload;
};

Framed unframe(std::span<const std::uint8_t> bytes, std::string_view magic) {
  if (bytes.size() >= 4 &&
      std::memcmp(bytes.data(), magic.data(), 4) != 0) {
    fail(ErrorKind::bad_magic, "bad magic: expected '" + std::string(magic) + "'");
  }
  require(bytes.size() >= kPreambleSize, ErrorKind::truncated_payload, "file shorter than the 12-byte preamble");
  const std::uint32_t version = get_u32(bytes, 4);
  require(version == kFormatVersion, ErrorKind::unsupported_version,
          "unsupported version " + std::to_string(version));
  const std::uint32_t header_len = get_u32(bytes, 8);
  require(bytes.size() - kPreambleSize >= header_len, ErrorKind::truncated_payload,
          "header length " + std::to_string(header_len) + " exceeds file size");
  Framed framed;
  const auto* begin = reinterpret_cast<const char*>(bytes.data() + kPreambleSize);
  framed.header = nlohmann::json::parse(begin, begin + header_len, nullptr, false);
  require(!framed.header.is_discarded() && framed.header.is_object(), ErrorKind::malformed_header,
          "header is not a JSON object");
  framed.payload = bytes.subspan(kPreambleSize + header_len);
  return framed;
}

template <class T>
T field(const nlohmann::json& header, const char* name) {
  require(header.contains(name), ErrorKind::malformed_header, std::string("header missing '") + name + "'");
  try {
    return header.at(name).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorKind::malformed_header, std::string("header field '") + name + "' has the wrong type");
  }
}

void check_payload(std::size_t actual, std::size_t expected) {
  require(actual >= expected, ErrorKind::truncated_payload,
          "payload has " + std::to_string(actual) + " bytes, header declares " + std::to_string(expected));
  require(actual == expected, ErrorKind::size_mismatch,
          "payload has " + std::to_string(actual - expected) + " bytes beyond the declared arrays");
}

struct ArraySpec {
  std::string name;
  std::size_t rows;
  std::size_t cols;
};

}  // namespace

std::vector<std::uint8_t> write_dump(const ActivationDump& dump) {
  dump.validate();
  nlohmann::ordered_json header;
  header["model_id"] = dump.model_id;
  header["layer"] = dump.layer;
  header["n_tokens"] = dump.n_tokens();
  header["d_model"] = dump.d_model;
  header["dtype"] = "f32";
  header["tokens"] = dump.tokens;
  header["spans"] = nlohmann::ordered_json::object();
  for (const auto& [name, range] : dump.spans) header["spans"][name] = {range.begin, range.end};
  auto out = frame(kDumpMagic, header);
  put_floats(out, dump.residuals);
  return out;
}

ActivationDump read_dump(std::span<const std::uint8_t> bytes) {
  const auto framed = unframe(bytes, kDumpMagic);
  const auto& h = framed.header;
  ActivationDump dump;
  dump.model_id = field<std::string>(h, "model_id");
  dump.layer = field<std::uint32_t>(h, "layer");
  const auto n_tokens = field<std::size_t>(h, "n_tokens");
  dump.d_model = field<std::size_t>(h, "d_model");
  require(field<std::string>(h, "dtype") == "f32", ErrorKind::malformed_header, "dtype must be f32");
  dump.tokens = field<std::vector<std::string>>(h, "tokens");
  require(dump.tokens.size() == n_tokens, ErrorKind::size_mismatch,
          "header declares " + std::to_string(n_tokens) + " tokens but lists " +
              std::to_string(dump.tokens.size()));
  if (h.contains("spans")) {
    require(h["spans"].is_object(), ErrorKind::malformed_header, "spans must be an object");
    for (const auto& [name, range] : h["spans"].items()) {
      require(range.is_array() && range.size() == 2 && range[0].is_number_unsigned() &&
                  range[1].is_number_unsigned(),
              ErrorKind::malformed_header, "span '" + name + "' must be [start, end]");
      dump.spans[name] = {range[0].get<std::size_t>(), range[1].get<std::size_t>()};
    }
  }
  require(dump.d_model > 0, ErrorKind::malformed_header, "d_model must be positive");
  check_payload(framed.payload.size(), n_tokens * dump.d_model * 4);
  dump.residuals = get_floats(framed.payload, 0, n_tokens * dump.d_model);
  dump.validate();
  return dump;
}

std::vector<std::uint8_t> write_sae(const SaeParameters& params) {
  params.validate();
  std::vector<std::pair<ArraySpec, const std::vector<float>*>> arrays;
  arrays.push_back({{"W_enc", params.d_sae, params.d_model}, &params.w_enc});
  arrays.push_back({{"b_enc", params.d_sae, 1}, &params.b_enc});
  if (params.threshold) arrays.push_back({{"threshold", params.d_sae, 1}, &*params.threshold});
  if (params.w_dec) arrays.push_back({{"W_dec", params.d_sae, params.d_model}, &*params.w_dec});
  if (params.b_dec) arrays.push_back({{"b_dec", params.d_model, 1}, &*params.b_dec});

  nlohmann::ordered_json header;
  header["d_model"] = params.d_model;
  header["d_sae"] = params.d_sae;
  header["activation_fn"] = to_string(params.activation_fn);
  header["subtract_decoder_bias"] = false;
  header["arrays"] = nlohmann::ordered_json::array();
  for (const auto& [spec, data] : arrays) {
    header["arrays"].push_back({{"name", spec.name}, {"rows", spec.rows}, {"cols", spec.cols}});
  }
  auto out = frame(kSaeMagic, header);
  for (const auto& [spec, data] : arrays) put_floats(out, *data);
  return out;
}

SaeParameters read_sae(std::span<const std::uint8_t> bytes) {
  const auto framed = unframe(bytes, kSaeMagic);
  const auto& h = framed.header;
  SaeParameters params;
  params.d_model = field<std::size_t>(h, "d_model");
  params.d_sae = field<std::size_t>(h, "d_sae");
  params.activation_fn = parse_activation_fn(field<std::string>(h, "activation_fn"));
  require(params.d_model > 0 && params.d_sae > 0, ErrorKind::malformed_header, "SAE dimensions must be positive");
  if (h.contains("subtract_decoder_bias")) {
    require(!field<bool>(h, "subtract_decoder_bias"), ErrorKind::contract_violation,
            "decoder-bias subtraction before encoding is not supported");
  }
  const auto listed = field<nlohmann::json>(h, "arrays");
  require(listed.is_array(), ErrorKind::malformed_header, "arrays must be a list");

  const std::vector<ArraySpec> canonical = {{"W_enc", params.d_sae, params.d_model},
                                            {"b_enc", params.d_sae, 1},
                                            {"threshold", params.d_sae, 1},
                                            {"W_dec", params.d_sae, params.d_model},
                                            {"b_dec", params.d_model, 1}};
  std::vector<ArraySpec> specs;
  std::size_t next_canonical = 0;
  std::size_t total = 0;
  for (const auto& entry : listed) {
    require(entry.is_object(), ErrorKind::malformed_header, "array entry must be an object");
    ArraySpec spec{field<std::string>(entry, "name"), field<std::size_t>(entry, "rows"),
                   field<std::size_t>(entry, "cols")};
    while (next_canonical < canonical.size() && canonical[next_canonical].name != spec.name) ++next_canonical;
    require(next_canonical < canonical.size(), ErrorKind::malformed_header,
            "array '" + spec.name + "' is unknown or out of order");
    const auto& want = canonical[next_canonical++];
    require(spec.rows == want.rows && spec.cols == want.cols, ErrorKind::size_mismatch,
            "array '" + spec.name + "' is " + std::to_string(spec.rows) + "x" + std::to_string(spec.cols) +
                ", expected " + std::to_string(want.rows) + "x" + std::to_string(want.cols));
    total += spec.rows * spec.cols;
    specs.push_back(spec);
  }
  check_payload(framed.payload.size(), total * 4);

  std::size_t at = 0;
  bool has_enc = false, has_bias = false;
  for (const auto& spec : specs) {
    auto values = get_floats(framed.payload, at, spec.rows * spec.cols);
    at += values.size() * 4;
    if (spec.name == "W_enc") {
      params.w_enc = std::move(values);
      has_enc = true;
    } else if (spec.name == "b_enc") {
      params.b_enc = std::move(values);
      has_bias = true;
    } else if (spec.name == "threshold") {
      params.threshold = std::move(values);
    } else if (spec.name == "W_dec") {
      params.w_dec = std::move(values);
    } else {
      params.b_dec = std::move(values);
    }
  }
  require(has_enc && has_bias, ErrorKind::malformed_header, "W_enc and b_enc are required");
  params.validate();
  return params;
}

ActivationDump load_dump(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return read_dump(bytes);
}

void save_dump(const std::filesystem::path& path, const ActivationDump& dump) {
  write_file_atomic(path, write_dump(dump));
}

SaeParameters load_sae(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return read_sae(bytes);
}

void save_sae(const std::filesystem::path& path, const SaeParameters& params) {
  write_file_atomic(path, write_sae(params));
}

}  // namespace spa
