#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace spa {

struct Problem {
  std::string id;
  std::string text;
  std::optional<std::string> reference_code;
};

using ProblemCorpus = std::vector<Problem>;

/// Reads MBPP-style JSONL: one object per line with `task_id` and `text`
/// (`prompt` is accepted as an alias; `code` becomes the reference code).
/// Blank lines are skipped. Errors name the offending line.
ProblemCorpus parse_problems(std::string_view jsonl);
ProblemCorpus load_problems(const std::filesystem::path& path);
std::string problems_to_jsonl(const ProblemCorpus& corpus);

struct InstructionSet {
  std::string scenario_name;
  std::vector<std::string> instructions;
};

/// Scenario file: {scenario_name, objective, example_code, instructions:[...]}.
struct Scenario {
  InstructionSet instruction_set;
  std::string objective;
  std::string example_code;
};

Scenario parse_scenario(std::string_view json_text);
Scenario load_scenario(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);

/// Writes via a sibling temp file and rename so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace spa
