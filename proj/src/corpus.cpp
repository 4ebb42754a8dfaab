#include "spa/corpus.hpp"

#include <fstream>
#include <iterator>
#include <json.hpp>
#include <set>
#include <sstream>

#include "spa/error.hpp"

namespace spa {

ProblemCorpus parse_problems(std::string_view jsonl) {
  ProblemCorpus corpus;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= jsonl.size()) {
    const auto nl = jsonl.find('\n', start);
    const auto line = jsonl.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    start = nl == std::string_view::npos ? jsonl.size() + 1 : nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

    const auto where = "line " + std::to_string(line_no);
    const auto row = nlohmann::json::parse(line, nullptr, false);
    require(!row.is_discarded() && row.is_object(), ErrorKind::malformed_input, where + ": not a JSON object");
    require(row.contains("task_id"), ErrorKind::malformed_input, where + ": missing task_id");
    Problem p;
    const auto& id = row["task_id"];
    require(id.is_string() || id.is_number_integer(), ErrorKind::malformed_input,
            where + ": task_id must be a string or integer");
    p.id = id.is_string() ? id.get<std::string>() : std::to_string(id.get<long long>());
    const char* text_key = row.contains("text") ? "text" : "prompt";
    require(row.contains(text_key) && row[text_key].is_string(), ErrorKind::malformed_input,
            where + ": missing text");
    p.text = row[text_key].get<std::string>();
    require(!p.text.empty(), ErrorKind::malformed_input, where + ": empty text");
    if (row.contains("code") && row["code"].is_string()) p.reference_code = row["code"].get<std::string>();
    require(seen.insert(p.id).second, ErrorKind::duplicate_id, where + ": duplicate task_id '" + p.id + "'");
    corpus.push_back(std::move(p));
  }
  require(!corpus.empty(), ErrorKind::empty_input, "problem file contains no problems");
  return corpus;
}

ProblemCorpus load_problems(const std::filesystem::path& path) {
  try {
    return parse_problems(read_text_file(path));
  } catch (const Error& e) {
    fail(e.kind(), path.string() + ": " + e.what());
  }
}

std::string problems_to_jsonl(const ProblemCorpus& corpus) {
  std::string out;
  for (const auto& p : corpus) {
    nlohmann::ordered_json row;
    row["task_id"] = p.id;
    row["text"] = p.text;
    if (p.reference_code) row["code"] = *p.reference_code;
    out += row.dump();
    out += '\n';
  }
  return out;
}

Scenario parse_scenario(std::string_view json_text) {
  const auto j = nlohmann::json::parse(json_text, nullptr, false);
  require(!j.is_discarded() && j.is_object(), ErrorKind::malformed_input, "scenario is not a JSON object");
  Scenario s;
  try {
    s.instruction_set.scenario_name = j.at("scenario_name").get<std::string>();
    s.objective = j.at("objective").get<std::string>();
    s.example_code = j.at("example_code").get<std::string>();
    s.instruction_set.instructions = j.at("instructions").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::malformed_input, std::string("scenario: ") + e.what());
  }
  require(!s.instruction_set.instructions.empty(), ErrorKind::empty_input, "scenario lists no instructions");
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  try {
    return parse_scenario(read_text_file(path));
  } catch (const Error& e) {
    fail(e.kind(), path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::io, "cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(out.good(), ErrorKind::io, "cannot write '" + tmp.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    require(out.good(), ErrorKind::io, "write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  require(!ec, ErrorKind::io, "cannot move '" + tmp.string() + "' into place: " + ec.message());
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace spa
