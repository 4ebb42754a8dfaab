#pragma once

// Lexical ground-truth counting of Python structures in LLM outputs.
// Counting is lexical, not grammatical, so it stays total over the malformed
// code models routinely emit.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace spa {

enum class StructureKind { try_except, comment, print_call };

std::string_view to_string(StructureKind kind) noexcept;
std::optional<StructureKind> parse_structure_kind(std::string_view name) noexcept;

struct CodeSnippet {
  std::string source;
  std::optional<std::size_t> fence_index;  // nullopt: whole text, no fences
  bool unterminated = false;
};

/// Contents of ``` fenced blocks in order, or the whole text when there are none.
std::vector<CodeSnippet> extract_code_blocks(std::string_view llm_output);

enum class TokenKind { string_literal, comment, name, punctuation, newline, whitespace, other };

struct Token {
  TokenKind kind = TokenKind::other;
  std::size_t offset = 0;
  std::size_t length = 0;
  std::size_t line = 1;    // 1-based
  std::size_t column = 1;  // 1-based byte column
  bool unterminated = false;
};

struct LexResult {
  std::vector<Token> tokens;  // spans partition the input
  std::vector<std::string> diagnostics;
};

/// Never fails. Unterminated triple-quoted strings run to end of input;
/// unterminated single-line strings stop at the end of their line.
LexResult lex(std::string_view source);

struct Location {
  std::size_t line = 0;
  std::size_t column = 0;

  bool operator==(const Location&) const = default;
};

struct StructureCount {
  StructureKind kind = StructureKind::comment;
  std::vector<Location> locations;
  std::vector<std::size_t> except_arms;  // try_except only, parallel to locations

  std::size_t count() const noexcept { return locations.size(); }
};

StructureCount count_structures(const CodeSnippet& snippet, StructureKind kind);

/// Sum of count_structures over the snippets extracted from one output.
std::size_t count_output(std::string_view llm_output, StructureKind kind);

struct CorpusTally {
  std::size_t total = 0;
  std::vector<std::size_t> per_output;
};

CorpusTally tally_corpus(std::span<const std::string> outputs, StructureKind kind);

}  // namespace spa
