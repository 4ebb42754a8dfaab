#include "spa/syntax.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <numeric>

#include "spa/kernels.hpp"

namespace spa {

std::string_view to_string(StructureKind kind) noexcept {
  switch (kind) {
    case StructureKind::try_except: return "try_except";
    case StructureKind::comment: return "comment";
    case StructureKind::print_call: return "print";
  }
  return "unknown";
}

std::optional<StructureKind> parse_structure_kind(std::string_view name) noexcept {
  if (name == "try_except") return StructureKind::try_except;
  if (name == "comment") return StructureKind::comment;
  if (name == "print" || name == "print_call") return StructureKind::print_call;
  return std::nullopt;
}

namespace {

bool is_fence(std::string_view line) {
  const auto first = line.find_first_not_of(" \t");
  return first != std::string_view::npos && line.substr(first, 3) == "```";
}

}  // namespace

std::vector<CodeSnippet> extract_code_blocks(std::string_view text) {
  std::vector<CodeSnippet> blocks;
  bool fenced = false;
  bool inside = false;
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    const auto end = nl == std::string_view::npos ? text.size() : nl + 1;
    const auto line = text.substr(start, end - start);
    start = end;
    if (is_fence(line)) {
      fenced = true;
      if (inside) {
        inside = false;
      } else {
        blocks.push_back({"", blocks.size(), false});
        inside = true;
      }
      continue;
    }
    if (inside) blocks.back().source.append(line);
  }
  if (inside) blocks.back().unterminated = true;
  if (!fenced) blocks.push_back({std::string(text), std::nullopt, false});
  return blocks;
}

namespace {

bool ident_start(unsigned char c) { return std::isalpha(c) || c == '_' || c >= 0x80; }
bool ident_char(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

bool string_prefix(std::string_view word) {
  if (word.empty() || word.size() > 2) return false;
  std::string lower;
  for (char c : word) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  static constexpr std::array<std::string_view, 8> prefixes = {"r", "u", "b", "f", "br", "rb", "fr", "rf"};
  return std::find(prefixes.begin(), prefixes.end(), lower) != prefixes.end();
}

constexpr std::string_view kPunctuation = "()[]{}:;,.+-*/%=<>!&|^~@";

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  LexResult run() {
    while (pos_ < src_.size()) step();
    return std::move(result_);
  }

 private:
  char at(std::size_t i) const { return i < src_.size() ? src_[i] : '\0'; }

  void emit(TokenKind kind, std::size_t end, bool unterminated = false) {
    result_.tokens.push_back({kind, pos_, end - pos_, line_, column_, unterminated});
    for (std::size_t i = pos_; i < end; ++i) {
      if (src_[i] == '\n' || (src_[i] == '\r' && at(i + 1) != '\n')) {
        ++line_;
        column_ = 1;
      } else {
        ++column_;
      }
    }
    pos_ = end;
  }

  void step() {
    const char c = src_[pos_];
    if (c == '\n') return emit(TokenKind::newline, pos_ + 1);
    if (c == '\r') return emit(TokenKind::newline, at(pos_ + 1) == '\n' ? pos_ + 2 : pos_ + 1);
    if (c == ' ' || c == '\t' || c == '\f') {
      auto end = pos_;
      while (end < src_.size() && (src_[end] == ' ' || src_[end] == '\t' || src_[end] == '\f')) ++end;
      return emit(TokenKind::whitespace, end);
    }
    if (c == '\\' && (at(pos_ + 1) == '\n' || at(pos_ + 1) == '\r')) {
      const auto end = (at(pos_ + 1) == '\r' && at(pos_ + 2) == '\n') ? pos_ + 3 : pos_ + 2;
      return emit(TokenKind::whitespace, end);
    }
    if (c == '#') {
      auto end = src_.find_first_of("\r\n", pos_);
      return emit(TokenKind::comment, end == std::string_view::npos ? src_.size() : end);
    }
    if (c == '"' || c == '\'') return lex_string(pos_);
    const auto uc = static_cast<unsigned char>(c);
    if (ident_start(uc)) {
      auto end = pos_;
      while (end < src_.size() && ident_char(static_cast<unsigned char>(src_[end]))) ++end;
      if ((at(end) == '"' || at(end) == '\'') && string_prefix(src_.substr(pos_, end - pos_))) {
        return lex_string(end);
      }
      return emit(TokenKind::name, end);
    }
    if (std::isdigit(uc)) {
      auto end = pos_;
      while (end < src_.size() && (ident_char(static_cast<unsigned char>(src_[end])) || src_[end] == '.')) ++end;
      return emit(TokenKind::other, end);
    }
    if (kPunctuation.find(c) != std::string_view::npos) return emit(TokenKind::punctuation, pos_ + 1);
    emit(TokenKind::other, pos_ + 1);
  }

  // `quote` is the offset of the opening quote; the token starts at pos_ so
  // any prefix letters belong to it.
  void lex_string(std::size_t quote) {
    const char q = src_[quote];
    const bool triple = at(quote + 1) == q && at(quote + 2) == q;
    std::size_t i = quote + (triple ? 3 : 1);
    while (i < src_.size()) {
      const char c = src_[i];
      if (c == '\\') {
        i += 2;
        continue;
      }
      if (triple) {
        if (c == q && at(i + 1) == q && at(i + 2) == q) return emit(TokenKind::string_literal, i + 3);
      } else {
        if (c == q) return emit(TokenKind::string_literal, i + 1);
        if (c == '\n' || c == '\r') {
          diagnose("unterminated string literal");
          return emit(TokenKind::string_literal, i, true);
        }
      }
      ++i;
    }
    diagnose(triple ? "unterminated triple-quoted string" : "unterminated string literal");
    emit(TokenKind::string_literal, src_.size(), true);
  }

  void diagnose(const std::string& what) {
    result_.diagnostics.push_back("line " + std::to_string(line_) + ", column " + std::to_string(column_) + ": " +
                                  what);
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t column_ = 1;
  LexResult result_;
};

// Token-stream view used by the structure detectors.
class Stream {
 public:
  Stream(std::string_view src, const std::vector<Token>& tokens) : src_(src), tokens_(tokens) {}

  std::string_view text(std::size_t i) const { return src_.substr(tokens_[i].offset, tokens_[i].length); }
  TokenKind kind(std::size_t i) const { return tokens_[i].kind; }
  std::size_t size() const { return tokens_.size(); }
  const Token& operator[](std::size_t i) const { return tokens_[i]; }

  bool is_name(std::size_t i, std::string_view name) const { return kind(i) == TokenKind::name && text(i) == name; }
  bool is_punct(std::size_t i, char c) const {
    return kind(i) == TokenKind::punctuation && text(i).front() == c;
  }

  bool is_continuation(std::size_t i) const {
    return kind(i) == TokenKind::whitespace && text(i).front() == '\\';
  }

  // First token on its physical line, ignoring indentation.
  bool at_line_start(std::size_t i) const {
    while (i > 0) {
      --i;
      if (kind(i) == TokenKind::newline) return true;
      if (kind(i) != TokenKind::whitespace || is_continuation(i)) return false;
    }
    return true;
  }

  std::optional<std::size_t> next_significant(std::size_t i, bool skip_comments, bool cross_newlines) const {
    for (++i; i < size(); ++i) {
      const auto k = kind(i);
      if (k == TokenKind::whitespace) continue;
      if (skip_comments && k == TokenKind::comment) continue;
      if (cross_newlines && k == TokenKind::newline) continue;
      return i;
    }
    return std::nullopt;
  }

  std::optional<std::size_t> prev_significant(std::size_t i) const {
    while (i > 0) {
      --i;
      if (kind(i) != TokenKind::whitespace) return i;
    }
    return std::nullopt;
  }

 private:
  std::string_view src_;
  const std::vector<Token>& tokens_;
};

// except arms that belong to the try at `at`: statements at the same
// indentation, up to the first line at that level that is not a handler arm.
std::size_t except_arms(const Stream& s, std::size_t at) {
  const auto column = s[at].column;
  std::size_t arms = 0;
  for (std::size_t i = at + 1; i < s.size(); ++i) {
    if (s.kind(i) == TokenKind::whitespace || s.kind(i) == TokenKind::newline || s.kind(i) == TokenKind::comment) {
      continue;
    }
    if (!s.at_line_start(i)) continue;
    if (s[i].column < column) break;
    if (s[i].column > column) continue;
    if (s.is_name(i, "except")) {
      ++arms;
    } else if (!s.is_name(i, "else") && !s.is_name(i, "finally")) {
      break;
    }
  }
  return arms;
}

}  // namespace

LexResult lex(std::string_view source) { return Lexer(source).run(); }

StructureCount count_structures(const CodeSnippet& snippet, StructureKind kind) {
  const auto lexed = lex(snippet.source);
  const Stream s(snippet.source, lexed.tokens);
  StructureCount out;
  out.kind = kind;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const Location where{s[i].line, s[i].column};
    switch (kind) {
      case StructureKind::comment:
        if (s.kind(i) == TokenKind::comment) out.locations.push_back(where);
        break;
      case StructureKind::print_call: {
        if (!s.is_name(i, "print")) break;
        const auto next = s.next_significant(i, false, false);
        if (!next || !s.is_punct(*next, '(')) break;
        const auto prev = s.prev_significant(i);
        if (prev && (s.is_punct(*prev, '.') || s.is_name(*prev, "def") || s.is_name(*prev, "class"))) break;
        out.locations.push_back(where);
        break;
      }
      case StructureKind::try_except: {
        if (!s.is_name(i, "try") || !s.at_line_start(i)) break;
        const auto next = s.next_significant(i, true, false);
        if (!next || !s.is_punct(*next, ':')) break;
        out.locations.push_back(where);
        out.except_arms.push_back(except_arms(s, i));
        break;
      }
    }
  }
  return out;
}

std::size_t count_output(std::string_view llm_output, StructureKind kind) {
  std::size_t total = 0;
  for (const auto& snippet : extract_code_blocks(llm_output)) total += count_structures(snippet, kind).count();
  return total;
}

CorpusTally tally_corpus(std::span<const std::string> outputs, StructureKind kind) {
  CorpusTally tally;
  tally.per_output = kernels::omp::count_outputs(outputs, kind);
  tally.total = std::accumulate(tally.per_output.begin(), tally.per_output.end(), std::size_t{0});
  return tally;
}

}  // namespace spa
