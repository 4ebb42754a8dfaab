#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <json.hpp>

#include "spa/corpus.hpp"
#include "spa/syntax.hpp"

using namespace spa;

namespace {

std::size_t count_kind(std::string_view src, TokenKind kind) {
  const auto lexed = lex(src);
  return std::count_if(lexed.tokens.begin(), lexed.tokens.end(), [&](const Token& t) { return t.kind == kind; });
}

std::size_t count(std::string_view text, StructureKind kind) { return count_output(text, kind); }

}  // namespace

TEST_SUITE("syntax") {
  TEST_CASE("code block extraction") {
    const auto one = extract_code_blocks("Sure.\n```python\nx = 1\n```\nDone.\n");
    REQUIRE(one.size() == 1);
    CHECK(one[0].source == "x = 1\n");
    CHECK(one[0].fence_index == 0u);

    const auto bare = extract_code_blocks("x = 1\nprint(x)\n");
    REQUIRE(bare.size() == 1);
    CHECK(bare[0].source == "x = 1\nprint(x)\n");
    CHECK_FALSE(bare[0].fence_index.has_value());

    const auto two = extract_code_blocks("```\na\n```\ntext\n```py\nb\n```\n");
    REQUIRE(two.size() == 2);
    CHECK(two[0].source == "a\n");
    CHECK(two[1].source == "b\n");

    const auto open = extract_code_blocks("```python\ntry:\n    f()\n");
    REQUIRE(open.size() == 1);
    CHECK(open[0].unterminated);
  }

  TEST_CASE("lexer: strings and comments") {
    CHECK(count_kind("x = \"# not a comment\"", TokenKind::comment) == 0);
    CHECK(count_kind("# hi", TokenKind::comment) == 1);
    const std::string triple = "s = '''\ntry:\n    pass\n'''\n";
    CHECK(count_kind(triple, TokenKind::string_literal) == 1);
    const auto lexed = lex(triple);
    for (const auto& t : lexed.tokens) {
      if (t.kind == TokenKind::name) CHECK(triple.substr(t.offset, t.length) == "s");
    }
  }

  TEST_CASE("lexer: prefixes, escapes and unterminated strings") {
    CHECK(count_kind("x = rb'\\'' # c", TokenKind::comment) == 1);
    CHECK(count_kind("x = f\"{a}#\" # c", TokenKind::comment) == 1);
    CHECK(count_kind("x = 'it\\'s' # c", TokenKind::comment) == 1);
    const auto open = lex("x = 'abc\ny = 1 # c\n");
    CHECK(count_kind("x = 'abc\ny = 1 # c\n", TokenKind::comment) == 1);
    CHECK_FALSE(open.diagnostics.empty());
    const auto doc = lex("\"\"\"never closed\n# inside\n");
    CHECK(count_kind("\"\"\"never closed\n# inside\n", TokenKind::comment) == 0);
    CHECK(doc.tokens.back().unterminated);
  }

  TEST_CASE("lexer spans partition the input") {
    const std::vector<std::string> sources = {
        "", "x", "def f(a, b):\n    return a + b  # sum\n", "s = r'\\d+' \\\n  + \"x\"\n", "'''\n", "\r\nprint(1)\r\n",
        "π = 3.14\nprint(π)\n"};
    for (const auto& src : sources) {
      const auto lexed = lex(src);
      std::size_t at = 0;
      for (const auto& t : lexed.tokens) {
        CHECK(t.offset == at);
        CHECK(t.length > 0);
        at += t.length;
      }
      CHECK(at == src.size());
    }
  }

  TEST_CASE("try-except counting") {
    CHECK(count("try:\n    a()\nexcept E:\n    b()\nelse:\n    c()\n", StructureKind::try_except) == 1);
    CHECK(count("x = 'try:'\n# try:\n", StructureKind::try_except) == 0);
    CHECK(count("retry:\n  pass\n", StructureKind::try_except) == 0);
    CHECK(count("try :  # comment\n    a()\nfinally:\n    b()\n", StructureKind::try_except) == 1);
    CHECK(count("x = 1; try:\n", StructureKind::try_except) == 0);

    const auto c = count_structures({"try:\n    a()\nexcept A:\n    pass\nexcept B:\n    pass\n", std::nullopt, false},
                                    StructureKind::try_except);
    CHECK(c.count() == 1);
    CHECK(c.except_arms == std::vector<std::size_t>{2});
    CHECK(c.locations[0] == Location{1, 1});
  }

  TEST_CASE("print counting") {
    CHECK(count("print(\"hello\")\ns = \"print(x)\"\n", StructureKind::print_call) == 1);
    CHECK(count("logger.print(1)\ndef print(x): pass\nprinter(1)\n", StructureKind::print_call) == 0);
    CHECK(count("print (1)\n", StructureKind::print_call) == 1);
    CHECK(count("print\n", StructureKind::print_call) == 0);
  }

  TEST_CASE("comment counting") {
    CHECK(count("# a\nx = 1  # b\ns = '# c'\n", StructureKind::comment) == 2);
  }

  TEST_CASE("prose outside fences does not change counts") {
    const std::string code = "```python\n# c\nprint(1)\ntry:\n    a()\nexcept E:\n    pass\n```\n";
    for (auto kind : {StructureKind::try_except, StructureKind::comment, StructureKind::print_call}) {
      const auto base = count(code, kind);
      CHECK(count("Intro # with print(x) and try: it\n" + code + "\nOutro # try:\n", kind) == base);
    }
  }

  TEST_CASE("counts add over concatenation") {
    const std::vector<std::string> parts = {"# a\nprint(1)\n", "try:\n    x()\nexcept E:\n    print(2)\n",
                                            "s = 'print(3)'  # b\n", "def f():\n    '''doc # no'''\n    print(f)\n"};
    for (auto kind : {StructureKind::try_except, StructureKind::comment, StructureKind::print_call}) {
      for (const auto& a : parts) {
        for (const auto& b : parts) CHECK(count(a + "\n" + b, kind) == count(a, kind) + count(b, kind));
      }
    }
  }

  TEST_CASE("corpus tallies") {
    const std::vector<std::string> outputs = {"print(1)\n", "x = 1\n", "print(1)\nprint(2)\n"};
    const auto tally = tally_corpus(outputs, StructureKind::print_call);
    CHECK(tally.total == 3);
    CHECK(tally.per_output == std::vector<std::size_t>{1, 0, 2});
    CHECK(tally_corpus({}, StructureKind::comment).total == 0);
  }

  TEST_CASE("hand-labeled fixture corpus") {
    const std::filesystem::path dir = SPA_FIXTURE_DIR "/syntax_corpus";
    const auto labels = nlohmann::json::parse(read_text_file(dir / "labels.json"));
    REQUIRE(labels.size() == 20);
    for (const auto& entry : labels) {
      const auto file = entry.at("file").get<std::string>();
      CAPTURE(file);
      const auto text = read_text_file(dir / file);
      CHECK(count(text, StructureKind::try_except) == entry.at("try_except").get<std::size_t>());
      CHECK(count(text, StructureKind::comment) == entry.at("comment").get<std::size_t>());
      CHECK(count(text, StructureKind::print_call) == entry.at("print").get<std::size_t>());
      std::vector<std::size_t> arms;
      for (const auto& block : extract_code_blocks(text)) {
        const auto c = count_structures(block, StructureKind::try_except);
        arms.insert(arms.end(), c.except_arms.begin(), c.except_arms.end());
      }
      std::sort(arms.begin(), arms.end());
      CHECK(arms == entry.at("except_arms").get<std::vector<std::size_t>>());
    }
  }

  TEST_CASE("structure kind names") {
    CHECK(parse_structure_kind("print") == StructureKind::print_call);
    CHECK(parse_structure_kind("print_call") == StructureKind::print_call);
    CHECK(to_string(StructureKind::try_except) == "try_except");
    CHECK_FALSE(parse_structure_kind("loops").has_value());
  }
}
