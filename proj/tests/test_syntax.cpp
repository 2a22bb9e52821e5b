#include <algorithm>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "doctest.h"
#include "vulmtl/dataset.hpp"
#include "vulmtl/errors.hpp"
#include "vulmtl/lexer.hpp"
#include "vulmtl/syntax.hpp"

using namespace vulmtl;

namespace {

const char* kAddSource =
    "int add(int a, int b) {\n"
    "  int s = a + b;\n"
    "  return s;\n"
    "}\n";

const IdentifierSpan* find_span(const std::vector<IdentifierSpan>& spans,
                                const std::string& name) {
  for (const auto& s : spans)
    if (s.name == name) return &s;
  return nullptr;
}

Vocabulary empty_vocab() { return Vocabulary{}; }

}  // namespace

TEST_SUITE("syntax") {

TEST_CASE("lexer classifies token kinds with line and column") {
  auto lx = lex("int x = 42;\nfoo(\"hi\\n\", 'c', 0x1F, 3.5e2);\n");
  REQUIRE(lx.size() == 16);

  CHECK(lx[0].text == "int");
  CHECK(lx[0].kind == LexKind::Keyword);
  CHECK(lx[0].line == 1);
  CHECK(lx[0].col == 1);

  CHECK(lx[1].text == "x");
  CHECK(lx[1].kind == LexKind::Identifier);
  CHECK(lx[1].col == 5);

  CHECK(lx[2].text == "=");
  CHECK(lx[2].kind == LexKind::Operator);

  CHECK(lx[3].text == "42");
  CHECK(lx[3].kind == LexKind::Number);

  CHECK(lx[4].text == ";");
  CHECK(lx[4].kind == LexKind::Punct);

  CHECK(lx[5].text == "foo");
  CHECK(lx[5].line == 2);
  CHECK(lx[5].col == 1);

  CHECK(lx[7].text == "\"hi\\n\"");
  CHECK(lx[7].kind == LexKind::String);
  CHECK(lx[7].col == 5);

  CHECK(lx[9].text == "'c'");
  CHECK(lx[9].kind == LexKind::CharLit);

  CHECK(lx[11].text == "0x1F");
  CHECK(lx[11].kind == LexKind::Number);

  CHECK(lx[13].text == "3.5e2");
  CHECK(lx[13].kind == LexKind::Number);

  CHECK(lx[15].text == ";");
  CHECK(lx[15].kind == LexKind::Punct);

  auto num = lex("a->b <<= 2");
  REQUIRE(num.size() == 5);
  CHECK(num[1].text == "->");
  CHECK(num[1].kind == LexKind::Operator);
  CHECK(num[3].text == "<<=");
  CHECK(num[3].kind == LexKind::Operator);
}

TEST_CASE("lexer skips comments and closes unterminated strings at eol") {
  auto lx = lex("x // trailing\n/* multi\nline */ y \"open\nz @");
  REQUIRE(lx.size() == 5);
  CHECK(lx[0].text == "x");
  CHECK(lx[0].line == 1);
  CHECK(lx[1].text == "y");
  CHECK(lx[1].line == 3);
  CHECK(lx[2].text == "\"open");
  CHECK(lx[2].kind == LexKind::String);
  CHECK(lx[3].text == "z");
  CHECK(lx[3].line == 4);
  CHECK(lx[4].text == "@");
  CHECK(lx[4].kind == LexKind::Punct);
}

TEST_CASE("keyword table covers c and common c++ words") {
  CHECK(is_c_keyword("while"));
  CHECK(is_c_keyword("sizeof"));
  CHECK(is_c_keyword("constexpr"));
  CHECK_FALSE(is_c_keyword("size_t"));
  CHECK_FALSE(is_c_keyword("whilex"));
  CHECK_FALSE(is_c_keyword(""));
}

TEST_CASE("identifier spans on a simple function") {
  bool ok = false;
  auto spans = extract_identifiers(kAddSource, &ok);
  CHECK(ok);

  const auto* add = find_span(spans, "add");
  REQUIRE(add != nullptr);
  CHECK(add->kind == IdentKind::FunctionName);
  CHECK(add->def_sites == std::set<int>{1});
  CHECK(add->token_indices == std::vector<int>{1});

  const auto* a = find_span(spans, "a");
  REQUIRE(a != nullptr);
  CHECK(a->kind == IdentKind::Parameter);
  CHECK(a->scope_id == 1);
  CHECK(a->def_sites == std::set<int>{1});
  CHECK(a->use_sites == std::set<int>{2});
  CHECK(a->token_indices == std::vector<int>{4, 13});

  const auto* b = find_span(spans, "b");
  REQUIRE(b != nullptr);
  CHECK(b->token_indices == std::vector<int>{7, 15});

  const auto* s = find_span(spans, "s");
  REQUIRE(s != nullptr);
  CHECK(s->kind == IdentKind::LocalVariable);
  CHECK(s->def_sites == std::set<int>{2});
  CHECK(s->use_sites == std::set<int>{3});
  CHECK(s->token_indices == std::vector<int>{11, 18});
}

TEST_CASE("def-use chains on a simple function") {
  DefUseGraph g = build_def_use(std::string(kAddSource));
  CHECK(g.nodes == std::set<int>{1, 2, 3});
  CHECK(g.edges ==
        std::vector<std::pair<int, int>>{{1, 2}, {2, 3}});
  REQUIRE(g.chains.size() == 3);
  CHECK(g.chains.at("a@1") ==
        std::vector<std::pair<int, int>>{{1, 2}});
  CHECK(g.chains.at("b@1") ==
        std::vector<std::pair<int, int>>{{1, 2}});
  CHECK(g.chains.at("s@2") ==
        std::vector<std::pair<int, int>>{{2, 3}});
  CHECK(g.has_edge(1, 2));
  CHECK(g.has_edge(2, 3));
  CHECK_FALSE(g.has_edge(1, 3));
  CHECK_FALSE(g.has_edge(2, 1));
}

TEST_CASE("assignment right side reaches the previous definition") {
  DefUseGraph g = build_def_use(
      "void f(int q) {\n"
      "  int x = 1;\n"
      "  x = x + 1;\n"
      "}\n");
  // the read of x on line 3 links back to line 2, then the store redefines
  CHECK(g.chains.at("x@2") ==
        std::vector<std::pair<int, int>>{{2, 3}});
  CHECK(g.chains.at("q@1").empty());
  CHECK(g.nodes == std::set<int>{1, 2, 3});
}

TEST_CASE("pointer store reads the pointer and fields stay fields") {
  bool ok = false;
  auto spans = extract_identifiers(
      "void g(int *p, int q) {\n"
      "  *p = q;\n"
      "  p->f = q;\n"
      "}\n",
      &ok);
  CHECK(ok);

  const auto* p = find_span(spans, "p");
  REQUIRE(p != nullptr);
  CHECK(p->kind == IdentKind::Parameter);
  CHECK(p->def_sites == std::set<int>{1});
  CHECK(p->use_sites == std::set<int>{2, 3});

  const auto* f = find_span(spans, "f");
  REQUIRE(f != nullptr);
  CHECK(f->kind == IdentKind::Field);
  CHECK(f->def_sites.empty());
  CHECK(f->use_sites == std::set<int>{3});

  DefUseGraph g = build_def_use(spans);
  CHECK(g.chains.at("p@1") ==
        std::vector<std::pair<int, int>>{{1, 2}, {1, 3}});
  CHECK(g.chains.count("f@" + std::to_string(f->scope_id)) == 0);
}

TEST_CASE("shadowed declarations get distinct scopes") {
  bool ok = false;
  auto spans = extract_identifiers(
      "void h(void) {\n"
      "  int x = 1;\n"
      "  { int x = 2; x = 3; }\n"
      "}\n",
      &ok);
  CHECK(ok);

  std::vector<const IdentifierSpan*> xs;
  for (const auto& s : spans)
    if (s.name == "x") xs.push_back(&s);
  REQUIRE(xs.size() == 2);
  CHECK(xs[0]->scope_id != xs[1]->scope_id);
  CHECK(xs[0]->kind == IdentKind::LocalVariable);
  CHECK(xs[1]->kind == IdentKind::LocalVariable);

  const auto* outer = xs[0]->def_sites == std::set<int>{2} ? xs[0] : xs[1];
  const auto* inner = outer == xs[0] ? xs[1] : xs[0];
  CHECK(outer->def_sites == std::set<int>{2});
  CHECK(inner->def_sites == std::set<int>{3});
  CHECK(inner->use_sites.empty());

  DefUseGraph g = build_def_use(spans);
  CHECK(g.chains.size() == 2);  // two separate x chains, both without links
  for (const auto& [key, links] : g.chains) CHECK(links.empty());
}

TEST_CASE("qualified typedef-style declarations parse") {
  bool ok = false;
  auto spans = extract_identifiers(
      "int h(const size_t n, unsigned long m) {\n"
      "  const size_t k = n + 1;\n"
      "  return k + m;\n"
      "}\n",
      &ok);
  CHECK(ok);

  const auto* st = find_span(spans, "size_t");
  REQUIRE(st != nullptr);
  CHECK(st->kind == IdentKind::TypeName);
  CHECK(st->use_sites == std::set<int>{1, 2});

  const auto* n = find_span(spans, "n");
  REQUIRE(n != nullptr);
  CHECK(n->kind == IdentKind::Parameter);
  CHECK(n->def_sites == std::set<int>{1});
  CHECK(n->use_sites == std::set<int>{2});

  const auto* k = find_span(spans, "k");
  REQUIRE(k != nullptr);
  CHECK(k->kind == IdentKind::LocalVariable);
  CHECK(k->def_sites == std::set<int>{2});
  CHECK(k->use_sites == std::set<int>{3});
}

TEST_CASE("parse failure falls back to flat lexical identifiers") {
  bool ok = true;
  auto spans = extract_identifiers("int f(void) { return ((1; }\n", &ok);
  CHECK_FALSE(ok);
  REQUIRE(spans.size() == 1);
  CHECK(spans[0].name == "f");
  CHECK(spans[0].kind == IdentKind::Other);
}

TEST_CASE("tokenize adds the classification slot and maps lines") {
  Vocabulary vocab;
  vocab.ids = {{"int", 3}, {"a", 4}};
  auto tf = tokenize("int a;\nint b;\n", vocab, 64);
  CHECK(tf.tokens ==
        std::vector<int>{Vocabulary::kCls, 3, 4, Vocabulary::kUnk, 3,
                         Vocabulary::kUnk, Vocabulary::kUnk});
  CHECK(tf.token_spans[0] == std::make_pair(0, 0));
  CHECK(tf.token_spans[1] == std::make_pair(1, 1));
  CHECK(tf.line_map.at(1) == std::vector<int>{1, 2, 3});
  CHECK(tf.line_map.at(2) == std::vector<int>{4, 5, 6});
  CHECK_FALSE(tf.truncated);
}

TEST_CASE("tokenize rejects degenerate input") {
  Vocabulary vocab = empty_vocab();
  CHECK_THROWS_AS(tokenize("", vocab, 16), DegenerateInputError);
  CHECK_THROWS_AS(tokenize("  \n\t ", vocab, 16), DegenerateInputError);
  CHECK_THROWS_AS(tokenize("x", vocab, 1), ContractError);
}

TEST_CASE("truncation respects the budget and sets the flag") {
  Vocabulary vocab = empty_vocab();
  auto full = tokenize(kAddSource, vocab, 64);
  CHECK(full.tokens.size() == 22);  // 21 lexemes plus the classification slot
  CHECK_FALSE(full.truncated);

  auto cut = tokenize(kAddSource, vocab, 19);
  CHECK(cut.tokens.size() == 19);
  CHECK(cut.truncated);
}

TEST_CASE("attach shifts to token space and drops truncated occurrences") {
  Vocabulary vocab = empty_vocab();
  auto spans = extract_identifiers(kAddSource);

  auto full = tokenize(kAddSource, vocab, 64);
  attach_identifiers(full, spans);
  const auto* s = find_span(full.identifier_spans, "s");
  REQUIRE(s != nullptr);
  CHECK(s->token_indices == std::vector<int>{12, 19});
  CHECK(s->occurrences.size() == 2);

  auto cut = tokenize(kAddSource, vocab, 19);
  attach_identifiers(cut, spans);
  const auto* sc = find_span(cut.identifier_spans, "s");
  REQUIRE(sc != nullptr);
  CHECK(sc->token_indices == std::vector<int>{12});  // the use fell off
  CHECK(sc->occurrences.size() == 1);
  CHECK(sc->def_sites == std::set<int>{2});
  CHECK(sc->use_sites == std::set<int>{3});  // site bookkeeping is kept
  const auto* a = find_span(cut.identifier_spans, "a");
  REQUIRE(a != nullptr);
  CHECK(a->token_indices == std::vector<int>{5, 14});
}

TEST_CASE("perturbation targets cover locals and parameters") {
  Vocabulary vocab = empty_vocab();
  auto tf = tokenize(kAddSource, vocab, 64);
  attach_identifiers(tf, extract_identifiers(kAddSource));
  DefUseGraph g = build_def_use(tf.identifier_spans);

  auto targets = select_perturbation_targets(tf, g);
  CHECK(targets == std::vector<int>{5, 8, 12, 14, 16, 19});
  CHECK(std::find(targets.begin(), targets.end(), 0) == targets.end());
  CHECK(std::find(targets.begin(), targets.end(), 2) == targets.end());
}

TEST_CASE("targets exclude spans mutilated by truncation") {
  Vocabulary vocab = empty_vocab();
  auto tf = tokenize(kAddSource, vocab, 19);
  attach_identifiers(tf, extract_identifiers(kAddSource));
  DefUseGraph g = build_def_use(tf.identifier_spans);
  // s lost its line-3 use, so line 3 left the graph and s is skipped
  CHECK(g.nodes == std::set<int>{1, 2});
  CHECK(select_perturbation_targets(tf, g) ==
        std::vector<int>{5, 8, 14, 16});
}

TEST_CASE("attention mask follows lines and def-use edges") {
  Vocabulary vocab = empty_vocab();
  auto tf = tokenize(kAddSource, vocab, 64);
  attach_identifiers(tf, extract_identifiers(kAddSource));
  DefUseGraph g = build_def_use(tf.identifier_spans);

  AttnMask m = build_pdg_attention_mask(tf, g);
  const int T = m.T;
  REQUIRE(T == 22);
  auto at = [&](int i, int j) { return m.allow[i * T + j] != 0; };

  for (int i = 0; i < T; ++i) CHECK(at(i, i));
  for (int j = 0; j < T; ++j) {
    CHECK(at(0, j));
    CHECK(at(j, 0));
  }
  CHECK(at(1, 8));    // int .. b, both line 1
  CHECK(at(1, 11));   // line 1 defines a and b, used on line 2
  CHECK(at(12, 18));  // line 2 defines s, used on line 3
  CHECK_FALSE(at(1, 18));  // lines 1 and 3 share nothing
  CHECK_FALSE(at(18, 1));
  CHECK_FALSE(at(11, 21));  // closing brace line has no edges

  for (int i = 0; i < T; ++i)
    for (int j = 0; j < T; ++j) CHECK(at(i, j) == at(j, i));
}

TEST_CASE("padded mask rows interact only with themselves") {
  Vocabulary vocab = empty_vocab();
  auto tf = tokenize(kAddSource, vocab, 64);
  attach_identifiers(tf, extract_identifiers(kAddSource));
  DefUseGraph g = build_def_use(tf.identifier_spans);

  AttnMask m = build_pdg_attention_mask(tf, g, 30);
  REQUIRE(m.T == 30);
  for (int i = 22; i < 30; ++i) {
    int row_hits = 0;
    for (int j = 0; j < 30; ++j) {
      if (m.allow[i * 30 + j]) ++row_hits;
      CHECK(m.allow[j * 30 + i] == (i == j ? 1 : 0));
    }
    CHECK(row_hits == 1);  // diagonal only, keeping the softmax row finite
  }
}

}  // TEST_SUITE
