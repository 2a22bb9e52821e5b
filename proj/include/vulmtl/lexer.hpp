#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace vulmtl {

enum class LexKind {
  Identifier,
  Keyword,
  Number,
  String,
  CharLit,
  Operator,
  Punct,
};

struct Lexeme {
  std::string text;
  LexKind kind = LexKind::Punct;
  int line = 0;  // 1-based
  int col = 0;   // 1-based
};

// Deterministic C-family lexer. Comments and whitespace are skipped; string
// and char literals keep their quotes; unterminated literals close at end of
// line. Never throws on messy input: anything unrecognized becomes a
// single-character Punct token.
std::vector<Lexeme> lex(std::string_view source);

bool is_c_keyword(const std::string& word);

}  // namespace vulmtl
