#include "vulmtl/lexer.hpp"

#include <array>
#include <cctype>
#include <unordered_set>

namespace vulmtl {

namespace {

const std::unordered_set<std::string>& keyword_table() {
  static const std::unordered_set<std::string> kw = {
      "auto",     "break",    "case",     "char",     "const",    "continue",
      "default",  "do",       "double",   "else",     "enum",     "extern",
      "float",    "for",      "goto",     "if",       "inline",   "int",
      "long",     "register", "restrict", "return",   "short",    "signed",
      "sizeof",   "static",   "struct",   "switch",   "typedef",  "union",
      "unsigned", "void",     "volatile", "while",    "bool",     "true",
      "false",    "class",    "namespace","new",      "delete",   "nullptr",
      "NULL",     "public",   "private",  "protected","template", "typename",
      "using",    "virtual",  "this",     "operator", "throw",    "try",
      "catch",    "const_cast","static_cast","dynamic_cast","reinterpret_cast",
      "wchar_t",  "explicit", "friend",   "mutable",  "noexcept", "constexpr",
  };
  return kw;
}

// Multi-character operators, longest first so maximal munch works by probing
// in order.
const std::array<const char*, 23> kMultiOps = {
    "<<=", ">>=", "...", "->",  "++", "--", "<<", ">>", "<=", ">=", "==", "!=",
    "&&",  "||",  "+=",  "-=",  "*=", "/=", "%=", "&=", "|=", "^=", "::",
};

bool ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}

bool ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

}  // namespace

bool is_c_keyword(const std::string& word) {
  return keyword_table().count(word) > 0;
}

std::vector<Lexeme> lex(std::string_view src) {
  std::vector<Lexeme> out;
  int line = 1, col = 1;
  std::size_t i = 0;
  const std::size_t n = src.size();

  auto advance = [&](std::size_t count) {
    for (std::size_t k = 0; k < count && i < n; ++k, ++i) {
      if (src[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
  };

  while (i < n) {
    const char c = src[i];
    if (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' ||
        c == '\v') {
      advance(1);
      continue;
    }
    // Comments.
    if (c == '/' && i + 1 < n && src[i + 1] == '/') {
      while (i < n && src[i] != '\n') advance(1);
      continue;
    }
    if (c == '/' && i + 1 < n && src[i + 1] == '*') {
      advance(2);
      while (i < n && !(src[i] == '*' && i + 1 < n && src[i + 1] == '/'))
        advance(1);
      advance(2);
      continue;
    }
    const int tl = line, tc = col;
    // Identifiers / keywords.
    if (ident_start(c)) {
      std::size_t j = i;
      while (j < n && ident_char(src[j])) ++j;
      std::string word(src.substr(i, j - i));
      advance(j - i);
      const LexKind kind =
          is_c_keyword(word) ? LexKind::Keyword : LexKind::Identifier;
      out.push_back({std::move(word), kind, tl, tc});
      continue;
    }
    // Numbers (ints, floats, hex; suffixes folded into the token).
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && i + 1 < n &&
         std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
      std::size_t j = i;
      bool hex = false;
      if (src[j] == '0' && j + 1 < n && (src[j + 1] == 'x' || src[j + 1] == 'X')) {
        hex = true;
        j += 2;
        while (j < n && std::isxdigit(static_cast<unsigned char>(src[j]))) ++j;
      } else {
        while (j < n && (std::isdigit(static_cast<unsigned char>(src[j])) ||
                         src[j] == '.'))
          ++j;
        if (j < n && (src[j] == 'e' || src[j] == 'E')) {
          std::size_t k = j + 1;
          if (k < n && (src[k] == '+' || src[k] == '-')) ++k;
          if (k < n && std::isdigit(static_cast<unsigned char>(src[k]))) {
            j = k;
            while (j < n && std::isdigit(static_cast<unsigned char>(src[j])))
              ++j;
          }
        }
      }
      (void)hex;
      while (j < n && (src[j] == 'u' || src[j] == 'U' || src[j] == 'l' ||
                       src[j] == 'L' || src[j] == 'f' || src[j] == 'F'))
        ++j;
      std::string num(src.substr(i, j - i));
      advance(j - i);
      out.push_back({std::move(num), LexKind::Number, tl, tc});
      continue;
    }
    // String / char literals. Unterminated ones close at end of line.
    if (c == '"' || c == '\'') {
      const char q = c;
      std::size_t j = i + 1;
      while (j < n && src[j] != q && src[j] != '\n') {
        if (src[j] == '\\' && j + 1 < n) ++j;
        ++j;
      }
      if (j < n && src[j] == q) ++j;
      std::string lit(src.substr(i, j - i));
      advance(j - i);
      out.push_back({std::move(lit),
                     q == '"' ? LexKind::String : LexKind::CharLit, tl, tc});
      continue;
    }
    // Multi-char operators.
    bool matched = false;
    for (const char* op : kMultiOps) {
      const std::size_t len = std::char_traits<char>::length(op);
      if (src.substr(i, len) == op) {
        advance(len);
        out.push_back({op, LexKind::Operator, tl, tc});
        matched = true;
        break;
      }
    }
    if (matched) continue;
    static const std::string single_ops = "+-*/%<>=!&|^~?:";
    if (single_ops.find(c) != std::string::npos) {
      advance(1);
      out.push_back({std::string(1, c), LexKind::Operator, tl, tc});
      continue;
    }
    // Everything else, including braces, brackets, ';', ',', '.', '#'.
    advance(1);
    out.push_back({std::string(1, c), LexKind::Punct, tl, tc});
  }
  return out;
}

}  // namespace vulmtl
