#include <algorithm>
#include <cassert>
#include <unordered_map>
#include <unordered_set>

#include "vulmtl/dataset.hpp"
#include "vulmtl/errors.hpp"
#include "vulmtl/syntax.hpp"

namespace vulmtl {

const char* ident_kind_name(IdentKind k) {
  switch (k) {
    case IdentKind::LocalVariable: return "local-variable";
    case IdentKind::Parameter: return "parameter";
    case IdentKind::FunctionName: return "function-name";
    case IdentKind::TypeName: return "type-name";
    case IdentKind::Field: return "field";
    case IdentKind::Other: return "other";
  }
  return "other";
}

namespace {

struct ParseFail {};

const std::unordered_set<std::string>& base_type_words() {
  static const std::unordered_set<std::string> s = {
      "void", "char", "short", "int", "long", "float", "double", "signed",
      "unsigned", "bool", "wchar_t",
  };
  return s;
}

const std::unordered_set<std::string>& qualifier_words() {
  static const std::unordered_set<std::string> s = {
      "const", "volatile", "static", "extern", "register", "inline",
      "restrict", "auto", "constexpr", "mutable",
  };
  return s;
}

const std::unordered_set<std::string>& builtin_typedefs() {
  static const std::unordered_set<std::string> s = {
      "size_t",   "ssize_t",  "ptrdiff_t", "intptr_t", "uintptr_t",
      "int8_t",   "int16_t",  "int32_t",   "int64_t",  "uint8_t",
      "uint16_t", "uint32_t", "uint64_t",  "u8",       "u16",
      "u32",      "u64",      "s8",        "s16",      "s32",
      "s64",      "uchar",    "ushort",    "uint",     "ulong",
      "FILE",     "DIR",      "time_t",    "off_t",    "pid_t",
      "uid_t",    "gid_t",    "va_list",   "byte",     "BYTE",
      "WORD",     "DWORD",    "BOOL",      "HANDLE",   "LPSTR",
      "LPCSTR",   "gchar",    "gint",      "guint",    "gboolean",
      "gsize",    "gssize",   "gpointer",  "GList",    "GSList",
  };
  return s;
}

// Central collector: spans keyed by (name, scope). Event order is the def-use
// sequencing order, not raw token order, so assignment targets can be
// committed after their right-hand side.
class Collector {
 public:
  static constexpr int kGlobalScope = 0;
  static constexpr int kFieldScope = -1;

  Collector() {
    scopes_.push_back({});  // global / unknown-name scope
    scope_ids_.push_back(kGlobalScope);
  }

  int enter_scope() {
    scopes_.push_back({});
    scope_ids_.push_back(++last_scope_);
    return last_scope_;
  }

  void exit_scope() {
    scopes_.pop_back();
    scope_ids_.pop_back();
  }

  int declare(const std::string& name, IdentKind kind, int lex, int line) {
    const int si = span_for_scope(name, scopes_.size() - 1, kind);
    record(si, lex, line, /*def=*/true, /*use=*/false);
    return si;
  }

  // Declaration that is not a definition event (typedef names, struct tags).
  int declare_silent(const std::string& name, IdentKind kind) {
    return span_for_scope(name, scopes_.size() - 1, kind);
  }

  int use_ident(const std::string& name, int lex, int line) {
    const int si = resolve(name);
    record(si, lex, line, false, true);
    return static_cast<int>(events_.size()) - 1;
  }

  void field_use(const std::string& name, int lex, int line) {
    auto it = field_spans_.find(name);
    int si;
    if (it == field_spans_.end()) {
      si = make_span(name, IdentKind::Field, kFieldScope);
      field_spans_[name] = si;
    } else {
      si = it->second;
    }
    record(si, lex, line, false, true);
  }

  void type_use(const std::string& name, int lex, int line) {
    auto it = type_spans_.find(name);
    int si;
    if (it == type_spans_.end()) {
      si = make_span(name, IdentKind::TypeName, kGlobalScope);
      type_spans_[name] = si;
    } else {
      si = it->second;
    }
    record(si, lex, line, false, true);
  }

  // Append a def event for an already-resolved span (deferred assignment
  // targets, increment operators).
  void def_event(int span_idx, int lex, int line) {
    record(span_idx, lex, line, true, false);
  }

  // Removes an earlier use event (plain assignment target: the read recorded
  // while parsing the left side never happens; a def is committed after the
  // right-hand side instead).
  void drop_event(int event_idx) {
    events_.at(static_cast<std::size_t>(event_idx)).pending = true;
  }

  int span_of_event(int event_idx) const {
    return events_.at(static_cast<std::size_t>(event_idx)).span;
  }

  IdentKind span_kind(int si) const { return spans_[si].kind; }
  void set_span_kind(int si, IdentKind k) { spans_[si].kind = k; }
  const std::string& span_name(int si) const { return spans_[si].name; }

  void register_typedef(const std::string& name) { typedefs_.insert(name); }
  bool is_typedef(const std::string& name) const {
    return typedefs_.count(name) > 0 || builtin_typedefs().count(name) > 0;
  }

  // Deferred defs keep their original textual position but sequence after the
  // events recorded in between.
  std::vector<IdentifierSpan> finalize() {
    int order = 0;
    for (std::size_t i = 0; i < events_.size(); ++i) {
      const Event& e = events_[i];
      if (e.pending) continue;
      IdentOccurrence occ;
      occ.lex_index = e.lex;
      occ.line = e.line;
      occ.is_def = e.is_def;
      occ.is_use = e.is_use;
      occ.order = order++;
      spans_[e.span].occurrences.push_back(occ);
    }
    std::vector<IdentifierSpan> out;
    for (auto& s : spans_) {
      if (s.occurrences.empty()) continue;
      for (const auto& o : s.occurrences) {
        s.token_indices.push_back(o.lex_index);
        if (o.is_def) s.def_sites.insert(o.line);
        if (o.is_use) s.use_sites.insert(o.line);
      }
      std::sort(s.token_indices.begin(), s.token_indices.end());
      s.token_indices.erase(
          std::unique(s.token_indices.begin(), s.token_indices.end()),
          s.token_indices.end());
      out.push_back(std::move(s));
    }
    return out;
  }

 private:
  struct Event {
    int span = -1;
    int lex = -1;
    int line = 0;
    bool is_def = false;
    bool is_use = false;
    bool pending = false;
  };

  int make_span(const std::string& name, IdentKind kind, int scope_id) {
    IdentifierSpan s;
    s.name = name;
    s.kind = kind;
    s.scope_id = scope_id;
    spans_.push_back(std::move(s));
    return static_cast<int>(spans_.size()) - 1;
  }

  int span_for_scope(const std::string& name, std::size_t scope_pos,
                     IdentKind kind) {
    auto& table = scopes_[scope_pos];
    auto it = table.find(name);
    if (it != table.end()) return it->second;
    const int si = make_span(name, kind, scope_ids_[scope_pos]);
    table[name] = si;
    return si;
  }

  int resolve(const std::string& name) {
    for (std::size_t i = scopes_.size(); i-- > 0;) {
      auto it = scopes_[i].find(name);
      if (it != scopes_[i].end()) return it->second;
    }
    // Unknown name: group per name at global scope with kind Other.
    return span_for_scope(name, 0, IdentKind::Other);
  }

  void record(int span, int lex, int line, bool def, bool use) {
    Event e;
    e.span = span;
    e.lex = lex;
    e.line = line;
    e.is_def = def;
    e.is_use = use;
    events_.push_back(e);
  }

  std::vector<IdentifierSpan> spans_;
  std::vector<std::unordered_map<std::string, int>> scopes_;
  std::vector<int> scope_ids_;
  std::unordered_map<std::string, int> field_spans_;
  std::unordered_map<std::string, int> type_spans_;
  std::unordered_set<std::string> typedefs_;
  std::vector<Event> events_;
  int last_scope_ = 0;
};

// Result of parsing a sub-expression, tracking whether it can serve as an
// assignment target and which identifier anchors it. def_on_store: a store
// through this lvalue (re)defines the base variable itself (x, x[i], x.f) as
// opposed to storing through a pointer (*p, p->f), which only reads it.
struct ExprInfo {
  bool pure_ident = false;  // plain `x`, possibly parenthesized
  bool has_base = false;    // x[i], x.f, *x, ...: base identifier known
  bool def_on_store = false;
  int base_event = -1;
  int base_span = -1;
  int base_lex = -1;
  int base_line = 0;
};

class Parser {
 public:
  Parser(const std::vector<Lexeme>& lx) : lx_(lx) {}

  std::vector<IdentifierSpan> run() {
    while (!eof()) {
      skip_directives();
      if (eof()) break;
      parse_external();
    }
    return col_.finalize();
  }

 private:
  const std::vector<Lexeme>& lx_;
  std::size_t pos_ = 0;
  Collector col_;

  bool eof() const { return pos_ >= lx_.size(); }
  const Lexeme& peek(std::size_t ahead = 0) const {
    if (pos_ + ahead >= lx_.size()) {
      static const Lexeme end{"", LexKind::Punct, 0, 0};
      return end;
    }
    return lx_[pos_ + ahead];
  }
  const Lexeme& advance() {
    if (eof()) throw ParseFail{};
    return lx_[pos_++];
  }
  bool at(const char* text) const { return peek().text == text; }
  bool at_kind(LexKind k) const { return !eof() && peek().kind == k; }
  void expect(const char* text) {
    if (!at(text)) throw ParseFail{};
    ++pos_;
  }
  bool accept(const char* text) {
    if (at(text)) {
      ++pos_;
      return true;
    }
    return false;
  }

  void skip_directives() {
    while (!eof() && peek().text == "#" && peek().kind == LexKind::Punct) {
      const int dline = peek().line;
      while (!eof() && peek().line == dline) ++pos_;
    }
  }

  // ---- type handling ----

  bool is_type_start(std::size_t ahead = 0) const {
    const Lexeme& t = peek(ahead);
    if (t.kind == LexKind::Keyword)
      return base_type_words().count(t.text) > 0 ||
             qualifier_words().count(t.text) > 0 || t.text == "struct" ||
             t.text == "union" || t.text == "enum" || t.text == "typedef";
    if (t.kind == LexKind::Identifier) {
      if (col_.is_typedef(t.text)) return true;
      // Two identifiers in a row: the first reads as a type.
      std::size_t j = ahead + 1;
      while (peek(j).text == "*" || peek(j).text == "const") ++j;
      return peek(j).kind == LexKind::Identifier;
    }
    return false;
  }

  // Consumes qualifiers and the base type; records type-name uses. Returns
  // false if no type token was present. Qualifiers alone never satisfy the
  // base; an identifier can only supply it while none has been seen yet.
  bool parse_type_prefix() {
    bool any = false;
    bool base_seen = false;
    for (;;) {
      const Lexeme& t = peek();
      if (t.kind == LexKind::Keyword && qualifier_words().count(t.text)) {
        ++pos_;
        any = true;
        continue;
      }
      if (t.kind == LexKind::Keyword && base_type_words().count(t.text)) {
        ++pos_;
        any = true;
        base_seen = true;
        continue;
      }
      if (t.kind == LexKind::Keyword &&
          (t.text == "struct" || t.text == "union" || t.text == "enum")) {
        ++pos_;
        any = true;
        base_seen = true;
        if (at_kind(LexKind::Identifier)) {
          col_.type_use(peek().text, static_cast<int>(pos_), peek().line);
          ++pos_;
        }
        if (at("{")) parse_aggregate_body(t.text == "enum");
        continue;
      }
      if (t.kind == LexKind::Identifier && !base_seen &&
          col_.is_typedef(t.text)) {
        col_.type_use(t.text, static_cast<int>(pos_), t.line);
        ++pos_;
        any = true;
        base_seen = true;
        continue;
      }
      if (t.kind == LexKind::Identifier && !base_seen) {
        // "Foo bar" heuristic.
        std::size_t j = 1;
        while (peek(j).text == "*" || peek(j).text == "const") ++j;
        if (peek(j).kind == LexKind::Identifier) {
          col_.type_use(t.text, static_cast<int>(pos_), t.line);
          ++pos_;
          any = true;
          base_seen = true;
          continue;
        }
      }
      break;
    }
    while (at("*") || at("const")) ++pos_;
    return any;
  }

  // struct/union body: members become fields; enum body: names become Other.
  void parse_aggregate_body(bool is_enum) {
    expect("{");
    if (is_enum) {
      while (!at("}")) {
        if (eof()) throw ParseFail{};
        if (at_kind(LexKind::Identifier)) {
          // enumerators are constants, grouped as Other at global scope
          col_.use_ident(peek().text, static_cast<int>(pos_), peek().line);
          ++pos_;
        }
        if (accept("=")) parse_assignment();
        if (!accept(",") && !at("}")) throw ParseFail{};
      }
      expect("}");
      return;
    }
    while (!at("}")) {
      if (eof()) throw ParseFail{};
      if (!parse_type_prefix()) throw ParseFail{};
      for (;;) {
        while (at("*") || at("const")) ++pos_;
        if (!at_kind(LexKind::Identifier)) throw ParseFail{};
        col_.field_use(peek().text, static_cast<int>(pos_), peek().line);
        ++pos_;
        while (at("[")) {
          ++pos_;
          if (!at("]")) parse_expression();
          expect("]");
        }
        if (accept(":")) parse_assignment();  // bitfield width
        if (!accept(",")) break;
      }
      expect(";");
    }
    expect("}");
  }

  // ---- externals ----

  void parse_external() {
    if (accept(";")) return;
    if (at("}")) throw ParseFail{};
    if (at("typedef")) {
      parse_typedef();
      return;
    }
    if (looks_like_function()) {
      parse_function();
      return;
    }
    parse_statement();
  }

  void parse_typedef() {
    expect("typedef");
    parse_type_prefix();
    // declarator chain; last identifier of each declarator names the type
    for (;;) {
      while (at("*") || at("const")) ++pos_;
      if (!at_kind(LexKind::Identifier)) throw ParseFail{};
      const std::string name = peek().text;
      col_.register_typedef(name);
      col_.declare_silent(name, IdentKind::TypeName);
      col_.type_use(name, static_cast<int>(pos_), peek().line);
      ++pos_;
      while (at("[")) {
        ++pos_;
        if (!at("]")) parse_expression();
        expect("]");
      }
      if (!accept(",")) break;
    }
    expect(";");
  }

  // Lookahead: [type tokens] ident '(' ... ')' then '{' or ';'.
  bool looks_like_function() {
    const std::size_t save = pos_;
    bool ok = false;
    try {
      parse_type_prefix_silent();
      if (at_kind(LexKind::Identifier)) {
        std::size_t p = pos_ + 1;
        if (p < lx_.size() && lx_[p].text == "(") {
          int depth = 0;
          while (p < lx_.size()) {
            if (lx_[p].text == "(") ++depth;
            if (lx_[p].text == ")") {
              --depth;
              if (depth == 0) break;
            }
            ++p;
          }
          if (p < lx_.size()) {
            ++p;
            while (p < lx_.size() && (lx_[p].kind == LexKind::Keyword &&
                                      qualifier_words().count(lx_[p].text)))
              ++p;
            ok = p < lx_.size() && lx_[p].text == "{";
          }
        }
      }
    } catch (ParseFail&) {
      ok = false;
    }
    pos_ = save;
    return ok;
  }

  // Type-prefix scan without recording anything (pure lookahead). Returns
  // whether an actual type token was seen; a bare `*` consumed by the
  // declarator tail does not count. Must mirror parse_type_prefix.
  bool parse_type_prefix_silent() {
    bool any = false;
    bool base_seen = false;
    for (;;) {
      const Lexeme& t = peek();
      if (t.kind == LexKind::Keyword && qualifier_words().count(t.text)) {
        ++pos_;
        any = true;
        continue;
      }
      if (t.kind == LexKind::Keyword && base_type_words().count(t.text)) {
        ++pos_;
        any = true;
        base_seen = true;
        continue;
      }
      if (t.kind == LexKind::Keyword &&
          (t.text == "struct" || t.text == "union" || t.text == "enum")) {
        ++pos_;
        any = true;
        base_seen = true;
        if (at_kind(LexKind::Identifier)) ++pos_;
        if (at("{")) {  // aggregate body: skip balanced
          int depth = 0;
          do {
            if (eof()) throw ParseFail{};
            if (at("{")) ++depth;
            if (at("}")) --depth;
            ++pos_;
          } while (depth > 0);
        }
        continue;
      }
      if (t.kind == LexKind::Identifier && !base_seen) {
        std::size_t j = 1;
        while (peek(j).text == "*" || peek(j).text == "const") ++j;
        if (peek(j).kind == LexKind::Identifier || col_.is_typedef(t.text)) {
          ++pos_;
          any = true;
          base_seen = true;
          continue;
        }
      }
      break;
    }
    while (at("*") || at("const")) ++pos_;
    return any;
  }

  void parse_function() {
    parse_type_prefix();
    if (!at_kind(LexKind::Identifier)) throw ParseFail{};
    col_.declare(peek().text, IdentKind::FunctionName, static_cast<int>(pos_),
                 peek().line);
    ++pos_;
    expect("(");
    col_.enter_scope();
    if (!at(")")) {
      if (at("void") && peek(1).text == ")") {
        ++pos_;
      } else {
        for (;;) {
          if (at("...")) {
            ++pos_;
            break;
          }
          parse_type_prefix();
          while (at("*") || at("const")) ++pos_;
          if (at_kind(LexKind::Identifier)) {
            col_.declare(peek().text, IdentKind::Parameter,
                         static_cast<int>(pos_), peek().line);
            ++pos_;
            while (at("[")) {
              ++pos_;
              if (!at("]")) parse_expression();
              expect("]");
            }
          }
          if (!accept(",")) break;
        }
      }
    }
    expect(")");
    while (at_kind(LexKind::Keyword) && qualifier_words().count(peek().text))
      ++pos_;
    if (at("{")) {
      parse_compound();
    } else {
      expect(";");
    }
    col_.exit_scope();
  }

  // ---- statements ----

  void parse_compound() {
    expect("{");
    col_.enter_scope();
    while (!at("}")) {
      if (eof()) throw ParseFail{};
      skip_directives();
      if (at("}")) break;
      parse_statement();
    }
    expect("}");
    col_.exit_scope();
  }

  void parse_statement() {
    skip_directives();
    if (eof()) return;
    if (accept(";")) return;
    if (at("{")) {
      parse_compound();
      return;
    }
    const Lexeme& t = peek();
    if (t.kind == LexKind::Keyword) {
      if (t.text == "if") {
        ++pos_;
        expect("(");
        parse_expression();
        expect(")");
        parse_statement();
        if (accept("else")) parse_statement();
        return;
      }
      if (t.text == "while") {
        ++pos_;
        expect("(");
        parse_expression();
        expect(")");
        parse_statement();
        return;
      }
      if (t.text == "do") {
        ++pos_;
        parse_statement();
        expect("while");
        expect("(");
        parse_expression();
        expect(")");
        expect(";");
        return;
      }
      if (t.text == "for") {
        ++pos_;
        expect("(");
        col_.enter_scope();
        if (!at(";")) {
          if (is_declaration_ahead())
            parse_declaration(IdentKind::LocalVariable);
          else {
            parse_expression();
            expect(";");
          }
        } else {
          expect(";");
        }
        if (!at(";")) parse_expression();
        expect(";");
        if (!at(")")) parse_expression();
        expect(")");
        parse_statement();
        col_.exit_scope();
        return;
      }
      if (t.text == "return") {
        ++pos_;
        if (!at(";")) parse_expression();
        expect(";");
        return;
      }
      if (t.text == "switch") {
        ++pos_;
        expect("(");
        parse_expression();
        expect(")");
        parse_statement();
        return;
      }
      if (t.text == "case") {
        ++pos_;
        parse_conditional_only();
        expect(":");
        return;
      }
      if (t.text == "default") {
        ++pos_;
        expect(":");
        return;
      }
      if (t.text == "break" || t.text == "continue") {
        ++pos_;
        expect(";");
        return;
      }
      if (t.text == "goto") {
        ++pos_;
        if (at_kind(LexKind::Identifier)) ++pos_;  // label namespace
        expect(";");
        return;
      }
      if (t.text == "typedef") {
        parse_typedef();
        return;
      }
      if (t.text == "sizeof" || t.text == "true" || t.text == "false" ||
          t.text == "NULL" || t.text == "nullptr" || t.text == "this" ||
          t.text == "new" || t.text == "delete") {
        parse_expression();
        expect(";");
        return;
      }
      // type keywords fall through to the declaration path below
    }
    // label: `name:` at statement start (but not `name::...`)
    if (t.kind == LexKind::Identifier && peek(1).text == ":" &&
        peek(2).text != ":") {
      pos_ += 2;
      parse_statement();
      return;
    }
    if (is_declaration_ahead()) {
      parse_declaration(IdentKind::LocalVariable);
      return;
    }
    parse_expression();
    expect(";");
  }

  bool is_declaration_ahead() {
    const std::size_t save = pos_;
    bool ok = false;
    try {
      if (parse_type_prefix_silent())
        // plain declarator, bare aggregate definition, or function pointer
        ok = at_kind(LexKind::Identifier) || at(";") || at("(");
    } catch (ParseFail&) {
      ok = false;
    }
    pos_ = save;
    return ok;
  }

  void parse_declaration(IdentKind kind) {
    if (!parse_type_prefix()) throw ParseFail{};
    if (accept(";")) return;  // bare struct/enum definition
    for (;;) {
      while (at("*") || at("const")) ++pos_;
      if (accept("(")) {
        // function-pointer declarator: (*name)(args)
        while (at("*")) ++pos_;
        if (!at_kind(LexKind::Identifier)) throw ParseFail{};
        col_.declare(peek().text, kind, static_cast<int>(pos_), peek().line);
        ++pos_;
        expect(")");
        if (accept("(")) {
          int depth = 1;
          while (depth > 0) {
            if (eof()) throw ParseFail{};
            if (at("(")) ++depth;
            if (at(")")) --depth;
            ++pos_;
          }
        }
      } else {
        if (!at_kind(LexKind::Identifier)) throw ParseFail{};
        col_.declare(peek().text, kind, static_cast<int>(pos_), peek().line);
        ++pos_;
      }
      while (at("[")) {
        ++pos_;
        if (!at("]")) parse_expression();
        expect("]");
      }
      if (accept("=")) parse_assignment();
      if (!accept(",")) break;
    }
    expect(";");
  }

  // ---- expressions ----

  void parse_expression() {
    parse_assignment();
    while (accept(",")) parse_assignment();
  }

  // Conditional without assignment (case labels, array bounds).
  void parse_conditional_only() { parse_conditional(); }

  bool at_assign_op() const {
    const std::string& s = peek().text;
    return s == "=" || s == "+=" || s == "-=" || s == "*=" || s == "/=" ||
           s == "%=" || s == "&=" || s == "|=" || s == "^=" || s == "<<=" ||
           s == ">>=";
  }

  ExprInfo parse_assignment() {
    ExprInfo lhs = parse_conditional();
    if (at_assign_op()) {
      const bool plain = at("=");
      ++pos_;
      if (plain && lhs.pure_ident && lhs.base_event >= 0) {
        // pure overwrite: the left side is not a read
        col_.drop_event(lhs.base_event);
      }
      parse_assignment();
      // the def sequences after the right-hand side, so in `x = x + 1` the
      // read on the right reaches the previous definition
      if (lhs.base_span >= 0 && lhs.def_on_store)
        col_.def_event(lhs.base_span, lhs.base_lex, lhs.base_line);
      return {};
    }
    return lhs;
  }

  ExprInfo parse_conditional() {
    ExprInfo c = parse_binary(0);
    if (accept("?")) {
      parse_expression();
      expect(":");
      parse_conditional();
      return {};
    }
    return c;
  }

  struct OpLevel {
    std::vector<const char*> ops;
  };

  static const std::vector<OpLevel>& levels() {
    static const std::vector<OpLevel> ls = {
        {{"||"}},
        {{"&&"}},
        {{"|"}},
        {{"^"}},
        {{"&"}},
        {{"==", "!="}},
        {{"<", ">", "<=", ">="}},
        {{"<<", ">>"}},
        {{"+", "-"}},
        {{"*", "/", "%"}},
    };
    return ls;
  }

  ExprInfo parse_binary(std::size_t level) {
    if (level >= levels().size()) return parse_unary();
    ExprInfo lhs = parse_binary(level + 1);
    bool took = false;
    for (;;) {
      bool matched = false;
      for (const char* op : levels()[level].ops) {
        if (at(op)) {
          ++pos_;
          parse_binary(level + 1);
          matched = true;
          took = true;
          break;
        }
      }
      if (!matched) break;
    }
    return took ? ExprInfo{} : lhs;
  }

  ExprInfo parse_unary() {
    if (at("++") || at("--")) {
      ++pos_;
      ExprInfo e = parse_unary();
      if (e.base_span >= 0 && e.def_on_store)
        col_.def_event(e.base_span, e.base_lex, e.base_line);
      return e;
    }
    if (at("sizeof")) {
      ++pos_;
      if (at("(")) {
        const std::size_t save = pos_;
        ++pos_;
        if (is_type_only_until_paren()) {
          parse_type_prefix();
          expect(")");
          return {};
        }
        pos_ = save;
      }
      parse_unary();
      return {};
    }
    if (at("*")) {
      ++pos_;
      ExprInfo e = parse_unary();
      ExprInfo r;
      r.has_base = e.has_base || e.pure_ident;
      r.def_on_store = false;  // store goes through the pointee
      r.base_span = e.base_span;
      r.base_lex = e.base_lex;
      r.base_line = e.base_line;
      return r;
    }
    if (at("&") || at("!") || at("~") || at("+") || at("-")) {
      ++pos_;
      parse_unary();
      return {};
    }
    if (at("new")) {
      ++pos_;
      parse_type_prefix();
      if (at("[")) {
        ++pos_;
        if (!at("]")) parse_expression();
        expect("]");
      }
      if (at("(")) {
        ++pos_;
        if (!at(")")) {
          parse_assignment();
          while (accept(",")) parse_assignment();
        }
        expect(")");
      }
      return {};
    }
    if (at("delete")) {
      ++pos_;
      if (at("[")) {
        ++pos_;
        expect("]");
      }
      parse_unary();
      return {};
    }
    return parse_postfix();
  }

  // After '(' already consumed: true if the tokens up to the matching ')'
  // look like a pure type (cast / sizeof(type)).
  bool is_type_only_until_paren() {
    const std::size_t save = pos_;
    bool ok = false;
    try {
      ok = parse_type_prefix_silent() && at(")");
    } catch (ParseFail&) {
      ok = false;
    }
    pos_ = save;
    return ok;
  }

  ExprInfo parse_postfix() {
    ExprInfo e = parse_primary();
    for (;;) {
      if (at("(")) {
        // call: upgrade unknown bases to function names
        if (e.pure_ident && e.base_span >= 0) {
          const IdentKind k = col_.span_kind(e.base_span);
          if (k == IdentKind::Other) {
            col_.set_span_kind(e.base_span, IdentKind::FunctionName);
          }
        }
        ++pos_;
        if (!at(")")) {
          parse_assignment();
          while (accept(",")) parse_assignment();
        }
        expect(")");
        e = {};
        continue;
      }
      if (at("[")) {
        ++pos_;
        parse_expression();
        expect("]");
        ExprInfo r;
        r.has_base = e.pure_ident || e.has_base;
        r.def_on_store = e.pure_ident || e.def_on_store;
        r.base_span = e.base_span;
        r.base_lex = e.base_lex;
        r.base_line = e.base_line;
        e = r;
        continue;
      }
      if (at(".") || at("->")) {
        const bool through_pointer = at("->");
        ++pos_;
        if (!at_kind(LexKind::Identifier)) throw ParseFail{};
        col_.field_use(peek().text, static_cast<int>(pos_), peek().line);
        ++pos_;
        ExprInfo r;
        r.has_base = e.pure_ident || e.has_base;
        r.def_on_store =
            !through_pointer && (e.pure_ident || e.def_on_store);
        r.base_span = e.base_span;
        r.base_lex = e.base_lex;
        r.base_line = e.base_line;
        e = r;
        continue;
      }
      if (at("++") || at("--")) {
        ++pos_;
        if (e.base_span >= 0 && (e.pure_ident || e.def_on_store))
          col_.def_event(e.base_span, e.base_lex, e.base_line);
        e = {};
        continue;
      }
      break;
    }
    return e;
  }

  ExprInfo parse_primary() {
    const Lexeme& t = peek();
    if (t.kind == LexKind::Identifier) {
      ExprInfo e;
      e.pure_ident = true;
      e.def_on_store = true;
      e.base_lex = static_cast<int>(pos_);
      e.base_line = t.line;
      e.base_event = col_.use_ident(t.text, e.base_lex, t.line);
      e.base_span = col_.span_of_event(e.base_event);
      ++pos_;
      return e;
    }
    if (t.kind == LexKind::Number || t.kind == LexKind::String ||
        t.kind == LexKind::CharLit) {
      ++pos_;
      // adjacent string literals concatenate
      while (at_kind(LexKind::String)) ++pos_;
      return {};
    }
    if (t.kind == LexKind::Keyword &&
        (t.text == "true" || t.text == "false" || t.text == "NULL" ||
         t.text == "nullptr" || t.text == "this")) {
      ++pos_;
      return {};
    }
    if (at("(")) {
      ++pos_;
      if (is_type_only_until_paren()) {
        parse_type_prefix();
        expect(")");
        parse_unary();  // cast operand
        return {};
      }
      ExprInfo inner = parse_expression_info();
      expect(")");
      return inner;
    }
    throw ParseFail{};
  }

  // Like parse_expression but keeps the lvalue info of a single expression.
  ExprInfo parse_expression_info() {
    ExprInfo e = parse_assignment();
    while (accept(",")) {
      parse_assignment();
      e = {};
    }
    return e;
  }
};

}  // namespace

std::vector<IdentifierSpan> extract_identifiers(const std::string& source,
                                                bool* parsed_ok) {
  const std::vector<Lexeme> lx = lex(source);
  try {
    Parser p(lx);
    auto spans = p.run();
    if (parsed_ok) *parsed_ok = true;
    return spans;
  } catch (ParseFail&) {
  } catch (std::exception&) {
  }
  // Lexical fallback: every non-keyword identifier, grouped by name, kind
  // Other, every occurrence a use.
  if (parsed_ok) *parsed_ok = false;
  std::map<std::string, IdentifierSpan> by_name;
  int order = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    if (lx[i].kind != LexKind::Identifier) continue;
    auto& s = by_name[lx[i].text];
    if (s.name.empty()) {
      s.name = lx[i].text;
      s.kind = IdentKind::Other;
      s.scope_id = 0;
    }
    s.token_indices.push_back(static_cast<int>(i));
    s.use_sites.insert(lx[i].line);
    IdentOccurrence occ;
    occ.lex_index = static_cast<int>(i);
    occ.line = lx[i].line;
    occ.is_use = true;
    occ.order = order++;
    s.occurrences.push_back(occ);
  }
  std::vector<IdentifierSpan> out;
  out.reserve(by_name.size());
  for (auto& [name, s] : by_name) out.push_back(std::move(s));
  return out;
}

TokenizedFunction tokenize(const std::string& source, const Vocabulary& vocab,
                           int max_len) {
  if (max_len < 2) throw ContractError("tokenize: max_len must be at least 2");
  bool blank = true;
  for (char c : source)
    if (!std::isspace(static_cast<unsigned char>(c))) {
      blank = false;
      break;
    }
  if (blank) throw DegenerateInputError("tokenize: empty source");
  const std::vector<Lexeme> lx = lex(source);
  if (lx.empty()) throw DegenerateInputError("tokenize: no tokens in source");

  TokenizedFunction tf;
  tf.tokens.push_back(Vocabulary::kCls);
  tf.token_spans.emplace_back(0, 0);
  const std::size_t keep =
      std::min(lx.size(), static_cast<std::size_t>(max_len - 1));
  tf.truncated = keep < lx.size();
  for (std::size_t i = 0; i < keep; ++i) {
    tf.tokens.push_back(vocab.lookup(lx[i].text));
    tf.token_spans.emplace_back(lx[i].line, lx[i].col);
    tf.line_map[lx[i].line].push_back(static_cast<int>(i) + 1);
  }
  return tf;
}

void attach_identifiers(TokenizedFunction& tf,
                        const std::vector<IdentifierSpan>& spans) {
  const int limit = static_cast<int>(tf.tokens.size());
  tf.identifier_spans.clear();
  for (const auto& s : spans) {
    IdentifierSpan t = s;
    t.token_indices.clear();
    for (int ix : s.token_indices)
      if (ix + 1 < limit) t.token_indices.push_back(ix + 1);
    std::vector<IdentOccurrence> occ;
    for (const auto& o : s.occurrences) {
      if (o.lex_index + 1 >= limit) continue;
      IdentOccurrence shifted = o;
      shifted.lex_index = o.lex_index + 1;
      occ.push_back(shifted);
    }
    t.occurrences = std::move(occ);
    if (!t.token_indices.empty()) tf.identifier_spans.push_back(std::move(t));
  }
}

}  // namespace vulmtl
