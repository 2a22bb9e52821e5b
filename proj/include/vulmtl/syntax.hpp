#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "vulmtl/lexer.hpp"

namespace vulmtl {

struct Vocabulary;

enum class IdentKind {
  LocalVariable,
  Parameter,
  FunctionName,
  TypeName,
  Field,
  Other,
};

const char* ident_kind_name(IdentKind k);

// One def/use event of an identifier, ordered by the parser so that the
// right-hand side of an assignment sequences before the definition it feeds
// (in "x = x + 1" the read of x reaches the previous definition).
struct IdentOccurrence {
  int lex_index = -1;  // index into the raw lexeme stream
  int line = 0;
  bool is_def = false;
  bool is_use = false;
  int order = 0;
};

// All occurrences of one identifier within one declaration scope.
struct IdentifierSpan {
  std::string name;
  IdentKind kind = IdentKind::Other;
  int scope_id = 0;
  std::vector<int> token_indices;  // strictly increasing lexeme indices
  std::set<int> def_sites;         // line numbers
  std::set<int> use_sites;
  std::vector<IdentOccurrence> occurrences;  // sorted by order
};

// Tokenized model input. tokens[0] is always the reserved classification
// token; source tokens follow, truncated so the whole sequence stays within
// the configured length budget.
struct TokenizedFunction {
  std::string sample_id;
  std::vector<int> tokens;                        // vocab ids
  std::vector<std::pair<int, int>> token_spans;   // (line, col); slot 0 = (0,0)
  std::map<int, std::vector<int>> line_map;       // line -> token indices
  std::vector<IdentifierSpan> identifier_spans;   // indices in token space
  int cwe_label = -1;
  std::set<int> vuln_lines;
  bool truncated = false;
  bool parse_fallback = false;
};

// Reaching def->use edges between line numbers, per identifier chain.
struct DefUseGraph {
  std::set<int> nodes;  // every line holding a def or use
  // chain key: "name@scope_id"
  std::map<std::string, std::vector<std::pair<int, int>>> chains;
  std::vector<std::pair<int, int>> edges;  // union, deduplicated, sorted

  bool has_edge(int from, int to) const;
};

// Boolean attention visibility, row-major T x T; allow[i*T+j] means query i
// may attend key j.
struct AttnMask {
  int T = 0;
  std::vector<std::uint8_t> allow;
};

// Lexes source and maps tokens through the vocabulary; max_len caps the total
// sequence including the classification slot. Empty or whitespace-only source
// is a degenerate input.
TokenizedFunction tokenize(const std::string& source, const Vocabulary& vocab,
                           int max_len);

// Parses the C-family subset and groups identifier occurrences by
// (name, scope); on parse failure falls back to flat lexical detection with
// kind Other. Indices are raw lexeme indices (shift by +1 to token space).
std::vector<IdentifierSpan> extract_identifiers(const std::string& source,
                                                bool* parsed_ok = nullptr);

// Attaches spans to a tokenized function, shifting to token space and
// dropping occurrences lost to truncation.
void attach_identifiers(TokenizedFunction& tf,
                        const std::vector<IdentifierSpan>& spans);

DefUseGraph build_def_use(const std::vector<IdentifierSpan>& spans);

// Convenience: extract identifiers (with lexical fallback) and build.
DefUseGraph build_def_use(const std::string& source);

// Token positions eligible for embedding perturbation: local variables and
// parameters whose def/use sites all lie inside the function's graph. Sorted,
// unique, never the classification slot.
std::vector<int> select_perturbation_targets(const TokenizedFunction& tf,
                                             const DefUseGraph& graph);

// Dependency-structured attention visibility over the (optionally padded)
// token sequence: true iff same line, def-use related lines, or either side is
// the classification slot. Padding interacts with nothing; the diagonal is
// always true so no attention row is fully masked. T_padded < 0 uses the
// unpadded length.
AttnMask build_pdg_attention_mask(const TokenizedFunction& tf,
                                  const DefUseGraph& graph, int T_padded = -1);

}  // namespace vulmtl
