#include "vulmtl/syntax.hpp"

#include <algorithm>
#include <set>

namespace vulmtl {

// Reaching definitions, one chain per declared name. Occurrences carry the
// order the parser assigned while walking, so after sorting by it a linear
// sweep suffices: a use links back to the most recent prior def.
DefUseGraph build_def_use(const std::vector<IdentifierSpan>& spans) {
  DefUseGraph g;
  std::set<std::pair<int, int>> edge_set;

  for (const auto& span : spans) {
    if (span.kind != IdentKind::LocalVariable &&
        span.kind != IdentKind::Parameter)
      continue;

    auto occs = span.occurrences;
    std::sort(occs.begin(), occs.end(),
              [](const IdentOccurrence& a, const IdentOccurrence& b) {
                return a.order < b.order;
              });

    std::vector<std::pair<int, int>> links;
    int current_def = -1;
    for (const auto& occ : occs) {
      g.nodes.insert(occ.line);
      if (occ.is_use && current_def >= 0 && current_def != occ.line)
        links.push_back({current_def, occ.line});
      if (occ.is_def) current_def = occ.line;
    }
    edge_set.insert(links.begin(), links.end());
    if (!occs.empty())
      g.chains[span.name + "@" + std::to_string(span.scope_id)] =
          std::move(links);
  }

  g.edges.assign(edge_set.begin(), edge_set.end());
  return g;
}

DefUseGraph build_def_use(const std::string& source) {
  return build_def_use(extract_identifiers(source));
}

bool DefUseGraph::has_edge(int from, int to) const {
  return std::binary_search(edges.begin(), edges.end(),
                            std::make_pair(from, to));
}

std::vector<int> select_perturbation_targets(const TokenizedFunction& tf,
                                             const DefUseGraph& graph) {
  std::set<int> picked;
  for (const auto& span : tf.identifier_spans) {
    if (span.kind != IdentKind::LocalVariable &&
        span.kind != IdentKind::Parameter)
      continue;
    if (span.occurrences.empty()) continue;

    // every def/use site must be a line the graph knows about; a span half
    // lost to truncation fails this and stays untouched
    bool covered = true;
    for (int line : span.def_sites)
      if (!graph.nodes.count(line)) { covered = false; break; }
    if (covered)
      for (int line : span.use_sites)
        if (!graph.nodes.count(line)) { covered = false; break; }
    if (!covered) continue;

    for (int ix : span.token_indices)
      if (ix > 0 && ix < static_cast<int>(tf.tokens.size())) picked.insert(ix);
  }
  return {picked.begin(), picked.end()};
}

AttnMask build_pdg_attention_mask(const TokenizedFunction& tf,
                                  const DefUseGraph& graph, int T_padded) {
  const int real = static_cast<int>(tf.tokens.size());
  const int T = T_padded >= 0 ? T_padded : real;

  AttnMask mask;
  mask.T = T;
  mask.allow.assign(static_cast<std::size_t>(T) * T, 0);

  // symmetric relation over lines: a def-use edge in either direction
  std::set<std::pair<int, int>> rel;
  for (const auto& e : graph.edges) {
    rel.insert(e);
    rel.insert({e.second, e.first});
  }

  for (int i = 0; i < T; ++i) {
    for (int j = 0; j < T; ++j) {
      bool ok;
      if (i == j) {
        ok = true;  // pads self-attend too, keeping every softmax row finite
      } else if (i >= real || j >= real) {
        ok = false;
      } else if (i == 0 || j == 0) {
        ok = true;  // classification slot sees and is seen by everything
      } else {
        const int li = tf.token_spans[i].first;
        const int lj = tf.token_spans[j].first;
        ok = li == lj || rel.count({li, lj}) != 0;
      }
      mask.allow[static_cast<std::size_t>(i) * T + j] = ok ? 1 : 0;
    }
  }
  return mask;
}

}  // namespace vulmtl
