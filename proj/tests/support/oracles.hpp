#pragma once

// Brute-force ranking metrics, written independently of the library: the
// order comes from repeated selection rather than a sort, every metric is a
// direct transcription of its definition, and nothing here shares code with
// src/. Exact agreement is the contract.

#include <cmath>
#include <set>
#include <utility>
#include <vector>

namespace testsupport {

// Highest probability first; equal probabilities resolve to the smaller
// line number. O(n^2) selection.
inline std::vector<int> brute_rank(
    std::vector<std::pair<int, double>> lines) {
  std::vector<int> order;
  while (!lines.empty()) {
    std::size_t pick = 0;
    for (std::size_t i = 1; i < lines.size(); ++i) {
      if (lines[i].second > lines[pick].second ||
          (lines[i].second == lines[pick].second &&
           lines[i].first < lines[pick].first))
        pick = i;
    }
    order.push_back(lines[pick].first);
    lines.erase(lines.begin() + static_cast<long>(pick));
  }
  return order;
}

inline int brute_top_k(const std::vector<int>& order, const std::set<int>& vuln,
                       int k) {
  const int n = static_cast<int>(order.size());
  for (int i = 0; i < n && i < k; ++i)
    if (vuln.count(order[static_cast<std::size_t>(i)])) return 1;
  return 0;
}

inline double brute_recall_at_20loc(const std::vector<int>& order,
                                    const std::set<int>& vuln) {
  const int n = static_cast<int>(order.size());
  const int budget = static_cast<int>(std::ceil(0.2 * n));
  int found = 0;
  for (int i = 0; i < budget; ++i)
    if (vuln.count(order[static_cast<std::size_t>(i)])) ++found;
  return static_cast<double>(found) / static_cast<double>(vuln.size());
}

inline double brute_effort_at_20recall(const std::vector<int>& order,
                                       const std::set<int>& vuln) {
  const int need = std::max(
      1, static_cast<int>(std::floor(0.2 * static_cast<double>(vuln.size()))));
  int seen = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (vuln.count(order[i])) ++seen;
    if (seen == need)
      return static_cast<double>(i + 1) / static_cast<double>(order.size());
  }
  return 1.0;  // unreachable when vuln is a subset of order
}

inline int brute_ifa(const std::vector<int>& order, const std::set<int>& vuln) {
  for (std::size_t i = 0; i < order.size(); ++i)
    if (vuln.count(order[i])) return static_cast<int>(i);
  return static_cast<int>(order.size());
}

}  // namespace testsupport
