#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace vulmtl {

// A deterministic inspection order over one function's valid lines:
// descending probability, ties broken by ascending line number.
struct RankedLines {
  std::vector<int> ranking;  // line numbers, most suspicious first
  std::set<int> vuln;        // ground-truth vulnerable lines, subset of ranking
  int N = 0;                 // number of ranked lines

  static RankedLines from_scores(
      const std::vector<std::pair<int, double>>& line_probs,
      const std::set<int>& vuln_lines);
};

double accuracy(const std::vector<int>& pred, const std::vector<int>& gold);

struct PrfResult {
  std::vector<double> precision, recall, f1;    // indexed by class
  std::vector<std::uint8_t> present;            // class appears in gold
  std::vector<std::uint8_t> zero_denominator;   // P or R defaulted to 0
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;  // unweighted mean over present classes
};

PrfResult precision_recall_f1(const std::vector<int>& pred,
                              const std::vector<int>& gold, int n_classes);

// All four ranking metrics require at least one vulnerable line; callers
// must exclude |V| = 0 samples (they are counted, never scored as zero).
int top_k_hit(const RankedLines& rl, int k);
double recall_at_20pct_loc(const RankedLines& rl);
double effort_at_20pct_recall(const RankedLines& rl);
int ifa(const RankedLines& rl);

// One evaluated sample. lines is empty (nullopt) when the sample has no
// valid line rows at all.
struct SampleEval {
  std::string id;
  int pred_class = -1;
  int gold_class = -1;
  std::optional<RankedLines> lines;
};

struct MetricReport {
  std::size_t n_samples = 0;

  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> per_class_f1;
  std::size_t zero_denominator_classes = 0;

  // macro means over samples with |V| >= 1; absent when none qualify
  std::optional<double> top5_acc;
  std::optional<double> top10_acc;
  std::optional<double> recall_at_20loc;
  std::optional<double> effort_at_20recall;
  std::optional<double> mean_ifa;

  std::size_t n_ranked = 0;            // samples the ranking metrics cover
  std::size_t excluded_no_vuln = 0;    // |V| = 0 after truncation
  std::size_t excluded_no_lines = 0;   // no valid line rows
};

MetricReport aggregate_report(const std::vector<SampleEval>& samples,
                              int n_classes);

std::string report_to_json(const MetricReport& r);

// Fixed-width rendering in the usual column order: Acc, Prec, Rec, F1,
// Top-5, Top-10, R@20%LOC, E@20%R, IFA.
std::string report_table(const MetricReport& r);

}  // namespace vulmtl
