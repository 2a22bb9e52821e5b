#include "vulmtl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "vulmtl/errors.hpp"

namespace vulmtl {

RankedLines RankedLines::from_scores(
    const std::vector<std::pair<int, double>>& line_probs,
    const std::set<int>& vuln_lines) {
  RankedLines rl;
  auto order = line_probs;
  std::sort(order.begin(), order.end(),
            [](const auto& a, const auto& b) {
              if (a.second != b.second) return a.second > b.second;
              return a.first < b.first;
            });
  std::set<int> seen;
  for (const auto& [line, prob] : order) {
    if (!seen.insert(line).second)
      throw ContractError("ranked lines: duplicate line " +
                          std::to_string(line));
    rl.ranking.push_back(line);
  }
  for (int v : vuln_lines)
    if (!seen.count(v))
      throw ContractError("ranked lines: vulnerable line " +
                          std::to_string(v) + " not among ranked lines");
  rl.vuln = vuln_lines;
  rl.N = static_cast<int>(rl.ranking.size());
  return rl;
}

double accuracy(const std::vector<int>& pred, const std::vector<int>& gold) {
  if (pred.empty() || pred.size() != gold.size())
    throw ContractError("accuracy: need equal-length non-empty label lists");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == gold[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

PrfResult precision_recall_f1(const std::vector<int>& pred,
                              const std::vector<int>& gold, int n_classes) {
  if (pred.size() != gold.size())
    throw ContractError("precision_recall_f1: length mismatch");
  std::vector<long long> tp(n_classes, 0), fp(n_classes, 0), fn(n_classes, 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int p = pred[i], g = gold[i];
    if (p < 0 || p >= n_classes || g < 0 || g >= n_classes)
      throw ContractError("precision_recall_f1: label out of range");
    if (p == g) {
      ++tp[p];
    } else {
      ++fp[p];
      ++fn[g];
    }
  }

  PrfResult r;
  r.precision.assign(n_classes, 0.0);
  r.recall.assign(n_classes, 0.0);
  r.f1.assign(n_classes, 0.0);
  r.present.assign(n_classes, 0);
  r.zero_denominator.assign(n_classes, 0);

  int n_present = 0;
  for (int c = 0; c < n_classes; ++c) {
    const long long pd = tp[c] + fp[c];
    const long long rd = tp[c] + fn[c];
    if (pd > 0)
      r.precision[c] = static_cast<double>(tp[c]) / static_cast<double>(pd);
    else
      r.zero_denominator[c] = 1;  // 0 by convention
    if (rd > 0)
      r.recall[c] = static_cast<double>(tp[c]) / static_cast<double>(rd);
    else
      r.zero_denominator[c] = 1;
    if (r.precision[c] + r.recall[c] > 0.0)
      r.f1[c] = 2.0 * r.precision[c] * r.recall[c] /
                (r.precision[c] + r.recall[c]);

    r.present[c] = rd > 0 ? 1 : 0;
    if (r.present[c]) {
      ++n_present;
      r.macro_precision += r.precision[c];
      r.macro_recall += r.recall[c];
      r.macro_f1 += r.f1[c];
    }
  }
  if (n_present > 0) {
    r.macro_precision /= n_present;
    r.macro_recall /= n_present;
    r.macro_f1 /= n_present;
  }
  return r;
}

namespace {

void need_vuln(const RankedLines& rl, const char* what) {
  if (rl.vuln.empty())
    throw DegenerateInputError(std::string(what) +
                               ": sample has no vulnerable lines; exclude it");
  if (rl.N < 1)
    throw ContractError(std::string(what) + ": empty ranking");
}

}  // namespace

int top_k_hit(const RankedLines& rl, int k) {
  need_vuln(rl, "top_k_hit");
  if (k < 1) throw ContractError("top_k_hit: k must be positive");
  const int limit = std::min(k, rl.N);
  for (int i = 0; i < limit; ++i)
    if (rl.vuln.count(rl.ranking[i])) return 1;
  return 0;
}

double recall_at_20pct_loc(const RankedLines& rl) {
  need_vuln(rl, "recall_at_20pct_loc");
  const int inspect =
      static_cast<int>(std::ceil(0.2 * static_cast<double>(rl.N)));
  int found = 0;
  for (int i = 0; i < inspect && i < rl.N; ++i)
    if (rl.vuln.count(rl.ranking[i])) ++found;
  return static_cast<double>(found) / static_cast<double>(rl.vuln.size());
}

double effort_at_20pct_recall(const RankedLines& rl) {
  need_vuln(rl, "effort_at_20pct_recall");
  const int q = std::max(
      1, static_cast<int>(std::floor(0.2 * static_cast<double>(rl.vuln.size()))));
  int seen = 0;
  for (int i = 0; i < rl.N; ++i) {
    if (rl.vuln.count(rl.ranking[i])) {
      ++seen;
      if (seen == q)
        return static_cast<double>(i + 1) / static_cast<double>(rl.N);
    }
  }
  throw ContractError("effort_at_20pct_recall: vulnerable lines not ranked");
}

int ifa(const RankedLines& rl) {
  need_vuln(rl, "ifa");
  for (int i = 0; i < rl.N; ++i)
    if (rl.vuln.count(rl.ranking[i])) return i;
  throw ContractError("ifa: vulnerable lines not ranked");
}

MetricReport aggregate_report(const std::vector<SampleEval>& samples,
                              int n_classes) {
  if (samples.empty())
    throw ContractError("aggregate_report: no samples");

  MetricReport rep;
  rep.n_samples = samples.size();

  std::vector<int> pred, gold;
  for (const auto& s : samples) {
    pred.push_back(s.pred_class);
    gold.push_back(s.gold_class);
  }
  rep.accuracy = accuracy(pred, gold);
  PrfResult prf = precision_recall_f1(pred, gold, n_classes);
  rep.macro_precision = prf.macro_precision;
  rep.macro_recall = prf.macro_recall;
  rep.macro_f1 = prf.macro_f1;
  rep.per_class_f1 = prf.f1;
  for (auto z : prf.zero_denominator) rep.zero_denominator_classes += z;

  double t5 = 0, t10 = 0, r20 = 0, e20 = 0, fa = 0;
  for (const auto& s : samples) {
    if (!s.lines.has_value()) {
      ++rep.excluded_no_lines;
      continue;
    }
    if (s.lines->vuln.empty()) {
      ++rep.excluded_no_vuln;
      continue;
    }
    t5 += top_k_hit(*s.lines, 5);
    t10 += top_k_hit(*s.lines, 10);
    r20 += recall_at_20pct_loc(*s.lines);
    e20 += effort_at_20pct_recall(*s.lines);
    fa += ifa(*s.lines);
    ++rep.n_ranked;
  }
  if (rep.n_ranked > 0) {
    const double n = static_cast<double>(rep.n_ranked);
    rep.top5_acc = t5 / n;
    rep.top10_acc = t10 / n;
    rep.recall_at_20loc = r20 / n;
    rep.effort_at_20recall = e20 / n;
    rep.mean_ifa = fa / n;
  }
  return rep;
}

std::string report_to_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  j["n_samples"] = r.n_samples;
  j["accuracy"] = r.accuracy;
  j["macro_precision"] = r.macro_precision;
  j["macro_recall"] = r.macro_recall;
  j["macro_f1"] = r.macro_f1;
  j["per_class_f1"] = r.per_class_f1;
  j["zero_denominator_classes"] = r.zero_denominator_classes;

  auto opt = [&](const char* key, const std::optional<double>& v) {
    if (v.has_value())
      j[key] = *v;
    else
      j[key] = nullptr;  // absent by rule, not zero
  };
  opt("top5_acc", r.top5_acc);
  opt("top10_acc", r.top10_acc);
  opt("recall_at_20loc", r.recall_at_20loc);
  opt("effort_at_20recall", r.effort_at_20recall);
  opt("mean_ifa", r.mean_ifa);

  j["n_ranked"] = r.n_ranked;
  j["excluded_no_vuln"] = r.excluded_no_vuln;
  j["excluded_no_lines"] = r.excluded_no_lines;
  return j.dump(2);
}

std::string report_table(const MetricReport& r) {
  auto cell = [](const std::optional<double>& v) {
    if (!v.has_value()) return std::string("   n/a");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%6.4f", *v);
    return std::string(buf);
  };
  std::ostringstream out;
  out << "   Acc   Prec    Rec     F1  Top-5 Top-10 R@20%LOC E@20%R    IFA\n";
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%6.4f %6.4f %6.4f %6.4f ",
                r.accuracy, r.macro_precision, r.macro_recall, r.macro_f1);
  out << buf << cell(r.top5_acc) << ' ' << cell(r.top10_acc) << "   "
      << cell(r.recall_at_20loc) << ' ' << cell(r.effort_at_20recall) << ' ';
  if (r.mean_ifa.has_value()) {
    std::snprintf(buf, sizeof(buf), "%6.2f", *r.mean_ifa);
    out << buf;
  } else {
    out << "   n/a";
  }
  out << "\n(" << r.n_ranked << " ranked, " << r.excluded_no_vuln
      << " excluded with no vulnerable lines, " << r.excluded_no_lines
      << " with no lines)\n";
  return out.str();
}

}  // namespace vulmtl
