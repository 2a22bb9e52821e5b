#include <cmath>

#include "vulmtl/errors.hpp"
#include "vulmtl/training.hpp"

namespace vulmtl {

TaskMode task_mode_from(const std::string& name) {
  if (name == "multi") return TaskMode::Multi;
  if (name == "cls-only") return TaskMode::ClsOnly;
  if (name == "loc-only") return TaskMode::LocOnly;
  throw ValidationError("unknown task_mode '" + name +
                        "' (multi, cls-only, loc-only)");
}

std::string task_mode_name(TaskMode mode) {
  switch (mode) {
    case TaskMode::Multi: return "multi";
    case TaskMode::ClsOnly: return "cls-only";
    case TaskMode::LocOnly: return "loc-only";
  }
  return "?";
}

double uncertainty_weight(double var_ploc, double ent_pcls) {
  return 1.0 / (1.0 + std::exp(-(var_ploc + ent_pcls)));
}

namespace {

// Stable softmax of raw logit values, no graph involved.
std::vector<double> softmax_values(const std::vector<double>& logits) {
  double mx = logits[0];
  for (double x : logits) mx = std::max(mx, x);
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (double& x : p) x /= z;
  return p;
}

}  // namespace

LossParts joint_loss(const TaskOutputs& clean, const TaskOutputs& adv,
                     const PaddedSample& s, TaskMode mode, double gamma,
                     bool include_kl) {
  LossParts parts;

  bool usable_lines = false;
  if (!s.line_loss_excluded)
    for (auto v : s.line_valid) usable_lines |= v != 0;

  // uncertainty terms from the clean pass, as detached numbers
  const std::vector<double> p_cls = softmax_values(clean.cls_logits.data());
  double entropy = 0.0;
  for (double p : p_cls)
    if (p > 0.0) entropy -= p * std::log(p);
  parts.ent_pcls = entropy;

  if (usable_lines) {
    const auto& ll = clean.line_logits.data();
    std::vector<double> probs;
    for (std::size_t r = 0; r < s.line_valid.size(); ++r) {
      if (!s.line_valid[r]) continue;
      const double l0 = ll[2 * r], l1 = ll[2 * r + 1];
      probs.push_back(1.0 / (1.0 + std::exp(l0 - l1)));
    }
    double mean = 0.0;
    for (double p : probs) mean += p;
    mean /= static_cast<double>(probs.size());
    double var = 0.0;
    for (double p : probs) var += (p - mean) * (p - mean);
    parts.var_ploc = var / static_cast<double>(probs.size());
  }

  auto focal_term = [&]() {
    std::vector<int> targets(s.line_label.begin(), s.line_label.end());
    return focal_loss(adv.line_logits, targets, s.line_valid, gamma);
  };

  switch (mode) {
    case TaskMode::Multi: {
      Tensor ce = cross_entropy(adv.cls_logits, s.cwe_label);
      parts.cls = ce.item();
      if (usable_lines) {
        parts.lambda = uncertainty_weight(parts.var_ploc, parts.ent_pcls);
        Tensor foc = focal_term();
        parts.loc = foc.item();
        parts.total = add(scale(ce, parts.lambda),
                          scale(foc, 1.0 - parts.lambda));
      } else {
        parts.lambda = 1.0;
        parts.loc_omitted = true;
        parts.total = ce;
      }
      break;
    }
    case TaskMode::ClsOnly: {
      Tensor ce = cross_entropy(adv.cls_logits, s.cwe_label);
      parts.cls = ce.item();
      parts.lambda = 1.0;
      parts.total = ce;
      break;
    }
    case TaskMode::LocOnly: {
      if (!usable_lines)
        throw ContractError(
            "joint_loss: loc-only on a sample with no usable lines");
      Tensor foc = focal_term();
      parts.loc = foc.item();
      parts.lambda = 0.0;
      parts.total = foc;
      break;
    }
  }

  // invariance penalty on the class distribution; undefined without a
  // classification head, so loc-only runs never see it
  if (include_kl && mode != TaskMode::LocOnly) {
    Tensor kl = kl_divergence(clean.cls_logits, adv.cls_logits);
    parts.kl = kl.item();
    parts.total = add(parts.total, kl);
  }
  return parts;
}

}  // namespace vulmtl
