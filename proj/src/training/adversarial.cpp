#include <algorithm>
#include <cmath>

#include "vulmtl/errors.hpp"
#include "vulmtl/training.hpp"

namespace vulmtl {

void AdversarialConfig::validate() const {
  if (epsilon <= 0.0) throw ContractError("adversarial: epsilon must be > 0");
  if (mu < 0.0) throw ContractError("adversarial: mu must be >= 0");
  if (K < 1) throw ContractError("adversarial: need at least one ascent step");
  if (sigma < 0.0) throw ContractError("adversarial: sigma must be >= 0");
  if (warmup_epochs < 0)
    throw ContractError("adversarial: warmup_epochs must be >= 0");
}

double effective_epsilon(const AdversarialConfig& cfg, int epoch) {
  if (epoch < 1) throw ContractError("effective_epsilon: epochs are 1-based");
  if (cfg.warmup_epochs <= 0) return cfg.epsilon;
  const double frac = static_cast<double>(epoch) /
                      static_cast<double>(cfg.warmup_epochs);
  return cfg.epsilon * std::min(1.0, frac);
}

PerturbationSet init_perturbation(const std::vector<int>& targets, int d_model,
                                  double sigma,
                                  const std::vector<double>& alpha,
                                  double eff_epsilon, DetRng& rng) {
  if (alpha.size() != targets.size())
    throw ContractError("init_perturbation: alpha size " +
                        std::to_string(alpha.size()) + " vs " +
                        std::to_string(targets.size()) + " targets");

  PerturbationSet p;
  p.target_indices = targets;
  p.importance = alpha;

  std::vector<double> d(targets.size() * static_cast<std::size_t>(d_model),
                        0.0);
  if (sigma > 0.0) {
    for (std::size_t i = 0; i < targets.size(); ++i) {
      const double stddev = sigma * std::sqrt(alpha[i]);
      for (int j = 0; j < d_model; ++j) {
        double x = rng.normal(0.0, stddev);
        d[i * static_cast<std::size_t>(d_model) + j] =
            std::clamp(x, -eff_epsilon, eff_epsilon);
      }
    }
  }
  p.delta = from_data({targets.size(), static_cast<std::size_t>(d_model)},
                      std::move(d), true);
  return p;
}

bool pgd_step(Encoder& model, const PreparedSample& ps,
              PerturbationSet& pert, double mu, double eff_epsilon,
              double focal_gamma, const DropoutPlan* dropout,
              double* loss_at_entry) {
  TaskOutputs out = model.predict(ps.padded, ps.mask, &pert.delta,
                                  &pert.target_indices, dropout);

  // ascent objective: the two task losses, unweighted
  Tensor loss = cross_entropy(out.cls_logits, ps.padded.cwe_label);
  bool any_line = false;
  if (!ps.padded.line_loss_excluded)
    for (auto v : ps.padded.line_valid) any_line |= v != 0;
  if (any_line) {
    std::vector<int> targets(ps.padded.line_label.begin(),
                             ps.padded.line_label.end());
    loss = add(loss, focal_loss(out.line_logits, targets,
                                ps.padded.line_valid, focal_gamma));
  }
  if (loss_at_entry) *loss_at_entry = loss.item();

  pert.delta.zero_grad();
  backward(loss);

  // ascent must not leak into the parameter update
  model.zero_all_grads();

  const auto& g = pert.delta.grad();
  double norm_sq = 0.0;
  for (double x : g) norm_sq += x * x;
  const double norm = std::sqrt(norm_sq);
  if (!std::isfinite(norm))
    throw NumericError("pgd_step: non-finite ascent gradient");
  if (norm < 1e-12) return false;  // flat loss, keep delta where it is

  auto& d = pert.delta.data();
  const double step = mu / norm;
  for (std::size_t i = 0; i < d.size(); ++i)
    d[i] = std::clamp(d[i] + step * g[i], -eff_epsilon, eff_epsilon);
  return true;
}

}  // namespace vulmtl
