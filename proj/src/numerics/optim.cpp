#include "vulmtl/optim.hpp"

#include <cmath>

namespace vulmtl {

void OptimizerState::init(const std::vector<Tensor>& params) {
  m.clear();
  v.clear();
  for (const auto& p : params) {
    m.emplace_back(p.size(), 0.0);
    v.emplace_back(p.size(), 0.0);
  }
  step = 0;
}

double cosine_lr(double base_lr, std::size_t step, std::size_t total_steps) {
  if (total_steps == 0) return base_lr;
  if (step >= total_steps) return 0.0;
  const double frac =
      static_cast<double>(step) / static_cast<double>(total_steps);
  return base_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * frac));
}

double clip_global_norm(std::vector<std::vector<double>>& grads,
                        double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (double x : g) {
      if (!std::isfinite(x))
        throw NumericError("gradient is not finite; update refused");
      sq += x * x;
    }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& g : grads)
      for (double& x : g) x *= s;
  }
  return norm;
}

void optimizer_step(std::vector<Tensor>& params,
                    std::vector<std::vector<double>>& grads,
                    OptimizerState& st) {
  if (params.size() != grads.size())
    throw ContractError("optimizer_step: params/grads size mismatch");
  if (!st.initialized()) {
    std::vector<Tensor> ps = params;
    st.init(ps);
  }
  if (st.m.size() != params.size())
    throw ContractError("optimizer_step: state was initialized for a "
                        "different parameter list");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (grads[i].size() != params[i].size())
      throw DimensionError("optimizer_step: grad size mismatch at param " +
                           std::to_string(i));

  clip_global_norm(grads, st.max_grad_norm);

  const double lr = cosine_lr(st.base_lr, st.step, st.total_steps);
  const double t = static_cast<double>(st.step + 1);
  const double bc1 = 1.0 - std::pow(st.beta1, t);
  const double bc2 = 1.0 - std::pow(st.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].data();
    auto& gm = st.m[i];
    auto& gv = st.v[i];
    const auto& g = grads[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      gm[j] = st.beta1 * gm[j] + (1.0 - st.beta1) * g[j];
      gv[j] = st.beta2 * gv[j] + (1.0 - st.beta2) * g[j] * g[j];
      const double mh = gm[j] / bc1;
      const double vh = gv[j] / bc2;
      p[j] -= lr * (mh / (std::sqrt(vh) + st.eps) + st.weight_decay * p[j]);
    }
  }
  ++st.step;
}

}  // namespace vulmtl
