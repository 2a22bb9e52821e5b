#pragma once

#include <cstddef>
#include <vector>

#include "vulmtl/tensor.hpp"

namespace vulmtl {

// AdamW with decoupled weight decay and a cosine learning-rate schedule that
// decays from base_lr at step 0 to 0 at total_steps (no warmup).
struct OptimizerState {
  double base_lr = 5e-6;
  double weight_decay = 0.0;
  double max_grad_norm = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::size_t total_steps = 1;
  std::vector<std::vector<double>> m, v;

  void init(const std::vector<Tensor>& params);
  bool initialized() const { return !m.empty(); }
};

double cosine_lr(double base_lr, std::size_t step, std::size_t total_steps);

// Scales grads in place so the global L2 norm is at most max_norm; returns the
// pre-clip norm. Throws NumericError on non-finite gradients.
double clip_global_norm(std::vector<std::vector<double>>& grads,
                        double max_norm);

// One update over matched (params, grads) lists: clip, cosine lr, AdamW with
// bias correction, decoupled decay. Refuses non-finite gradients.
void optimizer_step(std::vector<Tensor>& params,
                    std::vector<std::vector<double>>& grads,
                    OptimizerState& st);

}  // namespace vulmtl
