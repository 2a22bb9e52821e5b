#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vulmtl/dataset.hpp"
#include "vulmtl/encoder.hpp"
#include "vulmtl/metrics.hpp"
#include "vulmtl/optim.hpp"
#include "vulmtl/rng.hpp"
#include "vulmtl/tensor.hpp"

namespace vulmtl {

// Independent RNG stream tags derived from the run seed. Keeping the
// perturbation draws on their own stream means an EDAT run and a baseline
// run consume the shared streams identically.
namespace streams {
constexpr std::uint64_t kModel = 0x6d6f646c;    // parameter init
constexpr std::uint64_t kShuffle = 0x73687566;  // epoch ordering
constexpr std::uint64_t kDropout = 0x64726f70;  // dropout masks
constexpr std::uint64_t kPerturb = 0x70657274;  // delta init
}  // namespace streams

struct AdversarialConfig {
  double epsilon = 0.02;  // per-coordinate perturbation bound
  double mu = 0.01;       // ascent step size
  int K = 3;              // ascent steps
  double sigma = 0.01;    // Gaussian init scale
  bool enabled = true;
  int warmup_epochs = 0;  // bound ramps linearly over these epochs

  void validate() const;
};

// epsilon scaled by min(1, epoch / warmup_epochs); epoch is 1-based, so with
// warmup 2 the first epoch trains at half the bound.
double effective_epsilon(const AdversarialConfig& cfg, int epoch);

struct PerturbationSet {
  std::vector<int> target_indices;
  Tensor delta;                    // [n_targets x d_model], grad-bearing leaf
  std::vector<double> importance;  // alpha per target
};

// Rows drawn N(0, sigma^2 * alpha_i) then clipped into the bound. sigma = 0
// produces exact zeros without consuming the stream.
PerturbationSet init_perturbation(const std::vector<int>& targets, int d_model,
                                  double sigma,
                                  const std::vector<double>& alpha,
                                  double eff_epsilon, DetRng& rng);

// One ascent step on delta: forward with the perturbation, classification
// cross-entropy plus line focal loss, gradient w.r.t. delta only, then
// delta += mu * g/||g||2 clipped per coordinate. Model parameter gradients
// touched along the way are zeroed before returning. Returns false (delta
// unchanged) when ||g||2 < 1e-12.
bool pgd_step(Encoder& model, const PreparedSample& ps,
              PerturbationSet& pert, double mu, double eff_epsilon,
              double focal_gamma, const DropoutPlan* dropout,
              double* loss_at_entry = nullptr);

enum class TaskMode { Multi, ClsOnly, LocOnly };

TaskMode task_mode_from(const std::string& name);  // "multi" | "cls-only" | "loc-only"
std::string task_mode_name(TaskMode mode);

// sigmoid(Var(p_loc) + Entropy(p_cls)), the classification share of the
// combined objective. Both inputs nonnegative, so the weight sits in
// [0.5, 1) and equals exactly 0.5 only when both uncertainties vanish.
double uncertainty_weight(double var_ploc, double ent_pcls);

struct LossParts {
  Tensor total;          // scalar, differentiable
  double cls = 0.0;      // component values for the log
  double loc = 0.0;
  double kl = 0.0;
  double lambda = 1.0;
  double var_ploc = 0.0;
  double ent_pcls = 0.0;
  bool loc_omitted = false;  // no usable line rows, lambda forced to 1
};

// The combined objective. lambda = sigmoid(Var(p_loc) + Entropy(p_cls)) is
// computed from the clean pass as a plain number, so the weighting carries
// no gradient. include_kl adds KL(clean class dist || adversarial class
// dist); single-task modes drop the missing head's term.
LossParts joint_loss(const TaskOutputs& clean, const TaskOutputs& adv,
                     const PaddedSample& s, TaskMode mode, double gamma,
                     bool include_kl);

// Called right after delta init (step -1) and after every accepted or
// skipped ascent step; test harnesses use it to audit the invariants.
using PgdObserver =
    std::function<void(const PerturbationSet&, int step, double eff_epsilon)>;

// Dropout is not here: the model's own config carries it, and the trainer
// draws masks against that.
struct TrainConfig {
  double lr = 5e-6;
  int epochs = 100;
  int batch = 32;
  double grad_clip = 1.0;
  double focal_gamma = 2.0;
  AdversarialConfig adv;
  TaskMode mode = TaskMode::Multi;
  std::uint64_t seed = 42;
  PgdObserver pgd_observer;  // optional
};

struct EpochLog {
  int epoch = 0;
  double mean_cls = 0.0;
  double mean_loc = 0.0;
  double mean_kl = 0.0;
  double mean_lambda = 0.0;
  double eff_epsilon = 0.0;
  double train_loss = 0.0;
  MetricReport valid;
  double selection_score = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  int best_epoch = 0;  // 1-based; 0 means the untrained model was kept
  double best_score = -1.0;
};

// One pass over the shuffled training set. Gradients accumulate per batch
// into harvest buffers, get averaged, clipped, and applied with AdamW.
EpochLog train_epoch(Encoder& model, const std::vector<PreparedSample>& train,
                     const TrainConfig& cfg, OptimizerState& opt, int epoch,
                     DetRng& shuffle_rng, DetRng& dropout_rng,
                     DetRng& perturb_rng);

// Full loop: per-epoch validation, model selection (macro-F1 for cls-only,
// Top-10 for loc-only, mean of both for multi), best checkpoint written to
// checkpoint_path, JSON-lines log appended to log_path (either may be empty
// to skip writing). Aborts with NumericError on a non-finite loss.
TrainResult train_loop(Encoder& model, const std::vector<PreparedSample>& train,
                       const std::vector<PreparedSample>& valid,
                       const TrainConfig& cfg, const Checkpoint& meta,
                       const std::string& checkpoint_path,
                       const std::string& log_path);

// Evaluation-mode forward over samples; class prediction by argmax, line
// ranking by vulnerable-class probability over valid rows.
MetricReport evaluate(const Encoder& model,
                      const std::vector<PreparedSample>& samples);

std::vector<SampleEval> evaluate_samples(
    const Encoder& model, const std::vector<PreparedSample>& samples);

}  // namespace vulmtl
