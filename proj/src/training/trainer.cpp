#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "vulmtl/errors.hpp"
#include "vulmtl/training.hpp"

namespace vulmtl {

namespace {

bool has_usable_lines(const PaddedSample& s) {
  if (s.line_loss_excluded) return false;
  for (auto v : s.line_valid)
    if (v) return true;
  return false;
}

double selection_score(const MetricReport& r, TaskMode mode) {
  const double top10 = r.top10_acc.value_or(0.0);
  switch (mode) {
    case TaskMode::ClsOnly: return r.macro_f1;
    case TaskMode::LocOnly: return top10;
    case TaskMode::Multi: return 0.5 * (r.macro_f1 + top10);
  }
  return 0.0;
}

}  // namespace

EpochLog train_epoch(Encoder& model, const std::vector<PreparedSample>& train,
                     const TrainConfig& cfg, OptimizerState& opt, int epoch,
                     DetRng& shuffle_rng, DetRng& dropout_rng,
                     DetRng& perturb_rng) {
  if (train.empty()) throw ContractError("train_epoch: empty dataset");
  cfg.adv.validate();

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  shuffle_rng.shuffle(order);

  std::vector<Tensor> params;
  for (auto& [name, t] : model.parameters()) params.push_back(t);
  std::vector<std::vector<double>> harvest(params.size());
  for (std::size_t i = 0; i < params.size(); ++i)
    harvest[i].assign(params[i].size(), 0.0);

  const double eff_eps =
      cfg.adv.enabled ? effective_epsilon(cfg.adv, epoch) : 0.0;
  const int d_model = model.config().d_model;

  EpochLog log;
  log.epoch = epoch;
  log.eff_epsilon = eff_eps;
  std::size_t n_contrib = 0;

  for (std::size_t start = 0; start < order.size();
       start += static_cast<std::size_t>(cfg.batch)) {
    const std::size_t end =
        std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));

    for (auto& h : harvest) std::fill(h.begin(), h.end(), 0.0);
    std::size_t contributed = 0;

    for (std::size_t b = start; b < end; ++b) {
      const PreparedSample& ps = train[order[b]];

      // dropout is drawn once per sample step; every pass of the step,
      // clean and adversarial alike, sees the same masks
      DropoutPlan plan = make_dropout_plan(model.config(), dropout_rng);

      if (cfg.mode == TaskMode::LocOnly && !has_usable_lines(ps.padded))
        continue;

      model.zero_all_grads();
      Capture cap;
      TaskOutputs out_clean =
          model.predict(ps.padded, ps.mask, nullptr, nullptr, &plan, &cap);

      TaskOutputs out_adv = out_clean;
      bool include_kl = false;
      if (cfg.adv.enabled) {
        include_kl = cfg.mode != TaskMode::LocOnly;
        if (!ps.target_indices.empty()) {
          std::vector<double> alpha =
              attention_importance(cap, ps.target_indices);
          PerturbationSet pert =
              init_perturbation(ps.target_indices, d_model, cfg.adv.sigma,
                                alpha, eff_eps, perturb_rng);
          if (cfg.pgd_observer) cfg.pgd_observer(pert, -1, eff_eps);
          for (int k = 0; k < cfg.adv.K; ++k) {
            pgd_step(model, ps, pert, cfg.adv.mu, eff_eps, cfg.focal_gamma,
                     &plan);
            if (cfg.pgd_observer) cfg.pgd_observer(pert, k, eff_eps);
          }
          pert.delta.set_requires_grad(false);
          out_adv = model.predict(ps.padded, ps.mask, &pert.delta,
                                  &ps.target_indices, &plan);
        }
      }

      LossParts loss = joint_loss(out_clean, out_adv, ps.padded, cfg.mode,
                                  cfg.focal_gamma, include_kl);
      const double value = loss.total.item();
      if (!std::isfinite(value))
        throw NumericError("train_epoch: non-finite loss at epoch " +
                           std::to_string(epoch) + ", sample " +
                           ps.padded.sample_id);

      backward(loss.total);
      for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].has_grad()) continue;
        const auto& g = params[i].grad();
        for (std::size_t j = 0; j < g.size(); ++j) harvest[i][j] += g[j];
      }
      model.zero_all_grads();

      ++contributed;
      log.train_loss += value;
      log.mean_cls += loss.cls;
      log.mean_loc += loss.loc;
      log.mean_kl += loss.kl;
      log.mean_lambda += loss.lambda;
    }

    if (contributed == 0) continue;
    const double inv = 1.0 / static_cast<double>(contributed);
    for (auto& h : harvest)
      for (double& g : h) g *= inv;
    optimizer_step(params, harvest, opt);
    n_contrib += contributed;
  }

  if (n_contrib > 0) {
    const double inv = 1.0 / static_cast<double>(n_contrib);
    log.train_loss *= inv;
    log.mean_cls *= inv;
    log.mean_loc *= inv;
    log.mean_kl *= inv;
    log.mean_lambda *= inv;
  }
  return log;
}

TrainResult train_loop(Encoder& model, const std::vector<PreparedSample>& train,
                       const std::vector<PreparedSample>& valid,
                       const TrainConfig& cfg, const Checkpoint& meta,
                       const std::string& checkpoint_path,
                       const std::string& log_path) {
  if (train.empty()) throw ContractError("train_loop: empty training set");
  cfg.adv.validate();
  if (cfg.epochs < 0) throw ContractError("train_loop: negative epochs");
  if (cfg.batch < 1) throw ContractError("train_loop: batch must be >= 1");

  DetRng shuffle_rng(DetRng::derive(cfg.seed, streams::kShuffle));
  DetRng dropout_rng(DetRng::derive(cfg.seed, streams::kDropout));
  DetRng perturb_rng(DetRng::derive(cfg.seed, streams::kPerturb));

  const std::size_t batches_per_epoch =
      (train.size() + static_cast<std::size_t>(cfg.batch) - 1) /
      static_cast<std::size_t>(cfg.batch);

  OptimizerState opt;
  opt.base_lr = cfg.lr;
  opt.max_grad_norm = cfg.grad_clip;
  opt.total_steps =
      std::max<std::size_t>(1, batches_per_epoch *
                                   static_cast<std::size_t>(cfg.epochs));

  std::ofstream log_out;
  if (!log_path.empty()) {
    log_out.open(log_path);
    if (!log_out) throw IoError("cannot write training log: " + log_path);
  }

  TrainResult result;
  result.best_epoch = 0;
  result.best_score = -1.0;

  auto checkpoint_now = [&]() {
    if (!checkpoint_path.empty()) save_checkpoint(checkpoint_path, model, meta);
  };

  if (cfg.epochs == 0) {
    checkpoint_now();  // untrained model is still a valid artifact
    return result;
  }

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochLog log = train_epoch(model, train, cfg, opt, epoch, shuffle_rng,
                               dropout_rng, perturb_rng);
    if (!valid.empty()) {
      log.valid = evaluate(model, valid);
      log.selection_score = selection_score(log.valid, cfg.mode);
    }

    if (log_out.is_open()) {
      nlohmann::ordered_json j;
      j["epoch"] = log.epoch;
      j["train_loss"] = log.train_loss;
      j["cls"] = log.mean_cls;
      j["loc"] = log.mean_loc;
      j["kl"] = log.mean_kl;
      j["lambda"] = log.mean_lambda;
      j["eff_epsilon"] = log.eff_epsilon;
      if (!valid.empty()) {
        j["valid"] = nlohmann::ordered_json::parse(report_to_json(log.valid));
        j["selection_score"] = log.selection_score;
      }
      log_out << j.dump() << '\n';
      log_out.flush();
    }

    if (valid.empty() || log.selection_score > result.best_score) {
      result.best_score = valid.empty() ? 0.0 : log.selection_score;
      result.best_epoch = epoch;
      checkpoint_now();
    }
    result.epochs.push_back(std::move(log));
  }

  if (result.best_epoch == 0) checkpoint_now();
  return result;
}

std::vector<SampleEval> evaluate_samples(
    const Encoder& model, const std::vector<PreparedSample>& samples) {
  std::vector<SampleEval> out(samples.size());

#pragma omp parallel for schedule(static)
  for (long long ii = 0; ii < static_cast<long long>(samples.size()); ++ii) {
    const std::size_t i = static_cast<std::size_t>(ii);
    const PreparedSample& ps = samples[i];
    TaskOutputs to = model.predict(ps.padded, ps.mask);

    SampleEval ev;
    ev.id = ps.padded.sample_id;
    ev.gold_class = ps.padded.cwe_label;

    const auto& logits = to.cls_logits.data();
    int best = 0;
    for (std::size_t c = 1; c < logits.size(); ++c)
      if (logits[c] > logits[best]) best = static_cast<int>(c);
    ev.pred_class = best;

    const auto& ll = to.line_logits.data();
    std::vector<std::pair<int, double>> scores;
    for (std::size_t r = 0; r < to.line_valid.size(); ++r) {
      if (!to.line_valid[r]) continue;
      const double p1 = 1.0 / (1.0 + std::exp(ll[2 * r] - ll[2 * r + 1]));
      scores.push_back({static_cast<int>(r) + 1, p1});
    }
    if (!scores.empty())
      ev.lines = RankedLines::from_scores(scores, ps.vuln_lines);

    out[i] = std::move(ev);
  }
  return out;
}

MetricReport evaluate(const Encoder& model,
                      const std::vector<PreparedSample>& samples) {
  return aggregate_report(evaluate_samples(model, samples),
                          model.config().n_classes);
}

}  // namespace vulmtl
