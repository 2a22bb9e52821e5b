#include "vulmtl/encoder.hpp"

#include <cmath>
#include <cstring>

#include "vulmtl/errors.hpp"

namespace vulmtl {

void EncoderConfig::validate() const {
  if (d_model < 1 || n_layers < 1 || n_heads < 1)
    throw ContractError("encoder config: dimensions must be positive");
  if (d_model % n_heads != 0)
    throw ContractError("encoder config: d_model " + std::to_string(d_model) +
                        " not divisible by n_heads " +
                        std::to_string(n_heads));
  if (vocab_size < 3)
    throw ContractError("encoder config: vocab_size must cover reserved ids");
  if (max_len < 2) throw ContractError("encoder config: max_len too small");
  if (dropout < 0.0 || dropout >= 1.0)
    throw ContractError("encoder config: dropout must be in [0,1)");
  if (n_classes < 2) throw ContractError("encoder config: need >= 2 classes");
  if (N_l < 1 || N_t < 1)
    throw ContractError("encoder config: line dimensions must be positive");
}

DropoutPlan make_dropout_plan(const EncoderConfig& cfg, DetRng& rng) {
  const std::size_t n_sites = 1 + 2 * static_cast<std::size_t>(cfg.n_layers);
  const std::size_t n = static_cast<std::size_t>(cfg.max_len) * cfg.d_model;
  DropoutPlan plan;
  plan.site_masks.resize(n_sites);
  const double keep_scale = 1.0 / (1.0 - cfg.dropout);
  for (auto& m : plan.site_masks) {
    if (cfg.dropout <= 0.0) {
      m.assign(n, 1.0);
      continue;
    }
    m.resize(n);
    for (auto& x : m) x = rng.uniform() < cfg.dropout ? 0.0 : keep_scale;
  }
  return plan;
}

namespace {

Tensor sinusoidal_positions(int max_len, int d_model) {
  std::vector<double> pe(static_cast<std::size_t>(max_len) * d_model);
  for (int pos = 0; pos < max_len; ++pos) {
    for (int i = 0; i < d_model; i += 2) {
      const double rate = std::pow(10000.0, static_cast<double>(i) / d_model);
      const double angle = pos / rate;
      pe[static_cast<std::size_t>(pos) * d_model + i] = std::sin(angle);
      if (i + 1 < d_model)
        pe[static_cast<std::size_t>(pos) * d_model + i + 1] = std::cos(angle);
    }
  }
  return from_data({static_cast<std::size_t>(max_len),
                    static_cast<std::size_t>(d_model)},
                   std::move(pe));
}

Tensor gaussian_param(Shape shape, DetRng& rng, double stddev) {
  std::vector<double> data(shape_size(shape));
  for (auto& x : data) x = rng.normal(0.0, stddev);
  return from_data(std::move(shape), std::move(data), true);
}

}  // namespace

Encoder::Encoder(EncoderConfig cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  DetRng rng(init_seed);
  const auto d = static_cast<std::size_t>(cfg_.d_model);
  const auto ff = static_cast<std::size_t>(cfg_.d_ff());
  const auto C = static_cast<std::size_t>(cfg_.n_classes);
  const auto Nl = static_cast<std::size_t>(cfg_.N_l);

  auto put = [&](const std::string& name, Tensor t) {
    by_name_[name] = params_.size();
    params_.emplace_back(name, std::move(t));
  };
  auto weight = [&](const std::string& name, Shape shape) {
    put(name, gaussian_param(std::move(shape), rng, 0.02));
  };
  auto zeros_param = [&](const std::string& name, Shape shape) {
    put(name, zeros(std::move(shape), true));
  };
  auto ones_param = [&](const std::string& name, Shape shape) {
    put(name, full(std::move(shape), 1.0, true));
  };

  weight("embedding.table", {static_cast<std::size_t>(cfg_.vocab_size), d});
  ones_param("embedding.ln.gain", {d});
  zeros_param("embedding.ln.bias", {d});

  for (int l = 0; l < cfg_.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    weight(p + "attn.wq", {d, d});
    zeros_param(p + "attn.bq", {d});
    weight(p + "attn.wk", {d, d});
    zeros_param(p + "attn.bk", {d});
    weight(p + "attn.wv", {d, d});
    zeros_param(p + "attn.bv", {d});
    weight(p + "attn.wo", {d, d});
    zeros_param(p + "attn.bo", {d});
    ones_param(p + "ln1.gain", {d});
    zeros_param(p + "ln1.bias", {d});
    weight(p + "ffn.w1", {d, ff});
    zeros_param(p + "ffn.b1", {ff});
    weight(p + "ffn.w2", {ff, d});
    zeros_param(p + "ffn.b2", {d});
    ones_param(p + "ln2.gain", {d});
    zeros_param(p + "ln2.bias", {d});
  }

  weight("head.cls.w", {d, C});
  zeros_param("head.cls.b", {C});
  weight("head.line.w", {d, 2});
  zeros_param("head.line.b", {2});

  // zero so the second pass starts as an exact replica of the first
  zeros_param("fusion.cls.query", {Nl, d});
  zeros_param("fusion.cls.out", {d, C});
  zeros_param("fusion.line.query", {C, d});
  zeros_param("fusion.line.out", {d, 2});

  pos_encoding_ = sinusoidal_positions(cfg_.max_len, cfg_.d_model);
}

Tensor Encoder::find_(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end())
    throw ContractError("encoder: unknown parameter " + name);
  return params_[it->second].second;
}

Tensor Encoder::param(const std::string& name) const { return find_(name); }

void Encoder::zero_all_grads() {
  for (auto& [name, t] : params_) t.zero_grad();
}

Tensor Encoder::encode(const PaddedSample& s, const AttnMask& mask,
                       const Tensor* delta,
                       const std::vector<int>* delta_positions,
                       const DropoutPlan* dropout, Capture* capture) const {
  const int T = cfg_.max_len;
  if (static_cast<int>(s.tokens.size()) != T)
    throw DimensionError("encode: sample has " +
                         std::to_string(s.tokens.size()) + " tokens, expect " +
                         std::to_string(T));
  if (mask.T != T)
    throw DimensionError("encode: mask is " + std::to_string(mask.T) +
                         "x" + std::to_string(mask.T) + ", expect " +
                         std::to_string(T));
  if ((delta != nullptr) != (delta_positions != nullptr))
    throw ContractError("encode: delta and positions must come together");
  if (capture) capture->last_attention.clear();

  Tensor E = gather_rows(find_("embedding.table"), s.tokens);
  E = add(E, pos_encoding_);
  if (delta) E = scatter_add_rows(E, *delta, *delta_positions);
  E = layer_norm(E, find_("embedding.ln.gain"), find_("embedding.ln.bias"));

  std::size_t site = 0;
  auto drop = [&](Tensor x) {
    const std::size_t at = site++;
    if (!dropout) return x;
    if (at >= dropout->site_masks.size())
      throw ContractError("encode: dropout plan too short");
    return mul(x, from_data(x.shape(),
                            std::vector<double>(dropout->site_masks[at])));
  };
  E = drop(E);

  // additive attention bias shared by every layer
  std::vector<double> bias(static_cast<std::size_t>(T) * T);
  for (std::size_t i = 0; i < bias.size(); ++i)
    bias[i] = mask.allow[i] ? 0.0 : -1e30;
  const Tensor mask_bias = from_data(
      {static_cast<std::size_t>(T), static_cast<std::size_t>(T)},
      std::move(bias));

  const auto dh = static_cast<std::size_t>(cfg_.d_head());
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  for (int l = 0; l < cfg_.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    Tensor q = add_rowvec(matmul(E, find_(p + "attn.wq")),
                          find_(p + "attn.bq"));
    Tensor k = add_rowvec(matmul(E, find_(p + "attn.wk")),
                          find_(p + "attn.bk"));
    Tensor v = add_rowvec(matmul(E, find_(p + "attn.wv")),
                          find_(p + "attn.bv"));

    std::vector<Tensor> heads;
    for (int h = 0; h < cfg_.n_heads; ++h) {
      Tensor qh = slice_cols(q, h * dh, dh);
      Tensor kh = slice_cols(k, h * dh, dh);
      Tensor vh = slice_cols(v, h * dh, dh);
      Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt_dh);
      Tensor attn = softmax(add(scores, mask_bias), 1);
      if (capture && l == cfg_.n_layers - 1)
        capture->last_attention.push_back(attn.data());
      heads.push_back(matmul(attn, vh));
    }
    Tensor o = add_rowvec(matmul(concat_cols(heads), find_(p + "attn.wo")),
                          find_(p + "attn.bo"));
    E = layer_norm(add(E, drop(o)), find_(p + "ln1.gain"),
                   find_(p + "ln1.bias"));

    Tensor hmid = gelu(add_rowvec(matmul(E, find_(p + "ffn.w1")),
                                  find_(p + "ffn.b1")));
    Tensor hout = add_rowvec(matmul(hmid, find_(p + "ffn.w2")),
                             find_(p + "ffn.b2"));
    E = layer_norm(add(E, drop(hout)), find_(p + "ln2.gain"),
                   find_(p + "ln2.bias"));
  }
  return E;
}

Tensor Encoder::cls_representation(const Tensor& E) {
  return select_row(E, 0);
}

Tensor Encoder::line_representations(const Tensor& E, const PaddedSample& s,
                                     std::vector<std::uint8_t>* valid_out) const {
  const auto Nl = static_cast<std::size_t>(cfg_.N_l);
  const auto T = static_cast<std::size_t>(cfg_.max_len);
  if (s.line_tokens.size() != Nl)
    throw DimensionError("line_representations: sample has " +
                         std::to_string(s.line_tokens.size()) +
                         " line rows, expect " + std::to_string(Nl));

  std::vector<double> pool(Nl * T, 0.0);
  for (std::size_t r = 0; r < Nl; ++r) {
    const auto& toks = s.line_tokens[r];
    if (toks.empty()) continue;
    const double w = 1.0 / static_cast<double>(toks.size());
    for (int t : toks) pool[r * T + static_cast<std::size_t>(t)] = w;
  }
  if (valid_out) *valid_out = s.line_valid;
  return matmul(from_data({Nl, T}, std::move(pool)), E);
}

TaskOutputs Encoder::predict(const PaddedSample& s, const AttnMask& mask,
                             const Tensor* delta,
                             const std::vector<int>* delta_positions,
                             const DropoutPlan* dropout,
                             Capture* capture) const {
  const auto C = static_cast<std::size_t>(cfg_.n_classes);
  const auto Nl = static_cast<std::size_t>(cfg_.N_l);
  const auto T = static_cast<std::size_t>(cfg_.max_len);
  const auto d = static_cast<std::size_t>(cfg_.d_model);

  Tensor E = encode(s, mask, delta, delta_positions, dropout, capture);

  // first pass: plain linear heads
  Tensor cls_repr = reshape(cls_representation(E), {1, d});
  Tensor cls1 = add_rowvec(matmul(cls_repr, find_("head.cls.w")),
                           find_("head.cls.b"));

  TaskOutputs out;
  Tensor line_reprs = line_representations(E, s, &out.line_valid);
  Tensor line1 = add_rowvec(matmul(line_reprs, find_("head.line.w")),
                            find_("head.line.b"));

  // preliminary probabilities exchanged between the heads; invalid line rows
  // are zeroed so padding never biases the classification query
  Tensor p_cls = softmax(reshape(cls1, {C}), 0);
  std::vector<double> vmask(Nl);
  for (std::size_t r = 0; r < Nl; ++r) vmask[r] = out.line_valid[r] ? 1.0 : 0.0;
  Tensor p_loc = mul(slice_cols(softmax(line1, 1), 1, 1),
                     from_data({Nl, 1}, std::move(vmask)));

  // pooling bias: the classification slot's visibility row minus padding
  std::vector<double> pb(T);
  for (std::size_t j = 0; j < T; ++j)
    pb[j] = (mask.allow[j] && s.token_mask[j]) ? 0.0 : -1e30;
  Tensor pool_bias = from_data({T}, std::move(pb));
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  // second pass, classification: query biased by the line probabilities
  Tensor qc = add(cls_repr,
                  matmul(transpose(p_loc), find_("fusion.cls.query")));
  Tensor ac = softmax(add_rowvec(scale(matmul(qc, transpose(E)), inv_sqrt_d),
                                 pool_bias),
                      1);
  Tensor cls2 = add(cls1, matmul(matmul(ac, E), find_("fusion.cls.out")));

  // second pass, lines: every line query biased by the class probabilities
  Tensor ql = add_rowvec(line_reprs,
                         reshape(matmul(reshape(p_cls, {1, C}),
                                        find_("fusion.line.query")),
                                 {d}));
  Tensor al = softmax(add_rowvec(scale(matmul(ql, transpose(E)), inv_sqrt_d),
                                 pool_bias),
                      1);
  Tensor line2 = add(line1, matmul(matmul(al, E), find_("fusion.line.out")));

  out.cls_logits = reshape(cls2, {C});
  out.line_logits = line2;
  return out;
}

std::vector<double> attention_importance(const Capture& capture,
                                         const std::vector<int>& targets) {
  if (targets.empty()) return {};
  if (capture.last_attention.empty())
    throw ContractError("attention_importance: capture holds no attention");

  const std::size_t n_heads = capture.last_attention.size();
  std::vector<double> alpha(targets.size(), 0.0);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    for (const auto& head : capture.last_attention)
      alpha[i] += head[static_cast<std::size_t>(targets[i])];  // row 0
    alpha[i] /= static_cast<double>(n_heads);
  }

  double total = 0.0;
  for (double a : alpha) total += a;
  if (total <= 0.0) {
    std::fill(alpha.begin(), alpha.end(), 1.0);  // degenerate, fall back flat
    return alpha;
  }
  const double scale = static_cast<double>(alpha.size()) / total;
  for (double& a : alpha) a *= scale;
  return alpha;
}

std::vector<double> attention_importance(const Encoder& model,
                                         const PreparedSample& ps) {
  if (ps.target_indices.empty()) return {};
  Capture cap;
  model.encode(ps.padded, ps.mask, nullptr, nullptr, nullptr, &cap);
  return attention_importance(cap, ps.target_indices);
}

}  // namespace vulmtl
