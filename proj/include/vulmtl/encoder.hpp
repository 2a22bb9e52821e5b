#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "vulmtl/dataset.hpp"
#include "vulmtl/rng.hpp"
#include "vulmtl/syntax.hpp"
#include "vulmtl/tensor.hpp"

namespace vulmtl {

struct EncoderConfig {
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int vocab_size = 0;
  int max_len = 512;  // token budget, == Dims::L_c
  double dropout = 0.2;
  int n_classes = 0;
  int N_l = 256;
  int N_t = 64;

  int d_head() const { return d_model / n_heads; }
  int d_ff() const { return 4 * d_model; }
  void validate() const;
};

// Pre-drawn multiplicative dropout masks, one per site (embedding output,
// then per layer: attention output and feed-forward output). Drawing them
// up front lets one plan be shared across the clean and adversarial passes
// of a training step, which keeps a zero perturbation an exact no-op.
struct DropoutPlan {
  std::vector<std::vector<double>> site_masks;  // each max_len * d_model
};

DropoutPlan make_dropout_plan(const EncoderConfig& cfg, DetRng& rng);

// Side-channel outputs of a forward pass.
struct Capture {
  // last layer's post-softmax attention, one T*T row-major grid per head
  std::vector<std::vector<double>> last_attention;
};

struct TaskOutputs {
  Tensor cls_logits;   // [n_classes]
  Tensor line_logits;  // [N_l x 2]
  std::vector<std::uint8_t> line_valid;
};

class Encoder {
 public:
  Encoder(EncoderConfig cfg, std::uint64_t init_seed);

  const EncoderConfig& config() const { return cfg_; }

  // Parameters in creation order; the order is the checkpoint contract.
  std::vector<std::pair<std::string, Tensor>>& parameters() { return params_; }
  const std::vector<std::pair<std::string, Tensor>>& parameters() const {
    return params_;
  }
  Tensor param(const std::string& name) const;
  void zero_all_grads();

  // Token embeddings + sinusoidal positions, optional delta injected at
  // delta_positions, then the transformer stack under the attention mask.
  // Returns [T x d_model]. dropout == nullptr means evaluation mode.
  Tensor encode(const PaddedSample& s, const AttnMask& mask,
                const Tensor* delta = nullptr,
                const std::vector<int>* delta_positions = nullptr,
                const DropoutPlan* dropout = nullptr,
                Capture* capture = nullptr) const;

  // Row 0 of E, the classification slot.
  static Tensor cls_representation(const Tensor& E);

  // Mean pooling over each line's tokens; rows without tokens are invalid
  // and left at zero.
  Tensor line_representations(const Tensor& E, const PaddedSample& s,
                              std::vector<std::uint8_t>* valid_out) const;

  // Full two-pass forward: linear heads first, then each head re-queries the
  // sequence with the other task's preliminary probabilities projected in as
  // a query bias. The fusion projections start at zero, so an untrained
  // model's second pass reproduces the first exactly.
  TaskOutputs predict(const PaddedSample& s, const AttnMask& mask,
                      const Tensor* delta = nullptr,
                      const std::vector<int>* delta_positions = nullptr,
                      const DropoutPlan* dropout = nullptr,
                      Capture* capture = nullptr) const;

 private:
  Tensor find_(const std::string& name) const;

  EncoderConfig cfg_;
  std::vector<std::pair<std::string, Tensor>> params_;
  std::map<std::string, std::size_t> by_name_;
  Tensor pos_encoding_;  // [max_len x d_model], constant
};

// Mean over last-layer heads of attention from the classification position
// to each target token, rescaled to mean 1 over the targets. All-zero raw
// weights fall back to uniform importance.
std::vector<double> attention_importance(const Capture& capture,
                                         const std::vector<int>& targets);

// Convenience: evaluation-mode forward, then the rescaled scores.
std::vector<double> attention_importance(const Encoder& model,
                                         const PreparedSample& ps);

// Checkpoint container: config, class names, vocabulary, and every
// parameter by name. JSON on disk; doubles survive the round trip exactly.
struct Checkpoint {
  EncoderConfig config;
  Dims dims;
  std::vector<std::string> classes;
  Vocabulary vocab;
  std::map<std::string, std::string> extra;  // run settings worth keeping
};

void save_checkpoint(const std::string& path, const Encoder& model,
                     const Checkpoint& meta);

// Rebuilds the model; throws ValidationError on format or shape mismatch.
Encoder load_checkpoint(const std::string& path, Checkpoint* meta_out);

}  // namespace vulmtl
