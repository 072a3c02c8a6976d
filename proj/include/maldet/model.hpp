#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "maldet/tokenizer.hpp"

namespace maldet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct ModelConfig {
  std::int32_t vocab_size = 0;
  std::int32_t d_model = 32;
  std::int32_t n_heads = 8;
  std::int32_t n_layers = 2;
  std::int32_t d_ff = 128;
  std::int32_t context_len = 512;
  double dropout_rate = 0.1;
  bool use_positional = true;  // zeroed only for permutation experiments

  std::int32_t head_dim() const { return d_model / n_heads; }
  void validate() const;
};

struct LayerParams {
  Matrix wq, wk, wv, wo;      // d_model x d_model, no biases
  Matrix w1;                  // d_model x d_ff
  Vector b1;                  // d_ff
  Matrix w2;                  // d_ff x d_model
  Vector b2;                  // d_model
  Vector ln1_gain, ln1_bias;  // d_model
  Vector ln2_gain, ln2_bias;  // d_model
};

// All trainable tensors. Values are kept float32-representable at every
// mutation point (init, optimizer step, checkpoint load) so that the
// 32-bit checkpoint round-trips bit-exactly; arithmetic stays in double.
struct ModelParams {
  ModelConfig config;
  Matrix embedding;  // vocab_size x d_model
  std::vector<LayerParams> layers;
  Vector cls_w;  // d_model
  Vector cls_b;  // 1

  static ModelParams zeros_like(const ModelParams& other);
};

// Visits every tensor with a stable name, in a fixed order shared by the
// optimizer, the checkpoint writer and the gradient tests.
template <typename Params, typename Fn>
void for_each_tensor(Params& p, Fn&& fn) {
  fn(std::string("embedding"), p.embedding);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& layer = p.layers[l];
    const std::string base = "layer" + std::to_string(l) + ".";
    fn(base + "wq", layer.wq);
    fn(base + "wk", layer.wk);
    fn(base + "wv", layer.wv);
    fn(base + "wo", layer.wo);
    fn(base + "ffn.w1", layer.w1);
    fn(base + "ffn.b1", layer.b1);
    fn(base + "ffn.w2", layer.w2);
    fn(base + "ffn.b2", layer.b2);
    fn(base + "ln1.gain", layer.ln1_gain);
    fn(base + "ln1.bias", layer.ln1_bias);
    fn(base + "ln2.gain", layer.ln2_gain);
    fn(base + "ln2.bias", layer.ln2_bias);
  }
  fn(std::string("classifier.w"), p.cls_w);
  fn(std::string("classifier.b"), p.cls_b);
}

// Rounds every coefficient through float32 (see ModelParams).
void round_params_to_float(ModelParams& params);

// Sinusoidal table: PE[pos, 2i] = sin(pos / 10000^(2i/d)),
// PE[pos, 2i+1] = cos(pos / 10000^(2i/d)).
Matrix positional_encoding(std::int32_t context_len, std::int32_t d_model);

// Scaled-uniform init, bound sqrt(6 / (fan_in + fan_out)); layer-norm
// gains 1, all biases 0. Deterministic per seed.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

struct LayerCache {
  Matrix input;                   // L x d, into the attention sublayer
  Matrix q, k, v;                 // L x d
  std::vector<Matrix> attn;       // per head, L x L row-stochastic
  Matrix heads_concat;            // L x d
  Matrix mha_out;                 // L x d
  Matrix drop1;                   // mask (0 or 1/(1-p)); empty in eval mode
  Matrix res1;                    // input + dropped attention output
  Matrix ln1_xhat;                // normalized pre-affine
  Vector ln1_inv_std;
  Matrix ln1_out;
  Matrix ffn_pre;                 // L x d_ff
  Matrix ffn_act;
  Matrix ffn_out;                 // L x d
  Matrix drop2;
  Matrix res2;
  Matrix ln2_xhat;
  Vector ln2_inv_std;
  Matrix ln2_out;
};

struct SampleCache {
  std::vector<std::int32_t> ids;  // the L ids actually computed
  std::int32_t true_len = 0;
  std::int32_t len = 0;  // compute length (batch max of true_len)
  bool train_mode = false;
  Matrix x0;  // embeddings + positions
  std::vector<LayerCache> layers;
  Vector pooled;
  double logit = 0.0;
  double score = 0.0;
};

struct ForwardCache {
  ModelConfig config;
  std::vector<SampleCache> samples;
};

struct ForwardResult {
  std::vector<double> scores;
  ForwardCache cache;
};

// Single-sample pipeline. `len` is the compute length (>= true_len);
// attention masks key positions >= true_len and pooling averages only
// positions < true_len, so extra padding never changes the score.
SampleCache forward_one(const ModelParams& params, const TokenSequence& seq,
                        std::int32_t len, bool train_mode,
                        std::uint64_t dropout_seed);

// Batch forward. Per-sample dropout streams derive from (seed, index) so
// results do not depend on evaluation order.
ForwardResult forward(const ModelParams& params,
                      std::span<const TokenSequence> batch, bool train_mode,
                      std::uint64_t seed);

// Accumulates one sample's contribution: upstream is dLoss/dlogit.
void backward_one(const ModelParams& params, const SampleCache& cache,
                  double upstream, ModelParams& grads);

// Exact gradients of the scalar loss for the whole cached batch;
// upstream[i] is dLoss/dlogit of sample i. Throws CacheMismatch when the
// cache does not fit the parameters.
ModelParams backward(const ModelParams& params, const ForwardCache& cache,
                     std::span<const double> upstream);

double sigmoid(double logit);

}  // namespace maldet
