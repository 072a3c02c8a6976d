#include "maldet/model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "maldet/errors.hpp"
#include "maldet/rng.hpp"

namespace maldet {
namespace {

constexpr double kLnEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

double gelu(double z) {
  return 0.5 * z * (1.0 + std::tanh(kGeluC * (z + kGeluA * z * z * z)));
}

double gelu_grad(double z) {
  double u = kGeluC * (z + kGeluA * z * z * z);
  double t = std::tanh(u);
  double du = kGeluC * (1.0 + 3.0 * kGeluA * z * z);
  return 0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * du;
}

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = (2.0 * rng.next_unit() - 1.0) * bound;
    }
  }
  return m;
}

double glorot_bound(double fan_in, double fan_out) {
  return std::sqrt(6.0 / (fan_in + fan_out));
}

// Row-wise layer normalization; writes the pre-affine normalized rows and
// per-row inverse standard deviations for the backward pass.
Matrix layer_norm(const Matrix& x, const Vector& gain, const Vector& bias,
                  Matrix& xhat, Vector& inv_std) {
  const auto rows = x.rows();
  const auto cols = x.cols();
  xhat.resize(rows, cols);
  inv_std.resize(rows);
  Matrix out(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    double mean = x.row(r).mean();
    double var = (x.row(r).array() - mean).square().sum() / static_cast<double>(cols);
    double is = 1.0 / std::sqrt(var + kLnEps);
    inv_std(r) = is;
    xhat.row(r) = (x.row(r).array() - mean) * is;
    out.row(r) = xhat.row(r).array() * gain.transpose().array() +
                 bias.transpose().array();
  }
  return out;
}

Matrix layer_norm_backward(const Matrix& dout, const Matrix& xhat,
                           const Vector& inv_std, const Vector& gain,
                           Vector& dgain, Vector& dbias) {
  const auto rows = dout.rows();
  const auto cols = dout.cols();
  Matrix dx(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    dgain += (dout.row(r).array() * xhat.row(r).array()).matrix().transpose();
    dbias += dout.row(r).transpose();
    Eigen::ArrayXd dxhat = dout.row(r).array() * gain.transpose().array();
    double m1 = dxhat.mean();
    double m2 = (dxhat * xhat.row(r).array()).mean();
    dx.row(r) = ((dxhat - m1 - xhat.row(r).array() * m2) * inv_std(r)).matrix();
  }
  return dx;
}

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  const double keep_scale = 1.0 / (1.0 - rate);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = rng.next_unit() < rate ? 0.0 : keep_scale;
    }
  }
  return m;
}

void check_cache(const ModelParams& params, const ForwardCache& cache) {
  const auto& c = params.config;
  if (cache.config.d_model != c.d_model || cache.config.n_heads != c.n_heads ||
      cache.config.n_layers != c.n_layers || cache.config.d_ff != c.d_ff ||
      cache.config.vocab_size != c.vocab_size) {
    throw CacheMismatch("forward cache does not match the model configuration");
  }
  for (const auto& s : cache.samples) {
    if (static_cast<std::int32_t>(s.layers.size()) != c.n_layers) {
      throw CacheMismatch("forward cache layer count mismatch");
    }
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size <= 0) throw std::invalid_argument("vocab_size must be positive");
  if (d_model <= 0 || n_heads <= 0 || d_model % n_heads != 0) {
    throw std::invalid_argument("d_model must be a positive multiple of n_heads");
  }
  if (d_model % 2 != 0) {
    throw std::invalid_argument("d_model must be even for sinusoidal positions");
  }
  if (n_layers <= 0) throw std::invalid_argument("n_layers must be positive");
  if (d_ff < d_model) throw std::invalid_argument("d_ff must be >= d_model");
  if (context_len < 1) throw std::invalid_argument("context_len must be >= 1");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw std::invalid_argument("dropout_rate must be in [0, 1)");
  }
}

ModelParams ModelParams::zeros_like(const ModelParams& other) {
  ModelParams z;
  z.config = other.config;
  z.embedding = Matrix::Zero(other.embedding.rows(), other.embedding.cols());
  z.layers.resize(other.layers.size());
  for (std::size_t l = 0; l < other.layers.size(); ++l) {
    const auto& src = other.layers[l];
    auto& dst = z.layers[l];
    dst.wq = Matrix::Zero(src.wq.rows(), src.wq.cols());
    dst.wk = Matrix::Zero(src.wk.rows(), src.wk.cols());
    dst.wv = Matrix::Zero(src.wv.rows(), src.wv.cols());
    dst.wo = Matrix::Zero(src.wo.rows(), src.wo.cols());
    dst.w1 = Matrix::Zero(src.w1.rows(), src.w1.cols());
    dst.b1 = Vector::Zero(src.b1.size());
    dst.w2 = Matrix::Zero(src.w2.rows(), src.w2.cols());
    dst.b2 = Vector::Zero(src.b2.size());
    dst.ln1_gain = Vector::Zero(src.ln1_gain.size());
    dst.ln1_bias = Vector::Zero(src.ln1_bias.size());
    dst.ln2_gain = Vector::Zero(src.ln2_gain.size());
    dst.ln2_bias = Vector::Zero(src.ln2_bias.size());
  }
  z.cls_w = Vector::Zero(other.cls_w.size());
  z.cls_b = Vector::Zero(1);
  return z;
}

void round_params_to_float(ModelParams& params) {
  for_each_tensor(params, [](const std::string&, auto& tensor) {
    for (Eigen::Index i = 0; i < tensor.size(); ++i) {
      tensor.data()[i] = static_cast<double>(static_cast<float>(tensor.data()[i]));
    }
  });
}

Matrix positional_encoding(std::int32_t context_len, std::int32_t d_model) {
  if (d_model % 2 != 0) {
    throw std::invalid_argument("positional encoding requires even d_model");
  }
  Matrix pe(context_len, d_model);
  for (std::int32_t pos = 0; pos < context_len; ++pos) {
    for (std::int32_t i = 0; i < d_model / 2; ++i) {
      double rate = std::pow(10000.0, (2.0 * i) / static_cast<double>(d_model));
      double angle = static_cast<double>(pos) / rate;
      pe(pos, 2 * i) = std::sin(angle);
      pe(pos, 2 * i + 1) = std::cos(angle);
    }
  }
  return pe;
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const auto d = config.d_model;
  const auto dff = config.d_ff;

  ModelParams p;
  p.config = config;
  p.embedding = uniform_matrix(config.vocab_size, d,
                               glorot_bound(config.vocab_size, d), rng);
  p.layers.resize(static_cast<std::size_t>(config.n_layers));
  for (auto& layer : p.layers) {
    const double attn_bound = glorot_bound(d, d);
    layer.wq = uniform_matrix(d, d, attn_bound, rng);
    layer.wk = uniform_matrix(d, d, attn_bound, rng);
    layer.wv = uniform_matrix(d, d, attn_bound, rng);
    layer.wo = uniform_matrix(d, d, attn_bound, rng);
    layer.w1 = uniform_matrix(d, dff, glorot_bound(d, dff), rng);
    layer.b1 = Vector::Zero(dff);
    layer.w2 = uniform_matrix(dff, d, glorot_bound(dff, d), rng);
    layer.b2 = Vector::Zero(d);
    layer.ln1_gain = Vector::Ones(d);
    layer.ln1_bias = Vector::Zero(d);
    layer.ln2_gain = Vector::Ones(d);
    layer.ln2_bias = Vector::Zero(d);
  }
  p.cls_w = uniform_matrix(d, 1, glorot_bound(d, 1), rng);
  p.cls_b = Vector::Zero(1);
  round_params_to_float(p);
  return p;
}

double sigmoid(double logit) { return 1.0 / (1.0 + std::exp(-logit)); }

SampleCache forward_one(const ModelParams& params, const TokenSequence& seq,
                        std::int32_t len, bool train_mode,
                        std::uint64_t dropout_seed) {
  const auto& config = params.config;
  const auto d = config.d_model;
  const auto heads = config.n_heads;
  const auto dh = config.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const double neg_inf = -std::numeric_limits<double>::infinity();

  SampleCache cache;
  cache.true_len = std::min(seq.true_len, len);
  cache.len = len;
  cache.train_mode = train_mode;

  if (len <= 0 || seq.true_len == 0) {
    // Degenerate all-PAD input: pooled vector is defined as zero.
    cache.len = 0;
    cache.pooled = Vector::Zero(d);
    cache.logit = params.cls_b(0);
    cache.score = sigmoid(cache.logit);
    return cache;
  }

  cache.ids.assign(seq.ids.begin(), seq.ids.begin() + len);
  for (std::int32_t id : cache.ids) {
    if (id < 0 || id >= config.vocab_size) {
      throw IdOutOfRange("token id " + std::to_string(id) +
                         " out of range for vocab of " +
                         std::to_string(config.vocab_size));
    }
  }

  static thread_local Matrix pe_table;
  if (config.use_positional &&
      (pe_table.rows() < len || pe_table.cols() != d)) {
    pe_table = positional_encoding(std::max<std::int32_t>(len, config.context_len), d);
  }

  cache.x0.resize(len, d);
  for (std::int32_t t = 0; t < len; ++t) {
    cache.x0.row(t) = params.embedding.row(cache.ids[static_cast<std::size_t>(t)]);
    if (config.use_positional) cache.x0.row(t) += pe_table.row(t);
  }

  Rng drop_rng(dropout_seed);
  Matrix x = cache.x0;
  cache.layers.resize(static_cast<std::size_t>(config.n_layers));
  for (std::size_t l = 0; l < cache.layers.size(); ++l) {
    auto& lc = cache.layers[l];
    const auto& lp = params.layers[l];
    lc.input = x;
    lc.q.noalias() = x * lp.wq;
    lc.k.noalias() = x * lp.wk;
    lc.v.noalias() = x * lp.wv;

    lc.attn.resize(static_cast<std::size_t>(heads));
    lc.heads_concat.resize(len, d);
    for (std::int32_t h = 0; h < heads; ++h) {
      auto qh = lc.q.middleCols(h * dh, dh);
      auto kh = lc.k.middleCols(h * dh, dh);
      auto vh = lc.v.middleCols(h * dh, dh);
      Matrix scores = qh * kh.transpose() * scale;
      for (std::int32_t j = cache.true_len; j < len; ++j) {
        scores.col(j).setConstant(neg_inf);  // PAD keys carry no mass
      }
      Matrix& attn = lc.attn[static_cast<std::size_t>(h)];
      attn.resize(len, len);
      for (std::int32_t r = 0; r < len; ++r) {
        double row_max = scores.row(r).head(cache.true_len).maxCoeff();
        Eigen::ArrayXd e = (scores.row(r).array() - row_max).exp();
        attn.row(r) = (e / e.sum()).matrix();
      }
      lc.heads_concat.middleCols(h * dh, dh).noalias() = attn * vh;
    }
    lc.mha_out.noalias() = lc.heads_concat * lp.wo;

    if (train_mode && config.dropout_rate > 0.0) {
      lc.drop1 = dropout_mask(len, d, config.dropout_rate, drop_rng);
      lc.res1 = x + lc.mha_out.cwiseProduct(lc.drop1);
    } else {
      lc.res1 = x + lc.mha_out;
    }
    lc.ln1_out = layer_norm(lc.res1, lp.ln1_gain, lp.ln1_bias, lc.ln1_xhat,
                            lc.ln1_inv_std);

    lc.ffn_pre.noalias() = lc.ln1_out * lp.w1;
    lc.ffn_pre.rowwise() += lp.b1.transpose();
    lc.ffn_act = lc.ffn_pre.unaryExpr([](double z) { return gelu(z); });
    lc.ffn_out.noalias() = lc.ffn_act * lp.w2;
    lc.ffn_out.rowwise() += lp.b2.transpose();

    if (train_mode && config.dropout_rate > 0.0) {
      lc.drop2 = dropout_mask(len, d, config.dropout_rate, drop_rng);
      lc.res2 = lc.ln1_out + lc.ffn_out.cwiseProduct(lc.drop2);
    } else {
      lc.res2 = lc.ln1_out + lc.ffn_out;
    }
    lc.ln2_out = layer_norm(lc.res2, lp.ln2_gain, lp.ln2_bias, lc.ln2_xhat,
                            lc.ln2_inv_std);
    x = lc.ln2_out;
  }

  cache.pooled = Vector::Zero(d);
  for (std::int32_t t = 0; t < cache.true_len; ++t) {
    cache.pooled += x.row(t).transpose();
  }
  cache.pooled /= static_cast<double>(cache.true_len);
  cache.logit = params.cls_w.dot(cache.pooled) + params.cls_b(0);
  cache.score = sigmoid(cache.logit);
  return cache;
}

ForwardResult forward(const ModelParams& params,
                      std::span<const TokenSequence> batch, bool train_mode,
                      std::uint64_t seed) {
  params.config.validate();
  std::int32_t len = 0;
  for (const auto& seq : batch) len = std::max(len, seq.true_len);

  ForwardResult result;
  result.cache.config = params.config;
  result.cache.samples.reserve(batch.size());
  result.scores.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::uint64_t sample_seed = derive_seed(seed, i);
    result.cache.samples.push_back(
        forward_one(params, batch[i], len, train_mode, sample_seed));
    result.scores.push_back(result.cache.samples.back().score);
  }
  return result;
}

void backward_one(const ModelParams& params, const SampleCache& cache,
                  double upstream, ModelParams& grads) {
  const auto& config = params.config;
  const auto d = config.d_model;
  const auto heads = config.n_heads;
  const auto dh = config.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const std::int32_t len = cache.len;

  grads.cls_b(0) += upstream;
  if (len == 0 || cache.true_len == 0) return;

  grads.cls_w += upstream * cache.pooled;
  Vector d_pooled = upstream * params.cls_w;

  Matrix dx = Matrix::Zero(len, d);
  for (std::int32_t t = 0; t < cache.true_len; ++t) {
    dx.row(t) = d_pooled.transpose() / static_cast<double>(cache.true_len);
  }

  for (std::int32_t l = config.n_layers - 1; l >= 0; --l) {
    const auto& lp = params.layers[static_cast<std::size_t>(l)];
    const auto& lc = cache.layers[static_cast<std::size_t>(l)];
    auto& lg = grads.layers[static_cast<std::size_t>(l)];

    // ln2
    Matrix dres2 = layer_norm_backward(dx, lc.ln2_xhat, lc.ln2_inv_std,
                                       lp.ln2_gain, lg.ln2_gain, lg.ln2_bias);

    // res2 = ln1_out + drop2 .* ffn_out
    Matrix dffn_out = cache.train_mode && lc.drop2.size() > 0
                          ? dres2.cwiseProduct(lc.drop2)
                          : dres2;
    Matrix dln1_out = dres2;

    // ffn
    lg.w2.noalias() += lc.ffn_act.transpose() * dffn_out;
    lg.b2 += dffn_out.colwise().sum().transpose();
    Matrix dact = dffn_out * lp.w2.transpose();
    Matrix dpre = dact.cwiseProduct(
        lc.ffn_pre.unaryExpr([](double z) { return gelu_grad(z); }));
    lg.w1.noalias() += lc.ln1_out.transpose() * dpre;
    lg.b1 += dpre.colwise().sum().transpose();
    dln1_out.noalias() += dpre * lp.w1.transpose();

    // ln1
    Matrix dres1 = layer_norm_backward(dln1_out, lc.ln1_xhat, lc.ln1_inv_std,
                                       lp.ln1_gain, lg.ln1_gain, lg.ln1_bias);

    // res1 = input + drop1 .* mha_out
    Matrix dmha = cache.train_mode && lc.drop1.size() > 0
                      ? dres1.cwiseProduct(lc.drop1)
                      : dres1;
    Matrix dinput = dres1;

    // output projection
    lg.wo.noalias() += lc.heads_concat.transpose() * dmha;
    Matrix dconcat = dmha * lp.wo.transpose();

    // attention heads
    Matrix dq = Matrix::Zero(len, d);
    Matrix dk = Matrix::Zero(len, d);
    Matrix dv = Matrix::Zero(len, d);
    for (std::int32_t h = 0; h < heads; ++h) {
      const Matrix& attn = lc.attn[static_cast<std::size_t>(h)];
      auto vh = lc.v.middleCols(h * dh, dh);
      auto qh = lc.q.middleCols(h * dh, dh);
      auto kh = lc.k.middleCols(h * dh, dh);
      Matrix doh = dconcat.middleCols(h * dh, dh);

      Matrix dattn = doh * vh.transpose();
      dv.middleCols(h * dh, dh).noalias() = attn.transpose() * doh;

      Matrix dscores(len, len);
      for (std::int32_t r = 0; r < len; ++r) {
        double dot = dattn.row(r).dot(attn.row(r));
        dscores.row(r) =
            (attn.row(r).array() * (dattn.row(r).array() - dot)).matrix();
      }
      dq.middleCols(h * dh, dh).noalias() = dscores * kh * scale;
      dk.middleCols(h * dh, dh).noalias() = dscores.transpose() * qh * scale;
    }

    lg.wq.noalias() += lc.input.transpose() * dq;
    lg.wk.noalias() += lc.input.transpose() * dk;
    lg.wv.noalias() += lc.input.transpose() * dv;
    dinput.noalias() += dq * lp.wq.transpose();
    dinput.noalias() += dk * lp.wk.transpose();
    dinput.noalias() += dv * lp.wv.transpose();
    dx = std::move(dinput);
  }

  for (std::int32_t t = 0; t < len; ++t) {
    grads.embedding.row(cache.ids[static_cast<std::size_t>(t)]) += dx.row(t);
  }
}

ModelParams backward(const ModelParams& params, const ForwardCache& cache,
                     std::span<const double> upstream) {
  check_cache(params, cache);
  if (upstream.size() != cache.samples.size()) {
    throw CacheMismatch("upstream gradient count does not match cached batch");
  }
  ModelParams grads = ModelParams::zeros_like(params);
  for (std::size_t i = 0; i < cache.samples.size(); ++i) {
    backward_one(params, cache.samples[i], upstream[i], grads);
  }
  return grads;
}

}  // namespace maldet
