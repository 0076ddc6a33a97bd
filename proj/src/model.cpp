#include "cpmf/model.hpp"

#include <cmath>

#include "cpmf/errors.hpp"
#include "cpmf/kernels.hpp"
#include "cpmf/rng.hpp"

namespace cpmf {

void ModelConfig::validate() const {
  if (n_layers < 1 || d_model < 1 || n_heads < 1 || d_head < 1 ||
      vocab_size < 1 || max_seq_len < 1)
    throw ConfigError("model dimensions must be >= 1");
  if (n_heads * d_head != d_model)
    throw ConfigError("n_heads * d_head must equal d_model");
  if (!std::isfinite(init_std) || init_std < 0.0)
    throw ConfigError("init_std must be finite and >= 0");
}

Parameters Parameters::zeros(const ModelConfig& config) {
  config.validate();
  const std::size_t d = config.d_model;
  Parameters p;
  p.config = config;
  p.token_embedding = Tensor({config.vocab_size, d});
  p.position_embedding = Tensor({config.max_seq_len, d});
  p.layers.resize(config.n_layers);
  for (LayerParams& l : p.layers) {
    l.qkv_w = Tensor({d, 3 * d});
    l.attn_out_w = Tensor({d, d});
    l.mlp_in_w = Tensor({d, 4 * d});
    l.mlp_out_w = Tensor({4 * d, d});
    l.ln1_gain = Tensor({d});
    l.ln1_bias = Tensor({d});
    l.ln2_gain = Tensor({d});
    l.ln2_bias = Tensor({d});
  }
  p.final_ln_gain = Tensor({d});
  p.final_ln_bias = Tensor({d});
  return p;
}

Parameters init_params(const ModelConfig& config, std::uint64_t seed) {
  Parameters p = Parameters::zeros(config);
  Rng rng(seed);
  p.for_each_tensor([&](const std::string& name, Tensor& t) {
    const bool is_gain = name.ends_with("gain");
    const bool is_bias = name.ends_with("bias");
    if (is_gain) {
      t.fill(1.0);
    } else if (is_bias) {
      t.fill(0.0);
    } else {
      for (std::size_t i = 0; i < t.size(); ++i)
        t[i] = rng.next_normal() * config.init_std;
    }
  });
  return p;
}

std::size_t count_params(const ModelConfig& config) {
  config.validate();
  const std::size_t d = config.d_model;
  const std::size_t per_layer = d * 3 * d   // qkv
                                + d * d     // attention output
                                + d * 4 * d // mlp in
                                + 4 * d * d // mlp out
                                + 4 * d;    // two layer-norm gain/bias pairs
  return config.vocab_size * d + config.max_seq_len * d +
         config.n_layers * per_layer + 2 * d;
}

void layer_norm_forward(const double* x, const double* gain, const double* bias,
                        std::size_t rows, std::size_t dim, double* out,
                        double* mean, double* rstd) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * dim;
    double* yr = out + r * dim;
    const double mu = kernels::sum(xr, dim) / static_cast<double>(dim);
    double var = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      const double dx = xr[j] - mu;
      var += dx * dx;
    }
    var /= static_cast<double>(dim);
    const double rs = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t j = 0; j < dim; ++j) {
      yr[j] = (xr[j] - mu) * rs * gain[j] + bias[j];
    }
    mean[r] = mu;
    rstd[r] = rs;
  }
}

double gelu(double x) {
  constexpr double kSqrt2OverPi = 0.7978845608028654;
  const double cube = 0.044715 * x * x * x;
  return 0.5 * x * (1.0 + std::tanh(kSqrt2OverPi * (x + cube)));
}

double gelu_grad(double x) {
  constexpr double kSqrt2OverPi = 0.7978845608028654;
  const double u = kSqrt2OverPi * (x + 0.044715 * x * x * x);
  const double t = std::tanh(u);
  const double du = kSqrt2OverPi * (1.0 + 3.0 * 0.044715 * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

namespace {

// Row-wise softmax over the first `limit` entries; the rest stay zero.
void causal_softmax_row(double* row, std::size_t limit) {
  const double m = kernels::max(row, limit);
  double total = 0.0;
  for (std::size_t j = 0; j < limit; ++j) {
    row[j] = std::exp(row[j] - m);
    total += row[j];
  }
  kernels::scale(1.0 / total, row, limit);
}

}  // namespace

Tensor forward(const Parameters& params, std::span<const TokenId> ids,
               ForwardTrace* trace) {
  const ModelConfig& cfg = params.config;
  const std::size_t T = ids.size();
  const std::size_t d = cfg.d_model;
  const std::size_t dh = cfg.d_head;
  if (T == 0) throw ShapeError("empty token sequence");
  if (T > cfg.max_seq_len)
    throw SequenceTooLongError(std::to_string(T) + " > max_seq_len " +
                               std::to_string(cfg.max_seq_len));
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size)
      throw IdOutOfRangeError("token id " + std::to_string(id));
  }

  if (trace) {
    *trace = ForwardTrace{};
    trace->ids.assign(ids.begin(), ids.end());
    trace->layers.resize(cfg.n_layers);
  }

  Tensor x({T, d});
  for (std::size_t t = 0; t < T; ++t) {
    kernels::add(params.token_embedding.row(ids[t]),
                 params.position_embedding.row(t), x.row(t), d);
  }
  if (trace) trace->embedded = x;

  Tensor ln_out({T, d});
  std::vector<double> ln_mean(T), ln_rstd(T);
  Tensor qkv({T, 3 * d});
  Tensor ctx({T, d});
  Tensor proj({T, d});
  Tensor mlp_pre({T, 4 * d});
  Tensor mlp_act({T, 4 * d});

  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const LayerParams& lp = params.layers[l];
    LayerTrace* lt = trace ? &trace->layers[l] : nullptr;
    if (lt) lt->x_in = x;

    layer_norm_forward(x.data(), lp.ln1_gain.data(), lp.ln1_bias.data(), T, d,
                       ln_out.data(), ln_mean.data(), ln_rstd.data());
    if (lt) {
      lt->ln1_out = ln_out;
      lt->ln1_mean = ln_mean;
      lt->ln1_rstd = ln_rstd;
    }

    kernels::matmul(ln_out.data(), lp.qkv_w.data(), qkv.data(), T, d, 3 * d);
    if (lt) lt->qkv = qkv;

    // Attention per head; row t of scores spans keys 0..t.
    ctx.fill(0.0);
    if (lt) lt->attn_probs.assign(cfg.n_heads, Tensor({T, T}));
    Tensor scores({T, T});
    for (std::size_t h = 0; h < cfg.n_heads; ++h) {
      const std::size_t q_off = h * dh;
      const std::size_t k_off = d + h * dh;
      const std::size_t v_off = 2 * d + h * dh;
      scores.fill(0.0);
      for (std::size_t t = 0; t < T; ++t) {
        const double* q = qkv.row(t) + q_off;
        double* srow = scores.row(t);
        for (std::size_t s = 0; s <= t; ++s) {
          srow[s] = kernels::dot(q, qkv.row(s) + k_off, dh) * scale;
        }
        causal_softmax_row(srow, t + 1);
        double* out = ctx.row(t) + q_off;
        for (std::size_t s = 0; s <= t; ++s) {
          kernels::axpy(srow[s], qkv.row(s) + v_off, out, dh);
        }
      }
      if (lt) lt->attn_probs[h] = scores;
    }
    if (lt) lt->attn_ctx = ctx;

    kernels::matmul(ctx.data(), lp.attn_out_w.data(), proj.data(), T, d, d);
    kernels::add(x.data(), proj.data(), x.data(), T * d);
    if (lt) lt->res1 = x;

    layer_norm_forward(x.data(), lp.ln2_gain.data(), lp.ln2_bias.data(), T, d,
                       ln_out.data(), ln_mean.data(), ln_rstd.data());
    if (lt) {
      lt->ln2_out = ln_out;
      lt->ln2_mean = ln_mean;
      lt->ln2_rstd = ln_rstd;
    }

    kernels::matmul(ln_out.data(), lp.mlp_in_w.data(), mlp_pre.data(), T, d,
                    4 * d);
    for (std::size_t i = 0; i < mlp_pre.size(); ++i)
      mlp_act[i] = gelu(mlp_pre[i]);
    if (lt) {
      lt->mlp_pre = mlp_pre;
      lt->mlp_act = mlp_act;
    }

    kernels::matmul(mlp_act.data(), lp.mlp_out_w.data(), proj.data(), T, 4 * d,
                    d);
    kernels::add(x.data(), proj.data(), x.data(), T * d);
    if (lt) lt->out = x;
  }

  layer_norm_forward(x.data(), params.final_ln_gain.data(),
                     params.final_ln_bias.data(), T, d, ln_out.data(),
                     ln_mean.data(), ln_rstd.data());
  Tensor logits({T, cfg.vocab_size});
  kernels::matmul_nt(ln_out.data(), params.token_embedding.data(),
                     logits.data(), T, d, cfg.vocab_size);
  if (trace) {
    trace->final_ln_out = ln_out;
    trace->final_ln_mean = ln_mean;
    trace->final_ln_rstd = ln_rstd;
    trace->logits = logits;
  }
  return logits;
}

double cross_entropy(const Tensor& logits, std::span<const TokenId> targets,
                     std::size_t first_row) {
  const std::size_t V = logits.cols();
  if (targets.empty() || first_row + targets.size() > logits.rows())
    throw ShapeError("targets do not fit the logits rows");
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const TokenId target = targets[i];
    if (target < 0 || static_cast<std::size_t>(target) >= V)
      throw IdOutOfRangeError("target id " + std::to_string(target));
    const double* row = logits.row(first_row + i);
    const double m = kernels::max(row, V);
    double sum = 0.0;
    for (std::size_t j = 0; j < V; ++j) sum += std::exp(row[j] - m);
    total += m + std::log(sum) - row[target];
  }
  return total / static_cast<double>(targets.size());
}

double perplexity(const Parameters& params, std::span<const TokenId> ids,
                  std::optional<ScoreSpan> span) {
  if (ids.size() < 2) throw ShapeError("perplexity needs at least 2 tokens");
  const ScoreSpan s = span.value_or(ScoreSpan{1, ids.size()});
  if (s.begin < 1 || s.end > ids.size() || s.begin >= s.end)
    throw EmptySpanError("scored span [" + std::to_string(s.begin) + ", " +
                         std::to_string(s.end) + ")");
  const Tensor logits = forward(params, ids);
  const double nll = cross_entropy(
      logits, ids.subspan(s.begin, s.end - s.begin), s.begin - 1);
  return std::exp(nll);
}

}  // namespace cpmf
