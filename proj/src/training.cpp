#include "cpmf/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "cpmf/corpus.hpp"
#include "cpmf/errors.hpp"
#include "cpmf/kernels.hpp"
#include "cpmf/rng.hpp"

namespace cpmf {

void TrainConfig::validate() const {
  if (warmup_steps > total_steps)
    throw ConfigError("warmup_steps must be <= total_steps");
  if (total_steps < 1) throw ConfigError("total_steps must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("betas must lie in [0, 1)");
  if (!(lr_max >= 0.0) || !std::isfinite(lr_max))
    throw ConfigError("lr_max must be finite and >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(eps > 0.0)) throw ConfigError("eps must be > 0");
  if (grad_clip && !(*grad_clip > 0.0))
    throw ConfigError("grad_clip must be > 0 when set");
}

OptimizerState OptimizerState::init(const ModelConfig& config) {
  OptimizerState s;
  s.m = Parameters::zeros(config);
  s.v = Parameters::zeros(config);
  s.t = 0;
  return s;
}

namespace {

std::vector<Tensor*> tensor_ptrs(Parameters& p) {
  std::vector<Tensor*> v;
  p.for_each_tensor([&](const std::string&, Tensor& t) { v.push_back(&t); });
  return v;
}

std::vector<const Tensor*> tensor_ptrs(const Parameters& p) {
  std::vector<const Tensor*> v;
  p.for_each_tensor(
      [&](const std::string&, const Tensor& t) { v.push_back(&t); });
  return v;
}

void layer_norm_backward(const double* x, const double* gain,
                         const double* mean, const double* rstd,
                         const double* dy, std::size_t rows, std::size_t dim,
                         double* dx_acc, double* dgain_acc, double* dbias_acc) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * dim;
    const double* dyr = dy + r * dim;
    double* dxr = dx_acc + r * dim;
    const double mu = mean[r];
    const double rs = rstd[r];
    double sum_dxhat = 0.0;
    double sum_dxhat_xhat = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      const double xhat = (xr[j] - mu) * rs;
      const double dxhat = dyr[j] * gain[j];
      dgain_acc[j] += dyr[j] * xhat;
      dbias_acc[j] += dyr[j];
      sum_dxhat += dxhat;
      sum_dxhat_xhat += dxhat * xhat;
    }
    const double inv_dim = 1.0 / static_cast<double>(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      const double xhat = (xr[j] - mu) * rs;
      const double dxhat = dyr[j] * gain[j];
      dxr[j] += rs * (dxhat - inv_dim * sum_dxhat - xhat * inv_dim * sum_dxhat_xhat);
    }
  }
}

void check_finite(const Parameters& grads) {
  grads.for_each_tensor([](const std::string& name, const Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (!std::isfinite(t[i]))
        throw NonFiniteError("gradient tensor " + name);
    }
  });
}

}  // namespace

Parameters backward(const ForwardTrace& trace, const Parameters& params,
                    std::span<const TokenId> targets, std::size_t first_row) {
  const ModelConfig& cfg = params.config;
  const std::size_t T = trace.ids.size();
  const std::size_t d = cfg.d_model;
  const std::size_t dh = cfg.d_head;
  const std::size_t V = cfg.vocab_size;
  if (trace.layers.size() != cfg.n_layers ||
      trace.logits.rows() != T || trace.logits.cols() != V)
    throw ShapeError("trace does not match the parameters");
  if (targets.empty() || first_row + targets.size() > T)
    throw ShapeError("targets do not fit the trace");

  Parameters grads = Parameters::zeros(cfg);

  // d(logits): softmax minus one-hot on scored rows, averaged.
  Tensor dlogits({T, V});
  const double inv_n = 1.0 / static_cast<double>(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const std::size_t r = first_row + i;
    const TokenId target = targets[i];
    if (target < 0 || static_cast<std::size_t>(target) >= V)
      throw IdOutOfRangeError("target id " + std::to_string(target));
    const double* row = trace.logits.row(r);
    double* drow = dlogits.row(r);
    const double m = kernels::max(row, V);
    double sum = 0.0;
    for (std::size_t j = 0; j < V; ++j) {
      drow[j] = std::exp(row[j] - m);
      sum += drow[j];
    }
    kernels::scale(inv_n / sum, drow, V);
    drow[target] -= inv_n;
  }

  // Tied head: logits = final_ln_out * E^T.
  Tensor d_final_ln({T, d});
  kernels::matmul(dlogits.data(), params.token_embedding.data(),
                  d_final_ln.data(), T, V, d);
  kernels::matmul_tn_acc(dlogits.data(), trace.final_ln_out.data(),
                         grads.token_embedding.data(), T, V, d);

  // Final layer norm.
  const Tensor& final_in = trace.layers.back().out;
  Tensor dx({T, d});
  layer_norm_backward(final_in.data(), params.final_ln_gain.data(),
                      trace.final_ln_mean.data(), trace.final_ln_rstd.data(),
                      d_final_ln.data(), T, d, dx.data(),
                      grads.final_ln_gain.data(), grads.final_ln_bias.data());

  Tensor d_act({T, 4 * d});
  Tensor d_pre({T, 4 * d});
  Tensor d_ln({T, d});
  Tensor d_res1({T, d});
  Tensor d_ctx({T, d});
  Tensor d_qkv({T, 3 * d});

  for (std::size_t l = cfg.n_layers; l-- > 0;) {
    const LayerParams& lp = params.layers[l];
    LayerParams& gp = grads.layers[l];
    const LayerTrace& lt = trace.layers[l];

    // out = res1 + mlp_act * W_out
    kernels::matmul_nt(dx.data(), lp.mlp_out_w.data(), d_act.data(), T, d,
                       4 * d);
    kernels::matmul_tn_acc(lt.mlp_act.data(), dx.data(), gp.mlp_out_w.data(),
                           T, 4 * d, d);
    for (std::size_t i = 0; i < d_pre.size(); ++i)
      d_pre[i] = d_act[i] * gelu_grad(lt.mlp_pre[i]);

    kernels::matmul_nt(d_pre.data(), lp.mlp_in_w.data(), d_ln.data(), T, 4 * d,
                       d);
    kernels::matmul_tn_acc(lt.ln2_out.data(), d_pre.data(), gp.mlp_in_w.data(),
                           T, d, 4 * d);

    d_res1 = dx;  // residual branch
    layer_norm_backward(lt.res1.data(), lp.ln2_gain.data(), lt.ln2_mean.data(),
                        lt.ln2_rstd.data(), d_ln.data(), T, d, d_res1.data(),
                        gp.ln2_gain.data(), gp.ln2_bias.data());

    // res1 = x_in + ctx * W_o
    kernels::matmul_nt(d_res1.data(), lp.attn_out_w.data(), d_ctx.data(), T, d,
                       d);
    kernels::matmul_tn_acc(lt.attn_ctx.data(), d_res1.data(),
                           gp.attn_out_w.data(), T, d, d);

    // Attention backward, head by head.
    d_qkv.fill(0.0);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<double> d_probs;
    for (std::size_t h = 0; h < cfg.n_heads; ++h) {
      const std::size_t q_off = h * dh;
      const std::size_t k_off = d + h * dh;
      const std::size_t v_off = 2 * d + h * dh;
      const Tensor& probs = lt.attn_probs[h];
      for (std::size_t t = 0; t < T; ++t) {
        const double* dctx_row = d_ctx.row(t) + q_off;
        const double* prow = probs.row(t);
        d_probs.assign(t + 1, 0.0);
        for (std::size_t s = 0; s <= t; ++s) {
          d_probs[s] = kernels::dot(dctx_row, lt.qkv.row(s) + v_off, dh);
          kernels::axpy(prow[s], dctx_row, d_qkv.row(s) + v_off, dh);
        }
        // softmax backward on the causal row
        double inner = 0.0;
        for (std::size_t s = 0; s <= t; ++s) inner += d_probs[s] * prow[s];
        double* dq = d_qkv.row(t) + q_off;
        for (std::size_t s = 0; s <= t; ++s) {
          const double dscore = prow[s] * (d_probs[s] - inner) * scale;
          kernels::axpy(dscore, lt.qkv.row(s) + k_off, dq, dh);
          kernels::axpy(dscore, lt.qkv.row(t) + q_off, d_qkv.row(s) + k_off,
                        dh);
        }
      }
    }

    kernels::matmul_nt(d_qkv.data(), lp.qkv_w.data(), d_ln.data(), T, 3 * d, d);
    kernels::matmul_tn_acc(lt.ln1_out.data(), d_qkv.data(), gp.qkv_w.data(), T,
                           d, 3 * d);

    dx = d_res1;  // residual branch into the layer input
    layer_norm_backward(lt.x_in.data(), lp.ln1_gain.data(), lt.ln1_mean.data(),
                        lt.ln1_rstd.data(), d_ln.data(), T, d, dx.data(),
                        gp.ln1_gain.data(), gp.ln1_bias.data());
  }

  // Embeddings.
  for (std::size_t t = 0; t < T; ++t) {
    kernels::axpy(1.0, dx.row(t), grads.token_embedding.row(trace.ids[t]), d);
    kernels::axpy(1.0, dx.row(t), grads.position_embedding.row(t), d);
  }
  return grads;
}

void adam_step(Parameters& params, const Parameters& grads,
               OptimizerState& state, double lr, double beta1, double beta2,
               double eps) {
  if (params.config.n_layers != grads.config.n_layers ||
      params.config.d_model != grads.config.d_model ||
      params.config.vocab_size != grads.config.vocab_size)
    throw ShapeError("gradient shapes do not match the parameters");
  check_finite(grads);
  state.t += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));

  const auto thetas = tensor_ptrs(params);
  const auto ms = tensor_ptrs(state.m);
  const auto vs = tensor_ptrs(state.v);
  const auto gs = tensor_ptrs(grads);
  for (std::size_t i = 0; i < thetas.size(); ++i) {
    thetas[i]->require_shape(*gs[i], "gradient tensor shape");
    kernels::adam_update(thetas[i]->data(), ms[i]->data(), vs[i]->data(),
                         gs[i]->data(), thetas[i]->size(), lr, beta1, beta2,
                         eps, bc1, bc2);
  }
}

double lr_schedule(std::size_t step, const TrainConfig& config) {
  config.validate();
  if (step > config.total_steps)
    throw ConfigError("schedule step " + std::to_string(step) +
                      " is past total_steps");
  if (step <= config.warmup_steps) {
    if (config.warmup_steps == 0) return config.lr_max;
    return config.lr_max * static_cast<double>(step) /
           static_cast<double>(config.warmup_steps);
  }
  const std::size_t decay_len = config.total_steps - config.warmup_steps;
  return config.lr_max * static_cast<double>(config.total_steps - step) /
         static_cast<double>(decay_len);
}

double grad_check(const ModelConfig& config, std::uint64_t seed, double eps,
                  const std::string& corrupt_tensor) {
  if (!(eps > 0.0)) throw InvalidEpsilonError("eps must be > 0");
  config.validate();
  Parameters params = init_params(config, seed);
  Rng rng(derive_seed(seed, 0xC0DE));
  const std::size_t T = std::min<std::size_t>(config.max_seq_len, 6);
  std::vector<TokenId> ids(T);
  for (auto& id : ids)
    id = static_cast<TokenId>(rng.next_below(config.vocab_size));
  std::vector<TokenId> targets(ids.begin() + 1, ids.end());

  ForwardTrace trace;
  forward(params, ids, &trace);
  Parameters analytic = backward(trace, params, targets, 0);
  if (!corrupt_tensor.empty()) {
    bool found = false;
    analytic.for_each_tensor([&](const std::string& name, Tensor& t) {
      if (name != corrupt_tensor) return;
      found = true;
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = 2.0 * t[i] + 0.25;
    });
    if (!found) throw ConfigError("unknown tensor: " + corrupt_tensor);
  }

  auto loss_at = [&]() {
    const Tensor logits = forward(params, ids);
    return cross_entropy(logits, targets, 0);
  };

  constexpr std::size_t kSamplesPerTensor = 200;
  double max_rel = 0.0;
  std::vector<std::pair<std::string, Tensor*>> named;
  params.for_each_tensor([&](const std::string& name, Tensor& t) {
    named.emplace_back(name, &t);
  });
  const auto analytic_ptrs = tensor_ptrs(analytic);
  for (std::size_t ti = 0; ti < named.size(); ++ti) {
    Tensor& theta = *named[ti].second;
    const Tensor* g = analytic_ptrs[ti];
    const std::size_t n = theta.size();
    const std::size_t samples = std::min(kSamplesPerTensor, n);
    for (std::size_t s = 0; s < samples; ++s) {
      const std::size_t i =
          n <= kSamplesPerTensor ? s : static_cast<std::size_t>(rng.next_below(n));
      const double saved = theta[i];
      theta[i] = saved + eps;
      const double lp = loss_at();
      theta[i] = saved - eps;
      const double lm = loss_at();
      theta[i] = saved;
      const double fd = (lp - lm) / (2.0 * eps);
      const double a = (*g)[i];
      // Guarded relative error: the floor keeps finite-difference noise on
      // near-zero coordinates from dominating.
      const double rel =
          std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-4});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

std::size_t worker_thread_count() {
  if (const char* env = std::getenv("CPM_FORGE_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n <= 1) return 1;
    return static_cast<std::size_t>(n);
  }
  return 1;
}

namespace {

void add_params(Parameters& into, const Parameters& other) {
  const auto dst = tensor_ptrs(into);
  const auto src = tensor_ptrs(other);
  for (std::size_t i = 0; i < dst.size(); ++i) {
    kernels::axpy(1.0, src[i]->data(), dst[i]->data(), dst[i]->size());
  }
}

void scale_params(Parameters& p, double a) {
  p.for_each_tensor([&](const std::string&, Tensor& t) {
    kernels::scale(a, t.data(), t.size());
  });
}

double global_norm(const Parameters& p) {
  double total = 0.0;
  p.for_each_tensor([&](const std::string&, const Tensor& t) {
    total += kernels::dot(t.data(), t.data(), t.size());
  });
  return std::sqrt(total);
}

}  // namespace

TrainResult train(const std::vector<std::vector<TokenId>>& sequences,
                  const ModelConfig& model_config, const TrainConfig& config) {
  model_config.validate();
  config.validate();
  if (sequences.empty()) throw EmptyCorpusError("no training sequences");
  const std::size_t seq_len = sequences.front().size();
  if (seq_len < 2) throw ShapeError("sequences must hold at least 2 tokens");
  for (const auto& s : sequences) {
    if (s.size() != seq_len)
      throw ShapeError("training sequences must share one length");
  }

  TrainResult result;
  result.params = init_params(model_config, config.seed);
  OptimizerState state = OptimizerState::init(model_config);
  result.loss_series.reserve(config.total_steps);

  const std::size_t n_threads = worker_thread_count();
  std::size_t epoch = 0;
  std::size_t batch_index = 0;
  auto epoch_batches = batches(sequences, config.batch_size,
                               derive_seed(config.seed, epoch));

  for (std::size_t step = 0; step < config.total_steps; ++step) {
    if (batch_index >= epoch_batches.size()) {
      ++epoch;
      batch_index = 0;
      epoch_batches =
          batches(sequences, config.batch_size, derive_seed(config.seed, epoch));
    }
    const auto& batch = epoch_batches[batch_index++];

    Parameters batch_grads = Parameters::zeros(model_config);
    double batch_loss = 0.0;
    auto process_range = [&](std::size_t begin, std::size_t end,
                             Parameters& grads_out, double& loss_out) {
      for (std::size_t i = begin; i < end; ++i) {
        const auto& seq = batch[i];
        ForwardTrace trace;
        forward(result.params, seq, &trace);
        const std::span<const TokenId> targets(seq.data() + 1, seq.size() - 1);
        loss_out += cross_entropy(trace.logits, targets, 0);
        add_params(grads_out, backward(trace, result.params, targets, 0));
      }
    };

    if (n_threads <= 1 || batch.size() <= 1) {
      process_range(0, batch.size(), batch_grads, batch_loss);
    } else {
      const std::size_t used = std::min(n_threads, batch.size());
      std::vector<Parameters> shard_grads;
      std::vector<double> shard_loss(used, 0.0);
      shard_grads.reserve(used);
      for (std::size_t i = 0; i < used; ++i)
        shard_grads.push_back(Parameters::zeros(model_config));
      std::vector<std::thread> threads;
      const std::size_t per = (batch.size() + used - 1) / used;
      for (std::size_t w = 0; w < used; ++w) {
        const std::size_t begin = w * per;
        const std::size_t end = std::min(begin + per, batch.size());
        threads.emplace_back([&, w, begin, end] {
          if (begin < end)
            process_range(begin, end, shard_grads[w], shard_loss[w]);
        });
      }
      for (auto& t : threads) t.join();
      // Combine in worker index order so reruns are bit-identical.
      for (std::size_t w = 0; w < used; ++w) {
        add_params(batch_grads, shard_grads[w]);
        batch_loss += shard_loss[w];
      }
    }

    const double inv = 1.0 / static_cast<double>(batch.size());
    scale_params(batch_grads, inv);
    batch_loss *= inv;

    if (config.grad_clip) {
      const double norm = global_norm(batch_grads);
      if (norm > *config.grad_clip)
        scale_params(batch_grads, *config.grad_clip / norm);
    }

    // The optimizer at 0-based step i sits at schedule position i + 1.
    const double lr =
        lr_schedule(std::min(step + 1, config.total_steps), config);
    adam_step(result.params, batch_grads, state, lr, config.beta1, config.beta2,
              config.eps);
    result.loss_series.push_back({step, batch_loss, lr});
  }
  return result;
}

}  // namespace cpmf
