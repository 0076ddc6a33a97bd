#include "cpmf/parallel.hpp"

#include <cmath>
#include <cstring>

#include "cpmf/errors.hpp"
#include "cpmf/kernels.hpp"

namespace cpmf {

void ShardPlan::validate(const ModelConfig& config) const {
  if (num_shards < 1) throw ConfigError("num_shards must be >= 1");
  if (config.n_heads % num_shards != 0)
    throw IndivisibleError(std::to_string(num_shards) + " shards do not divide " +
                           std::to_string(config.n_heads) + " heads");
  if ((4 * config.d_model) % num_shards != 0)
    throw IndivisibleError(std::to_string(num_shards) +
                           " shards do not divide 4*d_model");
}

namespace {

// Copies column range [col0, col0+width) of src[rows x src_cols] into
// dst[rows x dst_cols] at column dcol0.
void copy_cols(const Tensor& src, std::size_t col0, std::size_t width,
               Tensor& dst, std::size_t dcol0) {
  for (std::size_t r = 0; r < src.rows(); ++r) {
    std::memcpy(dst.row(r) + dcol0, src.row(r) + col0, width * sizeof(double));
  }
}

void copy_rows(const Tensor& src, std::size_t row0, std::size_t count,
               Tensor& dst, std::size_t drow0) {
  std::memcpy(dst.row(drow0), src.row(row0),
              count * src.cols() * sizeof(double));
}

}  // namespace

ShardedParams shard_params(const Parameters& params, std::size_t num_shards) {
  const ModelConfig& cfg = params.config;
  ShardPlan plan{num_shards};
  plan.validate(cfg);
  const std::size_t S = num_shards;
  const std::size_t d = cfg.d_model;
  const std::size_t ds = d / S;       // columns per shard, head-aligned
  const std::size_t fs = 4 * d / S;   // mlp hidden slice

  ShardedParams out;
  out.config = cfg;
  out.num_shards = S;
  out.token_embedding = params.token_embedding;
  out.position_embedding = params.position_embedding;
  out.final_ln_gain = params.final_ln_gain;
  out.final_ln_bias = params.final_ln_bias;
  out.replicated.resize(cfg.n_layers);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    out.replicated[l] = {params.layers[l].ln1_gain, params.layers[l].ln1_bias,
                         params.layers[l].ln2_gain, params.layers[l].ln2_bias};
  }
  out.shards.assign(S, {});
  for (std::size_t s = 0; s < S; ++s) {
    out.shards[s].resize(cfg.n_layers);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
      const LayerParams& lp = params.layers[l];
      ShardLayer& sl = out.shards[s][l];
      sl.qkv_w = Tensor({d, 3 * ds});
      copy_cols(lp.qkv_w, s * ds, ds, sl.qkv_w, 0);
      copy_cols(lp.qkv_w, d + s * ds, ds, sl.qkv_w, ds);
      copy_cols(lp.qkv_w, 2 * d + s * ds, ds, sl.qkv_w, 2 * ds);
      sl.attn_out_w = Tensor({ds, d});
      copy_rows(lp.attn_out_w, s * ds, ds, sl.attn_out_w, 0);
      sl.mlp_in_w = Tensor({d, fs});
      copy_cols(lp.mlp_in_w, s * fs, fs, sl.mlp_in_w, 0);
      sl.mlp_out_w = Tensor({fs, d});
      copy_rows(lp.mlp_out_w, s * fs, fs, sl.mlp_out_w, 0);
    }
  }
  return out;
}

Parameters unshard_params(const ShardedParams& sharded) {
  const ModelConfig& cfg = sharded.config;
  const std::size_t S = sharded.num_shards;
  const std::size_t d = cfg.d_model;
  const std::size_t ds = d / S;
  const std::size_t fs = 4 * d / S;

  Parameters out = Parameters::zeros(cfg);
  out.token_embedding = sharded.token_embedding;
  out.position_embedding = sharded.position_embedding;
  out.final_ln_gain = sharded.final_ln_gain;
  out.final_ln_bias = sharded.final_ln_bias;
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    LayerParams& lp = out.layers[l];
    lp.ln1_gain = sharded.replicated[l].ln1_gain;
    lp.ln1_bias = sharded.replicated[l].ln1_bias;
    lp.ln2_gain = sharded.replicated[l].ln2_gain;
    lp.ln2_bias = sharded.replicated[l].ln2_bias;
    for (std::size_t s = 0; s < S; ++s) {
      const ShardLayer& sl = sharded.shards[s][l];
      copy_cols(sl.qkv_w, 0, ds, lp.qkv_w, s * ds);
      copy_cols(sl.qkv_w, ds, ds, lp.qkv_w, d + s * ds);
      copy_cols(sl.qkv_w, 2 * ds, ds, lp.qkv_w, 2 * d + s * ds);
      copy_rows(sl.attn_out_w, 0, ds, lp.attn_out_w, s * ds);
      copy_cols(sl.mlp_in_w, 0, fs, lp.mlp_in_w, s * fs);
      copy_rows(sl.mlp_out_w, 0, fs, lp.mlp_out_w, s * fs);
    }
  }
  return out;
}

Tensor sharded_forward(const ShardedParams& sharded,
                       std::span<const TokenId> ids, CommLog* log) {
  const ModelConfig& cfg = sharded.config;
  const std::size_t S = sharded.num_shards;
  const std::size_t T = ids.size();
  const std::size_t d = cfg.d_model;
  const std::size_t dh = cfg.d_head;
  const std::size_t ds = d / S;
  const std::size_t fs = 4 * d / S;
  const std::size_t heads_per_shard = cfg.n_heads / S;
  if (T == 0) throw ShapeError("empty token sequence");
  if (T > cfg.max_seq_len)
    throw SequenceTooLongError(std::to_string(T) + " > max_seq_len");
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size)
      throw IdOutOfRangeError("token id " + std::to_string(id));
  }

  Tensor x({T, d});
  for (std::size_t t = 0; t < T; ++t) {
    kernels::add(sharded.token_embedding.row(ids[t]),
                 sharded.position_embedding.row(t), x.row(t), d);
  }

  Tensor ln_out({T, d});
  std::vector<double> ln_mean(T), ln_rstd(T);
  Tensor reduced({T, d});
  Tensor qkv_s({T, 3 * ds});
  Tensor ctx_s({T, ds});
  Tensor partial({T, d});
  Tensor pre_s({T, fs});
  Tensor act_s({T, fs});
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const ReplicatedLayer& rl = sharded.replicated[l];
    layer_norm_forward(x.data(), rl.ln1_gain.data(), rl.ln1_bias.data(), T, d,
                       ln_out.data(), ln_mean.data(), ln_rstd.data());

    reduced.fill(0.0);
    for (std::size_t s = 0; s < S; ++s) {
      const ShardLayer& sl = sharded.shards[s][l];
      kernels::matmul(ln_out.data(), sl.qkv_w.data(), qkv_s.data(), T, d,
                      3 * ds);
      ctx_s.fill(0.0);
      std::vector<double> scores;
      for (std::size_t h = 0; h < heads_per_shard; ++h) {
        const std::size_t q_off = h * dh;
        const std::size_t k_off = ds + h * dh;
        const std::size_t v_off = 2 * ds + h * dh;
        for (std::size_t t = 0; t < T; ++t) {
          const double* q = qkv_s.row(t) + q_off;
          scores.assign(t + 1, 0.0);
          for (std::size_t k = 0; k <= t; ++k) {
            scores[k] = kernels::dot(q, qkv_s.row(k) + k_off, dh) * scale;
          }
          const double m = kernels::max(scores.data(), t + 1);
          double total = 0.0;
          for (std::size_t k = 0; k <= t; ++k) {
            scores[k] = std::exp(scores[k] - m);
            total += scores[k];
          }
          kernels::scale(1.0 / total, scores.data(), t + 1);
          double* out = ctx_s.row(t) + q_off;
          for (std::size_t k = 0; k <= t; ++k) {
            kernels::axpy(scores[k], qkv_s.row(k) + v_off, out, dh);
          }
        }
      }
      kernels::matmul(ctx_s.data(), sl.attn_out_w.data(), partial.data(), T, ds,
                      d);
      kernels::add(reduced.data(), partial.data(), reduced.data(), T * d);
    }
    if (log) log->records.push_back({l, "attn", T * d});
    kernels::add(x.data(), reduced.data(), x.data(), T * d);

    layer_norm_forward(x.data(), rl.ln2_gain.data(), rl.ln2_bias.data(), T, d,
                       ln_out.data(), ln_mean.data(), ln_rstd.data());
    reduced.fill(0.0);
    for (std::size_t s = 0; s < S; ++s) {
      const ShardLayer& sl = sharded.shards[s][l];
      kernels::matmul(ln_out.data(), sl.mlp_in_w.data(), pre_s.data(), T, d,
                      fs);
      for (std::size_t i = 0; i < pre_s.size(); ++i) act_s[i] = gelu(pre_s[i]);
      kernels::matmul(act_s.data(), sl.mlp_out_w.data(), partial.data(), T, fs,
                      d);
      kernels::add(reduced.data(), partial.data(), reduced.data(), T * d);
    }
    if (log) log->records.push_back({l, "mlp", T * d});
    kernels::add(x.data(), reduced.data(), x.data(), T * d);
  }

  layer_norm_forward(x.data(), sharded.final_ln_gain.data(),
                     sharded.final_ln_bias.data(), T, d, ln_out.data(),
                     ln_mean.data(), ln_rstd.data());
  Tensor logits({T, cfg.vocab_size});
  kernels::matmul_nt(ln_out.data(), sharded.token_embedding.data(),
                     logits.data(), T, d, cfg.vocab_size);
  return logits;
}

double comm_volume(const ShardPlan& plan, const ModelConfig& config,
                   std::size_t seq_len, std::size_t elem_size) {
  plan.validate(config);
  const double ring_factor =
      2.0 * static_cast<double>(plan.num_shards - 1) /
      static_cast<double>(plan.num_shards);
  return 2.0 * static_cast<double>(seq_len) *
         static_cast<double>(config.d_model) *
         static_cast<double>(elem_size) * ring_factor;
}

}  // namespace cpmf
