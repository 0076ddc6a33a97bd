#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cpmf/model.hpp"

namespace cpmf {

// Width partitioning across S virtual workers: QKV and MLP-in weights split
// by columns (head-aligned for attention), output projections split by rows,
// everything else replicated. Two all-reduce points per layer.
struct ShardPlan {
  std::size_t num_shards = 1;

  void validate(const ModelConfig& config) const;
};

struct ShardLayer {
  Tensor qkv_w;       // [d_model, 3*d_model/S], q|k|v slices for owned heads
  Tensor attn_out_w;  // [d_model/S, d_model]
  Tensor mlp_in_w;    // [d_model, 4*d_model/S]
  Tensor mlp_out_w;   // [4*d_model/S, d_model]
};

// Per-layer tensors every worker holds in full.
struct ReplicatedLayer {
  Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias;
};

struct ShardedParams {
  ModelConfig config;
  std::size_t num_shards = 1;
  Tensor token_embedding, position_embedding;
  std::vector<ReplicatedLayer> replicated;      // [layer]
  Tensor final_ln_gain, final_ln_bias;
  std::vector<std::vector<ShardLayer>> shards;  // [shard][layer]
};

struct CommRecord {
  std::size_t layer;
  std::string point;     // "attn" or "mlp"
  std::size_t elements;  // summed elements per reduction
};

struct CommLog {
  std::vector<CommRecord> records;
};

// Splits the dense weights; reassembly is bit-exact. Throws IndivisibleError
// when S does not divide n_heads or 4*d_model.
ShardedParams shard_params(const Parameters& params, std::size_t num_shards);

// Rebuilds the dense tensors from the fragments (bit-exact inverse).
Parameters unshard_params(const ShardedParams& sharded);

// Dense-equivalent forward over the shards; partial results are summed in
// shard index order at exactly two reduction points per layer.
Tensor sharded_forward(const ShardedParams& sharded, std::span<const TokenId> ids,
                       CommLog* log = nullptr);

// Ring all-reduce bytes per layer for one forward pass:
//   2 reductions * seq_len * d_model * elem_size * 2(S-1)/S.
// A training step doubles this for the backward pass.
double comm_volume(const ShardPlan& plan, const ModelConfig& config,
                   std::size_t seq_len, std::size_t elem_size = 8);

}  // namespace cpmf
