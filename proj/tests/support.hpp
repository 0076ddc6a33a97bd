#pragma once

// Shared fixtures for the test suites: hand-built models whose behavior is
// known in closed form.

#include <cmath>
#include <vector>

#include "cpmf/model.hpp"

namespace cpmf::testing {

// A model that deterministically continues the given sequence: at position t
// the logit of sequence[t + 1] towers over everything else. Built from zero
// weights plus hand-set embeddings, so every layer's residual path is the
// identity.
inline Parameters make_successor_params(const std::vector<TokenId>& sequence,
                                        std::size_t vocab_size,
                                        double position_scale = 5000.0,
                                        double logit_scale = 50.0) {
  const std::size_t T = sequence.size();
  ModelConfig config;
  config.n_layers = 1;
  config.d_model = T;
  config.n_heads = 1;
  config.d_head = T;
  config.vocab_size = vocab_size;
  config.max_seq_len = T;
  config.init_std = 0.0;
  Parameters params = Parameters::zeros(config);
  params.final_ln_gain.fill(1.0);
  for (std::size_t t = 0; t < T; ++t)
    params.position_embedding.at(t, t) = position_scale;
  // token v points back at every position whose successor is v
  for (std::size_t t = 0; t + 1 < T; ++t) {
    params.token_embedding.at(sequence[t + 1], t) += logit_scale;
  }
  return params;
}

// A single-position model whose first-token logits equal `logits` exactly
// (up to the layer-norm epsilon), for prompt id 0.
inline Parameters make_fixed_logits_params(const std::vector<double>& logits,
                                           double position_scale = 1000.0) {
  const std::size_t V = logits.size();
  ModelConfig config;
  config.n_layers = 1;
  config.d_model = V;
  config.n_heads = 1;
  config.d_head = V;
  config.vocab_size = V;
  config.max_seq_len = 2;
  config.init_std = 0.0;
  Parameters params = Parameters::zeros(config);
  params.final_ln_gain.fill(1.0);
  params.position_embedding.at(0, 0) = position_scale;

  // u = layernorm(position row 0); set E[v] = logits[v] * u / |u|^2 so that
  // u . E[v] = logits[v]. Token 0 (the prompt) keeps a zero embedding, so
  // logits[0] must be zero.
  std::vector<double> u(V);
  std::vector<double> mean(1), rstd(1);
  std::vector<double> gain(V, 1.0), bias(V, 0.0);
  layer_norm_forward(params.position_embedding.row(0), gain.data(), bias.data(),
                     1, V, u.data(), mean.data(), rstd.data());
  double norm2 = 0.0;
  for (double x : u) norm2 += x * x;
  for (std::size_t v = 1; v < V; ++v) {
    for (std::size_t dim = 0; dim < V; ++dim) {
      params.token_embedding.at(v, dim) = logits[v] * u[dim] / norm2;
    }
  }
  return params;
}

}  // namespace cpmf::testing
