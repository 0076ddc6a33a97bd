#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cpmf/tensor.hpp"
#include "cpmf/tokenizer.hpp"

namespace cpmf {

struct ModelConfig {
  std::size_t n_layers = 12;
  std::size_t d_model = 768;
  std::size_t n_heads = 12;
  std::size_t d_head = 64;
  std::size_t vocab_size = 30000;
  std::size_t max_seq_len = 1024;
  double init_std = 0.02;

  void validate() const;
};

struct LayerParams {
  Tensor qkv_w;       // [d_model, 3*d_model]
  Tensor attn_out_w;  // [d_model, d_model]
  Tensor mlp_in_w;    // [d_model, 4*d_model]
  Tensor mlp_out_w;   // [4*d_model, d_model]
  Tensor ln1_gain, ln1_bias;  // [d_model]
  Tensor ln2_gain, ln2_bias;  // [d_model]
};

// All model weights. The output head is the token embedding (tied, single
// storage).
struct Parameters {
  ModelConfig config;
  Tensor token_embedding;     // [vocab_size, d_model]
  Tensor position_embedding;  // [max_seq_len, d_model]
  std::vector<LayerParams> layers;
  Tensor final_ln_gain, final_ln_bias;  // [d_model]

  static Parameters zeros(const ModelConfig& config);

  // Visits every tensor in a fixed canonical order (checkpoint order).
  template <typename F>
  void for_each_tensor(F&& f) {
    f("token_embedding", token_embedding);
    f("position_embedding", position_embedding);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string p = "layers." + std::to_string(l) + ".";
      f(p + "qkv_w", layers[l].qkv_w);
      f(p + "attn_out_w", layers[l].attn_out_w);
      f(p + "mlp_in_w", layers[l].mlp_in_w);
      f(p + "mlp_out_w", layers[l].mlp_out_w);
      f(p + "ln1_gain", layers[l].ln1_gain);
      f(p + "ln1_bias", layers[l].ln1_bias);
      f(p + "ln2_gain", layers[l].ln2_gain);
      f(p + "ln2_bias", layers[l].ln2_bias);
    }
    f("final_ln_gain", final_ln_gain);
    f("final_ln_bias", final_ln_bias);
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    const_cast<Parameters*>(this)->for_each_tensor(
        [&](const std::string& name, Tensor& t) {
          f(name, static_cast<const Tensor&>(t));
        });
  }
};

struct LayerTrace {
  Tensor x_in;      // [T, d]
  Tensor ln1_out;   // [T, d]
  std::vector<double> ln1_mean, ln1_rstd;
  Tensor qkv;       // [T, 3d]
  std::vector<Tensor> attn_probs;  // per head, [T, T]
  Tensor attn_ctx;  // [T, d], heads concatenated, before the output proj
  Tensor res1;      // [T, d], x + attention
  Tensor ln2_out;   // [T, d]
  std::vector<double> ln2_mean, ln2_rstd;
  Tensor mlp_pre;   // [T, 4d], before the activation
  Tensor mlp_act;   // [T, 4d]
  Tensor out;       // [T, d]
};

// Cached activations from one forward pass, enough for an exact backward.
struct ForwardTrace {
  std::vector<TokenId> ids;
  Tensor embedded;  // [T, d]
  std::vector<LayerTrace> layers;
  Tensor final_ln_out;  // [T, d]
  std::vector<double> final_ln_mean, final_ln_rstd;
  Tensor logits;  // [T, vocab]
};

constexpr double kLayerNormEps = 1e-5;

Parameters init_params(const ModelConfig& config, std::uint64_t seed);

// Closed-form parameter count; equals the sum of all tensor sizes.
std::size_t count_params(const ModelConfig& config);

// Full forward pass to logits. When trace is non-null, caches everything the
// backward pass needs.
Tensor forward(const Parameters& params, std::span<const TokenId> ids,
               ForwardTrace* trace = nullptr);

// Mean negative log-likelihood (natural log) of targets[i] under logits row
// first_row + i.
double cross_entropy(const Tensor& logits, std::span<const TokenId> targets,
                     std::size_t first_row = 0);

// Half-open range of scored token positions (0-indexed into ids).
struct ScoreSpan {
  std::size_t begin;
  std::size_t end;
};

// exp(mean NLL) over the scored positions; default span covers every
// position with left context, i.e. [1, len).
double perplexity(const Parameters& params, std::span<const TokenId> ids,
                  std::optional<ScoreSpan> span = std::nullopt);

// Shared layer-norm primitive (also used by the backward pass).
void layer_norm_forward(const double* x, const double* gain, const double* bias,
                        std::size_t rows, std::size_t dim, double* out,
                        double* mean, double* rstd);

double gelu(double x);
double gelu_grad(double x);

}  // namespace cpmf
