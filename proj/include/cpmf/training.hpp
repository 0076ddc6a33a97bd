#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cpmf/model.hpp"

namespace cpmf {

struct TrainConfig {
  double lr_max = 1.5e-4;
  std::size_t total_steps = 20000;
  std::size_t warmup_steps = 5000;
  std::size_t batch_size = 3072;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::optional<double> grad_clip;  // global-norm clip, off by default
  std::uint64_t seed = 0;

  void validate() const;
};

struct OptimizerState {
  Parameters m;  // first moment, shaped like the parameters
  Parameters v;  // second moment
  std::size_t t = 0;

  static OptimizerState init(const ModelConfig& config);
};

// Exact gradients of cross_entropy(logits, targets, first_row) w.r.t. every
// parameter, computed from the cached activations.
Parameters backward(const ForwardTrace& trace, const Parameters& params,
                    std::span<const TokenId> targets, std::size_t first_row = 0);

// Bias-corrected Adam update in place; increments state.t.
void adam_step(Parameters& params, const Parameters& grads,
               OptimizerState& state, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

// Linear warmup to lr_max at warmup_steps, then linear decay to zero at
// total_steps.
double lr_schedule(std::size_t step, const TrainConfig& config);

// Compares backward() against central finite differences on >= 200 sampled
// coordinates per tensor; returns the largest guarded relative error.
// corrupt_tensor, when non-empty, deliberately perturbs that tensor's
// analytic gradient first (sabotage fixture for the checker's own test).
double grad_check(const ModelConfig& config, std::uint64_t seed, double eps,
                  const std::string& corrupt_tensor = "");

struct StepRecord {
  std::size_t step;
  double loss;
  double lr;
};

struct TrainResult {
  Parameters params;
  std::vector<StepRecord> loss_series;
};

// Deterministic training loop over fixed-length sequences. Sequences are
// reshuffled each epoch with a seed derived from config.seed; gradients are
// averaged per scored token.
TrainResult train(const std::vector<std::vector<TokenId>>& sequences,
                  const ModelConfig& model_config, const TrainConfig& config);

// Worker threads used for in-batch gradient parallelism; reads
// CPM_FORGE_THREADS (0 or 1 = sequential).
std::size_t worker_thread_count();

}  // namespace cpmf
