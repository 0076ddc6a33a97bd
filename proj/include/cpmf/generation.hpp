#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <vector>

#include "cpmf/model.hpp"

namespace cpmf {

struct SamplerConfig {
  double p = 0.9;
  double temperature = 0.9;
  std::size_t max_new_tokens = 64;
  std::set<TokenId> stop_ids;
  std::uint64_t seed = 0;

  void validate() const;
};

// softmax(logits / T); the returned row sums to 1.
std::vector<double> apply_temperature(std::span<const double> logits,
                                      double temperature);

// Keeps the smallest probability-sorted prefix with cumulative mass >= p and
// renormalizes it; everything else becomes zero. Ties at the cutoff go to the
// smaller token id.
std::vector<double> top_p_filter(std::span<const double> probs, double p);

// Autoregressive sampling. Stops on a stop id, on max_new_tokens, or when the
// context limit is reached; the window slides (oldest tokens dropped) if the
// prompt plus generation would pass max_seq_len.
std::vector<TokenId> generate(const Parameters& params,
                              std::span<const TokenId> prompt,
                              const SamplerConfig& config);

}  // namespace cpmf
