#include "cpmf/generation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cpmf/errors.hpp"
#include "cpmf/kernels.hpp"
#include "cpmf/rng.hpp"

namespace cpmf {

void SamplerConfig::validate() const {
  if (!(p > 0.0 && p <= 1.0)) throw ConfigError("p must lie in (0, 1]");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
}

std::vector<double> apply_temperature(std::span<const double> logits,
                                      double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
  if (logits.empty()) throw ShapeError("empty logits row");
  std::vector<double> probs(logits.size());
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  m /= temperature;
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] / temperature - m);
    total += probs[i];
  }
  kernels::scale(1.0 / total, probs.data(), probs.size());
  return probs;
}

std::vector<double> top_p_filter(std::span<const double> probs, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw ConfigError("p must lie in (0, 1]");
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (probs[a] != probs[b]) return probs[a] > probs[b];
    return a < b;  // equal mass: smaller id enters the nucleus first
  });
  std::vector<double> kept(probs.size(), 0.0);
  double cum = 0.0;
  double kept_mass = 0.0;
  for (std::size_t idx : order) {
    kept[idx] = probs[idx];
    kept_mass += probs[idx];
    cum += probs[idx];
    if (cum >= p) break;
  }
  if (kept_mass <= 0.0) throw ShapeError("probability row sums to zero");
  kernels::scale(1.0 / kept_mass, kept.data(), kept.size());
  return kept;
}

std::vector<TokenId> generate(const Parameters& params,
                              std::span<const TokenId> prompt,
                              const SamplerConfig& config) {
  config.validate();
  const std::size_t limit = params.config.max_seq_len;
  if (prompt.empty()) throw ShapeError("empty prompt");
  if (prompt.size() > limit)
    throw SequenceTooLongError("prompt exceeds max_seq_len");

  Rng rng(config.seed);
  std::vector<TokenId> context(prompt.begin(), prompt.end());
  std::vector<TokenId> generated;
  generated.reserve(config.max_new_tokens);

  for (std::size_t step = 0; step < config.max_new_tokens; ++step) {
    if (context.size() > limit) {
      context.erase(context.begin(),
                    context.begin() + static_cast<std::ptrdiff_t>(
                                          context.size() - limit));
    }
    const Tensor logits = forward(params, context);
    const double* row = logits.row(logits.rows() - 1);
    const auto probs = apply_temperature(
        std::span<const double>(row, logits.cols()), config.temperature);
    const auto nucleus = top_p_filter(probs, config.p);

    const double u = rng.next_double();
    double cum = 0.0;
    TokenId picked = -1;
    for (std::size_t i = 0; i < nucleus.size(); ++i) {
      if (nucleus[i] == 0.0) continue;
      picked = static_cast<TokenId>(i);  // rounding fallback stays in-nucleus
      cum += nucleus[i];
      if (u < cum) break;
    }
    generated.push_back(picked);
    if (config.stop_ids.contains(picked)) break;
    context.push_back(picked);
  }
  return generated;
}

}  // namespace cpmf
