#include "bitsnn/renewal.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "bitsnn/quant.hpp"

namespace bitsnn::renewal {

namespace {

// mean(|X_q - X|^pow) for the candidate window [lo, hi]; a collapsed window
// quantizes everything to zero.
double window_score(std::span<const float> X, double step, int q_min,
                    int q_max, double pow_c) {
  double acc = 0.0;
  if (step > 0.0) {
    for (float xf : X) {
      const double x = double(xf);
      double code = quant::round_half_away(x / step);
      code = std::clamp(code, double(q_min), double(q_max));
      acc += std::pow(std::abs(step * code - x), pow_c);
    }
  } else {
    for (float xf : X) acc += std::pow(std::abs(double(xf)), pow_c);
  }
  return acc / double(X.size());
}

}  // namespace

std::pair<double, double> grid_search(std::span<const float> X, double v_max,
                                      double v_min, const GridSearchConfig& cfg,
                                      int q_min, int q_max) {
  if (X.empty())
    throw std::invalid_argument("grid_search: empty data");
  if (v_max < v_min)
    throw std::invalid_argument("grid_search: v_max below v_min");
  if (q_min == q_max)
    throw std::invalid_argument("grid_search: degenerate integer range");
  if (cfg.K < 1)
    throw std::invalid_argument("grid_search: K must be at least 1");
  if (!(cfg.pow > 0.0))
    throw std::invalid_argument("grid_search: pow must be positive");
  bool any_negative = false;
  for (float x : X) {
    if (!std::isfinite(x))
      throw std::invalid_argument("grid_search: non-finite data");
    any_negative |= (x < 0.0f);
  }

  const double R = v_max - v_min;
  std::vector<double> scores(std::size_t(cfg.K));
#pragma omp parallel for
  for (int k = 1; k <= cfg.K; ++k) {
    const double hi = double(k) * R / double(cfg.K);
    const double lo = any_negative ? -hi : 0.0;
    const double step = (hi - lo) / double(q_max - q_min);
    scores[std::size_t(k - 1)] = window_score(X, step, q_min, q_max, cfg.pow);
  }

  double best = std::numeric_limits<double>::infinity();
  double best_hi = v_max, best_lo = v_min;
  for (int k = 1; k <= cfg.K; ++k) {
    const double s = scores[std::size_t(k - 1)];
    if (s < best) {
      best = s;
      best_hi = double(k) * R / double(cfg.K);
      best_lo = any_negative ? -best_hi : 0.0;
    }
  }
  return {best_hi, best_lo};
}

std::optional<double> renew(ObserverState& obs, std::span<const float> X,
                            int bits, bool is_signed,
                            const GridSearchConfig& cfg) {
  if (!obs.active) return std::nullopt;
  if (bits == obs.recorded_bits) return std::nullopt;
  obs.recorded_bits = bits;
  const auto range = quant::quant_range(bits, is_signed);
  double v_max = -std::numeric_limits<double>::infinity();
  double v_min = std::numeric_limits<double>::infinity();
  for (float x : X) {
    v_max = std::max(v_max, double(x));
    v_min = std::min(v_min, double(x));
  }
  auto [hi, lo] = grid_search(X, v_max, v_min, cfg, range.q_min, range.q_max);
  obs.v_r_max = std::max(hi, obs.v_r_max);
  obs.v_r_min = std::min(lo, obs.v_r_min);
  return (obs.v_r_max - obs.v_r_min) / double(range.q_max - range.q_min);
}

bool shutting_check(double current_avg, double target, double initial_diff) {
  return std::abs(current_avg - target) > 0.24 * initial_diff;
}

}  // namespace bitsnn::renewal
