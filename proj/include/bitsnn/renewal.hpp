#pragma once
// Step-size renewal: when a quantizer's bit width changes, its observer
// re-derives the step from the data distribution instead of letting the
// learned step limp across the range mismatch. A grid search over
// zero-anchored candidate ranges picks the clipping window with the lowest
// mean |error|^pow, running extrema keep the window from shrinking across
// renewals, and a shutting threshold retires the whole mechanism once the
// average bit width has closed most of the gap to its target.

#include <limits>
#include <optional>
#include <span>
#include <utility>

namespace bitsnn::renewal {

// Per-quantizer observer. The trainer owns one per step size and flips
// active to false permanently once the shutting threshold trips.
struct ObserverState {
  double v_r_max = -std::numeric_limits<double>::infinity();
  double v_r_min = std::numeric_limits<double>::infinity();
  int recorded_bits = 0;
  bool active = true;
};

struct GridSearchConfig {
  int K = 100;       // candidate ranges per search
  double pow = 2.4;  // error exponent of the score
};

// Scans candidate ranges k*R/K for k = 1..K (R = v_max - v_min), symmetric
// around zero when any element is negative and anchored at zero otherwise,
// scoring each by mean(|X_q - X|^pow) and keeping strict improvements.
// A zero-width candidate quantizes everything to zero rather than dividing
// by zero. Returns the winning (v'_max, v'_min); the inputs are returned
// unchanged only if no candidate scores below +infinity.
// Throws std::invalid_argument on empty or non-finite X, v_max < v_min,
// q_min == q_max, K < 1, or pow <= 0.
std::pair<double, double> grid_search(std::span<const float> X, double v_max,
                                      double v_min, const GridSearchConfig& cfg,
                                      int q_min, int q_max);

// One observer update: no action while the observer is shut off or the bit
// width is unchanged. Otherwise records the new width, derives the integer
// range from the directionality, grid-searches the current batch, merges the
// result into the running extrema, and returns the renewed step
// (v_r_max - v_r_min)/(q_max - q_min). Callers apply the step only when it
// is positive and finite; constant data can legitimately produce zero.
std::optional<double> renew(ObserverState& obs, std::span<const float> X,
                            int bits, bool is_signed,
                            const GridSearchConfig& cfg);

// True while renewal should stay active: |current_avg - target| still
// exceeds 24% of the initial gap. The caller latches the first false.
bool shutting_check(double current_avg, double target, double initial_diff);

}  // namespace bitsnn::renewal
