#pragma once

// Analytic and Monte Carlo checks of the quantization-error claims: the
// step-size mismatch probability, its 0.1336 lower bound, accumulation of the
// mismatch event over timesteps, and flooring-vs-rounding expected errors.

#include <cstdint>
#include <span>

namespace bitsnn::theory {

// Standard normal CDF via erfc (exact to double precision).
double normal_cdf(double z);

enum class Domain { half_normal, full_normal };

struct MismatchExperiment {
  int b = 4;            // original bit width (>= 2)
  int b_prime = 2;      // dropped bit width in [1, b]
  double sigma = 1.0;
  std::size_t n = 1'000'000;
  std::uint64_t seed = 1;
  Domain domain = Domain::half_normal;
};

// P(x > r*3sigma) with r = (2^b'-1)/(2^b-1) under the half-normal law; the
// full-normal two-sided statement has the identical value.
// Throws std::invalid_argument when b_prime >= b or b_prime < 1.
double analytic_mismatch_probability(int b, int b_prime, Domain domain);

struct MismatchResult {
  // Fraction of samples beyond the b'-grid ceiling s*(2^b'-1), the event the
  // analytic probability describes. Inside the half-step band just above the
  // ceiling the low-bit code saturates while the squared errors tie exactly,
  // so the strict fraction below is smaller by that band's mass.
  double saturation_fraction = 0.0;
  double strict_increase_fraction = 0.0;  // Err' > Err strictly
};

// Quantizes N(0,sigma^2) (or |N|) samples at bits b and b' with the shared
// b-optimal step s = 3sigma/(2^b-1); deterministic given (seed, n) and
// independent of worker count. b_prime == b is allowed and yields zeros.
MismatchResult simulate_mismatch(const MismatchExperiment& exp);

// 1 - (1-p)^T. Throws std::invalid_argument for p outside [0,1] or T < 1.
double temporal_accumulation(double p, int T);

// Fraction of trials in which the mismatch event occurs in at least one of T
// independent per-timestep draws.
double simulate_temporal_mismatch(const MismatchExperiment& exp, int T);

struct FloorRoundErrors {
  double e_floor = 0.0;        // full-expectation squared errors
  double e_round = 0.0;
  double e_floor_unsat = 0.0;  // conditional means over the strict grid
  double e_round_unsat = 0.0;  // interior [q_min+1, q_max-1]
  std::size_t unsat_count = 0;
  std::size_t count = 0;
};

// Pure accounting on given samples with a shared step and the signed range of
// b bits; usable directly on constructed inputs.
FloorRoundErrors floor_round_errors_on(std::span<const double> x, double step, int b);

// Monte Carlo on N(0,sigma^2) with the signed-optimal step 3sigma = s*q_max.
FloorRoundErrors floor_vs_round_error(int b, double sigma, std::size_t n,
                                      std::uint64_t seed);

}  // namespace bitsnn::theory
