#include "bitsnn/theory.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "bitsnn/rng.hpp"

namespace bitsnn::theory {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

static void check_bits_pair(int b, int b_prime, bool allow_equal) {
  if (b < 2 || b > 30)
    throw std::invalid_argument("mismatch: b must be in [2, 30]");
  if (b_prime < 1 || b_prime > b - (allow_equal ? 0 : 1))
    throw std::invalid_argument("mismatch: b' must be in [1, b" +
                                std::string(allow_equal ? "]" : ")"));
}

double analytic_mismatch_probability(int b, int b_prime, Domain) {
  check_bits_pair(b, b_prime, false);
  double r = double((1u << b_prime) - 1) / double((1u << b) - 1);
  // Two-sided tail of the standard normal at z = 3r; the half-normal and the
  // per-side full-normal statements coincide.
  return std::erfc(3.0 * r / std::sqrt(2.0));
}

// ============================================================================
// Monte Carlo experiments (fixed-chunk deterministic partitioning)
// ============================================================================

namespace {

struct MismatchCounts {
  std::uint64_t saturated = 0;
  std::uint64_t strict = 0;
};

double clip(double v, double lo, double hi) {
  return v < lo ? lo : (v > hi ? hi : v);
}

// One-sided quantizer used by the mismatch construction; the full-normal
// domain applies it per sign side.
double mismatch_quant(double x, double s, double ceil_code) {
  double mag = std::abs(x);
  double code = clip(std::round(mag / s), 0.0, ceil_code);
  return std::copysign(s * code, x);
}

MismatchCounts mismatch_chunk(const MismatchExperiment& exp, std::size_t count,
                              std::uint64_t chunk_index) {
  std::mt19937_64 gen(util::chunk_seed(exp.seed, chunk_index));
  std::normal_distribution<double> normal(0.0, exp.sigma);
  const double s = 3.0 * exp.sigma / double((1u << exp.b) - 1);
  const double hi = double((1u << exp.b) - 1);
  const double hi_prime = double((1u << exp.b_prime) - 1);
  // With b' == b the dropped-bit quantizer is the original one; no sample can
  // sit beyond a ceiling the original grid does not also clip.
  const bool degenerate = exp.b_prime == exp.b;
  MismatchCounts out;
  for (std::size_t i = 0; i < count; ++i) {
    double x = normal(gen);
    if (exp.domain == Domain::half_normal) x = std::abs(x);
    if (!degenerate && std::abs(x) / s > hi_prime) ++out.saturated;
    double xq = mismatch_quant(x, s, hi);
    double xqp = mismatch_quant(x, s, hi_prime);
    double err = (x - xq) * (x - xq);
    double err_p = (x - xqp) * (x - xqp);
    if (err_p > err) ++out.strict;
  }
  return out;
}

}  // namespace

MismatchResult simulate_mismatch(const MismatchExperiment& exp) {
  check_bits_pair(exp.b, exp.b_prime, true);
  if (exp.n < 1) throw std::invalid_argument("mismatch: n must be >= 1");
  if (!(exp.sigma > 0.0))
    throw std::invalid_argument("mismatch: sigma must be positive");
  const std::size_t chunk = util::kMonteCarloChunk;
  const std::size_t n_chunks = (exp.n + chunk - 1) / chunk;
  std::vector<MismatchCounts> partial(n_chunks);
#pragma omp parallel for schedule(dynamic)
  for (long long c = 0; c < (long long)n_chunks; ++c) {
    std::size_t lo = std::size_t(c) * chunk;
    std::size_t count = std::min(chunk, exp.n - lo);
    partial[c] = mismatch_chunk(exp, count, std::uint64_t(c));
  }
  MismatchCounts total;
  for (const auto& p : partial) {
    total.saturated += p.saturated;
    total.strict += p.strict;
  }
  return {double(total.saturated) / double(exp.n),
          double(total.strict) / double(exp.n)};
}

double temporal_accumulation(double p, int T) {
  if (!(p >= 0.0 && p <= 1.0))
    throw std::invalid_argument("temporal_accumulation: p must be in [0,1]");
  if (T < 1) throw std::invalid_argument("temporal_accumulation: T must be >= 1");
  return 1.0 - std::pow(1.0 - p, double(T));
}

double simulate_temporal_mismatch(const MismatchExperiment& exp, int T) {
  check_bits_pair(exp.b, exp.b_prime, true);
  if (T < 1) throw std::invalid_argument("temporal mismatch: T must be >= 1");
  if (exp.n < 1) throw std::invalid_argument("temporal mismatch: n must be >= 1");
  const double s = 3.0 * exp.sigma / double((1u << exp.b) - 1);
  const double hi_prime = double((1u << exp.b_prime) - 1);
  const bool degenerate = exp.b_prime == exp.b;
  const std::size_t chunk = util::kMonteCarloChunk;
  const std::size_t n_chunks = (exp.n + chunk - 1) / chunk;
  std::vector<std::uint64_t> partial(n_chunks, 0);
#pragma omp parallel for schedule(dynamic)
  for (long long c = 0; c < (long long)n_chunks; ++c) {
    std::size_t lo = std::size_t(c) * chunk;
    std::size_t count = std::min(chunk, exp.n - lo);
    std::mt19937_64 gen(util::chunk_seed(exp.seed, std::uint64_t(c)));
    std::normal_distribution<double> normal(0.0, exp.sigma);
    std::uint64_t hits = 0;
    for (std::size_t i = 0; i < count; ++i) {
      bool any = false;
      for (int t = 0; t < T; ++t) {
        double x = normal(gen);
        if (exp.domain == Domain::half_normal) x = std::abs(x);
        if (!degenerate && std::abs(x) / s > hi_prime) any = true;
      }
      if (any) ++hits;
    }
    partial[c] = hits;
  }
  std::uint64_t total = 0;
  for (auto h : partial) total += h;
  return double(total) / double(exp.n);
}

// ============================================================================
// Flooring vs rounding
// ============================================================================

FloorRoundErrors floor_round_errors_on(std::span<const double> x, double step,
                                       int b) {
  if (x.empty())
    throw std::invalid_argument("floor_round_errors_on: empty input");
  if (!(step > 0.0))
    throw std::invalid_argument("floor_round_errors_on: step must be positive");
  if (b < 1 || b > 30)
    throw std::invalid_argument("floor_round_errors_on: b must be in [1, 30]");
  const double q_max = b == 1 ? 1.0 : double((1u << (b - 1)) - 1);
  const double q_min = -q_max;
  FloorRoundErrors out;
  double sf = 0.0, sr = 0.0, sfu = 0.0, sru = 0.0;
  for (double v : x) {
    double ratio = v / step;
    double f = clip(std::floor(ratio), q_min, q_max);
    double r = clip(std::round(ratio), q_min, q_max);
    double ef = (v - step * f) * (v - step * f);
    double er = (v - step * r) * (v - step * r);
    sf += ef;
    sr += er;
    if (ratio >= q_min + 1.0 && ratio <= q_max - 1.0) {
      sfu += ef;
      sru += er;
      ++out.unsat_count;
    }
  }
  out.count = x.size();
  out.e_floor = sf / double(x.size());
  out.e_round = sr / double(x.size());
  if (out.unsat_count > 0) {
    out.e_floor_unsat = sfu / double(out.unsat_count);
    out.e_round_unsat = sru / double(out.unsat_count);
  }
  return out;
}

FloorRoundErrors floor_vs_round_error(int b, double sigma, std::size_t n,
                                      std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("floor_vs_round_error: n must be >= 1");
  if (!(sigma > 0.0))
    throw std::invalid_argument("floor_vs_round_error: sigma must be positive");
  const double q_max = b == 1 ? 1.0 : double((1u << (b - 1)) - 1);
  const double step = 3.0 * sigma / q_max;
  const std::size_t chunk = util::kMonteCarloChunk;
  const std::size_t n_chunks = (n + chunk - 1) / chunk;
  std::vector<FloorRoundErrors> partial(n_chunks);
#pragma omp parallel for schedule(dynamic)
  for (long long c = 0; c < (long long)n_chunks; ++c) {
    std::size_t lo = std::size_t(c) * chunk;
    std::size_t count = std::min(chunk, n - lo);
    std::mt19937_64 gen(util::chunk_seed(seed, std::uint64_t(c)));
    std::normal_distribution<double> normal(0.0, sigma);
    std::vector<double> x(count);
    for (auto& v : x) v = normal(gen);
    partial[c] = floor_round_errors_on(x, step, b);
  }
  // Merge in chunk order so the result is independent of thread count.
  double sf = 0.0, sr = 0.0, sfu = 0.0, sru = 0.0;
  std::size_t unsat = 0;
  for (const auto& p : partial) {
    sf += p.e_floor * double(p.count);
    sr += p.e_round * double(p.count);
    sfu += p.e_floor_unsat * double(p.unsat_count);
    sru += p.e_round_unsat * double(p.unsat_count);
    unsat += p.unsat_count;
  }
  FloorRoundErrors out;
  out.count = n;
  out.unsat_count = unsat;
  out.e_floor = sf / double(n);
  out.e_round = sr / double(n);
  if (unsat > 0) {
    out.e_floor_unsat = sfu / double(unsat);
    out.e_round_unsat = sru / double(unsat);
  }
  return out;
}

}  // namespace bitsnn::theory
