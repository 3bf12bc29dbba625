#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <random>
#include <vector>

#include "bitsnn/quant.hpp"

using namespace bitsnn::quant;

namespace {

// Test-local relaxed forward: rounding residuals and clip states are frozen
// at the base point, so the quantizer becomes differentiable in `step`.
struct FrozenWeightQuant {
  std::vector<double> residual;  // round(w/s0) - w/s0 where in range
  std::vector<int> state;        // -1 below range, 0 inside, +1 above
  QuantRange r;
  int bits;

  FrozenWeightQuant(const std::vector<float>& w, double s0, int bits_in)
      : bits(bits_in) {
    r = quant_range(bits_in, true);
    residual.resize(w.size());
    state.resize(w.size());
    for (size_t i = 0; i < w.size(); ++i) {
      double ratio = w[i] / s0;
      if (ratio < r.q_min) {
        state[i] = -1;
      } else if (ratio > r.q_max) {
        state[i] = 1;
      } else {
        state[i] = 0;
        double code = bits_in == 1 ? (ratio < 0 ? -1.0 : 1.0) : std::round(ratio);
        residual[i] = code - ratio;
      }
    }
  }

  // Dequantized weights as a function of step with the frozen state.
  double value(const std::vector<float>& w, double s, size_t i) const {
    if (state[i] < 0) return s * r.q_min;
    if (state[i] > 0) return s * r.q_max;
    return w[i] + s * residual[i];
  }
};

double frozen_loss(const FrozenWeightQuant& fq, const std::vector<float>& w,
                   const std::vector<float>& up, double s) {
  double L = 0.0;
  for (size_t i = 0; i < w.size(); ++i) L += up[i] * fq.value(w, s, i);
  return L;
}

bool near_rounding_boundary(double ratio, double margin) {
  double frac = std::abs(ratio - std::floor(ratio) - 0.5);
  return frac < margin;
}

}  // namespace

TEST_CASE("quant_range by bits and signedness") {
  CHECK(quant_range(3, true).q_min == -3);
  CHECK(quant_range(3, true).q_max == 3);
  CHECK(quant_range(1, true).q_min == -1);
  CHECK(quant_range(1, true).q_max == 1);
  CHECK(quant_range(2, false).q_min == 0);
  CHECK(quant_range(2, false).q_max == 3);
  CHECK(quant_range(6, false).q_max == 63);
  CHECK_THROWS_AS(quant_range(0, true), std::invalid_argument);
  CHECK_THROWS_AS(quant_range(31, false), std::invalid_argument);
}

TEST_CASE("round_half_away ties go away from zero") {
  CHECK(round_half_away(0.5) == 1.0);
  CHECK(round_half_away(-0.5) == -1.0);
  CHECK(round_half_away(2.5) == 3.0);
  CHECK(round_half_away(-2.5) == -3.0);
  CHECK(round_half_away(2.4) == 2.0);
}

TEST_CASE("quantize_weights basic cases") {
  std::vector<float> w{0.6f};
  auto q = quantize_weights(w, 0.25, 3);
  CHECK(q.codes[0] == 2);
  CHECK(q.dequant(0) == doctest::Approx(0.5));

  auto q1 = quantize_weights(w, 0.25, 1);
  CHECK(q1.codes[0] == 1);
  CHECK(q1.dequant(0) == doctest::Approx(0.25));

  std::vector<float> lo{-10.0f};
  auto q2 = quantize_weights(lo, 0.25, 2);
  CHECK(q2.codes[0] == -1);
  CHECK(q2.dequant(0) == doctest::Approx(-0.25));
}

TEST_CASE("quantize_weights sign(0) is +1") {
  std::vector<float> w{0.0f};
  CHECK(quantize_weights(w, 0.5, 1).codes[0] == 1);
}

TEST_CASE("quantize_weights rejects bad arguments") {
  std::vector<float> w{1.0f};
  CHECK_THROWS_AS(quantize_weights(w, 0.0, 3), std::invalid_argument);
  CHECK_THROWS_AS(quantize_weights(w, -1.0, 3), std::invalid_argument);
  std::vector<float> bad{std::numeric_limits<float>::quiet_NaN()};
  CHECK_THROWS_AS(quantize_weights(bad, 0.5, 3), std::invalid_argument);
  std::vector<float> up{1.0f, 2.0f};
  CHECK_THROWS_AS(weight_grad_values(w, 0.5, 3, up), std::invalid_argument);
}

TEST_CASE("quantize is monotone and within half a step when unsaturated") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  std::vector<float> w(257);
  for (auto& x : w) x = dist(rng);
  std::sort(w.begin(), w.end());
  auto q = quantize_weights(w, 0.2, 4);
  for (size_t i = 1; i < w.size(); ++i) CHECK(q.codes[i] >= q.codes[i - 1]);
  auto r = quant_range(4, true);
  for (size_t i = 0; i < w.size(); ++i) {
    double ratio = w[i] / 0.2;
    if (ratio > r.q_min && ratio < r.q_max)
      CHECK(std::abs(w[i] - q.dequant(i)) <= 0.2 / 2 + 1e-12);
  }
}

TEST_CASE("weight_grad_values passes through in range and blocks saturated") {
  std::vector<float> w{0.5f, 1.25f};  // ratios 2.0 and 5.0 at step 0.25
  std::vector<float> up{1.0f, 1.0f};
  auto g = weight_grad_values(w, 0.25, 3, up);
  CHECK(g[0] == 1.0f);
  CHECK(g[1] == 0.0f);
}

TEST_CASE("weight_grad_step matches the stated cases") {
  std::vector<float> up{1.0f};
  {
    std::vector<float> w{0.6f};  // ratio 2.4, g_q = 2 - 2.4 = -0.4
    double g = weight_grad_step(w, 0.25, 3, up);
    CHECK(g == doctest::Approx(-0.4 / std::sqrt(3.0)));
  }
  {
    std::vector<float> w{10.0f};  // saturated above, g_q = q_max = 3
    double g = weight_grad_step(w, 0.25, 3, up);
    CHECK(g == doctest::Approx(3.0 / std::sqrt(3.0)));
  }
  {
    std::vector<float> w{-0.1f};  // 1-bit, g_q = sign(-0.4) - (-0.4) = -0.6
    double g = weight_grad_step(w, 0.25, 1, up);
    CHECK(g == doctest::Approx(-0.6 / std::sqrt(1.0)));
  }
}

TEST_CASE("weight_grad_bits matches the stated cases and locality") {
  std::vector<float> up{1.0f};
  {
    std::vector<float> w{10.0f};  // q_max=3: g_q = 0.25 * 4 * ln2
    double g = weight_grad_bits(w, 0.25, 3, up);
    CHECK(g == doctest::Approx(0.25 * 4.0 * std::log(2.0) / std::sqrt(3.0)));
  }
  {
    std::vector<float> w{0.5f};  // in range: exactly zero
    CHECK(weight_grad_bits(w, 0.25, 3, up) == 0.0);
  }
}

TEST_CASE("grad locality: values-grad and bits-grad regions are complementary") {
  std::mt19937 rng(11);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  std::vector<float> w(128), up(128, 1.0f);
  for (auto& x : w) x = dist(rng);
  auto gv = weight_grad_values(w, 0.3, 2, up);
  auto r = quant_range(2, true);
  for (size_t i = 0; i < w.size(); ++i) {
    double ratio = w[i] / 0.3;
    bool in = ratio >= r.q_min && ratio <= r.q_max;
    CHECK(gv[i] == (in ? 1.0f : 0.0f));
    std::vector<float> wi{w[i]}, ui{1.0f};
    double gb = weight_grad_bits(wi, 0.3, 2, ui);
    if (in)
      CHECK(gb == 0.0);
    else
      CHECK(gb != 0.0);
  }
}

TEST_CASE("weight_grad_values agrees with frozen-state finite differences") {
  std::mt19937 rng(23);
  std::uniform_real_distribution<float> dist(-2.0f, 2.0f);
  const double step = 0.37;
  std::vector<float> w(64), up(64);
  for (auto& x : w) x = dist(rng);
  for (auto& u : up) u = dist(rng);
  auto g = weight_grad_values(w, step, 3, up);
  FrozenWeightQuant fq(w, step, 3);
  const double h = 1e-6;
  for (size_t i = 0; i < w.size(); ++i) {
    if (near_rounding_boundary(w[i] / step, 1e-3)) continue;
    // Perturb in double space; adding 1e-6 to a float32 weight would round
    // away a visible fraction of the step and poison the quotient.
    const double wi = double(w[i]);
    // Frozen state: in-range value is w + s*residual, saturated is constant.
    double vp = fq.state[i] == 0 ? (wi + h) + step * fq.residual[i]
                                 : fq.value(w, step, i);
    double vm = fq.state[i] == 0 ? (wi - h) + step * fq.residual[i]
                                 : fq.value(w, step, i);
    double fd = up[i] * (vp - vm) / (2 * h);
    CHECK(double(g[i]) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("weight_grad_step agrees with finite differences of the relaxed loss") {
  std::mt19937 rng(42);
  std::uniform_real_distribution<float> dist(-2.0f, 2.0f);
  for (int bits : {1, 2, 3, 4}) {
    for (int trial = 0; trial < 8; ++trial) {
      const double step = 0.25 + 0.1 * trial;
      std::vector<float> w(64), up(64);
      bool boundary = false;
      for (auto& x : w) x = dist(rng);
      for (auto& u : up) u = dist(rng);
      for (auto& x : w)
        if (near_rounding_boundary(x / step, 1e-3)) boundary = true;
      if (boundary) continue;
      FrozenWeightQuant fq(w, step, bits);
      const double h = 1e-6 * step;
      double fd = (frozen_loss(fq, w, up, step + h) -
                   frozen_loss(fq, w, up, step - h)) /
                  (2 * h);
      double analytic = weight_grad_step(w, step, bits, up);
      double scale = grad_scale(w.size(), quant_range(bits, true).q_max);
      CHECK(analytic == doctest::Approx(scale * fd).epsilon(1e-5));
    }
  }
}

TEST_CASE("weight_grad_bits sign matches a brute-force loss difference") {
  // Squared reconstruction loss over standard-normal weights: adding one bit
  // shrinks the loss, so the analytic bit gradient must point downhill.
  std::mt19937 rng(1234);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  std::vector<float> w(1000);
  for (auto& x : w) x = dist(rng);
  const double step = 0.5;
  auto loss_at = [&](int bits) {
    auto q = quantize_weights(w, step, bits);
    double L = 0.0;
    for (size_t i = 0; i < w.size(); ++i) {
      double d = q.dequant(i) - w[i];
      L += d * d;
    }
    return L;
  };
  double l2 = loss_at(2), l3 = loss_at(3);
  CHECK(l3 < l2);
  auto q2 = quantize_weights(w, step, 2);
  std::vector<float> up(w.size());
  for (size_t i = 0; i < w.size(); ++i)
    up[i] = float(2.0 * (q2.dequant(i) - w[i]));
  CHECK(weight_grad_bits(w, step, 2, up) < 0.0);
}

TEST_CASE("1-bit bit-gradient uses the sign-case ceiling") {
  // For the sign quantizer the saturation ceiling grows like 2^bits - 1, so
  // the frozen-state relaxation q_max(b) = 2^b - 1 has slope (q_max+1)*ln2.
  std::vector<float> w{3.0f}, up{1.0f};
  const double step = 1.0;  // ratio 3.0 is outside [-1, 1]
  double g = weight_grad_bits(w, step, 1, up);
  CHECK(g == doctest::Approx(1.0 * step * 2.0 * std::log(2.0) / std::sqrt(1.0)));
}
