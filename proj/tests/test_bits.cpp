#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include <doctest.h>

#include "bitsnn/bits.hpp"
#include "bitsnn/neuron.hpp"
#include "bitsnn/quant.hpp"

using namespace bitsnn;
using namespace bitsnn::bits;

namespace {

// ===== Independent oracles =====

// Continuous relaxation of the integer grid for finite-differencing the
// spike-bit gradient. Saturation states are frozen at the base point; the
// clip rails then move with the relaxed bit width while in-range codes stay
// constant.
struct FrozenSpikeGrid {
  std::vector<int> state;  // -1 below the range, 0 inside, +1 above
  bool bidirectional;
  int base_bits;

  FrozenSpikeGrid(std::span<const float> ratios, int bits, bool bidir)
      : bidirectional(bidir), base_bits(bits) {
    auto r = quant::quant_range(bits, bidir);
    state.reserve(ratios.size());
    for (float x : ratios) {
      int s = 0;
      if (double(x) < r.q_min) s = -1;
      if (double(x) > r.q_max) s = +1;
      if (!bidir && s < 0) s = 0;  // the unsigned lower rail is pinned at 0
      state.push_back(s);
    }
  }

  double q_max_of(double b_hat) const {
    if (!bidirectional || base_bits == 1) return std::exp2(b_hat) - 1.0;
    return std::exp2(b_hat - 1.0) - 1.0;
  }

  double rail(std::size_t j, double b_hat, double frozen_code) const {
    if (state[j] > 0) return q_max_of(b_hat);
    if (state[j] < 0) return -q_max_of(b_hat);
    return frozen_code;
  }

  double loss(std::span<const float> ratios, std::span<const float> up,
              double b_hat) const {
    double acc = 0.0;
    for (std::size_t j = 0; j < ratios.size(); ++j)
      acc += double(up[j]) * rail(j, b_hat, double(ratios[j]));
    return acc;
  }
};

// Frozen-state relaxation of the dequantized fire output x(V1) = V1 * code:
// in-range elements keep their rounding residual so x = v + V1 * r, while
// saturated elements ride the clip rail x = V1 * q_rail. The gradient under
// test converts its code-space upstream by 1/V1, so the matching relaxed
// loss uses upstream / V1_base held constant.
struct FrozenFire {
  std::vector<int> state;
  std::vector<double> residual;
  quant::QuantRange range;

  FrozenFire(std::span<const float> v, double V1, int bits, bool bidir) {
    range = quant::quant_range(bits, bidir);
    for (float vj : v) {
      double ratio = double(vj) / V1;
      if (ratio < range.q_min) {
        state.push_back(-1);
        residual.push_back(0.0);
      } else if (ratio > range.q_max) {
        state.push_back(+1);
        residual.push_back(0.0);
      } else {
        state.push_back(0);
        double code = (bidir && range.q_max == 1 && bits == 1)
                          ? quant::sign_pos(ratio)
                          : double(neuron::fire(double(vj), V1, bits, bidir));
        residual.push_back(code - ratio);
      }
    }
  }

  double loss(std::span<const float> v, std::span<const float> up_dequant,
              double V1) const {
    double acc = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) {
      double x;
      if (state[j] > 0)
        x = V1 * range.q_max;
      else if (state[j] < 0)
        x = V1 * range.q_min;
      else
        x = double(v[j]) + V1 * residual[j];
      acc += up_dequant[j] * x;
    }
    return acc;
  }
};

double central_diff(auto f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

}  // namespace

// ===== Materialization =====

TEST_CASE("materialize rounds into the clip region") {
  CHECK(materialize(0.3, 6) == 1);
  CHECK(materialize(4.49, 6) == 4);
  CHECK(materialize(9.0, 6) == 6);
  CHECK(materialize(2.5, 6) == 3);
  CHECK(materialize(1.0, 1) == 1);
  CHECK_THROWS_AS(materialize(2.0, 0), std::invalid_argument);
}

TEST_CASE("materialize is idempotent") {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> dist(-2.0, 10.0);
  for (int i = 0; i < 200; ++i) {
    double x = dist(rng);
    for (int bound : {1, 3, 6}) {
      int once = materialize(x, bound);
      CHECK(materialize(double(once), bound) == once);
      CHECK(once >= 1);
      CHECK(once <= bound);
    }
  }
}

TEST_CASE("materialize STE mask is 1 inside the clip region and 0 outside") {
  CHECK(materialize_ste_mask(0.5, 6) == 0.0);
  CHECK(materialize_ste_mask(1.0, 6) == 1.0);
  CHECK(materialize_ste_mask(3.7, 6) == 1.0);
  CHECK(materialize_ste_mask(6.0, 6) == 1.0);
  CHECK(materialize_ste_mask(6.1, 6) == 0.0);
}

// ===== Spike bit-width gradient =====

TEST_CASE("spike_bits_grad matches the stated saturation cases") {
  {
    std::vector<float> ratio{5.0f}, up{1.0f};
    double g = spike_bits_grad(ratio, 2, up, false);  // unsigned q_max = 3
    CHECK(g == doctest::Approx(4.0 * std::numbers::ln2 / std::sqrt(3.0)));
  }
  {
    std::vector<float> ratio{0.4f, 2.9f}, up{1.0f, 1.0f};
    CHECK(spike_bits_grad(ratio, 2, up, false) == 0.0);
  }
  {
    std::vector<float> ratio{-4.0f}, up{1.0f};  // bidirectional q_min = -1
    double g = spike_bits_grad(ratio, 2, up, true);
    CHECK(g == doctest::Approx(-2.0 * std::numbers::ln2 / std::sqrt(1.0)));
  }
  {
    std::vector<float> ratio{-0.7f}, up{1.0f};  // unsigned ignores the floor side
    CHECK(spike_bits_grad(ratio, 2, up, false) == 0.0);
  }
  std::vector<float> ratio{1.0f}, up{1.0f, 2.0f};
  CHECK_THROWS_AS(spike_bits_grad(ratio, 2, up, false), std::invalid_argument);
}

TEST_CASE("spike_bits_grad matches finite differences of the relaxed grid") {
  std::mt19937 rng(41);
  std::uniform_real_distribution<float> rdist(-9.0f, 9.0f);
  std::uniform_real_distribution<float> udist(-1.0f, 1.0f);
  const double h = 1e-4;
  for (int bits : {1, 2, 3, 4}) {
    for (bool bidir : {false, true}) {
      std::vector<float> ratio(96), up(96);
      for (auto& x : ratio) x = rdist(rng);
      for (auto& u : up) u = udist(rng);
      double analytic = spike_bits_grad(ratio, bits, up, bidir);
      FrozenSpikeGrid grid(ratio, bits, bidir);
      double fd = central_diff(
          [&](double b) { return grid.loss(ratio, up, b); }, double(bits), h);
      auto r = quant::quant_range(bits, bidir);
      double scaled = quant::grad_scale(ratio.size(), r.q_max) * fd;
      CHECK(analytic == doctest::Approx(scaled).epsilon(1e-5));
    }
  }
}

TEST_CASE("spike_bits_grad is zero exactly when nothing saturates") {
  // One-signed draws so saturating contributions cannot cancel each other.
  std::mt19937 rng(7);
  std::uniform_real_distribution<float> rdist(0.0f, 6.0f);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<float> ratio(16), up(16, 1.0f);
    for (auto& x : ratio) x = rdist(rng);
    auto r = quant::quant_range(3, true);
    bool any_sat = false;
    for (float x : ratio) any_sat |= double(x) > r.q_max;
    double g = spike_bits_grad(ratio, 3, up, true);
    CHECK((g != 0.0) == any_sat);
  }
}

// ===== Threshold gradient =====

TEST_CASE("threshold_grad matches the stated per-element cases") {
  {
    std::vector<float> v{1.3f}, up{1.0f};  // in range: code 1, residual -0.3
    double g = threshold_grad(v, 1.0, 2, up, false);
    CHECK(g == doctest::Approx(-0.3 / std::sqrt(3.0)));
  }
  {
    std::vector<float> v{10.0f}, up{1.0f};  // above: rides q_max = 3
    double g = threshold_grad(v, 1.0, 2, up, false);
    CHECK(g == doctest::Approx(3.0 / std::sqrt(3.0)));
  }
  {
    std::vector<float> v{-5.0f}, up{1.0f};  // unsigned floor rail is 0
    CHECK(threshold_grad(v, 1.0, 2, up, false) == 0.0);
  }
  {
    std::vector<float> v{-5.0f}, up{1.0f};  // bidirectional floor rail is q_min
    double g = threshold_grad(v, 1.0, 2, up, true);
    CHECK(g == doctest::Approx(-1.0 / std::sqrt(1.0)));
  }
  {
    std::vector<float> v{0.4f}, up{1.0f};  // 1-bit sign fire: sign - ratio
    double g = threshold_grad(v, 1.0, 1, up, true);
    CHECK(g == doctest::Approx(0.6 / std::sqrt(1.0)));
  }
  {
    std::vector<float> v{1.2f}, up{1.0f};  // the 1/V1 factor
    double g = threshold_grad(v, 2.0, 2, up, false);
    CHECK(g == doctest::Approx((1.0 - 0.6) / 2.0 / std::sqrt(3.0)));
  }
  std::vector<float> v{1.0f}, up{1.0f};
  CHECK_THROWS_AS(threshold_grad(v, 0.0, 2, up, false), std::invalid_argument);
  CHECK_THROWS_AS(threshold_grad(v, -1.0, 2, up, false), std::invalid_argument);
}

TEST_CASE("threshold_grad matches finite differences of the relaxed fire") {
  std::mt19937 rng(59);
  std::uniform_real_distribution<float> vdist(-4.0f, 4.0f);
  std::uniform_real_distribution<float> udist(-1.0f, 1.0f);
  const double V1 = 0.8;
  const double h = 1e-6;
  for (int bits : {1, 2, 3}) {
    for (bool bidir : {false, true}) {
      if (bits == 1 && !bidir) continue;  // unsigned 1-bit is the binary neuron
      std::vector<float> v(64), up(64);
      for (auto& x : v) x = vdist(rng);
      for (auto& u : up) u = udist(rng);
      double analytic = threshold_grad(v, V1, bits, up, bidir);
      FrozenFire ff(v, V1, bits, bidir);
      std::vector<float> up_dequant(up.size());
      for (std::size_t j = 0; j < up.size(); ++j)
        up_dequant[j] = float(double(up[j]) / V1);
      double fd = central_diff(
          [&](double s) { return ff.loss(v, up_dequant, s); }, V1, h);
      auto r = quant::quant_range(bits, bidir);
      double scaled = quant::grad_scale(v.size(), r.q_max) * fd;
      CHECK(analytic == doctest::Approx(scaled).epsilon(1e-6));
    }
  }
}

// ===== Temporal gradient =====

TEST_CASE("temporal_grad differentiates the 1/T prefactor") {
  neuron::SpikeTrain train;
  train.T = 2;
  train.features = 1;
  train.codes = {2, 2};
  train.bits_per_t = {2, 2};
  std::vector<float> up{1.0f};
  CHECK(temporal_grad(train, up) == doctest::Approx(-1.0));

  train.codes = {0, 0};
  CHECK(temporal_grad(train, up) == 0.0);

  train.codes = {2, 2};
  std::vector<float> zero{0.0f};
  CHECK(temporal_grad(train, zero) == 0.0);

  std::vector<float> wrong{1.0f, 1.0f};
  CHECK_THROWS_AS(temporal_grad(train, wrong), std::invalid_argument);
}

TEST_CASE("temporal gradients match finite differences of mean scaling") {
  std::mt19937 rng(67);
  std::uniform_int_distribution<int32_t> cdist(-3, 3);
  std::uniform_real_distribution<float> udist(-1.0f, 1.0f);
  neuron::SpikeTrain train;
  train.T = 3;
  train.features = 8;
  train.codes.resize(24);
  train.bits_per_t = {3, 3, 3};
  for (auto& c : train.codes) c = cdist(rng);
  std::vector<float> up(8);
  for (auto& u : up) u = udist(rng);
  std::vector<double> V1{0.9, 1.1, 0.7};

  auto plain = [&](double T_hat) {
    double acc = 0.0;
    for (std::size_t j = 0; j < train.features; ++j)
      for (int t = 0; t < train.T; ++t)
        acc += double(up[j]) * double(train.at(t, j)) / T_hat;
    return acc;
  };
  auto scaled = [&](double T_hat) {
    double acc = 0.0;
    for (std::size_t j = 0; j < train.features; ++j)
      for (int t = 0; t < train.T; ++t)
        acc += double(up[j]) * V1[std::size_t(t)] * double(train.at(t, j)) / T_hat;
    return acc;
  };
  const double h = 1e-6;
  CHECK(temporal_grad(train, up) ==
        doctest::Approx(central_diff(plain, 3.0, h)).epsilon(1e-7));
  CHECK(temporal_grad_scaled(train, V1, up) ==
        doctest::Approx(central_diff(scaled, 3.0, h)).epsilon(1e-7));
}

// ===== Regulating loss =====

TEST_CASE("regulating_loss evaluates the weighted squared gaps") {
  RegulatingTargets tg;
  tg.b_w_tar = 2.0;
  tg.b_s_tar = 2.0;
  tg.t_tar = 1.0;
  tg.lambda1 = 4e-2;
  tg.lambda2 = 4e-2;
  tg.lambda3 = 1e-2;

  CHECK(regulating_loss({2.0, 2.0, 1.0}, tg).value == 0.0);

  auto only_w = regulating_loss({4.0, 2.0, 1.0}, tg);
  CHECK(only_w.value == doctest::Approx(0.16));
  CHECK(only_w.d_b_w_bar > 0.0);
  CHECK(only_w.d_b_s_bar == 0.0);
  CHECK(only_w.d_t_bar == 0.0);

  auto below = regulating_loss({1.0, 1.5, 0.5}, tg);
  CHECK(below.d_b_w_bar < 0.0);
  CHECK(below.d_b_s_bar < 0.0);
  CHECK(below.d_t_bar < 0.0);
}

TEST_CASE("regulating_loss derivatives match finite differences") {
  RegulatingTargets tg;
  tg.b_w_tar = 2.0;
  tg.b_s_tar = 3.0;
  tg.t_tar = 1.5;
  tg.lambda1 = 0.3;
  tg.lambda2 = 0.2;
  tg.lambda3 = 0.7;
  BitAverages avg{3.3, 2.1, 2.4};
  const double h = 1e-6;
  auto fw = [&](double x) { return regulating_loss({x, avg.b_s_bar, avg.t_bar}, tg).value; };
  auto fs = [&](double x) { return regulating_loss({avg.b_w_bar, x, avg.t_bar}, tg).value; };
  auto ft = [&](double x) { return regulating_loss({avg.b_w_bar, avg.b_s_bar, x}, tg).value; };
  auto rl = regulating_loss(avg, tg);
  CHECK(rl.d_b_w_bar == doctest::Approx(central_diff(fw, avg.b_w_bar, h)));
  CHECK(rl.d_b_s_bar == doctest::Approx(central_diff(fs, avg.b_s_bar, h)));
  CHECK(rl.d_t_bar == doctest::Approx(central_diff(ft, avg.t_bar, h)));
}

// ===== Model averages =====

TEST_CASE("average_bits weights by element counts") {
  {
    std::vector<LayerBitSummary> layers(2);
    layers[0] = {100, 10, 2, {2}, 1};
    layers[1] = {100, 10, 4, {2}, 1};
    CHECK(average_bits(layers).b_w_bar == doctest::Approx(3.0));
  }
  {
    std::vector<LayerBitSummary> layers(2);
    layers[0] = {100, 10, 1, {3}, 1};
    layers[1] = {300, 10, 3, {3}, 1};
    CHECK(average_bits(layers).b_w_bar == doctest::Approx(2.5));
  }
  {
    std::vector<LayerBitSummary> one(1);
    one[0] = {64, 16, 3, {4, 2}, 2};
    auto avg = average_bits(one);
    CHECK(avg.b_w_bar == doctest::Approx(3.0));
    CHECK(avg.b_s_bar == doctest::Approx(3.0));
    CHECK(avg.t_bar == doctest::Approx(2.0));
  }
  {
    // A readout head with no feature train only enters the weight average.
    std::vector<LayerBitSummary> layers(2);
    layers[0] = {100, 20, 2, {4}, 1};
    layers[1] = {100, 0, 6, {}, 0};
    auto avg = average_bits(layers);
    CHECK(avg.b_w_bar == doctest::Approx(4.0));
    CHECK(avg.b_s_bar == doctest::Approx(4.0));
    CHECK(avg.t_bar == doctest::Approx(1.0));
  }
  {
    // Longer trains tilt both the spike-bit and time-step averages.
    std::vector<LayerBitSummary> layers(2);
    layers[0] = {10, 30, 2, {4, 4, 4}, 3};
    layers[1] = {10, 10, 2, {2}, 1};
    auto avg = average_bits(layers);
    CHECK(avg.t_bar == doctest::Approx(2.5));
    CHECK(avg.b_s_bar == doctest::Approx((90.0 * 4 + 10.0 * 2) / 100.0));
  }
  std::vector<LayerBitSummary> none;
  CHECK_THROWS_AS(average_bits(none), std::invalid_argument);
  std::vector<LayerBitSummary> bad(1);
  bad[0] = {8, 8, 2, {2}, 3};  // three active slots but one entry
  CHECK_THROWS_AS(average_bits(bad), std::invalid_argument);
}

// ===== Convergence of the regulating pressure =====

TEST_CASE("regulating gradients drive the averages to their targets") {
  // Two spiking layers plus a readout head under bare gradient descent with
  // straight-through materialization. Strong penalties stand in for the long
  // schedules a real run amortizes the pull over.
  struct ToyLayer {
    std::size_t n_w, n_f;
    double b_w_hat;
    std::vector<double> b_s_hat;
    double t_hat;
  };
  std::vector<ToyLayer> toy = {
      {256, 64, 4.0, {4.0, 4.0, 4.0}, 2.0},
      {256, 64, 4.0, {4.0, 4.0, 4.0}, 2.0},
      {128, 0, 4.0, {}, 0.0},
  };
  RegulatingTargets tg;
  tg.b_w_tar = 2.0;
  tg.b_s_tar = 2.0;
  tg.t_tar = 1.0;
  tg.lambda1 = 0.5;
  tg.lambda2 = 0.5;
  tg.lambda3 = 0.5;
  const int b_bound = 6, t_bound = 3;
  const double lr = 0.1;

  auto summarize = [&]() {
    std::vector<LayerBitSummary> s;
    for (const ToyLayer& l : toy) {
      LayerBitSummary e;
      e.n_w = l.n_w;
      e.n_f = l.n_f;
      e.b_w = materialize(l.b_w_hat, b_bound);
      if (l.n_f > 0) {
        e.T = materialize(l.t_hat, t_bound);
        for (int t = 0; t < e.T; ++t)
          e.b_s.push_back(materialize(l.b_s_hat[std::size_t(t)], b_bound));
      }
      s.push_back(std::move(e));
    }
    return s;
  };

  double first_loss = regulating_loss(average_bits(summarize()), tg).value;
  bool converged = false;
  int steps_taken = 0;
  for (int step = 0; step < 200 && !converged; ++step) {
    auto s = summarize();
    auto avg = average_bits(s);
    auto rl = regulating_loss(avg, tg);
    double w_total = 0.0, f_total = 0.0, slot_total = 0.0;
    for (const auto& e : s) {
      w_total += double(e.n_w);
      f_total += double(e.n_f);
      slot_total += double(e.n_f) * double(e.T);
    }
    for (std::size_t i = 0; i < toy.size(); ++i) {
      ToyLayer& l = toy[i];
      l.b_w_hat -= lr * rl.d_b_w_bar * (double(l.n_w) / w_total) *
                   materialize_ste_mask(l.b_w_hat, b_bound);
      if (l.n_f == 0) continue;
      l.t_hat -= lr * rl.d_t_bar * (double(l.n_f) / f_total) *
                 materialize_ste_mask(l.t_hat, t_bound);
      for (int t = 0; t < s[i].T; ++t)
        l.b_s_hat[std::size_t(t)] -= lr * rl.d_b_s_bar *
                                     (double(l.n_f) / slot_total) *
                                     materialize_ste_mask(l.b_s_hat[std::size_t(t)], b_bound);
    }
    auto now = average_bits(summarize());
    steps_taken = step + 1;
    converged = std::abs(now.b_w_bar - tg.b_w_tar) <= 0.5 &&
                std::abs(now.b_s_bar - tg.b_s_tar) <= 0.5 &&
                std::abs(now.t_bar - tg.t_tar) <= 0.5;
  }
  CHECK(converged);
  CHECK(steps_taken <= 200);
  CHECK(regulating_loss(average_bits(summarize()), tg).value < first_loss);
}

// ===== Temporal-wise sharing =====

TEST_CASE("changing one slot's bits only changes that timestep's codes") {
  std::vector<double> v_by_t{0.7, 1.6, 2.9};
  std::vector<int> bits_a{3, 3, 3}, bits_b{3, 1, 3};
  for (int t = 0; t < 3; ++t) {
    int32_t a = neuron::fire(v_by_t[std::size_t(t)], 1.0, bits_a[std::size_t(t)], false);
    int32_t b = neuron::fire(v_by_t[std::size_t(t)], 1.0, bits_b[std::size_t(t)], false);
    if (t == 1)
      CHECK(a != b);
    else
      CHECK(a == b);
  }
}
