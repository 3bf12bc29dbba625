#include "bitsnn/bits.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "bitsnn/quant.hpp"

namespace bitsnn::bits {

using quant::grad_scale;
using quant::quant_range;
using quant::QuantRange;
using quant::round_half_away;
using quant::sign_pos;

// ===== Materialization =====

int materialize(double x_hat, int bound) {
  if (bound < 1)
    throw std::invalid_argument("materialize: bound must be at least 1");
  double clipped = x_hat;
  if (clipped < 1.0) clipped = 1.0;
  if (clipped > double(bound)) clipped = double(bound);
  return int(round_half_away(clipped));
}

double materialize_ste_mask(double x_hat, int bound) {
  if (bound < 1)
    throw std::invalid_argument("materialize_ste_mask: bound must be at least 1");
  return (x_hat >= 1.0 && x_hat <= double(bound)) ? 1.0 : 0.0;
}

// ===== Gradients for the learnable bit parameters =====

double spike_bits_grad(std::span<const float> v_over_V1, int bits_t,
                       std::span<const float> upstream, bool bidirectional) {
  if (v_over_V1.size() != upstream.size())
    throw std::invalid_argument("spike_bits_grad: ratio/upstream size mismatch");
  if (v_over_V1.empty()) return 0.0;
  QuantRange r = quant_range(bits_t, bidirectional);
  const double slope = double(r.q_max + 1) * std::numbers::ln2;
  double acc = 0.0;
  for (std::size_t j = 0; j < v_over_V1.size(); ++j) {
    const double ratio = v_over_V1[j];
    const bool saturated = bidirectional
                               ? (ratio < r.q_min || ratio > r.q_max)
                               : (ratio > r.q_max);
    if (saturated) acc += double(upstream[j]) * sign_pos(ratio) * slope;
  }
  return acc * grad_scale(v_over_V1.size(), r.q_max);
}

double threshold_grad(std::span<const float> v, double V1_t, int bits_t,
                      std::span<const float> upstream, bool bidirectional,
                      bool shift_enabled) {
  if (!(V1_t > 0.0))
    throw std::invalid_argument("threshold_grad: V1 must be positive");
  if (v.size() != upstream.size())
    throw std::invalid_argument("threshold_grad: v/upstream size mismatch");
  if (v.empty()) return 0.0;
  QuantRange r = quant_range(bits_t, bidirectional);
  const bool sign_fire = bidirectional && bits_t == 1;
  double acc = 0.0;
  for (std::size_t j = 0; j < v.size(); ++j) {
    const double ratio = double(v[j]) / V1_t;
    double g_q;
    if (ratio < r.q_min) {
      g_q = double(r.q_min);
    } else if (ratio > r.q_max) {
      g_q = double(r.q_max);
    } else if (sign_fire) {
      g_q = sign_pos(ratio) - ratio;
    } else {
      g_q = double(neuron::fire(double(v[j]), V1_t, bits_t, bidirectional,
                                shift_enabled)) -
            ratio;
    }
    acc += double(upstream[j]) * g_q;
  }
  return acc * grad_scale(v.size(), r.q_max) / V1_t;
}

double temporal_grad(const neuron::SpikeTrain& train,
                     std::span<const float> upstream_on_squeezed) {
  if (upstream_on_squeezed.size() != train.features)
    throw std::invalid_argument("temporal_grad: upstream size mismatch");
  const double scale = -1.0 / (double(train.T) * double(train.T));
  double acc = 0.0;
  for (std::size_t j = 0; j < train.features; ++j) {
    double code_sum = 0.0;
    for (int t = 0; t < train.T; ++t) code_sum += double(train.at(t, j));
    acc += double(upstream_on_squeezed[j]) * code_sum;
  }
  return acc * scale;
}

double temporal_grad_scaled(const neuron::SpikeTrain& train,
                            std::span<const double> V1,
                            std::span<const float> upstream_on_squeezed) {
  if (upstream_on_squeezed.size() != train.features)
    throw std::invalid_argument("temporal_grad_scaled: upstream size mismatch");
  if (V1.size() < std::size_t(train.T))
    throw std::invalid_argument("temporal_grad_scaled: V1 shorter than T");
  const double scale = -1.0 / (double(train.T) * double(train.T));
  double acc = 0.0;
  for (std::size_t j = 0; j < train.features; ++j) {
    double value_sum = 0.0;
    for (int t = 0; t < train.T; ++t)
      value_sum += V1[std::size_t(t)] * double(train.at(t, j));
    acc += double(upstream_on_squeezed[j]) * value_sum;
  }
  return acc * scale;
}

// ===== Regulating loss and model averages =====

RegulatingLoss regulating_loss(const BitAverages& avg,
                               const RegulatingTargets& targets) {
  const double dw = avg.b_w_bar - targets.b_w_tar;
  const double dt = avg.t_bar - targets.t_tar;
  const double ds = avg.b_s_bar - targets.b_s_tar;
  RegulatingLoss out;
  out.value = targets.lambda1 * dw * dw + targets.lambda2 * dt * dt +
              targets.lambda3 * ds * ds;
  out.d_b_w_bar = 2.0 * targets.lambda1 * dw;
  out.d_t_bar = 2.0 * targets.lambda2 * dt;
  out.d_b_s_bar = 2.0 * targets.lambda3 * ds;
  return out;
}

BitAverages average_bits(std::span<const LayerBitSummary> layers) {
  if (layers.empty())
    throw std::invalid_argument("average_bits: no layers");
  double w_num = 0.0, w_den = 0.0;
  double s_num = 0.0, s_den = 0.0;
  double t_num = 0.0, t_den = 0.0;
  for (const LayerBitSummary& l : layers) {
    if (l.n_w > 0) {
      w_num += double(l.n_w) * double(l.b_w);
      w_den += double(l.n_w);
    }
    if (l.n_f > 0) {
      if (l.T < 1 || l.b_s.size() < std::size_t(l.T))
        throw std::invalid_argument("average_bits: spiking layer needs b_s per active slot");
      for (int t = 0; t < l.T; ++t)
        s_num += double(l.n_f) * double(l.b_s[std::size_t(t)]);
      s_den += double(l.n_f) * double(l.T);
      t_num += double(l.n_f) * double(l.T);
      t_den += double(l.n_f);
    }
  }
  if (w_den == 0.0)
    throw std::invalid_argument("average_bits: no weight elements");
  if (t_den == 0.0)
    throw std::invalid_argument("average_bits: no feature elements");
  return BitAverages{w_num / w_den, s_num / s_den, t_num / t_den};
}

}  // namespace bitsnn::bits
