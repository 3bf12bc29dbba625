#pragma once
// Learnable bit-width machinery: materialization of continuous bit and
// time-step parameters into integers, the saturation-driven gradients that
// move them, the regulating loss that pulls model averages toward targets,
// and the element-count-weighted averages themselves.
//
// Continuous parameters (b_w_hat, b_s_hat per time-step slot, t_hat) are
// rounded-and-clipped into integers for the forward pass. Gradients reach
// them through a straight-through estimator: identity inside the clip
// region, zero outside, with the integer grid relaxed exponentially so a
// saturated element contributes sign(ratio) * (q_max + 1) * ln2.

#include <cstddef>
#include <span>
#include <vector>

#include "bitsnn/neuron.hpp"

namespace bitsnn::bits {

// ===== Parameter containers =====

// Per-layer continuous bit parameters and their integer upper bounds.
// b_s_hat carries one entry per time-step slot (slots beyond the
// materialized T stay parked but keep their values).
struct LayerBitParams {
  double b_w_hat = 4.0;
  std::vector<double> b_s_hat;
  double t_hat = 2.0;
  int b_w_bound = 6;
  int b_s_bound = 6;
  int t_bound = 3;
};

// Targets and penalty coefficients for the regulating loss.
// lambda1 weighs the weight-bit gap, lambda2 the time-step gap,
// lambda3 the spike-bit gap.
struct RegulatingTargets {
  double b_w_tar = 2.0;
  double b_s_tar = 2.0;
  double t_tar = 1.0;
  double lambda1 = 4e-2;
  double lambda2 = 4e-2;
  double lambda3 = 1e-2;
};

struct BitAverages {
  double b_w_bar = 0.0;
  double b_s_bar = 0.0;
  double t_bar = 0.0;
};

// Element counts and materialized integers for one layer, the inputs to
// average_bits. Non-spiking layers (a readout head) set n_f = 0 and leave
// b_s empty so they only enter the weight-bit average.
struct LayerBitSummary {
  std::size_t n_w = 0;
  std::size_t n_f = 0;
  int b_w = 0;
  std::vector<int> b_s;
  int T = 0;
};

// Loss value plus its derivatives with respect to the three averages.
// Callers chain these into per-layer parameter gradients using each
// layer's element-count share and the materialization STE mask.
struct RegulatingLoss {
  double value = 0.0;
  double d_b_w_bar = 0.0;
  double d_b_s_bar = 0.0;
  double d_t_bar = 0.0;
};

// ===== Materialization =====

// round(clip(x_hat, 1, bound)) with round-half-away-from-zero.
// Throws std::invalid_argument when bound < 1.
int materialize(double x_hat, int bound);

// Straight-through gradient of materialize: 1 inside [1, bound], else 0.
double materialize_ste_mask(double x_hat, int bound);

// ===== Gradients for the learnable bit parameters =====

// Gradient of the task loss with respect to one time-step slot's
// continuous spike bit width. Only saturated elements contribute:
// ratio > q_max for unsigned neurons, ratio outside [q_min, q_max] for
// bidirectional ones, each adding upstream * sign(ratio) * (q_max+1) * ln2
// scaled by 1/sqrt(N * q_max). Throws on shape mismatch or bad bits.
double spike_bits_grad(std::span<const float> v_over_V1, int bits_t,
                       std::span<const float> upstream, bool bidirectional);

// Gradient of the task loss with respect to one time-step slot's firing
// threshold. upstream is dL/dS in code space; every term carries the
// 1/V1 conversion to the dequantized scale:
//   in range:  code - ratio   (sign(ratio) - ratio for 1-bit bidirectional)
//   below:     q_min          (zero for unsigned, where q_min = 0)
//   above:     q_max
// all times upstream * g_scale / V1. Throws when V1 <= 0 or shapes differ.
double threshold_grad(std::span<const float> v, double V1_t, int bits_t,
                      std::span<const float> upstream, bool bidirectional,
                      bool shift_enabled = true);

// Gradient of the task loss with respect to the continuous time-step count,
// through the 1/T prefactor of temporal squeezing with the slot structure
// frozen: sum_j upstream_j * (-1/T^2) * sum_t codes[t][j].
double temporal_grad(const neuron::SpikeTrain& train,
                     std::span<const float> upstream_on_squeezed);

// Same derivative when each slot's codes are dequantized by its own
// threshold before averaging, as the training path does.
double temporal_grad_scaled(const neuron::SpikeTrain& train,
                            std::span<const double> V1,
                            std::span<const float> upstream_on_squeezed);

// ===== Regulating loss and model averages =====

// lambda1*(Bw_bar - tar)^2 + lambda2*(T_bar - tar)^2 + lambda3*(Bs_bar - tar)^2
// with the derivative of each squared gap exposed for backprop.
RegulatingLoss regulating_loss(const BitAverages& avg,
                               const RegulatingTargets& targets);

// Element-count-weighted model averages:
//   b_w_bar over weight elements, b_s_bar over feature elements and active
//   time-step slots, t_bar over feature elements.
// Throws std::invalid_argument on an empty summary or when no layer carries
// weights or features for a requested average.
BitAverages average_bits(std::span<const LayerBitSummary> layers);

}  // namespace bitsnn::bits
