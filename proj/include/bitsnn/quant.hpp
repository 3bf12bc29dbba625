#pragma once

// Scalar and tensor quantization primitives for weights: rounding, clipping,
// the 1-bit sign special case, and straight-through gradients with respect to
// values, step sizes, and bit widths.

#include <cstdint>
#include <span>
#include <vector>

namespace bitsnn::quant {

// ============================================================================
// Ranges and rounding
// ============================================================================

struct QuantRange {
  int32_t q_min = 0;
  int32_t q_max = 0;
};

// Signed ranges are symmetric: [-2^(bits-1)+1, 2^(bits-1)-1] for bits > 1,
// {-1, +1} for bits == 1 (sign quantizer). Unsigned: [0, 2^bits - 1].
// Throws std::invalid_argument for bits < 1 or bits > 30.
QuantRange quant_range(int bits, bool is_signed);

// Round half away from zero, so rounding commutes with negation.
double round_half_away(double x);

// Sign with sign(0) defined as +1.
double sign_pos(double x);

// LSQ-style gradient rescale: 1/sqrt(n * q_max).
double grad_scale(std::size_t n, int32_t q_max);

// ============================================================================
// Weight quantization
// ============================================================================

struct QuantizedTensor {
  std::vector<int32_t> codes;
  double step = 1.0;
  int bits = 1;
  bool is_signed = true;

  double dequant(std::size_t i) const { return codes[i] * step; }
  std::vector<float> dequant_all() const;
};

// codes_i = clip(round(w_i/step), q_min, q_max) for bits > 1,
// codes_i = sign(w_i/step) for bits == 1. Always signed.
// Throws std::invalid_argument for non-positive step or non-finite input.
QuantizedTensor quantize_weights(std::span<const float> w, double step, int bits);

// ============================================================================
// Straight-through gradients
// ============================================================================
// `upstream` is dL/d(w_q), the gradient at the dequantized weights.

// Pass-through inside [q_min, q_max] of w/step, zero where saturated.
std::vector<float> weight_grad_values(std::span<const float> w, double step,
                                      int bits, std::span<const float> upstream);

// d w_q / d step cases: round(w/s) - w/s inside the range (sign(w/s) - w/s
// for 1 bit), q_min below, q_max above; summed with the grad_scale factor.
double weight_grad_step(std::span<const float> w, double step, int bits,
                        std::span<const float> upstream);

// d w_q / d bits: sign(w/s) * step * (q_max+1) * ln2 where w/s is saturated,
// zero elsewhere; summed with the grad_scale factor.
double weight_grad_bits(std::span<const float> w, double step, int bits,
                        std::span<const float> upstream);

}  // namespace bitsnn::quant
