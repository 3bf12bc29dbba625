#include "bitsnn/quant.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace bitsnn::quant {

QuantRange quant_range(int bits, bool is_signed) {
  if (bits < 1 || bits > 30)
    throw std::invalid_argument("quant_range: bits must be in [1, 30], got " +
                                std::to_string(bits));
  if (!is_signed) return {0, (int32_t(1) << bits) - 1};
  if (bits == 1) return {-1, 1};
  int32_t m = (int32_t(1) << (bits - 1)) - 1;
  return {-m, m};
}

double round_half_away(double x) {
  // std::round already rounds halfway cases away from zero.
  return std::round(x);
}

double sign_pos(double x) { return x < 0.0 ? -1.0 : 1.0; }

double grad_scale(std::size_t n, int32_t q_max) {
  return 1.0 / std::sqrt(double(n) * double(q_max));
}

std::vector<float> QuantizedTensor::dequant_all() const {
  std::vector<float> out(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i)
    out[i] = float(codes[i] * step);
  return out;
}

static void check_quant_args(std::span<const float> w, double step, int bits) {
  if (!(step > 0.0) || !std::isfinite(step))
    throw std::invalid_argument("quantize: step must be positive and finite");
  quant_range(bits, true);
  for (float x : w)
    if (!std::isfinite(x))
      throw std::invalid_argument("quantize: non-finite input value");
}

QuantizedTensor quantize_weights(std::span<const float> w, double step, int bits) {
  check_quant_args(w, step, bits);
  QuantRange r = quant_range(bits, true);
  QuantizedTensor q;
  q.step = step;
  q.bits = bits;
  q.is_signed = true;
  q.codes.resize(w.size());
  if (bits == 1) {
    for (std::size_t i = 0; i < w.size(); ++i)
      q.codes[i] = int32_t(sign_pos(w[i] / step));
  } else {
    for (std::size_t i = 0; i < w.size(); ++i) {
      double c = round_half_away(w[i] / step);
      if (c < r.q_min) c = r.q_min;
      if (c > r.q_max) c = r.q_max;
      q.codes[i] = int32_t(c);
    }
  }
  return q;
}

static void check_shapes(std::span<const float> w, std::span<const float> up) {
  if (w.size() != up.size())
    throw std::invalid_argument("weight gradient: upstream shape mismatch (" +
                                std::to_string(w.size()) + " vs " +
                                std::to_string(up.size()) + ")");
}

std::vector<float> weight_grad_values(std::span<const float> w, double step,
                                      int bits, std::span<const float> upstream) {
  check_quant_args(w, step, bits);
  check_shapes(w, upstream);
  QuantRange r = quant_range(bits, true);
  std::vector<float> g(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    double ratio = w[i] / step;
    g[i] = (ratio >= r.q_min && ratio <= r.q_max) ? upstream[i] : 0.0f;
  }
  return g;
}

double weight_grad_step(std::span<const float> w, double step, int bits,
                        std::span<const float> upstream) {
  check_quant_args(w, step, bits);
  check_shapes(w, upstream);
  QuantRange r = quant_range(bits, true);
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    double ratio = w[i] / step;
    double gq;
    if (ratio < r.q_min)
      gq = r.q_min;
    else if (ratio > r.q_max)
      gq = r.q_max;
    else if (bits == 1)
      gq = sign_pos(ratio) - ratio;
    else
      gq = round_half_away(ratio) - ratio;
    acc += double(upstream[i]) * gq;
  }
  return acc * grad_scale(w.size(), r.q_max);
}

double weight_grad_bits(std::span<const float> w, double step, int bits,
                        std::span<const float> upstream) {
  check_quant_args(w, step, bits);
  check_shapes(w, upstream);
  QuantRange r = quant_range(bits, true);
  const double ln2 = std::log(2.0);
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    double ratio = w[i] / step;
    if (ratio >= r.q_min && ratio <= r.q_max) continue;
    acc += double(upstream[i]) * sign_pos(ratio) * step * (r.q_max + 1.0) * ln2;
  }
  return acc * grad_scale(w.size(), r.q_max);
}

}  // namespace bitsnn::quant
