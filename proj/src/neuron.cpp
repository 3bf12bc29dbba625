#include "bitsnn/neuron.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace bitsnn::neuron {

using quant::quant_range;
using quant::QuantRange;
using quant::sign_pos;

std::vector<float> temporal_squeeze(const SpikeTrain& train) {
  if (train.T < 1 || train.features == 0 ||
      train.codes.size() != std::size_t(train.T) * train.features)
    throw std::invalid_argument("temporal_squeeze: empty or inconsistent train");
  std::vector<float> out(train.features);
  for (std::size_t j = 0; j < train.features; ++j) {
    double acc = 0.0;
    for (int t = 0; t < train.T; ++t) acc += train.at(t, j);
    out[j] = float(acc / train.T);
  }
  return out;
}

std::vector<float> input_current(std::span<const float> squeezed_prev,
                                 const quant::QuantizedTensor& weights,
                                 std::size_t out_dim, double V1_prev) {
  const std::size_t in_dim = squeezed_prev.size();
  if (weights.codes.size() != out_dim * in_dim)
    throw std::invalid_argument("input_current: weight matrix is " +
                                std::to_string(weights.codes.size()) +
                                " elements, expected " +
                                std::to_string(out_dim * in_dim));
  if (!(V1_prev > 0.0))
    throw std::invalid_argument("input_current: V1_prev must be positive");
  std::vector<float> out(out_dim);
  const double scale = weights.step * V1_prev;
  for (std::size_t i = 0; i < out_dim; ++i) {
    double acc = 0.0;
    const int32_t* row = weights.codes.data() + i * in_dim;
    for (std::size_t j = 0; j < in_dim; ++j) acc += double(row[j]) * squeezed_prev[j];
    out[i] = float(scale * acc);
  }
  return out;
}

int32_t fire(double v, double V1, int bits, bool bidirectional,
             bool shift_enabled) {
  if (!(V1 > 0.0))
    throw std::invalid_argument("fire: V1 must be positive");
  const double ratio = v / V1;
  if (bidirectional && bits == 1) return int32_t(sign_pos(ratio));
  QuantRange r = quant_range(bits, bidirectional);
  // The half-step shift turns the floor into round-half-away-from-zero;
  // the shifted value is truncated toward zero so negative ratios mirror
  // positive ones instead of drifting one level low.
  double code = shift_enabled ? std::trunc(ratio + 0.5 * sign_pos(ratio))
                              : std::floor(ratio);
  if (code < r.q_min) code = r.q_min;
  if (code > r.q_max) code = r.q_max;
  return int32_t(code);
}

int spike_surrogate(double v, double V1, int bits, bool bidirectional) {
  if (!(V1 > 0.0))
    throw std::invalid_argument("spike_surrogate: V1 must be positive");
  QuantRange r = quant_range(bits, bidirectional);
  const double ratio = v / V1;
  return (ratio >= r.q_min && ratio <= r.q_max) ? 1 : 0;
}

NeuronState make_state(const NeuronConfig& cfg, std::span<const double> V1,
                       std::size_t features) {
  if (cfg.T_bound < 1 || V1.size() != std::size_t(cfg.T_bound))
    throw std::invalid_argument("make_state: V1 must have T_bound entries");
  for (double th : V1)
    if (!(th > 0.0))
      throw std::invalid_argument("make_state: thresholds must be positive");
  NeuronState st;
  st.cfg = cfg;
  st.V1.assign(V1.begin(), V1.end());
  st.v.assign(features, 0.0);
  st.last_spike.assign(features, 0);
  st.last_t = 0;
  return st;
}

std::vector<int32_t> step(NeuronState& state, std::span<const float> V_in, int t,
                          int bits_t) {
  if (t < 1 || t > state.cfg.T_bound || t != state.last_t + 1)
    throw std::invalid_argument("step: timestep " + std::to_string(t) +
                                " out of order (last was " +
                                std::to_string(state.last_t) + ")");
  if (V_in.size() != state.v.size())
    throw std::invalid_argument("step: V_in shape mismatch");
  std::vector<int32_t> spikes(state.v.size());
  // The reset subtracts the threshold slot that produced the previous spike.
  const double reset_V1 = t >= 2 ? state.V1[t - 2] : 0.0;
  for (std::size_t j = 0; j < state.v.size(); ++j) {
    double vj = state.v[j] / state.cfg.tau + double(V_in[j]) -
                double(state.last_spike[j]) * reset_V1;
    spikes[j] = fire(vj, state.V1[t - 1], bits_t, state.cfg.bidirectional,
                     state.cfg.shift_enabled);
    state.v[j] = vj;
  }
  state.last_spike = spikes;
  state.last_t = t;
  return spikes;
}

}  // namespace bitsnn::neuron
