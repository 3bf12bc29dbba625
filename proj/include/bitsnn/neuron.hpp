#pragma once

// The multi-bit spiking neuron: input-current formation from a temporally
// squeezed train, leaky integration with soft reset, firing through a shifted
// floor (equivalent to rounding half away from zero), directional clipping,
// and the pass-through spike surrogate.

#include <cstdint>
#include <span>
#include <vector>

#include "bitsnn/quant.hpp"

namespace bitsnn::neuron {

struct NeuronConfig {
  double tau = 1.0;           // membrane leak divisor, 1 = none
  bool bidirectional = false;
  int T_bound = 3;
  bool shift_enabled = true;  // apply V2 = 0.5*sign(v/V1) before flooring
};

struct SpikeTrain {
  std::vector<int32_t> codes;  // [T, features], row-major
  std::vector<int> bits_per_t;
  int T = 0;
  std::size_t features = 0;

  int32_t at(int t, std::size_t j) const { return codes[std::size_t(t) * features + j]; }
};

struct NeuronState {
  NeuronConfig cfg;
  std::vector<double> V1;          // per-timestep thresholds, length T_bound
  std::vector<double> v;           // membrane potential, length features
  std::vector<int32_t> last_spike;
  int last_t = 0;                  // timestep of the most recent step()
};

// Mean over timesteps of the integer codes.
std::vector<float> temporal_squeeze(const SpikeTrain& train);

// Dequantized weight matrix [out_dim, in_dim] applied to V1_prev * squeezed;
// both scale factors multiply the accumulated integer products once.
std::vector<float> input_current(std::span<const float> squeezed_prev,
                                 const quant::QuantizedTensor& weights,
                                 std::size_t out_dim, double V1_prev);

// clip(floor(v/V1 + V2), q_min, q_max) with the directional range; the 1-bit
// bidirectional case is the sign quantizer. Throws on non-positive V1.
int32_t fire(double v, double V1, int bits, bool bidirectional,
             bool shift_enabled = true);

// Pass-through mask for d(spike)/d(v/V1): 1 iff v/V1 lies in [q_min, q_max].
int spike_surrogate(double v, double V1, int bits, bool bidirectional);

NeuronState make_state(const NeuronConfig& cfg, std::span<const double> V1,
                       std::size_t features);

// One membrane update v^t = v^{t-1}/tau + V_in - S^{t-1} * V1[t-1] followed by
// an element-wise fire at slot t. Steps must be taken in order t = 1, 2, ...
std::vector<int32_t> step(NeuronState& state, std::span<const float> V_in, int t,
                          int bits_t);

}  // namespace bitsnn::neuron
