#pragma once
// Small spiking networks assembled from the quantization, neuron, bit, and
// kernel modules. A model is a chain of spiking layers (conv2d or dense)
// closed by a non-spiking dense head. Every layer quantizes its weights with
// a learnable step and bit width; spiking layers fire integer codes over T
// materialized timesteps with per-slot thresholds and bit widths, and hand
// the next layer a single temporally squeezed real frame. The backward pass
// is written by hand against the straight-through relaxations, so every
// learnable class (weights, weight steps, thresholds, weight bits, spike
// bits, timesteps) gets an explicit gradient.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "bitsnn/bits.hpp"
#include "bitsnn/kernels.hpp"
#include "bitsnn/neuron.hpp"
#include "bitsnn/quant.hpp"

namespace bitsnn::model {

// ===== Architecture description =====

struct LayerSpec {
  enum class Kind { conv2d, dense };
  Kind kind = Kind::conv2d;
  kernels::Conv2dShape conv;            // conv layers
  std::size_t in_dim = 0, out_dim = 0;  // dense layers
  bool spiking = true;
  bool bidirectional = false;  // first spiking layer only
  bool batch_norm = false;     // spiking layers only
  bool bias = false;           // non-spiking head only

  std::size_t weight_count() const;
  std::size_t in_features() const;
  std::size_t out_features() const;
};

struct ModelSpec {
  std::vector<LayerSpec> layers;
  double tau = 2.0;
  bool shift_enabled = true;
  int b_w_bound = 6, b_s_bound = 6, t_bound = 3;
  double init_w_bits = 4.0, init_s_bits = 4.0, init_t = 2.0;
  std::size_t in_h = 8, in_w = 8;
  std::size_t n_classes = 10;

  // Throws std::invalid_argument on incompatible layer chaining, a
  // bidirectional flag off the first layer, a spiking or bias-carrying
  // head, or out-of-family tau.
  void validate() const;
};

// Three spiking conv layers and a dense head sized for 8x8 inputs.
ModelSpec desk_model(std::size_t channels = 8, bool batch_norm = true);
// Two spiking layers (bidirectional conv, unsigned dense) and a head, small
// enough for finite-difference sweeps.
ModelSpec micro_model();

nlohmann::json spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const nlohmann::json& j);

// ===== Parameters =====

struct LayerParams {
  std::vector<float> w;
  std::vector<float> bias;     // head only
  double s_q = 1.0;            // weight quantization step
  std::vector<double> v1;      // firing thresholds, one per slot (spiking)
  bits::LayerBitParams bits;   // b_w_hat, b_s_hat per slot, t_hat
  std::vector<double> bn_mean, bn_var;  // running stats for evaluation
};

struct Model {
  ModelSpec spec;
  std::vector<LayerParams> params;
};

// He-initialized weights, unit steps and thresholds, bit parameters at the
// spec's initial values.
Model make_model(const ModelSpec& spec, std::uint64_t seed);

// ===== Forward =====

struct LayerCache {
  std::vector<float> input;    // real input frame [batch * in_features]
  quant::QuantizedTensor wq;
  std::vector<float> wq_deq;
  std::vector<float> pre_bn;   // linear output before normalization
  std::vector<double> mean, var;  // batch statistics used (batch_norm only)
  std::vector<float> drive;    // what the membrane integrates
  int T = 0;
  int b_w = 0;
  std::vector<int> bits_s;     // materialized per-slot spike bits
  std::vector<float> v;        // [T, batch*out_features] membrane at fire time
  neuron::SpikeTrain train;    // codes [T, batch*out_features]
  std::vector<float> squeezed; // (1/T) sum_t V1[t] * codes[t]
};

struct ForwardCache {
  std::size_t batch = 0;
  std::vector<LayerCache> layers;
  std::vector<float> logits;   // [batch, n_classes]
};

// train_mode selects batch statistics (and updates the running ones) for
// normalization; evaluation uses the stored running statistics. images are
// [batch, in_h, in_w] in [0, 1].
ForwardCache forward(Model& m, std::span<const float> images,
                     std::size_t batch, bool train_mode);

double cross_entropy(std::span<const float> logits, std::span<const int> labels,
                     std::size_t n_classes);
std::vector<float> cross_entropy_grad(std::span<const float> logits,
                                      std::span<const int> labels,
                                      std::size_t n_classes);

// ===== Backward =====

struct LayerGrads {
  std::vector<float> w;
  std::vector<float> bias;
  double s_q = 0.0;
  std::vector<double> v1;      // per slot
  double b_w_hat = 0.0;
  std::vector<double> b_s_hat; // per slot
  double t_hat = 0.0;
};

// Task-loss gradients only; the regulating-loss contributions to the bit
// parameters are chained in by the trainer.
std::vector<LayerGrads> backward(const Model& m, const ForwardCache& fc,
                                 std::span<const float> dlogits);

// Adds the regulating-loss gradients to the bit parameters through each
// layer's element-count share and its materialization mask, and returns the
// loss value.
double add_regulating_gradients(const Model& m,
                                const bits::RegulatingTargets& targets,
                                std::vector<LayerGrads>& grads);

// ===== Bookkeeping =====

// Materialized integer bit allocation per layer; the head contributes only
// its weight count and width.
std::vector<bits::LayerBitSummary> bit_summary(const Model& m);

// Data-driven step initialization: weight steps from the weight magnitudes,
// thresholds from the membrane magnitudes of one forward pass over the
// given mini-batch.
void init_steps(Model& m, std::span<const float> images, std::size_t batch);

}  // namespace bitsnn::model
