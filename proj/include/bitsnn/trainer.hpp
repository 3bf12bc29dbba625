#pragma once
// Training orchestration: SGD with momentum over the task loss plus the
// regulating loss, per-step renewal guards behind the shutting thresholds,
// per-epoch logging, evaluation with cost accounting, and checkpointing.
//
// Loop order per step: renewal guards (observers see the weights and the
// previous forward's membranes) -> forward -> loss -> backward -> update.
// Step sizes and thresholds are data-initialized from the first mini-batch;
// the first guard pass then renews them again because every observer starts
// with no recorded bit width.

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bitsnn/bits.hpp"
#include "bitsnn/cost.hpp"
#include "bitsnn/dataset.hpp"
#include "bitsnn/model.hpp"
#include "bitsnn/renewal.hpp"

namespace bitsnn::trainer {

// ===== Configuration =====

enum class RenewalMode { off, act_only, weight_only, bilateral };

// Accepts "off", "act-only", "weight-only", "bilateral"; throws
// std::invalid_argument otherwise.
RenewalMode renewal_mode_from_string(const std::string& name);
std::string to_string(RenewalMode mode);

struct TrainConfig {
  int epochs = 40;
  std::size_t batch_size = 32;
  double learning_rate = 0.1;
  double momentum = 0.9;
  std::uint64_t seed = 1;
  bool bits_learning = true;  // false freezes b_w_hat, b_s_hat, t_hat
  bits::RegulatingTargets targets;
  RenewalMode renewal_mode = RenewalMode::act_only;
  renewal::GridSearchConfig grid;
  bool relatch = false;  // let a regrown bit gap re-arm renewal

  // Throws std::invalid_argument on non-positive epochs, batch size, or
  // learning rate, momentum outside [0, 1), or negative penalty weights.
  void validate() const;
};

// ===== Session state =====

struct LayerObservers {
  renewal::ObserverState weights;
  std::vector<renewal::ObserverState> spikes;  // one per timestep slot
};

// Membranes of the previous forward pass, the data the activation
// observers calibrate against.
struct SlotMembranes {
  std::vector<float> v;  // [T, n]
  int T = 0;
  std::size_t n = 0;
};

struct TrainSession {
  model::Model m;
  TrainConfig cfg;
  std::vector<LayerObservers> observers;
  std::vector<SlotMembranes> membranes;
  bool renew_w_active = true, renew_s_active = true;
  double initial_gap_w = 0.0, initial_gap_s = 0.0;
  bool steps_initialized = false;
  int epoch = 0;
  std::mt19937_64 rng;

  // Momentum buffers; deliberately not checkpointed, so a resumed run
  // restarts its velocity at zero.
  std::vector<std::vector<float>> vel_w, vel_bias;
  std::vector<double> vel_s_q, vel_b_w, vel_t;
  std::vector<std::vector<double>> vel_v1, vel_b_s;
};

TrainSession make_session(const model::ModelSpec& spec, const TrainConfig& cfg);

// ===== Training and evaluation =====

struct EpochRow {
  int epoch = 0;
  double task_loss = 0.0;
  double reg_loss = 0.0;
  double b_w_bar = 0.0, b_s_bar = 0.0, t_bar = 0.0;
  double accuracy = 0.0;
  int renewal_events = 0;
};

// Runs cfg.epochs epochs (continuing from session.epoch) and returns one row
// per epoch; losses are step means, averages and accuracy are measured after
// the epoch's updates. Throws std::runtime_error naming the first non-finite
// tensor if the loss diverges, std::invalid_argument on dataset/model shape
// mismatch or a dataset smaller than one batch.
std::vector<EpochRow> train(TrainSession& session,
                            const dataset::Dataset& train_data,
                            const dataset::Dataset& eval_data);

struct EvalResult {
  double accuracy = 0.0;
  cost::CostReport cost;
};

// Deterministic evaluation-mode inference over the whole dataset plus the
// cost report of the materialized bit allocation. The firing rate aggregates
// set magnitude bits over every spiking layer and batch; the readout head
// consumes a real-valued frame and contributes no spike widths.
EvalResult evaluate(model::Model& m, const dataset::Dataset& data,
                    std::size_t batch_size);

// Fixed column order:
// epoch,task_loss,reg_loss,b_w_bar,b_s_bar,t_bar,accuracy,renewal_events
void write_log_csv(std::ostream& os, std::span<const EpochRow> rows);

// ===== Checkpointing =====

// Writes stem.json + stem.bin: weights and biases in the binary blob,
// every scalar that must round-trip exactly (steps, thresholds, continuous
// bit parameters, normalization statistics, observers, RNG state) in the
// manifest. Velocity buffers are not persisted.
void save_checkpoint(const TrainSession& session, const std::string& stem);
TrainSession load_checkpoint(const std::string& stem, const TrainConfig& cfg);

}  // namespace bitsnn::trainer
