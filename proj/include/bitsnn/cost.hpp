#pragma once
// Cost accounting for mixed-width spiking models: per-layer bit budgets,
// arithmetic computation effort with and without event sparsity, firing
// rates measured as the fraction of set magnitude bits, model size, and the
// expected count of non-zero activation bits per output.

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "bitsnn/neuron.hpp"

namespace bitsnn::cost {

// Shape-level description of one layer for the accounting pass. macs counts
// multiply-accumulates for one input frame; squeezed layers convolve a
// single time-averaged frame regardless of T.
struct LayerCost {
  std::string layer_id;
  int T = 1;
  double b_w = 0.0;
  double b_s = 0.0;  // mean width over active time-step slots
  double macs = 0.0;
  bool squeezed = true;
  std::size_t n_w = 0;  // weight element count
  std::size_t n_f = 0;  // feature elements per timestep
};

struct CostRow {
  std::string layer_id;
  double T = 0.0;
  double b_w = 0.0;
  double b_s = 0.0;
  double macs = 0.0;
  double bit_budget = 0.0;
  double s_ace = 0.0;
  double ns_ace = 0.0;
  double weight_bits_total = 0.0;
};

struct CostReport {
  std::vector<CostRow> per_layer;
  CostRow totals;  // sums for counts, element-weighted means for widths
  double avg_firing_rate = 0.0;
  double exp_act = 0.0;
};

// ===== Primitive metrics =====

// T * B_w * B_s, a pure product (symmetric in its arguments).
double bit_budget(double T, double b_w, double b_s);

// Sum over layers of macs * bit_budget, with T collapsed to 1 for squeezed
// layers since they convolve one merged frame.
double s_ace(std::span<const LayerCost> layers);

// avg_firing_rate * s_ace_total. Throws when the rate leaves [0, 1].
double ns_ace(double s_ace_total, double avg_firing_rate);

// Fraction of set bits among T * features * B_s magnitude-bit slots; the
// sign of a bidirectional code is not a slot. Throws on an empty train.
double firing_rate(const neuron::SpikeTrain& train);

// T * S * (ns_ace / s_ace): how many activation bits a layer output carries
// on average once zeros are skipped. Throws when s_ace is not positive.
double expected_nonzero_bits(double T, double S, double ns_ace_total,
                             double s_ace_total);

// Total weight storage in bits and its megabyte conversion.
double model_size_bits(std::span<const LayerCost> layers);
double bits_to_mb(double bits);

// ===== Analytic MAC counts =====

double conv_macs(std::size_t out_h, std::size_t out_w, std::size_t out_c,
                 std::size_t k_h, std::size_t k_w, std::size_t in_c);
double dense_macs(std::size_t in_dim, std::size_t out_dim);

// ===== Report assembly and serialization =====

// Builds per-layer rows plus element-weighted totals; exp_act uses the
// supplied model averages and the aggregate ACE ratio (0 when s_ace is 0).
CostReport build_report(std::span<const LayerCost> layers,
                        double avg_firing_rate, double t_bar, double b_s_bar);

// Versioned structured dump (field names match the types) and a flat CSV.
void write_report_json(std::ostream& os, const CostReport& report);
void write_report_csv(std::ostream& os, const CostReport& report);

}  // namespace bitsnn::cost
