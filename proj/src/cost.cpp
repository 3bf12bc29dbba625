#include "bitsnn/cost.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>

#include "json.hpp"

namespace bitsnn::cost {

namespace {

double effective_T(const LayerCost& l) { return l.squeezed ? 1.0 : double(l.T); }

}  // namespace

// ===== Primitive metrics =====

double bit_budget(double T, double b_w, double b_s) { return T * b_w * b_s; }

double s_ace(std::span<const LayerCost> layers) {
  double acc = 0.0;
  for (const LayerCost& l : layers)
    acc += l.macs * bit_budget(effective_T(l), l.b_w, l.b_s);
  return acc;
}

double ns_ace(double s_ace_total, double avg_firing_rate) {
  if (!(avg_firing_rate >= 0.0 && avg_firing_rate <= 1.0))
    throw std::invalid_argument("ns_ace: firing rate outside [0, 1]");
  return avg_firing_rate * s_ace_total;
}

double firing_rate(const neuron::SpikeTrain& train) {
  if (train.T < 1 || train.features == 0 || train.codes.empty())
    throw std::invalid_argument("firing_rate: empty spike train");
  if (train.bits_per_t.size() < std::size_t(train.T))
    throw std::invalid_argument("firing_rate: missing per-timestep widths");
  double set_bits = 0.0, slots = 0.0;
  for (int t = 0; t < train.T; ++t) {
    for (std::size_t j = 0; j < train.features; ++j) {
      const uint32_t mag = uint32_t(std::abs(train.at(t, j)));
      set_bits += double(std::popcount(mag));
    }
    slots += double(train.features) * double(train.bits_per_t[std::size_t(t)]);
  }
  return set_bits / slots;
}

double expected_nonzero_bits(double T, double S, double ns_ace_total,
                             double s_ace_total) {
  if (!(s_ace_total > 0.0))
    throw std::invalid_argument("expected_nonzero_bits: s_ace must be positive");
  return T * S * (ns_ace_total / s_ace_total);
}

double model_size_bits(std::span<const LayerCost> layers) {
  double acc = 0.0;
  for (const LayerCost& l : layers) acc += double(l.n_w) * l.b_w;
  return acc;
}

double bits_to_mb(double bits) { return bits / (8.0 * 1024.0 * 1024.0); }

// ===== Analytic MAC counts =====

double conv_macs(std::size_t out_h, std::size_t out_w, std::size_t out_c,
                 std::size_t k_h, std::size_t k_w, std::size_t in_c) {
  return double(out_h) * double(out_w) * double(out_c) * double(k_h) *
         double(k_w) * double(in_c);
}

double dense_macs(std::size_t in_dim, std::size_t out_dim) {
  return double(in_dim) * double(out_dim);
}

// ===== Report assembly and serialization =====

CostReport build_report(std::span<const LayerCost> layers,
                        double avg_firing_rate, double t_bar, double b_s_bar) {
  CostReport report;
  report.avg_firing_rate = avg_firing_rate;
  double w_elems = 0.0;
  for (const LayerCost& l : layers) {
    CostRow row;
    row.layer_id = l.layer_id;
    row.T = double(l.T);
    row.b_w = l.b_w;
    row.b_s = l.b_s;
    row.macs = l.macs;
    row.bit_budget = bit_budget(double(l.T), l.b_w, l.b_s);
    row.s_ace = l.macs * bit_budget(effective_T(l), l.b_w, l.b_s);
    row.ns_ace = ns_ace(row.s_ace, avg_firing_rate);
    row.weight_bits_total = double(l.n_w) * l.b_w;

    report.totals.macs += row.macs;
    report.totals.s_ace += row.s_ace;
    report.totals.ns_ace += row.ns_ace;
    report.totals.weight_bits_total += row.weight_bits_total;
    report.totals.b_w += double(l.n_w) * l.b_w;
    report.totals.b_s += double(l.n_f) * double(l.T) * l.b_s;
    report.totals.T += double(l.n_f) * double(l.T);
    w_elems += double(l.n_w);
    report.per_layer.push_back(std::move(row));
  }
  double f_elems = 0.0, slot_elems = 0.0;
  for (const LayerCost& l : layers) {
    f_elems += double(l.n_f);
    slot_elems += double(l.n_f) * double(l.T);
  }
  report.totals.layer_id = "total";
  if (w_elems > 0.0) report.totals.b_w /= w_elems;
  if (slot_elems > 0.0) report.totals.b_s /= slot_elems;
  if (f_elems > 0.0) report.totals.T /= f_elems;
  report.totals.bit_budget =
      bit_budget(report.totals.T, report.totals.b_w, report.totals.b_s);
  report.exp_act = report.totals.s_ace > 0.0
                       ? expected_nonzero_bits(t_bar, b_s_bar,
                                               report.totals.ns_ace,
                                               report.totals.s_ace)
                       : 0.0;
  return report;
}

namespace {

nlohmann::json row_to_json(const CostRow& row) {
  return nlohmann::json{{"layer_id", row.layer_id},
                        {"T", row.T},
                        {"b_w", row.b_w},
                        {"b_s", row.b_s},
                        {"macs", row.macs},
                        {"bit_budget", row.bit_budget},
                        {"s_ace", row.s_ace},
                        {"ns_ace", row.ns_ace},
                        {"weight_bits_total", row.weight_bits_total}};
}

}  // namespace

void write_report_json(std::ostream& os, const CostReport& report) {
  nlohmann::json doc;
  doc["version"] = 1;
  doc["per_layer"] = nlohmann::json::array();
  for (const CostRow& row : report.per_layer)
    doc["per_layer"].push_back(row_to_json(row));
  doc["totals"] = row_to_json(report.totals);
  doc["avg_firing_rate"] = report.avg_firing_rate;
  doc["exp_act"] = report.exp_act;
  os << doc.dump(2) << '\n';
}

void write_report_csv(std::ostream& os, const CostReport& report) {
  os << "layer_id,T,b_w,b_s,macs,bit_budget,s_ace,ns_ace,weight_bits_total\n";
  auto emit = [&os](const CostRow& row) {
    os << row.layer_id << ',' << row.T << ',' << row.b_w << ',' << row.b_s
       << ',' << row.macs << ',' << row.bit_budget << ',' << row.s_ace << ','
       << row.ns_ace << ',' << row.weight_bits_total << '\n';
  };
  for (const CostRow& row : report.per_layer) emit(row);
  emit(report.totals);
}

}  // namespace bitsnn::cost
