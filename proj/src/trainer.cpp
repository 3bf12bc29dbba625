// Training orchestration: renewal guards, forward, combined loss, hand-written
// backward, SGD with momentum, per-epoch logging, evaluation with cost
// accounting, and checkpointing through the named-tensor store.

#include "bitsnn/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "bitsnn/checkpoint.hpp"

namespace bitsnn::trainer {

namespace {

constexpr double kMinStep = 1e-6;  // floor for learned steps and thresholds

// ===== Small helpers =====

bool all_finite(std::span<const float> x) {
  for (float v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

bool all_finite(std::span<const double> x) {
  for (double v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

[[noreturn]] void diverged(const std::string& tensor) {
  throw std::runtime_error("training diverged: non-finite values in " + tensor);
}

std::string layer_tag(std::size_t li) { return "layer" + std::to_string(li); }

void gather_batch(const dataset::Dataset& data,
                  std::span<const std::size_t> idx, std::vector<float>& images,
                  std::vector<int>& labels) {
  const std::size_t dim = data.feature_dim();
  images.resize(idx.size() * dim);
  labels.resize(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const float* src = data.sample(idx[i]);
    std::copy(src, src + dim, images.begin() + i * dim);
    labels[i] = data.labels[idx[i]];
  }
}

void check_dataset(const dataset::Dataset& data, const model::ModelSpec& spec,
                   const char* which) {
  if (data.size() == 0)
    throw std::invalid_argument(std::string(which) + " dataset is empty");
  if (data.feature_dim() != spec.in_h * spec.in_w)
    throw std::invalid_argument(
        std::string(which) + " dataset feature size " +
        std::to_string(data.feature_dim()) + " does not match model input " +
        std::to_string(spec.in_h * spec.in_w));
  for (int label : data.labels)
    if (label < 0 || std::size_t(label) >= spec.n_classes)
      throw std::invalid_argument(std::string(which) + " dataset label " +
                                  std::to_string(label) + " outside " +
                                  std::to_string(spec.n_classes) + " classes");
}

bits::BitAverages current_averages(const model::Model& m) {
  return bits::average_bits(model::bit_summary(m));
}

// ===== Renewal guards =====

void apply_latches(TrainSession& s, const bits::BitAverages& avg) {
  const bits::RegulatingTargets& tar = s.cfg.targets;
  const bool w_open =
      renewal::shutting_check(avg.b_w_bar, tar.b_w_tar, s.initial_gap_w);
  const bool s_open =
      renewal::shutting_check(avg.b_s_bar, tar.b_s_tar, s.initial_gap_s);
  if (s.cfg.relatch) {
    s.renew_w_active = w_open;
    s.renew_s_active = s_open;
  } else {
    s.renew_w_active = s.renew_w_active && w_open;
    s.renew_s_active = s.renew_s_active && s_open;
  }
  for (LayerObservers& obs : s.observers) {
    obs.weights.active = s.renew_w_active;
    for (renewal::ObserverState& o : obs.spikes) o.active = s.renew_s_active;
  }
}

// Runs the per-quantizer observers against the current weights and the
// membranes cached from the previous forward pass. Returns how many steps
// were actually replaced.
int run_renewal(TrainSession& s) {
  if (s.cfg.renewal_mode == RenewalMode::off) return 0;
  apply_latches(s, current_averages(s.m));

  const bool do_w = s.cfg.renewal_mode == RenewalMode::weight_only ||
                    s.cfg.renewal_mode == RenewalMode::bilateral;
  const bool do_s = s.cfg.renewal_mode == RenewalMode::act_only ||
                    s.cfg.renewal_mode == RenewalMode::bilateral;
  int events = 0;
  for (std::size_t li = 0; li < s.m.params.size(); ++li) {
    model::LayerParams& p = s.m.params[li];
    const model::LayerSpec& ls = s.m.spec.layers[li];
    if (do_w) {
      const int b_w = bits::materialize(p.bits.b_w_hat, p.bits.b_w_bound);
      std::optional<double> step = renewal::renew(
          s.observers[li].weights, p.w, b_w, /*is_signed=*/true, s.cfg.grid);
      if (step && *step > 0.0 && std::isfinite(*step)) {
        p.s_q = *step;
        ++events;
      }
    }
    if (do_s && ls.spiking && li < s.membranes.size()) {
      const SlotMembranes& mem = s.membranes[li];
      const int slots = std::min<int>(mem.T, int(p.v1.size()));
      for (int t = 0; t < slots; ++t) {
        const int b_s =
            bits::materialize(p.bits.b_s_hat[std::size_t(t)], p.bits.b_s_bound);
        std::span<const float> row(mem.v.data() + std::size_t(t) * mem.n, mem.n);
        std::optional<double> step =
            renewal::renew(s.observers[li].spikes[std::size_t(t)], row, b_s,
                           ls.bidirectional, s.cfg.grid);
        if (step && *step > 0.0 && std::isfinite(*step)) {
          p.v1[std::size_t(t)] = *step;
          ++events;
        }
      }
    }
  }
  return events;
}

void snapshot_membranes(TrainSession& s, const model::ForwardCache& fc) {
  s.membranes.resize(fc.layers.size());
  for (std::size_t li = 0; li < fc.layers.size(); ++li) {
    const model::LayerCache& lc = fc.layers[li];
    s.membranes[li].v = lc.v;
    s.membranes[li].T = lc.T;
    s.membranes[li].n = lc.T > 0 ? lc.v.size() / std::size_t(lc.T) : 0;
  }
}

// ===== Divergence scan and parameter update =====

void check_grads(const std::vector<model::LayerGrads>& grads) {
  for (std::size_t li = 0; li < grads.size(); ++li) {
    const model::LayerGrads& g = grads[li];
    if (!all_finite(g.w)) diverged(layer_tag(li) + ".w gradient");
    if (!all_finite(g.bias)) diverged(layer_tag(li) + ".bias gradient");
    if (!std::isfinite(g.s_q)) diverged(layer_tag(li) + ".s_q gradient");
    if (!all_finite(g.v1)) diverged(layer_tag(li) + ".v1 gradient");
    if (!std::isfinite(g.b_w_hat)) diverged(layer_tag(li) + ".b_w_hat gradient");
    if (!all_finite(g.b_s_hat)) diverged(layer_tag(li) + ".b_s_hat gradient");
    if (!std::isfinite(g.t_hat)) diverged(layer_tag(li) + ".t_hat gradient");
  }
}

void check_params(const model::Model& m) {
  for (std::size_t li = 0; li < m.params.size(); ++li) {
    const model::LayerParams& p = m.params[li];
    if (!all_finite(p.w)) diverged(layer_tag(li) + ".w");
    if (!all_finite(p.bias)) diverged(layer_tag(li) + ".bias");
    if (!std::isfinite(p.s_q)) diverged(layer_tag(li) + ".s_q");
    if (!all_finite(p.v1)) diverged(layer_tag(li) + ".v1");
  }
}

void momentum_step(std::vector<float>& vel, std::vector<float>& param,
                   std::span<const float> grad, double mu, double lr) {
  for (std::size_t i = 0; i < param.size(); ++i) {
    vel[i] = float(mu * vel[i] - lr * grad[i]);
    param[i] += vel[i];
  }
}

void momentum_step(double& vel, double& param, double grad, double mu,
                   double lr) {
  vel = mu * vel - lr * grad;
  param += vel;
}

void apply_update(TrainSession& s, const std::vector<model::LayerGrads>& grads) {
  const double mu = s.cfg.momentum, lr = s.cfg.learning_rate;
  for (std::size_t li = 0; li < grads.size(); ++li) {
    model::LayerParams& p = s.m.params[li];
    const model::LayerGrads& g = grads[li];
    momentum_step(s.vel_w[li], p.w, g.w, mu, lr);
    momentum_step(s.vel_bias[li], p.bias, g.bias, mu, lr);
    momentum_step(s.vel_s_q[li], p.s_q, g.s_q, mu, lr);
    p.s_q = std::max(p.s_q, kMinStep);
    for (std::size_t t = 0; t < p.v1.size(); ++t) {
      momentum_step(s.vel_v1[li][t], p.v1[t], g.v1[t], mu, lr);
      p.v1[t] = std::max(p.v1[t], kMinStep);
    }
    if (!s.cfg.bits_learning) continue;
    // Projected update: a parameter that momentum carries outside the
    // materialization window would lose its straight-through gradient and
    // freeze there, so clamp back into [1, bound].
    momentum_step(s.vel_b_w[li], p.bits.b_w_hat, g.b_w_hat, mu, lr);
    p.bits.b_w_hat =
        std::clamp(p.bits.b_w_hat, 1.0, double(p.bits.b_w_bound));
    for (std::size_t t = 0; t < g.b_s_hat.size(); ++t) {
      momentum_step(s.vel_b_s[li][t], p.bits.b_s_hat[t], g.b_s_hat[t], mu, lr);
      p.bits.b_s_hat[t] =
          std::clamp(p.bits.b_s_hat[t], 1.0, double(p.bits.b_s_bound));
    }
    momentum_step(s.vel_t[li], p.bits.t_hat, g.t_hat, mu, lr);
    p.bits.t_hat = std::clamp(p.bits.t_hat, 1.0, double(p.bits.t_bound));
  }
}

// ===== Cost assembly =====

std::vector<cost::LayerCost> layer_costs(const model::Model& m) {
  const std::vector<bits::LayerBitSummary> summary = model::bit_summary(m);
  std::vector<cost::LayerCost> rows(summary.size());
  for (std::size_t li = 0; li < summary.size(); ++li) {
    const model::LayerSpec& ls = m.spec.layers[li];
    const bits::LayerBitSummary& bs = summary[li];
    cost::LayerCost& row = rows[li];
    row.layer_id = layer_tag(li);
    row.T = std::max(bs.T, 1);
    row.b_w = double(bs.b_w);
    row.squeezed = true;
    row.n_w = bs.n_w;
    row.n_f = bs.n_f;
    if (!bs.b_s.empty()) {
      double acc = 0.0;
      for (int b : bs.b_s) acc += double(b);
      row.b_s = acc / double(bs.b_s.size());
    }
    row.macs = ls.kind == model::LayerSpec::Kind::conv2d
                   ? cost::conv_macs(ls.conv.out_h(), ls.conv.out_w(),
                                     ls.conv.out_c, ls.conv.k_h, ls.conv.k_w,
                                     ls.conv.in_c)
                   : cost::dense_macs(ls.in_dim, ls.out_dim);
  }
  return rows;
}

// ===== Checkpoint encoding =====

// The manifest must round-trip +-infinity in untouched observer extrema,
// which JSON numbers cannot carry.
nlohmann::json json_double(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? "inf" : "-inf";
}

double double_from_json(const nlohmann::json& j) {
  if (j.is_string())
    return j.get<std::string>() == "inf"
               ? std::numeric_limits<double>::infinity()
               : -std::numeric_limits<double>::infinity();
  return j.get<double>();
}

nlohmann::json observer_to_json(const renewal::ObserverState& o) {
  return {{"v_r_max", json_double(o.v_r_max)},
          {"v_r_min", json_double(o.v_r_min)},
          {"recorded_bits", o.recorded_bits},
          {"active", o.active}};
}

renewal::ObserverState observer_from_json(const nlohmann::json& j) {
  renewal::ObserverState o;
  o.v_r_max = double_from_json(j.at("v_r_max"));
  o.v_r_min = double_from_json(j.at("v_r_min"));
  o.recorded_bits = j.at("recorded_bits").get<int>();
  o.active = j.at("active").get<bool>();
  return o;
}

}  // namespace

// ===== Configuration =====

RenewalMode renewal_mode_from_string(const std::string& name) {
  if (name == "off") return RenewalMode::off;
  if (name == "act-only") return RenewalMode::act_only;
  if (name == "weight-only") return RenewalMode::weight_only;
  if (name == "bilateral") return RenewalMode::bilateral;
  throw std::invalid_argument("unknown renewal mode '" + name +
                              "' (expected off, act-only, weight-only, or "
                              "bilateral)");
}

std::string to_string(RenewalMode mode) {
  switch (mode) {
    case RenewalMode::off: return "off";
    case RenewalMode::act_only: return "act-only";
    case RenewalMode::weight_only: return "weight-only";
    case RenewalMode::bilateral: return "bilateral";
  }
  throw std::invalid_argument("unknown renewal mode value");
}

void TrainConfig::validate() const {
  if (epochs <= 0) throw std::invalid_argument("epochs must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  if (!(learning_rate > 0.0))
    throw std::invalid_argument("learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw std::invalid_argument("momentum must lie in [0, 1)");
  if (targets.lambda1 < 0.0 || targets.lambda2 < 0.0 || targets.lambda3 < 0.0)
    throw std::invalid_argument("penalty weights must be non-negative");
  if (targets.b_w_tar < 1.0 || targets.b_s_tar < 1.0 || targets.t_tar < 1.0)
    throw std::invalid_argument("bit and time-step targets must be at least 1");
}

// ===== Session state =====

TrainSession make_session(const model::ModelSpec& spec, const TrainConfig& cfg) {
  cfg.validate();
  TrainSession s;
  s.m = model::make_model(spec, cfg.seed);
  s.cfg = cfg;
  s.rng.seed(cfg.seed);

  const std::size_t n_layers = spec.layers.size();
  s.observers.resize(n_layers);
  s.vel_w.resize(n_layers);
  s.vel_bias.resize(n_layers);
  s.vel_s_q.assign(n_layers, 0.0);
  s.vel_b_w.assign(n_layers, 0.0);
  s.vel_t.assign(n_layers, 0.0);
  s.vel_v1.resize(n_layers);
  s.vel_b_s.resize(n_layers);
  for (std::size_t li = 0; li < n_layers; ++li) {
    const model::LayerParams& p = s.m.params[li];
    s.observers[li].spikes.resize(p.v1.size());
    s.vel_w[li].assign(p.w.size(), 0.0f);
    s.vel_bias[li].assign(p.bias.size(), 0.0f);
    s.vel_v1[li].assign(p.v1.size(), 0.0);
    s.vel_b_s[li].assign(p.bits.b_s_hat.size(), 0.0);
  }

  const bits::BitAverages avg = current_averages(s.m);
  s.initial_gap_w = std::abs(avg.b_w_bar - cfg.targets.b_w_tar);
  s.initial_gap_s = std::abs(avg.b_s_bar - cfg.targets.b_s_tar);
  return s;
}

// ===== Training =====

std::vector<EpochRow> train(TrainSession& session,
                            const dataset::Dataset& train_data,
                            const dataset::Dataset& eval_data) {
  session.cfg.validate();
  check_dataset(train_data, session.m.spec, "train");
  check_dataset(eval_data, session.m.spec, "eval");
  const std::size_t batch = session.cfg.batch_size;
  if (train_data.size() < batch)
    throw std::invalid_argument("train dataset smaller than one batch");

  std::vector<std::size_t> order(train_data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<float> images;
  std::vector<int> labels;

  if (!session.steps_initialized) {
    gather_batch(train_data, std::span(order).first(batch), images, labels);
    model::init_steps(session.m, images, batch);
    model::ForwardCache fc = model::forward(session.m, images, batch, true);
    snapshot_membranes(session, fc);
    session.steps_initialized = true;
  }

  const std::size_t n_batches = train_data.size() / batch;
  std::vector<EpochRow> rows;
  rows.reserve(std::size_t(session.cfg.epochs));

  for (int e = 0; e < session.cfg.epochs; ++e) {
    std::shuffle(order.begin(), order.end(), session.rng);
    double task_sum = 0.0, reg_sum = 0.0;
    int renewals = 0;

    for (std::size_t b = 0; b < n_batches; ++b) {
      renewals += run_renewal(session);

      gather_batch(train_data, std::span(order).subspan(b * batch, batch),
                   images, labels);
      model::ForwardCache fc = model::forward(session.m, images, batch, true);
      if (!all_finite(fc.logits)) diverged("logits");

      const double task =
          model::cross_entropy(fc.logits, labels, session.m.spec.n_classes);
      std::vector<float> dlogits =
          model::cross_entropy_grad(fc.logits, labels, session.m.spec.n_classes);
      std::vector<model::LayerGrads> grads =
          model::backward(session.m, fc, dlogits);
      const double reg = model::add_regulating_gradients(
          session.m, session.cfg.targets, grads);
      if (!std::isfinite(task)) diverged("task loss");
      if (!std::isfinite(reg)) diverged("regulating loss");
      check_grads(grads);

      apply_update(session, grads);
      check_params(session.m);
      snapshot_membranes(session, fc);
      task_sum += task;
      reg_sum += reg;
    }

    EpochRow row;
    row.epoch = session.epoch;
    row.task_loss = task_sum / double(n_batches);
    row.reg_loss = reg_sum / double(n_batches);
    const bits::BitAverages avg = current_averages(session.m);
    row.b_w_bar = avg.b_w_bar;
    row.b_s_bar = avg.b_s_bar;
    row.t_bar = avg.t_bar;
    row.accuracy = evaluate(session.m, eval_data, batch).accuracy;
    row.renewal_events = renewals;
    rows.push_back(row);
    ++session.epoch;
  }
  return rows;
}

// ===== Evaluation =====

EvalResult evaluate(model::Model& m, const dataset::Dataset& data,
                    std::size_t batch_size) {
  if (batch_size == 0)
    throw std::invalid_argument("batch size must be positive");
  check_dataset(data, m.spec, "eval");

  std::size_t correct = 0;
  double set_bits = 0.0, bit_slots = 0.0;
  std::vector<float> images;
  std::vector<int> labels;
  std::vector<std::size_t> idx;

  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, data.size() - start);
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), start);
    gather_batch(data, idx, images, labels);
    model::ForwardCache fc = model::forward(m, images, n, false);

    const std::size_t classes = m.spec.n_classes;
    for (std::size_t i = 0; i < n; ++i) {
      const float* row = fc.logits.data() + i * classes;
      std::size_t best = 0;
      for (std::size_t c = 1; c < classes; ++c)
        if (row[c] > row[best]) best = c;
      correct += int(best) == labels[i] ? 1 : 0;
    }
    for (const model::LayerCache& lc : fc.layers) {
      const neuron::SpikeTrain& train = lc.train;
      for (int t = 0; t < train.T; ++t) {
        for (std::size_t j = 0; j < train.features; ++j)
          set_bits += double(std::popcount(std::uint32_t(std::abs(train.at(t, j)))));
        bit_slots += double(train.features) *
                     double(train.bits_per_t[std::size_t(t)]);
      }
    }
  }

  EvalResult result;
  result.accuracy = double(correct) / double(data.size());
  const double rate = bit_slots > 0.0 ? set_bits / bit_slots : 0.0;
  const bits::BitAverages avg = current_averages(m);
  result.cost = cost::build_report(layer_costs(m), rate, avg.t_bar, avg.b_s_bar);
  return result;
}

// ===== Logging =====

void write_log_csv(std::ostream& os, std::span<const EpochRow> rows) {
  os << "epoch,task_loss,reg_loss,b_w_bar,b_s_bar,t_bar,accuracy,"
        "renewal_events\n";
  char buf[512];
  for (const EpochRow& r : rows) {
    std::snprintf(buf, sizeof(buf),
                  "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n", r.epoch,
                  r.task_loss, r.reg_loss, r.b_w_bar, r.b_s_bar, r.t_bar,
                  r.accuracy, r.renewal_events);
    os << buf;
  }
}

// ===== Checkpointing =====

void save_checkpoint(const TrainSession& session, const std::string& stem) {
  checkpoint::TensorStore store;
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t li = 0; li < session.m.params.size(); ++li) {
    const model::LayerParams& p = session.m.params[li];
    store.tensors[layer_tag(li) + ".w"] = {{p.w.size()}, p.w};
    if (!p.bias.empty())
      store.tensors[layer_tag(li) + ".bias"] = {{p.bias.size()}, p.bias};

    nlohmann::json jl;
    jl["s_q"] = p.s_q;
    jl["v1"] = p.v1;
    jl["b_w_hat"] = p.bits.b_w_hat;
    jl["b_s_hat"] = p.bits.b_s_hat;
    jl["t_hat"] = p.bits.t_hat;
    jl["bn_mean"] = p.bn_mean;
    jl["bn_var"] = p.bn_var;
    jl["obs_w"] = observer_to_json(session.observers[li].weights);
    nlohmann::json obs_s = nlohmann::json::array();
    for (const renewal::ObserverState& o : session.observers[li].spikes)
      obs_s.push_back(observer_to_json(o));
    jl["obs_s"] = std::move(obs_s);
    layers.push_back(std::move(jl));
  }

  std::ostringstream rng_state;
  rng_state << session.rng;
  store.meta["kind"] = "train-session";
  store.meta["spec"] = model::spec_to_json(session.m.spec);
  store.meta["layers"] = std::move(layers);
  store.meta["epoch"] = session.epoch;
  store.meta["steps_initialized"] = session.steps_initialized;
  store.meta["renew_w_active"] = session.renew_w_active;
  store.meta["renew_s_active"] = session.renew_s_active;
  store.meta["initial_gap_w"] = session.initial_gap_w;
  store.meta["initial_gap_s"] = session.initial_gap_s;
  store.meta["rng"] = rng_state.str();
  checkpoint::save_store(store, stem);
}

TrainSession load_checkpoint(const std::string& stem, const TrainConfig& cfg) {
  const checkpoint::TensorStore store = checkpoint::load_store(stem);
  if (store.meta.value("kind", "") != "train-session")
    throw std::runtime_error("checkpoint '" + stem +
                             "' does not hold a training session");

  TrainSession s = make_session(model::spec_from_json(store.meta.at("spec")), cfg);
  const nlohmann::json& layers = store.meta.at("layers");
  for (std::size_t li = 0; li < s.m.params.size(); ++li) {
    model::LayerParams& p = s.m.params[li];
    const nlohmann::json& jl = layers.at(li);
    p.w = store.tensors.at(layer_tag(li) + ".w").data;
    if (!p.bias.empty()) p.bias = store.tensors.at(layer_tag(li) + ".bias").data;
    p.s_q = jl.at("s_q").get<double>();
    p.v1 = jl.at("v1").get<std::vector<double>>();
    p.bits.b_w_hat = jl.at("b_w_hat").get<double>();
    p.bits.b_s_hat = jl.at("b_s_hat").get<std::vector<double>>();
    p.bits.t_hat = jl.at("t_hat").get<double>();
    p.bn_mean = jl.at("bn_mean").get<std::vector<double>>();
    p.bn_var = jl.at("bn_var").get<std::vector<double>>();
    s.observers[li].weights = observer_from_json(jl.at("obs_w"));
    const nlohmann::json& obs_s = jl.at("obs_s");
    s.observers[li].spikes.resize(obs_s.size());
    for (std::size_t t = 0; t < obs_s.size(); ++t)
      s.observers[li].spikes[t] = observer_from_json(obs_s.at(t));
  }

  s.epoch = store.meta.at("epoch").get<int>();
  s.steps_initialized = store.meta.at("steps_initialized").get<bool>();
  s.renew_w_active = store.meta.at("renew_w_active").get<bool>();
  s.renew_s_active = store.meta.at("renew_s_active").get<bool>();
  s.initial_gap_w = store.meta.at("initial_gap_w").get<double>();
  s.initial_gap_s = store.meta.at("initial_gap_s").get<double>();
  std::istringstream rng_state(store.meta.at("rng").get<std::string>());
  rng_state >> s.rng;
  if (!rng_state)
    throw std::runtime_error("checkpoint '" + stem + "' has a corrupt RNG state");
  return s;
}

}  // namespace bitsnn::trainer
