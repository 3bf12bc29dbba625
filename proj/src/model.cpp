#include "bitsnn/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace bitsnn::model {

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;

}  // namespace

// ===== Architecture description =====

std::size_t LayerSpec::weight_count() const {
  return kind == Kind::conv2d ? conv.weight_elems() : in_dim * out_dim;
}

std::size_t LayerSpec::in_features() const {
  return kind == Kind::conv2d ? conv.in_elems() : in_dim;
}

std::size_t LayerSpec::out_features() const {
  return kind == Kind::conv2d ? conv.out_elems() : out_dim;
}

void ModelSpec::validate() const {
  if (layers.size() < 2)
    throw std::invalid_argument("model needs at least one spiking layer and a head");
  if (tau != 1.0 && tau != 2.0)
    throw std::invalid_argument("tau must be 1 or 2");
  if (b_w_bound < 1 || b_s_bound < 1 || t_bound < 1)
    throw std::invalid_argument("bit and timestep bounds must be >= 1");
  if (init_w_bits < 1 || init_w_bits > b_w_bound || init_s_bits < 1 ||
      init_s_bits > b_s_bound || init_t < 1 || init_t > t_bound)
    throw std::invalid_argument("initial bit values must lie within [1, bound]");

  std::size_t c = 1, h = in_h, w = in_w;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerSpec& ls = layers[l];
    const bool is_head = l + 1 == layers.size();
    if (is_head != !ls.spiking)
      throw std::invalid_argument("exactly the last layer must be the non-spiking head");
    if (ls.bidirectional && l != 0)
      throw std::invalid_argument("only the first layer may be bidirectional");
    if (ls.bias && ls.spiking)
      throw std::invalid_argument("spiking layers carry no bias");
    if (ls.batch_norm && !ls.spiking)
      throw std::invalid_argument("the head is not normalized");
    if (ls.kind == LayerSpec::Kind::conv2d) {
      if (!ls.spiking)
        throw std::invalid_argument("the head must be a dense layer");
      if (ls.conv.in_c != c || ls.conv.in_h != h || ls.conv.in_w != w)
        throw std::invalid_argument("layer " + std::to_string(l) +
                                    " input shape breaks the chain");
      c = ls.conv.out_c;
      h = ls.conv.out_h();
      w = ls.conv.out_w();
    } else {
      if (ls.in_dim != c * h * w)
        throw std::invalid_argument("layer " + std::to_string(l) +
                                    " input dimension breaks the chain");
      c = ls.out_dim;
      h = w = 1;
    }
  }
  if (c != n_classes)
    throw std::invalid_argument("head output does not match the class count");
}

ModelSpec desk_model(std::size_t channels, bool batch_norm) {
  ModelSpec spec;
  spec.in_h = spec.in_w = 8;
  spec.n_classes = 10;

  LayerSpec l0;
  l0.kind = LayerSpec::Kind::conv2d;
  l0.conv = {1, 8, 8, channels, 3, 3, 1, 1};
  l0.bidirectional = true;
  l0.batch_norm = batch_norm;
  spec.layers.push_back(l0);

  LayerSpec l1;
  l1.kind = LayerSpec::Kind::conv2d;
  l1.conv = {channels, 8, 8, 2 * channels, 3, 3, 2, 1};
  l1.batch_norm = batch_norm;
  spec.layers.push_back(l1);

  LayerSpec l2;
  l2.kind = LayerSpec::Kind::conv2d;
  l2.conv = {2 * channels, 4, 4, 2 * channels, 3, 3, 2, 1};
  l2.batch_norm = batch_norm;
  spec.layers.push_back(l2);

  LayerSpec head;
  head.kind = LayerSpec::Kind::dense;
  head.in_dim = 2 * channels * 2 * 2;
  head.out_dim = 10;
  head.spiking = false;
  head.bias = true;
  spec.layers.push_back(head);

  spec.validate();
  return spec;
}

ModelSpec micro_model() {
  ModelSpec spec;
  spec.in_h = spec.in_w = 4;
  spec.n_classes = 3;

  LayerSpec l0;
  l0.kind = LayerSpec::Kind::conv2d;
  l0.conv = {1, 4, 4, 2, 3, 3, 1, 1};
  l0.bidirectional = true;
  l0.batch_norm = true;
  spec.layers.push_back(l0);

  LayerSpec l1;
  l1.kind = LayerSpec::Kind::dense;
  l1.in_dim = 32;
  l1.out_dim = 12;
  spec.layers.push_back(l1);

  LayerSpec head;
  head.kind = LayerSpec::Kind::dense;
  head.in_dim = 12;
  head.out_dim = 3;
  head.spiking = false;
  head.bias = true;
  spec.layers.push_back(head);

  spec.validate();
  return spec;
}

nlohmann::json spec_to_json(const ModelSpec& spec) {
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerSpec& ls : spec.layers) {
    nlohmann::json j = {
        {"kind", ls.kind == LayerSpec::Kind::conv2d ? "conv2d" : "dense"},
        {"spiking", ls.spiking},
        {"bidirectional", ls.bidirectional},
        {"batch_norm", ls.batch_norm},
        {"bias", ls.bias}};
    if (ls.kind == LayerSpec::Kind::conv2d)
      j["conv"] = {ls.conv.in_c,  ls.conv.in_h, ls.conv.in_w, ls.conv.out_c,
                   ls.conv.k_h,   ls.conv.k_w,  ls.conv.stride, ls.conv.pad};
    else
      j["dense"] = {ls.in_dim, ls.out_dim};
    layers.push_back(j);
  }
  return {{"layers", layers},
          {"tau", spec.tau},
          {"shift_enabled", spec.shift_enabled},
          {"b_w_bound", spec.b_w_bound},
          {"b_s_bound", spec.b_s_bound},
          {"t_bound", spec.t_bound},
          {"init_w_bits", spec.init_w_bits},
          {"init_s_bits", spec.init_s_bits},
          {"init_t", spec.init_t},
          {"in_h", spec.in_h},
          {"in_w", spec.in_w},
          {"n_classes", spec.n_classes}};
}

ModelSpec spec_from_json(const nlohmann::json& j) {
  ModelSpec spec;
  spec.tau = j.at("tau").get<double>();
  spec.shift_enabled = j.at("shift_enabled").get<bool>();
  spec.b_w_bound = j.at("b_w_bound").get<int>();
  spec.b_s_bound = j.at("b_s_bound").get<int>();
  spec.t_bound = j.at("t_bound").get<int>();
  spec.init_w_bits = j.at("init_w_bits").get<double>();
  spec.init_s_bits = j.at("init_s_bits").get<double>();
  spec.init_t = j.at("init_t").get<double>();
  spec.in_h = j.at("in_h").get<std::size_t>();
  spec.in_w = j.at("in_w").get<std::size_t>();
  spec.n_classes = j.at("n_classes").get<std::size_t>();
  for (const auto& lj : j.at("layers")) {
    LayerSpec ls;
    ls.kind = lj.at("kind").get<std::string>() == "conv2d"
                  ? LayerSpec::Kind::conv2d
                  : LayerSpec::Kind::dense;
    ls.spiking = lj.at("spiking").get<bool>();
    ls.bidirectional = lj.at("bidirectional").get<bool>();
    ls.batch_norm = lj.at("batch_norm").get<bool>();
    ls.bias = lj.at("bias").get<bool>();
    if (ls.kind == LayerSpec::Kind::conv2d) {
      const auto c = lj.at("conv").get<std::vector<std::size_t>>();
      ls.conv = {c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]};
    } else {
      const auto d = lj.at("dense").get<std::vector<std::size_t>>();
      ls.in_dim = d[0];
      ls.out_dim = d[1];
    }
    spec.layers.push_back(ls);
  }
  spec.validate();
  return spec;
}

// ===== Parameters =====

Model make_model(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Model m;
  m.spec = spec;
  std::mt19937_64 rng(seed);
  for (const LayerSpec& ls : spec.layers) {
    LayerParams p;
    const std::size_t fan_in = ls.kind == LayerSpec::Kind::conv2d
                                   ? ls.conv.in_c * ls.conv.k_h * ls.conv.k_w
                                   : ls.in_dim;
    std::normal_distribution<double> init(0.0, std::sqrt(2.0 / double(fan_in)));
    p.w.resize(ls.weight_count());
    for (float& w : p.w) w = float(init(rng));
    if (ls.bias) p.bias.assign(ls.out_features(), 0.0f);
    p.bits.b_w_hat = spec.init_w_bits;
    p.bits.b_w_bound = spec.b_w_bound;
    p.bits.b_s_bound = spec.b_s_bound;
    p.bits.t_bound = spec.t_bound;
    if (ls.spiking) {
      p.v1.assign(std::size_t(spec.t_bound), 1.0);
      p.bits.b_s_hat.assign(std::size_t(spec.t_bound), spec.init_s_bits);
      p.bits.t_hat = spec.init_t;
      const std::size_t bn_c =
          ls.kind == LayerSpec::Kind::conv2d ? ls.conv.out_c : ls.out_dim;
      if (ls.batch_norm) {
        p.bn_mean.assign(bn_c, 0.0);
        p.bn_var.assign(bn_c, 1.0);
      }
    }
    m.params.push_back(std::move(p));
  }
  return m;
}

// ===== Forward =====

namespace {

// Channel geometry of a spiking layer's output: chans (the normalization
// axis) times the per-channel spatial size.
void bn_shape(const LayerSpec& ls, std::size_t& chans, std::size_t& spatial) {
  if (ls.kind == LayerSpec::Kind::conv2d) {
    chans = ls.conv.out_c;
    spatial = ls.conv.out_h() * ls.conv.out_w();
  } else {
    chans = ls.out_dim;
    spatial = 1;
  }
}

void batch_norm_forward(const LayerSpec& ls, LayerParams& p, LayerCache& lc,
                        std::size_t batch, bool train_mode) {
  std::size_t chans = 0, spatial = 0;
  bn_shape(ls, chans, spatial);
  const std::size_t per_sample = chans * spatial;
  const double M = double(batch * spatial);
  lc.mean.assign(chans, 0.0);
  lc.var.assign(chans, 0.0);
  if (train_mode) {
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t c = 0; c < chans; ++c)
        for (std::size_t s = 0; s < spatial; ++s)
          lc.mean[c] += double(lc.pre_bn[b * per_sample + c * spatial + s]);
    for (std::size_t c = 0; c < chans; ++c) lc.mean[c] /= M;
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t c = 0; c < chans; ++c)
        for (std::size_t s = 0; s < spatial; ++s) {
          const double d =
              double(lc.pre_bn[b * per_sample + c * spatial + s]) - lc.mean[c];
          lc.var[c] += d * d;
        }
    for (std::size_t c = 0; c < chans; ++c) lc.var[c] /= M;
    for (std::size_t c = 0; c < chans; ++c) {
      p.bn_mean[c] = (1.0 - kBnMomentum) * p.bn_mean[c] + kBnMomentum * lc.mean[c];
      p.bn_var[c] = (1.0 - kBnMomentum) * p.bn_var[c] + kBnMomentum * lc.var[c];
    }
  } else {
    lc.mean = p.bn_mean;
    lc.var = p.bn_var;
  }
  lc.drive.resize(lc.pre_bn.size());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < chans; ++c) {
      const double inv = 1.0 / std::sqrt(lc.var[c] + kBnEps);
      for (std::size_t s = 0; s < spatial; ++s) {
        const std::size_t i = b * per_sample + c * spatial + s;
        lc.drive[i] = float((double(lc.pre_bn[i]) - lc.mean[c]) * inv);
      }
    }
}

}  // namespace

ForwardCache forward(Model& m, std::span<const float> images, std::size_t batch,
                     bool train_mode) {
  const ModelSpec& spec = m.spec;
  if (images.size() != batch * spec.in_h * spec.in_w)
    throw std::invalid_argument("forward: image span does not match batch * " +
                                std::to_string(spec.in_h) + "x" +
                                std::to_string(spec.in_w));
  ForwardCache fc;
  fc.batch = batch;
  fc.layers.resize(spec.layers.size());

  std::vector<float> x(images.begin(), images.end());
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const LayerSpec& ls = spec.layers[l];
    LayerParams& p = m.params[l];
    LayerCache& lc = fc.layers[l];
    lc.input = x;

    lc.b_w = bits::materialize(p.bits.b_w_hat, p.bits.b_w_bound);
    lc.wq = quant::quantize_weights(p.w, p.s_q, lc.b_w);
    lc.wq_deq = lc.wq.dequant_all();

    lc.pre_bn.assign(batch * ls.out_features(), 0.0f);
    if (ls.kind == LayerSpec::Kind::conv2d)
      kernels::conv2d_forward(x, lc.wq_deq, lc.pre_bn, ls.conv, batch);
    else
      kernels::dense_forward(x, lc.wq_deq, p.bias, lc.pre_bn, ls.in_dim,
                             ls.out_dim, batch);

    if (!ls.spiking) {
      fc.logits = lc.pre_bn;
      break;
    }

    if (ls.batch_norm)
      batch_norm_forward(ls, p, lc, batch, train_mode);
    else
      lc.drive = lc.pre_bn;

    const std::size_t n = batch * ls.out_features();
    lc.T = bits::materialize(p.bits.t_hat, p.bits.t_bound);
    lc.bits_s.resize(std::size_t(lc.T));
    for (int t = 0; t < lc.T; ++t)
      lc.bits_s[std::size_t(t)] =
          bits::materialize(p.bits.b_s_hat[std::size_t(t)], p.bits.b_s_bound);

    lc.v.assign(std::size_t(lc.T) * n, 0.0f);
    lc.train.codes.assign(std::size_t(lc.T) * n, 0);
    lc.train.bits_per_t = lc.bits_s;
    lc.train.T = lc.T;
    lc.train.features = n;

    std::vector<double> memb(n, 0.0);
    for (int t = 0; t < lc.T; ++t) {
      const double reset_v1 = t >= 1 ? p.v1[std::size_t(t - 1)] : 0.0;
      const int32_t* prev =
          t >= 1 ? lc.train.codes.data() + std::size_t(t - 1) * n : nullptr;
      float* v_t = lc.v.data() + std::size_t(t) * n;
      int32_t* s_t = lc.train.codes.data() + std::size_t(t) * n;
      for (std::size_t j = 0; j < n; ++j) {
        memb[j] = memb[j] / spec.tau + double(lc.drive[j]) -
                  (prev ? double(prev[j]) * reset_v1 : 0.0);
        v_t[j] = float(memb[j]);
        s_t[j] = neuron::fire(memb[j], p.v1[std::size_t(t)],
                              lc.bits_s[std::size_t(t)], ls.bidirectional,
                              spec.shift_enabled);
      }
    }

    lc.squeezed.assign(n, 0.0f);
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int t = 0; t < lc.T; ++t)
        acc += p.v1[std::size_t(t)] * double(lc.train.at(t, j));
      lc.squeezed[j] = float(acc / lc.T);
    }
    x = lc.squeezed;
  }
  return fc;
}

double cross_entropy(std::span<const float> logits, std::span<const int> labels,
                     std::size_t n_classes) {
  const std::size_t batch = labels.size();
  if (logits.size() != batch * n_classes)
    throw std::invalid_argument("cross_entropy: logits/labels shape mismatch");
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    if (labels[b] < 0 || std::size_t(labels[b]) >= n_classes)
      throw std::invalid_argument("cross_entropy: label out of range");
    const float* row = logits.data() + b * n_classes;
    double mx = row[0];
    for (std::size_t c = 1; c < n_classes; ++c) mx = std::max(mx, double(row[c]));
    double denom = 0.0;
    for (std::size_t c = 0; c < n_classes; ++c)
      denom += std::exp(double(row[c]) - mx);
    loss += std::log(denom) - (double(row[std::size_t(labels[b])]) - mx);
  }
  return loss / double(batch);
}

std::vector<float> cross_entropy_grad(std::span<const float> logits,
                                      std::span<const int> labels,
                                      std::size_t n_classes) {
  const std::size_t batch = labels.size();
  if (logits.size() != batch * n_classes)
    throw std::invalid_argument("cross_entropy_grad: shape mismatch");
  std::vector<float> g(logits.size());
  for (std::size_t b = 0; b < batch; ++b) {
    const float* row = logits.data() + b * n_classes;
    double mx = row[0];
    for (std::size_t c = 1; c < n_classes; ++c) mx = std::max(mx, double(row[c]));
    double denom = 0.0;
    for (std::size_t c = 0; c < n_classes; ++c)
      denom += std::exp(double(row[c]) - mx);
    for (std::size_t c = 0; c < n_classes; ++c) {
      double p = std::exp(double(row[c]) - mx) / denom;
      if (int(c) == labels[b]) p -= 1.0;
      g[b * n_classes + c] = float(p / double(batch));
    }
  }
  return g;
}

// ===== Backward =====

namespace {

std::vector<float> batch_norm_backward(const LayerSpec& ls,
                                       const LayerCache& lc,
                                       std::span<const float> g_drive,
                                       std::size_t batch) {
  std::size_t chans = 0, spatial = 0;
  bn_shape(ls, chans, spatial);
  const std::size_t per_sample = chans * spatial;
  const double M = double(batch * spatial);
  std::vector<float> g_pre(g_drive.size());
  for (std::size_t c = 0; c < chans; ++c) {
    const double inv = 1.0 / std::sqrt(lc.var[c] + kBnEps);
    double sum_g = 0.0, sum_gy = 0.0;
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t s = 0; s < spatial; ++s) {
        const std::size_t i = b * per_sample + c * spatial + s;
        sum_g += double(g_drive[i]);
        sum_gy += double(g_drive[i]) * double(lc.drive[i]);
      }
    const double mean_g = sum_g / M, mean_gy = sum_gy / M;
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t s = 0; s < spatial; ++s) {
        const std::size_t i = b * per_sample + c * spatial + s;
        g_pre[i] = float(
            inv * (double(g_drive[i]) - mean_g - double(lc.drive[i]) * mean_gy));
      }
  }
  return g_pre;
}

}  // namespace

std::vector<LayerGrads> backward(const Model& m, const ForwardCache& fc,
                                 std::span<const float> dlogits) {
  const ModelSpec& spec = m.spec;
  const std::size_t batch = fc.batch;
  std::vector<LayerGrads> grads(spec.layers.size());

  // up is dL/d(layer output): dlogits for the head, then dL/d(squeezed
  // frame) as it flows backward through each spiking layer.
  std::vector<float> up(dlogits.begin(), dlogits.end());

  for (std::size_t li = spec.layers.size(); li-- > 0;) {
    const LayerSpec& ls = spec.layers[li];
    const LayerParams& p = m.params[li];
    const LayerCache& lc = fc.layers[li];
    LayerGrads& g = grads[li];
    const std::size_t n = batch * ls.out_features();

    std::vector<float> g_pre(n, 0.0f);
    if (!ls.spiking) {
      g_pre.assign(up.begin(), up.end());
      g.bias.assign(p.bias.size(), 0.0f);
      if (!p.bias.empty())
        kernels::dense_grad_bias(g_pre, g.bias, ls.out_dim, batch);
    } else {
      // Reverse the membrane recursion under the pass-through surrogate.
      // For slot t (0-based), with y_t = V1[t] * S_t the dequantized spike:
      //   dL/dy_t = up/T - dL/dv_{t+1}      (squeeze path minus reset path)
      //   dL/dv_t = dL/dy_t * mask_t + dL/dv_{t+1} / tau
      // and the drive feeds every step, so its gradient is the sum of dv_t.
      std::vector<double> dv_next(n, 0.0), updeq(n), g_drive(n, 0.0);
      std::vector<float> up_code(n), ratio(n);
      g.v1.assign(p.v1.size(), 0.0);
      g.b_s_hat.assign(p.bits.b_s_hat.size(), 0.0);
      for (int t = lc.T - 1; t >= 0; --t) {
        const double v1_t = p.v1[std::size_t(t)];
        const int bits_t = lc.bits_s[std::size_t(t)];
        const float* v_t = lc.v.data() + std::size_t(t) * n;
        for (std::size_t j = 0; j < n; ++j) {
          updeq[j] = double(up[j]) / lc.T - dv_next[j];
          up_code[j] = float(updeq[j] * v1_t);
          ratio[j] = float(double(v_t[j]) / v1_t);
        }
        g.v1[std::size_t(t)] =
            bits::threshold_grad({v_t, n}, v1_t, bits_t, up_code,
                                 ls.bidirectional, spec.shift_enabled);
        g.b_s_hat[std::size_t(t)] =
            bits::spike_bits_grad(ratio, bits_t, up_code, ls.bidirectional) *
            bits::materialize_ste_mask(p.bits.b_s_hat[std::size_t(t)],
                                       p.bits.b_s_bound);
        for (std::size_t j = 0; j < n; ++j) {
          const int mask = neuron::spike_surrogate(double(v_t[j]), v1_t, bits_t,
                                                   ls.bidirectional);
          const double dv = updeq[j] * mask + dv_next[j] / spec.tau;
          g_drive[j] += dv;
          dv_next[j] = dv;
        }
      }
      g.t_hat = bits::temporal_grad_scaled(
                    lc.train, {p.v1.data(), std::size_t(lc.T)}, up) *
                bits::materialize_ste_mask(p.bits.t_hat, p.bits.t_bound);

      std::vector<float> g_drive_f(n);
      for (std::size_t j = 0; j < n; ++j) g_drive_f[j] = float(g_drive[j]);
      g_pre = ls.batch_norm ? batch_norm_backward(ls, lc, g_drive_f, batch)
                            : g_drive_f;
    }

    // Through the linear map to the quantized weights and the input frame.
    std::vector<float> g_wq(p.w.size());
    std::vector<float> g_in(lc.input.size());
    if (ls.kind == LayerSpec::Kind::conv2d) {
      kernels::conv2d_grad_weights(lc.input, g_pre, g_wq, ls.conv, batch);
      if (li > 0) kernels::conv2d_grad_input(g_pre, lc.wq_deq, g_in, ls.conv, batch);
    } else {
      kernels::dense_grad_weights(lc.input, g_pre, g_wq, ls.in_dim, ls.out_dim,
                                  batch);
      if (li > 0)
        kernels::dense_grad_input(g_pre, lc.wq_deq, g_in, ls.in_dim, ls.out_dim,
                                  batch);
    }

    g.w = quant::weight_grad_values(p.w, p.s_q, lc.b_w, g_wq);
    g.s_q = quant::weight_grad_step(p.w, p.s_q, lc.b_w, g_wq);
    g.b_w_hat = quant::weight_grad_bits(p.w, p.s_q, lc.b_w, g_wq) *
                bits::materialize_ste_mask(p.bits.b_w_hat, p.bits.b_w_bound);

    up = std::move(g_in);
  }
  return grads;
}

double add_regulating_gradients(const Model& m,
                                const bits::RegulatingTargets& targets,
                                std::vector<LayerGrads>& grads) {
  if (grads.size() != m.spec.layers.size())
    throw std::invalid_argument("add_regulating_gradients: gradient count "
                                "does not match the layer count");
  const auto summary = bit_summary(m);
  const auto avg = bits::average_bits(summary);
  const auto rl = bits::regulating_loss(avg, targets);

  double n_w_total = 0.0, n_f_total = 0.0, n_slots_total = 0.0;
  for (const bits::LayerBitSummary& s : summary) {
    n_w_total += double(s.n_w);
    n_f_total += double(s.n_f);
    n_slots_total += double(s.n_f) * double(s.T);
  }
  for (std::size_t l = 0; l < summary.size(); ++l) {
    const LayerParams& p = m.params[l];
    const bits::LayerBitSummary& s = summary[l];
    grads[l].b_w_hat += rl.d_b_w_bar * (double(s.n_w) / n_w_total) *
                        bits::materialize_ste_mask(p.bits.b_w_hat, p.bits.b_w_bound);
    if (s.n_f == 0) continue;
    if (grads[l].b_s_hat.size() < p.bits.b_s_hat.size())
      grads[l].b_s_hat.resize(p.bits.b_s_hat.size(), 0.0);
    for (int t = 0; t < s.T; ++t)
      grads[l].b_s_hat[std::size_t(t)] +=
          rl.d_b_s_bar * (double(s.n_f) / n_slots_total) *
          bits::materialize_ste_mask(p.bits.b_s_hat[std::size_t(t)],
                                     p.bits.b_s_bound);
    grads[l].t_hat += rl.d_t_bar * (double(s.n_f) / n_f_total) *
                      bits::materialize_ste_mask(p.bits.t_hat, p.bits.t_bound);
  }
  return rl.value;
}

// ===== Bookkeeping =====

std::vector<bits::LayerBitSummary> bit_summary(const Model& m) {
  std::vector<bits::LayerBitSummary> out;
  for (std::size_t l = 0; l < m.spec.layers.size(); ++l) {
    const LayerSpec& ls = m.spec.layers[l];
    const LayerParams& p = m.params[l];
    bits::LayerBitSummary s;
    s.n_w = ls.weight_count();
    s.b_w = bits::materialize(p.bits.b_w_hat, p.bits.b_w_bound);
    if (ls.spiking) {
      s.n_f = ls.out_features();
      s.T = bits::materialize(p.bits.t_hat, p.bits.t_bound);
      for (int t = 0; t < s.T; ++t)
        s.b_s.push_back(
            bits::materialize(p.bits.b_s_hat[std::size_t(t)], p.bits.b_s_bound));
    }
    out.push_back(std::move(s));
  }
  return out;
}

void init_steps(Model& m, std::span<const float> images, std::size_t batch) {
  for (std::size_t l = 0; l < m.spec.layers.size(); ++l) {
    LayerParams& p = m.params[l];
    const int b_w = bits::materialize(p.bits.b_w_hat, p.bits.b_w_bound);
    const auto range = quant::quant_range(b_w, true);
    double mean_abs = 0.0;
    for (float w : p.w) mean_abs += std::abs(double(w));
    mean_abs /= double(p.w.size());
    if (mean_abs > 0.0)
      p.s_q = 2.0 * mean_abs / std::sqrt(double(range.q_max));
  }
  const ForwardCache fc = forward(m, images, batch, true);
  for (std::size_t l = 0; l < m.spec.layers.size(); ++l) {
    const LayerSpec& ls = m.spec.layers[l];
    if (!ls.spiking) continue;
    LayerParams& p = m.params[l];
    const LayerCache& lc = fc.layers[l];
    const std::size_t n = batch * ls.out_features();
    for (int t = 0; t < lc.T; ++t) {
      const auto range =
          quant::quant_range(lc.bits_s[std::size_t(t)], ls.bidirectional);
      const float* v_t = lc.v.data() + std::size_t(t) * n;
      double mean_abs = 0.0;
      for (std::size_t j = 0; j < n; ++j) mean_abs += std::abs(double(v_t[j]));
      mean_abs /= double(n);
      const double v1 = 2.0 * mean_abs / std::sqrt(double(range.q_max));
      if (v1 > 0.0 && std::isfinite(v1)) p.v1[std::size_t(t)] = v1;
    }
  }
}

}  // namespace bitsnn::model
