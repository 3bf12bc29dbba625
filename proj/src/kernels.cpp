#include "bitsnn/kernels.hpp"

#include <stdexcept>

namespace bitsnn::kernels {

namespace {

void check_conv(std::span<const float> in, std::span<const float> w,
                std::span<const float> out, const Conv2dShape& s,
                std::size_t batch, const char* who) {
  if (s.in_h + 2 * s.pad < s.k_h || s.in_w + 2 * s.pad < s.k_w ||
      s.stride == 0)
    throw std::invalid_argument(std::string(who) + ": kernel does not fit");
  if (in.size() != batch * s.in_elems() || w.size() != s.weight_elems() ||
      out.size() != batch * s.out_elems())
    throw std::invalid_argument(std::string(who) + ": span size mismatch");
}

// One output position: the kernel window folded over the padded input.
double conv_cell(const float* in_img, const float* w, const Conv2dShape& s,
                 std::size_t oc, std::size_t oy, std::size_t ox) {
  double acc = 0.0;
  for (std::size_t ic = 0; ic < s.in_c; ++ic) {
    const float* plane = in_img + ic * s.in_h * s.in_w;
    const float* filt = w + (oc * s.in_c + ic) * s.k_h * s.k_w;
    for (std::size_t ky = 0; ky < s.k_h; ++ky) {
      const std::ptrdiff_t iy =
          std::ptrdiff_t(oy * s.stride + ky) - std::ptrdiff_t(s.pad);
      if (iy < 0 || iy >= std::ptrdiff_t(s.in_h)) continue;
      for (std::size_t kx = 0; kx < s.k_w; ++kx) {
        const std::ptrdiff_t ix =
            std::ptrdiff_t(ox * s.stride + kx) - std::ptrdiff_t(s.pad);
        if (ix < 0 || ix >= std::ptrdiff_t(s.in_w)) continue;
        acc += double(plane[std::size_t(iy) * s.in_w + std::size_t(ix)]) *
               double(filt[ky * s.k_w + kx]);
      }
    }
  }
  return acc;
}

// One input position of the gradient: every output cell whose window covers
// (ic, iy, ix), i.e. the transposed convolution.
double conv_cell_grad_in(const float* g_img, const float* w,
                         const Conv2dShape& s, std::size_t ic, std::size_t iy,
                         std::size_t ix) {
  const std::size_t oh = s.out_h(), ow = s.out_w();
  double acc = 0.0;
  for (std::size_t oc = 0; oc < s.out_c; ++oc) {
    const float* gplane = g_img + oc * oh * ow;
    const float* filt = w + (oc * s.in_c + ic) * s.k_h * s.k_w;
    for (std::size_t ky = 0; ky < s.k_h; ++ky) {
      const std::ptrdiff_t num_y =
          std::ptrdiff_t(iy + s.pad) - std::ptrdiff_t(ky);
      if (num_y < 0 || num_y % std::ptrdiff_t(s.stride) != 0) continue;
      const std::ptrdiff_t oy = num_y / std::ptrdiff_t(s.stride);
      if (oy >= std::ptrdiff_t(oh)) continue;
      for (std::size_t kx = 0; kx < s.k_w; ++kx) {
        const std::ptrdiff_t num_x =
            std::ptrdiff_t(ix + s.pad) - std::ptrdiff_t(kx);
        if (num_x < 0 || num_x % std::ptrdiff_t(s.stride) != 0) continue;
        const std::ptrdiff_t ox = num_x / std::ptrdiff_t(s.stride);
        if (ox >= std::ptrdiff_t(ow)) continue;
        acc += double(gplane[std::size_t(oy) * ow + std::size_t(ox)]) *
               double(filt[ky * s.k_w + kx]);
      }
    }
  }
  return acc;
}

// One weight position of the gradient, accumulated over the whole batch so
// each filter tap has a single writer.
double conv_cell_grad_w(std::span<const float> in, std::span<const float> g_out,
                        const Conv2dShape& s, std::size_t batch, std::size_t oc,
                        std::size_t ic, std::size_t ky, std::size_t kx) {
  const std::size_t oh = s.out_h(), ow = s.out_w();
  double acc = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const float* plane = in.data() + (b * s.in_c + ic) * s.in_h * s.in_w;
    const float* gplane = g_out.data() + (b * s.out_c + oc) * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const std::ptrdiff_t iy =
          std::ptrdiff_t(oy * s.stride + ky) - std::ptrdiff_t(s.pad);
      if (iy < 0 || iy >= std::ptrdiff_t(s.in_h)) continue;
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const std::ptrdiff_t ix =
            std::ptrdiff_t(ox * s.stride + kx) - std::ptrdiff_t(s.pad);
        if (ix < 0 || ix >= std::ptrdiff_t(s.in_w)) continue;
        acc += double(plane[std::size_t(iy) * s.in_w + std::size_t(ix)]) *
               double(gplane[oy * ow + ox]);
      }
    }
  }
  return acc;
}

}  // namespace

// ===== Convolution =====

void conv2d_forward_serial(std::span<const float> in, std::span<const float> w,
                           std::span<float> out, const Conv2dShape& s,
                           std::size_t batch) {
  check_conv(in, w, out, s, batch, "conv2d_forward");
  const std::size_t oh = s.out_h(), ow = s.out_w();
  for (std::size_t b = 0; b < batch; ++b) {
    const float* img = in.data() + b * s.in_elems();
    float* dst = out.data() + b * s.out_elems();
    for (std::size_t oc = 0; oc < s.out_c; ++oc)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox)
          dst[(oc * oh + oy) * ow + ox] =
              float(conv_cell(img, w.data(), s, oc, oy, ox));
  }
}

void conv2d_forward(std::span<const float> in, std::span<const float> w,
                    std::span<float> out, const Conv2dShape& s,
                    std::size_t batch) {
  check_conv(in, w, out, s, batch, "conv2d_forward");
  const std::size_t oh = s.out_h(), ow = s.out_w();
  const std::ptrdiff_t jobs = std::ptrdiff_t(batch * s.out_c);
#pragma omp parallel for
  for (std::ptrdiff_t job = 0; job < jobs; ++job) {
    const std::size_t b = std::size_t(job) / s.out_c;
    const std::size_t oc = std::size_t(job) % s.out_c;
    const float* img = in.data() + b * s.in_elems();
    float* dst = out.data() + b * s.out_elems() + oc * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox)
        dst[oy * ow + ox] = float(conv_cell(img, w.data(), s, oc, oy, ox));
  }
}

void conv2d_grad_input_serial(std::span<const float> g_out,
                              std::span<const float> w, std::span<float> g_in,
                              const Conv2dShape& s, std::size_t batch) {
  check_conv(g_in, w, g_out, s, batch, "conv2d_grad_input");
  for (std::size_t b = 0; b < batch; ++b) {
    const float* g_img = g_out.data() + b * s.out_elems();
    float* dst = g_in.data() + b * s.in_elems();
    for (std::size_t ic = 0; ic < s.in_c; ++ic)
      for (std::size_t iy = 0; iy < s.in_h; ++iy)
        for (std::size_t ix = 0; ix < s.in_w; ++ix)
          dst[(ic * s.in_h + iy) * s.in_w + ix] =
              float(conv_cell_grad_in(g_img, w.data(), s, ic, iy, ix));
  }
}

void conv2d_grad_input(std::span<const float> g_out, std::span<const float> w,
                       std::span<float> g_in, const Conv2dShape& s,
                       std::size_t batch) {
  check_conv(g_in, w, g_out, s, batch, "conv2d_grad_input");
  const std::ptrdiff_t jobs = std::ptrdiff_t(batch * s.in_c);
#pragma omp parallel for
  for (std::ptrdiff_t job = 0; job < jobs; ++job) {
    const std::size_t b = std::size_t(job) / s.in_c;
    const std::size_t ic = std::size_t(job) % s.in_c;
    const float* g_img = g_out.data() + b * s.out_elems();
    float* dst = g_in.data() + b * s.in_elems() + ic * s.in_h * s.in_w;
    for (std::size_t iy = 0; iy < s.in_h; ++iy)
      for (std::size_t ix = 0; ix < s.in_w; ++ix)
        dst[iy * s.in_w + ix] =
            float(conv_cell_grad_in(g_img, w.data(), s, ic, iy, ix));
  }
}

void conv2d_grad_weights_serial(std::span<const float> in,
                                std::span<const float> g_out,
                                std::span<float> g_w, const Conv2dShape& s,
                                std::size_t batch) {
  check_conv(in, g_w, g_out, s, batch, "conv2d_grad_weights");
  for (std::size_t oc = 0; oc < s.out_c; ++oc)
    for (std::size_t ic = 0; ic < s.in_c; ++ic)
      for (std::size_t ky = 0; ky < s.k_h; ++ky)
        for (std::size_t kx = 0; kx < s.k_w; ++kx)
          g_w[((oc * s.in_c + ic) * s.k_h + ky) * s.k_w + kx] =
              float(conv_cell_grad_w(in, g_out, s, batch, oc, ic, ky, kx));
}

void conv2d_grad_weights(std::span<const float> in, std::span<const float> g_out,
                         std::span<float> g_w, const Conv2dShape& s,
                         std::size_t batch) {
  check_conv(in, g_w, g_out, s, batch, "conv2d_grad_weights");
  const std::ptrdiff_t jobs = std::ptrdiff_t(s.out_c * s.in_c);
#pragma omp parallel for
  for (std::ptrdiff_t job = 0; job < jobs; ++job) {
    const std::size_t oc = std::size_t(job) / s.in_c;
    const std::size_t ic = std::size_t(job) % s.in_c;
    for (std::size_t ky = 0; ky < s.k_h; ++ky)
      for (std::size_t kx = 0; kx < s.k_w; ++kx)
        g_w[((oc * s.in_c + ic) * s.k_h + ky) * s.k_w + kx] =
            float(conv_cell_grad_w(in, g_out, s, batch, oc, ic, ky, kx));
  }
}

// ===== Dense =====

namespace {

void check_dense(std::size_t in_size, std::size_t w_size, std::size_t out_size,
                 std::size_t bias_size, std::size_t in_dim, std::size_t out_dim,
                 std::size_t batch, const char* who) {
  if (in_size != batch * in_dim || w_size != out_dim * in_dim ||
      out_size != batch * out_dim || (bias_size != 0 && bias_size != out_dim))
    throw std::invalid_argument(std::string(who) + ": span size mismatch");
}

}  // namespace

void dense_forward_serial(std::span<const float> in, std::span<const float> w,
                          std::span<const float> bias, std::span<float> out,
                          std::size_t in_dim, std::size_t out_dim,
                          std::size_t batch) {
  check_dense(in.size(), w.size(), out.size(), bias.size(), in_dim, out_dim,
              batch, "dense_forward");
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t o = 0; o < out_dim; ++o) {
      double acc = bias.empty() ? 0.0 : double(bias[o]);
      for (std::size_t i = 0; i < in_dim; ++i)
        acc += double(in[b * in_dim + i]) * double(w[o * in_dim + i]);
      out[b * out_dim + o] = float(acc);
    }
}

void dense_forward(std::span<const float> in, std::span<const float> w,
                   std::span<const float> bias, std::span<float> out,
                   std::size_t in_dim, std::size_t out_dim, std::size_t batch) {
  check_dense(in.size(), w.size(), out.size(), bias.size(), in_dim, out_dim,
              batch, "dense_forward");
  const std::ptrdiff_t jobs = std::ptrdiff_t(batch * out_dim);
#pragma omp parallel for
  for (std::ptrdiff_t job = 0; job < jobs; ++job) {
    const std::size_t b = std::size_t(job) / out_dim;
    const std::size_t o = std::size_t(job) % out_dim;
    double acc = bias.empty() ? 0.0 : double(bias[o]);
    for (std::size_t i = 0; i < in_dim; ++i)
      acc += double(in[b * in_dim + i]) * double(w[o * in_dim + i]);
    out[b * out_dim + o] = float(acc);
  }
}

void dense_grad_input(std::span<const float> g_out, std::span<const float> w,
                      std::span<float> g_in, std::size_t in_dim,
                      std::size_t out_dim, std::size_t batch) {
  check_dense(g_in.size(), w.size(), g_out.size(), 0, in_dim, out_dim, batch,
              "dense_grad_input");
  const std::ptrdiff_t jobs = std::ptrdiff_t(batch * in_dim);
#pragma omp parallel for
  for (std::ptrdiff_t job = 0; job < jobs; ++job) {
    const std::size_t b = std::size_t(job) / in_dim;
    const std::size_t i = std::size_t(job) % in_dim;
    double acc = 0.0;
    for (std::size_t o = 0; o < out_dim; ++o)
      acc += double(g_out[b * out_dim + o]) * double(w[o * in_dim + i]);
    g_in[b * in_dim + i] = float(acc);
  }
}

void dense_grad_weights(std::span<const float> in, std::span<const float> g_out,
                        std::span<float> g_w, std::size_t in_dim,
                        std::size_t out_dim, std::size_t batch) {
  check_dense(in.size(), g_w.size(), g_out.size(), 0, in_dim, out_dim, batch,
              "dense_grad_weights");
  const std::ptrdiff_t jobs = std::ptrdiff_t(out_dim * in_dim);
#pragma omp parallel for
  for (std::ptrdiff_t job = 0; job < jobs; ++job) {
    const std::size_t o = std::size_t(job) / in_dim;
    const std::size_t i = std::size_t(job) % in_dim;
    double acc = 0.0;
    for (std::size_t b = 0; b < batch; ++b)
      acc += double(in[b * in_dim + i]) * double(g_out[b * out_dim + o]);
    g_w[o * in_dim + i] = float(acc);
  }
}

void dense_grad_bias(std::span<const float> g_out, std::span<float> g_bias,
                     std::size_t out_dim, std::size_t batch) {
  if (g_out.size() != batch * out_dim || g_bias.size() != out_dim)
    throw std::invalid_argument("dense_grad_bias: span size mismatch");
  for (std::size_t o = 0; o < out_dim; ++o) {
    double acc = 0.0;
    for (std::size_t b = 0; b < batch; ++b)
      acc += double(g_out[b * out_dim + o]);
    g_bias[o] = float(acc);
  }
}

}  // namespace bitsnn::kernels
