#pragma once
// Dense and 2-D convolution kernels for the training path, each in two
// variants: a serial reference written as the plainest possible loop nest,
// and an OpenMP build parallelized over independent output slices so results
// stay bit-identical across thread counts. All accumulation is double and
// tensors are float32, NCHW for images, [out, in] row-major for matrices.

#include <cstddef>
#include <span>

namespace bitsnn::kernels {

struct Conv2dShape {
  std::size_t in_c = 1, in_h = 0, in_w = 0;
  std::size_t out_c = 1, k_h = 3, k_w = 3;
  std::size_t stride = 1, pad = 0;

  std::size_t out_h() const { return (in_h + 2 * pad - k_h) / stride + 1; }
  std::size_t out_w() const { return (in_w + 2 * pad - k_w) / stride + 1; }
  std::size_t in_elems() const { return in_c * in_h * in_w; }
  std::size_t out_elems() const { return out_c * out_h() * out_w(); }
  std::size_t weight_elems() const { return out_c * in_c * k_h * k_w; }
};

// ===== Convolution =====
// in:  [batch, in_c, in_h, in_w]
// w:   [out_c, in_c, k_h, k_w]
// out: [batch, out_c, out_h, out_w]
// Every function throws std::invalid_argument when a span size disagrees
// with the shape or the kernel does not fit the padded input.

void conv2d_forward(std::span<const float> in, std::span<const float> w,
                    std::span<float> out, const Conv2dShape& s,
                    std::size_t batch);
void conv2d_forward_serial(std::span<const float> in, std::span<const float> w,
                           std::span<float> out, const Conv2dShape& s,
                           std::size_t batch);

void conv2d_grad_input(std::span<const float> g_out, std::span<const float> w,
                       std::span<float> g_in, const Conv2dShape& s,
                       std::size_t batch);
void conv2d_grad_input_serial(std::span<const float> g_out,
                              std::span<const float> w, std::span<float> g_in,
                              const Conv2dShape& s, std::size_t batch);

void conv2d_grad_weights(std::span<const float> in, std::span<const float> g_out,
                         std::span<float> g_w, const Conv2dShape& s,
                         std::size_t batch);
void conv2d_grad_weights_serial(std::span<const float> in,
                                std::span<const float> g_out,
                                std::span<float> g_w, const Conv2dShape& s,
                                std::size_t batch);

// ===== Dense =====
// in: [batch, in_dim], w: [out_dim, in_dim], bias: [out_dim] or empty.

void dense_forward(std::span<const float> in, std::span<const float> w,
                   std::span<const float> bias, std::span<float> out,
                   std::size_t in_dim, std::size_t out_dim, std::size_t batch);
void dense_forward_serial(std::span<const float> in, std::span<const float> w,
                          std::span<const float> bias, std::span<float> out,
                          std::size_t in_dim, std::size_t out_dim,
                          std::size_t batch);

void dense_grad_input(std::span<const float> g_out, std::span<const float> w,
                      std::span<float> g_in, std::size_t in_dim,
                      std::size_t out_dim, std::size_t batch);
void dense_grad_weights(std::span<const float> in, std::span<const float> g_out,
                        std::span<float> g_w, std::size_t in_dim,
                        std::size_t out_dim, std::size_t batch);
void dense_grad_bias(std::span<const float> g_out, std::span<float> g_bias,
                     std::size_t out_dim, std::size_t batch);

}  // namespace bitsnn::kernels
