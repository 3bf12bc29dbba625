#pragma once
// Dataset ingestion and generation. Two on-disk formats are supported: IDX
// (big-endian magic and dims, raw ubyte pixels, the MNIST layout) and
// headered CSV with the label in the last column. Features are always
// delivered as float32 in [0, 1] and samples keep file order; shuffling is
// the trainer's job. A deterministic synthetic 8x8 digit corpus is included
// so the whole pipeline runs without external downloads.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace bitsnn::dataset {

struct Dataset {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> features;  // [n, height, width] row-major, in [0, 1]
  std::vector<int> labels;      // [n]

  std::size_t size() const { return labels.size(); }
  std::size_t feature_dim() const { return height * width; }
  const float* sample(std::size_t i) const {
    return features.data() + i * feature_dim();
  }

  // Reinterprets flat rows (CSV gives height 1) as images.
  void reshape(std::size_t h, std::size_t w);
};

enum class Format { idx, csv };

// ===== Loading =====
// IDX pixels are bytes scaled by 1/255. CSV features must already be in
// [0, 1] and the label column must hold a non-negative integer. When
// num_classes > 0, any label outside [0, num_classes) is a data error.
// Malformed headers and short payloads throw std::runtime_error naming the
// byte offset or the expected and actual byte counts.

Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 int num_classes = -1);
Dataset load_csv(const std::string& path, int num_classes = -1);

// Dispatcher used by the CLI. For Format::idx, `path` is the images file and
// the labels file is derived by replacing "images" with "labels" and "idx3"
// with "idx1" in the filename, the MNIST naming convention.
Dataset load_dataset(const std::string& path, Format format,
                     int num_classes = -1);

// ===== Writing =====
// Writes the MNIST IDX pair. Pixels are rounded to bytes, so values survive
// a round trip exactly when they are multiples of 1/255.
void write_idx(const Dataset& data, const std::string& images_path,
               const std::string& labels_path);

// ===== Synthetic digits =====
// n balanced samples of 8x8 glyphs for classes 0..9, each randomly shifted
// by up to one pixel, scaled in intensity, and speckled with noise. Fully
// determined by the seed.
Dataset make_digits(std::size_t n, std::uint64_t seed);

}  // namespace bitsnn::dataset
