#pragma once
// Checkpoint persistence as a generic named-tensor store. A store is written
// as two files sharing a stem: <stem>.json, a human-readable manifest with
// the format version, arbitrary metadata, and the tensor directory, and
// <stem>.bin, the tensors packed back to back as little-endian float32 with
// a crc32 recorded in the manifest. Loading verifies version, byte count,
// and checksum before any tensor is handed out.

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace bitsnn::checkpoint {

inline constexpr int kFormatVersion = 1;

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<float> data;

  std::size_t elems() const {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
  }
};

struct TensorStore {
  // std::map so blob layout is canonical: tensors are packed in name order.
  std::map<std::string, Tensor> tensors;
  nlohmann::json meta;
};

// Throws std::invalid_argument when a tensor's data size disagrees with its
// shape, std::runtime_error on IO failure.
void save_store(const TensorStore& store, const std::string& stem);

// Throws std::runtime_error naming both version strings on a format-version
// mismatch, and distinct corruption errors for byte-count and checksum
// disagreement.
TensorStore load_store(const std::string& stem);

}  // namespace bitsnn::checkpoint
