#include "bitsnn/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "bitsnn/rng.hpp"

namespace bitsnn::dataset {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::string hex32(std::uint32_t v) {
  char buf[11];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

std::uint32_t read_be32(std::istream& in, const std::string& path,
                        std::size_t offset) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4)
    throw std::runtime_error("truncated IDX header in " + path +
                             ": expected 4 bytes at offset " +
                             std::to_string(offset) + ", got " +
                             std::to_string(in.gcount()));
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {
      (unsigned char)(v >> 24), (unsigned char)(v >> 16),
      (unsigned char)(v >> 8), (unsigned char)(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::vector<unsigned char> read_payload(std::istream& in,
                                        const std::string& path,
                                        std::size_t expected) {
  std::vector<unsigned char> bytes(expected);
  in.read(reinterpret_cast<char*>(bytes.data()),
          std::streamsize(expected));
  const std::size_t got = std::size_t(in.gcount());
  if (got != expected)
    throw std::runtime_error("truncated IDX payload in " + path +
                             ": expected " + std::to_string(expected) +
                             " bytes, got " + std::to_string(got));
  return bytes;
}

void check_label(int label, int num_classes, std::size_t index,
                 const std::string& path) {
  if (label < 0)
    throw std::runtime_error("negative label " + std::to_string(label) +
                             " at sample " + std::to_string(index) + " in " +
                             path);
  if (num_classes > 0 && label >= num_classes)
    throw std::runtime_error("label " + std::to_string(label) +
                             " out of range [0, " +
                             std::to_string(num_classes) + ") at sample " +
                             std::to_string(index) + " in " + path);
}

}  // namespace

void Dataset::reshape(std::size_t h, std::size_t w) {
  if (h * w != feature_dim())
    throw std::invalid_argument("reshape to " + std::to_string(h) + "x" +
                                std::to_string(w) + " does not match " +
                                std::to_string(feature_dim()) + " features");
  height = h;
  width = w;
}

// ===== IDX =====

Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path, int num_classes) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw std::runtime_error("cannot open " + images_path);
  const std::uint32_t magic = read_be32(img, images_path, 0);
  if (magic != kImageMagic)
    throw std::runtime_error("bad IDX magic " + hex32(magic) + " at byte 0 in " +
                             images_path + " (want " + hex32(kImageMagic) +
                             ")");
  const std::size_t n = read_be32(img, images_path, 4);
  const std::size_t rows = read_be32(img, images_path, 8);
  const std::size_t cols = read_be32(img, images_path, 12);
  const auto pixels = read_payload(img, images_path, n * rows * cols);

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw std::runtime_error("cannot open " + labels_path);
  const std::uint32_t lmagic = read_be32(lab, labels_path, 0);
  if (lmagic != kLabelMagic)
    throw std::runtime_error("bad IDX magic " + hex32(lmagic) +
                             " at byte 0 in " + labels_path + " (want " +
                             hex32(kLabelMagic) + ")");
  const std::size_t ln = read_be32(lab, labels_path, 4);
  if (ln != n)
    throw std::runtime_error("IDX pair disagrees: " + std::to_string(n) +
                             " images in " + images_path + " vs " +
                             std::to_string(ln) + " labels in " + labels_path);
  const auto raw_labels = read_payload(lab, labels_path, n);

  Dataset data;
  data.height = rows;
  data.width = cols;
  data.features.resize(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i)
    data.features[i] = float(pixels[i]) / 255.0f;
  data.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    data.labels[i] = int(raw_labels[i]);
    check_label(data.labels[i], num_classes, i, labels_path);
  }
  return data;
}

void write_idx(const Dataset& data, const std::string& images_path,
               const std::string& labels_path) {
  std::ofstream img(images_path, std::ios::binary);
  if (!img) throw std::runtime_error("cannot open " + images_path);
  write_be32(img, kImageMagic);
  write_be32(img, std::uint32_t(data.size()));
  write_be32(img, std::uint32_t(data.height));
  write_be32(img, std::uint32_t(data.width));
  for (float v : data.features) {
    const int byte = int(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
    img.put(char(byte));
  }
  if (!img) throw std::runtime_error("write failed: " + images_path);

  std::ofstream lab(labels_path, std::ios::binary);
  if (!lab) throw std::runtime_error("cannot open " + labels_path);
  write_be32(lab, kLabelMagic);
  write_be32(lab, std::uint32_t(data.size()));
  for (int l : data.labels) lab.put(char(l));
  if (!lab) throw std::runtime_error("write failed: " + labels_path);
}

// ===== CSV =====

Dataset load_csv(const std::string& path, int num_classes) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("empty CSV (missing header): " + path);

  auto split = [](const std::string& text) {
    std::vector<std::string> cells;
    std::stringstream ss(text);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!text.empty() && text.back() == ',') cells.push_back("");
    return cells;
  };

  const std::size_t n_fields = split(line).size();
  if (n_fields < 2)
    throw std::runtime_error("CSV header in " + path +
                             " needs feature columns and a label column");

  Dataset data;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const std::vector<std::string> cells = split(line);
    if (cells.size() != n_fields)
      throw std::runtime_error("CSV row " + std::to_string(row) + " in " +
                               path + " has " + std::to_string(cells.size()) +
                               " fields, expected " +
                               std::to_string(n_fields));

    for (std::size_t i = 0; i + 1 < cells.size(); ++i) {
      std::size_t pos = 0;
      double v;
      try {
        v = std::stod(cells[i], &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      while (pos < cells[i].size() && std::isspace((unsigned char)cells[i][pos]))
        ++pos;
      if (pos != cells[i].size() || !std::isfinite(v))
        throw std::runtime_error("CSV row " + std::to_string(row) + " in " +
                                 path + ": bad feature '" + cells[i] + "'");
      if (v < 0.0 || v > 1.0)
        throw std::runtime_error("CSV row " + std::to_string(row) + " in " +
                                 path + ": feature " + cells[i] +
                                 " outside [0, 1]");
      data.features.push_back(float(v));
    }

    const std::string& last = cells.back();
    std::size_t pos = 0;
    long label = -1;
    try {
      label = std::stol(last, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    while (pos < last.size() && std::isspace((unsigned char)last[pos])) ++pos;
    if (pos != last.size())
      throw std::runtime_error("CSV row " + std::to_string(row) + " in " +
                               path + ": bad label '" + last + "'");
    check_label(int(label), num_classes, data.labels.size(), path);
    data.labels.push_back(int(label));
  }
  data.height = 1;
  data.width = n_fields - 1;
  return data;
}

Dataset load_dataset(const std::string& path, Format format,
                     int num_classes) {
  if (format == Format::csv) return load_csv(path, num_classes);
  std::string labels_path = path;
  bool renamed = false;
  if (auto at = labels_path.find("images"); at != std::string::npos) {
    labels_path.replace(at, 6, "labels");
    renamed = true;
  }
  if (auto at = labels_path.find("idx3"); at != std::string::npos)
    labels_path.replace(at, 4, "idx1");
  if (!renamed)
    throw std::invalid_argument(
        "cannot derive an IDX labels path from " + path +
        " (expected 'images' in the filename); call load_idx directly");
  return load_idx(path, labels_path, num_classes);
}

// ===== Synthetic digits =====

namespace {

// 8x8 glyph bitmaps for the digits, one byte per row, bit x set meaning the
// pixel at column x is lit.
constexpr unsigned char kGlyphs[10][8] = {
    {0x3E, 0x63, 0x73, 0x7B, 0x6F, 0x67, 0x3E, 0x00},
    {0x0C, 0x0E, 0x0C, 0x0C, 0x0C, 0x0C, 0x3F, 0x00},
    {0x1E, 0x33, 0x30, 0x1C, 0x06, 0x33, 0x3F, 0x00},
    {0x1E, 0x33, 0x30, 0x1C, 0x30, 0x33, 0x1E, 0x00},
    {0x38, 0x3C, 0x36, 0x33, 0x7F, 0x30, 0x78, 0x00},
    {0x3F, 0x03, 0x1F, 0x30, 0x30, 0x33, 0x1E, 0x00},
    {0x1C, 0x06, 0x03, 0x1F, 0x33, 0x33, 0x1E, 0x00},
    {0x3F, 0x33, 0x30, 0x18, 0x0C, 0x0C, 0x0C, 0x00},
    {0x1E, 0x33, 0x33, 0x1E, 0x33, 0x33, 0x1E, 0x00},
    {0x1E, 0x33, 0x33, 0x3E, 0x30, 0x19, 0x0E, 0x00},
};

double unit(std::uint64_t& ctr) {
  return double(util::splitmix64(ctr++) >> 11) * 0x1.0p-53;
}

}  // namespace

Dataset make_digits(std::size_t n, std::uint64_t seed) {
  Dataset data;
  data.height = 8;
  data.width = 8;
  data.features.resize(n * 64);
  data.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = int(i % 10);
    data.labels[i] = label;
    std::uint64_t ctr = util::chunk_seed(seed, i);
    const int dx = int(util::splitmix64(ctr++) % 3) - 1;
    const int dy = int(util::splitmix64(ctr++) % 3) - 1;
    const double amp = 0.7 + 0.3 * unit(ctr);
    float* px = data.features.data() + i * 64;
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        const int sy = y - dy, sx = x - dx;
        const bool lit = sy >= 0 && sy < 8 && sx >= 0 && sx < 8 &&
                         (kGlyphs[label][sy] >> sx) & 1;
        double v = (lit ? amp : 0.0) + 0.12 * unit(ctr);
        v = std::clamp(v, 0.0, 1.0);
        // Snap to the byte grid so an IDX round trip is lossless.
        px[y * 8 + x] = float(std::lround(v * 255.0)) / 255.0f;
      }
  }
  return data;
}

}  // namespace bitsnn::dataset
