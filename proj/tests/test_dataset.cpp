#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <doctest.h>

#include "bitsnn/dataset.hpp"

using namespace bitsnn::dataset;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  const fs::path dir = fs::temp_directory_path() / "bitsnn_test_dataset";
  fs::create_directories(dir);
  return dir;
}

void write_bytes(const fs::path& path, const std::vector<unsigned char>& b) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()), std::streamsize(b.size()));
}

// IDX bytes assembled by hand so the loader is checked against the format
// definition, not against write_idx.
std::vector<unsigned char> idx_images_2x2(std::uint32_t magic = 0x00000803) {
  return {(unsigned char)(magic >> 24), (unsigned char)(magic >> 16),
          (unsigned char)(magic >> 8),  (unsigned char)magic,
          0, 0, 0, 2,   // 2 items
          0, 0, 0, 2,   // 2 rows
          0, 0, 0, 2,   // 2 cols
          0, 255, 128, 64, 10, 20, 30, 40};
}

std::vector<unsigned char> idx_labels(const std::vector<unsigned char>& labels) {
  std::vector<unsigned char> b;
  b.reserve(8 + labels.size());
  for (unsigned char h : {0x00, 0x00, 0x08, 0x01, 0x00, 0x00, 0x00})
    b.push_back(h);
  b.push_back((unsigned char)labels.size());
  for (unsigned char l : labels) b.push_back(l);
  return b;
}

}  // namespace

// ===== IDX =====

TEST_CASE("load_idx reads hand-assembled images and labels") {
  const fs::path dir = temp_dir();
  write_bytes(dir / "img", idx_images_2x2());
  write_bytes(dir / "lab", idx_labels({3, 9}));
  const Dataset d = load_idx((dir / "img").string(), (dir / "lab").string());
  REQUIRE(d.size() == 2);
  CHECK(d.height == 2);
  CHECK(d.width == 2);
  CHECK(d.features[0] == doctest::Approx(0.0f));
  CHECK(d.features[1] == doctest::Approx(1.0f));
  CHECK(d.features[2] == doctest::Approx(128.0f / 255.0f));
  CHECK(d.labels[0] == 3);
  CHECK(d.labels[1] == 9);
  for (float v : d.features) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("load_idx rejects a bad magic with the offending value") {
  const fs::path dir = temp_dir();
  write_bytes(dir / "badmagic", idx_images_2x2(0x00000801));
  write_bytes(dir / "lab", idx_labels({0, 1}));
  CHECK_THROWS_WITH_AS(
      load_idx((dir / "badmagic").string(), (dir / "lab").string()),
      doctest::Contains("bad IDX magic 0x00000801"), std::runtime_error);
}

TEST_CASE("load_idx names expected vs actual bytes on truncation") {
  const fs::path dir = temp_dir();
  auto img = idx_images_2x2();
  img.resize(img.size() - 3);
  write_bytes(dir / "short", img);
  write_bytes(dir / "lab", idx_labels({0, 1}));
  CHECK_THROWS_WITH_AS(
      load_idx((dir / "short").string(), (dir / "lab").string()),
      doctest::Contains("expected 8 bytes, got 5"), std::runtime_error);
}

TEST_CASE("load_idx rejects image/label count disagreement") {
  const fs::path dir = temp_dir();
  write_bytes(dir / "img", idx_images_2x2());
  write_bytes(dir / "lab3", idx_labels({0, 1, 2}));
  CHECK_THROWS_AS(load_idx((dir / "img").string(), (dir / "lab3").string()),
                  std::runtime_error);
}

TEST_CASE("load_idx enforces the class range when given one") {
  const fs::path dir = temp_dir();
  write_bytes(dir / "img", idx_images_2x2());
  write_bytes(dir / "lab", idx_labels({3, 10}));
  CHECK_THROWS_WITH_AS(
      load_idx((dir / "img").string(), (dir / "lab").string(), 10),
      doctest::Contains("label 10 out of range [0, 10)"), std::runtime_error);
  CHECK_NOTHROW(load_idx((dir / "img").string(), (dir / "lab").string(), 11));
}

TEST_CASE("write_idx then load_idx round-trips the digit corpus exactly") {
  const fs::path dir = temp_dir();
  const Dataset made = make_digits(50, 7);
  write_idx(made, (dir / "d-images-idx3-ubyte").string(),
            (dir / "d-labels-idx1-ubyte").string());
  const Dataset back = load_idx((dir / "d-images-idx3-ubyte").string(),
                                (dir / "d-labels-idx1-ubyte").string());
  REQUIRE(back.size() == made.size());
  CHECK(back.height == 8);
  CHECK(back.width == 8);
  CHECK(back.labels == made.labels);
  REQUIRE(back.features.size() == made.features.size());
  for (std::size_t i = 0; i < made.features.size(); ++i)
    CHECK(back.features[i] == made.features[i]);
}

TEST_CASE("load_dataset derives the labels path from the MNIST naming") {
  const fs::path dir = temp_dir();
  const Dataset made = make_digits(20, 3);
  write_idx(made, (dir / "t-images-idx3-ubyte").string(),
            (dir / "t-labels-idx1-ubyte").string());
  const Dataset back =
      load_dataset((dir / "t-images-idx3-ubyte").string(), Format::idx);
  CHECK(back.size() == 20);
  CHECK(back.labels == made.labels);

  CHECK_THROWS_AS(load_dataset((dir / "noconvention").string(), Format::idx),
                  std::invalid_argument);
}

// ===== CSV =====

TEST_CASE("load_csv parses headered rows with the label last") {
  const fs::path dir = temp_dir();
  {
    std::ofstream out(dir / "ok.csv");
    out << "f0,f1,f2,label\n";
    out << "0.0,1.0,0.5,7\n";
    out << "0.25,0.0,1.0,0\n";
  }
  const Dataset d = load_csv((dir / "ok.csv").string());
  REQUIRE(d.size() == 2);
  CHECK(d.height == 1);
  CHECK(d.width == 3);
  CHECK(d.features[0] == doctest::Approx(0.0f));
  CHECK(d.features[1] == doctest::Approx(1.0f));
  CHECK(d.features[2] == doctest::Approx(0.5f));
  CHECK(d.labels[0] == 7);
  CHECK(d.labels[1] == 0);
}

TEST_CASE("load_csv rejects malformed rows with the row number") {
  const fs::path dir = temp_dir();
  auto write_csv = [&](const char* name, const char* body) {
    std::ofstream out(dir / name);
    out << "a,b,label\n" << body;
    return (dir / name).string();
  };
  CHECK_THROWS_WITH_AS(load_csv(write_csv("ragged.csv", "0.1,0.2,0.3,1\n")),
                       doctest::Contains("row 2"), std::runtime_error);
  {
    std::ofstream out(dir / "ragged2.csv");
    out << "a,b,label\n0.1,0.2,1\n0.1,1\n";
  }
  CHECK_THROWS_WITH_AS(load_csv((dir / "ragged2.csv").string()),
                       doctest::Contains("row 3"), std::runtime_error);
  CHECK_THROWS_WITH_AS(load_csv(write_csv("badf.csv", "0.1,oops,1\n")),
                       doctest::Contains("bad feature"), std::runtime_error);
  CHECK_THROWS_WITH_AS(load_csv(write_csv("range.csv", "0.1,1.5,1\n")),
                       doctest::Contains("outside [0, 1]"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(load_csv(write_csv("badl.csv", "0.1,0.2,x\n")),
                       doctest::Contains("bad label"), std::runtime_error);
  CHECK_THROWS_AS(load_csv(write_csv("negl.csv", "0.1,0.2,-1\n")),
                  std::runtime_error);
  {
    std::ofstream out(dir / "empty.csv");
  }
  CHECK_THROWS_WITH_AS(load_csv((dir / "empty.csv").string()),
                       doctest::Contains("missing header"),
                       std::runtime_error);
  CHECK_THROWS_AS(load_csv((dir / "does_not_exist.csv").string()),
                  std::runtime_error);
}

TEST_CASE("load_csv respects a class-count bound") {
  const fs::path dir = temp_dir();
  {
    std::ofstream out(dir / "cls.csv");
    out << "a,label\n0.5,9\n";
  }
  CHECK_NOTHROW(load_csv((dir / "cls.csv").string(), 10));
  CHECK_THROWS_AS(load_csv((dir / "cls.csv").string(), 9), std::runtime_error);
}

// ===== Synthetic digits =====

TEST_CASE("make_digits is deterministic in the seed and balanced") {
  const Dataset a = make_digits(40, 11);
  const Dataset b = make_digits(40, 11);
  const Dataset c = make_digits(40, 12);
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);
  CHECK(a.features != c.features);

  int counts[10] = {};
  for (int l : a.labels) {
    REQUIRE(l >= 0);
    REQUIRE(l < 10);
    ++counts[l];
  }
  for (int k = 0; k < 10; ++k) CHECK(counts[k] == 4);
  for (float v : a.features) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("make_digits draws genuinely different glyphs per class") {
  const Dataset d = make_digits(10, 5);
  // Any two classes must disagree on a substantial part of the image even
  // with jitter, otherwise the task would be unlearnable.
  for (int i = 0; i < 10; ++i)
    for (int j = i + 1; j < 10; ++j) {
      double diff = 0.0;
      for (int p = 0; p < 64; ++p)
        diff += std::abs(double(d.sample(i)[p]) - double(d.sample(j)[p]));
      CHECK(diff > 2.0);
    }
}

TEST_CASE("reshape validates the element count") {
  Dataset d = make_digits(3, 1);
  d.reshape(1, 64);
  CHECK(d.height == 1);
  CHECK(d.width == 64);
  d.reshape(8, 8);
  CHECK_THROWS_AS(d.reshape(4, 4), std::invalid_argument);
}
