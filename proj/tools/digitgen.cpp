// Writes the synthetic 8x8 digit corpus as an MNIST-style IDX pair so the
// file-loading path can be exercised without downloading anything.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <stdexcept>
#include <string>

#include "CLI11.hpp"

#include "bitsnn/dataset.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Synthetic digit corpus generator"};
  std::size_t n = 640;
  std::uint64_t seed = 1;
  std::string out_dir = ".";
  std::string prefix = "digits";
  app.add_option("--n", n, "Sample count")->capture_default_str();
  app.add_option("--seed", seed, "Corpus seed")->capture_default_str();
  app.add_option("--out", out_dir, "Output directory")->capture_default_str();
  app.add_option("--prefix", prefix, "File name prefix")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  try {
    const bitsnn::dataset::Dataset data = bitsnn::dataset::make_digits(n, seed);
    std::filesystem::create_directories(out_dir);
    const std::string images =
        (std::filesystem::path(out_dir) / (prefix + "-images.idx3-ubyte")).string();
    const std::string labels =
        (std::filesystem::path(out_dir) / (prefix + "-labels.idx1-ubyte")).string();
    bitsnn::dataset::write_idx(data, images, labels);
    std::cout << "wrote " << images << " and " << labels << " (" << n
              << " samples)\n";
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
