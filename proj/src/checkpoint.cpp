#include "bitsnn/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <zlib.h>

namespace bitsnn::checkpoint {

namespace {

std::uint32_t to_le(float v) {
  std::uint32_t u = std::bit_cast<std::uint32_t>(v);
  if constexpr (std::endian::native == std::endian::big)
    u = ((u & 0xFF000000u) >> 24) | ((u & 0x00FF0000u) >> 8) |
        ((u & 0x0000FF00u) << 8) | ((u & 0x000000FFu) << 24);
  return u;
}

float from_le(std::uint32_t u) {
  if constexpr (std::endian::native == std::endian::big)
    u = ((u & 0xFF000000u) >> 24) | ((u & 0x00FF0000u) >> 8) |
        ((u & 0x0000FF00u) << 8) | ((u & 0x000000FFu) << 24);
  return std::bit_cast<float>(u);
}

std::uint32_t blob_crc(const std::vector<unsigned char>& bytes) {
  return std::uint32_t(
      ::crc32(::crc32(0L, Z_NULL, 0), bytes.data(), uInt(bytes.size())));
}

}  // namespace

void save_store(const TensorStore& store, const std::string& stem) {
  std::size_t total = 0;
  for (const auto& [name, t] : store.tensors) {
    if (t.data.size() != t.elems())
      throw std::invalid_argument("tensor '" + name + "' holds " +
                                  std::to_string(t.data.size()) +
                                  " floats but its shape needs " +
                                  std::to_string(t.elems()));
    total += t.data.size();
  }

  std::vector<unsigned char> blob(total * 4);
  nlohmann::json dir = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : store.tensors) {
    dir.push_back({{"name", name},
                   {"shape", t.shape},
                   {"offset", offset},
                   {"count", t.data.size()}});
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      const std::uint32_t u = to_le(t.data[i]);
      std::memcpy(blob.data() + (offset + i) * 4, &u, 4);
    }
    offset += t.data.size();
  }

  nlohmann::json manifest = {{"format_version", kFormatVersion},
                             {"meta", store.meta},
                             {"tensors", dir},
                             {"blob_bytes", blob.size()},
                             {"blob_crc32", blob_crc(blob)}};

  std::ofstream bin(stem + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open " + stem + ".bin");
  bin.write(reinterpret_cast<const char*>(blob.data()),
            std::streamsize(blob.size()));
  if (!bin) throw std::runtime_error("write failed: " + stem + ".bin");
  bin.close();

  std::ofstream man(stem + ".json");
  if (!man) throw std::runtime_error("cannot open " + stem + ".json");
  man << manifest.dump(2) << "\n";
  if (!man) throw std::runtime_error("write failed: " + stem + ".json");
}

TensorStore load_store(const std::string& stem) {
  std::ifstream man(stem + ".json");
  if (!man) throw std::runtime_error("cannot open " + stem + ".json");
  nlohmann::json manifest;
  try {
    man >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("unparsable checkpoint manifest " + stem +
                             ".json: " + e.what());
  }

  const int version = manifest.at("format_version").get<int>();
  if (version > kFormatVersion)
    throw std::runtime_error(
        "checkpoint format version " + std::to_string(version) +
        " is newer than supported version " + std::to_string(kFormatVersion) +
        "; upgrade this build to read " + stem);
  if (version != kFormatVersion)
    throw std::runtime_error("checkpoint format version " +
                             std::to_string(version) +
                             " does not match supported version " +
                             std::to_string(kFormatVersion) + " in " + stem);

  std::ifstream bin(stem + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open " + stem + ".bin");
  std::vector<unsigned char> blob(
      (std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

  const std::size_t expect_bytes = manifest.at("blob_bytes").get<std::size_t>();
  if (blob.size() != expect_bytes)
    throw std::runtime_error("corrupt checkpoint blob " + stem +
                             ".bin: expected " + std::to_string(expect_bytes) +
                             " bytes, got " + std::to_string(blob.size()));
  const std::uint32_t expect_crc =
      manifest.at("blob_crc32").get<std::uint32_t>();
  const std::uint32_t got_crc = blob_crc(blob);
  if (got_crc != expect_crc)
    throw std::runtime_error(
        "checksum mismatch in " + stem + ".bin: manifest says " +
        std::to_string(expect_crc) + ", blob hashes to " +
        std::to_string(got_crc));

  TensorStore store;
  store.meta = manifest.value("meta", nlohmann::json::object());
  for (const auto& entry : manifest.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    Tensor t;
    t.shape = entry.at("shape").get<std::vector<std::size_t>>();
    const std::size_t offset = entry.at("offset").get<std::size_t>();
    const std::size_t count = entry.at("count").get<std::size_t>();
    if (count != t.elems() || (offset + count) * 4 > blob.size())
      throw std::runtime_error("corrupt tensor directory entry '" + name +
                               "' in " + stem + ".json");
    t.data.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      std::uint32_t u;
      std::memcpy(&u, blob.data() + (offset + i) * 4, 4);
      t.data[i] = from_le(u);
    }
    store.tensors.emplace(name, std::move(t));
  }
  return store;
}

}  // namespace bitsnn::checkpoint
