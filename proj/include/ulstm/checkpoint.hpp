#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ulstm/tensor.hpp"

namespace ulstm {

using Fingerprint = std::array<std::uint8_t, 32>;

Fingerprint sha256(const std::string& text);
std::string to_hex(const Fingerprint& fp);

enum class DType : std::uint8_t { f32 = 0, f64 = 1, u64 = 2 };

std::size_t dtype_size(DType t);

// One named array in a checkpoint container. The payload holds the raw
// little-endian bytes.
struct Record {
  std::string name;
  DType dtype = DType::f32;
  Shape dims;
  std::vector<std::uint8_t> payload;

  template <typename T>
  static Record from_tensor(std::string name, const Tensor<T>& t);
  static Record from_u64(std::string name, const std::vector<std::uint64_t>& values);

  // Converts f32 / f64 payloads to T; throws FormatError on u64.
  template <typename T>
  Tensor<T> to_tensor() const;
  std::vector<std::uint64_t> to_u64() const;
};

struct Container {
  std::uint32_t version = 1;
  Fingerprint fingerprint{};
  std::vector<Record> records;

  const Record* find(const std::string& name) const;
  const Record& at(const std::string& name) const;  // FormatError when absent
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Writes to a sibling temporary file first, then renames into place.
void write_container(const std::filesystem::path& path, const Container& c);
// Reads and validates the whole file before returning; FormatError on bad
// magic, unknown version, unknown dtype, or truncation.
Container read_container(const std::filesystem::path& path);

}  // namespace ulstm
