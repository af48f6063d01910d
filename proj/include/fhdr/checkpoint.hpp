// Copyright 2026 The FHDR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Named-tensor container used for checkpoints and extractor weights.
//
// Layout, all integers little-endian:
//   "FHDRCKPT"  u32 version  6 x i32 model config  u32 record count
//   per record: u32 name length, UTF-8 name, u8 dtype, u8 rank,
//               rank x i64 extents, raw little-endian elements

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fhdr/image_io.hpp"
#include "fhdr/model.hpp"
#include "fhdr/tensor.hpp"

namespace fhdr {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class UnsupportedVersionError : public FormatError {
 public:
  UnsupportedVersionError(std::uint32_t version, std::size_t offset);
  [[nodiscard]] std::uint32_t version() const { return version_; }

 private:
  std::uint32_t version_;
};

class ConfigMismatchError : public std::runtime_error {
 public:
  ConfigMismatchError(const ModelConfig& expected, const ModelConfig& found);
  ModelConfig expected;
  ModelConfig found;
};

enum class DType : std::uint8_t { f32 = 1, f64 = 2, i64 = 3 };

struct TensorRecord {
  std::string name;
  DType dtype = DType::f32;
  std::vector<std::int64_t> extents;
  std::vector<std::uint8_t> raw;

  [[nodiscard]] std::size_t element_count() const;

  template <typename T>
  static TensorRecord from_tensor(std::string name, const Tensor<T>& tensor);
  static TensorRecord from_f64(std::string name, std::span<const double> values);
  static TensorRecord from_i64(std::string name, std::span<const std::int64_t> values);

  /// Rank-4 record as a tensor, converting f32 <-> f64 when needed.
  template <typename T>
  [[nodiscard]] Tensor<T> to_tensor() const;
  [[nodiscard]] std::vector<double> to_f64() const;
  [[nodiscard]] std::vector<std::int64_t> to_i64() const;
};

struct CheckpointFile {
  std::uint32_t version = kCheckpointVersion;
  ModelConfig config;
  std::vector<TensorRecord> records;

  [[nodiscard]] const TensorRecord* find(std::string_view name) const;
  /// Throws ContractError naming the missing record.
  [[nodiscard]] const TensorRecord& get(std::string_view name) const;
};

Bytes encode_checkpoint(const CheckpointFile& file);
/// ParseError with offset on truncation or bad fields; UnsupportedVersionError
/// for any version other than kCheckpointVersion.
CheckpointFile decode_checkpoint(std::span<const std::uint8_t> bytes);

CheckpointFile read_checkpoint(const std::filesystem::path& path);
void write_checkpoint(const std::filesystem::path& path, const CheckpointFile& file);

/// Copies "param/<name>" records into freshly initialized parameters.
template <typename T>
FhdrParams<T> params_from_checkpoint(const CheckpointFile& file);

template <typename T>
void append_params(CheckpointFile& file, const FhdrParams<T>& params);

/// Throws ConfigMismatchError when the stored config differs.
void require_config(const CheckpointFile& file, const ModelConfig& expected);

}  // namespace fhdr
