// Copyright 2026 The FHDR Authors
// SPDX-License-Identifier: Apache-2.0

#include "fhdr/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <limits>

namespace fhdr {

namespace {

constexpr char kMagic[8] = {'F', 'H', 'D', 'R', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kMaxNameLength = 4096;
constexpr std::uint8_t kMaxRank = 8;

std::size_t dtype_size(DType t) { return t == DType::f32 ? 4 : 8; }

const char* dtype_name(DType t) {
  switch (t) {
    case DType::f32: return "f32";
    case DType::f64: return "f64";
    case DType::i64: return "i64";
  }
  return "?";
}

template <typename U>
void put_le(Bytes& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(value) >> (8 * i)));
  }
}

template <typename U>
U get_le(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return static_cast<U>(v);
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  const std::uint8_t* take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw ParseError(std::string("checkpoint: truncated ") + what, pos_);
    }
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  template <typename U>
  U read(const char* what) {
    return get_le<U>(take(sizeof(U), what));
  }
  [[nodiscard]] std::size_t pos() const { return pos_; }
  [[nodiscard]] std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

template <typename T>
std::vector<std::uint8_t> raw_of(std::span<const T> values) {
  Bytes out;
  out.reserve(values.size() * sizeof(T));
  for (T v : values) {
    if constexpr (sizeof(T) == 4) {
      put_le(out, std::bit_cast<std::uint32_t>(v));
    } else {
      put_le(out, std::bit_cast<std::uint64_t>(v));
    }
  }
  return out;
}

double element_as_double(const TensorRecord& r, std::size_t i) {
  const std::uint8_t* p = r.raw.data() + i * dtype_size(r.dtype);
  switch (r.dtype) {
    case DType::f32: return std::bit_cast<float>(get_le<std::uint32_t>(p));
    case DType::f64: return std::bit_cast<double>(get_le<std::uint64_t>(p));
    case DType::i64: return static_cast<double>(std::bit_cast<std::int64_t>(get_le<std::uint64_t>(p)));
  }
  return 0.0;
}

}  // namespace

UnsupportedVersionError::UnsupportedVersionError(std::uint32_t version, std::size_t offset)
    : FormatError("checkpoint: unsupported format version " + std::to_string(version) +
                      " (this build reads version " + std::to_string(kCheckpointVersion) + ")",
                  offset),
      version_(version) {}

ConfigMismatchError::ConfigMismatchError(const ModelConfig& e, const ModelConfig& f)
    : std::runtime_error("checkpoint: model config mismatch, expected {" + e.str() +
                         "} but found {" + f.str() + "}"),
      expected(e),
      found(f) {}

std::size_t TensorRecord::element_count() const {
  std::size_t n = 1;
  for (auto e : extents) n *= static_cast<std::size_t>(e);
  return n;
}

template <typename T>
TensorRecord TensorRecord::from_tensor(std::string name, const Tensor<T>& tensor) {
  const Shape s = tensor.shape();
  TensorRecord r;
  r.name = std::move(name);
  r.dtype = sizeof(T) == 4 ? DType::f32 : DType::f64;
  r.extents = {s.n, s.c, s.h, s.w};
  r.raw = raw_of<T>(tensor.data());
  return r;
}

TensorRecord TensorRecord::from_f64(std::string name, std::span<const double> values) {
  TensorRecord r;
  r.name = std::move(name);
  r.dtype = DType::f64;
  r.extents = {static_cast<std::int64_t>(values.size())};
  r.raw = raw_of<double>(values);
  return r;
}

TensorRecord TensorRecord::from_i64(std::string name, std::span<const std::int64_t> values) {
  TensorRecord r;
  r.name = std::move(name);
  r.dtype = DType::i64;
  r.extents = {static_cast<std::int64_t>(values.size())};
  for (auto v : values) put_le(r.raw, static_cast<std::uint64_t>(v));
  return r;
}

template <typename T>
Tensor<T> TensorRecord::to_tensor() const {
  if (extents.size() != 4 || dtype == DType::i64) {
    throw ContractError("checkpoint: record " + name + " is not a rank-4 float tensor");
  }
  Shape s{static_cast<int>(extents[0]), static_cast<int>(extents[1]),
          static_cast<int>(extents[2]), static_cast<int>(extents[3])};
  std::vector<T> values(element_count());
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = static_cast<T>(element_as_double(*this, i));
  }
  return Tensor<T>(s, std::move(values));
}

std::vector<double> TensorRecord::to_f64() const {
  if (dtype == DType::i64) throw ContractError("checkpoint: record " + name + " is not floating");
  std::vector<double> out(element_count());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = element_as_double(*this, i);
  return out;
}

std::vector<std::int64_t> TensorRecord::to_i64() const {
  if (dtype != DType::i64) throw ContractError("checkpoint: record " + name + " is " + dtype_name(dtype) + ", expected i64");
  std::vector<std::int64_t> out(element_count());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::bit_cast<std::int64_t>(get_le<std::uint64_t>(raw.data() + i * 8));
  }
  return out;
}

const TensorRecord* CheckpointFile::find(std::string_view name) const {
  for (const auto& r : records) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

const TensorRecord& CheckpointFile::get(std::string_view name) const {
  const TensorRecord* r = find(name);
  if (r == nullptr) throw ContractError("checkpoint: missing record " + std::string(name));
  return *r;
}

Bytes encode_checkpoint(const CheckpointFile& file) {
  Bytes out(std::begin(kMagic), std::end(kMagic));
  put_le(out, file.version);
  const ModelConfig& c = file.config;
  for (int v : {c.base_channels, c.growth_rate, c.num_ddb, c.dilated_layers_per_ddb, c.iterations,
                c.dilation}) {
    put_le(out, static_cast<std::uint32_t>(v));
  }
  put_le(out, static_cast<std::uint32_t>(file.records.size()));
  for (const auto& r : file.records) {
    if (r.raw.size() != r.element_count() * dtype_size(r.dtype)) {
      throw ContractError("checkpoint: record " + r.name + " payload does not match its extents");
    }
    put_le(out, static_cast<std::uint32_t>(r.name.size()));
    out.insert(out.end(), r.name.begin(), r.name.end());
    out.push_back(static_cast<std::uint8_t>(r.dtype));
    out.push_back(static_cast<std::uint8_t>(r.extents.size()));
    for (auto e : r.extents) put_le(out, static_cast<std::uint64_t>(e));
    out.insert(out.end(), r.raw.begin(), r.raw.end());
  }
  return out;
}

CheckpointFile decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  if (std::memcmp(in.take(8, "magic"), kMagic, 8) != 0) {
    throw ParseError("checkpoint: bad magic, expected FHDRCKPT", 0);
  }
  CheckpointFile file;
  const std::size_t version_at = in.pos();
  file.version = in.read<std::uint32_t>("version");
  if (file.version != kCheckpointVersion) throw UnsupportedVersionError(file.version, version_at);

  ModelConfig& c = file.config;
  for (int* field : {&c.base_channels, &c.growth_rate, &c.num_ddb, &c.dilated_layers_per_ddb,
                     &c.iterations, &c.dilation}) {
    *field = static_cast<std::int32_t>(in.read<std::uint32_t>("model config"));
  }
  const std::size_t count_at = in.pos();
  const std::uint32_t count = in.read<std::uint32_t>("record count");
  // every record takes at least 6 bytes
  if (count > in.remaining() / 6) throw ParseError("checkpoint: record count exceeds file", count_at);

  for (std::uint32_t i = 0; i < count; ++i) {
    TensorRecord r;
    const std::size_t name_at = in.pos();
    const std::uint32_t name_len = in.read<std::uint32_t>("name length");
    if (name_len == 0 || name_len > kMaxNameLength) {
      throw ParseError("checkpoint: bad record name length " + std::to_string(name_len), name_at);
    }
    const std::uint8_t* name = in.take(name_len, "record name");
    r.name.assign(reinterpret_cast<const char*>(name), name_len);

    const std::size_t dtype_at = in.pos();
    const std::uint8_t tag = in.read<std::uint8_t>("dtype");
    if (tag < 1 || tag > 3) {
      throw ParseError("checkpoint: unknown dtype tag " + std::to_string(tag), dtype_at);
    }
    r.dtype = static_cast<DType>(tag);
    const std::size_t rank_at = in.pos();
    const std::uint8_t rank = in.read<std::uint8_t>("rank");
    if (rank > kMaxRank) throw ParseError("checkpoint: rank " + std::to_string(rank), rank_at);

    std::size_t elements = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      const std::size_t extent_at = in.pos();
      const auto e = static_cast<std::int64_t>(in.read<std::uint64_t>("extent"));
      if (e < 0 || (e > 0 && elements > std::numeric_limits<std::size_t>::max() / 8 /
                                             static_cast<std::size_t>(e))) {
        throw ParseError("checkpoint: bad extent in " + r.name, extent_at);
      }
      r.extents.push_back(e);
      elements *= static_cast<std::size_t>(e);
    }
    const std::size_t payload = elements * dtype_size(r.dtype);
    const std::uint8_t* data = in.take(payload, "tensor data");
    r.raw.assign(data, data + payload);
    file.records.push_back(std::move(r));
  }
  if (in.remaining() != 0) throw ParseError("checkpoint: trailing bytes", in.pos());
  return file;
}

CheckpointFile read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

void write_checkpoint(const std::filesystem::path& path, const CheckpointFile& file) {
  const Bytes bytes = encode_checkpoint(file);
  // write-then-rename keeps the previous checkpoint intact on failure
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  write_file(tmp, bytes);
  std::filesystem::rename(tmp, path);
}

void require_config(const CheckpointFile& file, const ModelConfig& expected) {
  if (!(file.config == expected)) throw ConfigMismatchError(expected, file.config);
}

template <typename T>
FhdrParams<T> params_from_checkpoint(const CheckpointFile& file) {
  file.config.validate();
  FhdrParams<T> params = FhdrParams<T>::init(file.config, 0);
  for (auto& [name, tensor] : params.named_parameters()) {
    const Tensor<T> stored = file.get("param/" + name).template to_tensor<T>();
    if (!(stored.shape() == tensor.shape())) {
      throw ContractError("checkpoint: " + name + " has shape " + stored.shape().str() +
                          ", model expects " + tensor.shape().str());
    }
    std::ranges::copy(stored.data(), tensor.mutable_data().begin());
  }
  return params;
}

template <typename T>
void append_params(CheckpointFile& file, const FhdrParams<T>& params) {
  for (const auto& [name, tensor] : params.named_parameters()) {
    file.records.push_back(TensorRecord::from_tensor("param/" + name, tensor));
  }
}

template TensorRecord TensorRecord::from_tensor(std::string, const Tensor<float>&);
template TensorRecord TensorRecord::from_tensor(std::string, const Tensor<double>&);
template Tensor<float> TensorRecord::to_tensor() const;
template Tensor<double> TensorRecord::to_tensor() const;
template FhdrParams<float> params_from_checkpoint(const CheckpointFile&);
template FhdrParams<double> params_from_checkpoint(const CheckpointFile&);
template void append_params(CheckpointFile&, const FhdrParams<float>&);
template void append_params(CheckpointFile&, const FhdrParams<double>&);

}  // namespace fhdr
