// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "hrt/model/language_model.hpp"
#include "hrt/tensor.hpp"

namespace hrt {

enum class DType : std::uint8_t { F32 = 1, F64 = 2, I64 = 3 };

struct TensorRecord {
  DType dtype = DType::F32;
  std::vector<std::int64_t> shape;
  std::string bytes;  // little-endian payload

  friend bool operator==(const TensorRecord&, const TensorRecord&) = default;
};

/// Self-describing snapshot: config echo, string metadata and named tensors.
/// Layout: magic "HRTCKPT\0", u32 version, config echo, metadata map, tensor
/// map (both key-sorted), FNV-1a 64 checksum of everything before it.
/// Identical contents serialize to identical bytes.
class Checkpoint {
 public:
  static constexpr std::uint32_t kVersion = 1;

  std::string config_echo;
  std::map<std::string, std::string> meta;
  std::map<std::string, TensorRecord> tensors;

  template <typename T>
  void put_matrix(const std::string& name, const Matrix<T>& m);
  template <typename T>
  Matrix<T> get_matrix(const std::string& name) const;

  void put_ints(const std::string& name, const std::vector<std::int64_t>& values);
  std::vector<std::int64_t> get_ints(const std::string& name) const;

  bool has(const std::string& name) const { return tensors.count(name) != 0; }
  const std::string& get_meta(const std::string& key) const;

  std::string serialize() const;
  static Checkpoint deserialize(std::string_view bytes);

  /// Writes to a temporary sibling, then renames over `path`.
  void save(const std::filesystem::path& path) const;
  /// Throws CheckpointError for missing, truncated or corrupt files.
  static Checkpoint load(const std::filesystem::path& path);
};

/// Stores every parameter under "param/<name>" plus the architecture, model
/// config and seed in the metadata.
template <typename T>
void export_model(LanguageModel<T>& model, Checkpoint& ckpt);

/// Rebuilds the model recorded in `ckpt` and loads its parameters.
template <typename T>
LanguageModel<T> import_model(const Checkpoint& ckpt);

/// Copies parameters into an existing model; names and shapes must match.
template <typename T>
void load_parameters(LanguageModel<T>& model, const Checkpoint& ckpt);

template <typename T>
void export_state(const ModelState<T>& state, const std::string& prefix, Checkpoint& ckpt);
template <typename T>
ModelState<T> import_state(const LanguageModel<T>& model, const std::string& prefix, const Checkpoint& ckpt);

}  // namespace hrt
