// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace hrt {

/// Bidirectional token <-> id table. Tokens are raw byte strings.
class Vocabulary {
 public:
  /// Adds `token` with the number of source-text bytes it stands for.
  /// Returns the existing id for a duplicate.
  std::int32_t add(std::string token, std::int64_t byte_length);

  std::int32_t size() const { return static_cast<std::int32_t>(tokens_.size()); }
  const std::string& token(std::int32_t id) const;
  std::optional<std::int32_t> find(std::string_view token) const;
  /// Id of `token`, or the unknown id; throws DataError if neither exists.
  std::int32_t encode(std::string_view token) const;

  std::int32_t unk_id() const { return unk_id_; }
  void set_unk_id(std::int32_t id);
  /// Id used for padded positions; 0 when unset.
  std::int32_t pad_id() const { return pad_id_; }
  void set_pad_id(std::int32_t id);

  /// UTF-8 bytes of source text a token accounts for (0 for meta tokens).
  std::int64_t byte_length(std::int32_t id) const;

  /// One line per token: byte length, tab, escaped token; first line holds
  /// the unk and pad ids.
  std::string serialize() const;
  static Vocabulary deserialize(std::string_view text);

  /// Sidecar format for pre-tokenized corpora: one escaped token per line,
  /// in id order. An optional "<unk>" line becomes the unknown id.
  static Vocabulary read_token_list(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.bytes_ == b.bytes_ && a.unk_id_ == b.unk_id_ && a.pad_id_ == b.pad_id_;
  }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::int64_t> bytes_;
  std::unordered_map<std::string, std::int32_t> index_;
  std::int32_t unk_id_ = -1;
  std::int32_t pad_id_ = 0;
};

/// Escapes backslash, tab, newline, carriage return and other control
/// bytes as \\, \t, \n, \r, \xHH.
std::string escape_token(std::string_view token);
std::string unescape_token(std::string_view text);

}  // namespace hrt
