// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hrt/data/vocabulary.hpp"

namespace hrt {

enum class TokenLevel { Char, Byte, Word, Subword };

const char* to_string(TokenLevel level);
TokenLevel parse_token_level(std::string_view text);

struct Corpus {
  TokenLevel level = TokenLevel::Char;
  std::vector<std::int32_t> ids;
  std::shared_ptr<const Vocabulary> vocab;
  /// Source-text bytes covered by `ids`.
  std::int64_t utf8_bytes = 0;
  /// Bytes of the tokens that are never predicted (the first of each
  /// article, or of the whole text).
  std::int64_t leading_bytes = 0;
  /// Positions whose source bytes differ from the vocabulary's byte length
  /// (unknown tokens), sorted by position.
  std::vector<std::pair<std::size_t, std::int64_t>> byte_overrides;
  /// Offsets into `ids` where articles start; empty for one continuous text.
  std::vector<std::size_t> article_starts;

  std::size_t size() const { return ids.size(); }
  /// Source bytes of ids[first, last).
  std::int64_t bytes_between(std::size_t first, std::size_t last) const;
  /// Articles as id ranges (the whole corpus when there are none).
  std::vector<std::span<const std::int32_t>> articles() const;
  std::string decode(std::span<const std::int32_t> ids) const;
};

struct CorpusSplits {
  Corpus train, valid, test;
};

std::string read_file(const std::filesystem::path& path);

/// Splits `raw` into UTF-8 characters (an invalid byte is its own
/// character). Train/valid/test are contiguous byte ranges in the given
/// proportions, cut points moved forward to character boundaries. The
/// vocabulary is "<unk>" (id 0) followed by the distinct train characters
/// sorted by byte value, unless `vocab` is given.
CorpusSplits load_char_corpus(std::string_view raw, std::array<double, 3> split = {0.90, 0.05, 0.05},
                              std::shared_ptr<const Vocabulary> vocab = nullptr);

/// Byte-level vocabulary: ids 0-255 are byte values, then <pad> 256,
/// <unk> 257, <bos> 258, <eos> 259 and four reserved ids (264 total).
std::shared_ptr<const Vocabulary> byte_vocabulary();
Corpus byte_tokenize(std::string_view raw);
std::string byte_detokenize(std::span<const std::int32_t> ids);
CorpusSplits load_byte_corpus(std::string_view raw, std::array<double, 3> split = {0.90, 0.05, 0.05});

/// Whitespace-tokenized text; each non-blank line ends with "<eos>" and
/// counts (token bytes + 1) per token towards utf8_bytes. A line equal
/// to `marker` (after trimming) starts a new article; marker lines carry no
/// tokens and empty articles are dropped. Tokens missing from `vocab` map to
/// "<unk>"; with no vocab, one is built from this text.
Corpus load_word_corpus(std::string_view text, std::string_view marker,
                        std::shared_ptr<const Vocabulary> vocab = nullptr);
/// Builds the vocabulary from the train text ("<pad>", "<unk>", "<eos>" first,
/// then train tokens in first-occurrence order).
CorpusSplits load_word_splits(std::string_view train, std::string_view valid, std::string_view test,
                              std::string_view marker);

/// Little-endian u32 ids plus a token-list sidecar.
Corpus load_pretokenized(const std::filesystem::path& ids_path, std::shared_ptr<const Vocabulary> vocab);

}  // namespace hrt
