// SPDX-License-Identifier: Apache-2.0
#include "hrt/data/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "hrt/errors.hpp"

namespace hrt {

const char* to_string(TokenLevel level) {
  switch (level) {
    case TokenLevel::Char:
      return "char";
    case TokenLevel::Byte:
      return "byte";
    case TokenLevel::Word:
      return "word";
    case TokenLevel::Subword:
      return "subword";
  }
  return "?";
}

TokenLevel parse_token_level(std::string_view text) {
  if (text == "char") return TokenLevel::Char;
  if (text == "byte") return TokenLevel::Byte;
  if (text == "word") return TokenLevel::Word;
  if (text == "subword" || text == "pretokenized") return TokenLevel::Subword;
  throw ConfigError("unknown token level '" + std::string(text) + "' (char, byte, word, subword)", "data.level");
}

std::vector<std::span<const std::int32_t>> Corpus::articles() const {
  std::vector<std::span<const std::int32_t>> out;
  std::span<const std::int32_t> all(ids);
  if (article_starts.empty()) {
    if (!ids.empty()) out.push_back(all);
    return out;
  }
  for (std::size_t i = 0; i < article_starts.size(); ++i) {
    const std::size_t end = i + 1 < article_starts.size() ? article_starts[i + 1] : ids.size();
    out.push_back(all.subspan(article_starts[i], end - article_starts[i]));
  }
  return out;
}

std::int64_t Corpus::bytes_between(std::size_t first, std::size_t last) const {
  if (first > last || last > ids.size()) throw DataError("byte range outside corpus");
  if (!vocab) throw DataError("corpus has no vocabulary");
  std::int64_t n = 0;
  for (std::size_t i = first; i < last; ++i) n += vocab->byte_length(ids[i]);
  auto it = std::lower_bound(byte_overrides.begin(), byte_overrides.end(), std::make_pair(first, std::int64_t{-1}));
  for (; it != byte_overrides.end() && it->first < last; ++it) n += it->second - vocab->byte_length(ids[it->first]);
  return n;
}

std::string Corpus::decode(std::span<const std::int32_t> span) const {
  if (!vocab) throw DataError("corpus has no vocabulary");
  std::string out;
  const bool words = level == TokenLevel::Word;
  for (std::size_t i = 0; i < span.size(); ++i) {
    const std::int32_t id = span[i];
    if (level == TokenLevel::Char && id == vocab->unk_id()) {
      out += "\xEF\xBF\xBD";  // U+FFFD
      continue;
    }
    const std::string& tok = vocab->token(id);
    if (words) {
      if (tok == "<eos>") {
        out += '\n';
        continue;
      }
      if (!out.empty() && out.back() != '\n') out += ' ';
    }
    out += tok;
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw DataError("failed reading '" + path.string() + "'");
  return ss.str();
}

namespace {

/// Length of the UTF-8 sequence starting at `pos`, or 1 for an invalid byte.
std::size_t utf8_char_length(std::string_view s, std::size_t pos) {
  const auto c = static_cast<unsigned char>(s[pos]);
  std::size_t len = 1;
  if (c >= 0xC2 && c <= 0xDF) len = 2;
  else if (c >= 0xE0 && c <= 0xEF) len = 3;
  else if (c >= 0xF0 && c <= 0xF4) len = 4;
  else return 1;
  if (pos + len > s.size()) return 1;
  for (std::size_t i = 1; i < len; ++i) {
    if ((static_cast<unsigned char>(s[pos + i]) & 0xC0) != 0x80) return 1;
  }
  return len;
}

std::vector<std::string_view> split_chars(std::string_view s) {
  std::vector<std::string_view> out;
  out.reserve(s.size());
  for (std::size_t pos = 0; pos < s.size();) {
    const std::size_t len = utf8_char_length(s, pos);
    out.push_back(s.substr(pos, len));
    pos += len;
  }
  return out;
}

void check_split(const std::array<double, 3>& split) {
  double total = 0.0;
  for (double p : split) {
    if (!(p >= 0.0)) throw ConfigError("split proportions must be non-negative", "data.split");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split proportions must sum to 1", "data.split");
}

/// Byte offsets of the two cut points.
std::array<std::size_t, 2> cut_points(std::size_t n, const std::array<double, 3>& split) {
  check_split(split);
  const auto a = static_cast<std::size_t>(std::floor(static_cast<double>(n) * split[0] + 1e-9));
  const auto b = static_cast<std::size_t>(std::floor(static_cast<double>(n) * (split[0] + split[1]) + 1e-9));
  return {std::min(a, n), std::min(b, n)};
}

Corpus encode_chars(std::string_view text, const std::shared_ptr<const Vocabulary>& vocab) {
  Corpus c;
  c.level = TokenLevel::Char;
  c.vocab = vocab;
  c.utf8_bytes = static_cast<std::int64_t>(text.size());
  const auto chars = split_chars(text);
  c.ids.reserve(chars.size());
  for (auto ch : chars) {
    c.ids.push_back(vocab->encode(ch));
    if (c.ids.back() == vocab->unk_id()) {
      c.byte_overrides.emplace_back(c.ids.size() - 1, static_cast<std::int64_t>(ch.size()));
    }
  }
  if (!chars.empty()) c.leading_bytes = static_cast<std::int64_t>(chars.front().size());
  return c;
}

}  // namespace

CorpusSplits load_char_corpus(std::string_view raw, std::array<double, 3> split,
                              std::shared_ptr<const Vocabulary> vocab) {
  if (raw.empty()) throw DataError("character corpus is empty");
  auto [a, b] = cut_points(raw.size(), split);
  // move each cut forward to the next character start
  std::size_t pos = 0;
  auto to_boundary = [&](std::size_t cut) {
    while (pos < cut) pos += utf8_char_length(raw, pos);
    return pos;
  };
  a = to_boundary(a);
  b = std::max(a, to_boundary(b));
  const std::string_view train = raw.substr(0, a);
  const std::string_view valid = raw.substr(a, b - a);
  const std::string_view test = raw.substr(b);

  if (!vocab) {
    std::set<std::string_view> distinct;
    for (auto ch : split_chars(train)) distinct.insert(ch);
    auto built = std::make_shared<Vocabulary>();
    built->add("<unk>", 0);
    built->set_unk_id(0);
    for (auto ch : distinct) built->add(std::string(ch), static_cast<std::int64_t>(ch.size()));
    vocab = std::move(built);
  }

  return {encode_chars(train, vocab), encode_chars(valid, vocab), encode_chars(test, vocab)};
}

std::shared_ptr<const Vocabulary> byte_vocabulary() {
  static const std::shared_ptr<const Vocabulary> vocab = [] {
    auto v = std::make_shared<Vocabulary>();
    for (int b = 0; b < 256; ++b) v->add(std::string(1, static_cast<char>(b)), 1);
    for (const char* meta : {"<pad>", "<unk>", "<bos>", "<eos>", "<reserved0>", "<reserved1>", "<reserved2>",
                             "<reserved3>"}) {
      v->add(meta, 0);
    }
    v->set_pad_id(256);
    v->set_unk_id(257);
    return v;
  }();
  return vocab;
}

Corpus byte_tokenize(std::string_view raw) {
  Corpus c;
  c.level = TokenLevel::Byte;
  c.vocab = byte_vocabulary();
  c.ids.reserve(raw.size());
  for (unsigned char b : raw) c.ids.push_back(b);
  c.utf8_bytes = static_cast<std::int64_t>(raw.size());
  c.leading_bytes = raw.empty() ? 0 : 1;
  return c;
}

std::string byte_detokenize(std::span<const std::int32_t> ids) {
  std::string out;
  out.reserve(ids.size());
  for (auto id : ids) {
    if (id < 0 || id >= 264) throw DataError("byte token id " + std::to_string(id) + " outside vocabulary");
    if (id < 256) out += static_cast<char>(id);
  }
  return out;
}

CorpusSplits load_byte_corpus(std::string_view raw, std::array<double, 3> split) {
  if (raw.empty()) throw DataError("byte corpus is empty");
  const auto [a, b] = cut_points(raw.size(), split);
  return {byte_tokenize(raw.substr(0, a)), byte_tokenize(raw.substr(a, b - a)), byte_tokenize(raw.substr(b))};
}

namespace {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n\f\v";
  const auto first = s.find_first_not_of(ws);
  if (first == std::string_view::npos) return {};
  return s.substr(first, s.find_last_not_of(ws) - first + 1);
}

/// Articles of whitespace tokens, each line ending with "<eos>".
std::vector<std::vector<std::string_view>> word_articles(std::string_view text, std::string_view marker) {
  std::vector<std::vector<std::string_view>> articles(1);
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(start, end - start);
    start = end + 1;
    if (!marker.empty() && trim(line) == trim(marker)) {
      if (!articles.back().empty()) articles.emplace_back();
      continue;
    }
    bool any = false;
    std::size_t pos = 0;
    while (pos < line.size()) {
      while (pos < line.size() && std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
      std::size_t stop = pos;
      while (stop < line.size() && !std::isspace(static_cast<unsigned char>(line[stop]))) ++stop;
      if (stop > pos) {
        articles.back().push_back(line.substr(pos, stop - pos));
        any = true;
      }
      pos = stop;
    }
    if (any) articles.back().push_back("<eos>");
  }
  if (articles.back().empty()) articles.pop_back();
  return articles;
}

std::int64_t word_bytes(std::string_view token) {
  return token == "<eos>" ? 1 : static_cast<std::int64_t>(token.size()) + 1;
}

}  // namespace

Corpus load_word_corpus(std::string_view text, std::string_view marker, std::shared_ptr<const Vocabulary> vocab) {
  const auto articles = word_articles(text, marker);
  if (!vocab) {
    auto v = std::make_shared<Vocabulary>();
    v->add("<pad>", 0);
    v->set_unk_id(v->add("<unk>", 0));
    v->add("<eos>", 1);
    for (const auto& art : articles) {
      for (auto tok : art) v->add(std::string(tok), word_bytes(tok));
    }
    vocab = v;
  }
  Corpus c;
  c.level = TokenLevel::Word;
  c.vocab = vocab;
  for (const auto& art : articles) {
    c.article_starts.push_back(c.ids.size());
    for (auto tok : art) {
      c.ids.push_back(vocab->encode(tok));
      c.utf8_bytes += word_bytes(tok);
      if (vocab->byte_length(c.ids.back()) != word_bytes(tok)) {
        c.byte_overrides.emplace_back(c.ids.size() - 1, word_bytes(tok));
      }
    }
    c.leading_bytes += word_bytes(art.front());
  }
  return c;
}

CorpusSplits load_word_splits(std::string_view train, std::string_view valid, std::string_view test,
                              std::string_view marker) {
  CorpusSplits s;
  s.train = load_word_corpus(train, marker);
  if (s.train.ids.empty()) throw DataError("word training corpus is empty");
  s.valid = load_word_corpus(valid, marker, s.train.vocab);
  s.test = load_word_corpus(test, marker, s.train.vocab);
  return s;
}

Corpus load_pretokenized(const std::filesystem::path& ids_path, std::shared_ptr<const Vocabulary> vocab) {
  if (!vocab) throw DataError("pre-tokenized corpus needs a vocabulary");
  const std::string bytes = read_file(ids_path);
  if (bytes.size() % 4 != 0) throw DataError(ids_path.string() + ": size is not a multiple of 4 bytes");
  Corpus c;
  c.level = TokenLevel::Subword;
  c.vocab = vocab;
  c.ids.resize(bytes.size() / 4);
  for (std::size_t i = 0; i < c.ids.size(); ++i) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + 4 * i);
    const std::uint32_t v = p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    if (v >= static_cast<std::uint32_t>(vocab->size())) {
      throw DataError(ids_path.string() + ": id " + std::to_string(v) + " at index " + std::to_string(i) +
                      " outside vocabulary of " + std::to_string(vocab->size()));
    }
    c.ids[i] = static_cast<std::int32_t>(v);
    c.utf8_bytes += vocab->byte_length(c.ids[i]);
  }
  if (!c.ids.empty()) c.leading_bytes = vocab->byte_length(c.ids.front());
  return c;
}

}  // namespace hrt
