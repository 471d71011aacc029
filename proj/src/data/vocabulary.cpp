// SPDX-License-Identifier: Apache-2.0
#include "hrt/data/vocabulary.hpp"

#include <charconv>
#include <cstdio>

#include "hrt/data/corpus.hpp"
#include "hrt/errors.hpp"

namespace hrt {

std::int32_t Vocabulary::add(std::string token, std::int64_t byte_length) {
  if (auto it = index_.find(token); it != index_.end()) return it->second;
  const auto id = static_cast<std::int32_t>(tokens_.size());
  index_.emplace(token, id);
  tokens_.push_back(std::move(token));
  bytes_.push_back(byte_length);
  return id;
}

const std::string& Vocabulary::token(std::int32_t id) const {
  if (id < 0 || id >= size()) throw DataError("token id " + std::to_string(id) + " outside vocabulary");
  return tokens_[static_cast<std::size_t>(id)];
}

std::optional<std::int32_t> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::int32_t Vocabulary::encode(std::string_view token) const {
  if (auto id = find(token)) return *id;
  if (unk_id_ >= 0) return unk_id_;
  throw DataError("token '" + escape_token(token) + "' not in vocabulary and no <unk> defined");
}

void Vocabulary::set_unk_id(std::int32_t id) {
  if (id < -1 || id >= size()) throw DataError("unk id outside vocabulary");
  unk_id_ = id;
}

void Vocabulary::set_pad_id(std::int32_t id) {
  if (id < 0 || id >= size()) throw DataError("pad id outside vocabulary");
  pad_id_ = id;
}

std::int64_t Vocabulary::byte_length(std::int32_t id) const {
  if (id < 0 || id >= size()) throw DataError("token id " + std::to_string(id) + " outside vocabulary");
  return bytes_[static_cast<std::size_t>(id)];
}

std::string Vocabulary::serialize() const {
  std::string out = std::to_string(unk_id_) + "\t" + std::to_string(pad_id_) + "\n";
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    out += std::to_string(bytes_[i]);
    out += '\t';
    out += escape_token(tokens_[i]);
    out += '\n';
  }
  return out;
}

namespace {

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return lines;
}

std::int64_t parse_int(std::string_view s, std::size_t line) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError("vocabulary line " + std::to_string(line) + ": expected an integer");
  }
  return v;
}

}  // namespace

Vocabulary Vocabulary::deserialize(std::string_view text) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw DataError("empty vocabulary");
  const auto tab = lines[0].find('\t');
  if (tab == std::string_view::npos) throw DataError("vocabulary header malformed");
  Vocabulary v;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto t = lines[i].find('\t');
    if (t == std::string_view::npos) throw DataError("vocabulary line " + std::to_string(i) + " malformed");
    const auto before = v.size();
    v.add(unescape_token(lines[i].substr(t + 1)), parse_int(lines[i].substr(0, t), i));
    if (v.size() == before) throw DataError("vocabulary line " + std::to_string(i) + " duplicates a token");
  }
  v.set_unk_id(static_cast<std::int32_t>(parse_int(lines[0].substr(0, tab), 0)));
  if (v.size() > 0) v.set_pad_id(static_cast<std::int32_t>(parse_int(lines[0].substr(tab + 1), 0)));
  return v;
}

Vocabulary Vocabulary::read_token_list(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  Vocabulary v;
  std::size_t n = 0;
  for (auto line : split_lines(text)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::string token = unescape_token(line);
    const bool meta = token.size() > 2 && token.front() == '<' && token.back() == '>';
    const auto bytes = static_cast<std::int64_t>(meta ? 0 : token.size());
    const auto before = v.size();
    const auto id = v.add(std::move(token), bytes);
    if (v.size() == before) throw DataError(path.string() + ": line " + std::to_string(n) + " duplicates a token");
    if (v.token(id) == "<unk>") v.set_unk_id(id);
    if (v.token(id) == "<pad>") v.set_pad_id(id);
  }
  if (v.size() == 0) throw DataError(path.string() + ": empty vocabulary");
  return v;
}

std::string escape_token(std::string_view token) {
  std::string out;
  for (unsigned char c : token) {
    switch (c) {
      case '\\':
        out += "\\\\";
        break;
      case '\t':
        out += "\\t";
        break;
      case '\n':
        out += "\\n";
        break;
      case '\r':
        out += "\\r";
        break;
      default:
        if (c < 0x20 || c == 0x7f) {
          char buf[5];
          std::snprintf(buf, sizeof buf, "\\x%02X", c);
          out += buf;
        } else {
          out += static_cast<char>(c);
        }
    }
  }
  return out;
}

std::string unescape_token(std::string_view text) {
  std::string out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '\\') {
      out += text[i];
      continue;
    }
    if (i + 1 >= text.size()) throw DataError("dangling backslash in token '" + std::string(text) + "'");
    const char e = text[++i];
    if (e == '\\') out += '\\';
    else if (e == 't') out += '\t';
    else if (e == 'n') out += '\n';
    else if (e == 'r') out += '\r';
    else if (e == 'x' && i + 2 < text.size()) {
      unsigned value = 0;
      auto [ptr, ec] = std::from_chars(text.data() + i + 1, text.data() + i + 3, value, 16);
      if (ec != std::errc() || ptr != text.data() + i + 3) throw DataError("bad \\x escape in token");
      out += static_cast<char>(value);
      i += 2;
    } else {
      throw DataError("unknown escape in token '" + std::string(text) + "'");
    }
  }
  return out;
}

}  // namespace hrt
