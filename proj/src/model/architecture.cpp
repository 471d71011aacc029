// SPDX-License-Identifier: Apache-2.0
#include "hrt/model/architecture.hpp"

#include <algorithm>
#include <cctype>

#include "hrt/errors.hpp"

namespace hrt {

std::size_t ArchitectureSpec::count(BlockKind kind) const {
  return static_cast<std::size_t>(std::count(tokens.begin(), tokens.end(), kind));
}

std::string ArchitectureSpec::flat() const {
  std::string s;
  s.reserve(tokens.size());
  for (BlockKind k : tokens) s.push_back(static_cast<char>(k));
  return s;
}

namespace {

constexpr std::size_t kMaxTokens = 1 << 16;

bool is_token(char c) { return c == 'a' || c == 'q' || c == 'f' || c == '|'; }

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  std::vector<BlockKind> parse() {
    skip_space();
    if (at_end()) throw ParseError(pos_, "empty architecture string");
    auto tokens = expression();
    skip_space();
    if (!at_end()) {
      if (peek() == ')') throw ParseError(pos_, "unbalanced ')'");
      throw ParseError(pos_, std::string("unexpected character '") + peek() + "'");
    }
    return tokens;
  }

 private:
  std::vector<BlockKind> expression() {
    std::vector<BlockKind> out;
    bool expect_term = true;
    while (true) {
      skip_space();
      if (at_end() || peek() == ')') {
        if (expect_term) throw ParseError(pos_, at_end() ? "expected a term at end of input" : "expected a term before ')'");
        return out;
      }
      if (peek() == '+') {
        if (expect_term) throw ParseError(pos_, "unexpected '+'");
        ++pos_;
        expect_term = true;
        continue;
      }
      auto t = term();
      out.insert(out.end(), t.begin(), t.end());
      if (out.size() > kMaxTokens) throw ParseError(pos_, "architecture expands to too many blocks");
      expect_term = false;
    }
  }

  std::vector<BlockKind> term() {
    skip_space();
    std::size_t repeat = 1;
    if (std::isdigit(static_cast<unsigned char>(peek()))) {
      const std::size_t start = pos_;
      repeat = 0;
      while (!at_end() && std::isdigit(static_cast<unsigned char>(peek()))) {
        repeat = repeat * 10 + static_cast<std::size_t>(peek() - '0');
        if (repeat > kMaxTokens) throw ParseError(start, "repetition count too large");
        ++pos_;
      }
      if (repeat == 0) throw ParseError(start, "repetition count must be positive");
      skip_space();
      if (!consume_times()) throw ParseError(pos_, "expected 'x' after repetition count");
      skip_space();
    }
    std::vector<BlockKind> unit;
    if (!at_end() && peek() == '(') {
      const std::size_t open = pos_;
      ++pos_;
      unit = expression();
      skip_space();
      if (at_end() || peek() != ')') throw ParseError(open, "unbalanced '('");
      ++pos_;
    } else {
      while (true) {
        skip_space();
        if (at_end() || !is_token(peek())) break;
        unit.push_back(static_cast<BlockKind>(peek()));
        ++pos_;
      }
      if (unit.empty()) {
        if (at_end()) throw ParseError(pos_, "expected a block token");
        throw ParseError(pos_, std::string("unknown token '") + peek() + "'");
      }
    }
    std::vector<BlockKind> out;
    out.reserve(unit.size() * repeat);
    for (std::size_t i = 0; i < repeat; ++i) out.insert(out.end(), unit.begin(), unit.end());
    return out;
  }

  bool consume_times() {
    if (at_end()) return false;
    if (peek() == 'x' || peek() == 'X' || peek() == '*') {
      ++pos_;
      return true;
    }
    if (text_.substr(pos_, 2) == "\xC3\x97") {  // U+00D7
      pos_ += 2;
      return true;
    }
    return false;
  }

  void skip_space() {
    while (!at_end() && std::isspace(static_cast<unsigned char>(peek()))) ++pos_;
  }
  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return at_end() ? '\0' : text_[pos_]; }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

ArchitectureSpec parse_architecture(std::string_view text) {
  ArchitectureSpec spec;
  spec.source = std::string(text);
  spec.tokens = Parser(text).parse();
  for (std::size_t i = 0; i < spec.tokens.size(); ++i) {
    if (spec.tokens[i] != BlockKind::Qrnn) continue;
    std::size_t j = i + 1;
    while (j < spec.tokens.size() && spec.tokens[j] == BlockKind::RnnDropout) ++j;
    if (j < spec.tokens.size() && spec.tokens[j] == BlockKind::FeedForward) {
      spec.residual_groups.push_back({i, j});
      i = j;
    }
  }
  return spec;
}

}  // namespace hrt
