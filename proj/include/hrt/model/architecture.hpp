// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace hrt {

enum class BlockKind : char {
  Attention = 'a',
  Qrnn = 'q',
  FeedForward = 'f',
  RnnDropout = '|',
};

/// Token indices [first, last] wrapped by one residual connection and
/// layer-norm: a `q` followed by an `f`, ignoring interleaved `|`.
struct ResidualGroup {
  std::size_t first = 0;
  std::size_t last = 0;
  friend bool operator==(const ResidualGroup&, const ResidualGroup&) = default;
};

struct ArchitectureSpec {
  std::string source;
  std::vector<BlockKind> tokens;
  std::vector<ResidualGroup> residual_groups;

  std::size_t count(BlockKind kind) const;
  /// Tokens as a plain string, e.g. "|q|fq|f".
  std::string flat() const;
};

/// Parses the block mini-language: tokens `a q f |`, `+` between terms
/// (optional), `n x (...)` / `n×(...)` / `n*(...)` repetition, nested
/// parentheses, whitespace ignored. Throws ParseError with the byte offset.
ArchitectureSpec parse_architecture(std::string_view text);

namespace architectures {
inline constexpr std::string_view kAttnQrnn = "|+3x(q|f)+(qafff)";
inline constexpr std::string_view kPar = "|+4x(afff)+5x(f)";
inline constexpr std::string_view kHybrid = "(|q|qf)+4x(afff)+3x(f)";
}  // namespace architectures

}  // namespace hrt
