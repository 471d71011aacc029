// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace hrt {

/// Deterministic record-structured text: a block of about `block_bytes`
/// (log-style records drawing on every printable ASCII character and a few
/// accented letters, about 100 distinct characters) repeated until the
/// result holds exactly `total_bytes` bytes, cut at a character boundary at
/// or before that size.
std::string structured_text(std::size_t total_bytes, std::size_t block_bytes, std::uint64_t seed);

}  // namespace hrt
