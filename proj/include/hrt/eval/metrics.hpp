// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>

namespace hrt {

/// Mean negative log2-probability of natural-log probabilities.
double bpc(std::span<const double> log_probs);
double bpc_from_total(double total_nll_nats, std::int64_t count);
double perplexity(std::span<const double> log_probs);
double perplexity_from_total(double total_nll_nats, std::int64_t count);
double bits_per_byte(double total_nll_nats, std::int64_t utf8_bytes);

struct EvalReport {
  double total_nll_nats = 0.0;
  std::int64_t token_count = 0;
  std::int64_t utf8_byte_count = 0;
  double bpc = 0.0;
  double ppl = 0.0;
  double bits_per_byte = 0.0;
  std::int64_t attn_length = 0;

  /// Derives the three metrics from the totals. Throws DataError when
  /// token_count or utf8_byte_count is zero.
  static EvalReport from_totals(double total_nll_nats, std::int64_t tokens, std::int64_t bytes,
                                std::int64_t attn_length);

  static std::string csv_header();
  std::string csv_row() const;
  std::string summary() const;
};

}  // namespace hrt
