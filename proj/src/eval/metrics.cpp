// SPDX-License-Identifier: Apache-2.0
#include "hrt/eval/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "hrt/errors.hpp"

namespace hrt {

namespace {

double total_nll(std::span<const double> log_probs) {
  double s = 0.0;
  for (double lp : log_probs) s -= lp;
  return s;
}

std::string format(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double bpc_from_total(double total_nll_nats, std::int64_t count) {
  if (count <= 0) throw DataError("bpc over zero tokens");
  return total_nll_nats / (std::numbers::ln2 * static_cast<double>(count));
}

double bpc(std::span<const double> log_probs) {
  return bpc_from_total(total_nll(log_probs), static_cast<std::int64_t>(log_probs.size()));
}

double perplexity_from_total(double total_nll_nats, std::int64_t count) {
  if (count <= 0) throw DataError("perplexity over zero tokens");
  return std::exp(total_nll_nats / static_cast<double>(count));
}

double perplexity(std::span<const double> log_probs) {
  return perplexity_from_total(total_nll(log_probs), static_cast<std::int64_t>(log_probs.size()));
}

double bits_per_byte(double total_nll_nats, std::int64_t utf8_bytes) {
  if (utf8_bytes <= 0) throw DataError("bits per byte over zero bytes");
  return total_nll_nats / (std::numbers::ln2 * static_cast<double>(utf8_bytes));
}

EvalReport EvalReport::from_totals(double total, std::int64_t tokens, std::int64_t bytes, std::int64_t attn) {
  EvalReport r;
  r.total_nll_nats = total;
  r.token_count = tokens;
  r.utf8_byte_count = bytes;
  r.attn_length = attn;
  r.bpc = bpc_from_total(total, tokens);
  r.ppl = perplexity_from_total(total, tokens);
  r.bits_per_byte = hrt::bits_per_byte(total, bytes);
  return r;
}

std::string EvalReport::csv_header() {
  return "total_nll_nats,token_count,utf8_byte_count,bpc,ppl,bits_per_byte,attn_length";
}

std::string EvalReport::csv_row() const {
  return format(total_nll_nats) + "," + std::to_string(token_count) + "," + std::to_string(utf8_byte_count) + "," +
         format(bpc) + "," + format(ppl) + "," + format(bits_per_byte) + "," + std::to_string(attn_length);
}

std::string EvalReport::summary() const {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "tokens %lld, bytes %lld, attention length %lld\n"
                "  bpc            %.6f\n"
                "  perplexity     %.6f\n"
                "  bits per byte  %.6f\n",
                static_cast<long long>(token_count), static_cast<long long>(utf8_byte_count),
                static_cast<long long>(attn_length), bpc, ppl, bits_per_byte);
  return buf;
}

}  // namespace hrt
