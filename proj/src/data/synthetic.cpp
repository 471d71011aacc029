// SPDX-License-Identifier: Apache-2.0
#include "hrt/data/synthetic.hpp"

#include <array>
#include <cstdio>
#include <random>
#include <string_view>

namespace hrt {
namespace {

constexpr std::array<std::string_view, 12> kNames{"Ada Lovelace", "Björn Ek",    "Chloé Martin", "Dmitri Orlov",
                                                  "Eva Núñez",    "Femi Adeyemi", "Grace Hopper", "Hiro Tanaka",
                                                  "Ingrid Øby",   "José Ruiz",    "Kai Weiß",     "Lena Dvořák"};
constexpr std::array<std::string_view, 8> kCities{"Zürich", "Köln",  "Malmö", "Québec",
                                                  "Oslo",   "Porto", "Quito", "Vienna"};
constexpr std::array<std::string_view, 8> kVerbs{"opened", "closed", "merged", "queued",
                                                 "joined", "moved",  "synced", "paused"};
constexpr std::array<std::string_view, 6> kExprs{"(a + b) * c", "x[i] = y % 7;", "if (p && !q) {}",
                                                 "$HOME/~tmp",  "a^2 | b & c",   "<tag key=\"v\"/>"};

std::string record(std::size_t index, std::mt19937_64& gen) {
  auto pick = [&](auto& list) { return list[gen() % list.size()]; };
  char code[16];
  std::snprintf(code, sizeof code, "%c%c-%04u", static_cast<char>('A' + gen() % 26),
                static_cast<char>('A' + gen() % 26), static_cast<unsigned>(gen() % 10000));
  char amount[32];
  std::snprintf(amount, sizeof amount, "%u.%02u", static_cast<unsigned>(gen() % 1000),
                static_cast<unsigned>(gen() % 100));
  std::string r = "#" + std::to_string(index) + " [" + code + "] " + std::string(pick(kNames)) + " @ " +
                  std::string(pick(kCities)) + ": " + std::string(pick(kVerbs)) + " 'job_" +
                  std::to_string(gen() % 90 + 10) + "' {amount=" + amount + "; expr=`" + std::string(pick(kExprs)) +
                  "`}";
  r += (index % 3 == 0) ? " -- ok?\n" : (index % 3 == 1) ? " !done\n" : " ...\n";
  return r;
}

}  // namespace

std::string structured_text(std::size_t total_bytes, std::size_t block_bytes, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::string block;
  for (std::size_t i = 0; block.size() < block_bytes || i == 0; ++i) block += record(i, gen);
  std::string out;
  out.reserve(total_bytes);
  while (out.size() < total_bytes) out += block;
  std::size_t cut = total_bytes;
  while (cut > 0 && cut < out.size() && (static_cast<unsigned char>(out[cut]) & 0xC0) == 0x80) --cut;
  out.resize(cut);
  return out;
}

}  // namespace hrt
