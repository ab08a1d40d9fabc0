#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace dynrec {

/// Deterministic stream derivation: every (master seed, path...) tuple yields an
/// independent engine, so trials and bursts can be generated in any order.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * path.size());
  auto push = [&words](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  for (auto p : path) push(p);
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

/// A 64-bit sub-seed for the given path, for handing to code that takes a plain seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  auto engine = make_stream(seed, path);
  return engine();
}

}  // namespace dynrec
