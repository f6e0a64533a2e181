#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace stageseq {

using Rng = std::mt19937_64;

// Independent stream for (seed, tags...). Used so that each consumer of
// randomness (splits, initialization, sampling, repeats) gets its own
// generator and no state is shared implicitly.
Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags = {});

// Stream tags.
enum class Stream : std::uint64_t {
  split = 1,
  init = 2,
  sampling = 3,
  baseline = 4,
  proposed = 5,
  gradcheck = 6,
};

inline std::uint64_t tag(Stream s) { return static_cast<std::uint64_t>(s); }

}  // namespace stageseq
