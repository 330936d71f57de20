#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace bgmd {

// Deterministic, splittable random stream.
//
// Standard-library distributions are implementation-defined, so every draw
// here is built from fixed integer arithmetic (xoshiro256++ seeded through
// splitmix64) plus explicit uniform/normal transforms. A given
// (seed, stream label, draw index) therefore yields the same value on every
// run. `fork` derives an independent child stream from the parent's identity
// key only — not from its draw position — so forking is reproducible no
// matter how many values the parent has already produced.
//
// Integer and uniform outputs are exact everywhere; `next_normal` goes
// through libm (log/cos), so its bits are stable for a fixed libm build.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::string_view label = {});

  RngStream fork(std::string_view label) const;
  RngStream fork(std::uint64_t index) const;

  std::uint64_t next_u64();
  // Uniform draw below `bound` without modulo bias (rejection sampling).
  std::uint64_t next_below(std::uint64_t bound);
  // Uniform on [0, 1) with 53 random bits.
  double next_unit();
  // Standard normal via Box-Muller; consumes exactly two uniforms per call.
  double next_normal();

  std::uint64_t key() const { return key_; }

 private:
  RngStream() = default;
  void reset_state();

  std::uint64_t key_ = 0;
  std::array<std::uint64_t, 4> state_{};
};

}  // namespace bgmd
