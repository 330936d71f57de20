#include "bgmd/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace bgmd {
namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// One-way combine of a parent key with child material.
std::uint64_t mix_keys(std::uint64_t parent, std::uint64_t child) {
  std::uint64_t x = parent ^ (child + 0x9e3779b97f4a7c15ULL +
                              (parent << 6) + (parent >> 2));
  return splitmix64(x);
}

std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::string_view label) {
  key_ = label.empty() ? splitmix64(seed) : mix_keys(seed, fnv1a64(label));
  reset_state();
}

void RngStream::reset_state() {
  std::uint64_t x = key_;
  for (auto& s : state_) s = splitmix64(x);
  // xoshiro's state must never be all zero; splitmix makes that practically
  // impossible but the guard costs nothing.
  if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 1;
}

RngStream RngStream::fork(std::string_view label) const {
  RngStream child;
  child.key_ = mix_keys(key_, fnv1a64(label));
  child.reset_state();
  return child;
}

RngStream RngStream::fork(std::uint64_t index) const {
  RngStream child;
  child.key_ = mix_keys(key_, splitmix64(index));
  child.reset_state();
  return child;
}

std::uint64_t RngStream::next_u64() {
  // xoshiro256++
  const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

std::uint64_t RngStream::next_below(std::uint64_t bound) {
  if (bound == 0) {
    throw std::invalid_argument("RngStream::next_below: bound must be > 0");
  }
  // Rejection sampling on the top of the range keeps the draw exactly uniform.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return x % bound;
}

double RngStream::next_unit() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::next_normal() {
  // 1 - U keeps the argument of log strictly positive.
  const double u1 = 1.0 - next_unit();
  const double u2 = next_unit();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace bgmd
