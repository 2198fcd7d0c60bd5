#include "fpnseg/rng.hpp"

#include <cmath>
#include <numbers>

namespace fpnseg {

namespace {
constexpr uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}
}  // namespace

// SplitMix64 finalizer.
uint64_t mix64(uint64_t x) {
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t RngStream::next_u64() {
  ++counter_;
  return mix64(seed_ + counter_ * kGamma);
}

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

uint64_t RngStream::below(uint64_t n) {
  if (n <= 1) return 0;
  // Multiply-shift on 64 bits; the bias is below 2^-40 for any n we use.
  auto u = static_cast<unsigned __int128>(next_u64()) * n;
  return static_cast<uint64_t>(u >> 64);
}

double RngStream::normal() {
  double u1 = uniform();
  double u2 = uniform();
  // 1 - u1 lies in (0, 1], keeping the log finite.
  return std::sqrt(-2.0 * std::log(1.0 - u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

RngStream RngStream::derive(std::string_view label, uint64_t index) const {
  uint64_t s = mix64(seed_ ^ mix64(fnv1a(label)));
  s = mix64(s + mix64(index + kGamma));
  return RngStream(s, 0);
}

}  // namespace fpnseg
