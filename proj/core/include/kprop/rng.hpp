#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string>

namespace kprop {

// Seeded stream: xoshiro256** state filled by splitmix64(seed), advanced by
// `stream` calls to jump(). Gaussians use the Marsaglia polar method on
// 53-bit uniforms, consuming pairs and caching the second variate.
struct RngSpec {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  static constexpr const char* algorithm = "xoshiro256**+splitmix64+polar";
  bool operator==(const RngSpec&) const = default;
};

std::uint64_t splitmix64(std::uint64_t& state);

// Mixes a tag into a seed so that independent purposes get unrelated seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

class Rng {
public:
  using result_type = std::uint64_t;

  explicit Rng(const RngSpec& spec);
  Rng(std::uint64_t seed, std::uint64_t stream = 0) : Rng(RngSpec{seed, stream}) {}
  static Rng from_state(const std::array<std::uint64_t, 4>& s);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return next(); }

  std::uint64_t next();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double normal();
  // Advances by 2^128 draws.
  void jump();

  const std::array<std::uint64_t, 4>& state() const { return s_; }

private:
  Rng() = default;
  std::array<std::uint64_t, 4> s_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace kprop
