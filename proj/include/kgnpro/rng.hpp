#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <random>

namespace kgnpro {

// Deterministic random source. The engine is std::mt19937_64 (its raw output
// sequence is pinned by the standard); all variate transforms are implemented
// here instead of <random> distributions, whose outputs vary across standard
// library implementations. Two runs with the same seed therefore produce
// bit-identical streams on any platform.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed);

  // Independent substream, a pure function of (original seed, stream index).
  // Drawing from *this does not affect derived streams.
  SeededRng derive(std::uint64_t stream) const;

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();

  // Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  // Inclusive bounds.
  int uniform_int(int lo, int hi);

  // Standard normal via Box-Muller; consumes two uniforms per call.
  double normal();

  // Shape >= 1 (Marsaglia-Tsang).
  double gamma(double shape);

  // Student-t with nu > 2 degrees of freedom, unit scale.
  double student_t(double nu);

  Eigen::Vector3d unit_vector();

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

// log-density of the scaled Student-t at x (scale > 0, nu > 0).
double student_t_logpdf(double x, double scale, double nu);

}  // namespace kgnpro
