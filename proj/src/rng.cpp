#include "kgnpro/rng.hpp"

#include <cmath>
#include <numbers>

#include "kgnpro/error.hpp"

namespace kgnpro {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

SeededRng::SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

SeededRng SeededRng::derive(std::uint64_t stream) const {
  return SeededRng(splitmix64(seed_ ^ splitmix64(stream + 1)));
}

std::uint64_t SeededRng::next_u64() { return engine_(); }

double SeededRng::uniform() {
  // 53 mantissa bits -> [0, 1).
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

int SeededRng::uniform_int(int lo, int hi) {
  if (hi < lo) raise(ErrorCode::InvalidArgument, "uniform_int: hi < lo");
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  // Rejection-free modulo is biased; span here is tiny relative to 2^64 so
  // the bias is unobservable, but reject anyway to keep the stream exact.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  std::uint64_t v = next_u64();
  while (v >= limit) v = next_u64();
  return lo + static_cast<int>(v % span);
}

double SeededRng::normal() {
  // Open interval on u1 keeps log() finite.
  const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

double SeededRng::gamma(double shape) {
  if (shape < 1.0) raise(ErrorCode::InvalidArgument, "gamma: shape < 1");
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = normal();
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
  }
}

double SeededRng::student_t(double nu) {
  if (nu <= 2.0) raise(ErrorCode::InvalidArgument, "student_t: nu <= 2");
  const double z = normal();
  const double chi2 = 2.0 * gamma(0.5 * nu);
  return z / std::sqrt(chi2 / nu);
}

Eigen::Vector3d SeededRng::unit_vector() {
  // Marsaglia rejection on the unit disk.
  for (;;) {
    const double a = uniform(-1.0, 1.0);
    const double b = uniform(-1.0, 1.0);
    const double s = a * a + b * b;
    if (s >= 1.0 || s == 0.0) continue;
    const double r = 2.0 * std::sqrt(1.0 - s);
    return {a * r, b * r, 1.0 - 2.0 * s};
  }
}

double student_t_logpdf(double x, double scale, double nu) {
  const double z = x / scale;
  return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
         0.5 * std::log(nu * std::numbers::pi) - std::log(scale) -
         0.5 * (nu + 1.0) * std::log1p(z * z / nu);
}

}  // namespace kgnpro
