#include "pamm/rng.hpp"

#include <cmath>
#include <numbers>

namespace pamm {

namespace {

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Rng Rng::derive(std::uint64_t sub_stream) const {
  return Rng(seed_, mix64(stream_ ^ mix64(sub_stream + 0x9e3779b97f4a7c15ULL)));
}

std::uint64_t Rng::next_u64() {
  // Two rounds keyed by seed and stream, fed with the counter.
  std::uint64_t key = mix64(seed_ + 0x9e3779b97f4a7c15ULL) ^
                      mix64(stream_ * 0xd1b54a32d192ed03ULL + 1);
  std::uint64_t x = mix64(counter_++ * 0x9e3779b97f4a7c15ULL + key);
  return mix64(x ^ key);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  // Box-Muller with explicit evaluation so results are platform independent
  // up to libm accuracy.
  double u1 = uniform();
  double u2 = uniform();
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t n) {
  return n == 0 ? 0 : next_u64() % n;
}

std::vector<double> Rng::uniform_vector(std::size_t n, double lo, double hi) {
  std::vector<double> out(n);
  for (auto& v : out) v = uniform(lo, hi);
  return out;
}

std::vector<double> Rng::normal_vector(std::size_t n, double stddev) {
  std::vector<double> out(n);
  for (auto& v : out) v = stddev * normal();
  return out;
}

}  // namespace pamm
