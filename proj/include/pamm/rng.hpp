#pragma once

#include <cstdint>
#include <vector>

namespace pamm {

// Counter-based generator: draw i of stream (seed, stream_id) is a pure
// function of the triple, so derived streams can be handed to independent
// workers without sharing state.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream_id = 0)
      : seed_(seed), stream_(stream_id) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_; }
  std::uint64_t counter() const { return counter_; }

  // Independent child stream; does not advance this generator.
  Rng derive(std::uint64_t sub_stream) const;

  std::uint64_t next_u64();
  // Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::vector<double> uniform_vector(std::size_t n, double lo, double hi);
  std::vector<double> normal_vector(std::size_t n, double stddev = 1.0);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

}  // namespace pamm
