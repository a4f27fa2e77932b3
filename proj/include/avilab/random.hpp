#pragma once

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>

#include <cstdint>
#include <random>

namespace avilab {

/// Same sequence as std::mt19937_64, measurably faster here.
using Engine = boost::random::mt19937_64;

/// Independent named streams derived from one user seed.
enum class Stream : std::uint64_t {
  simulate = 1,
  init = 2,
  noise = 3,
  minibatch = 4,
  evaluation = 5,
  refine = 6,
};

/// Engine seeded from (seed, stream, index) through std::seed_seq.
Engine make_engine(std::uint64_t seed, Stream stream, std::uint64_t index = 0);

/// Standard-normal draws (ziggurat).
class StandardNormal {
 public:
  double operator()(Engine& engine) { return dist_(engine); }
  void fill(Engine& engine, double* out, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) out[i] = dist_(engine);
  }

 private:
  boost::random::normal_distribution<double> dist_{0.0, 1.0};
};

}  // namespace avilab
