#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace reachcert {

// Every random draw in the library comes from a stream addressed by
// (seed, domain, coordinates). Streams are independent of the order in which
// they are created, so serial and parallel sweeps draw identical numbers.
enum class StreamDomain : std::uint32_t {
  kFviBasePoints = 1,
  kFviSuccessors = 2,
  kFviInitial = 3,
  kPolicyLabels = 4,
  kHoldoutBasePoints = 5,
  kHoldoutSuccessors = 6,
  kMonteCarlo = 7,
  kTest = 99,
};

class Rng {
 public:
  Rng(std::uint64_t seed, StreamDomain domain, std::initializer_list<std::uint64_t> coords = {});

  double uniform() { return unit_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit_(engine_); }
  double normal() { return normal_(engine_); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace reachcert
