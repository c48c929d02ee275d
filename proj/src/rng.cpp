#include "reachcert/rng.hpp"

#include <vector>

namespace reachcert {

namespace {

void push_word(std::vector<std::uint32_t>& words, std::uint64_t value) {
  words.push_back(static_cast<std::uint32_t>(value & 0xffffffffu));
  words.push_back(static_cast<std::uint32_t>(value >> 32));
}

}  // namespace

Rng::Rng(std::uint64_t seed, StreamDomain domain, std::initializer_list<std::uint64_t> coords) {
  std::vector<std::uint32_t> words;
  words.reserve(4 + 2 * coords.size());
  push_word(words, seed);
  words.push_back(static_cast<std::uint32_t>(domain));
  words.push_back(static_cast<std::uint32_t>(coords.size()));
  for (auto c : coords) push_word(words, c);
  std::seed_seq seq(words.begin(), words.end());
  engine_.seed(seq);
}

}  // namespace reachcert
