#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "adaqn/types.hpp"

namespace adaqn::data {

/// Uniform integer in [0, bound) by rejection, so permutations do not depend
/// on the standard library's distribution implementation.
inline std::uint64_t bounded_draw(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

inline std::vector<Index> seeded_permutation(std::size_t m, std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::mt19937_64 rng(seq);
  std::vector<Index> perm(m);
  std::iota(perm.begin(), perm.end(), Index{0});
  for (std::size_t i = m; i > 1; --i) std::swap(perm[i - 1], perm[bounded_draw(rng, i)]);
  return perm;
}

/// Epoch-wise shuffling without replacement. The permutation of epoch e is a
/// pure function of (seed, e), so (epoch, position) is the whole state.
class BatchSchedule {
 public:
  BatchSchedule(std::size_t num_examples, std::size_t batch_size, std::uint64_t seed)
      : m_(num_examples), b_(batch_size), seed_(seed) {
    if (m_ == 0) throw ConfigError("batch schedule: dataset is empty");
    if (b_ == 0) throw ConfigError("batch schedule: batch size must be positive");
    perm_ = seeded_permutation(m_, seed_, epoch_);
  }

  /// Next b indices of the current epoch; the final batch may be shorter.
  /// Calling past the end of an epoch starts the next one.
  std::vector<Index> next_batch() {
    if (position_ >= m_) restore(epoch_ + 1, 0);
    const std::size_t end = std::min(position_ + b_, m_);
    std::vector<Index> out(perm_.begin() + static_cast<std::ptrdiff_t>(position_),
                           perm_.begin() + static_cast<std::ptrdiff_t>(end));
    position_ = end;
    return out;
  }

  void restore(std::uint64_t epoch, std::size_t position) {
    if (epoch != epoch_ || perm_.empty()) perm_ = seeded_permutation(m_, seed_, epoch);
    epoch_ = epoch;
    position_ = position;
  }

  std::size_t batches_per_epoch() const { return (m_ + b_ - 1) / b_; }
  std::uint64_t epoch() const { return epoch_; }
  std::size_t position() const { return position_; }
  std::size_t batch_size() const { return b_; }
  std::size_t num_examples() const { return m_; }

 private:
  std::size_t m_;
  std::size_t b_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::size_t position_ = 0;
  std::vector<Index> perm_;
};

/// b distinct indices drawn from [0, m), e.g. a monitoring set.
inline std::vector<Index> sample_without_replacement(std::size_t m, std::size_t b, std::uint64_t seed) {
  std::vector<Index> perm = seeded_permutation(m, seed, 0xA11CE);
  perm.resize(std::min(b, m));
  return perm;
}

}  // namespace adaqn::data
