#pragma once

#include <cstdint>
#include <vector>

namespace adaqn::data {

/// Language-model windows: targets are the inputs shifted by one symbol.
struct TokenSequences {
  std::size_t seq_len = 0;
  std::size_t vocab_size = 0;
  std::vector<std::vector<std::uint32_t>> inputs;
  std::vector<std::vector<std::uint32_t>> targets;

  std::size_t size() const { return inputs.size(); }
};

/// Pixel sequences in [0, 1], one scalar per time step, with a class label each.
struct PixelSequences {
  std::size_t seq_len = 0;
  std::size_t num_classes = 0;
  std::vector<std::vector<double>> pixels;
  std::vector<std::uint32_t> labels;

  std::size_t size() const { return pixels.size(); }
};

}  // namespace adaqn::data
