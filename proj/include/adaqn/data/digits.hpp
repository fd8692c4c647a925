#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "adaqn/data/batch_schedule.hpp"
#include "adaqn/data/sequences.hpp"

namespace adaqn::data {

namespace detail {
// 5x7 bitmaps, one row per string, '#' = ink.
inline constexpr std::array<std::array<const char*, 7>, 10> kDigitGlyphs = {{
    {".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."},
    {"..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."},
    {".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"},
    {"#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."},
    {"...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."},
    {"#####", "#....", "####.", "....#", "....#", "#...#", ".###."},
    {"..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."},
    {"#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."},
    {".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."},
    {".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."},
}};
}  // namespace detail

/// Procedurally rendered digit glyphs on a size x size canvas with random
/// placement, stroke intensity and background noise, flattened row-major into
/// pixel sequences in [0, 1]. Class counts differ by at most one.
inline PixelSequences synth_digits(std::size_t count, std::size_t size = 8, std::uint64_t seed = 0) {
  if (count == 0) throw ConfigError("synth_digits: count must be positive");
  if (size < 8) throw ConfigError("synth_digits: canvas must be at least 8 pixels");
  constexpr std::size_t kClasses = 10;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ink(0.7, 1.0);
  std::uniform_real_distribution<double> background(0.0, 0.15);

  const auto gw = static_cast<std::size_t>(std::lround(static_cast<double>(size) * 5.0 / 8.0));
  const auto gh = static_cast<std::size_t>(std::lround(static_cast<double>(size) * 7.0 / 8.0));

  PixelSequences ds;
  ds.seq_len = size * size;
  ds.num_classes = kClasses;
  const std::vector<Index> order = seeded_permutation(count, seed, 0xD161);
  ds.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) ds.labels[order[i]] = static_cast<std::uint32_t>(i % kClasses);

  for (std::size_t i = 0; i < count; ++i) {
    const auto& glyph = detail::kDigitGlyphs[ds.labels[i]];
    const std::size_t ox = static_cast<std::size_t>(bounded_draw(rng, size - gw + 1));
    const std::size_t oy = static_cast<std::size_t>(bounded_draw(rng, size - gh + 1));
    const double strength = ink(rng);
    std::vector<double> img(size * size);
    for (std::size_t r = 0; r < size; ++r) {
      for (std::size_t c = 0; c < size; ++c) {
        double v = background(rng);
        if (r >= oy && r < oy + gh && c >= ox && c < ox + gw) {
          const std::size_t gr = (r - oy) * 7 / gh;
          const std::size_t gc = (c - ox) * 5 / gw;
          if (glyph[gr][gc] == '#') v += strength;
        }
        img[r * size + c] = std::clamp(v, 0.0, 1.0);
      }
    }
    ds.pixels.push_back(std::move(img));
  }
  return ds;
}

}  // namespace adaqn::data
