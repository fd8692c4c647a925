#pragma once

// Encoded-corpus cache, little-endian throughout:
//
//   8 bytes  magic "ADQNCORP"
//   u32      format version (1)
//   u8       mode (0 = char, 1 = word)
//   u8       index width in bytes (1, 2 or 4)
//   u8       has unknown index (0/1)
//   u8       reserved (0)
//   u32      unknown index (meaningful only when flagged)
//   u32      vocabulary size V
//   V times: u32 byte length, then the symbol's UTF-8 bytes
//   u64      stream length N
//   N times: index, `width` bytes

#include <array>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "adaqn/data/text_corpus.hpp"

namespace adaqn::data {

inline constexpr std::array<char, 8> kCorpusMagic = {'A', 'D', 'Q', 'N', 'C', 'O', 'R', 'P'};
inline constexpr std::uint32_t kCorpusVersion = 1;

namespace detail {
inline void put_le(std::ostream& os, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline std::uint64_t get_le(std::istream& is, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    const int c = is.get();
    if (c == std::char_traits<char>::eof()) throw IoError("corpus cache: unexpected end of file");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}
}  // namespace detail

inline int index_width_for(std::size_t vocab_size) {
  if (vocab_size <= 0x100) return 1;
  if (vocab_size <= 0x10000) return 2;
  return 4;
}

inline void write_corpus_cache(const std::filesystem::path& path, const TextCorpus& corpus) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write corpus cache " + path.string());
  const int width = index_width_for(corpus.vocab_size());
  os.write(kCorpusMagic.data(), kCorpusMagic.size());
  detail::put_le(os, kCorpusVersion, 4);
  detail::put_le(os, corpus.mode == TokenMode::Char ? 0 : 1, 1);
  detail::put_le(os, static_cast<std::uint64_t>(width), 1);
  detail::put_le(os, corpus.unknown_index ? 1 : 0, 1);
  detail::put_le(os, 0, 1);
  detail::put_le(os, corpus.unknown_index.value_or(0), 4);
  detail::put_le(os, corpus.vocabulary.size(), 4);
  for (const std::string& sym : corpus.vocabulary) {
    detail::put_le(os, sym.size(), 4);
    os.write(sym.data(), static_cast<std::streamsize>(sym.size()));
  }
  detail::put_le(os, corpus.stream.size(), 8);
  for (std::uint32_t idx : corpus.stream) detail::put_le(os, idx, width);
  if (!os) throw IoError("failed writing corpus cache " + path.string());
}

inline TextCorpus read_corpus_cache(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read corpus cache " + path.string());
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kCorpusMagic) throw IoError("corpus cache: bad magic");
  if (detail::get_le(is, 4) != kCorpusVersion) throw IoError("corpus cache: unsupported version");
  TextCorpus c;
  c.mode = detail::get_le(is, 1) == 0 ? TokenMode::Char : TokenMode::Word;
  const int width = static_cast<int>(detail::get_le(is, 1));
  if (width != 1 && width != 2 && width != 4) throw IoError("corpus cache: bad index width");
  const bool has_unk = detail::get_le(is, 1) != 0;
  detail::get_le(is, 1);
  const auto unk = static_cast<std::uint32_t>(detail::get_le(is, 4));
  if (has_unk) c.unknown_index = unk;
  const auto vocab = detail::get_le(is, 4);
  for (std::uint64_t i = 0; i < vocab; ++i) {
    const auto len = detail::get_le(is, 4);
    std::string sym(len, '\0');
    is.read(sym.data(), static_cast<std::streamsize>(len));
    if (!is) throw IoError("corpus cache: truncated vocabulary");
    c.vocabulary.push_back(std::move(sym));
  }
  const auto n = detail::get_le(is, 8);
  c.stream.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::uint32_t>(detail::get_le(is, width));
    if (idx >= c.vocabulary.size()) throw IoError("corpus cache: index out of range");
    c.stream.push_back(idx);
  }
  return c;
}

}  // namespace adaqn::data
