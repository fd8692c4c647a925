#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "adaqn/data/sequences.hpp"
#include "adaqn/types.hpp"

namespace adaqn::data {

enum class TokenMode { Char, Word };

/// Splits UTF-8 text into one string per code point. Throws ConfigError on
/// malformed input (overlong forms, surrogates and truncated sequences included).
inline std::vector<std::string> split_utf8(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      len = 1;
      cp = c;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      throw ConfigError("invalid UTF-8 lead byte at offset " + std::to_string(i));
    }
    if (i + len > text.size()) throw ConfigError("truncated UTF-8 sequence at offset " + std::to_string(i));
    for (std::size_t k = 1; k < len; ++k) {
      const auto cc = static_cast<unsigned char>(text[i + k]);
      if ((cc & 0xC0) != 0x80) throw ConfigError("invalid UTF-8 continuation at offset " + std::to_string(i + k));
      cp = (cp << 6) | (cc & 0x3F);
    }
    static constexpr std::uint32_t min_cp[5] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < min_cp[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))
      throw ConfigError("invalid UTF-8 code point at offset " + std::to_string(i));
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

inline std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

inline std::vector<std::string> tokenize(std::string_view text, TokenMode mode) {
  return mode == TokenMode::Char ? split_utf8(text) : split_words(text);
}

/// Vocabulary plus the encoded symbol stream of a whole corpus.
struct TextCorpus {
  TokenMode mode = TokenMode::Char;
  std::vector<std::string> vocabulary;  // sorted unique symbols, then "<unk>" if reserved
  std::optional<std::uint32_t> unknown_index;
  std::vector<std::uint32_t> stream;

  std::size_t vocab_size() const { return vocabulary.size(); }

  std::vector<std::uint32_t> encode(std::string_view text) const {
    std::map<std::string, std::uint32_t, std::less<>> lookup;
    for (std::uint32_t i = 0; i < vocabulary.size(); ++i)
      if (!unknown_index || i != *unknown_index) lookup.emplace(vocabulary[i], i);
    std::vector<std::uint32_t> out;
    for (const std::string& sym : tokenize(text, mode)) {
      const auto it = lookup.find(sym);
      if (it != lookup.end()) {
        out.push_back(it->second);
      } else if (unknown_index) {
        out.push_back(*unknown_index);
      } else {
        throw ConfigError("symbol '" + sym + "' is not in the vocabulary");
      }
    }
    return out;
  }

  /// Char mode reproduces the text exactly; word mode joins with single spaces.
  std::string decode(std::span<const std::uint32_t> indices) const {
    std::string out;
    for (std::size_t k = 0; k < indices.size(); ++k) {
      if (indices[k] >= vocabulary.size()) throw ConfigError("index out of vocabulary range");
      if (mode == TokenMode::Word && k > 0) out += ' ';
      out += vocabulary[indices[k]];
    }
    return out;
  }
};

struct IngestedText {
  TextCorpus corpus;
  TokenSequences train;
  TokenSequences test;
};

/// Slices the symbol stream into windows of T+1 symbols taken with stride T,
/// giving (input, target) pairs whose targets are the inputs shifted by one.
/// The first floor(split * windows) windows form the training split and the
/// vocabulary is built from them alone.
inline IngestedText ingest_text_string(std::string_view text, TokenMode mode, std::size_t seq_len,
                                       double split = 0.95) {
  if (seq_len == 0) throw ConfigError("ingest_text: sequence length must be positive");
  if (!(split > 0.0 && split <= 1.0)) throw ConfigError("ingest_text: split must lie in (0, 1]");
  const std::vector<std::string> symbols = tokenize(text, mode);
  if (symbols.empty()) throw ConfigError("ingest_text: empty corpus");
  if (seq_len >= symbols.size()) throw ConfigError("ingest_text: sequence length must be shorter than the corpus");

  const std::size_t windows = (symbols.size() - 1) / seq_len;
  const auto n_train = static_cast<std::size_t>(std::floor(split * static_cast<double>(windows) + 1e-9));
  if (n_train == 0) throw ConfigError("ingest_text: training split is empty");

  IngestedText out;
  TextCorpus& corpus = out.corpus;
  corpus.mode = mode;
  const std::size_t train_symbols = n_train * seq_len + 1;
  std::vector<std::string> vocab(symbols.begin(), symbols.begin() + static_cast<std::ptrdiff_t>(train_symbols));
  std::sort(vocab.begin(), vocab.end());
  vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());
  corpus.vocabulary = vocab;

  std::map<std::string, std::uint32_t, std::less<>> lookup;
  for (std::uint32_t i = 0; i < vocab.size(); ++i) lookup.emplace(vocab[i], i);
  corpus.stream.reserve(symbols.size());
  for (std::size_t k = 0; k < symbols.size(); ++k) {
    const auto it = lookup.find(symbols[k]);
    if (it != lookup.end()) {
      corpus.stream.push_back(it->second);
      continue;
    }
    if (mode == TokenMode::Char)
      throw ConfigError("ingest_text: symbol '" + symbols[k] + "' outside the training split is not covered");
    if (!corpus.unknown_index) {
      corpus.unknown_index = static_cast<std::uint32_t>(corpus.vocabulary.size());
      corpus.vocabulary.emplace_back("<unk>");
    }
    corpus.stream.push_back(*corpus.unknown_index);
  }

  auto fill = [&](TokenSequences& ds, std::size_t first, std::size_t last) {
    ds.seq_len = seq_len;
    ds.vocab_size = corpus.vocab_size();
    for (std::size_t wdx = first; wdx < last; ++wdx) {
      const auto begin = corpus.stream.begin() + static_cast<std::ptrdiff_t>(wdx * seq_len);
      ds.inputs.emplace_back(begin, begin + static_cast<std::ptrdiff_t>(seq_len));
      ds.targets.emplace_back(begin + 1, begin + 1 + static_cast<std::ptrdiff_t>(seq_len));
    }
  };
  fill(out.train, 0, n_train);
  fill(out.test, n_train, windows);
  return out;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read corpus file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline IngestedText ingest_text(const std::filesystem::path& path, TokenMode mode, std::size_t seq_len,
                                double split = 0.95) {
  return ingest_text_string(read_text_file(path), mode, seq_len, split);
}

}  // namespace adaqn::data
