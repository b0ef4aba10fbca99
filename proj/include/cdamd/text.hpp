#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cdamd/errors.hpp"

namespace cdamd {

// Whitespace tokenization + FNV-1a hash bucketing; shared by the generator's
// toy text encoder and the evaluator's text tower.
inline std::vector<std::string> tokenize_words(const std::string& prompt) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : prompt) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      if (!cur.empty()) {
        words.push_back(cur);
        cur.clear();
      }
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) words.push_back(cur);
  return words;
}

inline int hash_bucket(const std::string& word, int buckets) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : word) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001B3ULL;
  }
  return static_cast<int>(h % static_cast<std::uint64_t>(buckets));
}

inline std::vector<int> text_to_buckets(const std::string& prompt, int buckets) {
  auto words = tokenize_words(prompt);
  if (words.empty()) throw ValidationError("empty prompt");
  std::vector<int> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(hash_bucket(w, buckets));
  return ids;
}

}  // namespace cdamd
