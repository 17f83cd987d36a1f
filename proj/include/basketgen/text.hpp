#pragma once

#include <algorithm>
#include <cctype>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "basketgen/fsio.hpp"
#include "basketgen/tensor.hpp"

namespace basketgen {

using StopwordSet = std::unordered_set<std::string>;

// Built-in copy of data/stopwords.txt; a unit test keeps the two in sync.
inline const StopwordSet& builtin_stopwords() {
  static const StopwordSet words = {
      "a",        "about",      "above",   "after",   "again",   "against", "all",
      "am",       "an",         "and",     "any",     "are",     "as",      "at",
      "be",       "because",    "been",    "before",  "being",   "below",   "between",
      "both",     "but",        "by",      "can",     "did",     "do",      "does",
      "doing",    "down",       "during",  "each",    "few",     "for",     "from",
      "further",  "had",        "has",     "have",    "having",  "he",      "her",
      "here",     "hers",       "herself", "him",     "himself", "his",     "how",
      "if",       "in",         "into",    "is",      "it",      "its",     "itself",
      "just",     "me",         "more",    "most",    "my",      "myself",  "no",
      "nor",      "not",        "now",     "of",      "off",     "on",      "once",
      "only",     "or",         "other",   "our",     "ours",    "ourselves",
      "out",      "over",       "own",     "same",    "she",     "should",  "so",
      "some",     "such",       "than",    "that",    "the",     "their",   "theirs",
      "them",     "themselves", "then",    "there",   "these",   "they",    "this",
      "those",    "through",    "to",      "too",     "under",   "until",   "up",
      "very",     "was",        "we",      "were",    "what",    "when",    "where",
      "which",    "while",      "who",     "whom",    "why",     "will",    "with",
      "you",      "your",       "yours",   "yourself", "yourselves",
      // units and retail filler
      "ml", "oz", "mg", "kg", "lb", "lbs", "cm", "mm", "ct", "pk", "pack", "count", "size"};
  return words;
}

inline StopwordSet load_stopwords(const std::filesystem::path& path) {
  StopwordSet words;
  std::istringstream in(read_text(path));
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    words.insert(line);
  }
  return words;
}

// Lowercased alphabetic runs.
inline std::vector<std::string> tokenize(const std::string& raw) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : raw) {
    if (std::isalpha(static_cast<unsigned char>(ch))) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

// Product text preprocessing: lowercase alphabetic tokens from name ++
// description, minus stopwords and tokens shorter than 2 characters.
inline std::vector<std::string> preprocess(const std::string& raw_name,
                                           const std::string& raw_description,
                                           const StopwordSet& stopwords = builtin_stopwords()) {
  std::vector<std::string> out;
  for (const std::string& raw : {raw_name, raw_description})
    for (auto& tok : tokenize(raw))
      if (tok.size() >= 2 && !stopwords.count(tok)) out.push_back(std::move(tok));
  return out;
}

struct ProductDocument {
  std::string product_id;
  std::vector<std::string> tokens;  // non-empty at ingestion
};

struct Vocabulary {
  std::unordered_map<std::string, int> token_to_id;
  std::vector<std::string> id_to_token;
  std::vector<std::int64_t> freq;

  int add(const std::string& tok) {
    auto it = token_to_id.find(tok);
    if (it != token_to_id.end()) {
      ++freq[static_cast<std::size_t>(it->second)];
      return it->second;
    }
    int id = static_cast<int>(id_to_token.size());
    token_to_id.emplace(tok, id);
    id_to_token.push_back(tok);
    freq.push_back(1);
    return id;
  }
  int lookup(const std::string& tok) const {
    auto it = token_to_id.find(tok);
    return it == token_to_id.end() ? -1 : it->second;
  }
  std::size_t size() const { return id_to_token.size(); }

  static Vocabulary build(const std::vector<ProductDocument>& corpus, std::int64_t min_count = 1) {
    Vocabulary all;
    for (const auto& doc : corpus)
      for (const auto& tok : doc.tokens) all.add(tok);
    if (min_count <= 1) return all;
    Vocabulary kept;
    for (std::size_t id = 0; id < all.size(); ++id)
      if (all.freq[id] >= min_count) {
        int nid = kept.add(all.id_to_token[id]);
        kept.freq[static_cast<std::size_t>(nid)] = all.freq[id];
      }
    return kept;
  }
};

}  // namespace basketgen
