#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "estbad/util.hpp"

namespace estbad {

using TokenId = std::uint32_t;

struct LabeledText {
  std::string text;
  int label = 0;
  std::int64_t id = 0;
};

struct Dataset {
  std::vector<LabeledText> examples;
  int num_classes = 0;
  std::string split = "train";  // "train" or "test"

  std::size_t size() const { return examples.size(); }

  // Views used throughout the attack: target-class and non-target subsets.
  std::vector<const LabeledText*> with_label(int label) const;
  std::vector<const LabeledText*> without_label(int label) const;
};

// Content tokens get ids 0..content_size-1 (frequency rank, lexicographic
// tie-break); UNK and PAD are appended after them.
struct Vocabulary {
  std::vector<std::string> id_to_token;
  std::unordered_map<std::string, TokenId> token_to_id;  // content tokens only
  TokenId unk_id = 0;
  TokenId pad_id = 0;

  std::size_t size() const { return id_to_token.size(); }
  std::size_t content_size() const { return id_to_token.size() - 2; }
  bool is_special(TokenId id) const { return id >= content_size(); }
  bool contains(const std::string& token) const {
    return token_to_id.count(token) != 0;
  }
  TokenId id_or_unk(const std::string& token) const {
    auto it = token_to_id.find(token);
    return it == token_to_id.end() ? unk_id : it->second;
  }
  const std::string& token(TokenId id) const { return id_to_token.at(id); }

  bool operator==(const Vocabulary&) const = default;
};

// Lowercase, split on whitespace, strip leading/trailing punctuation per
// token; tokens empty after stripping are dropped.
std::vector<std::string> tokenize(const std::string& text);

// "text<TAB>label" per line; an optional one-line header is skipped.
Dataset load_tsv(const std::string& path, int num_classes,
                 const std::string& split = "train");
void save_tsv(const Dataset& ds, const std::string& path);

Vocabulary build_vocab(const std::vector<LabeledText>& examples,
                       std::size_t max_size = 10000, std::size_t min_count = 1);
Vocabulary build_vocab(const Dataset& ds, std::size_t max_size = 10000,
                       std::size_t min_count = 1);

// Unknown tokens map to UNK; an empty token sequence becomes a single UNK.
std::vector<TokenId> encode(const std::string& text, const Vocabulary& vocab);

// Seeded two-class corpus drawn from class-conditional word distributions.
// Separable by construction; contains "the" plus the function words used by
// the offline rewrite frames.
struct SyntheticConfig {
  int vocab_size = 500;
  int train_size = 2000;
  int test_size = 500;
  double class_skew = 0.9;  // odds a class-flavored token comes from the own-class pool
  std::uint64_t seed = 1;
  int sentence_min = 4;
  int sentence_max = 10;
};

std::pair<Dataset, Dataset> generate_synthetic(const SyntheticConfig& cfg);

}  // namespace estbad
