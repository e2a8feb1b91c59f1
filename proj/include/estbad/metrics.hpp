#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "estbad/corpus.hpp"

namespace estbad {

// Add-alpha smoothed n-gram language model over the corpus tokenizer's
// tokens. For order >= 2 sentences are padded with begin markers and an end
// marker is scored; a unigram model scores tokens only. The event space is
// the trained vocabulary plus UNK (plus the end marker for order >= 2), and
// conditional probabilities sum to 1 over it for every context.
struct NgramLM {
  int order = 2;
  double alpha = 0.1;

  std::unordered_map<std::string, std::uint32_t> token_ids;
  std::uint32_t unk_id = 0;
  std::uint32_t eos_id = 0;  // meaningful for order >= 2
  std::uint32_t bos_id = 0;  // context-only marker
  std::size_t event_count = 0;

  struct ContextCounts {
    double total = 0.0;
    std::unordered_map<std::uint32_t, double> events;
  };
  std::map<std::vector<std::uint32_t>, ContextCounts> table;

  double prob(const std::vector<std::uint32_t>& context, std::uint32_t event) const;
};

NgramLM train_lm(const Dataset& reference, int order = 2, double alpha = 0.1);

// exp of the mean negative log-likelihood per scored event.
double perplexity(const NgramLM& lm, const std::string& text);

struct StealthReport {
  double mean_ppl_clean = 0.0;
  double mean_ppl_poisoned = 0.0;
  double ratio = 0.0;
  // Grammar-error scoring needs external tooling; kept for schema
  // compatibility, always absent.
  std::optional<double> ge_clean;
  std::optional<double> ge_poisoned;
};

StealthReport stealth_report(const std::vector<std::string>& clean,
                             const std::vector<std::string>& poisoned,
                             const NgramLM& lm);

}  // namespace estbad
