#pragma once

#include <cstdint>
#include <vector>

#include "estbad/injection.hpp"
#include "estbad/model.hpp"

namespace estbad {

struct SimilarityScore {
  std::int64_t source_id = 0;
  double s = 0.0;  // cosine of clean vs poisoned features, in [-1, 1]
  bool zero_norm_warning = false;
};

enum class SelectKind { random, s3, confidence };

std::string to_string(SelectKind kind);
SelectKind select_kind_from_string(const std::string& s);

struct SelectionStrategy {
  SelectKind kind = SelectKind::s3;
  Setting setting = Setting::dirty_label;
};

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b,
                         bool* zero_norm = nullptr);

// Cosine between extractor features of each pool sample and its poisoned
// counterpart, built with the attack's own injection mode. Per-sample
// injection randomness is keyed by (injection_seed, source id) so the scored
// pair is exactly the poison produced later.
std::vector<SimilarityScore> similarity_scores(const ClassifierModel& extractor,
                                               const std::vector<const LabeledText*>& pool,
                                               const TriggerSpec& spec,
                                               RewriteClient* client,
                                               std::uint64_t injection_seed);

// Clean-model probability of the target class per pool sample (confidence
// baseline).
std::vector<double> target_class_confidence(const ClassifierModel& clean_model,
                                            const std::vector<const LabeledText*>& pool,
                                            int target_label);

// Pick `budget` source ids. s3 takes the most similar (dirty) or most
// dissimilar (clean); confidence takes the least target-confident; random is
// uniform without replacement. Ties break toward the smaller source id.
// `confidence` may be empty unless the confidence strategy is used.
std::vector<std::int64_t> select(const std::vector<SimilarityScore>& scores,
                                 const std::vector<double>& confidence,
                                 const SelectionStrategy& strategy, int budget,
                                 std::uint64_t seed);

}  // namespace estbad
