#include "estbad/selection.hpp"

#include <algorithm>
#include <cmath>

namespace estbad {

std::string to_string(SelectKind kind) {
  switch (kind) {
    case SelectKind::random:
      return "random";
    case SelectKind::s3:
      return "s3";
    case SelectKind::confidence:
      return "confidence";
  }
  return "random";
}

SelectKind select_kind_from_string(const std::string& s) {
  if (s == "random") return SelectKind::random;
  if (s == "s3") return SelectKind::s3;
  if (s == "confidence") return SelectKind::confidence;
  throw ConfigError("unknown selection strategy '" + s + "'");
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b,
                         bool* zero_norm) {
  if (a.size() != b.size()) throw ValidationError("cosine: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (zero_norm != nullptr) *zero_norm = false;
  if (na == 0.0 || nb == 0.0) {
    if (zero_norm != nullptr) *zero_norm = true;
    return 0.0;
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<SimilarityScore> similarity_scores(const ClassifierModel& extractor,
                                               const std::vector<const LabeledText*>& pool,
                                               const TriggerSpec& spec,
                                               RewriteClient* client,
                                               std::uint64_t injection_seed) {
  std::vector<SimilarityScore> out(pool.size());
  auto score_one = [&](std::size_t i) {
    const LabeledText* ex = pool[i];
    Rng rng(Rng::mix(injection_seed, static_cast<std::uint64_t>(ex->id)));
    const InjectionOutcome poisoned = inject_trigger(ex->text, spec, client, rng);
    const auto clean_feat = extract_features(extractor, encode(ex->text, extractor.vocab));
    const auto poison_feat =
        extract_features(extractor, encode(poisoned.text, extractor.vocab));
    SimilarityScore s;
    s.source_id = ex->id;
    s.s = cosine_similarity(clean_feat, poison_feat, &s.zero_norm_warning);
    out[i] = s;
  };
  if (spec.mode == InjectionMode::llm_rewrite) {
    // Network-bound: the in-flight cap comes from the client configuration.
    parallel_for_cap(pool.size(), client == nullptr ? 1 : client->concurrency(), score_one);
  } else {
    parallel_for(pool.size(), score_one);
  }
  return out;
}

std::vector<double> target_class_confidence(const ClassifierModel& clean_model,
                                            const std::vector<const LabeledText*>& pool,
                                            int target_label) {
  std::vector<double> out(pool.size());
  parallel_for(pool.size(), [&](std::size_t i) {
    const auto probs = forward(clean_model, encode(pool[i]->text, clean_model.vocab));
    out[i] = probs[static_cast<std::size_t>(target_label)];
  });
  return out;
}

std::vector<std::int64_t> select(const std::vector<SimilarityScore>& scores,
                                 const std::vector<double>& confidence,
                                 const SelectionStrategy& strategy, int budget,
                                 std::uint64_t seed) {
  if (budget < 0) throw ConfigError("select: budget must be >= 0");
  if (static_cast<std::size_t>(budget) > scores.size()) {
    throw BudgetError("select: budget " + std::to_string(budget) +
                      " exceeds pool size " + std::to_string(scores.size()));
  }
  if (budget == 0) return {};

  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  switch (strategy.kind) {
    case SelectKind::random: {
      // Shuffle over id-sorted entries so the draw is independent of the
      // caller's pool ordering.
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[a].source_id < scores[b].source_id;
      });
      Rng rng(seed);
      rng.shuffle(order);
      break;
    }
    case SelectKind::s3: {
      const bool descending = strategy.setting == Setting::dirty_label;
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a].s != scores[b].s) {
          return descending ? scores[a].s > scores[b].s : scores[a].s < scores[b].s;
        }
        return scores[a].source_id < scores[b].source_id;
      });
      break;
    }
    case SelectKind::confidence: {
      if (confidence.size() != scores.size()) {
        throw ConfigError("select: confidence strategy requires one confidence per sample");
      }
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (confidence[a] != confidence[b]) return confidence[a] < confidence[b];
        return scores[a].source_id < scores[b].source_id;
      });
      break;
    }
  }

  std::vector<std::int64_t> out;
  out.reserve(static_cast<std::size_t>(budget));
  for (int i = 0; i < budget; ++i) out.push_back(scores[order[static_cast<std::size_t>(i)]].source_id);
  return out;
}

}  // namespace estbad
