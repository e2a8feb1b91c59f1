#include "estbad/trigger_opt.hpp"

#include <algorithm>
#include <cmath>

namespace estbad {

std::vector<TokenId> rank_candidates(const std::vector<double>& grad,
                                     const ClassifierModel& m,
                                     const std::vector<double>& e_cur, int h,
                                     bool* zero_grad) {
  const std::size_t d = static_cast<std::size_t>(m.embed_dim);
  if (grad.size() != d || e_cur.size() != d) {
    throw ValidationError("rank_candidates: dimension mismatch");
  }
  for (double g : grad) {
    if (!std::isfinite(g)) throw ValidationError("rank_candidates: non-finite gradient");
  }
  const std::size_t content = m.vocab.content_size();
  if (h < 1 || static_cast<std::size_t>(h) > content) {
    throw ConfigError("rank_candidates: beam size must be in [1, content vocabulary]");
  }

  bool all_zero = true;
  for (double g : grad) {
    if (g != 0.0) {
      all_zero = false;
      break;
    }
  }
  if (zero_grad != nullptr) *zero_grad = all_zero;

  double base = 0.0;
  for (std::size_t j = 0; j < d; ++j) base += e_cur[j] * grad[j];

  std::vector<std::pair<double, TokenId>> scored(content);
  for (std::size_t i = 0; i < content; ++i) {
    const auto row = m.embedding_row(static_cast<TokenId>(i));
    double dot = 0.0;
    for (std::size_t j = 0; j < d; ++j) dot += row[j] * grad[j];
    scored[i] = {dot - base, static_cast<TokenId>(i)};
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return a.second < b.second;
  });

  std::vector<TokenId> out(static_cast<std::size_t>(h));
  for (int i = 0; i < h; ++i) out[static_cast<std::size_t>(i)] = scored[static_cast<std::size_t>(i)].second;
  return out;
}

double trigger_loss(const ClassifierModel& m, TokenId trigger,
                    const std::vector<const LabeledText*>& eval_set,
                    int target_label, std::uint64_t position_seed) {
  if (eval_set.empty()) throw ValidationError("trigger_loss: empty evaluation set");
  double total = 0.0;
  for (const LabeledText* ex : eval_set) {
    if (ex->label == target_label) {
      throw ValidationError("trigger_loss: evaluation set contains target-class sample id " +
                            std::to_string(ex->id));
    }
    std::vector<TokenId> ids = encode(ex->text, m.vocab);
    Rng pos_rng(Rng::mix(position_seed, static_cast<std::uint64_t>(ex->id)));
    const std::size_t pos = pos_rng.index(ids.size() + 1);
    ids.insert(ids.begin() + static_cast<std::ptrdiff_t>(pos), trigger);
    const auto [loss, grads] = loss_and_embedding_grads(m, ids, target_label);
    total += loss;
  }
  return total / static_cast<double>(eval_set.size());
}

TriggerOptResult optimize_trigger(const ClassifierModel& m,
                                  const std::vector<const LabeledText*>& nontarget,
                                  const TriggerOptConfig& cfg) {
  if (!m.trained()) throw StateError("optimize_trigger: model not trained");
  if (nontarget.empty()) throw ValidationError("optimize_trigger: empty non-target set");
  if (cfg.iterations < 1) throw ConfigError("optimize_trigger: iterations must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("optimize_trigger: batch_size must be >= 1");
  if (cfg.beam_size < 1 ||
      static_cast<std::size_t>(cfg.beam_size) > m.vocab.content_size()) {
    throw ConfigError("optimize_trigger: beam_size must be in [1, content vocabulary]");
  }
  if (!m.vocab.contains(cfg.init_token)) {
    throw ConfigError("optimize_trigger: init token '" + cfg.init_token +
                      "' not in vocabulary");
  }

  const std::size_t d = static_cast<std::size_t>(m.embed_dim);

  // Fixed evaluation subset; every candidate across every iteration is
  // scored on the same examples with the same insertion positions.
  const std::size_t subset =
      std::min<std::size_t>(nontarget.size(),
                            std::max(1, cfg.eval_subset_size));
  Rng subset_rng(Rng::mix(cfg.seed, 0xE5A1));
  auto subset_idx = subset_rng.sample_indices(nontarget.size(), subset);
  std::sort(subset_idx.begin(), subset_idx.end());  // canonical evaluation order
  std::vector<const LabeledText*> eval_set;
  eval_set.reserve(subset);
  for (std::size_t i : subset_idx) eval_set.push_back(nontarget[i]);
  const std::uint64_t position_seed = Rng::mix(cfg.seed, 0x905);

  Rng batch_rng(Rng::mix(cfg.seed, 0xBA7C));
  Rng insert_rng(Rng::mix(cfg.seed, 0x1257));

  TriggerOptResult res;
  TokenId cur = m.vocab.id_or_unk(cfg.init_token);
  auto table_row = [&](TokenId id) {
    const auto row = m.embedding_row(id);
    return std::vector<double>(row.begin(), row.end());
  };

  double best_loss = trigger_loss(m, cur, eval_set, cfg.target_label, position_seed);
  std::string best_word = cfg.init_token;
  res.state.loss_history.push_back(best_loss);
  res.state.current_token = cur;
  res.state.current_embedding = table_row(cur);

  std::vector<double> grad(d);
  for (int it = 1; it <= cfg.iterations; ++it) {
    // Batch gradient of the loss w.r.t. the trigger embedding, averaged over
    // a fresh sample of non-target examples with the trigger inserted.
    std::fill(grad.begin(), grad.end(), 0.0);
    const std::size_t batch =
        std::min<std::size_t>(nontarget.size(), static_cast<std::size_t>(cfg.batch_size));
    const auto batch_idx = batch_rng.sample_indices(nontarget.size(), batch);
    for (std::size_t bi : batch_idx) {
      const LabeledText* ex = nontarget[bi];
      std::vector<TokenId> ids = encode(ex->text, m.vocab);
      const std::size_t pos = insert_rng.index(ids.size() + 1);
      ids.insert(ids.begin() + static_cast<std::ptrdiff_t>(pos), cur);
      const auto [loss, eg] = loss_and_embedding_grads(m, ids, cfg.target_label);
      const auto& at_trigger = eg.per_position[pos];
      for (std::size_t j = 0; j < d; ++j) grad[j] += at_trigger[j];
    }
    for (std::size_t j = 0; j < d; ++j) grad[j] /= static_cast<double>(batch);

    bool zero_grad = false;
    const std::vector<double> e_cur = table_row(cur);
    const auto candidates = rank_candidates(grad, m, e_cur, cfg.beam_size, &zero_grad);
    if (zero_grad) res.state.zero_grad_warning = true;

    std::vector<double> losses(candidates.size());
    parallel_for(candidates.size(), [&](std::size_t ci) {
      losses[ci] = trigger_loss(m, candidates[ci], eval_set, cfg.target_label, position_seed);
    });

    // Batch-best candidate; ties resolved by smaller token id.
    std::size_t pick = 0;
    for (std::size_t ci = 1; ci < candidates.size(); ++ci) {
      if (losses[ci] < losses[pick] ||
          (losses[ci] == losses[pick] && candidates[ci] < candidates[pick])) {
        pick = ci;
      }
    }
    cur = candidates[pick];

    if (losses[pick] < best_loss) {
      best_loss = losses[pick];
      best_word = m.vocab.token(cur);
    }
    res.state.loss_history.push_back(best_loss);

    TriggerIterationTrace t;
    t.iteration = it;
    for (TokenId c : candidates) t.candidate_words.push_back(m.vocab.token(c));
    t.eval_losses = losses;
    t.chosen_word = m.vocab.token(cur);
    t.best_word = best_word;
    t.best_loss = best_loss;
    res.trace.push_back(std::move(t));
  }

  res.state.current_token = cur;
  res.state.current_embedding = table_row(cur);
  res.word = best_word;
  res.loss = best_loss;
  return res;
}

}  // namespace estbad
