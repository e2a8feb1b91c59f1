#include "estbad/metrics.hpp"

#include <cmath>

namespace estbad {

double NgramLM::prob(const std::vector<std::uint32_t>& context, std::uint32_t event) const {
  double count = 0.0;
  double total = 0.0;
  const auto it = table.find(context);
  if (it != table.end()) {
    total = it->second.total;
    const auto ev = it->second.events.find(event);
    if (ev != it->second.events.end()) count = ev->second;
  }
  return (count + alpha) / (total + alpha * static_cast<double>(event_count));
}

NgramLM train_lm(const Dataset& reference, int order, double alpha) {
  if (order < 1) throw ConfigError("train_lm: order must be >= 1");
  if (!(alpha > 0.0)) throw ConfigError("train_lm: alpha must be > 0");
  if (reference.examples.empty()) throw ValidationError("train_lm: empty reference corpus");

  NgramLM lm;
  lm.order = order;
  lm.alpha = alpha;

  for (const auto& ex : reference.examples) {
    for (const auto& tok : tokenize(ex.text)) {
      lm.token_ids.emplace(tok, static_cast<std::uint32_t>(lm.token_ids.size()));
    }
  }
  lm.unk_id = static_cast<std::uint32_t>(lm.token_ids.size());
  lm.eos_id = lm.unk_id + 1;
  lm.bos_id = lm.unk_id + 2;
  lm.event_count = lm.token_ids.size() + (order >= 2 ? 2 : 1);  // vocab + UNK (+ EOS)

  auto to_events = [&](const std::string& text) {
    std::vector<std::uint32_t> ids;
    for (const auto& tok : tokenize(text)) {
      const auto it = lm.token_ids.find(tok);
      ids.push_back(it == lm.token_ids.end() ? lm.unk_id : it->second);
    }
    if (lm.order >= 2) ids.push_back(lm.eos_id);
    return ids;
  };

  for (const auto& ex : reference.examples) {
    const auto events = to_events(ex.text);
    std::vector<std::uint32_t> context(static_cast<std::size_t>(order - 1), lm.bos_id);
    for (std::uint32_t event : events) {
      auto& cell = lm.table[context];
      cell.total += 1.0;
      cell.events[event] += 1.0;
      if (order >= 2) {
        context.erase(context.begin());
        context.push_back(event);
      }
    }
  }
  return lm;
}

double perplexity(const NgramLM& lm, const std::string& text) {
  if (lm.event_count == 0) throw StateError("perplexity: language model not trained");

  std::vector<std::uint32_t> events;
  for (const auto& tok : tokenize(text)) {
    const auto it = lm.token_ids.find(tok);
    events.push_back(it == lm.token_ids.end() ? lm.unk_id : it->second);
  }
  if (lm.order >= 2) events.push_back(lm.eos_id);
  if (events.empty()) return static_cast<double>(lm.event_count);  // vacuous text

  double nll = 0.0;
  std::vector<std::uint32_t> context(static_cast<std::size_t>(lm.order - 1), lm.bos_id);
  for (std::uint32_t event : events) {
    nll -= std::log(lm.prob(context, event));
    if (lm.order >= 2) {
      context.erase(context.begin());
      context.push_back(event);
    }
  }
  return std::exp(nll / static_cast<double>(events.size()));
}

StealthReport stealth_report(const std::vector<std::string>& clean,
                             const std::vector<std::string>& poisoned,
                             const NgramLM& lm) {
  if (clean.empty() || poisoned.empty()) {
    throw ValidationError("stealth_report: both text lists must be non-empty");
  }
  StealthReport rep;
  for (const auto& t : clean) rep.mean_ppl_clean += perplexity(lm, t);
  rep.mean_ppl_clean /= static_cast<double>(clean.size());
  for (const auto& t : poisoned) rep.mean_ppl_poisoned += perplexity(lm, t);
  rep.mean_ppl_poisoned /= static_cast<double>(poisoned.size());
  rep.ratio = rep.mean_ppl_poisoned / rep.mean_ppl_clean;
  return rep;
}

}  // namespace estbad
