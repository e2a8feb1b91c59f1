#include "estbad/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace estbad {

Seeds Seeds::shifted(std::uint64_t run) const {
  if (run == 0) return *this;
  return {Rng::mix(data, run), Rng::mix(surrogate, run), Rng::mix(victim, run),
          Rng::mix(selection, run), Rng::mix(injection, run)};
}

int poison_budget(double gamma, std::size_t n, bool* clamped) {
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw ConfigError("poison_budget: gamma must be in (0, 1]");
  }
  long long p = std::llround(gamma * static_cast<double>(n));
  bool was_clamped = false;
  if (p < 1) {
    p = 1;
    was_clamped = true;
  }
  if (clamped != nullptr) *clamped = was_clamped;
  return static_cast<int>(p);
}

std::vector<const LabeledText*> poison_pool(const Dataset& ds, Setting setting,
                                            int target_label) {
  return setting == Setting::dirty_label ? ds.without_label(target_label)
                                         : ds.with_label(target_label);
}

PoisonBuild build_poison_set(const Dataset& train, const AttackConfig& cfg,
                             const ClassifierModel& surrogate, RewriteClient* client) {
  PoisonBuild build;

  // Step 1: trigger word.
  TriggerSpec spec = cfg.trigger;
  if (spec.word.empty()) {
    TriggerOptConfig opt = cfg.trigger_opt;
    opt.target_label = cfg.target_label;
    opt.seed = Rng::mix(cfg.seeds.surrogate, 0x7717);
    const auto nontarget = train.without_label(cfg.target_label);
    TriggerOptResult res = optimize_trigger(surrogate, nontarget, opt);
    spec.word = res.word;
    build.trigger_loss_value = res.loss;
    build.trace = std::move(res.trace);
  }
  build.trigger_word = spec.word;

  // Step 2: sample selection.
  const auto pool = poison_pool(train, cfg.setting, cfg.target_label);
  build.budget = poison_budget(cfg.gamma, train.size(), &build.budget_clamped);
  if (static_cast<std::size_t>(build.budget) > pool.size()) {
    throw BudgetError("poison budget " + std::to_string(build.budget) +
                      " exceeds candidate pool of " + std::to_string(pool.size()));
  }

  SelectionStrategy strategy{cfg.strategy, cfg.setting};
  std::vector<double> confidence;
  if (cfg.strategy == SelectKind::s3) {
    build.scores = similarity_scores(surrogate, pool, spec, client, cfg.seeds.injection);
  } else {
    build.scores.resize(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) build.scores[i].source_id = pool[i]->id;
    if (cfg.strategy == SelectKind::confidence) {
      confidence = target_class_confidence(surrogate, pool, cfg.target_label);
    }
  }
  const auto chosen =
      select(build.scores, confidence, strategy, build.budget, cfg.seeds.selection);

  // Step 3: poison generation, keyed per source id so the generated text
  // matches what the similarity pass scored.
  std::unordered_map<std::int64_t, const LabeledText*> by_id;
  for (const auto* ex : pool) by_id.emplace(ex->id, ex);
  build.records.resize(chosen.size());
  const int cap = spec.mode == InjectionMode::llm_rewrite && client != nullptr
                      ? client->concurrency()
                      : 1;
  parallel_for_cap(chosen.size(), cap, [&](std::size_t i) {
    const LabeledText* ex = by_id.at(chosen[i]);
    Rng rng(Rng::mix(cfg.seeds.injection, static_cast<std::uint64_t>(chosen[i])));
    build.records[i] = make_poison(*ex, spec, cfg.target_label, cfg.setting, client, rng);
  });
  std::sort(build.records.begin(), build.records.end(),
            [](const PoisonRecord& a, const PoisonRecord& b) {
              return a.source_id < b.source_id;
            });
  return build;
}

ClassifierModel train_victim(const Dataset& train, const std::vector<PoisonRecord>& poison,
                             const TrainConfig& cfg) {
  std::vector<LabeledText> mixed = train.examples;
  mixed.reserve(train.size() + poison.size());
  for (std::size_t i = 0; i < poison.size(); ++i) {
    LabeledText ex;
    ex.text = poison[i].poisoned_text;
    ex.label = poison[i].assigned_label;
    ex.id = static_cast<std::int64_t>(train.size() + i);
    mixed.push_back(std::move(ex));
  }
  return train_on(mixed, train.num_classes, cfg);
}

AttackEval evaluate_attack(const ClassifierModel& victim, const Dataset& test,
                           const TriggerSpec& spec, int target_label,
                           RewriteClient* client, std::uint64_t injection_seed) {
  if (!victim.trained()) throw StateError("evaluate_attack: victim not trained");

  AttackEval eval;
  const auto benign_preds = predict_batch(victim, test.examples);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.examples.size(); ++i) {
    if (benign_preds[i] == test.examples[i].label) ++correct;
  }
  eval.ba = static_cast<double>(correct) / static_cast<double>(test.size());

  eval.sources = test.without_label(target_label);
  if (eval.sources.empty()) {
    throw ValidationError("evaluate_attack: no non-target samples in the test split");
  }
  eval.triggered_texts.resize(eval.sources.size());
  auto build_one = [&](std::size_t i) {
    Rng rng(Rng::mix(injection_seed, 0xA57,
                     static_cast<std::uint64_t>(eval.sources[i]->id)));
    eval.triggered_texts[i] = inject_trigger(eval.sources[i]->text, spec, client, rng).text;
  };
  if (spec.mode == InjectionMode::llm_rewrite) {
    parallel_for_cap(eval.sources.size(), client == nullptr ? 1 : client->concurrency(),
                     build_one);
  } else {
    parallel_for(eval.sources.size(), build_one);
  }

  eval.predictions.resize(eval.sources.size());
  parallel_for(eval.sources.size(), [&](std::size_t i) {
    eval.predictions[i] = predict(victim, encode(eval.triggered_texts[i], victim.vocab));
  });
  std::size_t hits = 0;
  for (int p : eval.predictions) {
    if (p == target_label) ++hits;
  }
  eval.asr = static_cast<double>(hits) / static_cast<double>(eval.sources.size());
  return eval;
}

namespace {

template <typename Fn>
auto named_stage(const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw Error(std::string("stage ") + name + ": " + e.what());
  }
}

}  // namespace

RunReport run_experiment(const AttackConfig& cfg, const Dataset& train,
                         const Dataset& test, RewriteClient* client) {
  RunReport rep;
  rep.seeds = cfg.seeds;
  rep.gamma = cfg.gamma;
  rep.box = (cfg.surrogate.embed_dim == cfg.victim.embed_dim &&
             cfg.surrogate.hidden_dim == cfg.victim.hidden_dim)
                ? "white-box"
                : "black-box";

  TrainConfig sur_cfg = cfg.surrogate;
  sur_cfg.seed = cfg.seeds.surrogate;
  const ClassifierModel surrogate =
      named_stage("surrogate", [&] { return train_clean(train, sur_cfg); });
  rep.surrogate_train_accuracy = surrogate.final_train_accuracy;
  rep.surrogate_vocab = surrogate.vocab.content_size();

  PoisonBuild build =
      named_stage("poison", [&] { return build_poison_set(train, cfg, surrogate, client); });
  rep.trigger_word = build.trigger_word;
  rep.poison_count = static_cast<int>(build.records.size());
  rep.budget_clamped = build.budget_clamped;
  rep.trace = build.trace;

  TrainConfig vic_cfg = cfg.victim;
  vic_cfg.seed = cfg.seeds.victim;
  const ClassifierModel victim = named_stage(
      "victim", [&] { return train_victim(train, build.records, vic_cfg); });
  rep.victim_train_accuracy = victim.final_train_accuracy;
  rep.victim_vocab = victim.vocab.content_size();

  TriggerSpec spec = cfg.trigger;
  spec.word = build.trigger_word;
  const AttackEval eval = named_stage("evaluate", [&] {
    return evaluate_attack(victim, test, spec, cfg.target_label, client,
                           cfg.seeds.injection);
  });
  rep.ba = eval.ba;
  rep.asr = eval.asr;

  if (cfg.compute_clean_baseline) {
    const ClassifierModel clean_victim = named_stage(
        "clean-baseline", [&] { return train_victim(train, {}, vic_cfg); });
    AttackEval clean_eval;
    const auto preds = predict_batch(clean_victim, test.examples);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.examples.size(); ++i) {
      if (preds[i] == test.examples[i].label) ++correct;
    }
    rep.ba_clean = static_cast<double>(correct) / static_cast<double>(test.size());
  }

  named_stage("stealth", [&] {
    const NgramLM lm = train_lm(train);
    const std::size_t sample =
        std::min<std::size_t>(eval.sources.size(),
                              static_cast<std::size_t>(std::max(1, cfg.stealth_sample)));
    std::vector<std::string> clean_texts, poisoned_texts;
    for (std::size_t i = 0; i < sample; ++i) {
      clean_texts.push_back(eval.sources[i]->text);
      poisoned_texts.push_back(eval.triggered_texts[i]);
    }
    const StealthReport sr = stealth_report(clean_texts, poisoned_texts, lm);
    rep.ppl_clean = sr.mean_ppl_clean;
    rep.ppl_poisoned = sr.mean_ppl_poisoned;
    rep.ppl_ratio = sr.ratio;
    return 0;
  });

  if (cfg.defenses.strip) {
    named_stage("defense-strip", [&] {
      StripConfig strip = cfg.defenses.strip_cfg;
      std::vector<std::string> heldout;
      const std::size_t n = std::min<std::size_t>(test.size(), 200);
      for (std::size_t i = 0; i < n; ++i) heldout.push_back(test.examples[i].text);
      const std::uint64_t seed = Rng::mix(cfg.seeds.victim, 0xDEF1);
      strip.entropy_threshold = calibrate_strip_threshold(victim, heldout, strip, seed);

      std::size_t flagged = 0, survive = 0;
      for (std::size_t i = 0; i < eval.triggered_texts.size(); ++i) {
        const auto res = strip_filter(victim, eval.triggered_texts[i], strip,
                                      Rng::mix(seed, 0x7A99, static_cast<std::uint64_t>(i)));
        if (res.flagged) {
          ++flagged;
        } else if (eval.predictions[i] == cfg.target_label) {
          ++survive;
        }
      }
      std::size_t clean_flagged = 0;
      for (std::size_t i = 0; i < heldout.size(); ++i) {
        if (strip_filter(victim, heldout[i], strip,
                         Rng::mix(seed, static_cast<std::uint64_t>(i)))
                .flagged) {
          ++clean_flagged;
        }
      }
      DefenseOutcome out;
      out.name = "simplified-STRIP";
      out.pre_asr = eval.asr;
      out.post_asr = static_cast<double>(survive) /
                     static_cast<double>(eval.triggered_texts.size());
      out.flagged_fraction = static_cast<double>(flagged) /
                             static_cast<double>(eval.triggered_texts.size());
      out.clean_flagged_fraction =
          static_cast<double>(clean_flagged) / static_cast<double>(heldout.size());
      rep.defenses.push_back(std::move(out));
      return 0;
    });
  }

  if (cfg.defenses.cube) {
    named_stage("defense-cube", [&] {
      std::vector<LabeledText> mixed = train.examples;
      for (std::size_t i = 0; i < build.records.size(); ++i) {
        mixed.push_back({build.records[i].poisoned_text, build.records[i].assigned_label,
                         static_cast<std::int64_t>(train.size() + i)});
      }
      const CubeResult cube = cube_filter(mixed, victim, cfg.defenses.cube_cfg,
                                          Rng::mix(cfg.seeds.victim, 0xC0BE));
      std::size_t dropped_poison = 0, dropped_clean = 0;
      for (std::size_t idx : cube.dropped) {
        (idx >= train.size() ? dropped_poison : dropped_clean) += 1;
      }
      std::vector<LabeledText> retained;
      retained.reserve(cube.retained.size());
      for (std::size_t idx : cube.retained) retained.push_back(mixed[idx]);
      const ClassifierModel retrained = train_on(retained, train.num_classes, vic_cfg);
      const AttackEval post = evaluate_attack(retrained, test, spec, cfg.target_label,
                                              client, cfg.seeds.injection);
      DefenseOutcome out;
      out.name = "simplified-CUBE";
      out.pre_asr = eval.asr;
      out.post_asr = post.asr;
      out.flagged_fraction =
          build.records.empty()
              ? 0.0
              : static_cast<double>(dropped_poison) /
                    static_cast<double>(build.records.size());
      out.clean_flagged_fraction =
          static_cast<double>(dropped_clean) / static_cast<double>(train.size());
      rep.defenses.push_back(std::move(out));
      return 0;
    });
  }

  rep.poison = std::move(build.records);
  rep.scores = std::move(build.scores);
  return rep;
}

ExperimentReport run_repeated(const AttackConfig& cfg, const CorpusProvider& corpus,
                              RewriteClient* client) {
  if (cfg.runs < 1) throw ConfigError("run_repeated: runs must be >= 1");
  ExperimentReport report;
  for (int r = 0; r < cfg.runs; ++r) {
    AttackConfig run_cfg = cfg;
    run_cfg.seeds = cfg.seeds.shifted(static_cast<std::uint64_t>(r));
    const auto [train, test] = corpus(run_cfg.seeds.data);
    RunReport rep = run_experiment(run_cfg, train, test, client);
    rep.run = r;
    if (rep.budget_clamped) {
      report.warnings.push_back("run " + std::to_string(r) +
                                ": poison budget clamped to 1 (gamma*N rounded to 0)");
    }
    report.runs.push_back(std::move(rep));
  }

  auto mean_of = [&](auto getter) {
    double m = 0.0;
    for (const auto& r : report.runs) m += getter(r);
    return m / static_cast<double>(report.runs.size());
  };
  auto std_of = [&](auto getter, double mean) {
    if (report.runs.size() < 2) return 0.0;
    double acc = 0.0;
    for (const auto& r : report.runs) {
      const double d = getter(r) - mean;
      acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(report.runs.size() - 1));
  };
  report.ba_mean = mean_of([](const RunReport& r) { return r.ba; });
  report.ba_std = std_of([](const RunReport& r) { return r.ba; }, report.ba_mean);
  report.ba_clean_mean = mean_of([](const RunReport& r) { return r.ba_clean; });
  report.asr_mean = mean_of([](const RunReport& r) { return r.asr; });
  report.asr_std = std_of([](const RunReport& r) { return r.asr; }, report.asr_mean);
  report.ppl_ratio_mean = mean_of([](const RunReport& r) { return r.ppl_ratio; });
  return report;
}

}  // namespace estbad
