#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "estbad/defenses.hpp"
#include "estbad/injection.hpp"
#include "estbad/metrics.hpp"
#include "estbad/model.hpp"
#include "estbad/selection.hpp"
#include "estbad/trigger_opt.hpp"

namespace estbad {

struct Seeds {
  std::uint64_t data = 1;
  std::uint64_t surrogate = 2;
  std::uint64_t victim = 3;
  std::uint64_t selection = 4;
  std::uint64_t injection = 5;

  Seeds shifted(std::uint64_t run) const;
};

struct DefenseConfig {
  bool strip = false;
  bool cube = false;
  StripConfig strip_cfg;
  CubeConfig cube_cfg;
};

struct AttackConfig {
  Setting setting = Setting::dirty_label;
  int target_label = 1;
  double gamma = 0.01;
  TriggerSpec trigger{"", InjectionMode::offline_rewrite, 1};  // empty word: optimize
  SelectKind strategy = SelectKind::s3;
  TrainConfig surrogate;
  TrainConfig victim;
  TriggerOptConfig trigger_opt;
  Seeds seeds;
  int runs = 1;
  bool compute_clean_baseline = true;
  int stealth_sample = 200;
  DefenseConfig defenses;
  RewriteOptions rewrite;
};

// round(gamma * N), clamped to at least one sample.
int poison_budget(double gamma, std::size_t n, bool* clamped = nullptr);

// dirty-label draws from non-target samples, clean-label from the target
// class.
std::vector<const LabeledText*> poison_pool(const Dataset& ds, Setting setting,
                                            int target_label);

struct PoisonBuild {
  std::vector<PoisonRecord> records;  // sorted by source_id
  std::string trigger_word;
  double trigger_loss_value = 0.0;
  std::vector<TriggerIterationTrace> trace;
  std::vector<SimilarityScore> scores;
  int budget = 0;
  bool budget_clamped = false;
};

// Steps 1-3 of the attack: trigger word (fixed or optimized), sample
// selection, poison generation.
PoisonBuild build_poison_set(const Dataset& train, const AttackConfig& cfg,
                             const ClassifierModel& surrogate, RewriteClient* client);

// Trains on the union of the clean set and the poison set; clean copies of
// poisoned sources stay in.
ClassifierModel train_victim(const Dataset& train, const std::vector<PoisonRecord>& poison,
                             const TrainConfig& cfg);

struct AttackEval {
  double ba = 0.0;
  double asr = 0.0;
  // Triggered evaluation set, exposed for stealth scoring and defenses.
  std::vector<const LabeledText*> sources;
  std::vector<std::string> triggered_texts;
  std::vector<int> predictions;
};

AttackEval evaluate_attack(const ClassifierModel& victim, const Dataset& test,
                           const TriggerSpec& spec, int target_label,
                           RewriteClient* client, std::uint64_t injection_seed);

struct DefenseOutcome {
  std::string name;
  double pre_asr = 0.0;
  double post_asr = 0.0;
  double flagged_fraction = 0.0;        // strip: triggered inputs flagged; cube: poisons dropped
  double clean_flagged_fraction = 0.0;  // strip: measured FRR; cube: clean rows dropped
};

struct RunReport {
  int run = 0;
  Seeds seeds;
  std::string box;  // "white-box" when surrogate and victim architectures match
  std::string trigger_word;
  int poison_count = 0;
  double gamma = 0.0;
  bool budget_clamped = false;
  double ba = 0.0;
  double ba_clean = 0.0;
  double asr = 0.0;
  double ppl_clean = 0.0;
  double ppl_poisoned = 0.0;
  double ppl_ratio = 0.0;
  double surrogate_train_accuracy = 0.0;
  double victim_train_accuracy = 0.0;
  std::size_t surrogate_vocab = 0;
  std::size_t victim_vocab = 0;
  std::vector<PoisonRecord> poison;
  std::vector<SimilarityScore> scores;  // audit trail for the selection step
  std::vector<TriggerIterationTrace> trace;
  std::vector<DefenseOutcome> defenses;
};

struct ExperimentReport {
  std::vector<RunReport> runs;
  double ba_mean = 0.0, ba_std = 0.0;
  double ba_clean_mean = 0.0;
  double asr_mean = 0.0, asr_std = 0.0;
  double ppl_ratio_mean = 0.0;
  std::vector<std::string> warnings;
};

RunReport run_experiment(const AttackConfig& cfg, const Dataset& train,
                         const Dataset& test, RewriteClient* client);

using CorpusProvider = std::function<std::pair<Dataset, Dataset>(std::uint64_t data_seed)>;

ExperimentReport run_repeated(const AttackConfig& cfg, const CorpusProvider& corpus,
                              RewriteClient* client);

// Serialization. Reports are deterministic byte streams for fixed seeds and
// the offline rewrite backend; wall-clock timings live in the CLI manifest,
// not here.
std::string report_json(const ExperimentReport& report, const AttackConfig& cfg);
std::string report_csv(const ExperimentReport& report);
std::string poison_jsonl(const ExperimentReport& report);
std::string scores_jsonl(const ExperimentReport& report);
std::string trace_jsonl(const ExperimentReport& report);

std::string config_json(const AttackConfig& cfg);
AttackConfig attack_config_from_json_text(const std::string& text);

}  // namespace estbad
