#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "estbad/model.hpp"

namespace estbad {

struct TriggerOptConfig {
  int beam_size = 10;
  int iterations = 20;
  int batch_size = 32;
  int eval_subset_size = 512;
  std::string init_token = "the";
  int target_label = 1;
  std::uint64_t seed = 0;
};

struct TriggerState {
  std::vector<double> current_embedding;  // always a row of the embedding table
  TokenId current_token = 0;
  std::vector<double> loss_history;  // best-so-far, non-increasing
  bool zero_grad_warning = false;
};

struct TriggerIterationTrace {
  int iteration = 0;
  std::vector<std::string> candidate_words;
  std::vector<double> eval_losses;
  std::string chosen_word;
  std::string best_word;
  double best_loss = 0.0;
};

struct TriggerOptResult {
  std::string word;
  double loss = 0.0;
  TriggerState state;
  std::vector<TriggerIterationTrace> trace;
};

// First-order ranking: the h content tokens minimizing
// (e_i - e_cur) . grad, ascending, ties to the smaller token id. A zero
// gradient ranks every candidate equally and sets *zero_grad.
std::vector<TokenId> rank_candidates(const std::vector<double>& grad,
                                     const ClassifierModel& m,
                                     const std::vector<double>& e_cur, int h,
                                     bool* zero_grad = nullptr);

// Mean cross-entropy toward target_label over eval_set with the trigger token
// inserted once per example (position seeded per example id). Pure function
// of its arguments.
double trigger_loss(const ClassifierModel& m, TokenId trigger,
                    const std::vector<const LabeledText*>& eval_set,
                    int target_label, std::uint64_t position_seed = 0);

// Iterative search: batch embedding gradient -> candidate ranking -> loss
// evaluation on a fixed subset -> move to the batch-best candidate. Returns
// the best word seen across all evaluations.
TriggerOptResult optimize_trigger(const ClassifierModel& m,
                                  const std::vector<const LabeledText*>& nontarget,
                                  const TriggerOptConfig& cfg);

}  // namespace estbad
