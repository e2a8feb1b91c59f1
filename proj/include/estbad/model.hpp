#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "estbad/corpus.hpp"

namespace estbad {

// Mean-pooled bag-of-embeddings classifier:
//   embedding (d) -> mean pool -> affine -> ReLU (H) -> affine -> softmax (C).
// Small enough to train from scratch in milliseconds while exposing the two
// surfaces the attack needs: token-embedding gradients and penultimate
// features.
struct ClassifierModel {
  Vocabulary vocab;
  int embed_dim = 0;
  int hidden_dim = 0;
  int num_classes = 0;
  std::uint64_t rng_seed = 0;
  double final_train_accuracy = 0.0;

  std::vector<double> embedding;  // vocab.size() x embed_dim, row major
  std::vector<double> hidden_w;   // embed_dim x hidden_dim
  std::vector<double> hidden_b;   // hidden_dim
  std::vector<double> output_w;   // hidden_dim x num_classes
  std::vector<double> output_b;   // num_classes

  std::span<const double> embedding_row(TokenId id) const {
    return {embedding.data() + static_cast<std::size_t>(id) * embed_dim,
            static_cast<std::size_t>(embed_dim)};
  }
  bool trained() const { return embed_dim > 0 && !embedding.empty(); }

  bool operator==(const ClassifierModel&) const = default;
};

struct TrainConfig {
  int epochs = 20;
  int batch_size = 32;
  double learning_rate = 0.5;
  double lr_decay = 0.9;  // epoch e runs at lr * (1 - lr_decay * e / epochs)
  std::uint64_t seed = 7;
  int embed_dim = 32;
  int hidden_dim = 64;
  std::size_t vocab_max_size = 10000;
  std::size_t vocab_min_count = 1;
};

void validate(const TrainConfig& cfg);

// Intermediate activations, reused by backward passes and feature extraction.
struct ForwardTrace {
  std::vector<double> pooled;
  std::vector<double> hidden_pre;
  std::vector<double> hidden;
  std::vector<double> logits;
  std::vector<double> probs;
};

ForwardTrace run_forward(const ClassifierModel& m, std::span<const TokenId> tokens);

// Class probability vector (sums to 1).
std::vector<double> forward(const ClassifierModel& m, std::span<const TokenId> tokens);

// Per-position gradients of the cross-entropy loss w.r.t. the input token
// embeddings. Under mean pooling every position receives pooled/len.
struct EmbeddingGradient {
  std::vector<std::vector<double>> per_position;
  std::vector<double> pooled;  // gradient at the pooled vector
};

std::pair<double, EmbeddingGradient> loss_and_embedding_grads(
    const ClassifierModel& m, std::span<const TokenId> tokens, int label);

// Full gradient of the loss w.r.t. every parameter, for gradient checking.
struct ParameterGradients {
  double loss = 0.0;
  std::vector<double> hidden_w, hidden_b, output_w, output_b;
  std::vector<std::pair<TokenId, std::vector<double>>> embedding_rows;  // sorted by id
};

ParameterGradients loss_and_param_grads(const ClassifierModel& m,
                                        std::span<const TokenId> tokens, int label);

// Mini-batch SGD over the given examples. Deterministic in cfg.seed.
ClassifierModel train_on(const std::vector<LabeledText>& examples, int num_classes,
                         const TrainConfig& cfg);
ClassifierModel train_clean(const Dataset& ds, const TrainConfig& cfg);

int predict(const ClassifierModel& m, std::span<const TokenId> tokens);
std::vector<int> predict_batch(const ClassifierModel& m,
                               const std::vector<LabeledText>& texts);
std::vector<int> predict_batch(const ClassifierModel& m,
                               const std::vector<const LabeledText*>& texts);

// Post-ReLU hidden activations (penultimate layer).
std::vector<double> extract_features(const ClassifierModel& m,
                                     std::span<const TokenId> tokens);

// Versioned binary checkpoint; load(save(m)) reproduces m bit-exactly.
void save_model(const ClassifierModel& m, const std::string& path);
ClassifierModel load_model(const std::string& path);

}  // namespace estbad
