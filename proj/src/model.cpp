#include "estbad/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace estbad {

void validate(const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
  if (cfg.lr_decay < 0.0 || cfg.lr_decay > 1.0) {
    throw ConfigError("train: lr_decay must be in [0, 1]");
  }
  if (cfg.embed_dim < 1 || cfg.hidden_dim < 1) {
    throw ConfigError("train: embed_dim and hidden_dim must be >= 1");
  }
}

ForwardTrace run_forward(const ClassifierModel& m, std::span<const TokenId> tokens) {
  if (tokens.empty()) throw ValidationError("forward: empty token sequence");
  const std::size_t d = static_cast<std::size_t>(m.embed_dim);
  const std::size_t h = static_cast<std::size_t>(m.hidden_dim);
  const std::size_t c = static_cast<std::size_t>(m.num_classes);

  ForwardTrace t;
  t.pooled.assign(d, 0.0);
  for (TokenId id : tokens) {
    if (static_cast<std::size_t>(id) >= m.vocab.size()) {
      throw ValidationError("forward: token id " + std::to_string(id) +
                            " outside vocabulary of size " + std::to_string(m.vocab.size()));
    }
    const auto row = m.embedding_row(id);
    for (std::size_t j = 0; j < d; ++j) t.pooled[j] += row[j];
  }
  const double inv_len = 1.0 / static_cast<double>(tokens.size());
  for (std::size_t j = 0; j < d; ++j) t.pooled[j] *= inv_len;

  t.hidden_pre.assign(h, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    const double x = t.pooled[j];
    const double* w = m.hidden_w.data() + j * h;
    for (std::size_t k = 0; k < h; ++k) t.hidden_pre[k] += x * w[k];
  }
  for (std::size_t k = 0; k < h; ++k) t.hidden_pre[k] += m.hidden_b[k];

  t.hidden.resize(h);
  for (std::size_t k = 0; k < h; ++k) t.hidden[k] = t.hidden_pre[k] > 0.0 ? t.hidden_pre[k] : 0.0;

  t.logits.assign(c, 0.0);
  for (std::size_t k = 0; k < h; ++k) {
    const double x = t.hidden[k];
    if (x == 0.0) continue;
    const double* w = m.output_w.data() + k * c;
    for (std::size_t y = 0; y < c; ++y) t.logits[y] += x * w[y];
  }
  for (std::size_t y = 0; y < c; ++y) t.logits[y] += m.output_b[y];

  const double max_logit = *std::max_element(t.logits.begin(), t.logits.end());
  double denom = 0.0;
  t.probs.resize(c);
  for (std::size_t y = 0; y < c; ++y) {
    t.probs[y] = std::exp(t.logits[y] - max_logit);
    denom += t.probs[y];
  }
  for (std::size_t y = 0; y < c; ++y) t.probs[y] /= denom;
  return t;
}

std::vector<double> forward(const ClassifierModel& m, std::span<const TokenId> tokens) {
  return run_forward(m, tokens).probs;
}

namespace {

// Shared backward pass. Fills dpooled; optionally accumulates parameter
// gradients (scaled by `scale`) for training.
struct ParamGrads {
  std::vector<double> hidden_w, hidden_b, output_w, output_b;
  // Embeddings are touched sparsely; scratch has vocab rows, touched lists ids.
  std::vector<double> embed_scratch;
  std::vector<TokenId> touched;
};

double backward(const ClassifierModel& m, std::span<const TokenId> tokens, int label,
                const ForwardTrace& t, std::vector<double>& dpooled, ParamGrads* pg,
                double scale) {
  const std::size_t d = static_cast<std::size_t>(m.embed_dim);
  const std::size_t h = static_cast<std::size_t>(m.hidden_dim);
  const std::size_t c = static_cast<std::size_t>(m.num_classes);
  if (label < 0 || static_cast<std::size_t>(label) >= c) {
    throw ValidationError("loss: label out of range");
  }

  // Numerically stable cross-entropy from logits.
  const double max_logit = *std::max_element(t.logits.begin(), t.logits.end());
  double lse = 0.0;
  for (double z : t.logits) lse += std::exp(z - max_logit);
  lse = max_logit + std::log(lse);
  const double loss = lse - t.logits[static_cast<std::size_t>(label)];

  std::vector<double> dlogits(t.probs);
  dlogits[static_cast<std::size_t>(label)] -= 1.0;

  std::vector<double> dhidden(h, 0.0);
  for (std::size_t k = 0; k < h; ++k) {
    const double* w = m.output_w.data() + k * c;
    double acc = 0.0;
    for (std::size_t y = 0; y < c; ++y) acc += w[y] * dlogits[y];
    dhidden[k] = t.hidden_pre[k] > 0.0 ? acc : 0.0;
  }

  dpooled.assign(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    const double* w = m.hidden_w.data() + j * h;
    double acc = 0.0;
    for (std::size_t k = 0; k < h; ++k) acc += w[k] * dhidden[k];
    dpooled[j] = acc;
  }

  if (pg != nullptr) {
    for (std::size_t k = 0; k < h; ++k) {
      const double g = dhidden[k] * scale;
      if (g != 0.0) {
        for (std::size_t j = 0; j < d; ++j) pg->hidden_w[j * h + k] += t.pooled[j] * g;
      }
      pg->hidden_b[k] += g;
    }
    for (std::size_t y = 0; y < c; ++y) {
      const double g = dlogits[y] * scale;
      pg->output_b[y] += g;
      for (std::size_t k = 0; k < h; ++k) {
        if (t.hidden[k] != 0.0) pg->output_w[k * c + y] += t.hidden[k] * g;
      }
    }
    const double per_pos = scale / static_cast<double>(tokens.size());
    for (TokenId id : tokens) {
      double* row = pg->embed_scratch.data() + static_cast<std::size_t>(id) * d;
      bool fresh = true;
      for (std::size_t j = 0; j < d; ++j) {
        if (row[j] != 0.0) {
          fresh = false;
          break;
        }
      }
      if (fresh) pg->touched.push_back(id);
      for (std::size_t j = 0; j < d; ++j) row[j] += dpooled[j] * per_pos;
    }
  }
  return loss;
}

}  // namespace

std::pair<double, EmbeddingGradient> loss_and_embedding_grads(
    const ClassifierModel& m, std::span<const TokenId> tokens, int label) {
  const ForwardTrace t = run_forward(m, tokens);
  EmbeddingGradient eg;
  const double loss = backward(m, tokens, label, t, eg.pooled, nullptr, 1.0);
  const std::size_t d = static_cast<std::size_t>(m.embed_dim);
  const double inv_len = 1.0 / static_cast<double>(tokens.size());
  eg.per_position.resize(tokens.size());
  for (auto& g : eg.per_position) {
    g.resize(d);
    for (std::size_t j = 0; j < d; ++j) g[j] = eg.pooled[j] * inv_len;
  }
  return {loss, std::move(eg)};
}

ParameterGradients loss_and_param_grads(const ClassifierModel& m,
                                        std::span<const TokenId> tokens, int label) {
  const std::size_t d = static_cast<std::size_t>(m.embed_dim);
  const std::size_t h = static_cast<std::size_t>(m.hidden_dim);
  const std::size_t c = static_cast<std::size_t>(m.num_classes);

  ParamGrads pg;
  pg.hidden_w.assign(d * h, 0.0);
  pg.hidden_b.assign(h, 0.0);
  pg.output_w.assign(h * c, 0.0);
  pg.output_b.assign(c, 0.0);
  pg.embed_scratch.assign(m.vocab.size() * d, 0.0);

  const ForwardTrace t = run_forward(m, tokens);
  std::vector<double> dpooled;
  ParameterGradients out;
  out.loss = backward(m, tokens, label, t, dpooled, &pg, 1.0);
  out.hidden_w = std::move(pg.hidden_w);
  out.hidden_b = std::move(pg.hidden_b);
  out.output_w = std::move(pg.output_w);
  out.output_b = std::move(pg.output_b);
  std::sort(pg.touched.begin(), pg.touched.end());
  pg.touched.erase(std::unique(pg.touched.begin(), pg.touched.end()), pg.touched.end());
  for (TokenId id : pg.touched) {
    const double* row = pg.embed_scratch.data() + static_cast<std::size_t>(id) * d;
    out.embedding_rows.emplace_back(id, std::vector<double>(row, row + d));
  }
  return out;
}

ClassifierModel train_on(const std::vector<LabeledText>& examples, int num_classes,
                         const TrainConfig& cfg) {
  validate(cfg);
  if (examples.empty()) throw ValidationError("train: empty dataset");

  ClassifierModel m;
  m.vocab = build_vocab(examples, cfg.vocab_max_size, cfg.vocab_min_count);
  m.embed_dim = cfg.embed_dim;
  m.hidden_dim = cfg.hidden_dim;
  m.num_classes = num_classes;
  m.rng_seed = cfg.seed;

  const std::size_t d = static_cast<std::size_t>(cfg.embed_dim);
  const std::size_t h = static_cast<std::size_t>(cfg.hidden_dim);
  const std::size_t c = static_cast<std::size_t>(num_classes);
  const std::size_t v = m.vocab.size();

  Rng rng(cfg.seed);
  auto init = [&](std::vector<double>& w, std::size_t n) {
    w.resize(n);
    for (auto& x : w) x = rng.uniform(-0.1, 0.1);
  };
  init(m.embedding, v * d);
  init(m.hidden_w, d * h);
  init(m.hidden_b, h);
  init(m.output_w, h * c);
  init(m.output_b, c);

  std::vector<std::vector<TokenId>> encoded;
  encoded.reserve(examples.size());
  for (const auto& ex : examples) encoded.push_back(encode(ex.text, m.vocab));

  ParamGrads pg;
  pg.hidden_w.assign(d * h, 0.0);
  pg.hidden_b.assign(h, 0.0);
  pg.output_w.assign(h * c, 0.0);
  pg.output_b.assign(c, 0.0);
  pg.embed_scratch.assign(v * d, 0.0);

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> dpooled;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.learning_rate *
                      (1.0 - cfg.lr_decay * static_cast<double>(epoch) /
                                 static_cast<double>(cfg.epochs));
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const double scale = 1.0 / static_cast<double>(stop - start);
      double batch_loss = 0.0;
      for (std::size_t i = start; i < stop; ++i) {
        const auto& tokens = encoded[order[i]];
        const ForwardTrace t = run_forward(m, tokens);
        batch_loss += backward(m, tokens, examples[order[i]].label, t, dpooled, &pg, scale);
      }
      if (!std::isfinite(batch_loss)) {
        throw TrainingError("training diverged (non-finite loss) at epoch " +
                            std::to_string(epoch + 1));
      }
      for (std::size_t i = 0; i < d * h; ++i) m.hidden_w[i] -= lr * pg.hidden_w[i];
      for (std::size_t i = 0; i < h; ++i) m.hidden_b[i] -= lr * pg.hidden_b[i];
      for (std::size_t i = 0; i < h * c; ++i) m.output_w[i] -= lr * pg.output_w[i];
      for (std::size_t i = 0; i < c; ++i) m.output_b[i] -= lr * pg.output_b[i];
      std::fill(pg.hidden_w.begin(), pg.hidden_w.end(), 0.0);
      std::fill(pg.hidden_b.begin(), pg.hidden_b.end(), 0.0);
      std::fill(pg.output_w.begin(), pg.output_w.end(), 0.0);
      std::fill(pg.output_b.begin(), pg.output_b.end(), 0.0);
      std::sort(pg.touched.begin(), pg.touched.end());
      pg.touched.erase(std::unique(pg.touched.begin(), pg.touched.end()), pg.touched.end());
      for (TokenId id : pg.touched) {
        double* grad = pg.embed_scratch.data() + static_cast<std::size_t>(id) * d;
        double* row = m.embedding.data() + static_cast<std::size_t>(id) * d;
        for (std::size_t j = 0; j < d; ++j) {
          row[j] -= lr * grad[j];
          grad[j] = 0.0;
        }
      }
      pg.touched.clear();
    }
  }

  std::size_t correct = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (predict(m, encoded[i]) == examples[i].label) ++correct;
  }
  m.final_train_accuracy = static_cast<double>(correct) / static_cast<double>(examples.size());
  return m;
}

ClassifierModel train_clean(const Dataset& ds, const TrainConfig& cfg) {
  return train_on(ds.examples, ds.num_classes, cfg);
}

int predict(const ClassifierModel& m, std::span<const TokenId> tokens) {
  const auto probs = forward(m, tokens);
  int best = 0;
  for (int y = 1; y < m.num_classes; ++y) {
    if (probs[static_cast<std::size_t>(y)] > probs[static_cast<std::size_t>(best)]) best = y;
  }
  return best;  // ties keep the smaller class index
}

std::vector<int> predict_batch(const ClassifierModel& m,
                               const std::vector<LabeledText>& texts) {
  std::vector<int> out(texts.size());
  parallel_for(texts.size(), [&](std::size_t i) {
    out[i] = predict(m, encode(texts[i].text, m.vocab));
  });
  return out;
}

std::vector<int> predict_batch(const ClassifierModel& m,
                               const std::vector<const LabeledText*>& texts) {
  std::vector<int> out(texts.size());
  parallel_for(texts.size(), [&](std::size_t i) {
    out[i] = predict(m, encode(texts[i]->text, m.vocab));
  });
  return out;
}

std::vector<double> extract_features(const ClassifierModel& m,
                                     std::span<const TokenId> tokens) {
  if (!m.trained()) throw StateError("extract_features: model not trained");
  return run_forward(m, tokens).hidden;
}

namespace {

constexpr char kMagic[8] = {'E', 'S', 'T', 'B', 'A', 'D', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::ifstream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
}

void write_doubles(std::ofstream& out, const std::vector<double>& v) {
  const std::uint64_t n = v.size();
  write_pod(out, n);
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
}

std::vector<double> read_doubles(std::ifstream& in) {
  std::uint64_t n = 0;
  read_pod(in, n);
  std::vector<double> v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  return v;
}

}  // namespace

void save_model(const ClassifierModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("save_model: cannot open '" + path + "'");
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kVersion);
  write_pod(out, static_cast<std::uint32_t>(m.embed_dim));
  write_pod(out, static_cast<std::uint32_t>(m.hidden_dim));
  write_pod(out, static_cast<std::uint32_t>(m.num_classes));
  write_pod(out, m.rng_seed);
  write_pod(out, m.final_train_accuracy);
  write_pod(out, static_cast<std::uint64_t>(m.vocab.content_size()));
  for (std::size_t i = 0; i < m.vocab.content_size(); ++i) {
    const std::string& tok = m.vocab.id_to_token[i];
    write_pod(out, static_cast<std::uint32_t>(tok.size()));
    out.write(tok.data(), static_cast<std::streamsize>(tok.size()));
  }
  write_doubles(out, m.embedding);
  write_doubles(out, m.hidden_w);
  write_doubles(out, m.hidden_b);
  write_doubles(out, m.output_w);
  write_doubles(out, m.output_b);
  if (!out) throw Error("save_model: write failed for '" + path + "'");
}

ClassifierModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("load_model: cannot open '" + path + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ParseError("load_model: bad magic in '" + path + "'");
  }
  std::uint32_t version = 0;
  read_pod(in, version);
  if (version != kVersion) {
    throw ParseError("load_model: unsupported version " + std::to_string(version));
  }
  ClassifierModel m;
  std::uint32_t d = 0, h = 0, c = 0;
  read_pod(in, d);
  read_pod(in, h);
  read_pod(in, c);
  read_pod(in, m.rng_seed);
  read_pod(in, m.final_train_accuracy);
  m.embed_dim = static_cast<int>(d);
  m.hidden_dim = static_cast<int>(h);
  m.num_classes = static_cast<int>(c);
  std::uint64_t content = 0;
  read_pod(in, content);
  for (std::uint64_t i = 0; i < content; ++i) {
    std::uint32_t len = 0;
    read_pod(in, len);
    std::string tok(len, '\0');
    in.read(tok.data(), len);
    m.vocab.token_to_id.emplace(tok, static_cast<TokenId>(m.vocab.id_to_token.size()));
    m.vocab.id_to_token.push_back(std::move(tok));
  }
  m.vocab.unk_id = static_cast<TokenId>(m.vocab.id_to_token.size());
  m.vocab.id_to_token.push_back("<unk>");
  m.vocab.pad_id = static_cast<TokenId>(m.vocab.id_to_token.size());
  m.vocab.id_to_token.push_back("<pad>");
  m.embedding = read_doubles(in);
  m.hidden_w = read_doubles(in);
  m.hidden_b = read_doubles(in);
  m.output_w = read_doubles(in);
  m.output_b = read_doubles(in);
  if (!in) throw ParseError("load_model: truncated checkpoint '" + path + "'");
  if (m.embedding.size() != m.vocab.size() * static_cast<std::size_t>(m.embed_dim)) {
    throw ParseError("load_model: inconsistent dimensions in '" + path + "'");
  }
  return m;
}

}  // namespace estbad
