#include "estbad/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

namespace estbad {

std::vector<const LabeledText*> Dataset::with_label(int label) const {
  std::vector<const LabeledText*> out;
  for (const auto& ex : examples) {
    if (ex.label == label) out.push_back(&ex);
  }
  return out;
}

std::vector<const LabeledText*> Dataset::without_label(int label) const {
  std::vector<const LabeledText*> out;
  for (const auto& ex : examples) {
    if (ex.label != label) out.push_back(&ex);
  }
  return out;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (current.empty()) return;
    std::size_t begin = 0;
    std::size_t end = current.size();
    while (begin < end && std::ispunct(static_cast<unsigned char>(current[begin]))) ++begin;
    while (end > begin && std::ispunct(static_cast<unsigned char>(current[end - 1]))) --end;
    if (end > begin) tokens.emplace_back(current.substr(begin, end - begin));
    current.clear();
  };
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  flush();
  return tokens;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool looks_like_header(const std::string& text_field, const std::string& label_field) {
  auto lower = [](std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
  };
  const std::string t = lower(trim(text_field));
  const std::string l = lower(trim(label_field));
  return (t == "text" || t == "sentence") && l == "label";
}

}  // namespace

Dataset load_tsv(const std::string& path, int num_classes, const std::string& split) {
  if (num_classes < 2) throw ConfigError("load_tsv: num_classes must be >= 2");
  std::ifstream in(path);
  if (!in) throw ParseError("load_tsv: cannot open '" + path + "'");

  Dataset ds;
  ds.num_classes = num_classes;
  ds.split = split;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t tab = line.rfind('\t');
    if (tab == std::string::npos) {
      throw ParseError("load_tsv: line " + std::to_string(line_no) + ": missing tab separator");
    }
    const std::string text_field = line.substr(0, tab);
    const std::string label_field = trim(line.substr(tab + 1));
    if (line_no == 1 && looks_like_header(text_field, label_field)) continue;

    int label = 0;
    try {
      std::size_t used = 0;
      label = std::stoi(label_field, &used);
      if (used != label_field.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ParseError("load_tsv: line " + std::to_string(line_no) + ": label '" +
                       label_field + "' is not an integer");
    }
    if (label < 0 || label >= num_classes) {
      throw ValidationError("load_tsv: line " + std::to_string(line_no) + ": label " +
                            std::to_string(label) + " out of range [0, " +
                            std::to_string(num_classes) + ")");
    }
    if (trim(text_field).empty()) {
      throw ValidationError("load_tsv: line " + std::to_string(line_no) + ": empty text");
    }
    LabeledText ex;
    ex.text = text_field;
    ex.label = label;
    ex.id = static_cast<std::int64_t>(ds.examples.size());
    ds.examples.push_back(std::move(ex));
  }

  if (ds.examples.empty()) throw ValidationError("load_tsv: no examples in '" + path + "'");
  if (split == "train") {
    std::vector<bool> seen(static_cast<std::size_t>(num_classes), false);
    for (const auto& ex : ds.examples) seen[static_cast<std::size_t>(ex.label)] = true;
    for (int c = 0; c < num_classes; ++c) {
      if (!seen[static_cast<std::size_t>(c)]) {
        throw ValidationError("load_tsv: class " + std::to_string(c) +
                              " absent from train split");
      }
    }
  }
  return ds;
}

void save_tsv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("save_tsv: cannot open '" + path + "' for writing");
  for (const auto& ex : ds.examples) {
    out << ex.text << '\t' << ex.label << '\n';
  }
  if (!out) throw Error("save_tsv: write failed for '" + path + "'");
}

Vocabulary build_vocab(const std::vector<LabeledText>& examples, std::size_t max_size,
                       std::size_t min_count) {
  if (examples.empty()) throw ValidationError("build_vocab: empty dataset");
  if (max_size < 2) throw ConfigError("build_vocab: max_size must be >= 2");

  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& ex : examples) {
    for (auto& tok : tokenize(ex.text)) counts[tok] += 1;
  }

  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary v;
  for (const auto& [tok, cnt] : ranked) {
    if (cnt < min_count) break;
    if (v.id_to_token.size() >= max_size) break;
    v.token_to_id.emplace(tok, static_cast<TokenId>(v.id_to_token.size()));
    v.id_to_token.push_back(tok);
  }
  v.unk_id = static_cast<TokenId>(v.id_to_token.size());
  v.id_to_token.push_back("<unk>");
  v.pad_id = static_cast<TokenId>(v.id_to_token.size());
  v.id_to_token.push_back("<pad>");
  return v;
}

Vocabulary build_vocab(const Dataset& ds, std::size_t max_size, std::size_t min_count) {
  return build_vocab(ds.examples, max_size, min_count);
}

std::vector<TokenId> encode(const std::string& text, const Vocabulary& vocab) {
  std::vector<TokenId> ids;
  for (const auto& tok : tokenize(text)) ids.push_back(vocab.id_or_unk(tok));
  if (ids.empty()) ids.push_back(vocab.unk_id);
  return ids;
}

namespace {

// Pronounceable pseudo-words, enumerated deterministically.
std::string pseudo_word(std::size_t index) {
  static const char* consonants = "bdfgklmnprstvz";
  static const char* vowels = "aeiou";
  const std::size_t syllables = 14 * 5;
  std::string w;
  std::size_t rest = index;
  for (int s = 0; s < 3; ++s) {
    const std::size_t syl = rest % syllables;
    rest /= syllables;
    w.push_back(consonants[syl / 5]);
    w.push_back(vowels[syl % 5]);
    if (rest == 0 && s >= 1) break;
  }
  return w;
}

}  // namespace

std::pair<Dataset, Dataset> generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.vocab_size < 16) throw ConfigError("generate_synthetic: vocab_size must be >= 16");
  if (cfg.train_size < 4 || cfg.test_size < 4) {
    throw ConfigError("generate_synthetic: train_size and test_size must be >= 4");
  }
  if (cfg.class_skew <= 0.5 || cfg.class_skew > 1.0) {
    throw ConfigError("generate_synthetic: class_skew must be in (0.5, 1]");
  }
  if (cfg.sentence_min < 1 || cfg.sentence_max < cfg.sentence_min) {
    throw ConfigError("generate_synthetic: need 1 <= sentence_min <= sentence_max");
  }

  // Function words first; "the" seeds trigger optimization and
  // put/speaking/then appear in the offline rewrite frames.
  static const char* kBaseNeutral[] = {"the", "it",  "is",   "and",  "so",
                                       "put", "then", "very", "quite", "there",
                                       "speaking", "that", "this", "as", "of",
                                       "to",  "a",   "in",   "on",   "at"};
  const std::size_t base_count = std::size(kBaseNeutral);

  std::set<std::string> used;
  std::vector<std::string> neutral;
  const std::size_t want_neutral =
      std::max<std::size_t>(6, static_cast<std::size_t>(cfg.vocab_size) / 5);
  for (std::size_t i = 0; i < base_count && neutral.size() < want_neutral; ++i) {
    neutral.emplace_back(kBaseNeutral[i]);
    used.insert(kBaseNeutral[i]);
  }

  std::vector<std::string> class_words[2];
  const std::size_t total = static_cast<std::size_t>(cfg.vocab_size);
  std::size_t pseudo_index = 0;
  auto next_pseudo = [&] {
    std::string w;
    do {
      w = pseudo_word(pseudo_index++);
    } while (used.count(w) || w == "cf" || w == "qb");
    used.insert(w);
    return w;
  };
  while (neutral.size() < want_neutral) neutral.push_back(next_pseudo());
  const std::size_t class_total = total - neutral.size();
  const std::size_t class0_count = class_total / 2;
  while (class_words[0].size() < class0_count) class_words[0].push_back(next_pseudo());
  while (class_words[1].size() < class_total - class0_count) {
    class_words[1].push_back(next_pseudo());
  }

  auto make_split = [&](int count, std::uint64_t seed, const std::string& split) {
    Dataset ds;
    ds.num_classes = 2;
    ds.split = split;
    Rng rng(seed);
    std::vector<int> labels(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) labels[static_cast<std::size_t>(i)] = i % 2;
    rng.shuffle(labels);
    for (int i = 0; i < count; ++i) {
      const int label = labels[static_cast<std::size_t>(i)];
      const std::size_t len =
          static_cast<std::size_t>(cfg.sentence_min) +
          rng.index(static_cast<std::size_t>(cfg.sentence_max - cfg.sentence_min + 1));
      std::string text;
      for (std::size_t t = 0; t < len; ++t) {
        const std::string* word = nullptr;
        if (rng.uniform() < 0.05) {
          static const std::string kThe = "the";
          word = &kThe;
        } else if (rng.uniform() < 0.35) {
          word = &neutral[rng.index(neutral.size())];
        } else {
          const int own = label;
          const int pool = rng.uniform() < cfg.class_skew ? own : 1 - own;
          word = &class_words[pool][rng.index(class_words[pool].size())];
        }
        if (!text.empty()) text.push_back(' ');
        text += *word;
      }
      ds.examples.push_back({text, label, static_cast<std::int64_t>(i)});
    }
    return ds;
  };

  Dataset train = make_split(cfg.train_size, Rng::mix(cfg.seed, 1), "train");
  Dataset test = make_split(cfg.test_size, Rng::mix(cfg.seed, 2), "test");
  return {std::move(train), std::move(test)};
}

}  // namespace estbad
