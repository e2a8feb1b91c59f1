#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <set>

#include "estbad/corpus.hpp"
#include "test_support.hpp"

using namespace estbad;

TEST_CASE("tokenize lowercases, splits, strips punctuation") {
  const auto toks = tokenize("Even as lame horror flicks go, this is lame.");
  const std::vector<std::string> want = {"even", "as",   "lame", "horror", "flicks",
                                         "go",   "this", "is",   "lame"};
  CHECK(toks == want);
  CHECK(tokenize("  ") == std::vector<std::string>{});
  CHECK(tokenize("don't --- stop!") == std::vector<std::string>{"don't", "stop"});
}

TEST_CASE("load_tsv parses lines and validates labels") {
  auto dir = test_support::temp_dir("corpus");

  SUBCASE("three-line file with class counts") {
    auto path = test_support::write_temp(dir, "three.tsv",
                                         "good stuff\t0\nbad stuff\t1\nmore good\t0\n");
    Dataset ds = load_tsv(path, 2);
    REQUIRE(ds.size() == 3);
    int c0 = 0, c1 = 0;
    for (const auto& ex : ds.examples) (ex.label == 0 ? c0 : c1)++;
    CHECK(c0 == 2);
    CHECK(c1 == 1);
    CHECK(ds.examples[0].id == 0);
    CHECK(ds.examples[2].id == 2);
  }

  SUBCASE("sst2-scale file") {
    std::string content;
    for (int i = 0; i < 6920; ++i) {
      content += "sentence number " + std::to_string(i) + "\t" + std::to_string(i % 2) + "\n";
    }
    auto path = test_support::write_temp(dir, "big.tsv", content);
    CHECK(load_tsv(path, 2).size() == 6920);
  }

  SUBCASE("empty file") {
    auto path = test_support::write_temp(dir, "empty.tsv", "");
    CHECK_THROWS_WITH_AS(load_tsv(path, 2), doctest::Contains("no examples"),
                         ValidationError);
  }

  SUBCASE("malformed line reports the line number") {
    auto path = test_support::write_temp(dir, "bad.tsv", "fine\t0\nno tab here\n");
    CHECK_THROWS_WITH_AS(load_tsv(path, 2), doctest::Contains("line 2"), ParseError);
  }

  SUBCASE("label out of range") {
    auto path = test_support::write_temp(dir, "range.tsv", "text\t0\nanother\t5\n");
    CHECK_THROWS_AS(load_tsv(path, 2), ValidationError);
  }

  SUBCASE("non-integer label") {
    auto path = test_support::write_temp(dir, "alpha.tsv", "text\tzero\n");
    CHECK_THROWS_AS(load_tsv(path, 2), ParseError);
  }

  SUBCASE("header line is skipped") {
    auto path = test_support::write_temp(dir, "hdr.tsv", "text\tlabel\na\t0\nb\t1\n");
    CHECK(load_tsv(path, 2).size() == 2);
  }

  SUBCASE("train split must cover every class") {
    auto path = test_support::write_temp(dir, "onecls.tsv", "a\t0\nb\t0\n");
    CHECK_THROWS_AS(load_tsv(path, 2, "train"), ValidationError);
    CHECK(load_tsv(path, 2, "test").size() == 2);
  }
}

TEST_CASE("save_tsv round trips through load_tsv") {
  auto dir = test_support::temp_dir("roundtrip");
  SyntheticConfig cfg;
  cfg.vocab_size = 60;
  cfg.train_size = 40;
  cfg.test_size = 8;
  auto [train, test] = generate_synthetic(cfg);
  const auto path = (dir / "out.tsv").string();
  save_tsv(train, path);
  Dataset loaded = load_tsv(path, 2);
  REQUIRE(loaded.size() == train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    CHECK(loaded.examples[i].text == train.examples[i].text);
    CHECK(loaded.examples[i].label == train.examples[i].label);
  }
}

TEST_CASE("build_vocab ranks by frequency with lexicographic ties") {
  std::vector<LabeledText> corpus = {{"a b a", 0, 0}};
  Vocabulary v = build_vocab(corpus, 10);
  REQUIRE(v.content_size() == 2);
  CHECK(v.token_to_id.at("a") < v.token_to_id.at("b"));
  CHECK(v.unk_id != v.pad_id);

  SUBCASE("truncation to max_size") {
    std::vector<LabeledText> five = {{"q w e r t", 0, 0}};
    Vocabulary small = build_vocab(five, 2);
    CHECK(small.content_size() == 2);
    CHECK(small.size() == 4);
  }

  SUBCASE("equal counts break lexicographically") {
    std::vector<LabeledText> tied = {{"zeta alpha", 0, 0}};
    Vocabulary t = build_vocab(tied, 10);
    CHECK(t.token_to_id.at("alpha") < t.token_to_id.at("zeta"));
  }

  SUBCASE("min_count filters rare tokens") {
    std::vector<LabeledText> mix = {{"a a a b", 0, 0}};
    Vocabulary t = build_vocab(mix, 10, 2);
    CHECK(t.contains("a"));
    CHECK_FALSE(t.contains("b"));
  }

  SUBCASE("deterministic across calls") {
    SyntheticConfig cfg;
    cfg.vocab_size = 80;
    cfg.train_size = 60;
    cfg.test_size = 8;
    auto [train, test] = generate_synthetic(cfg);
    CHECK(build_vocab(train) == build_vocab(train));
  }
}

TEST_CASE("round trip: id_to_token inverts token_to_id") {
  SyntheticConfig cfg;
  cfg.vocab_size = 100;
  cfg.train_size = 120;
  cfg.test_size = 8;
  auto [train, test] = generate_synthetic(cfg);
  Vocabulary v = build_vocab(train);
  for (const auto& [tok, id] : v.token_to_id) {
    CHECK(v.id_to_token[id] == tok);
  }
}

TEST_CASE("encode maps text to ids") {
  std::vector<LabeledText> corpus = {
      {"even as lame horror flicks go this is lame extra words here", 0, 0}};
  Vocabulary v = build_vocab(corpus, 100);

  SUBCASE("benign sentence") {
    const auto ids = encode("Even as lame horror flicks go, this is lame.", v);
    std::vector<std::string> back;
    for (TokenId id : ids) back.push_back(v.token(id));
    const std::vector<std::string> want = {"even", "as",   "lame", "horror", "flicks",
                                           "go",   "this", "is",   "lame"};
    CHECK(back == want);
  }

  SUBCASE("empty input becomes a single UNK") {
    CHECK(encode("", v) == std::vector<TokenId>{v.unk_id});
    CHECK(encode("...", v) == std::vector<TokenId>{v.unk_id});
  }

  SUBCASE("out-of-vocabulary words all map to UNK") {
    const auto ids = encode("zzz yyy xxx", v);
    REQUIRE(ids.size() == 3);
    for (TokenId id : ids) CHECK(id == v.unk_id);
  }
}

TEST_CASE("synthetic corpus: sizes, coverage, determinism") {
  SyntheticConfig cfg;
  auto [train, test] = generate_synthetic(cfg);
  CHECK(train.size() == 2000);
  CHECK(test.size() == 500);
  CHECK(train.split == "train");
  CHECK(test.split == "test");

  std::set<std::int64_t> ids;
  int counts[2] = {0, 0};
  for (const auto& ex : train.examples) {
    ids.insert(ex.id);
    counts[ex.label]++;
    CHECK_FALSE(ex.text.empty());
  }
  CHECK(ids.size() == train.size());
  CHECK(counts[0] > 0);
  CHECK(counts[1] > 0);

  // target/non-target views partition the dataset
  for (int label : {0, 1}) {
    CHECK(train.with_label(label).size() + train.without_label(label).size() ==
          train.size());
  }

  Vocabulary v = build_vocab(train);
  CHECK(v.contains("the"));       // trigger search initializer
  CHECK_FALSE(v.contains("cf"));  // rare-word baselines stay out of vocabulary
  CHECK_FALSE(v.contains("qb"));

  auto [train2, test2] = generate_synthetic(cfg);
  REQUIRE(train2.size() == train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    CHECK(train2.examples[i].text == train.examples[i].text);
    CHECK(train2.examples[i].label == train.examples[i].label);
  }

  SyntheticConfig other = cfg;
  other.seed = cfg.seed + 1;
  auto [train3, test3] = generate_synthetic(other);
  bool any_differs = false;
  for (std::size_t i = 0; i < train.size() && !any_differs; ++i) {
    any_differs = train3.examples[i].text != train.examples[i].text;
  }
  CHECK(any_differs);
}

TEST_CASE("synthetic config validation") {
  SyntheticConfig cfg;
  cfg.vocab_size = 4;
  CHECK_THROWS_AS(generate_synthetic(cfg), ConfigError);
  cfg = {};
  cfg.class_skew = 0.4;
  CHECK_THROWS_AS(generate_synthetic(cfg), ConfigError);
  cfg = {};
  cfg.sentence_min = 8;
  cfg.sentence_max = 4;
  CHECK_THROWS_AS(generate_synthetic(cfg), ConfigError);
}
