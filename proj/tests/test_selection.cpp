#include "doctest.h"

#include <algorithm>
#include <set>

#include "estbad/selection.hpp"
#include "test_support.hpp"

using namespace estbad;

TEST_CASE("cosine_similarity") {
  const std::vector<double> v = {0.3, -0.7, 2.0};
  CHECK(cosine_similarity(v, v) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cosine_similarity({1.0, 0.0}, {0.0, 1.0}) == 0.0);
  CHECK(cosine_similarity({1.0, 0.0}, {-1.0, 0.0}) == doctest::Approx(-1.0));

  bool warn = false;
  CHECK(cosine_similarity({0.0, 0.0}, {1.0, 1.0}, &warn) == 0.0);
  CHECK(warn);
  CHECK_THROWS_AS(cosine_similarity({1.0}, {1.0, 2.0}), ValidationError);
}

namespace {

struct ScoreFixture {
  Dataset train;
  ClassifierModel model;

  ScoreFixture() {
    SyntheticConfig syn;
    syn.vocab_size = 60;
    syn.train_size = 200;
    syn.test_size = 20;
    syn.seed = 3;
    auto [tr, te] = generate_synthetic(syn);
    train = std::move(tr);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.seed = 13;
    model = train_clean(train, cfg);
  }
};

}  // namespace

TEST_CASE("similarity_scores") {
  ScoreFixture fx;
  TriggerSpec spec{"trigword", InjectionMode::insert_random, 1};
  auto pool = fx.train.without_label(1);
  pool.resize(10);

  SUBCASE("matches a per-sample loop") {
    const auto scores = similarity_scores(fx.model, pool, spec, nullptr, 99);
    REQUIRE(scores.size() == pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
      Rng rng(Rng::mix(99, static_cast<std::uint64_t>(pool[i]->id)));
      const auto poisoned = inject_trigger(pool[i]->text, spec, nullptr, rng);
      const auto a = extract_features(fx.model, encode(pool[i]->text, fx.model.vocab));
      const auto b = extract_features(fx.model, encode(poisoned.text, fx.model.vocab));
      CHECK(scores[i].source_id == pool[i]->id);
      CHECK(scores[i].s == doctest::Approx(cosine_similarity(a, b)).epsilon(1e-12));
      CHECK(scores[i].s >= -1.0);
      CHECK(scores[i].s <= 1.0);
    }
  }

  SUBCASE("zero-norm features score 0 with a warning") {
    ClassifierModel dead = fx.model;
    std::fill(dead.hidden_w.begin(), dead.hidden_w.end(), 0.0);
    std::fill(dead.hidden_b.begin(), dead.hidden_b.end(), -1.0);  // ReLU kills everything
    const auto scores = similarity_scores(dead, pool, spec, nullptr, 99);
    for (const auto& s : scores) {
      CHECK(s.s == 0.0);
      CHECK(s.zero_norm_warning);
    }
  }
}

TEST_CASE("similarity_scores with a concurrent rewrite client is deterministic") {
  ScoreFixture fx;
  auto pool = fx.train.without_label(1);
  pool.resize(12);
  TriggerSpec spec{"trigword", InjectionMode::llm_rewrite, 1};

  // Stateless transport: a pure function of the prompt, safe to call from
  // any number of workers.
  auto transport = [](const std::string& prompt) -> std::optional<std::string> {
    return "trigword says: " + prompt;
  };
  RewriteOptions serial_opts;
  serial_opts.concurrency = 1;
  RewriteClient serial(serial_opts, transport);
  RewriteOptions wide_opts;
  wide_opts.concurrency = 4;
  RewriteClient wide(wide_opts, transport);

  const auto a = similarity_scores(fx.model, pool, spec, &serial, 5);
  const auto b = similarity_scores(fx.model, pool, spec, &wide, 5);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].source_id == b[i].source_id);
    CHECK(a[i].s == b[i].s);
  }
}

TEST_CASE("target_class_confidence matches forward probabilities") {
  ScoreFixture fx;
  auto pool = fx.train.without_label(1);
  pool.resize(8);
  const auto conf = target_class_confidence(fx.model, pool, 1);
  REQUIRE(conf.size() == pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto probs = forward(fx.model, encode(pool[i]->text, fx.model.vocab));
    CHECK(conf[i] == probs[1]);
  }
}

namespace {

std::vector<SimilarityScore> abc_scores() {
  return {{10, 0.9, false}, {11, 0.1, false}, {12, 0.5, false}};
}

}  // namespace

TEST_CASE("select") {
  const auto scores = abc_scores();
  const std::vector<double> no_conf;

  SUBCASE("budget zero yields an empty selection") {
    CHECK(select(scores, no_conf, {SelectKind::s3, Setting::dirty_label}, 0, 1).empty());
  }

  SUBCASE("budget equal to pool returns every id under any strategy") {
    for (SelectKind kind : {SelectKind::random, SelectKind::s3}) {
      const auto ids =
          select(scores, no_conf, {kind, Setting::dirty_label}, 3, 1);
      CHECK(std::set<std::int64_t>(ids.begin(), ids.end()) ==
            std::set<std::int64_t>{10, 11, 12});
    }
  }

  SUBCASE("s3 dirty takes descending similarity, clean ascending") {
    CHECK(select(scores, no_conf, {SelectKind::s3, Setting::dirty_label}, 2, 1) ==
          std::vector<std::int64_t>{10, 12});
    CHECK(select(scores, no_conf, {SelectKind::s3, Setting::clean_label}, 2, 1) ==
          std::vector<std::int64_t>{11, 12});
  }

  SUBCASE("over-budget raises BudgetError") {
    CHECK_THROWS_AS(select(scores, no_conf, {SelectKind::s3, Setting::dirty_label}, 4, 1),
                    BudgetError);
  }

  SUBCASE("random is seeded, without replacement, order independent of input order") {
    const auto a = select(scores, no_conf, {SelectKind::random, Setting::dirty_label}, 2, 7);
    const auto b = select(scores, no_conf, {SelectKind::random, Setting::dirty_label}, 2, 7);
    CHECK(a == b);
    auto reversed = scores;
    std::reverse(reversed.begin(), reversed.end());
    const auto c = select(reversed, no_conf, {SelectKind::random, Setting::dirty_label}, 2, 7);
    CHECK(a == c);
    CHECK(std::set<std::int64_t>(a.begin(), a.end()).size() == a.size());
  }

  SUBCASE("confidence picks the least target-confident, ties to smaller id") {
    const std::vector<double> conf = {0.4, 0.4, 0.1};
    const auto ids =
        select(scores, conf, {SelectKind::confidence, Setting::dirty_label}, 2, 1);
    CHECK(ids == std::vector<std::int64_t>{12, 10});
    CHECK_THROWS_AS(
        select(scores, no_conf, {SelectKind::confidence, Setting::dirty_label}, 1, 1),
        ConfigError);
  }

  SUBCASE("matches a full-sort oracle on large pools with ties") {
    Rng rng(2024);
    for (Setting setting : {Setting::dirty_label, Setting::clean_label}) {
      std::vector<SimilarityScore> pool;
      const std::size_t n = 1000;
      for (std::size_t i = 0; i < n; ++i) {
        // quantized scores force ties
        pool.push_back({static_cast<std::int64_t>(rng.index(5000)),
                        static_cast<double>(rng.index(20)) / 20.0, false});
      }
      const int budget = 137;
      const auto got = select(pool, {}, {SelectKind::s3, setting}, budget, 1);

      auto oracle = pool;
      std::stable_sort(oracle.begin(), oracle.end(),
                       [&](const SimilarityScore& a, const SimilarityScore& b) {
                         if (a.s != b.s) {
                           return setting == Setting::dirty_label ? a.s > b.s : a.s < b.s;
                         }
                         return a.source_id < b.source_id;
                       });
      std::vector<std::int64_t> want;
      for (int i = 0; i < budget; ++i) want.push_back(oracle[static_cast<std::size_t>(i)].source_id);
      CHECK(got == want);
    }
  }
}
