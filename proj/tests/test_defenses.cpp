#include "doctest.h"

#include <cmath>
#include <set>

#include "estbad/defenses.hpp"
#include "test_support.hpp"

using namespace estbad;

TEST_CASE("strip_filter: constant one-hot model is flagged") {
  ClassifierModel m = test_support::random_model(1, 30, 4, 4, 2);
  m.output_b = {120.0, -120.0};  // always class 0, regardless of input
  StripConfig cfg;
  cfg.entropy_threshold = 0.01;
  const StripResult res = strip_filter(m, "some words to perturb here", cfg, 5);
  CHECK(res.entropy < 1e-9);
  CHECK(res.flagged);
}

TEST_CASE("strip_filter: uniform model has entropy ln 2 and is not flagged") {
  ClassifierModel m = test_support::random_model(2, 30, 4, 4, 2);
  std::fill(m.output_w.begin(), m.output_w.end(), 0.0);
  std::fill(m.output_b.begin(), m.output_b.end(), 0.0);
  StripConfig cfg;
  std::vector<std::string> heldout;
  for (int i = 0; i < 50; ++i) heldout.push_back("w1 w2 w3 w4 w5");
  const double thr = calibrate_strip_threshold(m, heldout, cfg, 7);
  CHECK(thr == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  cfg.entropy_threshold = thr;
  const StripResult res = strip_filter(m, "w1 w2 w3 w4", cfg, 9);
  CHECK(res.entropy == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK_FALSE(res.flagged);  // strict inequality keeps the uniform model clean
}

TEST_CASE("strip calibration hits the target false-rejection rate") {
  SyntheticConfig syn;
  syn.train_size = 600;
  syn.test_size = 220;
  auto [train, test] = generate_synthetic(syn);
  TrainConfig tc;
  tc.epochs = 8;
  const ClassifierModel victim = train_clean(train, tc);

  StripConfig cfg;
  std::vector<std::string> heldout;
  for (int i = 0; i < 200; ++i) heldout.push_back(test.examples[static_cast<std::size_t>(i)].text);
  const std::uint64_t seed = 1234;
  cfg.entropy_threshold = calibrate_strip_threshold(victim, heldout, cfg, seed);

  int flagged = 0;
  for (std::size_t i = 0; i < heldout.size(); ++i) {
    flagged += strip_filter(victim, heldout[i], cfg, Rng::mix(seed, i)).flagged;
  }
  const double frr = static_cast<double>(flagged) / static_cast<double>(heldout.size());
  CHECK(frr == doctest::Approx(0.05).epsilon(0.25));  // percentile construction
}

TEST_CASE("strip_filter: state and determinism") {
  ClassifierModel m = test_support::random_model(3, 20, 4, 4, 2);
  StripConfig cfg;
  CHECK_THROWS_AS(strip_filter(m, "a b c", cfg, 1), StateError);

  cfg.entropy_threshold = 0.3;
  const StripResult a = strip_filter(m, "w1 w2 w3 w4 w5 w6", cfg, 17);
  const StripResult b = strip_filter(m, "w1 w2 w3 w4 w5 w6", cfg, 17);
  CHECK(a.entropy == b.entropy);
  CHECK(a.flagged == b.flagged);

  StripConfig bad;
  bad.copies = 1;
  bad.entropy_threshold = 0.1;
  CHECK_THROWS_AS(strip_filter(m, "a", bad, 1), ConfigError);
  bad = {};
  bad.perturb_fraction = 1.5;
  bad.entropy_threshold = 0.1;
  CHECK_THROWS_AS(strip_filter(m, "a", bad, 1), ConfigError);
}

namespace {

// Two-dimensional feature fixture: a broad bulk cluster plus an optional
// tight planted cluster far away.
std::pair<std::vector<std::vector<double>>, std::vector<int>> planted_features(
    std::size_t bulk, std::size_t planted, std::uint64_t seed) {
  std::vector<std::vector<double>> feats;
  std::vector<int> labels;
  Rng rng(seed);
  for (std::size_t i = 0; i < bulk; ++i) {
    feats.push_back({1.0 + rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2)});
    labels.push_back(0);
  }
  for (std::size_t i = 0; i < planted; ++i) {
    feats.push_back({rng.uniform(-0.02, 0.02), 1.0 + rng.uniform(-0.02, 0.02)});
    labels.push_back(0);
  }
  return {feats, labels};
}

}  // namespace

TEST_CASE("cube_filter_features") {
  SUBCASE("planted 1% outlier cluster is dropped") {
    auto [feats, labels] = planted_features(990, 10, 42);
    CubeConfig cfg;
    const CubeResult res = cube_filter_features(feats, labels, cfg, 7);
    // planted points live at indices 990..999
    std::size_t planted_dropped = 0;
    for (std::size_t idx : res.dropped) {
      if (idx >= 990) ++planted_dropped;
    }
    CHECK(planted_dropped >= 5);
    CHECK(res.dropped.size() <= feats.size() / 4);
  }

  SUBCASE("drop fraction zero never drops") {
    auto [feats, labels] = planted_features(200, 5, 43);
    CubeConfig cfg;
    cfg.drop_fraction = 0.0;
    const CubeResult res = cube_filter_features(feats, labels, cfg, 7);
    CHECK(res.dropped.empty());
    CHECK(res.retained.size() == feats.size());
  }

  SUBCASE("homogeneous data splits evenly and keeps everything") {
    auto [feats, labels] = planted_features(400, 0, 44);
    CubeConfig cfg;
    const CubeResult res = cube_filter_features(feats, labels, cfg, 7);
    CHECK(res.dropped.empty());
  }

  SUBCASE("k-means objective is non-increasing") {
    auto [feats, labels] = planted_features(300, 30, 45);
    CubeConfig cfg;
    const CubeResult res = cube_filter_features(feats, labels, cfg, 11);
    REQUIRE(res.objective_history.size() >= 2);
    for (std::size_t i = 1; i < res.objective_history.size(); ++i) {
      CHECK(res.objective_history[i] <= res.objective_history[i - 1] + 1e-12);
    }
  }

  SUBCASE("identical points produce an empty cluster and a warning") {
    std::vector<std::vector<double>> feats(8, std::vector<double>{1.0, 0.0});
    std::vector<int> labels(8, 0);
    CubeConfig cfg;
    const CubeResult res = cube_filter_features(feats, labels, cfg, 3);
    CHECK(res.degenerate_warning);
    CHECK(res.dropped.empty());
    CHECK(res.retained.size() == feats.size());
  }

  SUBCASE("retained plus dropped partitions the input, ascending") {
    auto [feats, labels] = planted_features(150, 20, 46);
    const CubeResult res = cube_filter_features(feats, labels, CubeConfig{}, 5);
    std::set<std::size_t> all;
    for (auto i : res.retained) all.insert(i);
    for (auto i : res.dropped) all.insert(i);
    CHECK(all.size() == feats.size());
    CHECK(std::is_sorted(res.retained.begin(), res.retained.end()));
  }

  SUBCASE("config validation") {
    auto [feats, labels] = planted_features(10, 0, 47);
    CubeConfig cfg;
    cfg.clusters = 1;
    CHECK_THROWS_AS(cube_filter_features(feats, labels, cfg, 1), ConfigError);
    cfg = {};
    cfg.drop_fraction = 2.0;
    CHECK_THROWS_AS(cube_filter_features(feats, labels, cfg, 1), ConfigError);
  }
}

TEST_CASE("cube_filter on a clean synthetic corpus keeps nearly everything") {
  SyntheticConfig syn;
  syn.train_size = 400;
  syn.test_size = 20;
  auto [train, test] = generate_synthetic(syn);
  TrainConfig tc;
  tc.epochs = 8;
  const ClassifierModel extractor = train_clean(train, tc);
  const CubeResult res = cube_filter(train.examples, extractor, CubeConfig{}, 99);
  CHECK(res.dropped.size() <= train.size() / 20);
}
