#include "estbad/defenses.hpp"

#include <algorithm>
#include <cmath>

namespace estbad {

namespace {

void validate(const StripConfig& cfg) {
  if (cfg.copies < 2) throw ConfigError("strip: copies must be >= 2");
  if (!(cfg.perturb_fraction > 0.0 && cfg.perturb_fraction < 1.0)) {
    throw ConfigError("strip: perturb_fraction must be in (0, 1)");
  }
  if (!(cfg.frr_target > 0.0 && cfg.frr_target < 1.0)) {
    throw ConfigError("strip: frr_target must be in (0, 1)");
  }
}

double mean_perturbed_entropy(const ClassifierModel& victim, const std::string& text,
                              const StripConfig& cfg, std::uint64_t seed) {
  const std::vector<TokenId> base = encode(text, victim.vocab);
  const std::size_t len = base.size();
  std::size_t replace = static_cast<std::size_t>(
      std::llround(cfg.perturb_fraction * static_cast<double>(len)));
  replace = std::clamp<std::size_t>(replace, 1, len);
  const std::size_t content = victim.vocab.content_size();

  std::vector<double> entropies(static_cast<std::size_t>(cfg.copies));
  for (int copy = 0; copy < cfg.copies; ++copy) {
    Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(copy)));
    std::vector<TokenId> perturbed = base;
    for (std::size_t pos : rng.sample_indices(len, replace)) {
      perturbed[pos] = static_cast<TokenId>(rng.index(content));
    }
    const auto probs = forward(victim, perturbed);
    double h = 0.0;
    for (double p : probs) {
      if (p > 0.0) h -= p * std::log(p);
    }
    entropies[static_cast<std::size_t>(copy)] = h;
  }
  double mean = 0.0;
  for (double h : entropies) mean += h;
  return mean / static_cast<double>(cfg.copies);
}

}  // namespace

double calibrate_strip_threshold(const ClassifierModel& victim,
                                 const std::vector<std::string>& clean_texts,
                                 const StripConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  if (clean_texts.empty()) throw ValidationError("strip calibration: empty held-out set");
  std::vector<double> entropies(clean_texts.size());
  parallel_for(clean_texts.size(), [&](std::size_t i) {
    entropies[i] = mean_perturbed_entropy(victim, clean_texts[i], cfg,
                                          Rng::mix(seed, static_cast<std::uint64_t>(i)));
  });
  std::sort(entropies.begin(), entropies.end());
  const std::size_t k = static_cast<std::size_t>(
      cfg.frr_target * static_cast<double>(entropies.size()));
  return entropies[std::min(k, entropies.size() - 1)];
}

StripResult strip_filter(const ClassifierModel& victim, const std::string& text,
                         const StripConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  if (!cfg.entropy_threshold.has_value()) {
    throw StateError("strip_filter: entropy threshold not calibrated");
  }
  StripResult res;
  res.entropy = mean_perturbed_entropy(victim, text, cfg, seed);
  res.flagged = res.entropy < *cfg.entropy_threshold;
  return res;
}

namespace {

std::vector<double> normalized(const std::vector<double>& v) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  std::vector<double> out(v.size(), 0.0);
  if (norm > 0.0) {
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / norm;
  }
  return out;
}

double cos_unit(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return dot;
}

struct LabelClustering {
  std::vector<int> assignment;
  std::vector<std::size_t> sizes;
  std::vector<double> objective_history;
};

// Spherical k-means with k-means++ style seeding; cosine distance 1 - cos.
LabelClustering spherical_kmeans(const std::vector<std::vector<double>>& points,
                                 int k, Rng& rng) {
  const std::size_t n = points.size();
  const std::size_t dim = points[0].size();
  std::vector<std::vector<double>> centroids;
  centroids.reserve(static_cast<std::size_t>(k));

  std::vector<double> dist(n, 1.0);
  centroids.push_back(points[rng.index(n)]);
  while (centroids.size() < static_cast<std::size_t>(k)) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = dist[i];
      const double d = 1.0 - cos_unit(points[i], centroids.back());
      if (centroids.size() == 1 || d < best) best = d;
      dist[i] = std::max(0.0, best);
      total += dist[i] * dist[i];
    }
    std::size_t chosen = 0;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += dist[i] * dist[i];
        if (acc >= target) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = rng.index(n);
    }
    centroids.push_back(points[chosen]);
  }

  LabelClustering out;
  out.assignment.assign(n, 0);
  constexpr int kMaxIterations = 50;
  for (int iter = 0; iter < kMaxIterations; ++iter) {
    bool changed = false;
    double objective = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_cos = cos_unit(points[i], centroids[0]);
      for (int c = 1; c < k; ++c) {
        const double cs = cos_unit(points[i], centroids[static_cast<std::size_t>(c)]);
        if (cs > best_cos) {
          best_cos = cs;
          best = c;
        }
      }
      objective += 1.0 - best_cos;
      if (out.assignment[i] != best) {
        out.assignment[i] = best;
        changed = true;
      }
    }
    out.objective_history.push_back(objective);
    if (!changed && iter > 0) break;

    std::vector<std::vector<double>> sums(static_cast<std::size_t>(k),
                                          std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(out.assignment[i]);
      counts[c] += 1;
      for (std::size_t j = 0; j < dim; ++j) sums[c][j] += points[i][j];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] == 0) continue;  // keep previous centroid
      centroids[static_cast<std::size_t>(c)] = normalized(sums[static_cast<std::size_t>(c)]);
    }
  }

  out.sizes.assign(static_cast<std::size_t>(k), 0);
  for (int a : out.assignment) out.sizes[static_cast<std::size_t>(a)] += 1;
  return out;
}

}  // namespace

CubeResult cube_filter_features(const std::vector<std::vector<double>>& features,
                                const std::vector<int>& labels, const CubeConfig& cfg,
                                std::uint64_t seed) {
  if (cfg.clusters < 2) throw ConfigError("cube: clusters must be >= 2");
  if (cfg.drop_fraction < 0.0 || cfg.drop_fraction > 1.0) {
    throw ConfigError("cube: drop_fraction must be in [0, 1]");
  }
  if (features.size() != labels.size()) {
    throw ValidationError("cube: features and labels must align");
  }

  CubeResult res;
  if (features.empty()) return res;

  std::vector<int> distinct(labels);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  std::vector<bool> keep(features.size(), true);
  for (int label : distinct) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == label) members.push_back(i);
    }
    if (members.size() <= static_cast<std::size_t>(cfg.clusters)) {
      res.degenerate_warning = true;
      continue;
    }
    std::vector<std::vector<double>> points;
    points.reserve(members.size());
    for (std::size_t i : members) points.push_back(normalized(features[i]));

    Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(label)));
    const LabelClustering clustering = spherical_kmeans(points, cfg.clusters, rng);
    for (double obj : clustering.objective_history) res.objective_history.push_back(obj);

    if (std::find(clustering.sizes.begin(), clustering.sizes.end(), std::size_t{0}) !=
        clustering.sizes.end()) {
      res.degenerate_warning = true;
      continue;  // empty cluster: leave this label untouched
    }
    const std::size_t largest = static_cast<std::size_t>(
        std::max_element(clustering.sizes.begin(), clustering.sizes.end()) -
        clustering.sizes.begin());
    for (std::size_t m = 0; m < members.size(); ++m) {
      const auto cluster = static_cast<std::size_t>(clustering.assignment[m]);
      if (cluster == largest) continue;
      const double fraction = static_cast<double>(clustering.sizes[cluster]) /
                              static_cast<double>(members.size());
      if (fraction < cfg.drop_fraction) keep[members[m]] = false;
    }
  }

  for (std::size_t i = 0; i < keep.size(); ++i) {
    (keep[i] ? res.retained : res.dropped).push_back(i);
  }
  return res;
}

CubeResult cube_filter(const std::vector<LabeledText>& training,
                       const ClassifierModel& extractor, const CubeConfig& cfg,
                       std::uint64_t seed) {
  std::vector<std::vector<double>> features(training.size());
  parallel_for(training.size(), [&](std::size_t i) {
    features[i] = extract_features(extractor, encode(training[i].text, extractor.vocab));
  });
  std::vector<int> labels(training.size());
  for (std::size_t i = 0; i < training.size(); ++i) labels[i] = training[i].label;
  return cube_filter_features(features, labels, cfg, seed);
}

}  // namespace estbad
