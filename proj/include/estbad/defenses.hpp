#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "estbad/model.hpp"

namespace estbad {

// Inference-time filter: perturb the input several times and flag it when
// the victim stays suspiciously confident (low mean prediction entropy).
struct StripConfig {
  int copies = 20;
  double perturb_fraction = 0.3;
  double frr_target = 0.05;
  std::optional<double> entropy_threshold;  // set by calibration
};

struct StripResult {
  bool flagged = false;
  double entropy = 0.0;
};

// Empirical frr_target-quantile of mean entropies over a clean held-out set.
double calibrate_strip_threshold(const ClassifierModel& victim,
                                 const std::vector<std::string>& clean_texts,
                                 const StripConfig& cfg, std::uint64_t seed);

StripResult strip_filter(const ClassifierModel& victim, const std::string& text,
                         const StripConfig& cfg, std::uint64_t seed);

// Training-time filter: per-label spherical k-means over representations;
// small outlier clusters are dropped before retraining.
struct CubeConfig {
  int clusters = 2;
  double drop_fraction = 0.25;  // clusters below this size fraction are dropped
};

struct CubeResult {
  std::vector<std::size_t> retained;  // indices into the input, ascending
  std::vector<std::size_t> dropped;
  bool degenerate_warning = false;
  std::vector<double> objective_history;  // concatenated per-label k-means curves
};

CubeResult cube_filter_features(const std::vector<std::vector<double>>& features,
                                const std::vector<int>& labels, const CubeConfig& cfg,
                                std::uint64_t seed);

CubeResult cube_filter(const std::vector<LabeledText>& training,
                       const ClassifierModel& extractor, const CubeConfig& cfg,
                       std::uint64_t seed);

}  // namespace estbad
