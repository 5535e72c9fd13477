#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "memsel/sample.hpp"

namespace memsel {

struct WorldConfig {
  int num_classes = 10;
  int height = 16;
  int width = 16;
  int feature_dim = 3;
  int samples_per_class = 60;
  // Held-out samples per class used for final evaluation.
  int test_samples_per_class = 20;
  // 0 makes every sample of a class identical to its template.
  double intra_class_spread = 0.5;
  // Probability that a sample also contains a smaller object of another class.
  double secondary_prob = 0.3;
  // Probability that a sample is an atypical member of its class.
  double outlier_prob = 0.1;
  std::uint64_t seed = 1;

  void validate() const;
  friend bool operator==(const WorldConfig&, const WorldConfig&) = default;
};

// Fully labeled samples. `train` holds samples_per_class samples per class in
// class-major order; `test` is an independent held-out set.
struct World {
  WorldConfig config;
  std::vector<Sample> train;
  std::vector<Sample> test;
};

World generate_world(const WorldConfig& config);

// Ordered disjoint class sets C_1..C_T.
struct StagePartition {
  std::vector<std::vector<int>> stages;

  int num_stages() const { return static_cast<int>(stages.size()); }
  const std::vector<int>& classes(int t) const;  // 1-based
  std::vector<int> seen_through(int t) const;    // C_1 ∪ ... ∪ C_t, sorted
  std::vector<int> all_classes() const;

  // Union must be exactly `classes`, stages disjoint and non-empty, and C_1
  // must hold at least half of the classes.
  void validate(std::span<const int> classes) const;
  void validate(int num_classes) const;

  // `initial` classes in stage 1, then `increment` classes per stage.
  static StagePartition incremental(int num_classes, int initial, int increment);

  friend bool operator==(const StagePartition&, const StagePartition&) = default;
};

struct StageDataset {
  int stage_index = 0;
  std::vector<int> current_classes;
  std::vector<Sample> samples;
};

// Samples with at least one pixel of C_t, relabeled so that every pixel
// outside C_t is background.
StageDataset make_css_view(std::span<const Sample> samples, const StagePartition& partition,
                           int t);

// Copy of `sample` with every label outside `keep` set to 0.
Sample restrict_labels(const Sample& sample, std::span<const int> keep);

inline constexpr int kSplitRetryLimit = 100;

std::pair<StageDataset, StageDataset> split_train_reward(const StageDataset& d1,
                                                         double train_fraction,
                                                         std::uint64_t seed);

struct StageBounds {
  int min_stages = 2;
  int max_stages = 6;

  friend bool operator==(const StageBounds&, const StageBounds&) = default;
};

// Random partition with C_1 holding strictly more than half of `classes`.
StagePartition reallocate_classes(std::span<const int> classes, std::uint64_t seed,
                                  StageBounds bounds = {});

}  // namespace memsel
