#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "memsel/sample.hpp"
#include "memsel/state_features.hpp"

namespace memsel {

class AgentNet;
class Segmenter;

// Indices of the L largest scores in rank order; ties go to the smaller index.
std::vector<std::size_t> select_top_l(std::span<const double> scores, std::size_t count);

struct MemoryBuffer {
  std::size_t capacity = 0;
  std::vector<Sample> samples;
};

// Memory becomes exactly the selected candidates, with enhanced versions
// substituted where `enhanced` has an entry for the candidate index.
MemoryBuffer update_memory(std::size_t capacity, std::span<const Sample> candidates,
                           std::span<const std::size_t> selected,
                           const std::map<std::size_t, Sample>& enhanced = {});

enum class GradientMode { kAnalytic, kFiniteDifference };

struct EnhanceConfig {
  double epsilon = 0.1;
  int steps = 1;
  double clamp_low = 0.0;
  double clamp_high = 1.0;
  GradientMode mode = GradientMode::kAnalytic;
  // Finite-difference mode: pixels probed and central-difference step.
  int fd_pixels = 64;
  double fd_step = 1e-4;
  std::uint64_t seed = 5;

  void validate() const;
};

// Everything the differentiable path of one sample holds fixed: per class,
// the superpixel assignment, the support graphs, I_c and g_c.
struct FrozenClassPath {
  int class_id = 0;
  std::vector<int> region_pixels;
  std::vector<int> assignment;
  int count = 0;
  std::vector<SuperpixelGraph> support;
  double iou = 0.0;
  double forget = 0.0;
};

struct FrozenStatePath {
  std::vector<FrozenClassPath> classes;
};

// Freezes the structure of candidate `index` of a stage snapshot.
FrozenStatePath freeze_state_path(const StageSnapshot& snapshot, std::size_t index,
                                  SampleKey owner);

// s^x with the frozen structure; the graph itself (vertices, distances,
// aggregation) is recomputed from the current pixels.
StateVector frozen_state(const Sample& x, const FrozenStatePath& path, const Segmenter& model,
                         const SinkhornConfig& sinkhorn);

// ∇_x q(s^x) as a (H*W*C) vector laid out like Sample::pixels. Transport
// plans and aggregation weights are frozen at x (envelope approximation).
Eigen::VectorXd score_pixel_gradient(const Sample& x, const FrozenStatePath& path,
                                     const Segmenter& model, const AgentNet& agent,
                                     const SinkhornConfig& sinkhorn);

// Central differences of q(frozen_state(x)) on a seeded subset of pixel
// entries; all other entries are zero.
Eigen::VectorXd finite_difference_pixel_gradient(const Sample& x, const FrozenStatePath& path,
                                                 const Segmenter& model, const AgentNet& agent,
                                                 const SinkhornConfig& sinkhorn,
                                                 const EnhanceConfig& config);

struct EnhanceResult {
  Sample sample;
  double score_before = 0.0;
  double score_after = 0.0;
  bool changed = false;
};

// x' = clamp(x + ε ∇_x q(s^x)) for the configured number of steps. Labels are
// never modified.
EnhanceResult enhance(const Sample& x, const FrozenStatePath& path, const Segmenter& model,
                      const AgentNet& agent, const EnhanceConfig& config,
                      const SinkhornConfig& sinkhorn);

}  // namespace memsel
