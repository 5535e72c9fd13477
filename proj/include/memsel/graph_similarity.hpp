#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "memsel/sample.hpp"

namespace memsel {

class Segmenter;

struct GraphConfig {
  // M, the number of superpixels per class region.
  int superpixels = 5;
  // λ: weight of SLIC-normalised coordinates against pixel features.
  double spatial_weight = 0.5;
  int kmeans_iterations = 20;
  std::uint64_t seed = 11;

  void validate() const;
  friend bool operator==(const GraphConfig&, const GraphConfig&) = default;
};

struct SinkhornConfig {
  double reg = 0.1;
  int iterations = 5;
  // Project the final plan onto the exact transport polytope. At small reg
  // plain iterations can leave marginal errors around 1e-4.
  bool round = false;

  // High-accuracy settings used as the reference for self-similarity.
  static SinkhornConfig reference() { return {0.01, 500, true}; }
  void validate() const;
  friend bool operator==(const SinkhornConfig&, const SinkhornConfig&) = default;
};

// Per-class multi-structure graph of one sample.
struct SuperpixelGraph {
  int class_id = 0;
  int sample_id = -1;
  Eigen::MatrixXd vertex_features;         // M x d, mean pixel feature per superpixel
  std::vector<Eigen::Vector2d> centroids;  // (x̄, ȳ) per superpixel
  Eigen::MatrixXd distance;                // M x M, d_se + d_sp
  Eigen::MatrixXd aggregated;              // M x d, aggregated vertices F̂
  std::vector<int> region_pixels;          // flat pixel indices of the class region
  std::vector<int> assignment;             // superpixel of each region pixel
  std::vector<int> sizes;                  // pixels per superpixel

  int num_vertices() const { return static_cast<int>(vertex_features.rows()); }
};

// Seeded k-means over rows [λ·coords/S, features] with S = sqrt(N/M).
// Throws DegenerateRegionError when there are fewer than M points.
std::vector<int> superpixels(const Eigen::MatrixXd& features,
                             std::span<const Eigen::Vector2d> coords, int count,
                             std::uint64_t seed, const GraphConfig& config);

// Builds a graph from an existing assignment, e.g. a frozen one.
SuperpixelGraph graph_from_assignment(const Eigen::MatrixXd& pixel_features, int width,
                                      int class_id, std::vector<int> region_pixels,
                                      std::vector<int> assignment, int count);

// Graph of the class-`class_id` region using `pixel_features` ((H*W) x d).
// Falls back to M' = region size for regions smaller than M.
SuperpixelGraph build_graph(const Sample& sample, int class_id,
                            const Eigen::MatrixXd& pixel_features, const GraphConfig& config);
SuperpixelGraph build_graph(const Sample& sample, int class_id, const Segmenter& model,
                            const GraphConfig& config);

// Row-normalised exp(-D).
Eigen::MatrixXd aggregation_weights(const Eigen::MatrixXd& distance);
Eigen::MatrixXd aggregate_vertices(const SuperpixelGraph& graph);

struct OTMatch {
  Eigen::MatrixXd cost;    // M_i x M_j, 1 - cosine
  Eigen::MatrixXd plan;    // A*
  Eigen::VectorXd u;
  Eigen::VectorXd v;
  Eigen::VectorXd log_u;
  Eigen::VectorXd log_v;
  Eigen::MatrixXd kernel;  // exp(-cost/reg); may underflow, log_u/log_v do not
  double reg = 0.0;
  int iterations = 0;
  double tc = 0.0;

  // max |row/col sum - uniform mass|
  double marginal_violation() const;
};

// 1 - cos(a_i, b_j); a zero vector has cosine 0 with everything.
Eigen::MatrixXd cosine_cost(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// Entropic OT with uniform marginals, solved in the log domain.
OTMatch sinkhorn(const Eigen::MatrixXd& cost, double reg, int iterations, bool round = false);

// Rounds an approximate plan to one with exactly the uniform marginals
// (Altschuler, Weed and Rigollet, 2017).
Eigen::MatrixXd round_to_uniform_marginals(const Eigen::MatrixXd& plan);
OTMatch sinkhorn_tc(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                    const SinkhornConfig& config);

// Mean of tc(a, b) and tc(b, a). A truncated Sinkhorn run is not symmetric
// in its arguments; averaging both directions makes Sim symmetric exactly.
double symmetric_tc(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                    const SinkhornConfig& config);

inline double similarity_from_tc(double tc) { return std::exp(-tc); }

// exp(-symmetric_tc) between the aggregated vertex sets of two graphs.
double similarity(const SuperpixelGraph& a, const SuperpixelGraph& b,
                  const SinkhornConfig& config);

}  // namespace memsel
