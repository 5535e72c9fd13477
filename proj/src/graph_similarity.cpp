#include "memsel/graph_similarity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "memsel/errors.hpp"
#include "memsel/rng.hpp"
#include "memsel/segmenter.hpp"

namespace memsel {

void GraphConfig::validate() const {
  if (superpixels < 1) throw ConfigError("graph.superpixels must be >= 1");
  if (!(spatial_weight >= 0.0)) throw ConfigError("graph.spatial_weight must be >= 0");
  if (kmeans_iterations < 1) throw ConfigError("graph.kmeans_iterations must be >= 1");
}

void SinkhornConfig::validate() const {
  if (!(reg > 0.0)) throw ConfigError("sinkhorn.reg must be > 0");
  if (iterations < 1) throw ConfigError("sinkhorn.iterations must be >= 1");
}

namespace {

int nearest(const Eigen::MatrixXd& centers, const Eigen::RowVectorXd& point, double* dist) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < centers.rows(); ++k) {
    const double d = (centers.row(k) - point).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  if (dist != nullptr) *dist = best_d;
  return best;
}

}  // namespace

std::vector<int> superpixels(const Eigen::MatrixXd& features,
                             std::span<const Eigen::Vector2d> coords, int count,
                             std::uint64_t seed, const GraphConfig& config) {
  const auto n = static_cast<int>(features.rows());
  if (static_cast<int>(coords.size()) != n) throw ArgumentError("coords/features size mismatch");
  if (count < 1) throw ArgumentError("superpixel count must be >= 1");
  if (n < count) {
    throw DegenerateRegionError("region of " + std::to_string(n) + " pixels is smaller than " +
                                    std::to_string(count) + " superpixels",
                                n);
  }
  const double step = std::sqrt(static_cast<double>(n) / count);
  const double w = config.spatial_weight / step;
  Eigen::MatrixXd points(n, features.cols() + 2);
  for (int i = 0; i < n; ++i) {
    points(i, 0) = w * coords[i].x();
    points(i, 1) = w * coords[i].y();
    points.row(i).tail(features.cols()) = features.row(i);
  }

  // k-means++ seeding.
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::MatrixXd centers(count, points.cols());
  std::vector<char> chosen(n, 0);
  int first = std::uniform_int_distribution<int>(0, n - 1)(rng);
  centers.row(0) = points.row(first);
  chosen[first] = 1;
  std::vector<double> d2(n);
  for (int k = 1; k < count; ++k) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      nearest(centers.topRows(k), points.row(i), &d2[i]);
      if (chosen[i]) d2[i] = 0.0;
      total += d2[i];
    }
    int pick = -1;
    if (total > 0.0) {
      double r = unit(rng) * total;
      for (int i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        pick = i;
        r -= d2[i];
        if (r <= 0.0) break;
      }
    }
    if (pick < 0) {
      for (int i = 0; i < n; ++i) {
        if (!chosen[i]) {
          pick = i;
          break;
        }
      }
    }
    centers.row(k) = points.row(pick);
    chosen[pick] = 1;
  }

  std::vector<int> assign(n, -1);
  for (int iter = 0; iter < config.kmeans_iterations; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      const int a = nearest(centers, points.row(i), nullptr);
      if (a != assign[i]) {
        assign[i] = a;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(count, points.cols());
    std::vector<int> sizes(count, 0);
    for (int i = 0; i < n; ++i) {
      sums.row(assign[i]) += points.row(i);
      ++sizes[assign[i]];
    }
    for (int k = 0; k < count; ++k) {
      if (sizes[k] > 0) centers.row(k) = sums.row(k) / sizes[k];
    }
  }

  // Repair empty clusters by splitting off the farthest point of the largest.
  for (;;) {
    std::vector<int> sizes(count, 0);
    for (int a : assign) ++sizes[a];
    const auto empty = std::find(sizes.begin(), sizes.end(), 0);
    if (empty == sizes.end()) break;
    const int target = static_cast<int>(empty - sizes.begin());
    const int largest = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(points.cols());
    for (int i = 0; i < n; ++i) {
      if (assign[i] == largest) mean += points.row(i);
    }
    mean /= sizes[largest];
    int far = -1;
    double far_d = -1.0;
    for (int i = 0; i < n; ++i) {
      if (assign[i] != largest) continue;
      const double d = (points.row(i) - mean).squaredNorm();
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    assign[far] = target;
  }
  return assign;
}

SuperpixelGraph graph_from_assignment(const Eigen::MatrixXd& pixel_features, int width,
                                      int class_id, std::vector<int> region_pixels,
                                      std::vector<int> assignment, int count) {
  SuperpixelGraph g;
  g.class_id = class_id;
  const auto d = pixel_features.cols();
  g.vertex_features = Eigen::MatrixXd::Zero(count, d);
  g.centroids.assign(count, Eigen::Vector2d::Zero());
  g.sizes.assign(count, 0);
  for (std::size_t i = 0; i < region_pixels.size(); ++i) {
    const int p = region_pixels[i];
    const int m = assignment[i];
    g.vertex_features.row(m) += pixel_features.row(p);
    g.centroids[m] += Eigen::Vector2d(p % width, p / width);
    ++g.sizes[m];
  }
  for (int m = 0; m < count; ++m) {
    if (g.sizes[m] == 0) throw InvariantError("empty superpixel in graph construction");
    g.vertex_features.row(m) /= g.sizes[m];
    g.centroids[m] /= g.sizes[m];
  }

  Eigen::MatrixXd se = Eigen::MatrixXd::Zero(count, count);
  Eigen::MatrixXd sp = Eigen::MatrixXd::Zero(count, count);
  for (int i = 0; i < count; ++i) {
    for (int j = i + 1; j < count; ++j) {
      se(i, j) = se(j, i) = (g.vertex_features.row(i) - g.vertex_features.row(j)).norm();
      sp(i, j) = sp(j, i) = (g.centroids[i] - g.centroids[j]).norm();
    }
  }
  // Min-max over off-diagonal pairs; a constant matrix normalises to zeros.
  auto normalise = [count](Eigen::MatrixXd& m) {
    if (count < 2) return;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < count; ++i) {
      for (int j = 0; j < count; ++j) {
        if (i == j) continue;
        lo = std::min(lo, m(i, j));
        hi = std::max(hi, m(i, j));
      }
    }
    const double range = hi - lo;
    for (int i = 0; i < count; ++i) {
      for (int j = 0; j < count; ++j) {
        m(i, j) = (i == j || range <= 1e-12) ? 0.0 : (m(i, j) - lo) / range;
      }
    }
  };
  normalise(se);
  normalise(sp);
  g.distance = se + sp;
  g.region_pixels = std::move(region_pixels);
  g.assignment = std::move(assignment);
  g.aggregated = aggregate_vertices(g);
  return g;
}

SuperpixelGraph build_graph(const Sample& sample, int class_id,
                            const Eigen::MatrixXd& pixel_features, const GraphConfig& config) {
  std::vector<int> region;
  for (int p = 0; p < sample.num_pixels(); ++p) {
    if (sample.labels[p] == class_id) region.push_back(p);
  }
  if (region.empty()) {
    throw ArgumentError("class " + std::to_string(class_id) + " is absent from sample " +
                        std::to_string(sample.id));
  }
  const auto n = static_cast<int>(region.size());
  Eigen::MatrixXd feats(n, pixel_features.cols());
  std::vector<Eigen::Vector2d> coords(n);
  for (int i = 0; i < n; ++i) {
    feats.row(i) = pixel_features.row(region[i]);
    coords[i] = Eigen::Vector2d(region[i] % sample.width, region[i] / sample.width);
  }
  const std::uint64_t seed = derive_seed(
      config.seed, {static_cast<std::uint64_t>(sample.id), static_cast<std::uint64_t>(class_id)});
  int count = config.superpixels;
  std::vector<int> assign;
  try {
    assign = superpixels(feats, coords, count, seed, config);
  } catch (const DegenerateRegionError& e) {
    count = e.region_size();
    assign = superpixels(feats, coords, count, seed, config);
  }
  SuperpixelGraph g = graph_from_assignment(pixel_features, sample.width, class_id,
                                            std::move(region), std::move(assign), count);
  g.sample_id = sample.id;
  return g;
}

SuperpixelGraph build_graph(const Sample& sample, int class_id, const Segmenter& model,
                            const GraphConfig& config) {
  return build_graph(sample, class_id, model.pixel_features(sample), config);
}

Eigen::MatrixXd aggregation_weights(const Eigen::MatrixXd& distance) {
  Eigen::MatrixXd w = (-distance.array()).exp().matrix();
  for (Eigen::Index r = 0; r < w.rows(); ++r) w.row(r) /= w.row(r).sum();
  return w;
}

Eigen::MatrixXd aggregate_vertices(const SuperpixelGraph& graph) {
  return aggregation_weights(graph.distance) * graph.vertex_features;
}

double OTMatch::marginal_violation() const {
  const double a = 1.0 / static_cast<double>(plan.rows());
  const double b = 1.0 / static_cast<double>(plan.cols());
  const double rows = (plan.rowwise().sum().array() - a).abs().maxCoeff();
  const double cols = (plan.colwise().sum().array() - b).abs().maxCoeff();
  return std::max(rows, cols);
}

Eigen::MatrixXd cosine_cost(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd cost(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double na = a.row(i).norm();
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      const double nb = b.row(j).norm();
      const double cos = (na > 0.0 && nb > 0.0) ? a.row(i).dot(b.row(j)) / (na * nb) : 0.0;
      cost(i, j) = 1.0 - std::clamp(cos, -1.0, 1.0);
    }
  }
  return cost;
}

OTMatch sinkhorn(const Eigen::MatrixXd& cost, double reg, int iterations, bool round) {
  if (cost.rows() == 0 || cost.cols() == 0) throw ArgumentError("empty vertex set in OT");
  if (!(reg > 0.0)) throw ArgumentError("entropic regularisation must be > 0");
  const Eigen::Index n = cost.rows();
  const Eigen::Index m = cost.cols();
  const double log_a = -std::log(static_cast<double>(n));
  const double log_b = -std::log(static_cast<double>(m));
  const Eigen::MatrixXd log_k = -cost / reg;

  Eigen::VectorXd f = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(m);
  auto lse = [](const auto& x) {
    const double top = x.maxCoeff();
    return top + std::log((x.array() - top).exp().sum());
  };
  for (int it = 0; it < iterations; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) {
      f(i) = log_a - lse((log_k.row(i).transpose() + g).eval());
    }
    for (Eigen::Index j = 0; j < m; ++j) {
      g(j) = log_b - lse((log_k.col(j) + f).eval());
    }
  }

  OTMatch out;
  out.cost = cost;
  out.reg = reg;
  out.iterations = iterations;
  out.log_u = f;
  out.log_v = g;
  out.u = f.array().exp().matrix();
  out.v = g.array().exp().matrix();
  out.kernel = log_k.array().exp().matrix();
  out.plan.resize(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) out.plan(i, j) = std::exp(f(i) + log_k(i, j) + g(j));
  }
  if (round) out.plan = round_to_uniform_marginals(out.plan);
  out.tc = (out.plan.array() * cost.array()).sum();
  return out;
}

Eigen::MatrixXd round_to_uniform_marginals(const Eigen::MatrixXd& plan) {
  const Eigen::Index n = plan.rows();
  const Eigen::Index m = plan.cols();
  const double a = 1.0 / static_cast<double>(n);
  const double b = 1.0 / static_cast<double>(m);
  Eigen::MatrixXd x = plan;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = x.row(i).sum();
    if (s > a) x.row(i) *= a / s;
  }
  for (Eigen::Index j = 0; j < m; ++j) {
    const double s = x.col(j).sum();
    if (s > b) x.col(j) *= b / s;
  }
  const Eigen::VectorXd err_r = (a - x.rowwise().sum().array()).max(0.0).matrix();
  const Eigen::RowVectorXd err_c = (b - x.colwise().sum().array()).max(0.0).matrix();
  const double mass = err_r.sum();
  if (mass > 0.0) x += err_r * err_c / mass;
  return x;
}

OTMatch sinkhorn_tc(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                    const SinkhornConfig& config) {
  return sinkhorn(cosine_cost(a, b), config.reg, config.iterations, config.round);
}

double symmetric_tc(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                    const SinkhornConfig& config) {
  const double forward = sinkhorn_tc(a, b, config).tc;
  const double backward = sinkhorn_tc(b, a, config).tc;
  return 0.5 * (forward + backward);
}

double similarity(const SuperpixelGraph& a, const SuperpixelGraph& b,
                  const SinkhornConfig& config) {
  return similarity_from_tc(symmetric_tc(a.aggregated, b.aggregated, config));
}

}  // namespace memsel
