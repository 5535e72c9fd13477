#include "memsel/policy_actions.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "memsel/agent.hpp"
#include "memsel/errors.hpp"
#include "memsel/log.hpp"
#include "memsel/rng.hpp"
#include "memsel/segmenter.hpp"

namespace memsel {

std::vector<std::size_t> select_top_l(std::span<const double> scores, std::size_t count) {
  for (double s : scores) {
    if (!std::isfinite(s)) throw ArgumentError("selection scores must be finite");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(std::min(count, order.size()));
  return order;
}

MemoryBuffer update_memory(std::size_t capacity, std::span<const Sample> candidates,
                           std::span<const std::size_t> selected,
                           const std::map<std::size_t, Sample>& enhanced) {
  if (selected.size() > capacity) {
    throw ArgumentError("selected " + std::to_string(selected.size()) +
                        " samples for a memory of capacity " + std::to_string(capacity));
  }
  std::set<std::size_t> seen;
  MemoryBuffer out;
  out.capacity = capacity;
  for (std::size_t i : selected) {
    if (i >= candidates.size()) throw ArgumentError("selected index out of range");
    if (!seen.insert(i).second) throw ArgumentError("duplicate selected index " + std::to_string(i));
    const auto it = enhanced.find(i);
    out.samples.push_back(it == enhanced.end() ? candidates[i] : it->second);
  }
  return out;
}

void EnhanceConfig::validate() const {
  if (!(epsilon >= 0.0)) throw ConfigError("enhance.epsilon must be >= 0");
  if (steps < 1) throw ConfigError("enhance.steps must be >= 1");
  if (!(clamp_low < clamp_high)) throw ConfigError("enhance clamp range is empty");
  if (fd_pixels < 1 || !(fd_step > 0.0)) throw ConfigError("invalid finite-difference settings");
}

FrozenStatePath freeze_state_path(const StageSnapshot& snapshot, std::size_t index,
                                  SampleKey owner) {
  FrozenStatePath path;
  const CandidateState& st = snapshot.states.at(index);
  for (const ClassTerms& t : st.terms) {
    const SuperpixelGraph& g = snapshot.graphs.at(index).at(t.class_id);
    FrozenClassPath c;
    c.class_id = t.class_id;
    c.region_pixels = g.region_pixels;
    c.assignment = g.assignment;
    c.count = g.num_vertices();
    c.support = support_excluding(snapshot.supports.at(t.class_id), owner);
    c.iou = t.iou;
    c.forget = t.forget;
    path.classes.push_back(std::move(c));
  }
  return path;
}

StateVector frozen_state(const Sample& x, const FrozenStatePath& path, const Segmenter& model,
                         const SinkhornConfig& sinkhorn) {
  const Eigen::MatrixXd h = model.pixel_features(x);
  std::vector<ClassTerms> terms;
  for (const FrozenClassPath& c : path.classes) {
    ClassTerms t{c.class_id, 0.0, c.iou, c.forget};
    if (!c.support.empty()) {
      const SuperpixelGraph g =
          graph_from_assignment(h, x.width, c.class_id, c.region_pixels, c.assignment, c.count);
      t.div = diversity(g, c.support, sinkhorn);
    }
    terms.push_back(t);
  }
  return compute_state(terms);
}

namespace {

// d cos(u, w) / d u
Eigen::RowVectorXd cosine_gradient(const Eigen::RowVectorXd& u, const Eigen::RowVectorXd& w) {
  const double nu = u.norm();
  const double nw = w.norm();
  if (nu == 0.0 || nw == 0.0) return Eigen::RowVectorXd::Zero(u.size());
  const double cos = u.dot(w) / (nu * nw);
  return w / (nu * nw) - cos * u / (nu * nu);
}

Eigen::VectorXd flatten_pixels(const Eigen::MatrixXd& per_pixel) {
  Eigen::VectorXd out(per_pixel.size());
  for (Eigen::Index p = 0; p < per_pixel.rows(); ++p) {
    for (Eigen::Index c = 0; c < per_pixel.cols(); ++c) out(p * per_pixel.cols() + c) = per_pixel(p, c);
  }
  return out;
}

}  // namespace

Eigen::VectorXd score_pixel_gradient(const Sample& x, const FrozenStatePath& path,
                                     const Segmenter& model, const AgentNet& agent,
                                     const SinkhornConfig& sinkhorn) {
  const Eigen::MatrixXd h = model.pixel_features(x);
  const StateVector s = frozen_state(x, path, model, sinkhorn);
  const double dq_ddiv = agent.score_input_gradient(s)[0];
  Eigen::MatrixXd grad_h = Eigen::MatrixXd::Zero(h.rows(), h.cols());
  if (dq_ddiv == 0.0 || path.classes.empty()) {
    return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(x.pixels.size()));
  }
  const double class_weight = 1.0 / static_cast<double>(path.classes.size());

  for (const FrozenClassPath& c : path.classes) {
    if (c.support.empty()) continue;
    const SuperpixelGraph g =
        graph_from_assignment(h, x.width, c.class_id, c.region_pixels, c.assignment, c.count);
    const Eigen::MatrixXd weights = aggregation_weights(g.distance);
    const Eigen::MatrixXd& fa = g.aggregated;
    Eigen::MatrixXd grad_fa = Eigen::MatrixXd::Zero(fa.rows(), fa.cols());
    const double per_support = 1.0 / static_cast<double>(c.support.size());

    for (const SuperpixelGraph& other : c.support) {
      const Eigen::MatrixXd& fb = other.aggregated;
      const OTMatch fwd = sinkhorn_tc(fa, fb, sinkhorn);
      const OTMatch bwd = sinkhorn_tc(fb, fa, sinkhorn);
      const double tc = 0.5 * (fwd.tc + bwd.tc);
      // d div / d tc = Sim / |S|; d tc / d cost = averaged frozen plan.
      const double dtc = std::exp(-tc) * per_support;
      const Eigen::MatrixXd plan = 0.5 * (fwd.plan + bwd.plan.transpose());
      for (Eigen::Index a = 0; a < fa.rows(); ++a) {
        for (Eigen::Index b = 0; b < fb.rows(); ++b) {
          grad_fa.row(a) -= dtc * plan(a, b) * cosine_gradient(fa.row(a), fb.row(b));
        }
      }
    }
    const Eigen::MatrixXd grad_f = weights.transpose() * grad_fa;
    for (std::size_t i = 0; i < c.region_pixels.size(); ++i) {
      const int m = c.assignment[i];
      grad_h.row(c.region_pixels[i]) += class_weight * grad_f.row(m) / g.sizes[m];
    }
  }
  grad_h *= dq_ddiv;
  return flatten_pixels(model.backprop_features(x, grad_h));
}

Eigen::VectorXd finite_difference_pixel_gradient(const Sample& x, const FrozenStatePath& path,
                                                 const Segmenter& model, const AgentNet& agent,
                                                 const SinkhornConfig& sinkhorn,
                                                 const EnhanceConfig& config) {
  const auto n = static_cast<int>(x.pixels.size());
  std::vector<int> entries(n);
  std::iota(entries.begin(), entries.end(), 0);
  Rng rng = make_rng(config.seed, {0xfd, static_cast<std::uint64_t>(x.id)});
  std::shuffle(entries.begin(), entries.end(), rng);
  entries.resize(std::min(n, config.fd_pixels));

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(n);
  Sample probe = x;
  for (int k : entries) {
    const double orig = probe.pixels[k];
    probe.pixels[k] = orig + config.fd_step;
    const double up = agent.score(frozen_state(probe, path, model, sinkhorn));
    probe.pixels[k] = orig - config.fd_step;
    const double down = agent.score(frozen_state(probe, path, model, sinkhorn));
    probe.pixels[k] = orig;
    grad(k) = (up - down) / (2.0 * config.fd_step);
  }
  return grad;
}

EnhanceResult enhance(const Sample& x, const FrozenStatePath& path, const Segmenter& model,
                      const AgentNet& agent, const EnhanceConfig& config,
                      const SinkhornConfig& sinkhorn) {
  EnhanceResult result;
  result.sample = x;
  result.score_before = agent.score(frozen_state(x, path, model, sinkhorn));
  result.score_after = result.score_before;
  if (config.epsilon == 0.0) return result;

  Sample current = x;
  for (int step = 0; step < config.steps; ++step) {
    const Eigen::VectorXd g =
        config.mode == GradientMode::kAnalytic
            ? score_pixel_gradient(current, path, model, agent, sinkhorn)
            : finite_difference_pixel_gradient(current, path, model, agent, sinkhorn, config);
    if (g.isZero(0.0)) {
      log(LogLevel::kDebug, "zero enhancement gradient for sample ", x.id, "; left unchanged");
      break;
    }
    for (std::size_t k = 0; k < current.pixels.size(); ++k) {
      current.pixels[k] = std::clamp(current.pixels[k] + config.epsilon * g(static_cast<Eigen::Index>(k)),
                                     config.clamp_low, config.clamp_high);
    }
  }
  result.changed = current.pixels != x.pixels;
  if (result.changed) {
    current.enhanced = true;
    result.score_after = agent.score(frozen_state(current, path, model, sinkhorn));
  }
  current.labels = x.labels;
  result.sample = std::move(current);
  return result;
}

}  // namespace memsel
