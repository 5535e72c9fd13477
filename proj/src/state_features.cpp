#include "memsel/state_features.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "memsel/errors.hpp"
#include "memsel/parallel.hpp"
#include "memsel/rng.hpp"
#include "memsel/segmenter.hpp"

namespace memsel {

void StateConfig::validate() const {
  graph.validate();
  sinkhorn.validate();
  if (!(support_fraction > 0.0 && support_fraction <= 1.0)) {
    throw ConfigError("state.support_fraction must lie in (0, 1]");
  }
  if (min_support < 1) throw ConfigError("state.min_support must be >= 1");
  if (!(representative_fraction > 0.0 && representative_fraction <= 1.0)) {
    throw ConfigError("state.representative_fraction must lie in (0, 1]");
  }
}

StateVector compute_state(std::span<const ClassTerms> terms) {
  if (terms.empty()) throw StateError("sample has no usable class");
  StateVector s;
  for (const ClassTerms& t : terms) {
    s.div_mean += t.div;
    s.iou_mean += t.iou;
    s.forget_mean += t.forget;
  }
  const double n = static_cast<double>(terms.size());
  s.div_mean /= n;
  s.iou_mean /= n;
  s.forget_mean /= n;
  return s;
}

double diversity(const SuperpixelGraph& graph, std::span<const SuperpixelGraph> support,
                 const SinkhornConfig& sinkhorn) {
  if (support.empty()) throw ArgumentError("diversity needs a non-empty support set");
  double total = 0.0;
  for (const SuperpixelGraph& other : support) total += similarity(graph, other, sinkhorn);
  return 1.0 - total / static_cast<double>(support.size());
}

namespace {

int ceil_fraction(double fraction, int n) {
  // Guard against 0.1 * 40 landing a hair above 4.
  return static_cast<int>(std::ceil(fraction * n - 1e-9));
}

}  // namespace

int current_support_size(int available, double fraction, int minimum) {
  return std::min(available, std::max(minimum, ceil_fraction(fraction, available)));
}

RepresentativeSet representative_set(const SupportSet& support, std::span<const double> diversities,
                                     double fraction) {
  const int n = static_cast<int>(support.graphs.size());
  if (n == 0) throw ArgumentError("representative set of an empty support set");
  if (static_cast<int>(diversities.size()) != n) {
    throw ArgumentError("one diversity per support graph is required");
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return diversities[a] < diversities[b]; });
  const int k = std::max(1, ceil_fraction(fraction, n));
  RepresentativeSet rep;
  rep.class_id = support.class_id;
  rep.members.assign(order.begin(), order.begin() + k);
  for (int i : rep.members) rep.graphs.push_back(support.graphs[i]);
  return rep;
}

double forgetfulness(int class_id, const std::map<int, RepresentativeSet>& reps,
                     const SinkhornConfig& sinkhorn) {
  const auto self = reps.find(class_id);
  if (self == reps.end() || self->second.graphs.empty()) {
    throw ArgumentError("class has no representative set");
  }
  int others = 0;
  for (const auto& [c, rep] : reps) {
    if (c != class_id && !rep.graphs.empty()) ++others;
  }
  if (others == 0) return 0.0;

  double outer = 0.0;
  for (const SuperpixelGraph& g : self->second.graphs) {
    double across = 0.0;
    for (const auto& [c, rep] : reps) {
      if (c == class_id || rep.graphs.empty()) continue;
      double inner = 0.0;
      for (const SuperpixelGraph& h : rep.graphs) inner += similarity(g, h, sinkhorn);
      across += inner / static_cast<double>(rep.graphs.size());
    }
    outer += across / others;
  }
  return outer / static_cast<double>(self->second.graphs.size());
}

CandidateGraphs build_candidate_graphs(std::span<const Sample> candidates, const Segmenter& model,
                                       const StateConfig& config) {
  CandidateGraphs graphs(candidates.size());
  parallel_for(candidates.size(), config.workers, [&](std::size_t i) {
    const Sample& s = candidates[i];
    const Eigen::MatrixXd features = model.pixel_features(s);
    for (int c : s.classes()) graphs[i].emplace(c, build_graph(s, c, features, config.graph));
  });
  return graphs;
}

std::map<int, SupportSet> build_support_sets(std::span<const Sample> candidates,
                                             std::size_t memory_count,
                                             std::span<const int> current_classes,
                                             const CandidateGraphs& graphs,
                                             const StateConfig& config, std::uint64_t seed,
                                             std::vector<std::string>* warnings) {
  std::vector<int> classes;
  for (const Sample& s : candidates) {
    for (int c : s.classes()) classes.push_back(c);
  }
  classes.insert(classes.end(), current_classes.begin(), current_classes.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

  std::map<int, SupportSet> out;
  for (int c : classes) {
    const bool current =
        std::find(current_classes.begin(), current_classes.end(), c) != current_classes.end();
    std::vector<std::size_t> pool;
    const std::size_t begin = current ? memory_count : 0;
    const std::size_t end = current ? candidates.size() : memory_count;
    for (std::size_t i = begin; i < end; ++i) {
      if (graphs[i].count(c) > 0) pool.push_back(i);
    }
    if (pool.empty()) {
      if (warnings != nullptr) {
        warnings->push_back("class " + std::to_string(c) + " has no samples; support set skipped");
      }
      continue;
    }
    if (current) {
      const int k = current_support_size(static_cast<int>(pool.size()), config.support_fraction,
                                         config.min_support);
      Rng rng = make_rng(seed, {0x5e7, static_cast<std::uint64_t>(c)});
      std::shuffle(pool.begin(), pool.end(), rng);
      pool.resize(k);
      std::sort(pool.begin(), pool.end());
    }
    SupportSet set;
    set.class_id = c;
    for (std::size_t i : pool) {
      set.graphs.push_back(graphs[i].at(c));
      set.owners.push_back(candidates[i].key());
    }
    out.emplace(c, std::move(set));
  }
  return out;
}

std::vector<SuperpixelGraph> support_excluding(const SupportSet& support, SampleKey owner) {
  std::vector<SuperpixelGraph> out;
  out.reserve(support.graphs.size());
  for (std::size_t i = 0; i < support.graphs.size(); ++i) {
    if (support.owners[i] != owner) out.push_back(support.graphs[i]);
  }
  return out;
}

StageSnapshot build_stage_snapshot(std::span<const Sample> candidates, std::size_t memory_count,
                                   std::span<const int> current_classes, const Segmenter& model,
                                   const std::map<int, double>& ious, const StateConfig& config,
                                   std::uint64_t seed) {
  StageSnapshot snap;
  snap.ious = ious;
  snap.graphs = build_candidate_graphs(candidates, model, config);
  snap.supports = build_support_sets(candidates, memory_count, current_classes, snap.graphs,
                                     config, seed, &snap.warnings);

  for (auto& [c, set] : snap.supports) {
    set.diversities.assign(set.graphs.size(), 0.0);
    for (std::size_t i = 0; i < set.graphs.size(); ++i) {
      const auto rest = support_excluding(set, set.owners[i]);
      if (!rest.empty()) set.diversities[i] = diversity(set.graphs[i], rest, config.sinkhorn);
    }
    snap.representatives.emplace(
        c, representative_set(set, set.diversities, config.representative_fraction));
  }
  for (const auto& [c, rep] : snap.representatives) {
    snap.forgetfulness[c] = forgetfulness(c, snap.representatives, config.sinkhorn);
  }

  snap.states.resize(candidates.size());
  parallel_for(candidates.size(), config.workers, [&](std::size_t i) {
    CandidateState& st = snap.states[i];
    st.key = candidates[i].key();
    for (const auto& [c, graph] : snap.graphs[i]) {
      const auto support = snap.supports.find(c);
      const auto iou = ious.find(c);
      if (support == snap.supports.end() || iou == ious.end()) continue;
      const auto rest = support_excluding(support->second, st.key);
      ClassTerms t;
      t.class_id = c;
      // A sample that is its class's only evidence counts as fully typical.
      t.div = rest.empty() ? 0.0 : diversity(graph, rest, config.sinkhorn);
      t.iou = iou->second;
      t.forget = snap.forgetfulness.at(c);
      st.terms.push_back(t);
    }
    st.usable = !st.terms.empty();
    if (st.usable) st.state = compute_state(st.terms);
  });
  return snap;
}

}  // namespace memsel
