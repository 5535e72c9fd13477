#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "memsel/graph_similarity.hpp"
#include "memsel/sample.hpp"

namespace memsel {

class Segmenter;

struct StateConfig {
  GraphConfig graph;
  SinkhornConfig sinkhorn;
  // Fraction of a current class's samples drawn into its support set.
  double support_fraction = 0.1;
  int min_support = 2;
  double representative_fraction = 0.1;
  int workers = 1;

  void validate() const;
};

struct SupportSet {
  int class_id = 0;
  std::vector<SuperpixelGraph> graphs;
  std::vector<SampleKey> owners;
  // Diversity of each member against the rest of the set.
  std::vector<double> diversities;
};

struct RepresentativeSet {
  int class_id = 0;
  std::vector<SuperpixelGraph> graphs;
  std::vector<int> members;  // indices into the support set
};

struct StateVector {
  double div_mean = 0.0;
  double iou_mean = 0.0;
  double forget_mean = 0.0;

  std::array<double, 3> as_array() const { return {div_mean, iou_mean, forget_mean}; }
  static StateVector from_array(const std::array<double, 3>& a) { return {a[0], a[1], a[2]}; }
};

// Per-class terms of one sample; the state is their per-component mean.
struct ClassTerms {
  int class_id = 0;
  double div = 0.0;
  double iou = 0.0;
  double forget = 0.0;
};

StateVector compute_state(std::span<const ClassTerms> terms);

// 1 - mean Sim(graph, s) over s in `support`.
double diversity(const SuperpixelGraph& graph, std::span<const SuperpixelGraph> support,
                 const SinkhornConfig& sinkhorn);

// Support-set size for a current class with `available` samples.
int current_support_size(int available, double fraction, int minimum);

// The max(1, ceil(fraction * N_c)) members with the smallest diversity;
// ties keep input order.
RepresentativeSet representative_set(const SupportSet& support, std::span<const double> diversities,
                                     double fraction = 0.1);

// Triple average of Sim between the representative graphs of `class_id` and
// those of every other class in `reps`. 0 when no other class is available.
double forgetfulness(int class_id, const std::map<int, RepresentativeSet>& reps,
                     const SinkhornConfig& sinkhorn);

// Graphs of every labeled class of each candidate.
using CandidateGraphs = std::vector<std::map<int, SuperpixelGraph>>;

CandidateGraphs build_candidate_graphs(std::span<const Sample> candidates, const Segmenter& model,
                                       const StateConfig& config);

// Candidates [0, memory_count) come from memory, the rest from D_t.
// Previous classes use every memory sample of the class; current classes use
// a seeded subsample of D_t. Classes without samples are skipped and recorded
// in `warnings`.
std::map<int, SupportSet> build_support_sets(std::span<const Sample> candidates,
                                             std::size_t memory_count,
                                             std::span<const int> current_classes,
                                             const CandidateGraphs& graphs,
                                             const StateConfig& config, std::uint64_t seed,
                                             std::vector<std::string>* warnings = nullptr);

struct CandidateState {
  SampleKey key;
  bool usable = false;
  std::vector<ClassTerms> terms;
  StateVector state;
};

// Everything computed once per stage before selection.
struct StageSnapshot {
  CandidateGraphs graphs;
  std::map<int, SupportSet> supports;
  std::map<int, RepresentativeSet> representatives;
  std::map<int, double> forgetfulness;
  std::map<int, double> ious;
  std::vector<CandidateState> states;
  std::vector<std::string> warnings;
};

// Support members other than `owner`; if `owner` is the only member the
// result is empty.
std::vector<SuperpixelGraph> support_excluding(const SupportSet& support, SampleKey owner);

StageSnapshot build_stage_snapshot(std::span<const Sample> candidates, std::size_t memory_count,
                                   std::span<const int> current_classes, const Segmenter& model,
                                   const std::map<int, double>& ious, const StateConfig& config,
                                   std::uint64_t seed);

}  // namespace memsel
