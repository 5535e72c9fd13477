#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "memsel/agent.hpp"
#include "memsel/policy_actions.hpp"
#include "memsel/sample.hpp"
#include "memsel/segmenter.hpp"
#include "memsel/state_features.hpp"
#include "memsel/synthetic_tasks.hpp"

namespace memsel {

// Agent training on the first-stage data.
struct TrainRunConfig {
  int iterations = 100;  // Y
  StageBounds stage_bounds{};
  double train_fraction = 0.1;
  std::size_t memory_capacity = 10;
  int epochs = 20;
  // Std of Gaussian noise added to agent scores before Top-L while training.
  double exploration = 0.0;
  bool enhance = true;
  std::uint64_t seed = 17;

  void validate() const;
  friend bool operator==(const TrainRunConfig&, const TrainRunConfig&) = default;
};

struct DeployConfig {
  std::size_t memory_capacity = 20;  // L
  int epochs = 15;
  int initial_classes = 5;
  int increment = 1;
  std::uint64_t seed = 23;

  void validate() const;
  friend bool operator==(const DeployConfig&, const DeployConfig&) = default;
};

enum class Policy { kAgent, kRandom, kDiversityHigh, kDiversityLow, kNhs };

std::string policy_name(Policy policy);
Policy parse_policy(const std::string& name);

// Everything one continual run needs besides data.
struct LoopSettings {
  Policy policy = Policy::kAgent;
  bool enhance = false;
  std::size_t memory_capacity = 20;
  int epochs = 15;
  double exploration = 0.0;
  std::uint64_t seed = 0;
  SegmenterConfig segmenter;
  StateConfig state;
  EnhanceConfig enhance_config;
};

struct CandidateRecord {
  int sample_id = 0;
  int source_stage = 0;
  int primary_class = 0;
  double div = 0.0;  // div term of the primary class
  double score = 0.0;
  bool selected = false;
};

struct StageRecord {
  int stage = 0;
  std::vector<int> classes;
  std::vector<int> seen;
  std::optional<double> reward;            // r_t on the reward split, t > 1 only
  std::map<int, double> eval_ious;         // on the evaluation set, seen classes
  std::map<int, double> state_ious;        // I_c on the training pool
  std::vector<int> selected_ids;
  std::vector<int> selected_source_stages;
  std::vector<double> selected_scores;
  std::map<int, int> available_per_class;  // candidates by primary class
  std::map<int, int> selected_per_class;
  std::vector<CandidateRecord> candidates;
  std::size_t memory_size = 0;
  int enhanced = 0;
  double mean_ascent = 0.0;  // mean q(x') - q(x) over enhanced samples
  double duration_seconds = 0.0;
  std::vector<std::string> warnings;
};

struct ContinualResult {
  std::vector<StageRecord> records;
  std::vector<Transition> transitions;
  Segmenter model;
  MemoryBuffer memory;
  bool aborted = false;
};

// Runs the stages of `partition` over `train`, evaluating per-stage IoUs on
// `eval` and, if non-empty, rewards on `reward`. `agent` is required for the
// agent policy and read-only here.
ContinualResult run_continual(std::span<const Sample> train, std::span<const Sample> eval,
                              std::span<const Sample> reward, const StagePartition& partition,
                              const AgentNet* agent, const LoopSettings& settings);

// Throws InvariantError unless memory equals min(L, |candidates|) members of
// the candidate pool, with labels and (unless enhanced) pixels untouched.
void check_memory_invariants(const MemoryBuffer& memory, std::span<const Sample> candidates);

// Per-class quotas proportional to `counts`, summing to min(total, Σ counts);
// remainder by largest fraction, ties to the smaller class id.
std::map<int, int> class_quotas(const std::map<int, int>& counts, std::size_t total);

// Baseline selection over a stage snapshot. `candidates` pairs with
// `snapshot.states`.
std::vector<std::size_t> select_baseline(Policy policy, std::span<const Sample> candidates,
                                         const StageSnapshot& snapshot, std::size_t capacity,
                                         std::uint64_t seed);

struct IterationLog {
  int iteration = 0;
  int stages = 0;
  std::vector<std::vector<int>> partition;
  std::vector<double> rewards;
  double td_loss = 0.0;  // loss before the update
  bool aborted = false;
  double duration_seconds = 0.0;
};

struct TrainingResult {
  AgentNet agent;
  std::vector<IterationLog> log;
};

struct RunConfig;

TrainingResult train_agent(const World& world, const RunConfig& config);

struct GroupMetrics {
  double initial = 0.0;  // C_1
  double later = 0.0;    // C_2..C_T
  double all = 0.0;      // C_1..C_T
};

GroupMetrics group_metrics(const std::map<int, double>& ious, const StagePartition& partition);

struct DeployResult {
  ContinualResult run;
  std::map<int, double> final_ious;
  GroupMetrics metrics;
};

StagePartition deployment_partition(const World& world, const DeployConfig& config);

// `policy` kAgent with or without enhancement, or a baseline.
DeployResult deploy(const World& world, const RunConfig& config, Policy policy, bool enhance,
                    const AgentNet* agent);

struct ClassSelectionRow {
  int stage = 0;
  int class_id = 0;
  double iou = 0.0;
  double iou_rank = 0.0;  // 1 = lowest IoU, ties averaged
  int available = 0;
  int selected = 0;
  double selection_rate = 0.0;
};

struct PolicyReport {
  std::vector<ClassSelectionRow> classes;
  // Spearman correlation between I_c and selection rate per stage, averaged
  // over stages with at least three classes and non-constant columns.
  std::optional<double> rank_correlation;
  // Same with raw selected counts.
  std::optional<double> count_rank_correlation;
  int stages_used = 0;
  double mean_div_selected = 0.0;
  double mean_div_unselected = 0.0;
};

std::vector<double> average_ranks(std::span<const double> values);
std::optional<double> spearman(std::span<const double> a, std::span<const double> b);

PolicyReport analyze_policy(std::span<const StageRecord> records);

}  // namespace memsel
