#include "memsel/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "memsel/config.hpp"
#include "memsel/errors.hpp"
#include "memsel/log.hpp"
#include "memsel/rng.hpp"

namespace memsel {

void TrainRunConfig::validate() const {
  if (iterations < 1) throw ConfigError("training.iterations must be >= 1");
  if (stage_bounds.min_stages < 2 || stage_bounds.max_stages < stage_bounds.min_stages) {
    throw ConfigError("training stage bounds need 2 <= min_stages <= max_stages");
  }
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("training.train_fraction must lie in (0, 1)");
  }
  if (epochs < 0) throw ConfigError("training.epochs must be >= 0");
  if (!(exploration >= 0.0)) throw ConfigError("training.exploration must be >= 0");
}

void DeployConfig::validate() const {
  if (epochs < 0) throw ConfigError("deployment.epochs must be >= 0");
  if (initial_classes < 1) throw ConfigError("deployment.initial_classes must be >= 1");
  if (increment < 1) throw ConfigError("deployment.increment must be >= 1");
}

std::string policy_name(Policy policy) {
  switch (policy) {
    case Policy::kAgent: return "agent";
    case Policy::kRandom: return "random";
    case Policy::kDiversityHigh: return "diversity_high";
    case Policy::kDiversityLow: return "diversity_low";
    case Policy::kNhs: return "nhs";
  }
  return "unknown";
}

Policy parse_policy(const std::string& name) {
  for (Policy p : {Policy::kAgent, Policy::kRandom, Policy::kDiversityHigh,
                   Policy::kDiversityLow, Policy::kNhs}) {
    if (policy_name(p) == name) return p;
  }
  throw ConfigError("unknown policy '" + name + "'");
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::vector<Sample> restrict_all(std::span<const Sample> samples, std::span<const int> keep) {
  std::vector<Sample> out;
  out.reserve(samples.size());
  for (const Sample& s : samples) out.push_back(restrict_labels(s, keep));
  return out;
}

double primary_div(const CandidateState& st, int primary) {
  for (const ClassTerms& t : st.terms) {
    if (t.class_id == primary) return t.div;
  }
  return st.terms.empty() ? 0.0 : st.terms.front().div;
}

}  // namespace

void check_memory_invariants(const MemoryBuffer& memory, std::span<const Sample> candidates) {
  const std::size_t expected = std::min(memory.capacity, candidates.size());
  if (memory.samples.size() != expected) {
    throw InvariantError("memory holds " + std::to_string(memory.samples.size()) +
                         " samples, expected " + std::to_string(expected));
  }
  std::map<SampleKey, const Sample*> origin;
  for (const Sample& c : candidates) origin.emplace(c.key(), &c);
  std::set<SampleKey> seen;
  for (const Sample& m : memory.samples) {
    const auto it = origin.find(m.key());
    if (it == origin.end()) {
      throw InvariantError("memory sample " + std::to_string(m.id) + " is not a candidate");
    }
    if (!seen.insert(m.key()).second) {
      throw InvariantError("memory sample " + std::to_string(m.id) + " stored twice");
    }
    const Sample& src = *it->second;
    if (m.labels != src.labels || m.height != src.height || m.width != src.width ||
        m.channels != src.channels) {
      throw InvariantError("labels of memory sample " + std::to_string(m.id) + " changed");
    }
    if (m.pixels != src.pixels && !m.enhanced) {
      throw InvariantError("pixels of memory sample " + std::to_string(m.id) +
                           " changed without enhancement");
    }
  }
}

std::map<int, int> class_quotas(const std::map<int, int>& counts, std::size_t total) {
  long long sum = 0;
  for (const auto& [c, n] : counts) sum += n;
  std::map<int, int> out;
  if (sum == 0) return out;
  const long long budget = std::min<long long>(static_cast<long long>(total), sum);
  long long assigned = 0;
  std::vector<std::pair<long long, int>> remainders;
  for (const auto& [c, n] : counts) {
    const long long num = budget * n;
    out[c] = static_cast<int>(num / sum);
    assigned += num / sum;
    remainders.emplace_back(num % sum, c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < budget; ++i, ++assigned) ++out[remainders[i].second];
  return out;
}

std::vector<std::size_t> select_baseline(Policy policy, std::span<const Sample> candidates,
                                         const StageSnapshot& snapshot, std::size_t capacity,
                                         std::uint64_t seed) {
  const std::size_t k = std::min(capacity, candidates.size());
  if (policy == Policy::kRandom) {
    std::vector<std::size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = make_rng(seed, {0x4a11});
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(k);
    return order;
  }
  if (policy == Policy::kAgent) throw ArgumentError("agent policy is not a baseline");

  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    members[candidates[i].primary_class()].push_back(i);
  }
  std::map<int, int> counts;
  for (const auto& [c, idx] : members) counts[c] = static_cast<int>(idx.size());
  const std::map<int, int> quotas = class_quotas(counts, k);

  // NHS: the lower-IoU half of the classes keeps its most common samples.
  std::set<int> low_half;
  if (policy == Policy::kNhs) {
    std::vector<int> classes;
    for (const auto& [c, idx] : members) classes.push_back(c);
    const auto iou_of = [&](int c) {
      const auto it = snapshot.ious.find(c);
      return it == snapshot.ious.end() ? 0.0 : it->second;
    };
    std::stable_sort(classes.begin(), classes.end(),
                     [&](int a, int b) { return iou_of(a) < iou_of(b); });
    const std::size_t half = (classes.size() + 1) / 2;
    low_half.insert(classes.begin(), classes.begin() + static_cast<std::ptrdiff_t>(half));
  }

  std::vector<std::size_t> out;
  for (auto& [c, idx] : members) {
    const bool ascending = policy == Policy::kDiversityLow || low_half.count(c) > 0;
    std::vector<double> div(idx.size());
    for (std::size_t j = 0; j < idx.size(); ++j) div[j] = primary_div(snapshot.states[idx[j]], c);
    std::vector<std::size_t> order(idx.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return ascending ? div[a] < div[b] : div[a] > div[b];
    });
    const int q = quotas.count(c) > 0 ? quotas.at(c) : 0;
    for (int j = 0; j < q; ++j) out.push_back(idx[order[j]]);
  }
  return out;
}

ContinualResult run_continual(std::span<const Sample> train, std::span<const Sample> eval,
                              std::span<const Sample> reward, const StagePartition& partition,
                              const AgentNet* agent, const LoopSettings& settings) {
  if (train.empty()) throw ArgumentError("continual run needs training samples");
  if (settings.policy == Policy::kAgent && agent == nullptr) {
    throw ArgumentError("agent policy needs an agent");
  }
  if (settings.enhance && agent == nullptr) throw ArgumentError("enhancement needs an agent");

  ContinualResult result{{}, {}, Segmenter(train.front().channels, settings.segmenter),
                         MemoryBuffer{settings.memory_capacity, {}}, false};
  std::vector<StateVector> previous_states;

  for (int t = 1; t <= partition.num_stages(); ++t) {
    const auto start = std::chrono::steady_clock::now();
    const StageDataset data = make_css_view(train, partition, t);
    StageRecord rec;
    rec.stage = t;
    rec.classes = partition.classes(t);
    rec.seen = partition.seen_through(t);

    std::vector<Sample> candidates = result.memory.samples;
    const std::size_t memory_count = candidates.size();
    candidates.insert(candidates.end(), data.samples.begin(), data.samples.end());
    if (candidates.empty()) {
      log(LogLevel::kWarn, "stage ", t, " has no candidates; run aborted");
      rec.warnings.push_back("no candidates");
      rec.duration_seconds = seconds_since(start);
      result.records.push_back(std::move(rec));
      result.aborted = true;
      break;
    }

    result.model.train_stage(candidates, settings.epochs);

    std::vector<StateVector> selected_states;
    if (settings.memory_capacity > 0) {
      rec.state_ious = per_class_iou(result.model, candidates, rec.seen);
      const std::uint64_t stage_seed =
          derive_seed(settings.seed, {static_cast<std::uint64_t>(t)});
      const StageSnapshot snap = build_stage_snapshot(candidates, memory_count, rec.classes,
                                                      result.model, rec.state_ious,
                                                      settings.state, stage_seed);
      rec.warnings = snap.warnings;

      std::vector<double> scores(candidates.size(), 0.0);
      std::vector<std::size_t> selected;
      if (settings.policy == Policy::kAgent) {
        Rng rng = make_rng(stage_seed, {0xe4});
        std::normal_distribution<double> noise(0.0, 1.0);
        std::vector<double> ranked(candidates.size(), std::numeric_limits<double>::lowest());
        for (std::size_t i = 0; i < candidates.size(); ++i) {
          if (!snap.states[i].usable) continue;
          scores[i] = agent->score(snap.states[i].state);
          ranked[i] = scores[i];
          if (settings.exploration > 0.0) ranked[i] += settings.exploration * noise(rng);
        }
        selected = select_top_l(ranked, settings.memory_capacity);
      } else {
        selected = select_baseline(settings.policy, candidates, snap, settings.memory_capacity,
                                   stage_seed);
        if (agent != nullptr) {
          for (std::size_t i = 0; i < candidates.size(); ++i) {
            if (snap.states[i].usable) scores[i] = agent->score(snap.states[i].state);
          }
        }
      }

      std::map<std::size_t, Sample> enhanced;
      if (settings.enhance) {
        double ascent = 0.0;
        for (std::size_t i : selected) {
          if (!snap.states[i].usable) continue;
          const FrozenStatePath path = freeze_state_path(snap, i, candidates[i].key());
          EnhanceResult er = enhance(candidates[i], path, result.model, *agent,
                                     settings.enhance_config, settings.state.sinkhorn);
          if (!er.changed) continue;
          ascent += er.score_after - er.score_before;
          enhanced.emplace(i, std::move(er.sample));
        }
        rec.enhanced = static_cast<int>(enhanced.size());
        if (rec.enhanced > 0) rec.mean_ascent = ascent / rec.enhanced;
      }

      MemoryBuffer next = update_memory(settings.memory_capacity, candidates, selected, enhanced);
      check_memory_invariants(next, candidates);

      std::vector<bool> chosen(candidates.size(), false);
      for (std::size_t i : selected) {
        chosen[i] = true;
        rec.selected_ids.push_back(candidates[i].id);
        rec.selected_source_stages.push_back(candidates[i].source_stage);
        rec.selected_scores.push_back(scores[i]);
        if (snap.states[i].usable) selected_states.push_back(snap.states[i].state);
      }
      for (std::size_t i = 0; i < candidates.size(); ++i) {
        CandidateRecord cr;
        cr.sample_id = candidates[i].id;
        cr.source_stage = candidates[i].source_stage;
        cr.primary_class = candidates[i].primary_class();
        cr.div = primary_div(snap.states[i], cr.primary_class);
        cr.score = scores[i];
        cr.selected = chosen[i];
        ++rec.available_per_class[cr.primary_class];
        if (cr.selected) ++rec.selected_per_class[cr.primary_class];
        rec.candidates.push_back(cr);
      }
      result.memory = std::move(next);
    }
    rec.memory_size = result.memory.samples.size();

    if (!eval.empty()) {
      rec.eval_ious = per_class_iou(result.model, restrict_all(eval, rec.seen), rec.seen);
    }
    if (!reward.empty() && t > 1) {
      const auto ious = per_class_iou(result.model, restrict_all(reward, rec.seen), rec.seen);
      rec.reward = mean_iou(ious, rec.seen);
      if (!previous_states.empty() && !selected_states.empty()) {
        result.transitions.push_back({t - 1, previous_states, selected_states, *rec.reward});
      }
    }
    previous_states = std::move(selected_states);
    rec.duration_seconds = seconds_since(start);
    log(LogLevel::kDebug, "stage ", t, ": ", candidates.size(), " candidates, memory ",
        rec.memory_size, ", ", rec.duration_seconds, " s");
    result.records.push_back(std::move(rec));
  }
  return result;
}

TrainingResult train_agent(const World& world, const RunConfig& config) {
  config.validate();
  TrainingResult out{AgentNet(config.agent), {}};
  // Only the first-stage data of the deployment task is available for training.
  const StageDataset d1 = make_css_view(world.train, deployment_partition(world, config.deployment), 1);
  const std::vector<int> classes = d1.current_classes;
  const TrainRunConfig& tr = config.training;

  for (int y = 0; y < tr.iterations; ++y) {
    const auto start = std::chrono::steady_clock::now();
    const std::uint64_t seed = derive_seed(tr.seed, {static_cast<std::uint64_t>(y)});
    IterationLog entry;
    entry.iteration = y;
    const StagePartition partition =
        reallocate_classes(classes, derive_seed(seed, {1}), tr.stage_bounds);
    entry.stages = partition.num_stages();
    entry.partition = partition.stages;
    const auto [train_split, reward_split] =
        split_train_reward(d1, tr.train_fraction, derive_seed(seed, {2}));

    LoopSettings s;
    s.policy = Policy::kAgent;
    s.enhance = tr.enhance;
    s.memory_capacity = tr.memory_capacity;
    s.epochs = tr.epochs;
    s.exploration = tr.exploration;
    s.seed = derive_seed(seed, {3});
    s.segmenter = config.segmenter;
    s.segmenter.seed = derive_seed(config.segmenter.seed, {static_cast<std::uint64_t>(y)});
    s.state = config.state;
    s.state.workers = config.workers;
    s.enhance_config = config.enhance;

    const ContinualResult run =
        run_continual(train_split.samples, {}, reward_split.samples, partition, &out.agent, s);
    for (const StageRecord& r : run.records) {
      if (r.reward) entry.rewards.push_back(*r.reward);
    }
    entry.aborted = run.aborted;
    if (run.aborted) {
      log(LogLevel::kWarn, "agent-training iteration ", y, " aborted");
    } else if (!run.transitions.empty()) {
      entry.td_loss = out.agent.td_step(run.transitions);
    }
    entry.duration_seconds = seconds_since(start);
    log(LogLevel::kInfo, "iteration ", y, ": T=", entry.stages, " loss ", entry.td_loss);
    out.log.push_back(std::move(entry));
  }
  return out;
}

GroupMetrics group_metrics(const std::map<int, double>& ious, const StagePartition& partition) {
  std::vector<int> later;
  for (int t = 2; t <= partition.num_stages(); ++t) {
    const auto& c = partition.classes(t);
    later.insert(later.end(), c.begin(), c.end());
  }
  const std::vector<int> all = partition.all_classes();
  return {mean_iou(ious, partition.classes(1)), mean_iou(ious, later), mean_iou(ious, all)};
}

StagePartition deployment_partition(const World& world, const DeployConfig& config) {
  StagePartition p = StagePartition::incremental(world.config.num_classes,
                                                 config.initial_classes, config.increment);
  p.validate(world.config.num_classes);
  return p;
}

DeployResult deploy(const World& world, const RunConfig& config, Policy policy, bool enhance,
                    const AgentNet* agent) {
  config.validate();
  if (!(world.config == config.world)) {
    throw MismatchError("world file does not match the configured world");
  }
  if (!world.train.empty() && world.train.front().channels != config.world.feature_dim) {
    throw MismatchError("world channels do not match world.feature_dim");
  }
  const StagePartition partition = deployment_partition(world, config.deployment);
  LoopSettings s;
  s.policy = policy;
  s.enhance = enhance;
  s.memory_capacity = config.deployment.memory_capacity;
  s.epochs = config.deployment.epochs;
  s.seed = config.deployment.seed;
  s.segmenter = config.segmenter;
  s.state = config.state;
  s.state.workers = config.workers;
  s.enhance_config = config.enhance;

  DeployResult out{run_continual(world.train, world.test, {}, partition, agent, s), {}, {}};
  const std::vector<int> all = partition.all_classes();
  out.final_ious = per_class_iou(out.run.model, world.test, all);
  out.metrics = group_metrics(out.final_ious, partition);
  return out;
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) return std::nullopt;
  const std::vector<double> ra = average_ranks(a);
  const std::vector<double> rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

PolicyReport analyze_policy(std::span<const StageRecord> records) {
  PolicyReport report;
  double rate_sum = 0.0, count_sum = 0.0;
  int count_stages = 0;
  double div_sel = 0.0, div_unsel = 0.0;
  int n_sel = 0, n_unsel = 0;

  for (const StageRecord& r : records) {
    if (r.state_ious.empty()) continue;
    std::vector<double> ious, rates, counts;
    std::vector<ClassSelectionRow> rows;
    for (int c : r.seen) {
      const auto iou = r.state_ious.find(c);
      if (iou == r.state_ious.end()) continue;
      ClassSelectionRow row;
      row.stage = r.stage;
      row.class_id = c;
      row.iou = iou->second;
      const auto av = r.available_per_class.find(c);
      const auto se = r.selected_per_class.find(c);
      row.available = av == r.available_per_class.end() ? 0 : av->second;
      row.selected = se == r.selected_per_class.end() ? 0 : se->second;
      row.selection_rate = row.available > 0 ? static_cast<double>(row.selected) / row.available : 0.0;
      rows.push_back(row);
    }
    std::vector<double> all_ious;
    for (const auto& row : rows) all_ious.push_back(row.iou);
    const std::vector<double> ranks = average_ranks(all_ious);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      rows[i].iou_rank = ranks[i];
      if (rows[i].available > 0) {
        ious.push_back(rows[i].iou);
        rates.push_back(rows[i].selection_rate);
        counts.push_back(rows[i].selected);
      }
    }
    report.classes.insert(report.classes.end(), rows.begin(), rows.end());
    if (ious.size() >= 3) {
      if (const auto rho = spearman(ious, rates)) {
        rate_sum += *rho;
        ++report.stages_used;
      }
      if (const auto rho = spearman(ious, counts)) {
        count_sum += *rho;
        ++count_stages;
      }
    }
    for (const CandidateRecord& c : r.candidates) {
      if (c.selected) {
        div_sel += c.div;
        ++n_sel;
      } else {
        div_unsel += c.div;
        ++n_unsel;
      }
    }
  }
  if (report.stages_used > 0) report.rank_correlation = rate_sum / report.stages_used;
  if (count_stages > 0) report.count_rank_correlation = count_sum / count_stages;
  if (n_sel > 0) report.mean_div_selected = div_sel / n_sel;
  if (n_unsel > 0) report.mean_div_unselected = div_unsel / n_unsel;
  return report;
}

}  // namespace memsel
