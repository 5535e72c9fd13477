#include "memsel/synthetic_tasks.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <string>

#include "memsel/errors.hpp"
#include "memsel/rng.hpp"

namespace memsel {

void WorldConfig::validate() const {
  if (num_classes < 4) throw ConfigError("world.num_classes must be >= 4");
  if (height < 16 || width < 16) throw ConfigError("world image size must be >= 16 in each dimension");
  if (feature_dim < 2) throw ConfigError("world.feature_dim must be >= 2");
  if (samples_per_class < 10) throw ConfigError("world.samples_per_class must be >= 10");
  if (test_samples_per_class < 0) throw ConfigError("world.test_samples_per_class must be >= 0");
  if (!(intra_class_spread >= 0.0) || !std::isfinite(intra_class_spread)) {
    throw ConfigError("world.intra_class_spread must be a finite non-negative number");
  }
  if (!(secondary_prob >= 0.0 && secondary_prob <= 1.0)) {
    throw ConfigError("world.secondary_prob must lie in [0, 1]");
  }
  if (!(outlier_prob >= 0.0 && outlier_prob <= 1.0)) {
    throw ConfigError("world.outlier_prob must lie in [0, 1]");
  }
}

namespace {

enum class Shape { kDisk, kSquare, kDiamond, kRing, kCross };
constexpr int kNumShapes = 5;

struct ClassTemplate {
  Shape shape;
  std::vector<double> color;
  double cy;
  double cx;
  double radius;
};

struct Background {
  std::vector<double> level;
  double fy;
  double fx;
};

bool inside(Shape shape, double dy, double dx, double r) {
  const double ay = std::abs(dy);
  const double ax = std::abs(dx);
  switch (shape) {
    case Shape::kDisk:
      return dy * dy + dx * dx <= r * r;
    case Shape::kSquare:
      return std::max(ay, ax) <= 0.85 * r;
    case Shape::kDiamond:
      return ay + ax <= 1.2 * r;
    case Shape::kRing: {
      const double d = std::sqrt(dy * dy + dx * dx);
      return d <= r && d >= 0.5 * r;
    }
    case Shape::kCross:
      return (ax <= 0.35 * r && ay <= r) || (ay <= 0.35 * r && ax <= r);
  }
  return false;
}

std::vector<ClassTemplate> make_templates(const WorldConfig& cfg) {
  std::vector<ClassTemplate> out;
  out.reserve(cfg.num_classes);
  const double h = cfg.height;
  const double w = cfg.width;
  for (int c = 1; c <= cfg.num_classes; ++c) {
    Rng rng = make_rng(cfg.seed, {0x7e3, static_cast<std::uint64_t>(c)});
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    ClassTemplate t;
    t.shape = static_cast<Shape>((c - 1) % kNumShapes);
    t.color.resize(cfg.feature_dim);
    for (double& v : t.color) v = 0.1 + 0.8 * unit(rng);
    // Every third class is a near-copy of its predecessor's color; these
    // sibling pairs are the hard, easily confused classes.
    if (c % 3 == 0) {
      std::normal_distribution<double> jitter(0.0, 0.07);
      for (int k = 0; k < cfg.feature_dim; ++k) {
        t.color[k] = std::clamp(out.back().color[k] + jitter(rng), 0.05, 0.95);
      }
    }
    t.cy = h / 2.0 + (unit(rng) - 0.5) * 4.0;
    t.cx = w / 2.0 + (unit(rng) - 0.5) * 4.0;
    t.radius = std::min(h, w) * (1.0 / 6.0 + unit(rng) / 12.0);
    out.push_back(std::move(t));
  }
  return out;
}

Background make_background(const WorldConfig& cfg) {
  Rng rng = make_rng(cfg.seed, {0xb9});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Background bg;
  bg.level.resize(cfg.feature_dim);
  for (double& v : bg.level) v = 0.4 + 0.2 * unit(rng);
  bg.fy = 0.6 + 0.6 * unit(rng);
  bg.fx = 0.6 + 0.6 * unit(rng);
  return bg;
}

struct Instance {
  Shape shape;
  std::vector<double> color;
  double cy;
  double cx;
  double radius;
};

Instance jitter_instance(const ClassTemplate& t, const WorldConfig& cfg, double spread,
                         bool outlier, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Instance inst{t.shape, t.color, t.cy, t.cx, t.radius};
  if (spread == 0.0) return inst;
  const double h = cfg.height;
  const double w = cfg.width;
  inst.cy = std::clamp(t.cy + spread * (h / 6.0) * gauss(rng), 2.0, h - 3.0);
  inst.cx = std::clamp(t.cx + spread * (w / 6.0) * gauss(rng), 2.0, w - 3.0);
  inst.radius = std::clamp(t.radius * (1.0 + 0.25 * spread * gauss(rng)), 1.5, std::min(h, w) / 3.0);
  for (double& v : inst.color) v += spread * 0.06 * gauss(rng);
  if (outlier) {
    // Strong color shift along a random direction plus a shrunken object.
    std::vector<double> dir(inst.color.size());
    double norm = 0.0;
    for (double& d : dir) {
      d = gauss(rng);
      norm += d * d;
    }
    norm = std::sqrt(std::max(norm, 1e-12));
    for (std::size_t k = 0; k < dir.size(); ++k) inst.color[k] += spread * 0.35 * dir[k] / norm;
    inst.radius = std::max(1.5, inst.radius * 0.7);
  }
  for (double& v : inst.color) v = std::clamp(v, 0.02, 0.98);
  return inst;
}

void paint(Sample& s, const Instance& inst, int class_id, double noise, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      if (!inside(inst.shape, y - inst.cy, x - inst.cx, inst.radius)) continue;
      s.label(y, x) = class_id;
      for (int k = 0; k < s.channels; ++k) {
        const double n = noise > 0.0 ? noise * gauss(rng) : 0.0;
        s.pixel(y, x, k) = std::clamp(inst.color[k] + n, 0.0, 1.0);
      }
    }
  }
}

Sample make_sample(int id, int class_id, const WorldConfig& cfg,
                   const std::vector<ClassTemplate>& templates, const Background& bg, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double spread = cfg.intra_class_spread;
  const double noise = 0.03 * std::min(1.0, spread);

  Sample s(id, cfg.height, cfg.width, cfg.feature_dim);
  const double phase = spread > 0.0 ? 2.0 * std::numbers::pi * unit(rng) : 0.0;
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      const double wave = 0.12 * std::sin(bg.fy * y + bg.fx * x + phase);
      for (int k = 0; k < s.channels; ++k) {
        const double n = noise > 0.0 ? noise * gauss(rng) : 0.0;
        const double sign = (k % 2 == 0) ? 1.0 : -1.0;
        s.pixel(y, x, k) = std::clamp(bg.level[k] + sign * wave + n, 0.0, 1.0);
      }
    }
  }

  const bool outlier = spread > 0.0 && unit(rng) < cfg.outlier_prob;
  const bool secondary = spread > 0.0 && unit(rng) < cfg.secondary_prob;
  Instance primary = jitter_instance(templates[class_id - 1], cfg, spread, outlier, rng);

  if (secondary) {
    std::uniform_int_distribution<int> pick(1, cfg.num_classes - 1);
    int other = pick(rng);
    if (other >= class_id) ++other;
    Instance inst = jitter_instance(templates[other - 1], cfg, spread, false, rng);
    inst.radius = std::max(1.5, inst.radius * 0.7);
    // Place the secondary object in the quadrant opposite the primary one.
    inst.cy = primary.cy < cfg.height / 2.0 ? cfg.height * 0.78 : cfg.height * 0.22;
    inst.cx = primary.cx < cfg.width / 2.0 ? cfg.width * 0.78 : cfg.width * 0.22;
    paint(s, inst, other, noise, rng);
  }
  paint(s, primary, class_id, noise, rng);

  if (s.count(class_id) == 0) {
    const int y = static_cast<int>(std::lround(primary.cy));
    const int x = static_cast<int>(std::lround(primary.cx));
    s.label(y, x) = class_id;
    for (int k = 0; k < s.channels; ++k) s.pixel(y, x, k) = primary.color[k];
  }
  return s;
}

}  // namespace

World generate_world(const WorldConfig& config) {
  config.validate();
  const auto templates = make_templates(config);
  const auto bg = make_background(config);

  World world;
  world.config = config;
  world.train.reserve(static_cast<std::size_t>(config.num_classes) * config.samples_per_class);
  for (int c = 1; c <= config.num_classes; ++c) {
    for (int k = 0; k < config.samples_per_class; ++k) {
      Rng rng = make_rng(config.seed, {0x5a, static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(k)});
      const int id = static_cast<int>(world.train.size());
      world.train.push_back(make_sample(id, c, config, templates, bg, rng));
    }
  }
  for (int c = 1; c <= config.num_classes; ++c) {
    for (int k = 0; k < config.test_samples_per_class; ++k) {
      Rng rng = make_rng(config.seed, {0x7e57, static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(k)});
      const int id = static_cast<int>(world.train.size() + world.test.size());
      world.test.push_back(make_sample(id, c, config, templates, bg, rng));
    }
  }
  return world;
}

const std::vector<int>& StagePartition::classes(int t) const {
  if (t < 1 || t > num_stages()) {
    throw RangeError("stage index " + std::to_string(t) + " outside [1, " +
                     std::to_string(num_stages()) + "]");
  }
  return stages[t - 1];
}

std::vector<int> StagePartition::seen_through(int t) const {
  if (t < 1 || t > num_stages()) {
    throw RangeError("stage index " + std::to_string(t) + " outside [1, " +
                     std::to_string(num_stages()) + "]");
  }
  std::vector<int> out;
  for (int s = 0; s < t; ++s) out.insert(out.end(), stages[s].begin(), stages[s].end());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> StagePartition::all_classes() const {
  return stages.empty() ? std::vector<int>{} : seen_through(num_stages());
}

void StagePartition::validate(std::span<const int> classes) const {
  if (stages.empty()) throw ConfigError("partition has no stages");
  std::set<int> seen;
  for (const auto& stage : stages) {
    if (stage.empty()) throw ConfigError("partition contains an empty stage");
    for (int c : stage) {
      if (!seen.insert(c).second) {
        throw ConfigError("class " + std::to_string(c) + " appears in more than one stage");
      }
    }
  }
  const std::set<int> expected(classes.begin(), classes.end());
  if (seen != expected) throw ConfigError("partition does not cover exactly the world's classes");
  if (2 * stages.front().size() < expected.size()) {
    throw ConfigError("first stage must hold at least half of the classes");
  }
}

void StagePartition::validate(int num_classes) const {
  std::vector<int> all(num_classes);
  for (int c = 0; c < num_classes; ++c) all[c] = c + 1;
  validate(all);
}

StagePartition StagePartition::incremental(int num_classes, int initial, int increment) {
  if (initial < 1 || initial > num_classes || increment < 1) {
    throw ConfigError("invalid incremental partition " + std::to_string(initial) + "-" +
                      std::to_string(increment));
  }
  StagePartition p;
  std::vector<int> first;
  for (int c = 1; c <= initial; ++c) first.push_back(c);
  p.stages.push_back(std::move(first));
  for (int c = initial + 1; c <= num_classes; c += increment) {
    std::vector<int> stage;
    for (int k = c; k < std::min(num_classes + 1, c + increment); ++k) stage.push_back(k);
    p.stages.push_back(std::move(stage));
  }
  p.validate(num_classes);
  return p;
}

Sample restrict_labels(const Sample& sample, std::span<const int> keep) {
  Sample out = sample;
  for (int& l : out.labels) {
    if (l != 0 && std::find(keep.begin(), keep.end(), l) == keep.end()) l = 0;
  }
  return out;
}

StageDataset make_css_view(std::span<const Sample> samples, const StagePartition& partition,
                           int t) {
  const auto& current = partition.classes(t);
  StageDataset view;
  view.stage_index = t;
  view.current_classes = current;
  std::sort(view.current_classes.begin(), view.current_classes.end());
  for (const Sample& s : samples) {
    const bool hit = std::any_of(s.labels.begin(), s.labels.end(), [&](int l) {
      return l != 0 && std::binary_search(view.current_classes.begin(),
                                          view.current_classes.end(), l);
    });
    if (!hit) continue;
    Sample copy = restrict_labels(s, view.current_classes);
    copy.source_stage = t;
    view.samples.push_back(std::move(copy));
  }
  return view;
}

namespace {

bool covers(const std::vector<Sample>& samples, const std::vector<int>& classes) {
  for (int c : classes) {
    const bool found = std::any_of(samples.begin(), samples.end(),
                                   [&](const Sample& s) { return s.count(c) > 0; });
    if (!found) return false;
  }
  return true;
}

}  // namespace

std::pair<StageDataset, StageDataset> split_train_reward(const StageDataset& d1,
                                                         double train_fraction,
                                                         std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ArgumentError("train_fraction must lie in (0, 1)");
  }
  const int n = static_cast<int>(d1.samples.size());
  const int n_train = static_cast<int>(std::lround(train_fraction * n));
  if (n_train < 1 || n_train > n - 1) {
    throw PartitionError("split of " + std::to_string(n) + " samples at fraction " +
                         std::to_string(train_fraction) + " leaves an empty side");
  }
  // Only classes actually present in D_1 can be required in both splits.
  std::vector<int> required;
  for (int c : d1.current_classes) {
    if (covers(d1.samples, {c})) required.push_back(c);
  }

  std::vector<int> order(n);
  for (int attempt = 0; attempt < kSplitRetryLimit; ++attempt) {
    for (int i = 0; i < n; ++i) order[i] = i;
    Rng rng = make_rng(seed, {0x5b17, static_cast<std::uint64_t>(attempt)});
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> train_idx(order.begin(), order.begin() + n_train);
    std::vector<int> reward_idx(order.begin() + n_train, order.end());
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(reward_idx.begin(), reward_idx.end());

    StageDataset train{d1.stage_index, d1.current_classes, {}};
    StageDataset reward{d1.stage_index, d1.current_classes, {}};
    for (int i : train_idx) train.samples.push_back(d1.samples[i]);
    for (int i : reward_idx) reward.samples.push_back(d1.samples[i]);
    if (covers(train.samples, required) && covers(reward.samples, required)) {
      return {std::move(train), std::move(reward)};
    }
  }
  throw PartitionError("could not cover every stage-1 class in both splits after " +
                       std::to_string(kSplitRetryLimit) + " attempts");
}

StagePartition reallocate_classes(std::span<const int> classes, std::uint64_t seed,
                                  StageBounds bounds) {
  const int n = static_cast<int>(classes.size());
  if (n < 4) throw ArgumentError("reallocation needs at least 4 classes");
  const int min_first = n / 2 + 1;
  const int feasible = n - min_first + 1;
  const int hi = std::clamp(bounds.max_stages, 1, feasible);
  const int lo = std::clamp(bounds.min_stages, 1, hi);

  Rng rng = make_rng(seed, {0x4ea1});
  const int stages = std::uniform_int_distribution<int>(lo, hi)(rng);
  const int first = std::uniform_int_distribution<int>(min_first, n - (stages - 1))(rng);

  std::vector<int> shuffled(classes.begin(), classes.end());
  std::shuffle(shuffled.begin(), shuffled.end(), rng);

  // Remaining classes split into stages-1 non-empty runs via random cut points.
  const int rest = n - first;
  std::vector<int> cuts;
  if (stages > 1) {
    std::vector<int> positions(rest - 1);
    for (int i = 0; i < rest - 1; ++i) positions[i] = i + 1;
    std::shuffle(positions.begin(), positions.end(), rng);
    cuts.assign(positions.begin(), positions.begin() + (stages - 2));
    std::sort(cuts.begin(), cuts.end());
  }

  StagePartition p;
  p.stages.emplace_back(shuffled.begin(), shuffled.begin() + first);
  int begin = 0;
  for (int k = 0; k < stages - 1; ++k) {
    const int end = k < static_cast<int>(cuts.size()) ? cuts[k] : rest;
    p.stages.emplace_back(shuffled.begin() + first + begin, shuffled.begin() + first + end);
    begin = end;
  }
  for (auto& s : p.stages) std::sort(s.begin(), s.end());
  return p;
}

}  // namespace memsel
