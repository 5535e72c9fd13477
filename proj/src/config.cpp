#include "memsel/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "memsel/errors.hpp"

namespace memsel {

using nlohmann::json;

namespace {

// Reads the keys of one section and rejects anything it did not consume.
class Section {
 public:
  Section(const json& root, std::string name) : name_(std::move(name)) {
    if (!root.contains(name_)) return;
    node_ = &root.at(name_);
    if (!node_->is_object()) throw ConfigError("'" + name_ + "' must be an object");
  }

  bool present() const { return node_ != nullptr; }

  template <class T>
  void get(const std::string& key, T& out, bool required = false) {
    used_.insert(key);
    if (node_ == nullptr || !node_->contains(key)) {
      if (required) throw ConfigError("missing required key '" + name_ + "." + key + "'");
      return;
    }
    const json& v = node_->at(key);
    const std::string path = name_ + "." + key;
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("'" + path + "' must be a boolean");
      out = v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError("'" + path + "' must be a string");
      out = v.get<std::string>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError("'" + path + "' must be a number");
      out = v.get<T>();
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
        throw ConfigError("'" + path + "' must be a non-negative integer");
      }
      out = v.get<T>();
    } else {
      if (!v.is_number_integer()) throw ConfigError("'" + path + "' must be an integer");
      const long long x = v.get<long long>();
      if (x < std::numeric_limits<T>::min() || x > std::numeric_limits<T>::max()) {
        throw ConfigError("'" + path + "' is out of range");
      }
      out = static_cast<T>(x);
    }
  }

  void finish() const {
    if (node_ == nullptr) return;
    for (const auto& [key, value] : node_->items()) {
      if (used_.count(key) == 0) throw ConfigError("unknown key '" + name_ + "." + key + "'");
    }
  }

 private:
  std::string name_;
  const json* node_ = nullptr;
  std::set<std::string> used_;
};

std::string mode_name(GradientMode mode) {
  return mode == GradientMode::kAnalytic ? "analytic" : "finite_difference";
}

GradientMode parse_mode(const std::string& s) {
  if (s == "analytic") return GradientMode::kAnalytic;
  if (s == "finite_difference") return GradientMode::kFiniteDifference;
  throw ConfigError("enhance.mode must be 'analytic' or 'finite_difference'");
}

}  // namespace

void RunConfig::validate() const {
  world.validate();
  segmenter.validate();
  state.validate();
  agent.validate();
  enhance.validate();
  training.validate();
  deployment.validate();
  if (workers < 1) throw ConfigError("workers must be >= 1");
}

RunConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> kSections = {"world",  "segmenter", "graph",    "sinkhorn",
                                                  "state",  "agent",     "enhance",  "training",
                                                  "deployment", "workers"};
  for (const auto& [key, value] : j.items()) {
    if (kSections.count(key) == 0) throw ConfigError("unknown key '" + key + "'");
  }
  RunConfig c;

  Section w(j, "world");
  if (!w.present()) throw ConfigError("missing required key 'world'");
  w.get("num_classes", c.world.num_classes, true);
  w.get("seed", c.world.seed, true);
  w.get("height", c.world.height);
  w.get("width", c.world.width);
  w.get("feature_dim", c.world.feature_dim);
  w.get("samples_per_class", c.world.samples_per_class);
  w.get("test_samples_per_class", c.world.test_samples_per_class);
  w.get("intra_class_spread", c.world.intra_class_spread);
  w.get("secondary_prob", c.world.secondary_prob);
  w.get("outlier_prob", c.world.outlier_prob);
  w.finish();

  Section s(j, "segmenter");
  s.get("hidden", c.segmenter.hidden);
  s.get("learning_rate", c.segmenter.learning_rate);
  s.get("momentum", c.segmenter.momentum);
  s.get("batch_size", c.segmenter.batch_size);
  s.get("init_scale", c.segmenter.init_scale);
  s.get("head_init_scale", c.segmenter.head_init_scale);
  s.get("pseudo_threshold", c.segmenter.pseudo_threshold);
  s.get("seed", c.segmenter.seed);
  s.finish();

  Section g(j, "graph");
  g.get("superpixels", c.state.graph.superpixels);
  g.get("spatial_weight", c.state.graph.spatial_weight);
  g.get("kmeans_iterations", c.state.graph.kmeans_iterations);
  g.get("seed", c.state.graph.seed);
  g.finish();

  Section k(j, "sinkhorn");
  k.get("reg", c.state.sinkhorn.reg);
  k.get("iterations", c.state.sinkhorn.iterations);
  k.get("round", c.state.sinkhorn.round);
  k.finish();

  Section st(j, "state");
  st.get("support_fraction", c.state.support_fraction);
  st.get("min_support", c.state.min_support);
  st.get("representative_fraction", c.state.representative_fraction);
  st.finish();

  Section a(j, "agent");
  a.get("hidden1", c.agent.hidden1);
  a.get("hidden2", c.agent.hidden2);
  a.get("gamma", c.agent.gamma);
  a.get("sync_period", c.agent.sync_period);
  a.get("learning_rate", c.agent.learning_rate);
  a.get("momentum", c.agent.momentum);
  a.get("init_scale", c.agent.init_scale);
  a.get("seed", c.agent.seed);
  a.finish();

  Section e(j, "enhance");
  std::string mode = mode_name(c.enhance.mode);
  e.get("epsilon", c.enhance.epsilon);
  e.get("steps", c.enhance.steps);
  e.get("clamp_low", c.enhance.clamp_low);
  e.get("clamp_high", c.enhance.clamp_high);
  e.get("mode", mode);
  e.get("fd_pixels", c.enhance.fd_pixels);
  e.get("fd_step", c.enhance.fd_step);
  e.get("seed", c.enhance.seed);
  e.finish();
  c.enhance.mode = parse_mode(mode);

  Section t(j, "training");
  t.get("iterations", c.training.iterations);
  t.get("min_stages", c.training.stage_bounds.min_stages);
  t.get("max_stages", c.training.stage_bounds.max_stages);
  t.get("train_fraction", c.training.train_fraction);
  t.get("memory_capacity", c.training.memory_capacity);
  t.get("epochs", c.training.epochs);
  t.get("exploration", c.training.exploration);
  t.get("enhance", c.training.enhance);
  t.get("seed", c.training.seed);
  t.finish();

  Section d(j, "deployment");
  d.get("memory_capacity", c.deployment.memory_capacity);
  d.get("epochs", c.deployment.epochs);
  d.get("initial_classes", c.deployment.initial_classes);
  d.get("increment", c.deployment.increment);
  d.get("seed", c.deployment.seed);
  d.finish();

  if (j.contains("workers")) {
    if (!j.at("workers").is_number_integer()) throw ConfigError("'workers' must be an integer");
    c.workers = j.at("workers").get<int>();
  }
  c.validate();
  return c;
}

json config_to_json(const RunConfig& c) {
  json j;
  j["world"] = {{"num_classes", c.world.num_classes},
                {"seed", c.world.seed},
                {"height", c.world.height},
                {"width", c.world.width},
                {"feature_dim", c.world.feature_dim},
                {"samples_per_class", c.world.samples_per_class},
                {"test_samples_per_class", c.world.test_samples_per_class},
                {"intra_class_spread", c.world.intra_class_spread},
                {"secondary_prob", c.world.secondary_prob},
                {"outlier_prob", c.world.outlier_prob}};
  j["segmenter"] = {{"hidden", c.segmenter.hidden},
                    {"learning_rate", c.segmenter.learning_rate},
                    {"momentum", c.segmenter.momentum},
                    {"batch_size", c.segmenter.batch_size},
                    {"init_scale", c.segmenter.init_scale},
                    {"head_init_scale", c.segmenter.head_init_scale},
                    {"pseudo_threshold", c.segmenter.pseudo_threshold},
                    {"seed", c.segmenter.seed}};
  j["graph"] = {{"superpixels", c.state.graph.superpixels},
                {"spatial_weight", c.state.graph.spatial_weight},
                {"kmeans_iterations", c.state.graph.kmeans_iterations},
                {"seed", c.state.graph.seed}};
  j["sinkhorn"] = {{"reg", c.state.sinkhorn.reg}, {"iterations", c.state.sinkhorn.iterations},
                     {"round", c.state.sinkhorn.round}};
  j["state"] = {{"support_fraction", c.state.support_fraction},
                {"min_support", c.state.min_support},
                {"representative_fraction", c.state.representative_fraction}};
  j["agent"] = {{"hidden1", c.agent.hidden1},
                {"hidden2", c.agent.hidden2},
                {"gamma", c.agent.gamma},
                {"sync_period", c.agent.sync_period},
                {"learning_rate", c.agent.learning_rate},
                {"momentum", c.agent.momentum},
                {"init_scale", c.agent.init_scale},
                {"seed", c.agent.seed}};
  j["enhance"] = {{"epsilon", c.enhance.epsilon},
                  {"steps", c.enhance.steps},
                  {"clamp_low", c.enhance.clamp_low},
                  {"clamp_high", c.enhance.clamp_high},
                  {"mode", mode_name(c.enhance.mode)},
                  {"fd_pixels", c.enhance.fd_pixels},
                  {"fd_step", c.enhance.fd_step},
                  {"seed", c.enhance.seed}};
  j["training"] = {{"iterations", c.training.iterations},
                   {"min_stages", c.training.stage_bounds.min_stages},
                   {"max_stages", c.training.stage_bounds.max_stages},
                   {"train_fraction", c.training.train_fraction},
                   {"memory_capacity", c.training.memory_capacity},
                   {"epochs", c.training.epochs},
                   {"exploration", c.training.exploration},
                   {"enhance", c.training.enhance},
                   {"seed", c.training.seed}};
  j["deployment"] = {{"memory_capacity", c.deployment.memory_capacity},
                     {"epochs", c.deployment.epochs},
                     {"initial_classes", c.deployment.initial_classes},
                     {"increment", c.deployment.increment},
                     {"seed", c.deployment.seed}};
  j["workers"] = c.workers;
  return j;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

std::string canonical_config(const RunConfig& config) { return config_to_json(config).dump(2); }

}  // namespace memsel
