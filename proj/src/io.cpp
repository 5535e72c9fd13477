#include "memsel/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "memsel/config.hpp"
#include "memsel/errors.hpp"

namespace memsel {

using nlohmann::json;

namespace {

constexpr const char* kWorldFormat = "memsel-world";
constexpr const char* kAgentFormat = "memsel-agent";
constexpr const char* kModelFormat = "memsel-model";
constexpr int kFormatVersion = 1;

void expect_format(const json& j, const char* format) {
  if (!j.is_object() || j.value("format", std::string{}) != format) {
    throw MismatchError(std::string("expected a ") + format + " file");
  }
  if (j.value("version", 0) != kFormatVersion) {
    throw MismatchError(std::string("unsupported ") + format + " version");
  }
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  std::vector<double> data;
  data.reserve(m.size());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw MismatchError("matrix shape does not match its data");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[r * cols + c];
  }
  return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vector_from_json(const json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(data.data(), static_cast<Eigen::Index>(data.size()));
}

json int_map_to_json(const std::map<int, int>& m) {
  json out = json::array();
  for (const auto& [k, v] : m) out.push_back({k, v});
  return out;
}

json double_map_to_json(const std::map<int, double>& m) {
  json out = json::array();
  for (const auto& [k, v] : m) out.push_back({k, v});
  return out;
}

template <class V>
std::map<int, V> map_from_json(const json& j) {
  std::map<int, V> out;
  for (const json& kv : j) out[kv.at(0).get<int>()] = kv.at(1).get<V>();
  return out;
}

// Parse errors inside a typed loader surface as content mismatches.
template <class Fn>
auto guarded(const char* what, Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw MismatchError(std::string("malformed ") + what + ": " + e.what());
  }
}

}  // namespace

json sample_to_json(const Sample& s) {
  return {{"id", s.id},
          {"height", s.height},
          {"width", s.width},
          {"channels", s.channels},
          {"source_stage", s.source_stage},
          {"enhanced", s.enhanced},
          {"pixels", s.pixels},
          {"labels", s.labels}};
}

Sample sample_from_json(const json& j) {
  Sample s(j.at("id").get<int>(), j.at("height").get<int>(), j.at("width").get<int>(),
           j.at("channels").get<int>());
  s.source_stage = j.at("source_stage").get<int>();
  s.enhanced = j.at("enhanced").get<bool>();
  auto pixels = j.at("pixels").get<std::vector<double>>();
  auto labels = j.at("labels").get<std::vector<int>>();
  if (pixels.size() != s.pixels.size() || labels.size() != s.labels.size()) {
    throw MismatchError("sample " + std::to_string(s.id) + " has inconsistent sizes");
  }
  s.pixels = std::move(pixels);
  s.labels = std::move(labels);
  return s;
}

json world_config_to_json(const WorldConfig& c) {
  RunConfig rc;
  rc.world = c;
  return config_to_json(rc).at("world");
}

json world_to_json(const World& world) {
  json train = json::array();
  for (const Sample& s : world.train) train.push_back(sample_to_json(s));
  json test = json::array();
  for (const Sample& s : world.test) test.push_back(sample_to_json(s));
  return {{"format", kWorldFormat},
          {"version", kFormatVersion},
          {"config", world_config_to_json(world.config)},
          {"train", std::move(train)},
          {"test", std::move(test)}};
}

World world_from_json(const json& j) {
  expect_format(j, kWorldFormat);
  return guarded("world", [&] {
    World w;
    w.config = config_from_json(json{{"world", j.at("config")}}).world;
    for (const json& s : j.at("train")) w.train.push_back(sample_from_json(s));
    for (const json& s : j.at("test")) w.test.push_back(sample_from_json(s));
    return w;
  });
}

json agent_to_json(const AgentNet& agent) {
  RunConfig rc;
  rc.agent = agent.config();
  return {{"format", kAgentFormat},
          {"version", kFormatVersion},
          {"config", config_to_json(rc).at("agent")},
          {"policy", vector_to_json(agent.policy().flatten())},
          {"target", vector_to_json(agent.target().flatten())},
          {"velocity", vector_to_json(agent.velocity().flatten())},
          {"td_steps", agent.td_steps()},
          {"syncs", agent.syncs()}};
}

AgentNet agent_from_json(const json& j) {
  expect_format(j, kAgentFormat);
  return guarded("agent", [&] {
    const AgentConfig cfg = config_from_json(json{{"world", {{"num_classes", 10}, {"seed", 0}}},
                                                  {"agent", j.at("config")}})
                                .agent;
    const auto load = [&](const char* key) {
      MlpParams p = MlpParams::zeros(cfg.hidden1, cfg.hidden2);
      const Eigen::VectorXd flat = vector_from_json(j.at(key));
      if (flat.size() != p.size()) throw MismatchError(std::string("agent ") + key + " has the wrong size");
      p.unflatten(flat);
      return p;
    };
    return AgentNet::from_parameters(cfg, load("policy"), load("target"), load("velocity"),
                                     j.at("td_steps").get<long long>(),
                                     j.at("syncs").get<long long>());
  });
}

json model_to_json(const Segmenter& model) {
  RunConfig rc;
  rc.segmenter = model.config();
  return {{"format", kModelFormat},
          {"version", kFormatVersion},
          {"config", config_to_json(rc).at("segmenter")},
          {"in_channels", model.in_channels()},
          {"classes", model.classes()},
          {"filter", matrix_to_json(model.filter())},
          {"filter_bias", vector_to_json(model.filter_bias())},
          {"head", matrix_to_json(model.head())},
          {"head_bias", vector_to_json(model.head_bias())},
          {"train_calls", model.train_calls()}};
}

Segmenter model_from_json(const json& j) {
  expect_format(j, kModelFormat);
  return guarded("model", [&] {
    const SegmenterConfig cfg =
        config_from_json(json{{"world", {{"num_classes", 10}, {"seed", 0}}},
                              {"segmenter", j.at("config")}})
            .segmenter;
    return Segmenter::from_parameters(
        j.at("in_channels").get<int>(), cfg, j.at("classes").get<std::vector<int>>(),
        matrix_from_json(j.at("filter")), vector_from_json(j.at("filter_bias")),
        matrix_from_json(j.at("head")), vector_from_json(j.at("head_bias")),
        j.at("train_calls").get<std::uint64_t>());
  });
}

json stage_record_to_json(const StageRecord& r) {
  json candidates = json::array();
  for (const CandidateRecord& c : r.candidates) {
    candidates.push_back({c.sample_id, c.source_stage, c.primary_class, c.div, c.score, c.selected});
  }
  return {{"stage", r.stage},
          {"classes", r.classes},
          {"seen", r.seen},
          {"reward", r.reward ? json(*r.reward) : json(nullptr)},
          {"eval_ious", double_map_to_json(r.eval_ious)},
          {"state_ious", double_map_to_json(r.state_ious)},
          {"selected_ids", r.selected_ids},
          {"selected_source_stages", r.selected_source_stages},
          {"selected_scores", r.selected_scores},
          {"available_per_class", int_map_to_json(r.available_per_class)},
          {"selected_per_class", int_map_to_json(r.selected_per_class)},
          {"candidates", std::move(candidates)},
          {"memory_size", r.memory_size},
          {"enhanced", r.enhanced},
          {"mean_ascent", r.mean_ascent},
          {"duration_seconds", r.duration_seconds},
          {"warnings", r.warnings}};
}

StageRecord stage_record_from_json(const json& j) {
  return guarded("stage record", [&] {
    StageRecord r;
    r.stage = j.at("stage").get<int>();
    r.classes = j.at("classes").get<std::vector<int>>();
    r.seen = j.at("seen").get<std::vector<int>>();
    if (!j.at("reward").is_null()) r.reward = j.at("reward").get<double>();
    r.eval_ious = map_from_json<double>(j.at("eval_ious"));
    r.state_ious = map_from_json<double>(j.at("state_ious"));
    r.selected_ids = j.at("selected_ids").get<std::vector<int>>();
    r.selected_source_stages = j.at("selected_source_stages").get<std::vector<int>>();
    r.selected_scores = j.at("selected_scores").get<std::vector<double>>();
    r.available_per_class = map_from_json<int>(j.at("available_per_class"));
    r.selected_per_class = map_from_json<int>(j.at("selected_per_class"));
    for (const json& c : j.at("candidates")) {
      r.candidates.push_back({c.at(0).get<int>(), c.at(1).get<int>(), c.at(2).get<int>(),
                              c.at(3).get<double>(), c.at(4).get<double>(), c.at(5).get<bool>()});
    }
    r.memory_size = j.at("memory_size").get<std::size_t>();
    r.enhanced = j.at("enhanced").get<int>();
    r.mean_ascent = j.at("mean_ascent").get<double>();
    r.duration_seconds = j.at("duration_seconds").get<double>();
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    return r;
  });
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

json read_json(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw MismatchError(path.string() + " is not valid JSON: " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const json& j) {
  write_text(path, j.dump() + "\n");
}

std::string file_fingerprint(const std::filesystem::path& path) {
  const std::string bytes = read_text(path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  // no signed zero in the CSVs
  if (std::string(buf) == "-0.000000") return "0.000000";
  return buf;
}

}  // namespace memsel
