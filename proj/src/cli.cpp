#include "memsel/cli.hpp"

#include <set>
#include <sstream>

#include "memsel/errors.hpp"
#include "memsel/io.hpp"
#include "memsel/log.hpp"
#include "memsel/orchestrator.hpp"

namespace memsel {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool needs_config(const std::string& command) { return command != "analyze"; }

void require_file(const fs::path& p, const char* flag) {
  if (p.empty()) throw ConfigError(std::string("missing required option ") + flag);
}

std::string csv_rows(const std::string& header, const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream os;
  os << header << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
    os << '\n';
  }
  return os.str();
}

World load_world(const Invocation& inv) {
  World world = world_from_json(read_json(inv.world));
  if (!(world.config == inv.config.world)) {
    throw MismatchError("world file " + inv.world.string() +
                        " was generated from a different world config");
  }
  return world;
}

void write_deployment(const fs::path& out, const std::string& setting, const DeployResult& d) {
  const GroupMetrics& m = d.metrics;
  write_text(out / "metrics.csv",
             csv_rows("setting,group,mIoU", {{setting, "initial", format_number(m.initial)},
                                             {setting, "later", format_number(m.later)},
                                             {setting, "all", format_number(m.all)}}));
  std::vector<std::vector<std::string>> per_class;
  for (const auto& [c, iou] : d.final_ious) per_class.push_back({std::to_string(c), format_number(iou)});
  write_text(out / "class_iou.csv", csv_rows("class,iou", per_class));

  std::string lines;
  for (const StageRecord& r : d.run.records) lines += stage_record_to_json(r).dump() + "\n";
  write_text(out / "stages.jsonl", lines);
  write_json(out / "model.json", model_to_json(d.run.model));
  json memory = json::array();
  for (const Sample& s : d.run.memory.samples) memory.push_back(sample_to_json(s));
  write_json(out / "memory.json", memory);
}

void run_gen_world(const Invocation& inv, const fs::path& out) {
  write_json(out / "world.json", world_to_json(generate_world(inv.config.world)));
}

void run_train_agent(const Invocation& inv, const fs::path& out) {
  const World world = load_world(inv);
  const TrainingResult tr = train_agent(world, inv.config);
  write_json(out / "agent.json", agent_to_json(tr.agent));

  std::vector<std::vector<std::string>> rows;
  std::string lines;
  for (const IterationLog& l : tr.log) {
    double mean_reward = 0.0;
    for (double r : l.rewards) mean_reward += r;
    if (!l.rewards.empty()) mean_reward /= static_cast<double>(l.rewards.size());
    rows.push_back({std::to_string(l.iteration), std::to_string(l.stages),
                    format_number(l.td_loss), format_number(mean_reward),
                    l.rewards.empty() ? "" : format_number(l.rewards.back()),
                    l.aborted ? "1" : "0"});
    lines += json{{"iteration", l.iteration},
                  {"stages", l.stages},
                  {"partition", l.partition},
                  {"rewards", l.rewards},
                  {"td_loss", l.td_loss},
                  {"aborted", l.aborted},
                  {"duration_seconds", l.duration_seconds}}
                 .dump() +
             "\n";
  }
  write_text(out / "training_log.csv",
             csv_rows("iteration,stages,td_loss,mean_reward,final_reward,aborted", rows));
  write_text(out / "training_log.jsonl", lines);
}

void run_deploy(const Invocation& inv, const fs::path& out) {
  const World world = load_world(inv);
  const AgentNet agent = agent_from_json(read_json(inv.agent));
  if (agent.config().hidden1 != inv.config.agent.hidden1 ||
      agent.config().hidden2 != inv.config.agent.hidden2) {
    throw MismatchError("agent checkpoint layer sizes differ from the configured agent");
  }
  const DeployResult d = deploy(world, inv.config, Policy::kAgent, inv.enhance, &agent);
  write_deployment(out, inv.enhance ? "agent+enhance" : "agent", d);
}

void run_baseline(const Invocation& inv, const fs::path& out) {
  const Policy policy = parse_policy(inv.policy);
  if (policy == Policy::kAgent) throw ConfigError("use deploy for the agent policy");
  const World world = load_world(inv);
  const DeployResult d = deploy(world, inv.config, policy, false, nullptr);
  write_deployment(out, policy_name(policy), d);
}

void run_analyze(const Invocation& inv, const fs::path& out) {
  std::vector<StageRecord> records;
  std::istringstream in(read_text(inv.run / "stages.jsonl"));
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    try {
      records.push_back(stage_record_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw MismatchError("stages.jsonl is not valid JSON lines: " + std::string(e.what()));
    }
  }
  if (records.empty()) throw MismatchError("no stage records in " + inv.run.string());
  const PolicyReport report = analyze_policy(records);

  std::vector<std::vector<std::string>> rows;
  for (const ClassSelectionRow& r : report.classes) {
    rows.push_back({std::to_string(r.stage), std::to_string(r.class_id), format_number(r.iou),
                    format_number(r.iou_rank), std::to_string(r.available),
                    std::to_string(r.selected), format_number(r.selection_rate)});
  }
  write_text(out / "class_selection.csv",
             csv_rows("stage,class,iou,iou_rank,available,selected,selection_rate", rows));

  rows.clear();
  for (const StageRecord& r : records) {
    for (const CandidateRecord& c : r.candidates) {
      rows.push_back({std::to_string(r.stage), std::to_string(c.sample_id),
                      std::to_string(c.source_stage), std::to_string(c.primary_class),
                      format_number(c.div), format_number(c.score), c.selected ? "1" : "0"});
    }
  }
  write_text(out / "diversity.csv",
             csv_rows("stage,sample_id,source_stage,class,div,score,selected", rows));

  const auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : ""; };
  write_text(out / "correlation.csv",
             csv_rows("metric,value",
                      {{"rank_correlation", opt(report.rank_correlation)},
                       {"count_rank_correlation", opt(report.count_rank_correlation)},
                       {"stages_used", std::to_string(report.stages_used)},
                       {"mean_div_selected", format_number(report.mean_div_selected)},
                       {"mean_div_unselected", format_number(report.mean_div_unselected)}}));
}

json input_entry(const fs::path& p) {
  if (p.empty()) return nullptr;
  return {{"path", fs::absolute(p).lexically_normal().string()}, {"fingerprint", file_fingerprint(p)}};
}

}  // namespace

Invocation resolve(const CommandOptions& o) {
  static const std::set<std::string> kCommands = {"gen-world", "train-agent", "deploy", "baseline",
                                                  "analyze"};
  if (kCommands.count(o.command) == 0) throw ConfigError("unknown command '" + o.command + "'");
  Invocation inv;
  inv.command = o.command;
  inv.policy = o.policy;
  inv.enhance = o.enhance;
  inv.seed_override = o.seed;
  if (needs_config(o.command)) {
    require_file(o.config, "--config");
    inv.config = load_config(o.config);
  }
  if (o.command == "train-agent" || o.command == "deploy" || o.command == "baseline") {
    require_file(o.world, "--world");
    inv.world = fs::absolute(o.world).lexically_normal();
  }
  if (o.command == "deploy") {
    require_file(o.agent, "--agent");
    inv.agent = fs::absolute(o.agent).lexically_normal();
  }
  if (o.command == "analyze") {
    require_file(o.run, "--run");
    inv.run = fs::absolute(o.run).lexically_normal();
  }
  if (o.command == "baseline") parse_policy(o.policy);
  if (o.seed) {
    if (o.command == "gen-world") inv.config.world.seed = *o.seed;
    if (o.command == "train-agent") inv.config.training.seed = *o.seed;
    if (o.command == "deploy" || o.command == "baseline") inv.config.deployment.seed = *o.seed;
  }
  if (o.workers) inv.config.workers = *o.workers;
  if (needs_config(o.command)) inv.config.validate();
  return inv;
}

json make_manifest(const Invocation& inv, const fs::path& out) {
  const RunConfig& c = inv.config;
  json inputs = json::object();
  if (!inv.world.empty()) inputs["world"] = input_entry(inv.world);
  if (!inv.agent.empty()) inputs["agent"] = input_entry(inv.agent);
  if (!inv.run.empty()) inputs["stages"] = input_entry(inv.run / "stages.jsonl");
  json m = {{"tool", "memsel"},
            {"version", kToolVersion},
            {"command", inv.command},
            {"out", fs::absolute(out).lexically_normal().string()},
            {"inputs", inputs},
            {"policy", inv.policy},
            {"enhance", inv.enhance},
            {"seed_override", inv.seed_override ? json(*inv.seed_override) : json(nullptr)}};
  if (needs_config(inv.command)) {
    m["config"] = config_to_json(c);
    m["seeds"] = {{"world", c.world.seed},           {"segmenter", c.segmenter.seed},
                  {"graph", c.state.graph.seed},     {"agent", c.agent.seed},
                  {"enhance", c.enhance.seed},       {"training", c.training.seed},
                  {"deployment", c.deployment.seed}};
  }
  return m;
}

Invocation invocation_from_manifest(const json& m) {
  try {
    if (m.value("tool", std::string{}) != "memsel") throw MismatchError("not a memsel manifest");
    Invocation inv;
    inv.command = m.at("command").get<std::string>();
    inv.policy = m.at("policy").get<std::string>();
    inv.enhance = m.at("enhance").get<bool>();
    if (!m.at("seed_override").is_null()) inv.seed_override = m.at("seed_override").get<std::uint64_t>();
    if (m.contains("config")) inv.config = config_from_json(m.at("config"));
    const json& in = m.at("inputs");
    const auto check = [&](const char* key) -> fs::path {
      if (!in.contains(key) || in.at(key).is_null()) return {};
      const fs::path p = in.at(key).at("path").get<std::string>();
      const std::string expected = in.at(key).at("fingerprint").get<std::string>();
      if (file_fingerprint(p) != expected) {
        throw MismatchError("input " + p.string() + " changed since the recorded run");
      }
      return p;
    };
    inv.world = check("world");
    inv.agent = check("agent");
    const fs::path stages = check("stages");
    if (!stages.empty()) inv.run = stages.parent_path();
    return inv;
  } catch (const json::exception& e) {
    throw MismatchError(std::string("malformed manifest: ") + e.what());
  }
}

void execute(const Invocation& inv, const fs::path& out) {
  if (out.empty()) throw ConfigError("missing required option --out");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create " + out.string() + ": " + ec.message());
  write_text(out / "manifest.json", make_manifest(inv, out).dump(2) + "\n");
  if (needs_config(inv.command)) write_text(out / "config.json", canonical_config(inv.config) + "\n");

  log(LogLevel::kInfo, inv.command, " -> ", out.string());
  if (inv.command == "gen-world") {
    run_gen_world(inv, out);
  } else if (inv.command == "train-agent") {
    run_train_agent(inv, out);
  } else if (inv.command == "deploy") {
    run_deploy(inv, out);
  } else if (inv.command == "baseline") {
    run_baseline(inv, out);
  } else if (inv.command == "analyze") {
    run_analyze(inv, out);
  } else {
    throw ConfigError("unknown command '" + inv.command + "'");
  }
}

void rerun(const fs::path& manifest, const fs::path& out) {
  execute(invocation_from_manifest(read_json(manifest)), out);
}

}  // namespace memsel
