#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "memsel/agent.hpp"
#include "memsel/orchestrator.hpp"
#include "memsel/policy_actions.hpp"
#include "memsel/segmenter.hpp"
#include "memsel/state_features.hpp"
#include "memsel/synthetic_tasks.hpp"

namespace memsel {

// One file, sections: world, segmenter, graph, sinkhorn, state, agent,
// enhance, training, deployment, plus top-level workers.
struct RunConfig {
  WorldConfig world;
  SegmenterConfig segmenter;
  StateConfig state;
  AgentConfig agent;
  EnhanceConfig enhance;
  TrainRunConfig training;
  DeployConfig deployment;
  int workers = 1;

  void validate() const;
};

// Missing world.seed / world.num_classes, unknown keys and wrong types throw
// ConfigError naming the key.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& config);

RunConfig load_config(const std::filesystem::path& path);

// The config with every default materialised; JSON dump with sorted keys.
std::string canonical_config(const RunConfig& config);

}  // namespace memsel
