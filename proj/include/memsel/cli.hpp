#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "memsel/config.hpp"

namespace memsel {

inline constexpr const char* kToolVersion = "0.1.0";

// Flags as given on the command line, before the config file is read.
struct CommandOptions {
  std::string command;  // gen-world | train-agent | deploy | baseline | analyze
  std::filesystem::path config;
  std::filesystem::path world;
  std::filesystem::path agent;
  std::filesystem::path run;  // analyze: directory holding stages.jsonl
  std::filesystem::path out;
  std::string policy = "random";
  bool enhance = true;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
};

// A fully resolved command: what the manifest records and rerun replays.
struct Invocation {
  std::string command;
  RunConfig config;
  std::filesystem::path world;
  std::filesystem::path agent;
  std::filesystem::path run;
  std::string policy;
  bool enhance = true;
  std::optional<std::uint64_t> seed_override;
};

// Loads the config (where the command needs one) and applies flag overrides.
// --seed sets world.seed for gen-world, training.seed for train-agent and
// deployment.seed for deploy/baseline.
Invocation resolve(const CommandOptions& options);

nlohmann::json make_manifest(const Invocation& inv, const std::filesystem::path& out);
Invocation invocation_from_manifest(const nlohmann::json& manifest);

// Writes manifest.json first, then runs the command into `out`.
void execute(const Invocation& inv, const std::filesystem::path& out);

// Re-runs the command recorded in a manifest into a new directory; inputs
// whose fingerprint changed raise MismatchError.
void rerun(const std::filesystem::path& manifest, const std::filesystem::path& out);

}  // namespace memsel
