#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "memsel/agent.hpp"
#include "memsel/orchestrator.hpp"
#include "memsel/sample.hpp"
#include "memsel/segmenter.hpp"
#include "memsel/synthetic_tasks.hpp"

namespace memsel {

nlohmann::json sample_to_json(const Sample& s);
Sample sample_from_json(const nlohmann::json& j);

nlohmann::json world_config_to_json(const WorldConfig& c);

nlohmann::json world_to_json(const World& world);
World world_from_json(const nlohmann::json& j);

nlohmann::json agent_to_json(const AgentNet& agent);
AgentNet agent_from_json(const nlohmann::json& j);

nlohmann::json model_to_json(const Segmenter& model);
Segmenter model_from_json(const nlohmann::json& j);

nlohmann::json stage_record_to_json(const StageRecord& r);
StageRecord stage_record_from_json(const nlohmann::json& j);

// Reading throws IoError when the file cannot be read and MismatchError when
// its content is not what was expected.
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);
nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

// FNV-1a over the file bytes, as 16 hex digits.
std::string file_fingerprint(const std::filesystem::path& path);

// Fixed-precision decimal used in every metrics CSV.
std::string format_number(double v);

}  // namespace memsel
