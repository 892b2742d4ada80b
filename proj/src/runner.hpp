#pragma once

#include <string>

#include <json.hpp>

#include "dataset.hpp"
#include "optimizer.hpp"

namespace ego {

/// Orchestration shared by the C API and tests: building gateways from an
/// options document, run directories, replay, and reports. Option schemas
/// are documented in the README.

/// Applies an SCG completeness setting ("full", "empty", "reversed",
/// "frac=<x>") to a graph text.
std::string apply_scg_setting(const std::string& scg_text, const std::vector<NodeId>& vocabulary,
                              const std::string& setting, std::uint64_t seed);

nlohmann::json run_optimize(const TaskSpec& spec, const RecordTable& table,
                            const std::string& task_config_path, const nlohmann::json& options);

nlohmann::json run_evaluate(const TaskSpec& spec, const RecordTable& table,
                            const nlohmann::json& options);

nlohmann::json run_replay(const std::string& run_dir, const nlohmann::json& options);

nlohmann::json cost_report_from_dir(const std::string& run_dir);

/// Writes a starter task (task.json + data.csv); returns the config path.
std::string init_task_scaffold(const std::string& dir);

nlohmann::json task_info(const TaskSpec& spec, const RecordTable& table);

}  // namespace ego
