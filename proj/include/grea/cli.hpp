#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "grea/graph.hpp"
#include "grea/trainer.hpp"

namespace grea::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kNumerical = 2, kSelfCheck = 3 };

/// Parsed run-config file: {"synthetic": {...}, "train": {...}, "data": str, "out": str}.
/// Unknown keys at any level are rejected.
struct RunConfigFile {
  std::optional<nlohmann::json> synthetic;
  std::optional<nlohmann::json> train;
  std::optional<std::string> data;
  std::optional<std::string> out;
};

RunConfigFile parse_run_config(const nlohmann::json& j);
RunConfigFile load_run_config(const std::filesystem::path& path);

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j, SyntheticSpec base = {});
nlohmann::json to_json(const SyntheticSpec& spec);
nlohmann::json to_json(const DatasetSummary& s);

/// Seed precedence: explicit flag, then a "seed" key in the config section,
/// then the GREA_SEED environment variable, then 0.
std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, const std::optional<nlohmann::json>& section);

/// Entry point shared by the binary and the tests.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace grea::cli
