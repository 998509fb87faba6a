#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "saapde/experiments.hpp"

namespace saapde::cli {

inline constexpr int kSchemaVersion = 1;

struct OutputSettings {
    std::string directory = "results";
    bool emit_wall_time = false;
};

/// Everything a run depends on. Parsed from JSON with unknown keys rejected;
/// the canonical dump of the parsed tree is what gets hashed.
struct RunConfig {
    ModelSettings model;
    SolverSettings solver;
    SweepSettings sweep;
    GradcheckSettings gradcheck;
    OutputSettings output;
    std::optional<std::size_t> threads;

    void validate() const;
};

RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& cfg);

/// Reads a config file (or the defaults when path is empty) and applies
/// `dotted.key=value` overrides, the value parsed as JSON when possible.
RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});

/// Sets one dotted key in a JSON tree; the key must already exist.
void apply_override(nlohmann::json& j, std::string_view assignment);

/// FNV-1a 64 of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);
std::uint64_t fnv1a64(std::string_view data);

}  // namespace saapde::cli
