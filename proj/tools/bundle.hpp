#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "config.hpp"

namespace saapde::cli {

/// A sweep result on disk: `<stem>.csv` with the records and `<stem>.json`
/// with metadata and summary statistics. The stem ends in the config hash.
struct BundlePaths {
    std::filesystem::path csv;
    std::filesystem::path summary;
};

BundlePaths bundle_paths(const std::filesystem::path& dir, std::string_view kind, ProblemKind problem,
                         const std::string& hash);

nlohmann::json constants_json(const ConstantsReport& c);

/// Summary of one sweep: metadata, constants, per-N statistics and the trend.
nlohmann::json sweep_summary(const RunConfig& cfg, std::string_view kind, ProblemKind problem,
                             const Reference& reference, const std::vector<SweepRecord>& records,
                             const ConstantsReport& constants, const std::string& csv_name);

/// Writes both files and returns their paths.
BundlePaths write_bundle(const RunConfig& cfg, std::string_view kind, ProblemKind problem,
                         const Reference& reference, const std::vector<SweepRecord>& records,
                         const ConstantsReport& constants);

/// Minimal RFC 4180 reader for the record tables this tool writes.
std::vector<std::vector<std::string>> read_csv(std::istream& in);

struct LoadedBundle {
    std::filesystem::path summary_path;
    nlohmann::json summary;
    std::string hash;
    std::vector<std::vector<std::string>> rows;  // without the header
};

/// Loads a summary and its record table, checking that the stored hash
/// matches the embedded config and both file names.
LoadedBundle load_bundle(const std::filesystem::path& summary_path);

}  // namespace saapde::cli
