#include "bundle.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/chrono.h>
#include <fmt/format.h>

#include "saapde/errors.hpp"

#ifndef SAAPDE_VERSION
#define SAAPDE_VERSION "unknown"
#endif

namespace saapde::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json per_n_json(const std::vector<NStatistics>& stats) {
    json out = json::object();
    for (const auto& s : stats)
        out[std::to_string(s.n)] = {{"count", s.count}, {"median_dist", s.median}, {"q25", s.q25}, {"q75", s.q75}};
    return out;
}

json reference_json(const Reference& ref) {
    json reps = json::array();
    for (const auto& p : ref.representatives) {
        reps.push_back({{"objective", p.objective},
                        {"residual", p.residual},
                        {"iterations", p.iterations},
                        {"t", p.t ? json(*p.t) : json(nullptr)}});
    }
    return {{"scenarios", ref.provenance.count},
            {"seed", ref.provenance.seed},
            {"starts", ref.starts},
            {"failed_starts", ref.failed_starts},
            {"gamma", ref.gamma},
            {"representatives", reps}};
}

std::string timestamp_utc() {
    return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()));
}

}  // namespace

BundlePaths bundle_paths(const fs::path& dir, std::string_view kind, ProblemKind problem, const std::string& hash) {
    const std::string stem = fmt::format("{}_{}_{}", kind, to_string(problem), hash);
    return {dir / (stem + ".csv"), dir / (stem + ".json")};
}

json constants_json(const ConstantsReport& c) {
    return {{"C_D", c.friedrichs},
            {"C_H01_L4", c.h01_l4},
            {"lambda_min", c.lambda_min},
            {"kappa_min", c.kappa_min},
            {"kappa_max", c.kappa_max},
            {"g_max", c.g_max},
            {"b_max", c.b_max},
            {"delta", c.delta},
            {"guard_radius", c.guard_radius},
            {"r_ad", c.r_ad},
            {"c_S", c.c_state},
            {"c_z", c.c_adjoint},
            {"t_bound", c.t_bound},
            {"semilinear_gradient_bound", c.semilinear_gradient_bound},
            {"bilinear_value_bound", c.bilinear_value_bound},
            {"bilinear_gradient_bound", c.bilinear_gradient_bound}};
}

json sweep_summary(const RunConfig& cfg, std::string_view kind, ProblemKind problem, const Reference& reference,
                   const std::vector<SweepRecord>& records, const ConstantsReport& constants,
                   const std::string& csv_name) {
    json s;
    s["config_hash"] = config_hash(cfg);
    s["schema_version"] = kSchemaVersion;
    s["code_version"] = SAAPDE_VERSION;
    s["timestamp"] = timestamp_utc();
    s["sweep"] = kind;
    s["problem"] = to_string(problem);
    s["records"] = csv_name;
    s["config"] = config_to_json(cfg);
    s["constants"] = constants_json(constants);
    s["reference"] = reference_json(reference);

    std::size_t failed = 0, unconverged = 0;
    for (const auto& r : records) {
        failed += !r.ok;
        unconverged += r.ok && !r.converged;
    }
    s["failed"] = failed;
    s["unconverged"] = unconverged;

    const std::vector<NStatistics> stats = distance_statistics(records);
    s["per_N"] = per_n_json(stats);
    bool seeded = false;
    for (const auto& r : records) seeded = seeded || r.seed.has_value();
    if (seeded && stats.size() >= 2) {
        const TrendReport trend = analyse_trend(records, cfg.sweep.bootstrap_resamples, cfg.sweep.bootstrap_seed);
        s["slope_loglog"] = finite_or_null(trend.slope_loglog);
        s["ratio_last_first"] = finite_or_null(trend.ratio_last_first);
        s["diff_se"] = trend.diff_se;
        s["non_increasing"] = trend.non_increasing;
    } else {
        std::vector<double> xs, ys;
        for (const auto& st : stats) {
            if (!(st.median > 0.0)) continue;
            xs.push_back(static_cast<double>(st.n));
            ys.push_back(st.median);
        }
        s["slope_loglog"] = xs.size() >= 2 ? finite_or_null(loglog_slope(xs, ys)) : json(nullptr);
    }
    return s;
}

BundlePaths write_bundle(const RunConfig& cfg, std::string_view kind, ProblemKind problem, const Reference& reference,
                         const std::vector<SweepRecord>& records, const ConstantsReport& constants) {
    const fs::path dir(cfg.output.directory);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ValidationError(fmt::format("cannot create output directory '{}': {}", dir.string(), ec.message()));
    const BundlePaths paths = bundle_paths(dir, kind, problem, config_hash(cfg));
    {
        std::ofstream out(paths.csv, std::ios::binary);
        if (!out) throw ValidationError(fmt::format("cannot write '{}'", paths.csv.string()));
        write_sweep_csv(out, records, cfg.output.emit_wall_time);
    }
    {
        std::ofstream out(paths.summary, std::ios::binary);
        if (!out) throw ValidationError(fmt::format("cannot write '{}'", paths.summary.string()));
        out << sweep_summary(cfg, kind, problem, reference, records, constants, paths.csv.filename().string()).dump(2)
            << '\n';
    }
    return paths;
}

std::vector<std::vector<std::string>> read_csv(std::istream& in) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false, any = false;
    char c;
    auto end_row = [&] {
        row.push_back(std::move(field));
        field.clear();
        rows.push_back(std::move(row));
        row.clear();
        any = false;
    };
    while (in.get(c)) {
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field += '"';
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        any = true;
        if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
        } else if (c == '\r') {
            if (in.peek() == '\n') in.get(c);
            end_row();
        } else if (c == '\n') {
            end_row();
        } else {
            field += c;
        }
    }
    if (quoted) throw ValidationError("unterminated quoted CSV field");
    if (any) end_row();
    return rows;
}

LoadedBundle load_bundle(const fs::path& summary_path) {
    LoadedBundle b;
    b.summary_path = summary_path;
    std::ifstream in(summary_path);
    if (!in) throw ValidationError(fmt::format("cannot open bundle '{}'", summary_path.string()));
    try {
        b.summary = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError(fmt::format("bundle '{}' is not valid JSON: {}", summary_path.string(), e.what()));
    }
    for (const char* key : {"config_hash", "config", "records", "problem", "sweep"})
        if (!b.summary.contains(key)) throw ValidationError(fmt::format("bundle '{}' lacks '{}'", summary_path.string(), key));

    b.hash = b.summary["config_hash"].get<std::string>();
    const std::string recomputed = config_hash(config_from_json(b.summary["config"]));
    if (recomputed != b.hash)
        throw ValidationError(fmt::format("bundle '{}' records hash {} but its config hashes to {}",
                                          summary_path.string(), b.hash, recomputed));
    const std::string csv_name = b.summary["records"].get<std::string>();
    if (summary_path.filename().string().find(b.hash) == std::string::npos ||
        csv_name.find(b.hash) == std::string::npos)
        throw ValidationError(fmt::format("bundle '{}' file names do not carry its config hash {}",
                                          summary_path.string(), b.hash));

    const fs::path csv_path = summary_path.parent_path() / csv_name;
    std::ifstream csv(csv_path, std::ios::binary);
    if (!csv) throw ValidationError(fmt::format("cannot open record table '{}'", csv_path.string()));
    b.rows = read_csv(csv);
    if (b.rows.empty()) throw ValidationError(fmt::format("record table '{}' is empty", csv_path.string()));
    b.rows.erase(b.rows.begin());
    return b;
}

}  // namespace saapde::cli
