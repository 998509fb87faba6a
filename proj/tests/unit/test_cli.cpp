#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "bundle.hpp"
#include "config.hpp"
#include "saapde/errors.hpp"

using namespace saapde;
using namespace saapde::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("saapde_cli_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

SweepRecord record(std::size_t n, std::uint64_t seed, double dist) {
    SweepRecord r;
    r.problem = ProblemKind::Bilinear;
    r.n = n;
    r.seed = seed;
    r.ok = true;
    r.converged = true;
    r.dist_to_ref = dist;
    return r;
}

}  // namespace

TEST(Config, DefaultsRoundTrip) {
    const RunConfig a = load_config("");
    const nlohmann::json j = config_to_json(a);
    EXPECT_EQ(j.at("schema_version"), kSchemaVersion);
    const RunConfig b = config_from_json(j);
    EXPECT_EQ(config_to_json(b).dump(), j.dump());
    EXPECT_EQ(config_hash(a), config_hash(b));
    EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Config, UnknownKeysAndBadValuesAreRejected) {
    nlohmann::json j = config_to_json(load_config(""));
    j["grid"]["colour"] = 1;
    EXPECT_THROW(config_from_json(j), ValidationError);
    j = config_to_json(load_config(""));
    j["grid"]["n"] = "sixteen";
    EXPECT_THROW(config_from_json(j), ValidationError);
    j = config_to_json(load_config(""));
    j.erase("schema_version");
    EXPECT_THROW(config_from_json(j), ValidationError);
    EXPECT_THROW(load_config("", {"grid.n=1"}), ValidationError);
    EXPECT_THROW(load_config("", {"grid.nn=4"}), ValidationError);
    EXPECT_THROW(load_config("", {"grid.n"}), ValidationError);
}

TEST(Config, OverridesAndHash) {
    const RunConfig base = load_config("");
    const RunConfig o = load_config("", {"grid.n=8", "sweep.seeds=3", "linear_solver.method=cg"});
    EXPECT_EQ(o.model.n, 8);
    EXPECT_EQ(o.sweep.seeds, 3u);
    EXPECT_EQ(o.model.linear.method, LinearSolver::ConjugateGradient);
    EXPECT_NE(config_hash(base), config_hash(o));
    // Execution-only settings do not enter the hash.
    RunConfig t = base;
    t.threads = 4;
    t.output.directory = "elsewhere";
    EXPECT_EQ(config_hash(base), config_hash(t));
    const RunConfig m = load_config("", {"fields.m_xi=6"});
    EXPECT_EQ(m.model.fields.kappa_amplitudes.size(), 6u);
}

TEST(Config, FileInput) {
    const fs::path dir = scratch("config");
    const fs::path file = dir / "c.json";
    nlohmann::json j = config_to_json(load_config(""));
    j["sweep"]["seeds"] = 5;
    std::ofstream(file) << j.dump(2);
    const RunConfig c = load_config(file.string());
    EXPECT_EQ(c.sweep.seeds, 5u);
    EXPECT_EQ(config_hash(c), config_hash(load_config("", {"sweep.seeds=5"})));
    EXPECT_THROW(load_config((dir / "missing.json").string()), ValidationError);
}

TEST(Hash, Fnv1aKnownValues) {
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
    EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ull);
}

TEST(Csv, ReaderHandlesQuotesAndCrlf) {
    std::istringstream in("a,b,c\r\n\"x,y\",\"he said \"\"no\"\"\",\r\n1,,3\r\n");
    const auto rows = read_csv(in);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[1][0], "x,y");
    EXPECT_EQ(rows[1][1], "he said \"no\"");
    EXPECT_EQ(rows[1][2], "");
    EXPECT_EQ(rows[2][1], "");
    EXPECT_EQ(rows[2].size(), 3u);
}

TEST(Bundle, WriteLoadAndTamper) {
    RunConfig cfg = load_config("", {"grid.n=4"});
    const fs::path dir = scratch("bundle");
    cfg.output.directory = dir.string();
    const Model model(cfg.model);
    Reference ref;
    ref.kind = ProblemKind::Bilinear;
    ref.gamma = 2.0;
    std::vector<SweepRecord> rs;
    for (std::size_t n : {8u, 16u})
        for (std::uint64_t s = 1; s <= 3; ++s) rs.push_back(record(n, s, 1.0 / static_cast<double>(n * s)));
    const BundlePaths paths = write_bundle(cfg, "mc", ProblemKind::Bilinear, ref, rs, model.constants());
    const std::string hash = config_hash(cfg);
    EXPECT_NE(paths.csv.filename().string().find(hash), std::string::npos);

    const LoadedBundle b = load_bundle(paths.summary);
    EXPECT_EQ(b.hash, hash);
    EXPECT_EQ(b.rows.size(), rs.size());
    EXPECT_EQ(b.summary.at("per_N").at("8").at("count"), 3);
    EXPECT_EQ(b.summary.at("constants").at("kappa_min"), 0.5);

    // Editing the embedded config breaks the hash check.
    nlohmann::json tampered = b.summary;
    tampered["config"]["sweep"]["seeds"] = 99;
    std::ofstream(paths.summary) << tampered.dump(2);
    EXPECT_THROW(load_bundle(paths.summary), ValidationError);
    EXPECT_THROW(load_bundle(dir / "absent.json"), ValidationError);
}
