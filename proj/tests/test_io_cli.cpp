#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>

#include <smworlds/cli.hpp>
#include <smworlds/io.hpp>

using namespace smw;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("smworlds_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string("SM_THREADS=1 ") + SMW_CLI_PATH + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_config(const fs::path& dir, const json& j) {
    const fs::path p = dir / "config.json";
    io::write_file(p, j.dump(2));
    return p;
}

} // namespace

TEST(Smf, RoundTripIsBitExact) {
    io::SmfField f{{3, 2}, 0.125, 1.5, {}};
    std::mt19937_64 g(1);
    std::normal_distribution<double> n;
    for (int i = 0; i < 6; ++i) f.values.push_back(n(g));
    f.values[2] = -0.0;
    const std::string bytes = io::encode_smf(f);
    EXPECT_EQ(bytes.size(), 4u + 4 + 4 + 8 + 8 + 8 + 6 * 8);
    EXPECT_EQ(bytes.substr(0, 4), "SMF1");
    EXPECT_EQ(io::decode_smf(bytes), f);
    EXPECT_TRUE(std::signbit(io::decode_smf(bytes).values[2]));
}

TEST(Smf, LayoutIsLittleEndian) {
    const std::string bytes = io::encode_smf({{1}, 1.0, 0.0, {1.0}});
    // version 1 as u32 little endian
    EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1u);
    EXPECT_EQ(static_cast<unsigned char>(bytes[7]), 0u);
    // 1.0 as IEEE-754 binary64: 0x3FF0000000000000, last byte first in LE order
    EXPECT_EQ(static_cast<unsigned char>(bytes.back()), 0x3Fu);
}

TEST(Smf, CorruptInputIsRejected) {
    std::string bytes = io::encode_smf({{2}, 1.0, 0.0, {1.0, 2.0}});
    EXPECT_THROW(io::decode_smf("XXXX" + bytes.substr(4)), ConfigError);
    EXPECT_THROW(io::decode_smf(bytes.substr(0, bytes.size() - 1)), ConfigError);
    EXPECT_THROW(io::encode_smf({{3}, 1.0, 0.0, {1.0}}), ConfigError);
}

TEST(Csv, QuotingAndRoundTrip) {
    io::CsvWriter w({"a", "b"});
    w.row({"plain", "with,comma"});
    w.row({"quote\"inside", "line\nbreak"});
    const auto rows = io::parse_csv(w.str());
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[1][1], "with,comma");
    EXPECT_EQ(rows[2][0], "quote\"inside");
    EXPECT_EQ(rows[2][1], "line\nbreak");
    EXPECT_NE(w.str().find("\r\n"), std::string::npos);
    EXPECT_THROW(w.row({"one"}), ConfigError);
}

TEST(Csv, RealsRoundTrip) {
    for (double v : {0.1, 1.0 / 3.0, 6.02214076e23, -2.5e-300})
        EXPECT_EQ(std::stod(io::format_real(v)), v);
}

TEST(Hash, KnownSha256Vector) {
    EXPECT_EQ(io::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    EXPECT_EQ(io::sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Config, DefaultsAreMergedAndUnknownKeysRejected) {
    const auto c = cli::parse_config(json{{"scenario", "stern_gerlach_sequence"}, {"params", {{"n", 20}}}}, false);
    EXPECT_EQ(c.params["n"], 20);
    EXPECT_EQ(c.params["p"], 0.7);
    EXPECT_THROW(cli::parse_config(json{{"scenario", "epr"}, {"colour", 1}}, false), ConfigError);
    EXPECT_THROW(cli::parse_config(json{{"scenario", "epr"}, {"params", {{"settings", "z"}}}}, false), ConfigError);
    EXPECT_THROW(cli::parse_config(json{{"scenario", "nope"}}, false), ConfigError);
    EXPECT_THROW(cli::parse_config(json{{"scenario", "epr"}, {"grid", {{"dt", 0.1}}}}, false), ConfigError);
    EXPECT_THROW(cli::parse_config(json{{"scenario", "cat_1d"}, {"grid", {{"points", 64}}}}, false), ConfigError);
    EXPECT_THROW(cli::parse_config(json{{"scenario", "stern_gerlach_sequence"}, {"params", {{"n", "ten"}}}}, false), ConfigError);
    EXPECT_THROW(cli::parse_config(json{{"scenario", "epr"}, {"ontologies", json::array({"sm"})}}, false), ConfigError);
}

TEST(Config, CompareNeedsSupportedOntologies) {
    EXPECT_NO_THROW(cli::parse_config(json{{"scenario", "cat_1d"}, {"ontologies", {"sm", "grwm"}}}, true));
    EXPECT_THROW(cli::parse_config(json{{"scenario", "epr"}, {"ontologies", {"sm"}}}, true), ConfigError);
    EXPECT_THROW(cli::parse_config(json{{"scenario", "stern_gerlach_sequence"}, {"ontologies", {"grwm"}}}, true), ConfigError);
    EXPECT_THROW(cli::parse_config(json{{"scenario", "cat_1d"}, {"ontologies", {"sm", "sm"}}}, true), ConfigError);
    EXPECT_THROW(cli::parse_config(json{{"scenario", "cat_1d"}}, true), ConfigError);
}

TEST(Catalog, EveryScenarioCarriesItsSection) {
    const auto cat = cli::catalog_json();
    ASSERT_EQ(cat.size(), 6u);
    for (const auto& e : cat) {
        EXPECT_EQ(e["section"].get<std::string>().rfind("§", 0), 0u) << e["id"];
        EXPECT_FALSE(e["params"].empty());
    }
}

TEST(Cli, ListPrintsCatalog) {
    const auto dir = scratch("list");
    EXPECT_EQ(run_cli("list --json", dir / "out.txt"), 0);
    const auto j = json::parse(io::read_file(dir / "out.txt"));
    EXPECT_EQ(j.size(), 6u);
    EXPECT_EQ(run_cli("list", dir / "text.txt"), 0);
    EXPECT_NE(io::read_file(dir / "text.txt").find("torus_invariant"), std::string::npos);
}

TEST(Cli, ConfigErrorsExitWithTwo) {
    const auto dir = scratch("errors");
    const auto bad = write_config(dir, json{{"scenario", "epr"}, {"bogus", true}});
    EXPECT_EQ(run_cli("run " + bad.string() + " --out " + (dir / "o").string(), dir / "log.txt"), 2);
    EXPECT_NE(io::read_file(dir / "log.txt").find("bogus"), std::string::npos);
    EXPECT_FALSE(fs::exists(dir / "o" / "manifest.json"));
    EXPECT_EQ(run_cli("run " + (dir / "missing.json").string(), dir / "log2.txt"), 2);
    const auto cmp = write_config(dir, json{{"scenario", "two_slit"}, {"ontologies", {"bohm"}}});
    EXPECT_EQ(run_cli("compare " + cmp.string() + " --out " + (dir / "c").string(), dir / "log3.txt"), 2);
}

TEST(Cli, RunWritesOutputsAndManifest) {
    const auto dir = scratch("run");
    const auto cfg = write_config(dir, json{{"scenario", "epr"}, {"params", {{"alice_setting", "x"}}}});
    ASSERT_EQ(run_cli("run " + cfg.string() + " --seed 9 --out " + (dir / "o").string(), dir / "log.txt"), 0);
    const fs::path o = dir / "o";
    for (const char* f : {"summary.json", "branches.csv", "manifest.json"}) EXPECT_TRUE(fs::exists(o / f)) << f;
    const auto manifest = json::parse(io::read_file(o / "manifest.json"));
    EXPECT_EQ(manifest["status"], "ok");
    EXPECT_EQ(manifest["version"], version);
    EXPECT_TRUE(cli::verify_manifest(o));
    const auto summary = json::parse(io::read_file(o / "summary.json"));
    EXPECT_EQ(summary["seed"], 9);
    EXPECT_TRUE(summary["passed"].get<bool>());
    const auto header = io::parse_csv(io::read_file(o / "branches.csv")).front();
    EXPECT_EQ(header, (std::vector<std::string>{"time", "id", "parent_id", "weight", "norm_sq", "support_cell_count"}));
    bool any_smf = false;
    for (const auto& e : fs::directory_iterator(o / "fields"))
        if (e.path().extension() == ".smf") {
            any_smf = true;
            EXPECT_NO_THROW(io::read_smf(e.path()));
        }
    EXPECT_TRUE(any_smf);
}

TEST(Cli, RepeatedRunsHashIdentically) {
    const auto dir = scratch("repro");
    const auto cfg = write_config(dir, json{{"scenario", "two_slit"},
                                            {"params", {{"trajectories", 40}}},
                                            {"grid", {{"points_per_axis", 128}}},
                                            {"seed", 3}});
    ASSERT_EQ(run_cli("run " + cfg.string() + " --out " + (dir / "a").string(), dir / "a.txt"), 0);
    ASSERT_EQ(run_cli("run " + cfg.string() + " --out " + (dir / "b").string(), dir / "b.txt"), 0);
    const auto ma = json::parse(io::read_file(dir / "a" / "manifest.json"));
    const auto mb = json::parse(io::read_file(dir / "b" / "manifest.json"));
    EXPECT_EQ(ma["files"], mb["files"]);
    EXPECT_TRUE(fs::exists(dir / "a" / "trajectories.csv"));
}

TEST(Cli, CompareSingleOntologyGivesOneBlock) {
    const auto dir = scratch("compare");
    const auto cfg = write_config(dir, json{{"scenario", "stern_gerlach_sequence"},
                                            {"params", {{"n", 8}}},
                                            {"ontologies", {"sm"}}});
    ASSERT_EQ(run_cli("compare " + cfg.string() + " --out " + (dir / "o").string(), dir / "log.txt"), 0);
    const auto rows = io::parse_csv(io::read_file(dir / "o" / "comparison.csv"));
    ASSERT_EQ(rows.size(), 1u + 9u);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        EXPECT_EQ(rows[i][0], "sm");
        EXPECT_EQ(rows[i][6], "true");
    }
}

TEST(Cli, CompareCatShowsBranchCounts) {
    const auto dir = scratch("compare_cat");
    const auto cfg = write_config(dir, json{{"scenario", "grwm_cat"},
                                            {"params", {{"runs", 200}}},
                                            {"grid", {{"points_per_axis", 128}}},
                                            {"ontologies", {"sm", "grwm"}}});
    ASSERT_EQ(run_cli("compare " + cfg.string() + " --out " + (dir / "o").string(), dir / "log.txt"), 0)
        << io::read_file(dir / "log.txt");
    const auto s = json::parse(io::read_file(dir / "o" / "summary.json"));
    EXPECT_EQ(s["summary"]["sm_branch_count"], 2.0);
    EXPECT_LT(s["summary"]["grwm_mean_branch_count"].get<double>(), 1.05);
}
