#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "tslab/cli.hpp"

namespace {

namespace fs = std::filesystem;
using namespace tslab;

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "tslab_cli");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

fs::path temp_file(const std::string& name, const std::string& content) {
    const fs::path p = fs::temp_directory_path() / ("tslab_cli_test_" + name);
    std::ofstream(p) << content;
    return p;
}

TEST(Cli, TheoryDefaultGridHas121Rows) {
    const auto r = run({"theory", "--variant", "vanilla"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto ls = lines(r.out);
    ASSERT_EQ(ls.size(), 122u);
    EXPECT_EQ(ls[0], cli::theory_header());
}

TEST(Cli, TheoryCrossTermValues) {
    const auto r = run({"theory", "--variant", "vanilla", "--rho-a", "1", "--rho-b", "0"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto ls = lines(r.out);
    ASSERT_EQ(ls.size(), 2u);
    const auto f = csv::detail::split(ls[1]);
    EXPECT_EQ(f[0], "vanilla");
    EXPECT_DOUBLE_EQ(std::stod(f[4]), -1.0);
    EXPECT_DOUBLE_EQ(std::stod(f[5]), -1.0);
}

TEST(Cli, TheoryGatedMatchesLibrary) {
    const auto r = run({"theory", "--variant", "gated", "--rho-a", "0.5", "--rho-b", "0.5", "--alpha", "0.3"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto f = csv::detail::split(lines(r.out)[1]);
    const auto pr = theory::gated(0.3, {0.5, 0.5});
    EXPECT_NEAR(std::stod(f[4]), pr.transfer, 1e-12);
    EXPECT_NEAR(std::stod(f[5]), pr.retention, 1e-12);
}

TEST(Cli, TheoryUsageErrors) {
    EXPECT_EQ(run({"theory", "--variant", "nonsense"}).code, 2);
    EXPECT_EQ(run({"theory", "--variant", "fim_diag"}).code, 2);
    EXPECT_EQ(run({"theory", "--grid", "0"}).code, 2);
    EXPECT_EQ(run({"theory", "--rho-a", "1.5", "--rho-b", "0"}).code, 2);
    EXPECT_EQ(run({"theory", "--no-such-flag"}).code, 2);
    EXPECT_EQ(run({}).code, 2);
}

TEST(Cli, HelpExitsZero) { EXPECT_EQ(run({"--help"}).code, 0); }

TEST(Cli, SweepWritesCsvAtomically) {
    const auto cfg = temp_file("sweep.json", R"({"variant": "vanilla", "rho_a": [0, 1], "rho_b": [0.5],
                                               "seeds": 2, "n_s": 5, "n_x": 50, "n_y": 3})");
    const fs::path out = fs::temp_directory_path() / "tslab_cli_test_sweep.csv";
    fs::remove(out);
    const auto r = run({"--out", out.string(), "--threads", "2", "sweep", cfg.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(r.out.empty());
    const auto table = csv::read_csv(out);
    EXPECT_EQ(table.rows.size(), 4u);
}

TEST(Cli, SweepSeedOffsetChangesRowsAndIsDeterministic) {
    const auto cfg = temp_file("seed.json", R"({"rho_a": [0.5], "rho_b": [0.5], "seeds": [0],
                                              "n_s": 5, "n_x": 50, "n_y": 3})");
    const auto a = run({"sweep", "--config", cfg.string()});
    const auto b = run({"--seed", "7", "sweep", "--config", cfg.string()});
    const auto c = run({"--seed", "7", "sweep", "--config", cfg.string()});
    ASSERT_EQ(a.code, 0) << a.err;
    EXPECT_NE(a.out, b.out);
    EXPECT_EQ(b.out, c.out);
    EXPECT_NE(b.out.find(",7,"), std::string::npos);
}

TEST(Cli, SweepConfigErrorsAreUsageErrors) {
    EXPECT_EQ(run({"sweep", "/nonexistent/config.json"}).code, 2);
    const auto bad_key = temp_file("badkey.json", R"({"rho_a": [0.5], "rho_b": [0.5], "colour": 1})");
    EXPECT_EQ(run({"sweep", bad_key.string()}).code, 2);
    const auto bad_json = temp_file("badjson.json", "{ not json");
    EXPECT_EQ(run({"sweep", bad_json.string()}).code, 2);
    EXPECT_EQ(run({"sweep"}).code, 2);
}

TEST(Cli, UnwritableOutputIsRuntimeFailure) {
    const auto cfg = temp_file("unwritable.json", R"({"rho_a": [0.5], "rho_b": [0.5], "seeds": 1,
                                                    "n_s": 5, "n_x": 50, "n_y": 3})");
    EXPECT_EQ(run({"--out", "/nonexistent/dir/out.csv", "sweep", cfg.string()}).code, 1);
}

TEST(Cli, AverageReportsSimulationAndTheory) {
    const auto cfg = temp_file("average.json", R"({"seeds": 2, "n_s": 5, "n_x": 100, "n_y": 3})");
    const auto r = run({"average", cfg.string(), "--variant", "vanilla", "--pairs", "6"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto ls = lines(r.out);
    ASSERT_EQ(ls.size(), 2u);
    EXPECT_EQ(ls[0], cli::average_header());
    const auto f = csv::detail::split(ls[1]);
    EXPECT_EQ(f[2], "6");
    EXPECT_NEAR(std::stod(f[8]), 1.0 / 6.0, 1e-6);
    EXPECT_NEAR(std::stod(f[9]), 43.0 / 60.0, 1e-6);
    EXPECT_EQ(run({"average", "--pairs", "0"}).code, 2);
}

TEST(Cli, MnistUsageErrors) {
    EXPECT_EQ(run({"mnist", "--variant", "plasticity"}).code, 2);
    EXPECT_EQ(run({"mnist", "--profile", "huge"}).code, 2);
    EXPECT_EQ(run({"mnist", "--variant", "vanilla", "--alpha", "0.5"}).code, 2);
    EXPECT_EQ(run({"mnist", "--rho-a", "2"}).code, 2);
    EXPECT_EQ(run({"mnist", "--seeds", "0"}).code, 2);
}

TEST(Cli, MnistMissingDataIsRuntimeFailure) {
    const auto r = run({"mnist", "--data-dir", "/nonexistent/mnist"});
    EXPECT_EQ(r.code, 1);
    EXPECT_FALSE(r.err.empty());
}

TEST(Cli, ShippedConfigsParse) {
    std::size_t n = 0;
    for (const auto& entry : fs::directory_iterator(TSLAB_CONFIG_DIR)) {
        if (entry.path().extension() != ".json") continue;
        EXPECT_NO_THROW(config::sweep_from_json(config::load_json(entry.path()))) << entry.path();
        ++n;
    }
    EXPECT_GT(n, 0u);
}

}  // namespace
