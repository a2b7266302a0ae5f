#include "sbi/cli.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace sbi;
namespace fs = std::filesystem;

namespace {

std::string tmp_dir(const std::string& leaf) {
    fs::path p = fs::path(SBI_TEST_TMPDIR) / leaf;
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

std::string slurp(const std::string& path) { return stats_io::read_file(path); }

}  // namespace

TEST_CASE("catalog list prints 19 entries", "[cli]") {
    std::ostringstream captured;
    auto* old = std::cout.rdbuf(captured.rdbuf());
    const int rc = cli::run_main({"catalog", "list"});
    std::cout.rdbuf(old);
    CHECK(rc == 0);
    int lines = 0;
    for (char c : captured.str())
        if (c == '\n') ++lines;
    CHECK(lines == 19);
    CHECK(captured.str().find("confounded,linear,NotID") != std::string::npos);
}

TEST_CASE("run writes a report and is byte-identical on reruns", "[cli]") {
    const std::string out1 = tmp_dir("run1");
    const std::string out2 = tmp_dir("run2");
    std::ostringstream sink;
    auto* old = std::cout.rdbuf(sink.rdbuf());
    int rc1 = cli::run_main({"run", "--design", "unconfounded", "--family", "linear", "--n", "200",
                             "--k", "3", "--epochs", "4", "--seed", "17", "--out", out1});
    int rc2 = cli::run_main({"run", "--design", "unconfounded", "--family", "linear", "--n", "200",
                             "--k", "3", "--epochs", "4", "--seed", "17", "--out", out2});
    std::cout.rdbuf(old);
    REQUIRE(rc1 == 0);
    REQUIRE(rc2 == 0);
    const std::string a = slurp(out1 + "/run_unconfounded_linear.json");
    const std::string b = slurp(out2 + "/run_unconfounded_linear.json");
    CHECK(a == b);
    auto j = nlohmann::json::parse(a);
    CHECK(j["n"] == 200);
    CHECK(j["k"] == 3);
    CHECK(j["trials"].size() == 3);
}

TEST_CASE("config file values with flag overrides", "[cli]") {
    const std::string out = tmp_dir("cfg");
    const std::string cfg_path = out + "/exp.cfg";
    stats_io::write_file(cfg_path,
                         "# experiment configuration\n"
                         "design = unconfounded\n"
                         "family = linear\n"
                         "n = 150\n"
                         "k = 3\n"
                         "epochs = 4\n"
                         "seed = 5\n");
    std::ostringstream sink;
    auto* old = std::cout.rdbuf(sink.rdbuf());
    // flag overrides the file's n
    int rc = cli::run_main({"run", "--design", "unconfounded", "--family", "linear", "--config",
                            cfg_path, "--n", "120", "--out", out});
    std::cout.rdbuf(old);
    REQUIRE(rc == 0);
    auto j = nlohmann::json::parse(slurp(out + "/run_unconfounded_linear.json"));
    CHECK(j["n"] == 120);   // flag wins
    CHECK(j["k"] == 3);     // file value
    CHECK(j["seed"] == 5);  // file value
}

TEST_CASE("environment seed fallback", "[cli]") {
    const std::string out = tmp_dir("envseed");
    setenv("SBI_SEED", "4242", 1);
    std::ostringstream sink;
    auto* old = std::cout.rdbuf(sink.rdbuf());
    int rc = cli::run_main({"run", "--design", "unconfounded", "--family", "linear", "--n", "120",
                            "--k", "2", "--epochs", "3", "--out", out});
    std::cout.rdbuf(old);
    unsetenv("SBI_SEED");
    REQUIRE(rc == 0);
    auto j = nlohmann::json::parse(slurp(out + "/run_unconfounded_linear.json"));
    CHECK(j["seed"] == 4242);
}

TEST_CASE("exit codes", "[cli]") {
    std::ostringstream sink, esink;
    auto* old = std::cout.rdbuf(sink.rdbuf());
    auto* olde = std::cerr.rdbuf(esink.rdbuf());
    CHECK(cli::run_main({"run", "--design", "nonsense", "--family", "linear"}) == 2);
    CHECK(cli::run_main({"run", "--design", "backdoor", "--family", "gp"}) == 2);
    CHECK(cli::run_main({"nonsense-mode"}) == 2);
    std::cout.rdbuf(old);
    std::cerr.rdbuf(olde);
}

TEST_CASE("diagnostics subcommand writes the curve", "[cli]") {
    const std::string out = tmp_dir("diag");
    std::ostringstream sink;
    auto* old = std::cout.rdbuf(sink.rdbuf());
    int rc = cli::run_main({"diagnostics", "--design", "unconfounded", "--family", "linear",
                            "--n-grid", "50,200", "--reps", "3", "--seed", "9", "--out", out});
    std::cout.rdbuf(old);
    REQUIRE(rc == 0);
    const std::string text = slurp(out + "/diagnostics_unconfounded_linear.csv");
    CHECK(text.rfind("n,mean_log_lr\n", 0) == 0);
    CHECK(text.find("\n50,") != std::string::npos);
    CHECK(text.find("\n200,") != std::string::npos);
}

TEST_CASE("table subcommand emits the csv schema", "[cli]") {
    const std::string out = tmp_dir("table");
    std::ostringstream sink;
    auto* old = std::cout.rdbuf(sink.rdbuf());
    int rc = cli::run_main({"table", "--family", "linear", "--n", "120", "--k", "2", "--epochs",
                            "2", "--seed", "3", "--out", out});
    std::cout.rdbuf(old);
    REQUIRE(rc == 0);
    auto rows = stats_io::parse_table_csv(slurp(out + "/table_all_linear.csv"));
    CHECK(rows.size() == 7);
    for (const auto& r : rows) CHECK(r.family == "linear");
}
