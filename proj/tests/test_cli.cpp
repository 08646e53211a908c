#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kCli = SEAMSIM_CLI_PATH;
const fs::path kData = SEAMSIM_DATA_DIR;

int run(const std::string& args) {
    const int rc = std::system((kCli + " " + args + " > /dev/null 2>&1").c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("seamsim_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string common_args(const fs::path& out) {
    return "--stitch " + (kData / "two_area_44.json").string() + " --bids " +
           (kData / "bids_table1.json").string() + " --out " + out.string();
}

} // namespace

TEST_CASE("help exits cleanly and shows every subcommand") {
    CHECK(run("--help") == 0);
    CHECK(run("solve --help") == 0);
    CHECK(run("compare --help") == 0);
    CHECK(run("sweep --help") == 0);
    CHECK(run("validate --help") == 0);
}

TEST_CASE("unknown mechanism exits with a config error") {
    const fs::path out = fresh_dir("badmech");
    CHECK(run("solve --mechanism nope " + common_args(out)) == 1);
}

TEST_CASE("missing required flag exits with a config error") {
    CHECK(run("solve --mechanism gcts") == 1);
}

TEST_CASE("validate accepts the shipped configs") {
    const fs::path out = fresh_dir("validate");
    CHECK(run("validate " + common_args(out) + " --scenario " +
              (kData / "scenario_default.json").string()) == 0);
}

TEST_CASE("solve gcts writes solution, settlement, and manifest") {
    const fs::path out = fresh_dir("solve");
    REQUIRE(run("solve --mechanism gcts " + common_args(out)) == 0);
    CHECK(fs::exists(out / "solution_gcts.csv"));
    CHECK(fs::exists(out / "settlement_areas.csv"));
    CHECK(fs::exists(out / "settlement_bids.csv"));
    REQUIRE(fs::exists(out / "manifest.json"));

    const json manifest = json::parse(slurp(out / "manifest.json"));
    CHECK(manifest["tool"] == "seamsim");
    CHECK(manifest["command"] == "solve");
    REQUIRE(manifest["configs"].is_array());
    CHECK(manifest["configs"].size() == 2);
    for (const auto& c : manifest["configs"])
        CHECK(c["fnv1a64"].get<std::string>().size() == 16);

    const std::string csv = slurp(out / "solution_gcts.csv");
    CHECK(csv.find("record,key,value") == 0);
    CHECK(csv.find("cost_internal_per_h") != std::string::npos);
    CHECK(csv.find("bid_cleared_mw") != std::string::npos);
    CHECK(csv.find("tie_flow_mw") != std::string::npos);
}

TEST_CASE("solve in json format emits json reports") {
    const fs::path out = fresh_dir("solvejson");
    REQUIRE(run("solve --mechanism jed --format json " + common_args(out)) == 0);
    const json sol = json::parse(slurp(out / "solution_jed.json"));
    CHECK(sol.is_array());
    CHECK(!sol.empty());
}

TEST_CASE("infeasible case exits with code 2") {
    // A one-generator case whose capacity cannot cover the load.
    const fs::path dir = fresh_dir("infeasible");
    const fs::path caze = dir / "tiny.m";
    std::ofstream(caze) << "mpc.baseMVA = 100;\n"
                           "mpc.bus = [\n1 3 10 0;\n2 1 300 0;\n];\n"
                           "mpc.branch = [\n1 2 0 0.1 0 0 0 0 0 0 1;\n];\n"
                           "mpc.gen = [\n1 0 0 0 0 1 100 1 100 0;\n];\n"
                           "mpc.gencost = [\n2 0 0 2 10 0;\n];\n";
    const fs::path caze2 = dir / "tiny2.m";
    fs::copy_file(caze, caze2);
    const fs::path cfg = dir / "stitch.json";
    std::ofstream(cfg) << R"({"version":1,"name":"tiny","areas":[
        {"id":1,"case":"tiny.m","bus_offset":0},
        {"id":2,"case":"tiny2.m","bus_offset":100}],
        "tie_lines":[{"from_area":1,"from_bus":2,"to_area":2,"to_bus":2,
                      "reactance_pu":0.1,"limit_mw":10}]})";
    CHECK(run("solve --mechanism jed --stitch " + cfg.string() + " --out " + dir.string()) == 2);
}

TEST_CASE("compare writes a table with one row per mechanism") {
    const fs::path out = fresh_dir("compare");
    REQUIRE(run("compare " + common_args(out) + " --samples 1 --sigma 0") == 0);
    const std::string csv = slurp(out / "comparison.csv");
    CHECK(csv.find("JED") != std::string::npos);
    CHECK(csv.find("CTS") != std::string::npos);
    CHECK(csv.find("GCTS") != std::string::npos);
    CHECK(csv.find("--") != std::string::npos); // JED has no look-ahead total

    // sigma 0: look-ahead equals real time per mechanism in the table.
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line); // header
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        REQUIRE(cells.size() >= 5);
        const double look = cells[3] == "--" ? std::stod(cells[2]) : std::stod(cells[3]);
        const double rt = std::stod(cells[4]);
        CHECK(rt == doctest::Approx(look).epsilon(1e-4));
    }
}

TEST_CASE("compare with a fixed seed is byte-identical across runs") {
    const fs::path out1 = fresh_dir("det1");
    const fs::path out2 = fresh_dir("det2");
    const std::string extra = " --samples 4 --seed 7 --mechanisms gcts,cts";
    REQUIRE(run("compare " + common_args(out1) + extra) == 0);
    REQUIRE(run("compare " + common_args(out2) + extra) == 0);
    CHECK(slurp(out1 / "comparison.csv") == slurp(out2 / "comparison.csv"));
    CHECK(slurp(out1 / "manifest.json") == slurp(out2 / "manifest.json"));
}

TEST_CASE("sweep emits one row per grid point") {
    const fs::path out = fresh_dir("sweep");
    REQUIRE(run("sweep " + common_args(out) + " --w 1.0 --dpi 10,0.1") == 0);
    const std::string csv = slurp(out / "sweep.csv");
    int lines = 0;
    for (char c : csv) lines += c == '\n';
    CHECK(lines == 3); // header + 2 points
    CHECK(csv.find("w,dpi_per_mwh,cost_jed_per_h,cost_gcts_per_h,gap_per_h") == 0);
}

TEST_CASE("commands do not mutate their input files") {
    const fs::path out = fresh_dir("mutate");
    const std::string before = slurp(kData / "two_area_44.json") + slurp(kData / "bids_table1.json");
    REQUIRE(run("solve --mechanism gcts " + common_args(out)) == 0);
    const std::string after = slurp(kData / "two_area_44.json") + slurp(kData / "bids_table1.json");
    CHECK(before == after);
}

TEST_CASE("three-area compare produces a three-row table") {
    const fs::path out = fresh_dir("threearea");
    const std::string args = "compare --stitch " + (kData / "three_area_189.json").string() +
                             " --bids " + (kData / "bids_three_area.json").string() +
                             " --samples 1 --sigma 0 --out " + out.string();
    REQUIRE(run(args) == 0);
    const std::string csv = slurp(out / "comparison.csv");
    int lines = 0;
    for (char c : csv) lines += c == '\n';
    CHECK(lines == 4); // header + JED + CTS + GCTS
    CHECK(csv.find("JED") != std::string::npos);
    CHECK(csv.find("GCTS") != std::string::npos);
}
