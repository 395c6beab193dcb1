#include <catch2/catch.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#ifndef GRADGATE_CLI_PATH
#define GRADGATE_CLI_PATH "gradgate"
#endif

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(GRADGATE_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    if (status == -1) return -1;
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

struct CliSandbox {
    fs::path root;
    fs::path config;

    CliSandbox() {
        root = fs::temp_directory_path() / "gradgate_cli_sandbox";
        fs::remove_all(root);
        fs::create_directories(root);
        config = root / "config.json";
        std::ofstream out(config);
        out << R"({
  "synth": {
    "height": 16, "width": 16,
    "train_background": 4, "train_defect": 3,
    "test_background": 4, "test_defect": 3,
    "master_seed": 99
  },
  "train": { "epochs": 6, "learning_rate": 0.08, "seed": 2 },
  "score": { "workers": 2 }
})";
    }
    ~CliSandbox() { fs::remove_all(root); }
    std::string dir(const char* name) const { return (root / name).string(); }
};

} // namespace

TEST_CASE("cli pipeline runs end to end with exit code zero", "[cli]") {
    CliSandbox box;
    const std::string cfg = " --config " + box.config.string();

    REQUIRE(run("synth --out " + box.dir("data") + cfg) == 0);
    REQUIRE(fs::exists(box.root / "data" / "manifest.json"));

    // idempotent rerun: identical manifest bytes
    const std::string first = slurp(box.root / "data" / "manifest.json");
    REQUIRE(run("synth --out " + box.dir("data") + cfg) == 0);
    REQUIRE(slurp(box.root / "data" / "manifest.json") == first);

    REQUIRE(run("train --data " + box.dir("data") + " --out " + box.dir("model") + cfg) == 0);
    REQUIRE(fs::exists(box.root / "model" / "manifest.json"));
    REQUIRE(fs::exists(box.root / "model" / "history.csv"));

    REQUIRE(run("score --data " + box.dir("data") + " --weights " + box.dir("model") +
                " --out " + box.dir("scores") + cfg) == 0);
    REQUIRE(fs::exists(box.root / "scores" / "scores.csv"));
    REQUIRE(fs::exists(box.root / "scores" / "metrics.json"));

    // identical rerun produces identical bytes
    const std::string csv_first = slurp(box.root / "scores" / "scores.csv");
    const std::string metrics_first = slurp(box.root / "scores" / "metrics.json");
    REQUIRE(run("score --data " + box.dir("data") + " --weights " + box.dir("model") +
                " --out " + box.dir("scores") + cfg) == 0);
    REQUIRE(slurp(box.root / "scores" / "scores.csv") == csv_first);
    REQUIRE(slurp(box.root / "scores" / "metrics.json") == metrics_first);

    REQUIRE(run("score --data " + box.dir("data") + " --weights " + box.dir("model") +
                " --out " + box.dir("scores_adv") + " --enhance --emit-heatmaps" + cfg) == 0);
    REQUIRE(fs::exists(box.root / "scores_adv" / "heatmaps"));

    REQUIRE(run("report " + box.dir("scores") + "/scores.csv " + box.dir("scores_adv") +
                "/scores.csv --out " + box.dir("table.csv")) == 0);
    const std::string table = slurp(box.root / "table.csv");
    REQUIRE(table.find("delta-iou-adv") != std::string::npos);
}

TEST_CASE("cli synth without a config uses the stock dataset size", "[cli]") {
    CliSandbox box;
    REQUIRE(run("synth --out " + box.dir("defaults")) == 0);
    std::ifstream in(box.root / "defaults" / "manifest.json");
    REQUIRE(in.good());
    const std::string manifest((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    std::size_t records = 0;
    for (std::size_t pos = manifest.find("\"id\":"); pos != std::string::npos;
         pos = manifest.find("\"id\":", pos + 1))
        ++records;
    REQUIRE(records == 720);
}

TEST_CASE("cli maps failure classes onto exit codes", "[cli]") {
    CliSandbox box;
    // usage errors
    REQUIRE(run("frobnicate") == 1);
    REQUIRE(run("score --beta 2.0 --data x --weights y --out z") == 1);
    // data errors
    REQUIRE(run("score --data " + box.dir("nothing") + " --weights " + box.dir("nowhere") +
                " --out " + box.dir("s")) == 2);
    REQUIRE(!fs::exists(box.root / "s" / "scores.csv"));
    REQUIRE(run("train --data " + box.dir("nothing") + " --out " + box.dir("m")) == 2);
    REQUIRE(run("report " + box.dir("missing.csv")) == 2);
    // unwritable output: a path under a file cannot be created
    std::ofstream(box.root / "blocker").put('x');
    REQUIRE(run("synth --out " + (box.root / "blocker" / "data").string() + " --config " +
                box.config.string()) == 2);
}

TEST_CASE("cli synth removes partial trees on failure", "[cli]") {
    CliSandbox box;
    // a config that passes validation but collides with an existing file
    // mid-write: make masks dir creation fail by pre-creating a file there
    fs::create_directories(box.root / "half" / "train");
    std::ofstream((box.root / "half" / "train" / "images").string()).put('x');
    REQUIRE(run("synth --out " + box.dir("half") + " --config " + box.config.string()) == 2);
    REQUIRE(!fs::exists(box.root / "half" / "manifest.json"));
    REQUIRE(!fs::exists(box.root / "half" / "train"));
}
