#include <catch2/catch.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>

#include "gradgate/pipeline.hpp"
#include "gradgate/trainer.hpp"
#include "support/test_models.hpp"

using namespace gradgate;
namespace fs = std::filesystem;

namespace {

struct PipelineFixture {
    fs::path data_dir;
    DatasetManifest manifest;
    ModelSpec model;

    PipelineFixture() {
        SynthConfig c;
        c.height = 16;
        c.width = 16;
        c.train_background = 3;
        c.train_defect = 3;
        c.test_background = 4;
        c.test_defect = 3;
        c.master_seed = 909;
        data_dir = fs::temp_directory_path() / "gradgate_pipeline_fixture";
        fs::remove_all(data_dir);
        manifest = generate_dataset(c, data_dir);
        TrainConfig tc;
        tc.epochs = 8;
        tc.learning_rate = 0.08f;
        tc.seed = 3;
        model = train(build_tiny_vgg(16, 16, 3), manifest, data_dir, tc).model;
    }
    ~PipelineFixture() { fs::remove_all(data_dir); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("score run covers the split and round-trips through CSV", "[pipeline]") {
    PipelineFixture fx;
    ScoreConfig sc;
    sc.workers = 2;
    const ScoreRun run = score_dataset(fx.model, fx.manifest, fx.data_dir, sc);
    REQUIRE(run.samples.size() == 7);
    REQUIRE(run.origin.total() == 7);
    REQUIRE(run.gated.total() == 7);
    REQUIRE(!run.post_enhancement.has_value());

    const fs::path out = fx.data_dir / "scores.csv";
    write_scores_csv(run, out);
    const LoadedScores loaded = read_scores_csv(out);
    REQUIRE(loaded.rows.size() == 7);
    REQUIRE(loaded.echo.beta == Approx(0.2f));
    REQUIRE(loaded.echo.tau == Approx(0.95f));
    REQUIRE(!loaded.echo.enhance);
    for (std::size_t i = 0; i < loaded.rows.size(); ++i) {
        REQUIRE(loaded.rows[i].sample_id == run.samples[i].id);
        REQUIRE(loaded.rows[i].label == run.samples[i].truth_label);
        REQUIRE(loaded.rows[i].prediction == run.samples[i].deployed.label);
        REQUIRE(loaded.rows[i].verdict == verdict_name(run.samples[i].gate.verdict));
    }

    // the report row rebuilt from the CSV agrees with the in-memory reports
    const ReportRow row = build_report_row("scores.csv", loaded);
    REQUIRE(row.method == "delta-iou");
    REQUIRE(row.origin.tp == run.origin.tp);
    REQUIRE(row.origin.fn == run.origin.fn);
    REQUIRE(row.gated.flagged_tn == run.gated.flagged_tn);
    REQUIRE(row.gated.flagged_fn == run.gated.flagged_fn);
    REQUIRE(row.confidence.flagged_tn == run.confidence.flagged_tn);
}

TEST_CASE("scoring is independent of the worker count", "[pipeline]") {
    PipelineFixture fx;
    ScoreConfig one;
    one.workers = 1;
    ScoreConfig four;
    four.workers = 4;
    const ScoreRun a = score_dataset(fx.model, fx.manifest, fx.data_dir, one);
    const ScoreRun b = score_dataset(fx.model, fx.manifest, fx.data_dir, four);
    REQUIRE(a.samples.size() == b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        REQUIRE(a.samples[i].id == b.samples[i].id);
        REQUIRE(a.samples[i].score.delta == b.samples[i].score.delta);
        REQUIRE(a.samples[i].gate.verdict == b.samples[i].gate.verdict);
    }
}

TEST_CASE("enhanced runs keep both accountings", "[pipeline]") {
    PipelineFixture fx;
    ScoreConfig sc;
    sc.enhance = true;
    sc.workers = 2;
    const ScoreRun run = score_dataset(fx.model, fx.manifest, fx.data_dir, sc);
    REQUIRE(run.post_enhancement.has_value());
    REQUIRE(run.post_enhancement->total() == 7);
    for (const SampleScore& s : run.samples) {
        // deployed predictions never change; post-enhancement ones may
        REQUIRE(s.deployed.label == predict(fx.model, load_pgm(fx.data_dir / ("test/images/" + s.id + ".pgm"))).label);
    }
    const fs::path out = fx.data_dir / "scores_adv.csv";
    write_scores_csv(run, out);
    REQUIRE(read_scores_csv(out).echo.enhance);
    const fs::path mj = fx.data_dir / "metrics.json";
    write_metrics_json(run, mj);
    const std::string text = slurp(mj);
    REQUIRE(text.find("post_enhancement") != std::string::npos);
}

TEST_CASE("heatmap emission writes four panels per sample", "[pipeline]") {
    PipelineFixture fx;
    ScoreConfig sc;
    sc.emit_heatmaps = true;
    sc.workers = 2;
    const ScoreRun run = score_dataset(fx.model, fx.manifest, fx.data_dir, sc);
    const fs::path dir = fx.data_dir / "heatmaps";
    write_heatmaps(run, dir);
    for (const SampleScore& s : run.samples) {
        REQUIRE(fs::exists(dir / (s.id + "_input.pgm")));
        REQUIRE(fs::exists(dir / (s.id + "_cam_pos.pgm")));
        REQUIRE(fs::exists(dir / (s.id + "_cam_neg.pgm")));
        REQUIRE(fs::exists(dir / (s.id + "_fullgrad.pgm")));
        const Tensor map = load_pgm(dir / (s.id + "_fullgrad.pgm"));
        REQUIRE(map.shape == std::vector<int>{1, 16, 16});
    }
}

TEST_CASE("report formatting yields one row per csv", "[pipeline]") {
    PipelineFixture fx;
    ScoreConfig a;
    a.beta = 0.2f;
    ScoreConfig b;
    b.beta = 0.35f;
    const ScoreRun run_a = score_dataset(fx.model, fx.manifest, fx.data_dir, a);
    const ScoreRun run_b = score_dataset(fx.model, fx.manifest, fx.data_dir, b);
    write_scores_csv(run_a, fx.data_dir / "a.csv");
    write_scores_csv(run_b, fx.data_dir / "b.csv");

    std::vector<ReportRow> rows;
    rows.push_back(build_report_row("a.csv", read_scores_csv(fx.data_dir / "a.csv")));
    const std::string single = format_report_table(rows);
    REQUIRE(std::count(single.begin(), single.end(), '\n') == 2); // header + one row

    rows.push_back(build_report_row("b.csv", read_scores_csv(fx.data_dir / "b.csv")));
    const std::string both = format_report_table(rows);
    REQUIRE(std::count(both.begin(), both.end(), '\n') == 3);
    REQUIRE(both.find("0.2000") != std::string::npos);
    REQUIRE(both.find("0.3500") != std::string::npos);
}

TEST_CASE("csv schema violations are named", "[pipeline]") {
    const fs::path dir = fs::temp_directory_path() / "gradgate_pipeline_schema";
    fs::remove_all(dir);
    fs::create_directories(dir);
    {
        std::ofstream out(dir / "missing.csv", std::ios::binary);
        out << "# gradgate-scores v1 beta=0.2000 tau=0.9500 alpha=0.0100 iters=2 enhance=0 "
               "seed=1 layer=-1\n";
        out << "sample_id,label,prediction,confidence,iou_pos,iou_neg,delta\n";
        out << "x,0,0,0.9,0.1,0.1,0.0\n";
    }
    REQUIRE_THROWS_WITH(read_scores_csv(dir / "missing.csv"), Catch::Contains("verdict"));
    {
        std::ofstream out(dir / "noecho.csv", std::ios::binary);
        out << "sample_id,label,prediction,confidence,iou_pos,iou_neg,delta,verdict\n";
    }
    REQUIRE_THROWS_WITH(read_scores_csv(dir / "noecho.csv"), Catch::Contains("echo"));
    {
        std::ofstream out(dir / "badverdict.csv", std::ios::binary);
        out << "# gradgate-scores v1 beta=0.2000 tau=0.9500 alpha=0.0100 iters=2 enhance=0 "
               "seed=1 layer=-1\n";
        out << "sample_id,label,prediction,confidence,iou_pos,iou_neg,delta,verdict\n";
        out << "x,0,0,0.9,0.1,0.1,0.0,maybe\n";
    }
    REQUIRE_THROWS_WITH(read_scores_csv(dir / "badverdict.csv"), Catch::Contains("verdict"));
    fs::remove_all(dir);
}

TEST_CASE("scoring an empty split is rejected before output", "[pipeline]") {
    PipelineFixture fx;
    DatasetManifest empty = fx.manifest;
    empty.test.clear();
    ScoreConfig sc;
    REQUIRE_THROWS_WITH(score_dataset(fx.model, empty, fx.data_dir, sc),
                        Catch::Contains("no samples"));
}

TEST_CASE("score config validation rejects out-of-range settings", "[pipeline]") {
    ScoreConfig sc;
    sc.beta = 1.5f;
    REQUIRE_THROWS_AS(sc.validate(), std::invalid_argument);
    sc = ScoreConfig{};
    sc.tau = 1.0f;
    REQUIRE_THROWS_AS(sc.validate(), std::invalid_argument);
    sc = ScoreConfig{};
    sc.enhancement.iterations = -2;
    REQUIRE_THROWS_AS(sc.validate(), std::invalid_argument);
}
