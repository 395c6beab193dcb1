// gradgate command-line front end: synth -> train -> score -> report.
// Exit codes: 0 success, 1 usage/config error, 2 data or model error.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gradgate/gradgate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct RunConfig {
    gradgate::SynthConfig synth;
    gradgate::TrainConfig train;
    gradgate::ScoreConfig score;
};

// Settings file (JSON, all sections and fields optional); command-line
// flags override whatever the file sets.
RunConfig load_run_config(const std::string& path) {
    RunConfig cfg;
    if (path.empty()) return cfg;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("config: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::invalid_argument("config: malformed JSON in " + path + ": " + e.what());
    }
    if (j.contains("synth")) {
        const json& s = j["synth"];
        auto& c = cfg.synth;
        c.height = s.value("height", c.height);
        c.width = s.value("width", c.width);
        c.train_background = s.value("train_background", c.train_background);
        c.train_defect = s.value("train_defect", c.train_defect);
        c.test_background = s.value("test_background", c.test_background);
        c.test_defect = s.value("test_defect", c.test_defect);
        c.master_seed = s.value("master_seed", c.master_seed);
        c.background_low = s.value("background_low", c.background_low);
        c.background_high = s.value("background_high", c.background_high);
        c.texture_sigma = s.value("texture_sigma", c.texture_sigma);
        c.texture_sigma_spread = s.value("texture_sigma_spread", c.texture_sigma_spread);
        c.texture_aspect = s.value("texture_aspect", c.texture_aspect);
        c.edge_blur_sigma = s.value("edge_blur_sigma", c.edge_blur_sigma);
        c.max_scratches = s.value("max_scratches", c.max_scratches);
        c.scratch_thickness_min = s.value("scratch_thickness_min", c.scratch_thickness_min);
        c.scratch_thickness_max = s.value("scratch_thickness_max", c.scratch_thickness_max);
        c.scratch_length_min = s.value("scratch_length_min", c.scratch_length_min);
        c.scratch_length_max = s.value("scratch_length_max", c.scratch_length_max);
        c.contrast_min = s.value("contrast_min", c.contrast_min);
        c.contrast_max = s.value("contrast_max", c.contrast_max);
        c.train_contrast_min = s.value("train_contrast_min", c.train_contrast_min);
        c.train_contrast_max = s.value("train_contrast_max", c.train_contrast_max);
        c.test_contrast_min = s.value("test_contrast_min", c.test_contrast_min);
        c.test_contrast_max = s.value("test_contrast_max", c.test_contrast_max);
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        auto& c = cfg.train;
        c.learning_rate = t.value("learning_rate", c.learning_rate);
        c.epochs = t.value("epochs", c.epochs);
        c.batch_size = t.value("batch_size", c.batch_size);
        c.seed = t.value("seed", c.seed);
        c.defect_class_weight = t.value("defect_class_weight", c.defect_class_weight);
    }
    if (j.contains("score")) {
        const json& s = j["score"];
        auto& c = cfg.score;
        c.beta = s.value("beta", c.beta);
        c.tau = s.value("tau", c.tau);
        c.enhancement.alpha = s.value("alpha", c.enhancement.alpha);
        c.enhancement.iterations = s.value("iters", c.enhancement.iterations);
        c.enhance = s.value("enhance", c.enhance);
        c.cam_layer = s.value("layer", c.cam_layer);
        c.workers = s.value("workers", c.workers);
        c.seed = s.value("seed", c.seed);
    }
    return cfg;
}

int cmd_synth(const RunConfig& cfg, const std::string& out_dir) {
    const fs::path root(out_dir);
    const bool created_root = !fs::exists(root);
    try {
        cfg.synth.validate();
    } catch (const std::exception& e) {
        std::cerr << "gradgate synth: " << e.what() << "\n";
        return kExitUsage;
    }
    try {
        gradgate::DatasetManifest manifest = gradgate::generate_dataset(cfg.synth, root);
        std::cout << "wrote " << manifest.train.size() + manifest.test.size() << " samples under "
                  << root.string() << "\n";
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "gradgate synth: " << e.what() << "\n";
        std::error_code ec;
        if (created_root) {
            fs::remove_all(root, ec);
        } else {
            fs::remove_all(root / "train", ec);
            fs::remove_all(root / "test", ec);
            fs::remove(root / "manifest.json", ec);
        }
        return kExitData;
    }
}

int cmd_train(const RunConfig& cfg, const std::string& data_dir, const std::string& out_dir) {
    try {
        cfg.train.validate();
    } catch (const std::exception& e) {
        std::cerr << "gradgate train: " << e.what() << "\n";
        return kExitUsage;
    }
    try {
        const fs::path data(data_dir);
        const gradgate::DatasetManifest manifest = gradgate::load_manifest(data / "manifest.json");
        gradgate::ModelSpec model = gradgate::build_tiny_vgg(
            manifest.config.height, manifest.config.width, cfg.train.seed);
        gradgate::TrainResult result = gradgate::train(std::move(model), manifest, data, cfg.train);

        const fs::path out(out_dir);
        fs::create_directories(out);
        gradgate::save_weights(result.model, out);
        gradgate::save_history_csv(result.history, out / "history.csv");

        const gradgate::ConfusionCounts train_counts =
            gradgate::evaluate_classifier(result.model, manifest, data, "train");
        const int total = train_counts.tp + train_counts.fp + train_counts.tn + train_counts.fn;
        std::printf("final train accuracy %.1f%% (loss %.4f); weights in %s\n",
                    100.0 * (train_counts.tp + train_counts.tn) / (total > 0 ? total : 1),
                    static_cast<double>(result.history.mean_loss.back()), out.string().c_str());
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "gradgate train: " << e.what() << "\n";
        return kExitData;
    }
}

int cmd_score(const RunConfig& cfg, const std::string& data_dir, const std::string& weights_dir,
              const std::string& out_dir) {
    try {
        cfg.score.validate();
    } catch (const std::exception& e) {
        std::cerr << "gradgate score: " << e.what() << "\n";
        return kExitUsage;
    }
    try {
        const fs::path data(data_dir);
        if (!fs::exists(data / "manifest.json"))
            throw std::runtime_error("no dataset manifest at " + (data / "manifest.json").string());
        if (!fs::exists(fs::path(weights_dir) / "manifest.json"))
            throw std::runtime_error("no weights at " + weights_dir);
        const gradgate::DatasetManifest manifest = gradgate::load_manifest(data / "manifest.json");
        const gradgate::ModelSpec model = gradgate::load_weights(weights_dir);
        if (cfg.score.cam_layer >= 0) {
            const auto& layers = model.layers;
            const std::size_t id = static_cast<std::size_t>(cfg.score.cam_layer);
            if (id + 1 >= layers.size() || layers[id].kind != gradgate::LayerKind::Conv ||
                layers[id + 1].kind != gradgate::LayerKind::ReLU)
                throw std::runtime_error("--layer " + std::to_string(cfg.score.cam_layer) +
                                         " is not a conv layer followed by a ReLU in this model");
        }

        gradgate::ScoreRun run = gradgate::score_dataset(model, manifest, data, cfg.score);

        const fs::path out(out_dir);
        fs::create_directories(out);
        gradgate::write_scores_csv(run, out / "scores.csv");
        gradgate::write_metrics_json(run, out / "metrics.json");
        if (cfg.score.emit_heatmaps) gradgate::write_heatmaps(run, out / "heatmaps");

        auto line = [](const char* name, const gradgate::MetricsReport& r) {
            char recall[16] = "n/a", acc[16] = "n/a";
            if (r.recall) std::snprintf(recall, sizeof recall, "%.1f", *r.recall * 100.0);
            if (r.accuracy) std::snprintf(acc, sizeof acc, "%.1f", *r.accuracy * 100.0);
            std::printf("%-12s tn=%-4d fn=%-3d flagged_tn=%-4d flagged_fn=%-3d recall=%s acc=%s\n",
                        name, r.tn, r.fn, r.flagged_tn, r.flagged_fn, recall, acc);
        };
        line("origin", run.origin);
        line("confidence", run.confidence);
        line(cfg.score.enhance ? "delta-adv" : "delta", run.gated);
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "gradgate score: " << e.what() << "\n";
        return kExitData;
    }
}

int cmd_report(const std::vector<std::string>& csvs, const std::string& out_file) {
    try {
        std::vector<gradgate::ReportRow> rows;
        for (const std::string& path : csvs) {
            const gradgate::LoadedScores scores = gradgate::read_scores_csv(path);
            rows.push_back(gradgate::build_report_row(path, scores));
        }
        const std::string table = gradgate::format_report_table(rows);
        if (out_file.empty()) {
            std::cout << table;
        } else {
            std::ofstream out(out_file, std::ios::binary);
            if (!out) throw std::runtime_error("cannot write " + out_file);
            out << table;
            if (!out) throw std::runtime_error("short write to " + out_file);
        }
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "gradgate report: " << e.what() << "\n";
        return kExitData;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Saliency-disagreement audit for binary defect classifiers"};
    app.require_subcommand(1);
    app.fallthrough(); // lets --config appear after the subcommand name

    std::string config_path;
    app.add_option("--config", config_path, "JSON settings file (flags override it)");

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic scratch-defect dataset");
    std::string synth_out = "data";
    std::optional<std::uint64_t> synth_seed;
    synth->add_option("--out", synth_out, "Dataset root directory");
    synth->add_option("--seed", synth_seed, "Master seed");

    // train
    auto* train = app.add_subcommand("train", "Train the classifier on a generated dataset");
    std::string train_data = "data", train_out = "model";
    std::optional<std::uint64_t> train_seed;
    std::optional<float> train_lr;
    std::optional<int> train_epochs, train_batch;
    std::optional<float> train_cw;
    train->add_option("--data", train_data, "Dataset root (with manifest.json)");
    train->add_option("--out", train_out, "Output directory for weights and history");
    train->add_option("--seed", train_seed, "Init and shuffle seed");
    train->add_option("--lr", train_lr, "Learning rate");
    train->add_option("--epochs", train_epochs, "Epoch count");
    train->add_option("--batch", train_batch, "Batch size");
    train->add_option("--class-weight", train_cw, "Loss weight for the defect class");

    // score
    auto* score = app.add_subcommand("score", "Score the test split and gate suspicious samples");
    std::string score_data = "data", score_weights = "model", score_out = "scores";
    std::optional<float> beta, tau, alpha;
    std::optional<int> iters, layer, workers;
    std::optional<std::uint64_t> score_seed;
    bool enhance = false, emit_heatmaps = false;
    score->add_option("--data", score_data, "Dataset root (with manifest.json)");
    score->add_option("--weights", score_weights, "Trained weight directory");
    score->add_option("--out", score_out, "Output directory");
    score->add_option("--beta", beta, "Suspicion gate on delta-IoU (default 0.2)");
    score->add_option("--tau", tau, "Confidence baseline threshold (default 0.95)");
    score->add_option("--alpha", alpha, "Enhancement step size (default 0.01)");
    score->add_option("--iters", iters, "Enhancement iterations (default 2)");
    score->add_flag("--enhance", enhance, "Apply gradient-ascent enhancement before scoring");
    score->add_flag("--emit-heatmaps", emit_heatmaps, "Write per-sample heatmap PGMs");
    score->add_option("--layer", layer, "Grad-CAM conv layer id (-1 = last conv)");
    score->add_option("--workers", workers, "Worker threads (0 = hardware)");
    score->add_option("--seed", score_seed, "Seed echoed into outputs");

    // report
    auto* report = app.add_subcommand("report", "Merge score CSVs into one comparison table");
    std::vector<std::string> report_csvs;
    std::string report_out;
    report->add_option("csvs", report_csvs, "Score CSV files")->required()->expected(-1);
    report->add_option("--out", report_out, "Write the table here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    RunConfig cfg;
    try {
        cfg = load_run_config(config_path);
    } catch (const std::exception& e) {
        std::cerr << "gradgate: " << e.what() << "\n";
        return kExitUsage;
    }

    if (synth->parsed()) {
        if (synth_seed) cfg.synth.master_seed = *synth_seed;
        return cmd_synth(cfg, synth_out);
    }
    if (train->parsed()) {
        if (train_seed) cfg.train.seed = *train_seed;
        if (train_lr) cfg.train.learning_rate = *train_lr;
        if (train_epochs) cfg.train.epochs = *train_epochs;
        if (train_batch) cfg.train.batch_size = *train_batch;
        if (train_cw) cfg.train.defect_class_weight = *train_cw;
        return cmd_train(cfg, train_data, train_out);
    }
    if (score->parsed()) {
        if (beta) cfg.score.beta = *beta;
        if (tau) cfg.score.tau = *tau;
        if (alpha) cfg.score.enhancement.alpha = *alpha;
        if (iters) cfg.score.enhancement.iterations = *iters;
        if (enhance) cfg.score.enhance = true;
        if (emit_heatmaps) cfg.score.emit_heatmaps = true;
        if (layer) cfg.score.cam_layer = *layer;
        if (workers) cfg.score.workers = *workers;
        if (score_seed) cfg.score.seed = *score_seed;
        return cmd_score(cfg, score_data, score_weights, score_out);
    }
    if (report->parsed()) {
        return cmd_report(report_csvs, report_out);
    }
    return kExitUsage;
}
