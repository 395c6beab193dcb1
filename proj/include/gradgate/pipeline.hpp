#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "gradgate/adversarial.hpp"
#include "gradgate/autodiff.hpp"
#include "gradgate/explain.hpp"
#include "gradgate/gate.hpp"
#include "gradgate/model.hpp"
#include "gradgate/pgm.hpp"
#include "gradgate/synth.hpp"

namespace gradgate {

struct ScoreConfig {
    float beta = 0.2f;  // suspicion gate on delta
    float tau = 0.95f;  // confidence-baseline threshold
    bool enhance = false;
    EnhancementConfig enhancement;
    int cam_layer = -1; // -1 resolves to the last conv layer
    bool emit_heatmaps = false;
    int workers = 0;    // 0 resolves to the hardware concurrency
    std::uint64_t seed = 42; // echoed into outputs for provenance

    void validate() const {
        if (beta < -1.0f || beta > 1.0f)
            throw std::invalid_argument("score: beta outside [-1, 1]");
        if (!(tau > 0.0f) || !(tau < 1.0f))
            throw std::invalid_argument("score: tau outside (0, 1)");
        if (!(enhancement.alpha > 0.0f))
            throw std::invalid_argument("score: alpha must be positive");
        if (enhancement.iterations < 0)
            throw std::invalid_argument("score: iterations must be nonnegative");
        if (workers < 0) throw std::invalid_argument("score: workers must be nonnegative");
    }
};

struct SampleHeatmaps {
    Tensor original_input;
    Tensor scored_input; // the image the explanations were computed on;
                         // differs from the original only under enhancement
    Heatmap cam_pos;
    Heatmap cam_neg;
    Heatmap fullgrad;
};

struct SampleScore {
    std::string id;
    int truth_label = 0;
    Prediction deployed;  // prediction on the raw input; this is what the gate audits
    Prediction post_enh;  // prediction on the enhanced input (equals deployed when off)
    SuspicionScore score;
    GateDecision gate;     // delta-gate verdict on the deployed prediction
    GateDecision baseline; // confidence-baseline verdict on the deployed prediction
    std::optional<SampleHeatmaps> heatmaps;
};

// Explanations and the suspicion verdict for one sample. When enhancement is
// on, the heatmaps and delta come from the enhanced image while the gated
// prediction stays the deployed one; the post-enhancement prediction is kept
// alongside so the alternative accounting stays computable.
inline SampleScore score_sample(const ModelSpec& model, const Tensor& image,
                                const std::string& id, int truth_label,
                                const ScoreConfig& config) {
    SampleScore s;
    s.id = id;
    s.truth_label = truth_label;
    s.deployed = predict(model, image);

    Tensor scored = config.enhance ? enhance(image, model, config.enhancement) : image;
    ForwardTrace trace = forward_trace(model, scored);
    s.post_enh = config.enhance ? prediction_from_logits(trace.logits) : s.deployed;

    GradientBundle g_pos = backward_from_logit(trace, model, 1);
    GradientBundle g_neg = backward_from_logit(trace, model, 0);

    const int cam_layer = config.cam_layer >= 0 ? config.cam_layer : default_cam_layer(model);
    Heatmap cam_pos = upsample_bilinear(grad_cam(trace, g_pos, cam_layer, 1),
                                        model.input_h, model.input_w);
    Heatmap cam_neg = upsample_bilinear(grad_cam(trace, g_neg, cam_layer, 0),
                                        model.input_h, model.input_w);
    // Class-agnostic map, seeded on the scored input's own predicted class.
    const int fg_class = prediction_from_logits(trace.logits).label;
    Heatmap fullgrad = full_grad(trace, fg_class == 1 ? g_pos : g_neg, model);

    const Heatmap cam_pos_n = min_max_normalized(cam_pos);
    const Heatmap cam_neg_n = min_max_normalized(cam_neg);
    const BinaryMask ed_pos = binarize(cam_pos_n, otsu_threshold(cam_pos_n));
    const BinaryMask ed_neg = binarize(cam_neg_n, otsu_threshold(cam_neg_n));
    const BinaryMask en = binarize(fullgrad, otsu_threshold(fullgrad));

    s.score = delta_iou(ed_pos, ed_neg, en);
    s.gate = gate_decision(s.deployed, s.score, config.beta, id);
    s.baseline = confidence_baseline(s.deployed, config.tau, id);

    if (config.emit_heatmaps) {
        // Export the normalized maps, i.e. exactly what was binarized.
        SampleHeatmaps maps;
        maps.original_input = image;
        maps.scored_input = std::move(scored);
        maps.cam_pos = cam_pos_n;
        maps.cam_neg = cam_neg_n;
        maps.fullgrad = std::move(fullgrad);
        s.heatmaps = std::move(maps);
    }
    return s;
}

struct ScoreRun {
    ScoreConfig config;
    std::vector<SampleScore> samples;
    MetricsReport origin;      // ungated deployed predictions
    MetricsReport confidence;  // confidence baseline
    MetricsReport gated;       // delta gate
    // Alternative accounting where the post-enhancement prediction replaces
    // the deployed one; present only when enhancement is on.
    std::optional<MetricsReport> post_enhancement;
};

namespace detail {

inline void fill_run_reports(ScoreRun& run) {
    std::vector<int> labels;
    std::vector<GateDecision> origin, baseline, gated, post;
    labels.reserve(run.samples.size());
    for (const SampleScore& s : run.samples) {
        labels.push_back(s.truth_label);
        origin.push_back(ungated_decision(s.deployed, s.id));
        baseline.push_back(s.baseline);
        gated.push_back(s.gate);
        if (run.config.enhance)
            post.push_back(gate_decision(s.post_enh, s.score, run.config.beta, s.id));
    }
    run.origin = evaluate(origin, labels);
    run.confidence = evaluate(baseline, labels);
    run.gated = evaluate(gated, labels);
    if (run.config.enhance) run.post_enhancement = evaluate(post, labels);
}

} // namespace detail

// Scores every sample of the test split. Samples fan out over a bounded
// worker pool; results land in a pre-sized vector indexed by sample position,
// so downstream output bytes are independent of scheduling.
inline ScoreRun score_dataset(const ModelSpec& model, const DatasetManifest& manifest,
                              const std::filesystem::path& data_root, const ScoreConfig& config) {
    config.validate();
    const std::vector<SampleRecord>& records = manifest.test;
    if (records.empty()) throw std::invalid_argument("score: no samples in the test split");

    ScoreRun run;
    run.config = config;
    run.samples.resize(records.size());

    unsigned n_workers = config.workers > 0 ? static_cast<unsigned>(config.workers)
                                            : std::thread::hardware_concurrency();
    if (n_workers == 0) n_workers = 1;
    n_workers = std::min<unsigned>(n_workers, static_cast<unsigned>(records.size()));

    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(n_workers);
    for (unsigned t = 0; t < n_workers; ++t) {
        pool.emplace_back([&, t]() {
            try {
                for (std::size_t i = t; i < records.size(); i += n_workers) {
                    const SampleRecord& rec = records[i];
                    const Tensor image = load_pgm(data_root / rec.image_path);
                    run.samples[i] = score_sample(model, image, rec.id, rec.label, config);
                }
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (std::thread& th : pool) th.join();
    for (const std::exception_ptr& e : errors)
        if (e) std::rethrow_exception(e);

    detail::fill_run_reports(run);
    return run;
}

// ---------------------------------------------------------------------------
// Per-sample CSV. One echo line pins the configuration, then the fixed
// column set. The echo is what lets a later report command distinguish runs.
// ---------------------------------------------------------------------------

inline void write_scores_csv(const ScoreRun& run, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("score: cannot write " + path.string());
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "# gradgate-scores v1 beta=%.4f tau=%.4f alpha=%.4f iters=%d enhance=%d "
                  "seed=%llu layer=%d\n",
                  static_cast<double>(run.config.beta), static_cast<double>(run.config.tau),
                  static_cast<double>(run.config.enhancement.alpha),
                  run.config.enhancement.iterations, run.config.enhance ? 1 : 0,
                  static_cast<unsigned long long>(run.config.seed), run.config.cam_layer);
    out << buf;
    out << "sample_id,label,prediction,confidence,iou_pos,iou_neg,delta,verdict\n";
    for (const SampleScore& s : run.samples) {
        std::snprintf(buf, sizeof buf, "%s,%d,%d,%.6f,%.6f,%.6f,%.6f,%s\n", s.id.c_str(),
                      s.truth_label, s.deployed.label, static_cast<double>(s.deployed.confidence),
                      static_cast<double>(s.score.iou_pos), static_cast<double>(s.score.iou_neg),
                      static_cast<double>(s.score.delta), verdict_name(s.gate.verdict));
        out << buf;
    }
    if (!out) throw std::runtime_error("score: short write to " + path.string());
}

struct CsvEcho {
    float beta = 0.2f;
    float tau = 0.95f;
    float alpha = 0.01f;
    int iters = 2;
    bool enhance = false;
    std::uint64_t seed = 0;
    int layer = -1;
};

struct CsvRow {
    std::string sample_id;
    int label = 0;
    int prediction = 0;
    float confidence = 0.0f;
    float iou_pos = 0.0f;
    float iou_neg = 0.0f;
    float delta = 0.0f;
    std::string verdict;
};

struct LoadedScores {
    CsvEcho echo;
    std::vector<CsvRow> rows;
};

inline LoadedScores read_scores_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("report: cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("# gradgate-scores v1 ", 0) != 0)
        throw std::runtime_error("report: " + path.string() +
                                 " is missing the gradgate-scores echo line");
    LoadedScores out;
    {
        std::istringstream es(line.substr(std::string("# gradgate-scores v1 ").size()));
        std::string kv;
        while (es >> kv) {
            const std::size_t eq = kv.find('=');
            if (eq == std::string::npos) continue;
            const std::string key = kv.substr(0, eq);
            const std::string val = kv.substr(eq + 1);
            try {
                if (key == "beta") out.echo.beta = std::stof(val);
                else if (key == "tau") out.echo.tau = std::stof(val);
                else if (key == "alpha") out.echo.alpha = std::stof(val);
                else if (key == "iters") out.echo.iters = std::stoi(val);
                else if (key == "enhance") out.echo.enhance = std::stoi(val) != 0;
                else if (key == "seed") out.echo.seed = std::stoull(val);
                else if (key == "layer") out.echo.layer = std::stoi(val);
            } catch (const std::exception&) {
                throw std::runtime_error("report: malformed echo field '" + kv + "' in " +
                                         path.string());
            }
        }
    }
    if (!std::getline(in, line))
        throw std::runtime_error("report: " + path.string() + " has no header row");
    {
        const char* expected[] = {"sample_id", "label",   "prediction", "confidence",
                                  "iou_pos",   "iou_neg", "delta",      "verdict"};
        std::istringstream hs(line);
        std::string col;
        std::size_t i = 0;
        while (std::getline(hs, col, ',')) {
            if (i >= 8 || col != expected[i])
                throw std::runtime_error("report: unexpected column '" + col + "' in " +
                                         path.string() + ", expected '" +
                                         (i < 8 ? expected[i] : "<end>") + "'");
            ++i;
        }
        if (i != 8)
            throw std::runtime_error("report: missing column '" + std::string(expected[i]) +
                                     "' in " + path.string());
    }
    std::size_t line_no = 2;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ls, field, ',')) fields.push_back(field);
        if (fields.size() != 8)
            throw std::runtime_error("report: row " + std::to_string(line_no) + " of " +
                                     path.string() + " has " + std::to_string(fields.size()) +
                                     " fields, expected 8");
        CsvRow row;
        try {
            row.sample_id = fields[0];
            row.label = std::stoi(fields[1]);
            row.prediction = std::stoi(fields[2]);
            row.confidence = std::stof(fields[3]);
            row.iou_pos = std::stof(fields[4]);
            row.iou_neg = std::stof(fields[5]);
            row.delta = std::stof(fields[6]);
            row.verdict = fields[7];
        } catch (const std::exception&) {
            throw std::runtime_error("report: malformed row " + std::to_string(line_no) + " in " +
                                     path.string());
        }
        if (row.verdict != "accepted-negative" && row.verdict != "accepted-positive" &&
            row.verdict != "suspicious")
            throw std::runtime_error("report: unknown verdict '" + row.verdict + "' at row " +
                                     std::to_string(line_no) + " in " + path.string());
        out.rows.push_back(std::move(row));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Metrics document (JSON) and the merged comparison table.
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::ordered_json report_to_json(const MetricsReport& r) {
    nlohmann::ordered_json j;
    j["tp"] = r.tp;
    j["fp"] = r.fp;
    j["tn"] = r.tn;
    j["fn"] = r.fn;
    j["flagged_tn"] = r.flagged_tn;
    j["flagged_fn"] = r.flagged_fn;
    if (r.recall)
        j["recall"] = *r.recall;
    else
        j["recall"] = nullptr;
    if (r.accuracy)
        j["accuracy"] = *r.accuracy;
    else
        j["accuracy"] = nullptr;
    return j;
}

} // namespace detail

inline void write_metrics_json(const ScoreRun& run, const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    j["format"] = "gradgate-metrics-v1";
    j["config"] = {{"beta", run.config.beta},
                   {"tau", run.config.tau},
                   {"alpha", run.config.enhancement.alpha},
                   {"iters", run.config.enhancement.iterations},
                   {"enhance", run.config.enhance},
                   {"seed", run.config.seed},
                   {"layer", run.config.cam_layer}};
    j["origin"] = detail::report_to_json(run.origin);
    j["confidence"] = detail::report_to_json(run.confidence);
    j["delta_iou"] = detail::report_to_json(run.gated);
    if (run.post_enhancement)
        j["post_enhancement"] = detail::report_to_json(*run.post_enhancement);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("score: cannot write " + path.string());
    out << j.dump(2) << "\n";
    if (!out) throw std::runtime_error("score: short write to " + path.string());
}

// Origin / confidence / gated metrics recomputed from one loaded CSV.
struct ReportRow {
    std::string source;
    std::string method; // "delta-iou" or "delta-iou-adv"
    CsvEcho echo;
    MetricsReport origin;
    MetricsReport confidence;
    MetricsReport gated;
};

inline ReportRow build_report_row(const std::string& source, const LoadedScores& scores) {
    ReportRow row;
    row.source = source;
    row.method = scores.echo.enhance ? "delta-iou-adv" : "delta-iou";
    row.echo = scores.echo;
    std::vector<int> labels;
    std::vector<GateDecision> origin, confidence, gated;
    for (const CsvRow& r : scores.rows) {
        labels.push_back(r.label);
        GateDecision base;
        base.sample_id = r.sample_id;
        base.model_label = r.prediction;
        base.confidence = r.confidence;
        base.delta = r.delta;
        base.verdict =
            r.prediction == 1 ? Verdict::AcceptedPositive : Verdict::AcceptedNegative;
        origin.push_back(base);
        GateDecision conf = base;
        if (r.prediction == 0 && r.confidence < scores.echo.tau)
            conf.verdict = Verdict::Suspicious;
        confidence.push_back(conf);
        GateDecision g = base;
        if (r.verdict == "suspicious") g.verdict = Verdict::Suspicious;
        gated.push_back(g);
    }
    row.origin = evaluate(origin, labels);
    row.confidence = evaluate(confidence, labels);
    row.gated = evaluate(gated, labels);
    return row;
}

namespace detail {

inline std::string pct(const std::optional<double>& v) {
    if (!v) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", *v * 100.0);
    return buf;
}

} // namespace detail

// One row per scored CSV: the ungated baseline, the confidence baseline and
// the delta gate side by side, with the config echo distinguishing runs.
inline std::string format_report_table(const std::vector<ReportRow>& rows) {
    std::ostringstream os;
    os << "source,method,beta,tau,alpha,iters,"
       << "origin_tn,origin_fn,origin_recall,origin_acc,"
       << "conf_tn,conf_fn,conf_flagged_tn,conf_flagged_fn,conf_recall,conf_acc,"
       << "gated_tn,gated_fn,flagged_tn,flagged_fn,gated_recall,gated_acc\n";
    char buf[512];
    for (const ReportRow& r : rows) {
        std::snprintf(buf, sizeof buf,
                      "%s,%s,%.4f,%.4f,%.4f,%d,%d,%d,%s,%s,%d,%d,%d,%d,%s,%s,%d,%d,%d,%d,%s,%s\n",
                      r.source.c_str(), r.method.c_str(), static_cast<double>(r.echo.beta),
                      static_cast<double>(r.echo.tau), static_cast<double>(r.echo.alpha),
                      r.echo.iters, r.origin.tn, r.origin.fn, detail::pct(r.origin.recall).c_str(),
                      detail::pct(r.origin.accuracy).c_str(), r.confidence.tn, r.confidence.fn,
                      r.confidence.flagged_tn, r.confidence.flagged_fn,
                      detail::pct(r.confidence.recall).c_str(),
                      detail::pct(r.confidence.accuracy).c_str(), r.gated.tn, r.gated.fn,
                      r.gated.flagged_tn, r.gated.flagged_fn, detail::pct(r.gated.recall).c_str(),
                      detail::pct(r.gated.accuracy).c_str());
        os << buf;
    }
    return os.str();
}

inline void write_heatmaps(const ScoreRun& run, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    for (const SampleScore& s : run.samples) {
        if (!s.heatmaps) continue;
        save_pgm(dir / (s.id + "_input.pgm"), s.heatmaps->original_input);
        if (run.config.enhance)
            save_pgm(dir / (s.id + "_enhanced.pgm"), s.heatmaps->scored_input);
        save_pgm(dir / (s.id + "_cam_pos.pgm"), s.heatmaps->cam_pos);
        save_pgm(dir / (s.id + "_cam_neg.pgm"), s.heatmaps->cam_neg);
        save_pgm(dir / (s.id + "_fullgrad.pgm"), s.heatmaps->fullgrad);
    }
}

} // namespace gradgate
