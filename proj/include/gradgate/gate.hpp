#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gradgate/explain.hpp"
#include "gradgate/model.hpp"

namespace gradgate {

struct BinaryMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> cells;
    float threshold = 0.0f;

    static BinaryMask empty(int h, int w) {
        BinaryMask m;
        m.height = h;
        m.width = w;
        m.cells.assign(static_cast<std::size_t>(h) * w, 0);
        return m;
    }

    bool at(int y, int x) const { return cells[static_cast<std::size_t>(y) * width + x] != 0; }
    void set(int y, int x, bool v) { cells[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }

    int count() const {
        int n = 0;
        for (std::uint8_t c : cells) n += c != 0;
        return n;
    }
};

// Otsu threshold over a 256-bin histogram of a [0, 1]-normalized map.
// Returns the upper boundary value of the split bin that maximizes the
// between-class variance; ties keep the lowest split. A constant map
// returns 1.0 so the downstream mask comes out empty.
inline float otsu_threshold(const Heatmap& map) {
    if (map.values.empty()) return 1.0f;
    float lo = map.values[0], hi = map.values[0];
    for (float v : map.values) {
        if (v < lo) lo = v;
        if (v > hi) hi = v;
    }
    if (!(hi > lo)) return 1.0f;

    std::int64_t hist[256] = {0};
    for (float v : map.values) {
        int bin = static_cast<int>(v * 256.0f);
        if (bin < 0) bin = 0;
        if (bin > 255) bin = 255;
        ++hist[bin];
    }
    std::int64_t total = static_cast<std::int64_t>(map.values.size());
    std::int64_t sum_all = 0;
    for (int b = 0; b < 256; ++b) sum_all += static_cast<std::int64_t>(b) * hist[b];

    int best_split = 0;
    double best_var = -1.0;
    std::int64_t n0 = 0, sum0 = 0;
    for (int s = 0; s < 256; ++s) {
        n0 += hist[s];
        sum0 += static_cast<std::int64_t>(s) * hist[s];
        const std::int64_t n1 = total - n0;
        if (n0 == 0 || n1 == 0) continue;
        const double mu0 = static_cast<double>(sum0) / static_cast<double>(n0);
        const double mu1 = static_cast<double>(sum_all - sum0) / static_cast<double>(n1);
        const double diff = mu0 - mu1;
        const double var = static_cast<double>(n0) * static_cast<double>(n1) * diff * diff;
        if (var > best_var) {
            best_var = var;
            best_split = s;
        }
    }
    if (best_var < 0.0) return 1.0f; // all mass in a single bin
    return static_cast<float>(best_split + 1) / 256.0f;
}

// True where the map value strictly exceeds the threshold.
inline BinaryMask binarize(const Heatmap& map, float threshold) {
    BinaryMask mask = BinaryMask::empty(map.height, map.width);
    mask.threshold = threshold;
    for (std::size_t i = 0; i < map.values.size(); ++i)
        mask.cells[i] = map.values[i] > threshold ? 1 : 0;
    return mask;
}

// Intersection over union. Two empty masks are identical: empty union
// yields 1.0, so a fully degenerate sample scores a delta of zero rather
// than looking suspicious.
inline float iou(const BinaryMask& a, const BinaryMask& b) {
    if (a.height != b.height || a.width != b.width)
        throw std::invalid_argument("iou: mask extents " + std::to_string(a.height) + "x" +
                                    std::to_string(a.width) + " vs " + std::to_string(b.height) +
                                    "x" + std::to_string(b.width));
    std::int64_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.cells.size(); ++i) {
        const bool av = a.cells[i] != 0, bv = b.cells[i] != 0;
        inter += av && bv;
        uni += av || bv;
    }
    if (uni == 0) return 1.0f;
    return static_cast<float>(static_cast<double>(inter) / static_cast<double>(uni));
}

struct SuspicionScore {
    float iou_pos = 0.0f; // IoU(positive-class map, class-agnostic map)
    float iou_neg = 0.0f; // IoU(negative-class map, class-agnostic map)
    float delta = 0.0f;   // iou_pos - iou_neg
};

inline SuspicionScore delta_iou(const BinaryMask& ed_pos, const BinaryMask& ed_neg,
                                const BinaryMask& en) {
    SuspicionScore s;
    s.iou_pos = iou(ed_pos, en);
    s.iou_neg = iou(ed_neg, en);
    s.delta = s.iou_pos - s.iou_neg;
    return s;
}

enum class Verdict { AcceptedNegative, AcceptedPositive, Suspicious };

inline const char* verdict_name(Verdict v) {
    switch (v) {
        case Verdict::AcceptedNegative: return "accepted-negative";
        case Verdict::AcceptedPositive: return "accepted-positive";
        case Verdict::Suspicious: return "suspicious";
    }
    return "?";
}

struct GateDecision {
    std::string sample_id;
    int model_label = 0;
    float confidence = 0.0f;
    float delta = 0.0f;
    Verdict verdict = Verdict::AcceptedNegative;
};

// Only negative predictions are gated; a negative whose delta strictly
// exceeds beta is suspicious. Positive predictions pass through untouched.
inline GateDecision gate_decision(const Prediction& pred, const SuspicionScore& score,
                                  float beta, std::string sample_id = {}) {
    if (beta < -1.0f || beta > 1.0f)
        throw std::invalid_argument("gate_decision: beta outside [-1, 1]");
    GateDecision d;
    d.sample_id = std::move(sample_id);
    d.model_label = pred.label;
    d.confidence = pred.confidence;
    d.delta = score.delta;
    if (pred.label == 1) {
        d.verdict = Verdict::AcceptedPositive;
    } else {
        d.verdict = score.delta > beta ? Verdict::Suspicious : Verdict::AcceptedNegative;
    }
    return d;
}

// Confidence-threshold baseline: a negative prediction below tau is
// suspicious. Mirrors gate_decision for side-by-side reporting.
inline GateDecision confidence_baseline(const Prediction& pred, float tau,
                                        std::string sample_id = {}) {
    if (!(tau > 0.0f) || !(tau < 1.0f))
        throw std::invalid_argument("confidence_baseline: tau outside (0, 1)");
    GateDecision d;
    d.sample_id = std::move(sample_id);
    d.model_label = pred.label;
    d.confidence = pred.confidence;
    d.delta = 0.0f;
    if (pred.label == 1) {
        d.verdict = Verdict::AcceptedPositive;
    } else {
        d.verdict = pred.confidence < tau ? Verdict::Suspicious : Verdict::AcceptedNegative;
    }
    return d;
}

// An ungated pass-through decision, for the unaudited baseline rows.
inline GateDecision ungated_decision(const Prediction& pred, std::string sample_id = {}) {
    GateDecision d;
    d.sample_id = std::move(sample_id);
    d.model_label = pred.label;
    d.confidence = pred.confidence;
    d.delta = 0.0f;
    d.verdict = pred.label == 1 ? Verdict::AcceptedPositive : Verdict::AcceptedNegative;
    return d;
}

// Confusion counts over the samples the gate retains, with flagged samples
// tallied separately by their ground truth. Suspicious samples leave the
// automated decision entirely, so recall and accuracy use retained counts.
struct MetricsReport {
    int tp = 0, fp = 0, tn = 0, fn = 0;
    int flagged_tn = 0, flagged_fn = 0;
    std::optional<double> recall;
    std::optional<double> accuracy;

    int retained_total() const { return tp + fp + tn + fn; }
    int total() const { return retained_total() + flagged_tn + flagged_fn; }
};

inline MetricsReport evaluate(const std::vector<GateDecision>& decisions,
                              const std::vector<int>& truth_labels) {
    if (decisions.size() != truth_labels.size())
        throw std::invalid_argument("evaluate: " + std::to_string(decisions.size()) +
                                    " decisions vs " + std::to_string(truth_labels.size()) +
                                    " labels");
    MetricsReport r;
    for (std::size_t i = 0; i < decisions.size(); ++i) {
        const int truth = truth_labels[i];
        if (truth != 0 && truth != 1)
            throw std::invalid_argument("evaluate: ground-truth label outside {0, 1} at index " +
                                        std::to_string(i));
        const GateDecision& d = decisions[i];
        if (d.verdict == Verdict::Suspicious) {
            if (truth == 1)
                ++r.flagged_fn;
            else
                ++r.flagged_tn;
            continue;
        }
        if (d.model_label == 1) {
            if (truth == 1)
                ++r.tp;
            else
                ++r.fp;
        } else {
            if (truth == 1)
                ++r.fn;
            else
                ++r.tn;
        }
    }
    if (r.tp + r.fn > 0)
        r.recall = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn);
    if (r.retained_total() > 0)
        r.accuracy = static_cast<double>(r.tp + r.tn) / static_cast<double>(r.retained_total());
    return r;
}

} // namespace gradgate
