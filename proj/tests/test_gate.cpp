#include <catch2/catch.hpp>

#include <cmath>
#include <cstdint>
#include <vector>

#include "gradgate/gate.hpp"
#include "gradgate/rng.hpp"

using namespace gradgate;

namespace {

Heatmap map_from(std::vector<float> values, int h, int w) {
    Heatmap m = Heatmap::zeros(h, w, HeatmapSource::FullGrad, MapResolution::Input);
    m.values = std::move(values);
    return m;
}

// Exhaustive search over all 256 candidate split bins, recomputing the
// class statistics from scratch for every candidate. Must agree with the
// production threshold exactly, tie-break included.
float otsu_bruteforce(const Heatmap& map) {
    if (map.values.empty()) return 1.0f;
    float lo = map.values[0], hi = map.values[0];
    for (float v : map.values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (!(hi > lo)) return 1.0f;
    std::int64_t hist[256] = {0};
    for (float v : map.values) {
        int bin = static_cast<int>(v * 256.0f);
        bin = std::max(0, std::min(255, bin));
        ++hist[bin];
    }
    int best_split = -1;
    double best_var = -1.0;
    for (int s = 0; s < 256; ++s) {
        std::int64_t n0 = 0, n1 = 0, sum0 = 0, sum1 = 0;
        for (int b = 0; b <= s; ++b) {
            n0 += hist[b];
            sum0 += static_cast<std::int64_t>(b) * hist[b];
        }
        for (int b = s + 1; b < 256; ++b) {
            n1 += hist[b];
            sum1 += static_cast<std::int64_t>(b) * hist[b];
        }
        if (n0 == 0 || n1 == 0) continue;
        const double mu0 = static_cast<double>(sum0) / static_cast<double>(n0);
        const double mu1 = static_cast<double>(sum1) / static_cast<double>(n1);
        const double diff = mu0 - mu1;
        const double var = static_cast<double>(n0) * static_cast<double>(n1) * diff * diff;
        if (var > best_var) {
            best_var = var;
            best_split = s;
        }
    }
    if (best_split < 0) return 1.0f;
    return static_cast<float>(best_split + 1) / 256.0f;
}

BinaryMask mask_from(std::vector<std::uint8_t> cells, int h, int w) {
    BinaryMask m = BinaryMask::empty(h, w);
    m.cells = std::move(cells);
    return m;
}

GateDecision decision(int model_label, bool suspicious) {
    GateDecision d;
    d.model_label = model_label;
    d.verdict = suspicious ? Verdict::Suspicious
                           : (model_label == 1 ? Verdict::AcceptedPositive
                                               : Verdict::AcceptedNegative);
    return d;
}

double rounded_pct(const std::optional<double>& v) {
    REQUIRE(v.has_value());
    return std::round(*v * 1000.0) / 10.0;
}

} // namespace

TEST_CASE("otsu splits a bimodal map between its modes", "[gate]") {
    std::vector<float> values(40, 0.0f);
    for (int i = 20; i < 40; ++i) values[static_cast<std::size_t>(i)] = 1.0f;
    const Heatmap m = map_from(values, 4, 10);
    const float t = otsu_threshold(m);
    REQUIRE(t > 0.0f);
    REQUIRE(t < 1.0f);
    const BinaryMask mask = binarize(m, t);
    REQUIRE(mask.count() == 20);
    for (int i = 0; i < 20; ++i) REQUIRE(!mask.cells[static_cast<std::size_t>(i)]);
    for (int i = 20; i < 40; ++i) REQUIRE(mask.cells[static_cast<std::size_t>(i)]);
}

TEST_CASE("otsu of a constant map is one and the mask empty", "[gate]") {
    const Heatmap m = map_from(std::vector<float>(16, 0.37f), 4, 4);
    REQUIRE(otsu_threshold(m) == 1.0f);
    REQUIRE(binarize(m, 1.0f).count() == 0);
}

TEST_CASE("otsu equals the exhaustive 256-candidate search", "[gate]") {
    const Heatmap eight =
        map_from({0.1f, 0.1f, 0.1f, 0.2f, 0.8f, 0.9f, 0.9f, 1.0f}, 2, 4);
    REQUIRE(otsu_threshold(eight) == otsu_bruteforce(eight));
    // The returned boundary must separate the two populations.
    REQUIRE(otsu_threshold(eight) > 0.2f);
    REQUIRE(otsu_threshold(eight) <= 0.8f);

    Rng rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        const int h = rng.next_int(1, 8), w = rng.next_int(1, 8);
        Heatmap m = Heatmap::zeros(h, w, HeatmapSource::FullGrad, MapResolution::Input);
        const int flavor = rng.next_int(0, 3);
        for (float& v : m.values) {
            switch (flavor) {
                case 0: v = rng.next_float(); break;
                case 1: v = rng.next_int(0, 1) ? rng.next_float(0.7f, 1.0f)
                                               : rng.next_float(0.0f, 0.2f); break;
                case 2: v = static_cast<float>(rng.next_int(0, 4)) / 4.0f; break;
                default: v = 0.5f; break;
            }
        }
        REQUIRE(otsu_threshold(m) == otsu_bruteforce(m));
    }
}

TEST_CASE("binarize is a strict threshold", "[gate]") {
    const Heatmap m = map_from({0.2f, 0.8f}, 1, 2);
    const BinaryMask at_half = binarize(m, 0.5f);
    REQUIRE(!at_half.at(0, 0));
    REQUIRE(at_half.at(0, 1));
    REQUIRE(binarize(m, 1.0f).count() == 0);
    REQUIRE(binarize(m, 0.1f).count() == 2);
    // boundary: equality does not pass
    REQUIRE(binarize(m, 0.8f).count() == 0);
}

TEST_CASE("iou identity, disjoint, and hand-counted cases", "[gate]") {
    const BinaryMask a = mask_from({1, 1, 1, 0}, 2, 2);
    REQUIRE(iou(a, a) == 1.0f);
    const BinaryMask disjoint = mask_from({0, 0, 0, 1}, 2, 2);
    REQUIRE(iou(a, disjoint) == 0.0f);
    // a has 3 cells; b keeps 2 of them plus the remaining cell:
    // intersection 2, union 4.
    const BinaryMask b = mask_from({1, 1, 0, 1}, 2, 2);
    REQUIRE(iou(a, b) == Approx(0.5f));
    // Two empty masks are identical.
    const BinaryMask e = BinaryMask::empty(2, 2);
    REQUIRE(iou(e, e) == 1.0f);
    REQUIRE_THROWS_AS(iou(a, BinaryMask::empty(2, 3)), std::invalid_argument);
}

TEST_CASE("iou is symmetric and bounded on random masks", "[gate]") {
    Rng rng(55);
    for (int trial = 0; trial < 50; ++trial) {
        BinaryMask a = BinaryMask::empty(4, 4), b = BinaryMask::empty(4, 4);
        for (std::size_t i = 0; i < a.cells.size(); ++i) {
            a.cells[i] = rng.next_int(0, 1) != 0;
            b.cells[i] = rng.next_int(0, 1) != 0;
        }
        const float ab = iou(a, b);
        REQUIRE(ab == iou(b, a));
        REQUIRE(ab >= 0.0f);
        REQUIRE(ab <= 1.0f);
    }
}

TEST_CASE("delta_iou trivial and extremal cases", "[gate]") {
    const BinaryMask en = mask_from({1, 1, 0, 0}, 2, 2);
    const BinaryMask same = mask_from({1, 0, 1, 0}, 2, 2);
    REQUIRE(delta_iou(same, same, en).delta == 0.0f);

    const BinaryMask pos = en;
    const BinaryMask neg = mask_from({0, 0, 1, 1}, 2, 2);
    const SuspicionScore s = delta_iou(pos, neg, en);
    REQUIRE(s.iou_pos == 1.0f);
    REQUIRE(s.iou_neg == 0.0f);
    REQUIRE(s.delta == 1.0f);
}

TEST_CASE("delta_iou composed from binarized toy maps matches hand counting", "[gate]") {
    // Positive-class map from the two-channel toy: [[1,0],[0,0]].
    const Heatmap cam_pos = map_from({1.0f, 0.0f, 0.0f, 0.0f}, 2, 2);
    // Negative-class map lights the opposite corner.
    const Heatmap cam_neg = map_from({0.0f, 0.0f, 0.0f, 1.0f}, 2, 2);
    // Class-agnostic map covers the top row.
    const Heatmap agnostic = map_from({1.0f, 1.0f, 0.0f, 0.0f}, 2, 2);
    const BinaryMask ed_pos = binarize(cam_pos, otsu_threshold(cam_pos));
    const BinaryMask ed_neg = binarize(cam_neg, otsu_threshold(cam_neg));
    const BinaryMask en = binarize(agnostic, otsu_threshold(agnostic));
    REQUIRE(ed_pos.count() == 1);
    REQUIRE(ed_neg.count() == 1);
    REQUIRE(en.count() == 2);
    const SuspicionScore s = delta_iou(ed_pos, ed_neg, en);
    REQUIRE(s.iou_pos == Approx(0.5f)); // intersection 1, union 2
    REQUIRE(s.iou_neg == Approx(0.0f)); // disjoint, union 3
    REQUIRE(s.delta == Approx(0.5f));
}

TEST_CASE("the gate only applies to negative predictions", "[gate]") {
    Prediction pos;
    pos.label = 1;
    pos.confidence = 0.6f;
    SuspicionScore high;
    high.delta = 0.9f;
    REQUIRE(gate_decision(pos, high, 0.2f).verdict == Verdict::AcceptedPositive);

    Prediction neg;
    neg.label = 0;
    neg.confidence = 0.99f;
    SuspicionScore just_over;
    just_over.delta = 0.21f;
    REQUIRE(gate_decision(neg, just_over, 0.2f).verdict == Verdict::Suspicious);

    SuspicionScore boundary;
    boundary.delta = 0.2f;
    REQUIRE(gate_decision(neg, boundary, 0.2f).verdict == Verdict::AcceptedNegative);

    REQUIRE_THROWS_AS(gate_decision(neg, boundary, 1.5f), std::invalid_argument);
}

TEST_CASE("confidence baseline flags low-confidence negatives", "[gate]") {
    Prediction neg;
    neg.label = 0;
    neg.confidence = 0.99f;
    REQUIRE(confidence_baseline(neg, 0.95f).verdict == Verdict::AcceptedNegative);
    neg.confidence = 0.90f;
    REQUIRE(confidence_baseline(neg, 0.95f).verdict == Verdict::Suspicious);
    Prediction pos;
    pos.label = 1;
    pos.confidence = 0.55f;
    REQUIRE(confidence_baseline(pos, 0.95f).verdict == Verdict::AcceptedPositive);
    REQUIRE_THROWS_AS(confidence_baseline(neg, 1.0f), std::invalid_argument);
}

TEST_CASE("gate verdicts are invariant under positive logit scaling", "[gate]") {
    const std::array<float, 2> base = {0.8f, -0.3f};
    for (float lambda : {2.0f, 4.0f, 0.5f}) {
        const Prediction p1 = prediction_from_logits(base);
        const Prediction p2 = prediction_from_logits({base[0] * lambda, base[1] * lambda});
        REQUIRE(p1.label == p2.label);
        SuspicionScore s;
        s.delta = 0.35f;
        const GateDecision d1 = gate_decision(p1, s, 0.2f);
        const GateDecision d2 = gate_decision(p2, s, 0.2f);
        REQUIRE(d1.verdict == d2.verdict);
        REQUIRE(d1.delta == d2.delta);
    }
}

TEST_CASE("evaluate reproduces the published retained-count arithmetic", "[gate]") {
    // 894 negatives / 110 positives; ungated counts TP=91 FP=7 TN=887 FN=19.
    std::vector<GateDecision> decisions;
    std::vector<int> labels;
    auto add = [&](int n, int model_label, int truth, bool suspicious) {
        for (int i = 0; i < n; ++i) {
            decisions.push_back(decision(model_label, suspicious));
            labels.push_back(truth);
        }
    };
    add(91, 1, 1, false);
    add(7, 1, 0, false);
    add(887, 0, 0, false);
    add(19, 0, 1, false);
    const MetricsReport ungated = evaluate(decisions, labels);
    REQUIRE(ungated.tp == 91);
    REQUIRE(ungated.fp == 7);
    REQUIRE(ungated.tn == 887);
    REQUIRE(ungated.fn == 19);
    REQUIRE(rounded_pct(ungated.recall) == Approx(82.7));
    REQUIRE(rounded_pct(ungated.accuracy) == Approx(97.4));

    // Flag 64 of the true negatives and 10 of the false negatives.
    decisions.clear();
    labels.clear();
    add(91, 1, 1, false);
    add(7, 1, 0, false);
    add(823, 0, 0, false);
    add(64, 0, 0, true);
    add(9, 0, 1, false);
    add(10, 0, 1, true);
    const MetricsReport gated = evaluate(decisions, labels);
    REQUIRE(gated.tn == 823);
    REQUIRE(gated.fn == 9);
    REQUIRE(gated.flagged_tn == 64);
    REQUIRE(gated.flagged_fn == 10);
    REQUIRE(gated.retained_total() + gated.flagged_tn + gated.flagged_fn == 1004);
    REQUIRE(rounded_pct(gated.recall) == Approx(91.0));
    REQUIRE(rounded_pct(gated.accuracy) == Approx(98.3));
}

TEST_CASE("evaluate on an empty set reports not-applicable metrics", "[gate]") {
    const MetricsReport r = evaluate({}, {});
    REQUIRE(!r.recall.has_value());
    REQUIRE(!r.accuracy.has_value());
    REQUIRE(r.total() == 0);
}

TEST_CASE("evaluate rejects mismatched lengths and bad labels", "[gate]") {
    std::vector<GateDecision> ds = {decision(0, false)};
    REQUIRE_THROWS_AS(evaluate(ds, {}), std::invalid_argument);
    REQUIRE_THROWS_AS(evaluate(ds, {2}), std::invalid_argument);
}

TEST_CASE("flagging additional negatives never decreases recall", "[gate]") {
    Rng rng(99);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<GateDecision> ds;
        std::vector<int> labels;
        const int n = rng.next_int(5, 60);
        for (int i = 0; i < n; ++i) {
            const int truth = rng.next_int(0, 1);
            const int pred = rng.next_int(0, 3) == 0 ? 1 - truth : truth;
            ds.push_back(decision(pred, pred == 0 && rng.next_int(0, 3) == 0));
            labels.push_back(truth);
        }
        const MetricsReport before = evaluate(ds, labels);
        // flag one more retained negative, if any
        for (std::size_t i = 0; i < ds.size(); ++i) {
            if (ds[i].model_label == 0 && ds[i].verdict == Verdict::AcceptedNegative) {
                ds[i].verdict = Verdict::Suspicious;
                break;
            }
        }
        const MetricsReport after = evaluate(ds, labels);
        if (before.recall && after.recall) REQUIRE(*after.recall >= *before.recall);
    }
}
