#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "gradgate/autodiff.hpp"
#include "gradgate/model.hpp"
#include "gradgate/tensor.hpp"

namespace gradgate {

enum class HeatmapSource { GradCamNeg, GradCamPos, FullGrad };
enum class MapResolution { LayerNative, Input };

// 2-D saliency map plus provenance tags. Grad-CAM maps are nonnegative by
// construction; the aggregate map is normalized into [0, 1] before gating.
struct Heatmap {
    int height = 0;
    int width = 0;
    std::vector<float> values;
    HeatmapSource source = HeatmapSource::FullGrad;
    MapResolution resolution = MapResolution::Input;

    static Heatmap zeros(int h, int w, HeatmapSource src, MapResolution res) {
        Heatmap m;
        m.height = h;
        m.width = w;
        m.values.assign(static_cast<std::size_t>(h) * w, 0.0f);
        m.source = src;
        m.resolution = res;
        return m;
    }

    float& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
    float at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

// Elementwise absolute value, then a per-map min-max rescale to [0, 1].
// A constant map rescales to all zeros.
inline Heatmap psi_postprocess(const Heatmap& raw) {
    Heatmap out = raw;
    for (float& v : out.values) v = std::fabs(v);
    if (out.values.empty()) return out;
    float lo = out.values[0], hi = out.values[0];
    for (float v : out.values) {
        if (v < lo) lo = v;
        if (v > hi) hi = v;
    }
    if (hi > lo) {
        const float span = hi - lo;
        for (float& v : out.values) v = (v - lo) / span;
    } else {
        for (float& v : out.values) v = 0.0f;
    }
    return out;
}

// Min-max rescale without the absolute value; same degenerate rule.
inline Heatmap min_max_normalized(const Heatmap& map) {
    Heatmap out = map;
    if (out.values.empty()) return out;
    float lo = out.values[0], hi = out.values[0];
    for (float v : out.values) {
        if (v < lo) lo = v;
        if (v > hi) hi = v;
    }
    if (hi > lo) {
        const float span = hi - lo;
        for (float& v : out.values) v = (v - lo) / span;
    } else {
        for (float& v : out.values) v = 0.0f;
    }
    return out;
}

// Channel weights are the spatial mean of the activation gradient; the map
// is the ReLU of the weighted activation sum at the layer's own resolution.
// layer_id names a Conv layer whose post-ReLU activation is the target.
inline Heatmap grad_cam(const ForwardTrace& trace, const GradientBundle& bundle,
                        int layer_id, int class_index) {
    if (class_index != 0 && class_index != 1)
        throw std::invalid_argument("grad_cam: class index outside {0, 1}");
    if (bundle.seed_class != class_index)
        throw std::invalid_argument("grad_cam: bundle seeded on class " +
                                    std::to_string(bundle.seed_class) +
                                    ", requested class " + std::to_string(class_index));
    if (bundle.model_fingerprint != trace.model_fingerprint)
        throw std::invalid_argument("grad_cam: trace and bundle come from different models");
    const int n_layers = static_cast<int>(trace.layer_kinds.size());
    if (layer_id < 0 || layer_id + 1 >= n_layers ||
        trace.layer_kinds[static_cast<std::size_t>(layer_id)] != LayerKind::Conv ||
        trace.layer_kinds[static_cast<std::size_t>(layer_id) + 1] != LayerKind::ReLU) {
        throw std::invalid_argument("grad_cam: layer " + std::to_string(layer_id) +
                                    " is not a conv layer followed by a ReLU activation");
    }
    const std::size_t act_id = static_cast<std::size_t>(layer_id) + 1;
    const Tensor& act = trace.activations[act_id];
    const Tensor& act_grad = bundle.activation_grads[act_id];

    const int channels = act.shape[0], h = act.shape[1], w = act.shape[2];
    const float inv_area = 1.0f / static_cast<float>(h * w);
    Heatmap map = Heatmap::zeros(h, w,
                                 class_index == 1 ? HeatmapSource::GradCamPos
                                                  : HeatmapSource::GradCamNeg,
                                 MapResolution::LayerNative);
    for (int c = 0; c < channels; ++c) {
        float weight = 0.0f;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) weight += act_grad.at(c, y, x);
        weight *= inv_area;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) map.at(y, x) += weight * act.at(c, y, x);
    }
    for (float& v : map.values) v = v > 0.0f ? v : 0.0f;
    return map;
}

// The last Conv layer that feeds a ReLU; the usual Grad-CAM target.
inline int default_cam_layer(const ModelSpec& model) {
    for (std::size_t i = model.layers.size(); i-- > 1;) {
        if (model.layers[i - 1].kind == LayerKind::Conv &&
            model.layers[i].kind == LayerKind::ReLU)
            return static_cast<int>(i - 1);
    }
    throw std::invalid_argument("default_cam_layer: model has no conv/ReLU pair");
}

// Bilinear interpolation with half-pixel centers (align-corners false).
// Constant maps stay constant and output values never leave the input range.
inline Heatmap upsample_bilinear(const Heatmap& map, int target_h, int target_w) {
    if (target_h < map.height || target_w < map.width)
        throw std::invalid_argument("upsample_bilinear: target " + std::to_string(target_h) +
                                    "x" + std::to_string(target_w) + " smaller than source " +
                                    std::to_string(map.height) + "x" + std::to_string(map.width));
    Heatmap out = Heatmap::zeros(target_h, target_w, map.source, MapResolution::Input);
    const float scale_y = static_cast<float>(map.height) / static_cast<float>(target_h);
    const float scale_x = static_cast<float>(map.width) / static_cast<float>(target_w);
    for (int oy = 0; oy < target_h; ++oy) {
        float sy = (static_cast<float>(oy) + 0.5f) * scale_y - 0.5f;
        if (sy < 0.0f) sy = 0.0f;
        if (sy > static_cast<float>(map.height - 1)) sy = static_cast<float>(map.height - 1);
        const int y0 = static_cast<int>(sy);
        const int y1 = y0 + 1 < map.height ? y0 + 1 : map.height - 1;
        const float fy = sy - static_cast<float>(y0);
        for (int ox = 0; ox < target_w; ++ox) {
            float sx = (static_cast<float>(ox) + 0.5f) * scale_x - 0.5f;
            if (sx < 0.0f) sx = 0.0f;
            if (sx > static_cast<float>(map.width - 1)) sx = static_cast<float>(map.width - 1);
            const int x0 = static_cast<int>(sx);
            const int x1 = x0 + 1 < map.width ? x0 + 1 : map.width - 1;
            const float fx = sx - static_cast<float>(x0);
            const float top = map.at(y0, x0) * (1.0f - fx) + map.at(y0, x1) * fx;
            const float bot = map.at(y1, x0) * (1.0f - fx) + map.at(y1, x1) * fx;
            out.at(oy, ox) = top * (1.0f - fy) + bot * fy;
        }
    }
    return out;
}

// Class-agnostic map aggregating the input-gradient term with the
// post-processed bias-gradient maps of every layer:
//   - input term: psi(input_grad * input), already at input resolution;
//   - conv bias terms: per channel, psi(bias * spatial bias-gradient field),
//     upsampled bilinearly to input resolution;
//   - dense bias terms: |bias_grad * bias| spread uniformly over the input
//     extent (a constant offset the downstream Otsu threshold absorbs).
// The accumulated map is min-max normalized to [0, 1] at the end; an
// all-zero accumulation stays all-zero.
inline Heatmap full_grad(const ForwardTrace& trace, const GradientBundle& bundle,
                         const ModelSpec& model) {
    if (bundle.model_fingerprint != trace.model_fingerprint ||
        bundle.model_fingerprint != model.architecture_fingerprint())
        throw std::invalid_argument("full_grad: trace, bundle and model do not match");
    if (bundle.input_grad.shape != trace.input.shape)
        throw std::invalid_argument("full_grad: bundle is missing the input gradient");
    for (const LayerSpec& l : model.layers) {
        if (l.has_params() && bundle.bias_grads[static_cast<std::size_t>(l.id)].empty())
            throw std::invalid_argument("full_grad: bundle is missing bias gradients for layer " +
                                        std::to_string(l.id));
    }

    const int in_h = model.input_h, in_w = model.input_w;
    Heatmap acc = Heatmap::zeros(in_h, in_w, HeatmapSource::FullGrad, MapResolution::Input);

    // Input-gradient term, summed over (the single) input channel.
    {
        Heatmap term = Heatmap::zeros(in_h, in_w, HeatmapSource::FullGrad, MapResolution::Input);
        for (int c = 0; c < model.input_channels; ++c)
            for (int y = 0; y < in_h; ++y)
                for (int x = 0; x < in_w; ++x)
                    term.at(y, x) += bundle.input_grad.at(c, y, x) * trace.input.at(c, y, x);
        term = psi_postprocess(term);
        for (std::size_t i = 0; i < acc.values.size(); ++i) acc.values[i] += term.values[i];
    }

    const float inv_pixels = 1.0f / static_cast<float>(in_h * in_w);
    for (const LayerSpec& l : model.layers) {
        if (l.kind == LayerKind::Conv) {
            // The activation gradient of the conv output is the bias-gradient
            // field: the bias enters each output cell additively.
            const Tensor& field = bundle.activation_grads[static_cast<std::size_t>(l.id)];
            const int h = field.shape[1], w = field.shape[2];
            for (int k = 0; k < l.out_channels; ++k) {
                Heatmap term = Heatmap::zeros(h, w, HeatmapSource::FullGrad,
                                              MapResolution::LayerNative);
                const float b = l.bias[static_cast<std::size_t>(k)];
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x) term.at(y, x) = field.at(k, y, x) * b;
                term = psi_postprocess(term);
                term = upsample_bilinear(term, in_h, in_w);
                for (std::size_t i = 0; i < acc.values.size(); ++i)
                    acc.values[i] += term.values[i];
            }
        } else if (l.kind == LayerKind::Dense) {
            const std::vector<float>& bg = bundle.bias_grads[static_cast<std::size_t>(l.id)];
            for (int k = 0; k < l.units; ++k) {
                const float spread = std::fabs(bg[static_cast<std::size_t>(k)] *
                                               l.bias[static_cast<std::size_t>(k)]) *
                                     inv_pixels;
                for (float& v : acc.values) v += spread;
            }
        }
    }
    return min_max_normalized(acc);
}

} // namespace gradgate
