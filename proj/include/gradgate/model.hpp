#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "gradgate/rng.hpp"
#include "gradgate/tensor.hpp"

namespace gradgate {

enum class LayerKind { Conv, ReLU, MaxPool, Flatten, Dense };

inline const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv: return "conv";
        case LayerKind::ReLU: return "relu";
        case LayerKind::MaxPool: return "maxpool";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::Dense: return "dense";
    }
    return "?";
}

struct LayerSpec {
    LayerKind kind{};
    int id = 0;
    // Conv parameters
    int out_channels = 0;
    int in_channels = 0;
    int kernel_h = 0;
    int kernel_w = 0;
    int stride = 1;
    int pad = 0;
    // MaxPool parameters (stride shared with `stride`)
    int window = 0;
    // Dense parameters
    int units = 0;
    int inputs = 0;
    // Parameters; conv weight is K x C x kh x kw, dense weight units x inputs.
    Tensor weight;
    std::vector<float> bias;

    bool has_params() const {
        return kind == LayerKind::Conv || kind == LayerKind::Dense;
    }
};

// Class indices everywhere: 0 = negative/background, 1 = positive/defect.
struct Prediction {
    std::array<float, 2> logits{};
    std::array<float, 2> probabilities{};
    int label = 0;
    float confidence = 0.0f;
};

struct ModelSpec {
    std::vector<LayerSpec> layers;
    int input_channels = 1;
    int input_h = 0;
    int input_w = 0;

    // Output shape of each layer in order; {n} entries are flat vectors.
    std::vector<std::vector<int>> layer_output_shapes() const {
        std::vector<std::vector<int>> shapes;
        std::vector<int> cur = {input_channels, input_h, input_w};
        for (const LayerSpec& l : layers) {
            switch (l.kind) {
                case LayerKind::Conv: {
                    if (cur.size() != 3 || cur[0] != l.in_channels)
                        throw std::invalid_argument("model: conv layer " + std::to_string(l.id) +
                                                    " expects " + std::to_string(l.in_channels) +
                                                    " input channels");
                    const int h = (cur[1] + 2 * l.pad - l.kernel_h) / l.stride + 1;
                    const int w = (cur[2] + 2 * l.pad - l.kernel_w) / l.stride + 1;
                    cur = {l.out_channels, h, w};
                    break;
                }
                case LayerKind::ReLU:
                    break;
                case LayerKind::MaxPool: {
                    if (cur.size() != 3)
                        throw std::invalid_argument("model: maxpool layer " + std::to_string(l.id) +
                                                    " needs a 3-D input");
                    cur = {cur[0], (cur[1] - l.window) / l.stride + 1,
                           (cur[2] - l.window) / l.stride + 1};
                    break;
                }
                case LayerKind::Flatten: {
                    int n = 1;
                    for (int e : cur) n *= e;
                    cur = {n};
                    break;
                }
                case LayerKind::Dense: {
                    if (cur.size() != 1 || cur[0] != l.inputs)
                        throw std::invalid_argument("model: dense layer " + std::to_string(l.id) +
                                                    " expects input length " +
                                                    std::to_string(l.inputs));
                    cur = {l.units};
                    break;
                }
            }
            shapes.push_back(cur);
        }
        return shapes;
    }

    // Shape-compatibility of consecutive layers, a 2-unit dense head, and a
    // bias vector on every parameterized layer. The all-layer bias-gradient
    // aggregation in the explainer is degenerate without biases, so their
    // presence is a structural requirement, not a convention.
    void validate() const {
        if (layers.empty()) throw std::invalid_argument("model: no layers");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (layers[i].id != static_cast<int>(i))
                throw std::invalid_argument("model: layer id " + std::to_string(layers[i].id) +
                                            " does not match its position " + std::to_string(i));
        }
        const auto shapes = layer_output_shapes();
        for (const LayerSpec& l : layers) {
            if (l.kind == LayerKind::Conv) {
                const std::vector<int> want = {l.out_channels, l.in_channels, l.kernel_h, l.kernel_w};
                if (l.weight.shape != want)
                    throw std::invalid_argument("model: conv layer " + std::to_string(l.id) +
                                                " weight shape " + l.weight.shape_str() +
                                                " does not match its spec");
                if (l.bias.size() != static_cast<std::size_t>(l.out_channels))
                    throw std::invalid_argument("model: conv layer " + std::to_string(l.id) +
                                                " is missing its bias vector");
            }
            if (l.kind == LayerKind::Dense) {
                const std::vector<int> want = {l.units, l.inputs};
                if (l.weight.shape != want)
                    throw std::invalid_argument("model: dense layer " + std::to_string(l.id) +
                                                " weight shape " + l.weight.shape_str() +
                                                " does not match its spec");
                if (l.bias.size() != static_cast<std::size_t>(l.units))
                    throw std::invalid_argument("model: dense layer " + std::to_string(l.id) +
                                                " is missing its bias vector");
            }
        }
        const LayerSpec& last = layers.back();
        if (last.kind != LayerKind::Dense || last.units != 2)
            throw std::invalid_argument("model: final layer must be a 2-unit dense head");
        (void)shapes;
    }

    // Fingerprint of the architecture (kinds and extents, not weights); used
    // to reject traces replayed against a different model.
    std::uint64_t architecture_fingerprint() const {
        std::uint64_t h = 1469598103934665603ULL;
        auto feed = [&h](std::uint64_t v) {
            h ^= v;
            h *= 1099511628211ULL;
        };
        feed(static_cast<std::uint64_t>(input_channels));
        feed(static_cast<std::uint64_t>(input_h));
        feed(static_cast<std::uint64_t>(input_w));
        for (const LayerSpec& l : layers) {
            feed(static_cast<std::uint64_t>(l.kind));
            feed(static_cast<std::uint64_t>(l.out_channels));
            feed(static_cast<std::uint64_t>(l.in_channels));
            feed(static_cast<std::uint64_t>(l.kernel_h));
            feed(static_cast<std::uint64_t>(l.kernel_w));
            feed(static_cast<std::uint64_t>(l.stride));
            feed(static_cast<std::uint64_t>(l.pad));
            feed(static_cast<std::uint64_t>(l.window));
            feed(static_cast<std::uint64_t>(l.units));
            feed(static_cast<std::uint64_t>(l.inputs));
        }
        return h;
    }
};

namespace detail {

inline LayerSpec make_conv(int id, int in_c, int out_c, int k, int pad, Rng& rng) {
    LayerSpec l;
    l.kind = LayerKind::Conv;
    l.id = id;
    l.in_channels = in_c;
    l.out_channels = out_c;
    l.kernel_h = k;
    l.kernel_w = k;
    l.stride = 1;
    l.pad = pad;
    l.weight = Tensor::zeros({out_c, in_c, k, k});
    const float std_dev = std::sqrt(2.0f / static_cast<float>(in_c * k * k));
    for (float& w : l.weight.data) w = rng.next_normal() * std_dev;
    l.bias.assign(static_cast<std::size_t>(out_c), 0.0f);
    return l;
}

inline LayerSpec make_dense(int id, int inputs, int units, Rng& rng) {
    LayerSpec l;
    l.kind = LayerKind::Dense;
    l.id = id;
    l.inputs = inputs;
    l.units = units;
    l.weight = Tensor::zeros({units, inputs});
    const float std_dev = std::sqrt(2.0f / static_cast<float>(inputs));
    for (float& w : l.weight.data) w = rng.next_normal() * std_dev;
    l.bias.assign(static_cast<std::size_t>(units), 0.0f);
    return l;
}

inline LayerSpec make_plain(int id, LayerKind kind) {
    LayerSpec l;
    l.kind = kind;
    l.id = id;
    return l;
}

inline LayerSpec make_pool(int id, int window, int stride) {
    LayerSpec l;
    l.kind = LayerKind::MaxPool;
    l.id = id;
    l.window = window;
    l.stride = stride;
    return l;
}

} // namespace detail

// Three conv/relu/pool blocks (8, 16, 32 channels) into a 32-unit hidden
// dense layer and a 2-unit head. Grayscale input, extents divisible by 8.
// Weights are He-initialized from the seed, biases start at zero.
inline ModelSpec build_tiny_vgg(int input_h, int input_w, std::uint64_t seed) {
    if (input_h <= 0 || input_w <= 0 || input_h % 8 != 0 || input_w % 8 != 0) {
        throw std::invalid_argument("build_tiny_vgg: input extents " + std::to_string(input_h) +
                                    "x" + std::to_string(input_w) + " must be divisible by 8");
    }
    Rng rng(seed);
    ModelSpec m;
    m.input_channels = 1;
    m.input_h = input_h;
    m.input_w = input_w;
    int id = 0;
    m.layers.push_back(detail::make_conv(id++, 1, 8, 3, 1, rng));
    m.layers.push_back(detail::make_plain(id++, LayerKind::ReLU));
    m.layers.push_back(detail::make_pool(id++, 2, 2));
    m.layers.push_back(detail::make_conv(id++, 8, 16, 3, 1, rng));
    m.layers.push_back(detail::make_plain(id++, LayerKind::ReLU));
    m.layers.push_back(detail::make_pool(id++, 2, 2));
    m.layers.push_back(detail::make_conv(id++, 16, 32, 3, 1, rng));
    m.layers.push_back(detail::make_plain(id++, LayerKind::ReLU));
    m.layers.push_back(detail::make_pool(id++, 2, 2));
    m.layers.push_back(detail::make_plain(id++, LayerKind::Flatten));
    const int flat = 32 * (input_h / 8) * (input_w / 8);
    m.layers.push_back(detail::make_dense(id++, flat, 32, rng));
    m.layers.push_back(detail::make_plain(id++, LayerKind::ReLU));
    m.layers.push_back(detail::make_dense(id++, 32, 2, rng));
    m.validate();
    return m;
}

inline std::array<float, 2> softmax2(const std::array<float, 2>& logits) {
    const float m = logits[0] > logits[1] ? logits[0] : logits[1];
    const float e0 = std::exp(logits[0] - m);
    const float e1 = std::exp(logits[1] - m);
    const float z = e0 + e1;
    return {e0 / z, e1 / z};
}

// Label is the argmax of the logits; an exact tie goes to the positive
// (defect) class, the fail-safe direction.
inline Prediction prediction_from_logits(const std::array<float, 2>& logits) {
    Prediction p;
    p.logits = logits;
    p.probabilities = softmax2(logits);
    p.label = logits[1] >= logits[0] ? 1 : 0;
    p.confidence = p.probabilities[static_cast<std::size_t>(p.label)];
    return p;
}

} // namespace gradgate
