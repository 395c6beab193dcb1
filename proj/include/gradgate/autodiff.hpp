#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "gradgate/model.hpp"
#include "gradgate/tensor.hpp"

namespace gradgate {

// Everything recorded during one forward pass: the input, every layer's
// output activation (post-nonlinearity), pooling winner indices, and the
// final pre-softmax logits. Immutable once built; re-running the same
// (model, image) produces a bit-identical trace.
struct ForwardTrace {
    Tensor input;
    std::vector<LayerKind> layer_kinds;
    std::vector<Tensor> activations;            // per layer; vectors stored as 1-D tensors
    std::vector<std::vector<int>> pool_indices; // per layer; empty unless MaxPool
    std::array<float, 2> logits{};
    std::uint64_t model_fingerprint = 0;
};

// Gradients of one scalar seed on the logits with respect to the input,
// every layer's output activation, and every bias and weight. seed_class is
// 0/1 for a plain logit seed, -1 for a composite (loss) seed.
struct GradientBundle {
    int seed_class = -1;
    Tensor input_grad;
    std::vector<Tensor> activation_grads;        // per layer, same shapes as activations
    std::vector<std::vector<float>> bias_grads;  // per layer; empty unless Conv/Dense
    std::vector<Tensor> weight_grads;            // per layer; empty shape unless Conv/Dense
    std::uint64_t model_fingerprint = 0;
};

namespace detail {

inline Tensor vector_as_tensor(std::vector<float> v) {
    const int n = static_cast<int>(v.size());
    return Tensor({n}, std::move(v));
}

} // namespace detail

inline ForwardTrace forward_trace(const ModelSpec& model, const Tensor& image) {
    if (image.shape != std::vector<int>{model.input_channels, model.input_h, model.input_w}) {
        throw std::invalid_argument("forward_trace: image shape " + image.shape_str() +
                                    " does not match model input " +
                                    std::to_string(model.input_channels) + "x" +
                                    std::to_string(model.input_h) + "x" +
                                    std::to_string(model.input_w));
    }
    ForwardTrace trace;
    trace.input = image;
    trace.model_fingerprint = model.architecture_fingerprint();
    trace.layer_kinds.reserve(model.layers.size());
    trace.activations.reserve(model.layers.size());
    trace.pool_indices.resize(model.layers.size());

    Tensor cur = image;
    for (const LayerSpec& l : model.layers) {
        trace.layer_kinds.push_back(l.kind);
        switch (l.kind) {
            case LayerKind::Conv:
                cur = conv2d_forward(cur, l.weight, l.bias, l.stride, l.pad);
                break;
            case LayerKind::ReLU:
                cur = relu(cur);
                break;
            case LayerKind::MaxPool: {
                PoolResult pr = maxpool_forward(cur, l.window, l.stride);
                trace.pool_indices[static_cast<std::size_t>(l.id)] = std::move(pr.argmax);
                cur = std::move(pr.output);
                break;
            }
            case LayerKind::Flatten: {
                Tensor flat({static_cast<int>(cur.data.size())}, cur.data);
                cur = std::move(flat);
                break;
            }
            case LayerKind::Dense:
                cur = detail::vector_as_tensor(dense_forward(cur.data, l.weight, l.bias));
                break;
        }
        trace.activations.push_back(cur);
    }
    if (cur.data.size() != 2)
        throw std::invalid_argument("forward_trace: model head produced " +
                                    std::to_string(cur.data.size()) + " logits, expected 2");
    trace.logits = {cur.data[0], cur.data[1]};
    return trace;
}

inline Prediction predict(const ModelSpec& model, const Tensor& image) {
    return prediction_from_logits(forward_trace(model, image).logits);
}

// Reverse-mode pass from an arbitrary seed on the two logits. ReLU gates by
// the recorded activation sign, max-pool routes through recorded winner
// indices, so the gradients are exact for the traced activation pattern.
inline GradientBundle backward_from_seed(const ForwardTrace& trace, const ModelSpec& model,
                                         const std::array<float, 2>& logit_seed) {
    if (trace.model_fingerprint != model.architecture_fingerprint())
        throw std::invalid_argument("backward: trace was produced from a different model");
    if (trace.activations.size() != model.layers.size())
        throw std::invalid_argument("backward: trace layer count mismatch");

    const std::size_t n_layers = model.layers.size();
    GradientBundle bundle;
    bundle.model_fingerprint = trace.model_fingerprint;
    bundle.activation_grads.resize(n_layers);
    bundle.bias_grads.resize(n_layers);
    bundle.weight_grads.resize(n_layers);

    Tensor grad({2}, {logit_seed[0], logit_seed[1]});
    for (std::size_t li = n_layers; li-- > 0;) {
        const LayerSpec& l = model.layers[li];
        const Tensor& out_act = trace.activations[li];
        if (grad.shape != out_act.shape)
            throw std::invalid_argument("backward: gradient shape drifted at layer " +
                                        std::to_string(l.id));
        bundle.activation_grads[li] = grad;
        const Tensor& in_act = li == 0 ? trace.input : trace.activations[li - 1];

        switch (l.kind) {
            case LayerKind::Dense: {
                const int m = l.units, n = l.inputs;
                bundle.bias_grads[li] = grad.data;
                Tensor wgrad = Tensor::zeros({m, n});
                Tensor igrad = Tensor::zeros(in_act.shape);
                for (int i = 0; i < m; ++i) {
                    const float g = grad.data[static_cast<std::size_t>(i)];
                    const std::size_t row = static_cast<std::size_t>(i) * n;
                    for (int j = 0; j < n; ++j) {
                        wgrad.data[row + j] = g * in_act.data[static_cast<std::size_t>(j)];
                        igrad.data[static_cast<std::size_t>(j)] += g * l.weight.data[row + j];
                    }
                }
                bundle.weight_grads[li] = std::move(wgrad);
                grad = std::move(igrad);
                break;
            }
            case LayerKind::Flatten: {
                Tensor igrad(in_act.shape, grad.data);
                grad = std::move(igrad);
                break;
            }
            case LayerKind::MaxPool: {
                Tensor igrad = Tensor::zeros(in_act.shape);
                const std::vector<int>& idx = trace.pool_indices[li];
                for (std::size_t cell = 0; cell < idx.size(); ++cell) {
                    igrad.data[static_cast<std::size_t>(idx[cell])] += grad.data[cell];
                }
                grad = std::move(igrad);
                break;
            }
            case LayerKind::ReLU: {
                Tensor igrad = grad;
                for (std::size_t i = 0; i < igrad.data.size(); ++i) {
                    if (!(out_act.data[i] > 0.0f)) igrad.data[i] = 0.0f;
                }
                grad = std::move(igrad);
                break;
            }
            case LayerKind::Conv: {
                const int c_in = in_act.shape[0], h = in_act.shape[1], w = in_act.shape[2];
                const int k_out = l.out_channels, kh = l.kernel_h, kw = l.kernel_w;
                const int h_out = out_act.shape[1], w_out = out_act.shape[2];
                const int stride = l.stride, pad = l.pad;
                Tensor igrad = Tensor::zeros(in_act.shape);
                Tensor wgrad = Tensor::zeros(l.weight.shape);
                std::vector<float> bgrad(static_cast<std::size_t>(k_out), 0.0f);
                for (int k = 0; k < k_out; ++k) {
                    const float* g_base =
                        grad.data.data() + static_cast<std::size_t>(k) * h_out * w_out;
                    float acc = 0.0f;
                    for (int i = 0; i < h_out * w_out; ++i) acc += g_base[i];
                    bgrad[static_cast<std::size_t>(k)] = acc;
                    for (int c = 0; c < c_in; ++c) {
                        float* ig_base = igrad.data.data() + static_cast<std::size_t>(c) * h * w;
                        const float* in_base =
                            in_act.data.data() + static_cast<std::size_t>(c) * h * w;
                        for (int u = 0; u < kh; ++u) {
                            for (int v = 0; v < kw; ++v) {
                                int ox_lo = 0;
                                while (ox_lo < w_out && ox_lo * stride - pad + v < 0) ++ox_lo;
                                int ox_hi = w_out;
                                while (ox_hi > ox_lo && (ox_hi - 1) * stride - pad + v >= w)
                                    --ox_hi;
                                const float wv = l.weight.at(k, c, u, v);
                                const int off = v - pad;
                                float wacc = 0.0f;
                                for (int oy = 0; oy < h_out; ++oy) {
                                    const int iy = oy * stride - pad + u;
                                    if (iy < 0 || iy >= h) continue;
                                    const float* g_row =
                                        g_base + static_cast<std::size_t>(oy) * w_out;
                                    float* ig_row = ig_base + static_cast<std::size_t>(iy) * w;
                                    const float* in_row =
                                        in_base + static_cast<std::size_t>(iy) * w;
                                    if (stride == 1) {
                                        for (int ox = ox_lo; ox < ox_hi; ++ox) {
                                            ig_row[ox + off] += wv * g_row[ox];
                                            wacc += g_row[ox] * in_row[ox + off];
                                        }
                                    } else {
                                        for (int ox = ox_lo; ox < ox_hi; ++ox) {
                                            ig_row[ox * stride + off] += wv * g_row[ox];
                                            wacc += g_row[ox] * in_row[ox * stride + off];
                                        }
                                    }
                                }
                                wgrad.at(k, c, u, v) = wacc;
                            }
                        }
                    }
                }
                bundle.bias_grads[li] = std::move(bgrad);
                bundle.weight_grads[li] = std::move(wgrad);
                grad = std::move(igrad);
                break;
            }
        }
    }
    bundle.input_grad = std::move(grad);
    return bundle;
}

inline GradientBundle backward_from_logit(const ForwardTrace& trace, const ModelSpec& model,
                                          int class_index) {
    if (class_index != 0 && class_index != 1)
        throw std::invalid_argument("backward_from_logit: class index " +
                                    std::to_string(class_index) + " outside {0, 1}");
    std::array<float, 2> seed = {0.0f, 0.0f};
    seed[static_cast<std::size_t>(class_index)] = 1.0f;
    GradientBundle bundle = backward_from_seed(trace, model, seed);
    bundle.seed_class = class_index;
    return bundle;
}

namespace detail {

// Double-precision evaluation of one logit, written independently of the
// float32 layer kernels. The finite-difference oracle needs probes whose
// own rounding noise sits far below its certification tolerance; float32
// probes would drown small gradient coordinates.
inline double double_logit(const ModelSpec& model, const std::vector<double>& image,
                           int class_index) {
    std::vector<double> cur = image;
    int ch = model.input_channels, h = model.input_h, w = model.input_w;
    for (const LayerSpec& l : model.layers) {
        switch (l.kind) {
            case LayerKind::Conv: {
                const int oh = (h + 2 * l.pad - l.kernel_h) / l.stride + 1;
                const int ow = (w + 2 * l.pad - l.kernel_w) / l.stride + 1;
                std::vector<double> next(static_cast<std::size_t>(l.out_channels) * oh * ow);
                for (int k = 0; k < l.out_channels; ++k) {
                    for (int oy = 0; oy < oh; ++oy) {
                        for (int ox = 0; ox < ow; ++ox) {
                            double acc = l.bias[static_cast<std::size_t>(k)];
                            for (int c = 0; c < l.in_channels; ++c) {
                                for (int u = 0; u < l.kernel_h; ++u) {
                                    const int iy = oy * l.stride - l.pad + u;
                                    if (iy < 0 || iy >= h) continue;
                                    for (int v = 0; v < l.kernel_w; ++v) {
                                        const int ix = ox * l.stride - l.pad + v;
                                        if (ix < 0 || ix >= w) continue;
                                        acc += cur[static_cast<std::size_t>((c * h + iy) * w + ix)] *
                                               static_cast<double>(l.weight.at(k, c, u, v));
                                    }
                                }
                            }
                            next[static_cast<std::size_t>((k * oh + oy) * ow + ox)] = acc;
                        }
                    }
                }
                cur = std::move(next);
                ch = l.out_channels;
                h = oh;
                w = ow;
                break;
            }
            case LayerKind::ReLU:
                for (double& v : cur)
                    if (v < 0.0) v = 0.0;
                break;
            case LayerKind::MaxPool: {
                const int oh = (h - l.window) / l.stride + 1;
                const int ow = (w - l.window) / l.stride + 1;
                std::vector<double> next(static_cast<std::size_t>(ch) * oh * ow);
                for (int c = 0; c < ch; ++c) {
                    for (int oy = 0; oy < oh; ++oy) {
                        for (int ox = 0; ox < ow; ++ox) {
                            double best = cur[static_cast<std::size_t>(
                                (c * h + oy * l.stride) * w + ox * l.stride)];
                            for (int u = 0; u < l.window; ++u)
                                for (int v = 0; v < l.window; ++v)
                                    best = std::max(best,
                                                    cur[static_cast<std::size_t>(
                                                        (c * h + oy * l.stride + u) * w +
                                                        ox * l.stride + v)]);
                            next[static_cast<std::size_t>((c * oh + oy) * ow + ox)] = best;
                        }
                    }
                }
                cur = std::move(next);
                h = oh;
                w = ow;
                break;
            }
            case LayerKind::Flatten:
                ch = static_cast<int>(cur.size());
                h = 1;
                w = 1;
                break;
            case LayerKind::Dense: {
                std::vector<double> next(static_cast<std::size_t>(l.units));
                for (int i = 0; i < l.units; ++i) {
                    double acc = l.bias[static_cast<std::size_t>(i)];
                    const std::size_t row = static_cast<std::size_t>(i) * l.inputs;
                    for (int j = 0; j < l.inputs; ++j)
                        acc += static_cast<double>(l.weight.data[row + j]) *
                               cur[static_cast<std::size_t>(j)];
                    next[static_cast<std::size_t>(i)] = acc;
                }
                cur = std::move(next);
                ch = l.units;
                h = 1;
                w = 1;
                break;
            }
        }
    }
    return cur[static_cast<std::size_t>(class_index)];
}

} // namespace detail

// Central-difference estimate of the input gradient of one logit,
// coordinate by coordinate. Testing oracle; quadratic in image size.
inline Tensor finite_difference_gradient(const ModelSpec& model, const Tensor& image,
                                         int class_index, float epsilon) {
    if (class_index != 0 && class_index != 1)
        throw std::invalid_argument("finite_difference_gradient: class index outside {0, 1}");
    if (!(epsilon > 0.0f))
        throw std::invalid_argument("finite_difference_gradient: epsilon must be positive");
    if (image.shape != std::vector<int>{model.input_channels, model.input_h, model.input_w})
        throw std::invalid_argument("finite_difference_gradient: image shape " +
                                    image.shape_str() + " does not match the model input");
    const double eps = static_cast<double>(epsilon);
    Tensor grad = Tensor::zeros(image.shape);
    std::vector<double> probe(image.data.begin(), image.data.end());
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + eps;
        const double hi = detail::double_logit(model, probe, class_index);
        probe[i] = orig - eps;
        const double lo = detail::double_logit(model, probe, class_index);
        probe[i] = orig;
        grad.data[i] = static_cast<float>((hi - lo) / (2.0 * eps));
    }
    return grad;
}

} // namespace gradgate
