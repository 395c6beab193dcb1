#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gradgate {

// Dense N-dimensional float32 array, channel-major for images (C x H x W)
// and K x C x kh x kw for convolution kernels. All layer arithmetic uses a
// fixed row-major accumulation order so repeated runs are bit-identical.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;

    Tensor(std::vector<int> s, std::vector<float> d)
        : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<std::size_t>(numel()) != data.size()) {
            throw std::invalid_argument(
                "Tensor: shape " + shape_str() + " implies " +
                std::to_string(numel()) + " values, got " +
                std::to_string(data.size()));
        }
    }

    static Tensor zeros(std::vector<int> s) { return full(std::move(s), 0.0f); }

    static Tensor full(std::vector<int> s, float v) {
        Tensor t;
        t.shape = std::move(s);
        t.data.assign(static_cast<std::size_t>(t.numel()), v);
        return t;
    }

    int ndim() const { return static_cast<int>(shape.size()); }

    long long numel() const {
        long long n = 1;
        for (int e : shape) n *= e;
        return n;
    }

    // 3-D accessors (c, y, x)
    float& at(int c, int y, int x) {
        return data[static_cast<std::size_t>((c * shape[1] + y) * shape[2] + x)];
    }
    float at(int c, int y, int x) const {
        return data[static_cast<std::size_t>((c * shape[1] + y) * shape[2] + x)];
    }

    // 4-D accessors (k, c, y, x)
    float& at(int k, int c, int y, int x) {
        return data[static_cast<std::size_t>(
            ((k * shape[1] + c) * shape[2] + y) * shape[3] + x)];
    }
    float at(int k, int c, int y, int x) const {
        return data[static_cast<std::size_t>(
            ((k * shape[1] + c) * shape[2] + y) * shape[3] + x)];
    }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    bool all_finite() const {
        for (float v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::ostringstream os;
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) os << "x";
            os << shape[i];
        }
        return os.str();
    }
};

// 2-D convolution, cross-correlation convention (no kernel flip).
// input: C x H x W, kernel: K x C x kh x kw, bias: length K.
// Output extent (H + 2*pad - kh) must divide exactly by stride.
inline Tensor conv2d_forward(const Tensor& input, const Tensor& kernel,
                             const std::vector<float>& bias, int stride, int pad) {
    if (input.ndim() != 3 || kernel.ndim() != 4) {
        throw std::invalid_argument("conv2d_forward: input must be 3-D and kernel 4-D, got " +
                                    input.shape_str() + " and " + kernel.shape_str());
    }
    const int c_in = input.shape[0], h = input.shape[1], w = input.shape[2];
    const int k_out = kernel.shape[0], kc = kernel.shape[1];
    const int kh = kernel.shape[2], kw = kernel.shape[3];
    if (kc != c_in) {
        throw std::invalid_argument("conv2d_forward: input channels " + input.shape_str() +
                                    " do not match kernel " + kernel.shape_str());
    }
    if (bias.size() != static_cast<std::size_t>(k_out)) {
        throw std::invalid_argument("conv2d_forward: bias length " + std::to_string(bias.size()) +
                                    " does not match kernel count " + std::to_string(k_out));
    }
    if (stride < 1 || pad < 0 || h + 2 * pad < kh || w + 2 * pad < kw) {
        throw std::invalid_argument("conv2d_forward: window " + kernel.shape_str() +
                                    " does not fit input " + input.shape_str() +
                                    " with pad " + std::to_string(pad));
    }
    if ((h + 2 * pad - kh) % stride != 0 || (w + 2 * pad - kw) % stride != 0) {
        throw std::invalid_argument("conv2d_forward: extents of " + input.shape_str() +
                                    " with pad " + std::to_string(pad) + ", stride " +
                                    std::to_string(stride) + " do not tile exactly");
    }
    const int h_out = (h + 2 * pad - kh) / stride + 1;
    const int w_out = (w + 2 * pad - kw) / stride + 1;

    // Tap-major accumulation: for each kernel tap, one contiguous pass over
    // the output rows. The order is fixed, so results stay reproducible.
    Tensor out = Tensor::zeros({k_out, h_out, w_out});
    for (int k = 0; k < k_out; ++k) {
        const float b = bias[static_cast<std::size_t>(k)];
        float* out_base = out.data.data() + static_cast<std::size_t>(k) * h_out * w_out;
        for (int i = 0; i < h_out * w_out; ++i) out_base[i] = b;
        for (int c = 0; c < c_in; ++c) {
            const float* in_base = input.data.data() + static_cast<std::size_t>(c) * h * w;
            for (int u = 0; u < kh; ++u) {
                for (int v = 0; v < kw; ++v) {
                    const float wv = kernel.at(k, c, u, v);
                    if (wv == 0.0f) continue;
                    // valid output column range for this tap
                    int ox_lo = 0;
                    while (ox_lo < w_out && ox_lo * stride - pad + v < 0) ++ox_lo;
                    int ox_hi = w_out;
                    while (ox_hi > ox_lo && (ox_hi - 1) * stride - pad + v >= w) --ox_hi;
                    for (int oy = 0; oy < h_out; ++oy) {
                        const int iy = oy * stride - pad + u;
                        if (iy < 0 || iy >= h) continue;
                        float* out_row = out_base + static_cast<std::size_t>(oy) * w_out;
                        const float* in_row = in_base + static_cast<std::size_t>(iy) * w;
                        const int off = v - pad;
                        if (stride == 1) {
                            for (int ox = ox_lo; ox < ox_hi; ++ox)
                                out_row[ox] += wv * in_row[ox + off];
                        } else {
                            for (int ox = ox_lo; ox < ox_hi; ++ox)
                                out_row[ox] += wv * in_row[ox * stride + off];
                        }
                    }
                }
            }
        }
    }
    return out;
}

struct PoolResult {
    Tensor output;
    // Flat index into the input tensor of each window winner, one per output
    // cell in row-major output order. Ties keep the first occurrence in
    // row-major window scan order, which makes gradient routing deterministic.
    std::vector<int> argmax;
};

inline PoolResult maxpool_forward(const Tensor& input, int window, int stride) {
    if (input.ndim() != 3) {
        throw std::invalid_argument("maxpool_forward: expected 3-D input, got " +
                                    input.shape_str());
    }
    const int c_in = input.shape[0], h = input.shape[1], w = input.shape[2];
    if (window < 1 || stride < 1 || window > h || window > w ||
        (h - window) % stride != 0 || (w - window) % stride != 0) {
        throw std::invalid_argument("maxpool_forward: window " + std::to_string(window) +
                                    ", stride " + std::to_string(stride) +
                                    " do not tile input " + input.shape_str());
    }
    const int h_out = (h - window) / stride + 1;
    const int w_out = (w - window) / stride + 1;

    PoolResult res;
    res.output = Tensor::zeros({c_in, h_out, w_out});
    res.argmax.resize(static_cast<std::size_t>(c_in) * h_out * w_out);
    std::size_t cell = 0;
    for (int c = 0; c < c_in; ++c) {
        for (int oy = 0; oy < h_out; ++oy) {
            for (int ox = 0; ox < w_out; ++ox, ++cell) {
                int best_idx = (c * h + oy * stride) * w + ox * stride;
                float best = input.data[static_cast<std::size_t>(best_idx)];
                for (int u = 0; u < window; ++u) {
                    for (int v = 0; v < window; ++v) {
                        const int idx = (c * h + oy * stride + u) * w + ox * stride + v;
                        const float val = input.data[static_cast<std::size_t>(idx)];
                        if (val > best) {
                            best = val;
                            best_idx = idx;
                        }
                    }
                }
                res.output.at(c, oy, ox) = best;
                res.argmax[cell] = best_idx;
            }
        }
    }
    return res;
}

inline Tensor relu(const Tensor& input) {
    Tensor out = input;
    for (float& v : out.data) v = v > 0.0f ? v : 0.0f;
    return out;
}

// weight: m x n matrix, input: length n, bias: length m -> weight*input + bias.
inline std::vector<float> dense_forward(const std::vector<float>& input,
                                        const Tensor& weight,
                                        const std::vector<float>& bias) {
    if (weight.ndim() != 2) {
        throw std::invalid_argument("dense_forward: weight must be 2-D, got " +
                                    weight.shape_str());
    }
    const int m = weight.shape[0], n = weight.shape[1];
    if (input.size() != static_cast<std::size_t>(n) ||
        bias.size() != static_cast<std::size_t>(m)) {
        throw std::invalid_argument("dense_forward: weight " + weight.shape_str() +
                                    " incompatible with input length " +
                                    std::to_string(input.size()) + ", bias length " +
                                    std::to_string(bias.size()));
    }
    std::vector<float> out(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        float acc = bias[static_cast<std::size_t>(i)];
        const std::size_t row = static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            acc += weight.data[row + j] * input[static_cast<std::size_t>(j)];
        }
        out[static_cast<std::size_t>(i)] = acc;
    }
    return out;
}

} // namespace gradgate
