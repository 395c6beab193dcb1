#pragma once

#include <stdexcept>

#include "gradgate/autodiff.hpp"
#include "gradgate/model.hpp"
#include "gradgate/tensor.hpp"

namespace gradgate {

struct EnhancementConfig {
    float alpha = 0.01f; // gradient-ascent step size
    int iterations = 2;
    // Pixels clamp to [0, 1] after every step so enhanced images stay in
    // the training domain.
};

// Iterative gradient ascent of the input toward the positive logit:
//   x <- clamp(x + alpha * d y_pos / d x)
// repeated config.iterations times, re-seeding the gradient each step.
// Raw gradient, not its sign, and no perturbation-budget projection.
inline Tensor enhance(const Tensor& image, const ModelSpec& model,
                      const EnhancementConfig& config) {
    if (!(config.alpha > 0.0f))
        throw std::invalid_argument("enhance: step size must be positive");
    if (config.iterations < 0)
        throw std::invalid_argument("enhance: iteration count must be nonnegative");

    Tensor x = image;
    for (int t = 0; t < config.iterations; ++t) {
        ForwardTrace trace = forward_trace(model, x);
        GradientBundle bundle = backward_from_logit(trace, model, 1);
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            float v = x.data[i] + config.alpha * bundle.input_grad.data[i];
            if (v < 0.0f) v = 0.0f;
            if (v > 1.0f) v = 1.0f;
            x.data[i] = v;
        }
    }
    return x;
}

} // namespace gradgate
