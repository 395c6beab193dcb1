#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gradgate/autodiff.hpp"
#include "gradgate/model.hpp"
#include "gradgate/pgm.hpp"
#include "gradgate/rng.hpp"
#include "gradgate/synth.hpp"

namespace gradgate {

struct TrainConfig {
    float learning_rate = 0.02f;
    int epochs = 22;
    int batch_size = 16;
    std::uint64_t seed = 13;
    // Loss weight on defect samples; the synthetic split is heavily
    // imbalanced toward background, like the inspection data it stands for.
    float defect_class_weight = 3.0f;

    void validate() const {
        if (!(learning_rate >= 0.0f))
            throw std::invalid_argument("train: learning rate must be nonnegative");
        if (epochs < 1) throw std::invalid_argument("train: epochs must be at least 1");
        if (batch_size < 1) throw std::invalid_argument("train: batch size must be at least 1");
        if (!(defect_class_weight > 0.0f))
            throw std::invalid_argument("train: class weight must be positive");
    }
};

struct TrainHistory {
    std::vector<float> mean_loss; // unweighted mean per epoch
    std::vector<float> accuracy;  // running train accuracy per epoch
};

// Softmax cross-entropy of a 2-class logit pair; gradient is softmax minus
// the one-hot target.
inline std::pair<float, std::array<float, 2>> cross_entropy_loss_grad(
    const std::array<float, 2>& logits, int label) {
    if (label != 0 && label != 1)
        throw std::invalid_argument("cross_entropy_loss_grad: label outside {0, 1}");
    const std::array<float, 2> p = softmax2(logits);
    const float m = logits[0] > logits[1] ? logits[0] : logits[1];
    const float log_z = std::log(std::exp(logits[0] - m) + std::exp(logits[1] - m)) + m;
    const float loss = log_z - logits[static_cast<std::size_t>(label)];
    std::array<float, 2> grad = p;
    grad[static_cast<std::size_t>(label)] -= 1.0f;
    return {loss, grad};
}

struct ConfusionCounts {
    int tp = 0, fp = 0, tn = 0, fn = 0;
};

namespace detail {

struct LoadedSplit {
    std::vector<Tensor> images;
    std::vector<int> labels;
};

inline LoadedSplit load_split(const DatasetManifest& manifest,
                              const std::filesystem::path& root, const std::string& split) {
    LoadedSplit out;
    for (const SampleRecord& rec : manifest.split(split)) {
        out.images.push_back(load_pgm(root / rec.image_path));
        out.labels.push_back(rec.label);
    }
    return out;
}

} // namespace detail

struct TrainResult {
    ModelSpec model;
    TrainHistory history;
};

// Plain mini-batch gradient descent with a fixed per-(seed, epoch) shuffle.
// Everything is sequential and accumulation order is fixed, so identical
// inputs produce bit-identical weights.
inline TrainResult train(ModelSpec model, const DatasetManifest& manifest,
                         const std::filesystem::path& data_root, const TrainConfig& config) {
    config.validate();
    model.validate();
    if (manifest.train.empty()) throw std::invalid_argument("train: empty train split");
    detail::LoadedSplit data = detail::load_split(manifest, data_root, "train");
    const std::size_t n = data.images.size();

    TrainResult result;
    result.model = std::move(model);
    std::vector<std::size_t> order(n);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        Rng shuffle_rng(Rng::mix(config.seed, static_cast<std::uint64_t>(epoch) + 1));
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(
                shuffle_rng.next_int(0, static_cast<int>(i) - 1));
            std::swap(order[i - 1], order[j]);
        }

        double loss_sum = 0.0;
        std::size_t correct = 0;

        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end =
                std::min(n, start + static_cast<std::size_t>(config.batch_size));

            std::vector<Tensor> wacc(result.model.layers.size());
            std::vector<std::vector<float>> bacc(result.model.layers.size());
            for (const LayerSpec& l : result.model.layers) {
                if (!l.has_params()) continue;
                wacc[static_cast<std::size_t>(l.id)] = Tensor::zeros(l.weight.shape);
                bacc[static_cast<std::size_t>(l.id)].assign(l.bias.size(), 0.0f);
            }
            float weight_sum = 0.0f;

            for (std::size_t bi = start; bi < end; ++bi) {
                const std::size_t idx = order[bi];
                const int label = data.labels[idx];
                const float w = label == 1 ? config.defect_class_weight : 1.0f;

                ForwardTrace trace = forward_trace(result.model, data.images[idx]);
                const auto [loss, dlogits] = cross_entropy_loss_grad(trace.logits, label);
                loss_sum += loss;
                const int pred = trace.logits[1] >= trace.logits[0] ? 1 : 0;
                correct += pred == label;

                GradientBundle g = backward_from_seed(
                    trace, result.model, {dlogits[0] * w, dlogits[1] * w});
                weight_sum += w;
                for (const LayerSpec& l : result.model.layers) {
                    if (!l.has_params()) continue;
                    const std::size_t li = static_cast<std::size_t>(l.id);
                    Tensor& wa = wacc[li];
                    const Tensor& wg = g.weight_grads[li];
                    for (std::size_t k = 0; k < wa.data.size(); ++k) wa.data[k] += wg.data[k];
                    std::vector<float>& ba = bacc[li];
                    const std::vector<float>& bg = g.bias_grads[li];
                    for (std::size_t k = 0; k < ba.size(); ++k) ba[k] += bg[k];
                }
            }

            if (weight_sum > 0.0f && config.learning_rate > 0.0f) {
                const float scale = config.learning_rate / weight_sum;
                for (LayerSpec& l : result.model.layers) {
                    if (!l.has_params()) continue;
                    const std::size_t li = static_cast<std::size_t>(l.id);
                    const Tensor& wa = wacc[li];
                    for (std::size_t k = 0; k < l.weight.data.size(); ++k)
                        l.weight.data[k] -= scale * wa.data[k];
                    const std::vector<float>& ba = bacc[li];
                    for (std::size_t k = 0; k < l.bias.size(); ++k) l.bias[k] -= scale * ba[k];
                }
            }
        }

        result.history.mean_loss.push_back(static_cast<float>(loss_sum / static_cast<double>(n)));
        result.history.accuracy.push_back(static_cast<float>(correct) / static_cast<float>(n));
    }
    return result;
}

// Ungated confusion counts of the model on one split.
inline ConfusionCounts evaluate_classifier(const ModelSpec& model,
                                           const DatasetManifest& manifest,
                                           const std::filesystem::path& data_root,
                                           const std::string& split) {
    const std::vector<SampleRecord>& records = manifest.split(split);
    ConfusionCounts c;
    for (const SampleRecord& rec : records) {
        const Prediction p = predict(model, load_pgm(data_root / rec.image_path));
        if (p.label == 1) {
            if (rec.label == 1)
                ++c.tp;
            else
                ++c.fp;
        } else {
            if (rec.label == 1)
                ++c.fn;
            else
                ++c.tn;
        }
    }
    return c;
}

inline void save_history_csv(const TrainHistory& history, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("train: cannot write " + path.string());
    out << "epoch,mean_loss,train_accuracy\n";
    char buf[96];
    for (std::size_t e = 0; e < history.mean_loss.size(); ++e) {
        std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f\n", e + 1,
                      static_cast<double>(history.mean_loss[e]),
                      static_cast<double>(history.accuracy[e]));
        out << buf;
    }
    if (!out) throw std::runtime_error("train: short write to " + path.string());
}

} // namespace gradgate
