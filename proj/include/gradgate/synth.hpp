#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gradgate/gate.hpp"
#include "gradgate/pgm.hpp"
#include "gradgate/rng.hpp"
#include "gradgate/tensor.hpp"

namespace gradgate {

// Generator settings. contrast_min/max is the active scratch-contrast range
// used by generate_sample; generate_dataset swaps in the per-split ranges
// (train samples draw uniformly, test samples sweep from strong to faint so
// the faint tail manufactures borderline misses).
struct SynthConfig {
    int height = 32;
    int width = 32;
    int train_background = 400;
    int train_defect = 80;
    int test_background = 200;
    int test_defect = 40;
    std::uint64_t master_seed = 20240917;

    float background_low = 0.48f;
    float background_high = 0.66f;
    float texture_sigma = 1.0f;
    float texture_sigma_spread = 0.40f; // per-sample uniform jitter around texture_sigma
    float texture_aspect = 1.0f;        // horizontal stretch of the band filter
    float edge_blur_sigma = 0.8f;
    int max_scratches = 1;
    float scratch_thickness_min = 1.4f;
    float scratch_thickness_max = 2.4f;
    float scratch_length_min = 0.30f; // fraction of min(height, width)
    float scratch_length_max = 0.60f;

    float contrast_min = 0.40f;
    float contrast_max = 0.60f;
    float train_contrast_min = 0.40f;
    float train_contrast_max = 0.60f;
    float test_contrast_min = 0.16f;
    float test_contrast_max = 0.60f;

    void validate() const {
        if (height <= 0 || width <= 0 || height % 8 != 0 || width % 8 != 0)
            throw std::invalid_argument("synth: extents must be positive and divisible by 8");
        if (train_background < 1 || train_defect < 1 || test_background < 1 || test_defect < 1)
            throw std::invalid_argument("synth: each split needs at least one sample per class");
        if (!(background_low > 0.0f) || !(background_high <= 1.0f) ||
            !(background_low < background_high))
            throw std::invalid_argument("synth: background band must satisfy 0 < low < high <= 1");
        if (!(texture_sigma > 0.0f) || !(edge_blur_sigma > 0.0f))
            throw std::invalid_argument("synth: blur sigmas must be positive");
        if (!(texture_aspect > 0.0f))
            throw std::invalid_argument("synth: texture aspect must be positive");
        if (texture_sigma_spread < 0.0f || texture_sigma - texture_sigma_spread < 0.3f)
            throw std::invalid_argument("synth: texture sigma spread leaves sigma under 0.3");
        if (max_scratches < 1)
            throw std::invalid_argument("synth: max_scratches must be at least 1");
        if (!(scratch_thickness_min > 0.0f) || !(scratch_thickness_max >= scratch_thickness_min))
            throw std::invalid_argument("synth: bad scratch thickness range");
        if (!(scratch_length_min > 0.0f) || !(scratch_length_max >= scratch_length_min) ||
            !(scratch_length_max <= 1.0f))
            throw std::invalid_argument("synth: bad scratch length range");
        auto check_range = [](float lo, float hi, const char* what) {
            if (!(lo > 0.0f) || !(hi <= 1.0f) || !(lo <= hi))
                throw std::invalid_argument(std::string("synth: bad contrast range for ") + what);
        };
        check_range(contrast_min, contrast_max, "active");
        check_range(train_contrast_min, train_contrast_max, "train");
        check_range(test_contrast_min, test_contrast_max, "test");
    }
};

struct SampleRecord {
    std::string id;
    std::string image_path; // relative to the dataset root
    int label = 0;          // 0 background, 1 defect
    std::string mask_path;  // empty for background samples
    std::uint64_t seed = 0;
    float contrast = 0.0f;  // 0 for background samples
};

struct DatasetManifest {
    SynthConfig config;
    std::vector<SampleRecord> train;
    std::vector<SampleRecord> test;

    const std::vector<SampleRecord>& split(const std::string& name) const {
        if (name == "train") return train;
        if (name == "test") return test;
        throw std::invalid_argument("manifest: unknown split '" + name + "'");
    }

    void validate() const {
        std::vector<std::string> ids;
        ids.reserve(train.size() + test.size());
        for (const auto& r : train) ids.push_back(r.id);
        for (const auto& r : test) ids.push_back(r.id);
        std::sort(ids.begin(), ids.end());
        if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
            throw std::invalid_argument("manifest: duplicate sample ids");
        auto count = [](const std::vector<SampleRecord>& recs, int label) {
            int n = 0;
            for (const auto& r : recs) n += r.label == label;
            return n;
        };
        if (count(train, 0) != config.train_background || count(train, 1) != config.train_defect ||
            count(test, 0) != config.test_background || count(test, 1) != config.test_defect)
            throw std::invalid_argument("manifest: class counts do not match the config echo");
        for (const auto& r : train)
            if ((r.label == 1) != !r.mask_path.empty())
                throw std::invalid_argument("manifest: defect samples must carry a mask (" + r.id + ")");
        for (const auto& r : test)
            if ((r.label == 1) != !r.mask_path.empty())
                throw std::invalid_argument("manifest: defect samples must carry a mask (" + r.id + ")");
    }
};

namespace detail {

inline std::vector<float> gaussian_kernel(float sigma, int* radius_out) {
    const int radius = static_cast<int>(std::ceil(2.5f * sigma));
    std::vector<float> k(static_cast<std::size_t>(2 * radius + 1));
    float sum = 0.0f;
    for (int i = -radius; i <= radius; ++i) {
        const float v = std::exp(-static_cast<float>(i * i) / (2.0f * sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = v;
        sum += v;
    }
    for (float& v : k) v /= sum;
    *radius_out = radius;
    return k;
}

// Separable Gaussian blur with edge replication; sigma_x may differ from
// sigma_y to stretch the texture grain.
inline std::vector<float> gaussian_blur(const std::vector<float>& src, int h, int w,
                                        float sigma_x, float sigma_y,
                                        int* radius_out = nullptr) {
    int rx = 0, ry = 0;
    const std::vector<float> kx = gaussian_kernel(sigma_x, &rx);
    const std::vector<float> ky = gaussian_kernel(sigma_y, &ry);
    if (radius_out) *radius_out = rx > ry ? rx : ry;
    std::vector<float> tmp(src.size(), 0.0f), dst(src.size(), 0.0f);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            float acc = 0.0f;
            for (int i = -rx; i <= rx; ++i) {
                int xx = x + i;
                if (xx < 0) xx = 0;
                if (xx >= w) xx = w - 1;
                acc += src[static_cast<std::size_t>(y) * w + xx] *
                       kx[static_cast<std::size_t>(i + rx)];
            }
            tmp[static_cast<std::size_t>(y) * w + x] = acc;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            float acc = 0.0f;
            for (int i = -ry; i <= ry; ++i) {
                int yy = y + i;
                if (yy < 0) yy = 0;
                if (yy >= h) yy = h - 1;
                acc += tmp[static_cast<std::size_t>(yy) * w + x] *
                       ky[static_cast<std::size_t>(i + ry)];
            }
            dst[static_cast<std::size_t>(y) * w + x] = acc;
        }
    }
    return dst;
}

inline std::vector<float> gaussian_blur(const std::vector<float>& src, int h, int w, float sigma,
                                        int* radius_out = nullptr) {
    return gaussian_blur(src, h, w, sigma, sigma, radius_out);
}

inline void min_max_to_unit(std::vector<float>& v) {
    if (v.empty()) return;
    float lo = v[0], hi = v[0];
    for (float x : v) {
        if (x < lo) lo = x;
        if (x > hi) hi = x;
    }
    if (hi > lo) {
        const float span = hi - lo;
        for (float& x : v) x = (x - lo) / span;
    } else {
        for (float& x : v) x = 0.0f;
    }
}

// Stamps a jittered polyline of 2-4 segments into the support mask.
inline void stamp_scratch(std::vector<std::uint8_t>& support, int h, int w, float t_min,
                          float t_max, float len_min, float len_max, Rng& rng) {
    const float margin = 0.12f;
    float y = rng.next_float(margin * h, (1.0f - margin) * h);
    float x = rng.next_float(margin * w, (1.0f - margin) * w);
    float angle = rng.next_float(0.0f, 6.2831853f);
    const float total_len = rng.next_float(len_min, len_max) * static_cast<float>(std::min(h, w));
    const int segments = rng.next_int(2, 4);
    const float seg_len = total_len / static_cast<float>(segments);
    const float thickness = rng.next_float(t_min, t_max);

    for (int s = 0; s < segments; ++s) {
        angle += rng.next_float(-0.5f, 0.5f);
        const float dy = std::sin(angle), dx = std::cos(angle);
        const int steps = static_cast<int>(seg_len * 2.0f);
        for (int i = 0; i < steps; ++i) {
            y += dy * 0.5f;
            x += dx * 0.5f;
            const int r = static_cast<int>(std::ceil(thickness));
            for (int oy = -r; oy <= r; ++oy) {
                for (int ox = -r; ox <= r; ++ox) {
                    if (static_cast<float>(oy * oy + ox * ox) > thickness * thickness) continue;
                    const int py = static_cast<int>(y) + oy;
                    const int px = static_cast<int>(x) + ox;
                    if (py < 0 || py >= h || px < 0 || px >= w) continue;
                    support[static_cast<std::size_t>(py) * w + px] = 1;
                }
            }
        }
    }
}

} // namespace detail

struct GeneratedSample {
    Tensor image;                   // 1 x H x W in [0, 1]
    std::optional<BinaryMask> mask; // scratch support; absent for background samples
    float contrast = 0.0f;
};

// One sample: a band-filtered noise texture, plus (for defects) 1..max
// dark polyline scratches with Gaussian-blurred edges subtracted at the
// drawn contrast. The background is generated from a stream independent of
// the defect stream, so (seed, defect=false) reproduces the exact backdrop
// of (seed, defect=true).
inline GeneratedSample generate_sample(std::uint64_t seed, bool defect, const SynthConfig& config) {
    config.validate();
    const int h = config.height, w = config.width;
    const std::size_t n = static_cast<std::size_t>(h) * w;

    Rng bg_rng(Rng::mix(seed, 0xBAC6u));
    const float sigma =
        config.texture_sigma + config.texture_sigma_spread * (2.0f * bg_rng.next_float() - 1.0f);
    std::vector<float> noise(n);
    for (float& v : noise) v = bg_rng.next_float();
    std::vector<float> low =
        detail::gaussian_blur(noise, h, w, sigma * config.texture_aspect, sigma);
    std::vector<float> wide = detail::gaussian_blur(noise, h, w,
                                                    3.0f * sigma * config.texture_aspect,
                                                    3.0f * sigma);
    std::vector<float> tex(n);
    for (std::size_t i = 0; i < n; ++i) tex[i] = low[i] - wide[i];
    detail::min_max_to_unit(tex);
    for (float& v : tex)
        v = config.background_low + (config.background_high - config.background_low) * v;

    GeneratedSample out;
    out.image = Tensor::zeros({1, h, w});

    if (!defect) {
        out.image.data = std::move(tex);
        return out;
    }

    Rng defect_rng(Rng::mix(seed, 0xDEF3u));
    out.contrast = defect_rng.next_float(config.contrast_min, config.contrast_max);
    const int scratches = defect_rng.next_int(1, config.max_scratches);
    std::vector<std::uint8_t> support(n, 0);
    for (int s = 0; s < scratches; ++s)
        detail::stamp_scratch(support, h, w, config.scratch_thickness_min,
                              config.scratch_thickness_max, config.scratch_length_min,
                              config.scratch_length_max, defect_rng);

    std::vector<float> field(n, 0.0f);
    for (std::size_t i = 0; i < n; ++i) field[i] = support[i] ? 1.0f : 0.0f;
    field = detail::gaussian_blur(field, h, w, config.edge_blur_sigma);
    float peak = 0.0f;
    for (float v : field)
        if (v > peak) peak = v;
    if (peak > 0.0f)
        for (float& v : field) v /= peak;

    for (std::size_t i = 0; i < n; ++i) {
        float v = tex[i] - out.contrast * field[i];
        if (v < 0.0f) v = 0.0f;
        out.image.data[i] = v;
    }

    BinaryMask mask = BinaryMask::empty(h, w);
    mask.cells = std::move(support);
    out.mask = std::move(mask);
    return out;
}

// Pixel radius by which a defect can differ from its background-only
// counterpart beyond the scratch support (the truncated edge-blur kernel).
inline int defect_halo_radius(const SynthConfig& config) {
    return static_cast<int>(std::ceil(2.5f * config.edge_blur_sigma));
}

namespace detail {

inline nlohmann::ordered_json config_to_json(const SynthConfig& c) {
    nlohmann::ordered_json j;
    j["height"] = c.height;
    j["width"] = c.width;
    j["train_background"] = c.train_background;
    j["train_defect"] = c.train_defect;
    j["test_background"] = c.test_background;
    j["test_defect"] = c.test_defect;
    j["master_seed"] = c.master_seed;
    j["background_low"] = c.background_low;
    j["background_high"] = c.background_high;
    j["texture_sigma"] = c.texture_sigma;
    j["texture_sigma_spread"] = c.texture_sigma_spread;
    j["texture_aspect"] = c.texture_aspect;
    j["edge_blur_sigma"] = c.edge_blur_sigma;
    j["max_scratches"] = c.max_scratches;
    j["scratch_thickness_min"] = c.scratch_thickness_min;
    j["scratch_thickness_max"] = c.scratch_thickness_max;
    j["scratch_length_min"] = c.scratch_length_min;
    j["scratch_length_max"] = c.scratch_length_max;
    j["contrast_min"] = c.contrast_min;
    j["contrast_max"] = c.contrast_max;
    j["train_contrast_min"] = c.train_contrast_min;
    j["train_contrast_max"] = c.train_contrast_max;
    j["test_contrast_min"] = c.test_contrast_min;
    j["test_contrast_max"] = c.test_contrast_max;
    return j;
}

inline SynthConfig config_from_json(const nlohmann::json& j) {
    SynthConfig c;
    c.height = j.at("height").get<int>();
    c.width = j.at("width").get<int>();
    c.train_background = j.at("train_background").get<int>();
    c.train_defect = j.at("train_defect").get<int>();
    c.test_background = j.at("test_background").get<int>();
    c.test_defect = j.at("test_defect").get<int>();
    c.master_seed = j.at("master_seed").get<std::uint64_t>();
    c.background_low = j.at("background_low").get<float>();
    c.background_high = j.at("background_high").get<float>();
    c.texture_sigma = j.at("texture_sigma").get<float>();
    c.texture_sigma_spread = j.at("texture_sigma_spread").get<float>();
    c.texture_aspect = j.at("texture_aspect").get<float>();
    c.edge_blur_sigma = j.at("edge_blur_sigma").get<float>();
    c.max_scratches = j.at("max_scratches").get<int>();
    c.scratch_thickness_min = j.at("scratch_thickness_min").get<float>();
    c.scratch_thickness_max = j.at("scratch_thickness_max").get<float>();
    c.scratch_length_min = j.at("scratch_length_min").get<float>();
    c.scratch_length_max = j.at("scratch_length_max").get<float>();
    c.contrast_min = j.at("contrast_min").get<float>();
    c.contrast_max = j.at("contrast_max").get<float>();
    c.train_contrast_min = j.at("train_contrast_min").get<float>();
    c.train_contrast_max = j.at("train_contrast_max").get<float>();
    c.test_contrast_min = j.at("test_contrast_min").get<float>();
    c.test_contrast_max = j.at("test_contrast_max").get<float>();
    return c;
}

inline nlohmann::ordered_json record_to_json(const SampleRecord& r) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["image"] = r.image_path;
    j["label"] = r.label;
    if (r.mask_path.empty())
        j["mask"] = nullptr;
    else
        j["mask"] = r.mask_path;
    j["seed"] = r.seed;
    j["contrast"] = r.contrast;
    return j;
}

inline SampleRecord record_from_json(const nlohmann::json& j) {
    SampleRecord r;
    r.id = j.at("id").get<std::string>();
    r.image_path = j.at("image").get<std::string>();
    r.label = j.at("label").get<int>();
    if (!j.at("mask").is_null()) r.mask_path = j.at("mask").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.contrast = j.at("contrast").get<float>();
    return r;
}

} // namespace detail

inline void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    j["format"] = "gradgate-dataset-v1";
    j["config"] = detail::config_to_json(manifest.config);
    nlohmann::ordered_json train = nlohmann::ordered_json::array();
    for (const auto& r : manifest.train) train.push_back(detail::record_to_json(r));
    nlohmann::ordered_json test = nlohmann::ordered_json::array();
    for (const auto& r : manifest.test) test.push_back(detail::record_to_json(r));
    j["splits"]["train"] = std::move(train);
    j["splits"]["test"] = std::move(test);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("manifest: cannot write " + path.string());
    out << j.dump(2) << "\n";
    if (!out) throw std::runtime_error("manifest: short write to " + path.string());
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("manifest: cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("manifest: malformed JSON in " + path.string() + ": " + e.what());
    }
    if (j.value("format", "") != "gradgate-dataset-v1")
        throw std::runtime_error("manifest: unknown format tag in " + path.string());
    DatasetManifest m;
    m.config = detail::config_from_json(j.at("config"));
    for (const auto& rj : j.at("splits").at("train")) m.train.push_back(detail::record_from_json(rj));
    for (const auto& rj : j.at("splits").at("test")) m.test.push_back(detail::record_from_json(rj));
    m.validate();
    return m;
}

// Writes images, masks, and the manifest under root:
//   root/{train,test}/images/<id>.pgm
//   root/{train,test}/masks/<id>.pgm   (defect samples only)
//   root/manifest.json
// The whole tree is a pure function of the config, byte for byte.
inline DatasetManifest generate_dataset(const SynthConfig& config,
                                        const std::filesystem::path& root) {
    config.validate();
    namespace fs = std::filesystem;

    DatasetManifest manifest;
    manifest.config = config;

    std::uint64_t counter = 0;
    auto make_split = [&](const std::string& split, int n_background, int n_defect,
                          float c_min, float c_max, bool sweep) {
        std::vector<SampleRecord> records;
        fs::create_directories(root / split / "images");
        fs::create_directories(root / split / "masks");
        char buf[32];

        for (int i = 0; i < n_background; ++i) {
            std::snprintf(buf, sizeof buf, "%s-bg-%04d", split.c_str(), i);
            SampleRecord rec;
            rec.id = buf;
            rec.label = 0;
            rec.seed = Rng::mix(config.master_seed, ++counter);
            rec.image_path = split + "/images/" + rec.id + ".pgm";
            SynthConfig active = config;
            GeneratedSample s = generate_sample(rec.seed, false, active);
            save_pgm(root / rec.image_path, s.image);
            records.push_back(std::move(rec));
        }
        for (int i = 0; i < n_defect; ++i) {
            std::snprintf(buf, sizeof buf, "%s-def-%04d", split.c_str(), i);
            SampleRecord rec;
            rec.id = buf;
            rec.label = 1;
            rec.seed = Rng::mix(config.master_seed, ++counter);
            rec.image_path = split + "/images/" + rec.id + ".pgm";
            rec.mask_path = split + "/masks/" + rec.id + ".pgm";
            SynthConfig active = config;
            if (sweep && n_defect > 1) {
                // Strong to faint across the split.
                const float t = static_cast<float>(i) / static_cast<float>(n_defect - 1);
                const float c = c_max - (c_max - c_min) * t;
                active.contrast_min = c;
                active.contrast_max = c;
            } else {
                active.contrast_min = c_min;
                active.contrast_max = c_max;
            }
            GeneratedSample s = generate_sample(rec.seed, true, active);
            rec.contrast = s.contrast;
            save_pgm(root / rec.image_path, s.image);
            save_pgm(root / rec.mask_path, *s.mask);
            records.push_back(std::move(rec));
        }
        return records;
    };

    manifest.train = make_split("train", config.train_background, config.train_defect,
                                config.train_contrast_min, config.train_contrast_max, false);
    manifest.test = make_split("test", config.test_background, config.test_defect,
                               config.test_contrast_min, config.test_contrast_max, true);
    manifest.validate();
    save_manifest(manifest, root / "manifest.json");
    return manifest;
}

} // namespace gradgate
