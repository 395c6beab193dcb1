#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gradgate/model.hpp"
#include "gradgate/tensor.hpp"

namespace gradgate {

namespace detail {

inline std::uint64_t fnv1a64(const std::uint8_t* bytes, std::size_t n) {
    std::uint64_t h = 1469598103934665603ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= bytes[i];
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// float32 values as little-endian bytes, row-major.
inline std::vector<std::uint8_t> floats_to_le(const std::vector<float>& v) {
    std::vector<std::uint8_t> bytes(v.size() * 4);
    for (std::size_t i = 0; i < v.size(); ++i) {
        const std::uint32_t u = std::bit_cast<std::uint32_t>(v[i]);
        bytes[4 * i + 0] = static_cast<std::uint8_t>(u & 0xff);
        bytes[4 * i + 1] = static_cast<std::uint8_t>((u >> 8) & 0xff);
        bytes[4 * i + 2] = static_cast<std::uint8_t>((u >> 16) & 0xff);
        bytes[4 * i + 3] = static_cast<std::uint8_t>((u >> 24) & 0xff);
    }
    return bytes;
}

inline std::vector<float> le_to_floats(const std::vector<std::uint8_t>& bytes) {
    std::vector<float> v(bytes.size() / 4);
    for (std::size_t i = 0; i < v.size(); ++i) {
        const std::uint32_t u = static_cast<std::uint32_t>(bytes[4 * i + 0]) |
                                (static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8) |
                                (static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16) |
                                (static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24);
        v[i] = std::bit_cast<float>(u);
    }
    return v;
}

inline void write_tensor_file(const std::filesystem::path& path,
                              const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("weights: cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("weights: short write to " + path.string());
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path,
                                                 const std::string& layer_name) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("weights: missing tensor file " + path.string() + " for " +
                                 layer_name);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return bytes;
}

} // namespace detail

// Weight container directory:
//   dir/manifest.json          layer kinds, extents, per-tensor shape + fnv1a64 checksum
//   dir/tensors/l<k>_weight.bin / l<k>_bias.bin   raw float32 little-endian, row-major
// Round-trip is bit-exact, and save(load(save(x))) produces identical bytes.
inline void save_weights(const ModelSpec& model, const std::filesystem::path& dir) {
    model.validate();
    namespace fs = std::filesystem;
    fs::create_directories(dir / "tensors");

    nlohmann::ordered_json j;
    j["format"] = "gradgate-weights-v1";
    j["input"] = {{"channels", model.input_channels},
                  {"height", model.input_h},
                  {"width", model.input_w}};
    nlohmann::ordered_json layers = nlohmann::ordered_json::array();
    for (const LayerSpec& l : model.layers) {
        nlohmann::ordered_json lj;
        lj["id"] = l.id;
        lj["kind"] = layer_kind_name(l.kind);
        switch (l.kind) {
            case LayerKind::Conv:
                lj["out_channels"] = l.out_channels;
                lj["in_channels"] = l.in_channels;
                lj["kernel_h"] = l.kernel_h;
                lj["kernel_w"] = l.kernel_w;
                lj["stride"] = l.stride;
                lj["pad"] = l.pad;
                break;
            case LayerKind::MaxPool:
                lj["window"] = l.window;
                lj["stride"] = l.stride;
                break;
            case LayerKind::Dense:
                lj["units"] = l.units;
                lj["inputs"] = l.inputs;
                break;
            default:
                break;
        }
        if (l.has_params()) {
            const std::string stem = "l" + std::to_string(l.id);
            const auto wbytes = detail::floats_to_le(l.weight.data);
            detail::write_tensor_file(dir / "tensors" / (stem + "_weight.bin"), wbytes);
            lj["weight"] = {{"shape", l.weight.shape},
                            {"file", "tensors/" + stem + "_weight.bin"},
                            {"fnv1a64", detail::hex64(detail::fnv1a64(wbytes.data(), wbytes.size()))}};
            const auto bbytes = detail::floats_to_le(l.bias);
            detail::write_tensor_file(dir / "tensors" / (stem + "_bias.bin"), bbytes);
            lj["bias"] = {{"shape", std::vector<int>{static_cast<int>(l.bias.size())}},
                          {"file", "tensors/" + stem + "_bias.bin"},
                          {"fnv1a64", detail::hex64(detail::fnv1a64(bbytes.data(), bbytes.size()))}};
        }
        layers.push_back(std::move(lj));
    }
    j["layers"] = std::move(layers);

    std::ofstream out(dir / "manifest.json", std::ios::binary);
    if (!out) throw std::runtime_error("weights: cannot write manifest in " + dir.string());
    out << j.dump(2) << "\n";
    if (!out) throw std::runtime_error("weights: short write to manifest in " + dir.string());
}

namespace detail {

inline std::vector<float> load_tensor(const std::filesystem::path& dir, const nlohmann::json& tj,
                                      const std::string& layer_name, long long expected_count) {
    const std::string file = tj.at("file").get<std::string>();
    const std::vector<std::uint8_t> bytes = read_file_bytes(dir / file, layer_name);
    const std::string want = tj.at("fnv1a64").get<std::string>();
    const std::string got = hex64(fnv1a64(bytes.data(), bytes.size()));
    if (got != want)
        throw std::runtime_error("weights: checksum mismatch for " + layer_name + " (" + file +
                                 "): manifest " + want + ", file " + got);
    if (bytes.size() % 4 != 0 ||
        static_cast<long long>(bytes.size() / 4) != expected_count)
        throw std::runtime_error("weights: " + layer_name + " (" + file + ") holds " +
                                 std::to_string(bytes.size() / 4) + " values, manifest shape needs " +
                                 std::to_string(expected_count));
    return le_to_floats(bytes);
}

} // namespace detail

inline ModelSpec load_weights(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json", std::ios::binary);
    if (!in)
        throw std::runtime_error("weights: missing manifest.json in " + dir.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("weights: malformed manifest in " + dir.string() + ": " + e.what());
    }
    if (j.value("format", "") != "gradgate-weights-v1")
        throw std::runtime_error("weights: unknown format tag in " + dir.string());

    ModelSpec m;
    m.input_channels = j.at("input").at("channels").get<int>();
    m.input_h = j.at("input").at("height").get<int>();
    m.input_w = j.at("input").at("width").get<int>();

    for (const auto& lj : j.at("layers")) {
        LayerSpec l;
        l.id = lj.at("id").get<int>();
        const std::string layer_name = "layer " + std::to_string(l.id);
        const std::string kind = lj.at("kind").get<std::string>();
        if (kind == "conv") {
            l.kind = LayerKind::Conv;
            l.out_channels = lj.at("out_channels").get<int>();
            l.in_channels = lj.at("in_channels").get<int>();
            l.kernel_h = lj.at("kernel_h").get<int>();
            l.kernel_w = lj.at("kernel_w").get<int>();
            l.stride = lj.at("stride").get<int>();
            l.pad = lj.at("pad").get<int>();
        } else if (kind == "relu") {
            l.kind = LayerKind::ReLU;
        } else if (kind == "maxpool") {
            l.kind = LayerKind::MaxPool;
            l.window = lj.at("window").get<int>();
            l.stride = lj.at("stride").get<int>();
        } else if (kind == "flatten") {
            l.kind = LayerKind::Flatten;
        } else if (kind == "dense") {
            l.kind = LayerKind::Dense;
            l.units = lj.at("units").get<int>();
            l.inputs = lj.at("inputs").get<int>();
        } else {
            throw std::runtime_error("weights: unknown layer kind '" + kind + "' for " + layer_name);
        }
        if (l.has_params()) {
            const auto& wj = lj.at("weight");
            const std::vector<int> wshape = wj.at("shape").get<std::vector<int>>();
            long long count = 1;
            for (int e : wshape) count *= e;
            l.weight = Tensor(wshape, detail::load_tensor(dir, wj, layer_name + " weight", count));

            const auto& bj = lj.at("bias");
            const std::vector<int> bshape = bj.at("shape").get<std::vector<int>>();
            if (bshape.size() != 1)
                throw std::runtime_error("weights: bias of " + layer_name + " must be 1-D");
            l.bias = detail::load_tensor(dir, bj, layer_name + " bias", bshape[0]);
        }
        m.layers.push_back(std::move(l));
    }
    try {
        m.validate();
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(std::string("weights: manifest shape check failed: ") + e.what());
    }
    return m;
}

} // namespace gradgate
