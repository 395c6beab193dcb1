#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gradgate/explain.hpp"
#include "gradgate/gate.hpp"
#include "gradgate/tensor.hpp"

namespace gradgate {

namespace detail {

// Reads one PGM header token, skipping whitespace and '#' comment lines.
inline std::string pgm_token(std::istream& in, const std::string& path) {
    std::string tok;
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            // skip
        } else {
            break;
        }
        c = in.get();
    }
    while (c != EOF && c != ' ' && c != '\t' && c != '\r' && c != '\n' && c != '#') {
        tok.push_back(static_cast<char>(c));
        c = in.get();
    }
    if (c == '#') in.unget();
    if (tok.empty())
        throw std::runtime_error("pgm: truncated header in " + path);
    return tok;
}

inline int pgm_int(std::istream& in, const std::string& path, const char* what) {
    const std::string tok = pgm_token(in, path);
    try {
        std::size_t used = 0;
        const int v = std::stoi(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("pgm: malformed " + std::string(what) + " '" + tok + "' in " +
                                 path);
    }
}

} // namespace detail

// Binary 8-bit grayscale PGM (magic P5, maxval 255). Gray levels map
// linearly onto [0, 1]; save quantizes back with round-to-nearest, so
// load(save(load(x))) is a fixed point.
inline Tensor load_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("pgm: cannot open " + path.string());
    const std::string p = path.string();
    const std::string magic = detail::pgm_token(in, p);
    if (magic != "P5")
        throw std::runtime_error("pgm: wrong magic '" + magic + "' in " + p + ", expected P5");
    const int w = detail::pgm_int(in, p, "width");
    const int h = detail::pgm_int(in, p, "height");
    const int maxval = detail::pgm_int(in, p, "maxval");
    if (w <= 0 || h <= 0)
        throw std::runtime_error("pgm: invalid extents " + std::to_string(w) + "x" +
                                 std::to_string(h) + " in " + p);
    if (maxval != 255)
        throw std::runtime_error("pgm: unsupported maxval " + std::to_string(maxval) + " in " + p);
    // The single whitespace byte after maxval was already consumed by the
    // token reader; the payload starts here.
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(w) * h);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
        throw std::runtime_error("pgm: payload shorter than declared " + std::to_string(w) + "x" +
                                 std::to_string(h) + " in " + p);
    Tensor img = Tensor::zeros({1, h, w});
    for (std::size_t i = 0; i < bytes.size(); ++i)
        img.data[i] = static_cast<float>(bytes[i]) / 255.0f;
    return img;
}

namespace detail {

inline void write_pgm_bytes(const std::filesystem::path& path, int h, int w,
                            const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("pgm: cannot write " + path.string());
    out << "P5\n" << w << " " << h << "\n255\n";
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("pgm: short write to " + path.string());
}

inline std::uint8_t quantize_unit(float v) {
    if (v < 0.0f) v = 0.0f;
    if (v > 1.0f) v = 1.0f;
    return static_cast<std::uint8_t>(v * 255.0f + 0.5f);
}

} // namespace detail

inline void save_pgm(const std::filesystem::path& path, const Tensor& image) {
    if (image.ndim() != 3 || image.shape[0] != 1)
        throw std::invalid_argument("pgm: expected a 1xHxW tensor, got " + image.shape_str());
    std::vector<std::uint8_t> bytes(image.data.size());
    for (std::size_t i = 0; i < bytes.size(); ++i)
        bytes[i] = detail::quantize_unit(image.data[i]);
    detail::write_pgm_bytes(path, image.shape[1], image.shape[2], bytes);
}

inline void save_pgm(const std::filesystem::path& path, const Heatmap& map) {
    std::vector<std::uint8_t> bytes(map.values.size());
    for (std::size_t i = 0; i < bytes.size(); ++i)
        bytes[i] = detail::quantize_unit(map.values[i]);
    detail::write_pgm_bytes(path, map.height, map.width, bytes);
}

inline void save_pgm(const std::filesystem::path& path, const BinaryMask& mask) {
    std::vector<std::uint8_t> bytes(mask.cells.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.cells[i] ? 255 : 0;
    detail::write_pgm_bytes(path, mask.height, mask.width, bytes);
}

} // namespace gradgate
