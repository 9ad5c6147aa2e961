#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "agripipe/raster.hpp"
#include "agripipe/rng.hpp"

namespace testutil {

// Scratch directory removed when the test ends.
struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("agripipe_" + tag + "_" + std::to_string(counter()++));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }

private:
    static int& counter() {
        static int n = 0;
        return n;
    }
};

inline agripipe::Band make_band(int w, int h, agripipe::ChannelKind kind,
                                const std::vector<float>& values) {
    agripipe::Band band(w, h, kind);
    band.values = values;
    return band;
}

inline agripipe::Band random_band(int w, int h, agripipe::ChannelKind kind, agripipe::Rng& rng,
                                  float lo = 0.0f, float hi = 1.0f) {
    agripipe::Band band(w, h, kind);
    for (auto& v : band.values) v = static_cast<float>(rng.next_range(lo, hi));
    return band;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Decodes the fixed-layout PNGs the renderer emits (8-bit RGB, filter 0).
struct DecodedPng {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;
};

inline DecodedPng decode_png_rgb(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    if (bytes.size() < 8 || std::memcmp(bytes.data(), "\x89PNG\r\n\x1a\n", 8) != 0)
        throw std::runtime_error("not a png");

    DecodedPng png;
    std::vector<std::uint8_t> idat;
    std::size_t pos = 8;
    auto be32 = [&](std::size_t at) {
        return (static_cast<std::uint32_t>(bytes[at]) << 24) |
               (static_cast<std::uint32_t>(bytes[at + 1]) << 16) |
               (static_cast<std::uint32_t>(bytes[at + 2]) << 8) | bytes[at + 3];
    };
    while (pos + 8 <= bytes.size()) {
        const std::uint32_t length = be32(pos);
        const std::string type(reinterpret_cast<const char*>(bytes.data() + pos + 4), 4);
        const std::size_t payload = pos + 8;
        if (type == "IHDR") {
            png.width = static_cast<int>(be32(payload));
            png.height = static_cast<int>(be32(payload + 4));
            if (bytes[payload + 8] != 8 || bytes[payload + 9] != 2)
                throw std::runtime_error("unexpected png format");
        } else if (type == "IDAT") {
            idat.insert(idat.end(), bytes.begin() + static_cast<std::ptrdiff_t>(payload),
                        bytes.begin() + static_cast<std::ptrdiff_t>(payload + length));
        } else if (type == "IEND") {
            break;
        }
        pos = payload + length + 4;
    }

    const std::size_t stride = static_cast<std::size_t>(png.width) * 3 + 1;
    std::vector<std::uint8_t> raw(stride * static_cast<std::size_t>(png.height));
    uLongf raw_size = static_cast<uLongf>(raw.size());
    if (uncompress(raw.data(), &raw_size, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
        raw_size != raw.size())
        throw std::runtime_error("png inflate failed");

    png.rgb.resize(static_cast<std::size_t>(png.width) * png.height * 3);
    for (int y = 0; y < png.height; ++y) {
        if (raw[static_cast<std::size_t>(y) * stride] != 0)
            throw std::runtime_error("unexpected png filter");
        std::memcpy(png.rgb.data() + static_cast<std::size_t>(y) * png.width * 3,
                    raw.data() + static_cast<std::size_t>(y) * stride + 1,
                    static_cast<std::size_t>(png.width) * 3);
    }
    return png;
}

} // namespace testutil
