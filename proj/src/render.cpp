#include "agripipe/render.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

namespace agripipe {

namespace {

void put_u32_be(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>((v >> 24) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>(v & 0xff));
}

void put_chunk(std::string& out, const char type[4], const std::string& payload) {
    put_u32_be(out, static_cast<std::uint32_t>(payload.size()));
    const std::size_t crc_start = out.size();
    out.append(type, 4);
    out.append(payload);
    const auto crc =
        crc32(0, reinterpret_cast<const Bytef*>(out.data() + crc_start), static_cast<uInt>(out.size() - crc_start));
    put_u32_be(out, static_cast<std::uint32_t>(crc));
}

} // namespace

Rgb parse_hex_color(const std::string& hex) {
    if (hex.size() != 6) fail(Err::ConfigInvalid, "color must be 6 hex digits: " + hex);
    auto nibble = [&](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        fail(Err::ConfigInvalid, "bad hex digit in color: " + hex);
    };
    auto byte = [&](int i) {
        return static_cast<std::uint8_t>(nibble(hex[static_cast<std::size_t>(i)]) * 16 +
                                         nibble(hex[static_cast<std::size_t>(i) + 1]));
    };
    return Rgb{byte(0), byte(2), byte(4)};
}

void write_png_rgb(const std::uint8_t* rgb, int width, int height, const std::string& path) {
    if (width <= 0 || height <= 0) fail(Err::IoFailure, "empty image");

    // filter byte 0 in front of every scanline
    const std::size_t stride = static_cast<std::size_t>(width) * 3;
    std::vector<std::uint8_t> raw((stride + 1) * static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) {
        raw[static_cast<std::size_t>(y) * (stride + 1)] = 0;
        std::memcpy(raw.data() + static_cast<std::size_t>(y) * (stride + 1) + 1,
                    rgb + static_cast<std::size_t>(y) * stride, stride);
    }

    uLongf compressed_size = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> compressed(compressed_size);
    if (compress2(compressed.data(), &compressed_size, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        fail(Err::IoFailure, "zlib compression failed");

    std::string ihdr;
    put_u32_be(ihdr, static_cast<std::uint32_t>(width));
    put_u32_be(ihdr, static_cast<std::uint32_t>(height));
    ihdr.push_back(8);           // bit depth
    ihdr.push_back(2);           // truecolor
    ihdr.push_back(0);           // deflate
    ihdr.push_back(0);           // adaptive filtering
    ihdr.push_back(0);           // no interlace

    std::string out("\x89PNG\r\n\x1a\n", 8);
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT",
              std::string(reinterpret_cast<const char*>(compressed.data()), compressed_size));
    put_chunk(out, "IEND", "");

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) fail(Err::IoFailure, "cannot open " + path + " for writing");
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    file.flush();
    if (!file) fail(Err::IoFailure, "short write to " + path);
}

void render_map(const LabelMask& mask, const std::string& path, const RenderPalette& palette) {
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(mask.width) * mask.height * 3);
    for (std::size_t i = 0; i < mask.classes.size(); ++i) {
        const Rgb color = palette.color(mask.classes[i]);
        rgb[i * 3] = color.r;
        rgb[i * 3 + 1] = color.g;
        rgb[i * 3 + 2] = color.b;
    }
    write_png_rgb(rgb.data(), mask.width, mask.height, path);
}

} // namespace agripipe
