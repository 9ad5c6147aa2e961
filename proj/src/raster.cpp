#include "agripipe/raster.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace agripipe {

namespace {

constexpr char kMsrMagic[4] = {'M', 'S', 'R', 'A'};
constexpr char kMslMagic[4] = {'M', 'S', 'R', 'L'};
constexpr std::uint16_t kFormatVersion = 1;

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
public:
    explicit Reader(const std::string& path) : in_(path, std::ios::binary) {
        if (!in_) fail(Err::MalformedHeader, "cannot open " + path);
    }

    void bytes(void* dst, std::size_t n, const char* what) {
        in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            fail(Err::TruncatedPayload, std::string("unexpected end of file reading ") + what);
    }

    std::uint8_t u8(const char* what) {
        std::uint8_t v;
        bytes(&v, 1, what);
        return v;
    }

    std::uint16_t u16(const char* what) {
        std::array<std::uint8_t, 2> b;
        bytes(b.data(), 2, what);
        return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
    }

    std::uint32_t u32(const char* what) {
        std::array<std::uint8_t, 4> b;
        bytes(b.data(), 4, what);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }

private:
    std::ifstream in_;
};

void write_file(const std::string& path, const std::string& payload) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(Err::IoFailure, "cannot open " + path + " for writing");
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    out.flush();
    if (!out) fail(Err::IoFailure, "short write to " + path);
}

bool is_digits(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s)
        if (c < '0' || c > '9') return false;
    return true;
}

bool is_alnum_token(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s)
        if (!std::isalnum(static_cast<unsigned char>(c))) return false;
    return true;
}

int days_in_month(int year, int month) {
    static const int days[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (month == 2) {
        bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
        return leap ? 29 : 28;
    }
    return days[month - 1];
}

} // namespace

const char* channel_name(ChannelKind k) {
    switch (k) {
        case ChannelKind::Red: return "Red";
        case ChannelKind::Green: return "Green";
        case ChannelKind::Blue: return "Blue";
        case ChannelKind::NIR: return "NIR";
        case ChannelKind::RedEdge: return "RedEdge";
        case ChannelKind::NDVI: return "NDVI";
        case ChannelKind::GNDVI: return "GNDVI";
        case ChannelKind::EVI: return "EVI";
        case ChannelKind::SAVI: return "SAVI";
        case ChannelKind::MSAVI: return "MSAVI";
    }
    return "?";
}

std::optional<ChannelKind> channel_from_name(const std::string& name) {
    for (int i = 0; i < kChannelKindCount; ++i) {
        auto k = static_cast<ChannelKind>(i);
        if (name == channel_name(k)) return k;
    }
    return std::nullopt;
}

const char* product_name(CaptureProduct p) {
    switch (p) {
        case CaptureProduct::RGB: return "RGB";
        case CaptureProduct::NIR: return "NIR";
        case CaptureProduct::RedEdge: return "RedEdge";
    }
    return "?";
}

const char* err_name(Err code) {
    switch (code) {
        case Err::MalformedHeader: return "MalformedHeader";
        case Err::DuplicateBand: return "DuplicateBand";
        case Err::TruncatedPayload: return "TruncatedPayload";
        case Err::NonFiniteValueWithValidFlag: return "NonFiniteValueWithValidFlag";
        case Err::IoFailure: return "IoFailure";
        case Err::PatternMismatch: return "PatternMismatch";
        case Err::InvalidDate: return "InvalidDate";
        case Err::InvalidTime: return "InvalidTime";
        case Err::UnknownProduct: return "UnknownProduct";
        case Err::EmptyBand: return "EmptyBand";
        case Err::DegenerateBand: return "DegenerateBand";
        case Err::EmptyRegion: return "EmptyRegion";
        case Err::ZeroBrightness: return "ZeroBrightness";
        case Err::MissingBandFactor: return "MissingBandFactor";
        case Err::ImageTooSmall: return "ImageTooSmall";
        case Err::TooFewMatches: return "TooFewMatches";
        case Err::NoConsensus: return "NoConsensus";
        case Err::DegenerateSample: return "DegenerateSample";
        case Err::SingularTransform: return "SingularTransform";
        case Err::InsufficientOverlap: return "InsufficientOverlap";
        case Err::RegistrationRejected: return "RegistrationRejected";
        case Err::DisconnectedGraph: return "DisconnectedGraph";
        case Err::SingularComposition: return "SingularComposition";
        case Err::MissingBand: return "MissingBand";
        case Err::TileLargerThanImage: return "TileLargerThanImage";
        case Err::TooFewTiles: return "TooFewTiles";
        case Err::NonSquareTile: return "NonSquareTile";
        case Err::PatchOutOfBounds: return "PatchOutOfBounds";
        case Err::MissingClass: return "MissingClass";
        case Err::DivergedLoss: return "DivergedLoss";
        case Err::ChannelMismatch: return "ChannelMismatch";
        case Err::DimensionMismatch: return "DimensionMismatch";
        case Err::EmptyMatrix: return "EmptyMatrix";
        case Err::ConfigInvalid: return "ConfigInvalid";
        case Err::MissingInput: return "MissingInput";
        case Err::SizeTooSmall: return "SizeTooSmall";
    }
    return "UnknownError";
}

Band::Band(int w, int h, ChannelKind k, float fill, bool valid_fill)
    : width(w),
      height(h),
      kind(k),
      values(static_cast<std::size_t>(w) * h, valid_fill ? fill : 0.0f),
      valid(static_cast<std::size_t>(w) * h, valid_fill ? 1 : 0) {
    if (w <= 0 || h <= 0) fail(Err::MalformedHeader, "band dimensions must be positive");
}

void MultispectralImage::add_band(Band band) {
    if (!bands_.empty()) {
        if (band.width != width() || band.height != height())
            fail(Err::DimensionMismatch, "band size differs from image");
        if (has_band(band.kind))
            fail(Err::DuplicateBand, std::string("duplicate channel ") + channel_name(band.kind));
    }
    bands_.push_back(std::move(band));
}

bool MultispectralImage::has_band(ChannelKind kind) const {
    for (const auto& b : bands_)
        if (b.kind == kind) return true;
    return false;
}

const Band& MultispectralImage::band(ChannelKind kind) const {
    for (const auto& b : bands_)
        if (b.kind == kind) return b;
    fail(Err::MissingBand, std::string("image has no ") + channel_name(kind) + " channel");
}

Band& MultispectralImage::band(ChannelKind kind) {
    for (auto& b : bands_)
        if (b.kind == kind) return b;
    fail(Err::MissingBand, std::string("image has no ") + channel_name(kind) + " channel");
}

MultispectralImage read_raster(const std::string& path) {
    Reader in(path);

    char magic[4];
    in.bytes(magic, 4, "magic");
    if (std::memcmp(magic, kMsrMagic, 4) != 0) fail(Err::MalformedHeader, "bad magic in " + path);
    if (in.u16("version") != kFormatVersion) fail(Err::MalformedHeader, "unsupported version");

    const std::uint32_t width = in.u32("width");
    const std::uint32_t height = in.u32("height");
    if (width == 0 || height == 0) fail(Err::MalformedHeader, "zero raster dimension");
    const std::uint8_t band_count = in.u8("band count");
    if (band_count == 0) fail(Err::MalformedHeader, "file has no bands");

    std::vector<ChannelKind> kinds;
    bool seen[kChannelKindCount] = {};
    for (int i = 0; i < band_count; ++i) {
        std::uint8_t kind_byte = in.u8("band kind");
        if (kind_byte >= kChannelKindCount) fail(Err::MalformedHeader, "unknown channel tag");
        auto kind = static_cast<ChannelKind>(kind_byte);
        if (seen[kind_byte])
            fail(Err::DuplicateBand, std::string("duplicate channel ") + channel_name(kind));
        seen[kind_byte] = true;
        kinds.push_back(kind);
    }

    MultispectralImage image;
    const std::size_t n = static_cast<std::size_t>(width) * height;
    for (ChannelKind kind : kinds) {
        Band band(static_cast<int>(width), static_cast<int>(height), kind);
        in.bytes(band.values.data(), n * sizeof(float), "pixel values");
        in.bytes(band.valid.data(), n, "validity mask");
        for (std::size_t i = 0; i < n; ++i) {
            if (band.valid[i] > 1) fail(Err::MalformedHeader, "validity byte is not 0/1");
            if (band.valid[i]) {
                if (!std::isfinite(band.values[i]))
                    fail(Err::NonFiniteValueWithValidFlag,
                         std::string("non-finite value flagged valid in ") + channel_name(kind));
            } else {
                band.values[i] = 0.0f;
            }
        }
        image.add_band(std::move(band));
    }
    return image;
}

void write_raster(const MultispectralImage& image, const std::string& path) {
    if (image.bands().empty()) fail(Err::IoFailure, "refusing to write image with no bands");

    std::string out;
    out.append(kMsrMagic, 4);
    put_u16(out, kFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(image.width()));
    put_u32(out, static_cast<std::uint32_t>(image.height()));
    out.push_back(static_cast<char>(image.bands().size()));
    for (const auto& band : image.bands()) out.push_back(static_cast<char>(band.kind));

    const std::size_t n = static_cast<std::size_t>(image.width()) * image.height();
    for (const auto& band : image.bands()) {
        std::vector<float> payload(band.values);
        for (std::size_t i = 0; i < n; ++i)
            if (!band.valid[i]) payload[i] = 0.0f; // invalid pixels store 0.0
        out.append(reinterpret_cast<const char*>(payload.data()), n * sizeof(float));
        out.append(reinterpret_cast<const char*>(band.valid.data()), n);
    }
    write_file(path, out);
}

LabelMask read_label_mask(const std::string& path) {
    Reader in(path);

    char magic[4];
    in.bytes(magic, 4, "magic");
    if (std::memcmp(magic, kMslMagic, 4) != 0) fail(Err::MalformedHeader, "bad magic in " + path);
    if (in.u16("version") != kFormatVersion) fail(Err::MalformedHeader, "unsupported version");

    const std::uint32_t width = in.u32("width");
    const std::uint32_t height = in.u32("height");
    if (width == 0 || height == 0) fail(Err::MalformedHeader, "zero mask dimension");

    LabelMask mask(static_cast<int>(width), static_cast<int>(height));
    in.bytes(mask.classes.data(), mask.classes.size(), "class bytes");
    for (std::uint8_t c : mask.classes)
        if (c >= kClassCount) fail(Err::MalformedHeader, "class id out of range");
    return mask;
}

void write_label_mask(const LabelMask& mask, const std::string& path) {
    std::string out;
    out.append(kMslMagic, 4);
    put_u16(out, kFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(mask.width));
    put_u32(out, static_cast<std::uint32_t>(mask.height));
    out.append(reinterpret_cast<const char*>(mask.classes.data()), mask.classes.size());
    write_file(path, out);
}

CaptureMeta parse_capture_filename(const std::string& name) {
    std::string stem = name;
    auto slash = stem.find_last_of("/\\");
    if (slash != std::string::npos) stem = stem.substr(slash + 1);
    auto dot = stem.rfind('.');
    if (dot == std::string::npos || dot + 1 >= stem.size())
        fail(Err::PatternMismatch, "missing extension in '" + name + "'");
    if (!is_alnum_token(stem.substr(dot + 1))) fail(Err::PatternMismatch, "bad extension");
    stem = stem.substr(0, dot);

    std::vector<std::string> tokens;
    std::size_t start = 0;
    while (true) {
        auto us = stem.find('_', start);
        if (us == std::string::npos) {
            tokens.push_back(stem.substr(start));
            break;
        }
        tokens.push_back(stem.substr(start, us - start));
        start = us + 1;
    }
    if (tokens.size() != 4)
        fail(Err::PatternMismatch, "expected YYYYMMDD_AREA_HHMM_TYPE.ext, got '" + name + "'");
    const std::string& date = tokens[0];
    const std::string& area = tokens[1];
    const std::string& time = tokens[2];
    const std::string& type = tokens[3];
    if (!is_digits(date) || date.size() != 8) fail(Err::PatternMismatch, "date field is not 8 digits");
    if (!is_alnum_token(area)) fail(Err::PatternMismatch, "area field is not alphanumeric");
    if (!is_digits(time) || time.size() != 4) fail(Err::PatternMismatch, "time field is not 4 digits");
    if (type.empty()) fail(Err::PatternMismatch, "empty product field");

    CaptureMeta meta;
    meta.year = std::stoi(date.substr(0, 4));
    meta.month = std::stoi(date.substr(4, 2));
    meta.day = std::stoi(date.substr(6, 2));
    if (meta.month < 1 || meta.month > 12 || meta.day < 1 || meta.day > days_in_month(meta.year, meta.month))
        fail(Err::InvalidDate, "no such date: " + date);
    meta.area_id = area;
    meta.hour = std::stoi(time.substr(0, 2));
    meta.minute = std::stoi(time.substr(2, 2));
    if (meta.hour > 23 || meta.minute > 59) fail(Err::InvalidTime, "no such time: " + time);

    if (type == "RGB")
        meta.product = CaptureProduct::RGB;
    else if (type == "NIR")
        meta.product = CaptureProduct::NIR;
    else if (type == "RedEdge")
        meta.product = CaptureProduct::RedEdge;
    else
        fail(Err::UnknownProduct, "unknown product '" + type + "'");
    return meta;
}

std::string format_capture_filename(const CaptureMeta& meta, const std::string& extension) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%04d%02d%02d_%s_%02d%02d_%s.%s", meta.year, meta.month, meta.day,
                  meta.area_id.c_str(), meta.hour, meta.minute, product_name(meta.product),
                  extension.c_str());
    return std::string(buf);
}

} // namespace agripipe
