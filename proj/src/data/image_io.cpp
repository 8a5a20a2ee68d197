#include "harivo/data/image_io.hpp"

#include "harivo/errors.hpp"
#include "harivo/util/files.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <memory>
#include <string>
#include <unordered_map>

namespace harivo::image {

std::uint8_t to_byte(float v) {
    const float scaled = std::round((std::clamp(v, -1.0f, 1.0f) + 1.0f) * 127.5f);
    return static_cast<std::uint8_t>(std::clamp(scaled, 0.0f, 255.0f));
}

float from_byte(std::uint8_t b) { return static_cast<float>(b) / 127.5f - 1.0f; }

namespace {

// (C, H, W) float -> interleaved bytes
std::vector<std::uint8_t> interleave(const torch::Tensor& frame) {
    if (frame.dim() != 3 || (frame.size(0) != 1 && frame.size(0) != 3)) {
        throw ShapeError("image: expected a (C, H, W) frame with C = 1 or 3");
    }
    auto hwc = frame.detach().to(torch::kFloat).permute({1, 2, 0}).contiguous();
    const float* p = hwc.data_ptr<float>();
    std::vector<std::uint8_t> out(static_cast<std::size_t>(hwc.numel()));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = to_byte(p[i]);
    return out;
}

void png_write_to_vector(png_structp png, png_bytep data, png_size_t length) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + length);
}

void png_flush_noop(png_structp) {}

[[noreturn]] void png_error_throw(png_structp, png_const_charp msg) { throw IngestionError(std::string("png: ") + msg); }

void png_warning_ignore(png_structp, png_const_charp) {}

}  // namespace

std::vector<std::uint8_t> encode_png(const std::uint8_t* pixels, std::int64_t height, std::int64_t width,
                                     int channels) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_throw, png_warning_ignore);
    if (!png) throw Error("png: cannot allocate writer");
    png_infop info = png_create_info_struct(png);
    std::vector<std::uint8_t> out;
    try {
        png_set_write_fn(png, &out, png_write_to_vector, png_flush_noop);
        png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                     channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                     PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        for (std::int64_t y = 0; y < height; ++y) {
            png_write_row(png, const_cast<png_bytep>(pixels + y * width * channels));
        }
        png_write_end(png, nullptr);
    } catch (...) {
        png_destroy_write_struct(&png, &info);
        throw;
    }
    png_destroy_write_struct(&png, &info);
    return out;
}

void write_png(const std::filesystem::path& path, const torch::Tensor& frame) {
    auto bytes = interleave(frame);
    files::write_atomic(path, encode_png(bytes.data(), frame.size(1), frame.size(2), static_cast<int>(frame.size(0))));
}

torch::Tensor read_png(const std::filesystem::path& path) {
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> fp(std::fopen(path.c_str(), "rb"), std::fclose);
    if (!fp) throw IngestionError("cannot open image " + path.string());
    std::array<unsigned char, 8> sig{};
    if (std::fread(sig.data(), 1, 8, fp.get()) != 8 || png_sig_cmp(sig.data(), 0, 8) != 0) {
        throw IngestionError("not a PNG file: " + path.string());
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_throw, png_warning_ignore);
    png_infop info = png_create_info_struct(png);
    torch::Tensor out;
    try {
        png_init_io(png, fp.get());
        png_set_sig_bytes(png, 8);
        png_read_info(png, info);
        const auto width = png_get_image_width(png, info);
        const auto height = png_get_image_height(png, info);
        const auto color = png_get_color_type(png, info);
        if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
        if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
        if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
            if (png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
            png_set_gray_to_rgb(png);
        }
        if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
        if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png), png_set_strip_alpha(png);
        png_read_update_info(png, info);
        if (png_get_channels(png, info) != 3) throw IngestionError("unsupported PNG layout: " + path.string());

        std::vector<std::uint8_t> buf(static_cast<std::size_t>(width) * height * 3);
        std::vector<png_bytep> rows(height);
        for (png_uint_32 y = 0; y < height; ++y) rows[y] = buf.data() + static_cast<std::size_t>(y) * width * 3;
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);

        out = torch::empty({static_cast<std::int64_t>(height), static_cast<std::int64_t>(width), 3});
        float* p = out.data_ptr<float>();
        for (std::size_t i = 0; i < buf.size(); ++i) p[i] = from_byte(buf[i]);
    } catch (const IngestionError& e) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IngestionError(path.string() + ": " + e.what());
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return out.permute({2, 0, 1}).contiguous();
}

namespace {

// 6x6x6 color cube (216 entries) followed by 40 grays.
struct Palette {
    std::array<std::array<std::uint8_t, 3>, 256> colors{};
    Palette() {
        int i = 0;
        for (int r = 0; r < 6; ++r)
            for (int g = 0; g < 6; ++g)
                for (int b = 0; b < 6; ++b)
                    colors[i++] = {static_cast<std::uint8_t>(r * 51), static_cast<std::uint8_t>(g * 51),
                                   static_cast<std::uint8_t>(b * 51)};
        for (int k = 0; i < 256; ++k) {
            auto v = static_cast<std::uint8_t>(std::lround((k + 1) * 255.0 / 41.0));
            colors[i++] = {v, v, v};
        }
    }

    std::uint8_t nearest(std::uint8_t r, std::uint8_t g, std::uint8_t b) const {
        int best = 0, best_d = 1 << 30;
        for (int i = 0; i < 256; ++i) {
            const int dr = colors[i][0] - r, dg = colors[i][1] - g, db = colors[i][2] - b;
            const int d = dr * dr + dg * dg + db * db;
            if (d < best_d) best_d = d, best = i;
        }
        return static_cast<std::uint8_t>(best);
    }
};

class BitWriter {
public:
    void put(std::uint32_t code, int bits) {
        acc_ |= code << n_;
        n_ += bits;
        while (n_ >= 8) {
            bytes.push_back(static_cast<std::uint8_t>(acc_ & 0xFF));
            acc_ >>= 8;
            n_ -= 8;
        }
    }
    void flush() {
        if (n_ > 0) bytes.push_back(static_cast<std::uint8_t>(acc_ & 0xFF));
        acc_ = 0;
        n_ = 0;
    }
    std::vector<std::uint8_t> bytes;

private:
    std::uint32_t acc_ = 0;
    int n_ = 0;
};

// Variable-width LZW with 8-bit minimum code size.
std::vector<std::uint8_t> lzw_encode(const std::vector<std::uint8_t>& indices) {
    constexpr std::uint32_t clear = 256, stop = 257;
    BitWriter out;
    std::unordered_map<std::uint32_t, std::uint32_t> table;
    std::uint32_t next = 258;
    int width = 9;
    out.put(clear, width);
    if (indices.empty()) {
        out.put(stop, width);
        out.flush();
        return out.bytes;
    }
    std::uint32_t prefix = indices[0];
    for (std::size_t i = 1; i < indices.size(); ++i) {
        const std::uint32_t key = (prefix << 8) | indices[i];
        auto it = table.find(key);
        if (it != table.end()) {
            prefix = it->second;
            continue;
        }
        out.put(prefix, width);
        if (next < 4096) {
            table.emplace(key, next);
            if (next == (1u << width) && width < 12) ++width;
            ++next;
        } else {
            out.put(clear, width);
            table.clear();
            next = 258;
            width = 9;
        }
        prefix = indices[i];
    }
    out.put(prefix, width);
    out.put(stop, width);
    out.flush();
    return out.bytes;
}

}  // namespace

std::vector<std::uint8_t> encode_gif(const torch::Tensor& video, int delay_centiseconds) {
    if (video.dim() != 4 || (video.size(1) != 1 && video.size(1) != 3)) {
        throw ShapeError("gif: expected (F, C, H, W) with C = 1 or 3");
    }
    static const Palette palette;
    const auto frames = video.size(0), h = video.size(2), w = video.size(3);
    std::vector<std::uint8_t> out{'G', 'I', 'F', '8', '9', 'a'};
    auto u16 = [&](std::int64_t v) {
        out.push_back(static_cast<std::uint8_t>(v & 0xFF));
        out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
    };
    u16(w);
    u16(h);
    out.insert(out.end(), {0xF7, 0x00, 0x00});  // global table, 256 entries
    for (const auto& c : palette.colors) out.insert(out.end(), c.begin(), c.end());
    // NETSCAPE looping extension
    out.insert(out.end(), {0x21, 0xFF, 0x0B, 'N', 'E', 'T', 'S', 'C', 'A', 'P', 'E', '2', '.', '0', 0x03, 0x01,
                           0x00, 0x00, 0x00});

    for (std::int64_t f = 0; f < frames; ++f) {
        auto bytes = interleave(video[f]);
        const auto c = video.size(1);
        std::vector<std::uint8_t> indices(static_cast<std::size_t>(h * w));
        for (std::int64_t i = 0; i < h * w; ++i) {
            const auto* px = &bytes[static_cast<std::size_t>(i * c)];
            indices[static_cast<std::size_t>(i)] = c == 3 ? palette.nearest(px[0], px[1], px[2])
                                                          : palette.nearest(px[0], px[0], px[0]);
        }
        out.insert(out.end(), {0x21, 0xF9, 0x04, 0x00});
        u16(delay_centiseconds);
        out.insert(out.end(), {0x00, 0x00});
        out.push_back(0x2C);
        u16(0);
        u16(0);
        u16(w);
        u16(h);
        out.push_back(0x00);
        out.push_back(0x08);
        auto data = lzw_encode(indices);
        for (std::size_t pos = 0; pos < data.size(); pos += 255) {
            const auto n = std::min<std::size_t>(255, data.size() - pos);
            out.push_back(static_cast<std::uint8_t>(n));
            out.insert(out.end(), data.begin() + static_cast<std::ptrdiff_t>(pos),
                       data.begin() + static_cast<std::ptrdiff_t>(pos + n));
        }
        out.push_back(0x00);
    }
    out.push_back(0x3B);
    return out;
}

void write_gif(const std::filesystem::path& path, const torch::Tensor& video, int delay_centiseconds) {
    files::write_atomic(path, encode_gif(video, delay_centiseconds));
}

}  // namespace harivo::image
