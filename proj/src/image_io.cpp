#include "image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

#include "errors.hpp"

namespace llgm {

namespace {

bool ends_with_lower(const std::string& s, const std::string& suffix) {
    if (s.size() < suffix.size()) return false;
    for (std::size_t i = 0; i < suffix.size(); ++i) {
        const char a = static_cast<char>(std::tolower(static_cast<unsigned char>(s[s.size() - suffix.size() + i])));
        if (a != suffix[i]) return false;
    }
    return true;
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

Image load_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open for reading: " + path);

    png_byte header[8];
    if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
        throw FormatError("not a PNG file: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    std::vector<png_bytep> row_ptrs;
    std::vector<png_byte> raw;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("corrupt PNG file: " + path);
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const png_uint_32 width = png_get_image_width(png, info);
    const png_uint_32 height = png_get_image_height(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);

    if (bit_depth == 16) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("unsupported 16-bit PNG: " + path);
    }
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("unsupported PNG channel count " + std::to_string(channels) + ": " + path);
    }

    const std::size_t stride = png_get_rowbytes(png, info);
    raw.resize(stride * height);
    row_ptrs.resize(height);
    for (png_uint_32 y = 0; y < height; ++y) row_ptrs[y] = raw.data() + y * stride;
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Image img(static_cast<int>(height), static_cast<int>(width), channels);
    const std::size_t n = img.value_count();
    for (std::size_t y = 0; y < height; ++y) {
        const png_byte* src = raw.data() + y * stride;
        float* dst = img.data.data() + y * width * channels;
        for (std::size_t i = 0; i < width * static_cast<std::size_t>(channels); ++i)
            dst[i] = static_cast<float>(src[i]) / 255.0f;
    }
    (void)n;
    return img;
}

void save_png(const Image& img, const std::string& path) {
    if (img.channels != 1 && img.channels != 3)
        throw InvalidArgument("save_image: expected 1 or 3 channels, got " + std::to_string(img.channels));
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot open for writing: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("PNG write failed: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
    std::vector<png_byte> row(stride);
    for (int y = 0; y < img.height; ++y) {
        const float* src = img.data.data() + static_cast<std::size_t>(y) * stride;
        for (std::size_t i = 0; i < stride; ++i) {
            const float v = std::clamp(src[i], 0.0f, 1.0f);
            row[i] = static_cast<png_byte>(std::lround(v * 255.0f));
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

// Skips PPM whitespace and '#' comment lines.
void skip_ppm_space(std::istream& in) {
    for (;;) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            return;
        }
    }
}

Image load_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::string magic;
    in >> magic;
    if (magic != "P6") throw FormatError("unsupported PPM magic '" + magic + "': " + path);
    skip_ppm_space(in);
    int width = 0, height = 0, maxval = 0;
    in >> width;
    skip_ppm_space(in);
    in >> height;
    skip_ppm_space(in);
    in >> maxval;
    if (!in || width < 1 || height < 1) throw FormatError("bad PPM header: " + path);
    if (maxval != 255) throw FormatError("unsupported PPM maxval " + std::to_string(maxval) + ": " + path);
    in.get(); // single whitespace byte after maxval

    Image img(height, width, 3);
    std::vector<unsigned char> raw(img.value_count());
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size())
        throw FormatError("truncated PPM pixel data: " + path);
    for (std::size_t i = 0; i < raw.size(); ++i) img.data[i] = static_cast<float>(raw[i]) / 255.0f;
    return img;
}

void save_ppm(const Image& img, const std::string& path) {
    if (img.channels != 3)
        throw InvalidArgument("save_image: PPM requires 3 channels, got " + std::to_string(img.channels));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> raw(img.value_count());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const float v = std::clamp(img.data[i], 0.0f, 1.0f);
        raw[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw IoError("write failed: " + path);
}

} // namespace

Image load_image(const std::string& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw IoError("cannot open for reading: " + path);
    char head[2] = {0, 0};
    probe.read(head, 2);
    probe.close();
    if (head[0] == 'P' && head[1] == '6') return load_ppm(path);
    return load_png(path);
}

void save_image(const Image& img, const std::string& path) {
    if (ends_with_lower(path, ".ppm"))
        save_ppm(img, path);
    else
        save_png(img, path);
}

} // namespace llgm
