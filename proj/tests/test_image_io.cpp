#include <doctest.h>

#include <png.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "errors.hpp"
#include "image_io.hpp"
#include "test_util.hpp"

using namespace llgm;
using test::random_image;
using test::temp_path;

namespace {

struct ScratchFile {
    std::string path;
    explicit ScratchFile(const std::string& name) : path(temp_path(name)) {}
    ~ScratchFile() { std::filesystem::remove(path); }
};

} // namespace

TEST_CASE("PPM: load decodes bytes/255") {
    ScratchFile f("llgm_io_a.ppm");
    {
        std::ofstream out(f.path, std::ios::binary);
        out << "P6\n2 2\n255\n";
        const unsigned char px[12] = {255, 0, 0, 0, 255, 0, 0, 0, 255, 128, 128, 128};
        out.write(reinterpret_cast<const char*>(px), 12);
    }
    Image img = load_image(f.path);
    CHECK(img.height == 2);
    CHECK(img.width == 2);
    CHECK(img.channels == 3);
    CHECK(img.at(0, 0, 0) == 1.0f);
    CHECK(img.at(0, 0, 1) == 0.0f);
    CHECK(img.at(1, 1, 0) == doctest::Approx(128.0f / 255).epsilon(1e-7));
}

TEST_CASE("PPM: quantization is round-half-away-from-zero") {
    ScratchFile f("llgm_io_b.ppm");
    Image img(1, 3, 3);
    for (int c = 0; c < 3; ++c) {
        img.at(0, 0, c) = 1.0f;
        img.at(0, 1, c) = 0.5f; // 127.5 -> 128
        img.at(0, 2, c) = 0.0f;
    }
    save_image(img, f.path);
    std::ifstream in(f.path, std::ios::binary);
    std::string header;
    std::getline(in, header); // P6
    std::getline(in, header); // dims
    std::getline(in, header); // maxval
    unsigned char px[9];
    in.read(reinterpret_cast<char*>(px), 9);
    CHECK(px[0] == 255);
    CHECK(px[3] == 128);
    CHECK(px[6] == 0);
}

TEST_CASE("PPM: truncated pixel data is a format error") {
    ScratchFile f("llgm_io_c.ppm");
    {
        std::ofstream out(f.path, std::ios::binary);
        out << "P6\n4 4\n255\n";
        const unsigned char px[6] = {1, 2, 3, 4, 5, 6};
        out.write(reinterpret_cast<const char*>(px), 6);
    }
    CHECK_THROWS_AS(load_image(f.path), FormatError);
}

TEST_CASE("PNG: save/load round trip error is at most half a quantization step") {
    ScratchFile f("llgm_io_d.png");
    Rng rng(21);
    Image img = random_image(19, 23, 3, rng);
    save_image(img, f.path);
    Image back = load_image(f.path);
    REQUIRE(back.same_shape(img));
    for (std::size_t i = 0; i < img.data.size(); ++i)
        CHECK(std::abs(back.data[i] - img.data[i]) <= 1.0f / 510 + 1e-6f);
}

TEST_CASE("PNG: grayscale round trip keeps one channel") {
    ScratchFile f("llgm_io_e.png");
    Rng rng(22);
    Image img = random_image(9, 7, 1, rng);
    save_image(img, f.path);
    Image back = load_image(f.path);
    CHECK(back.channels == 1);
    CHECK(back.height == 9);
    CHECK(back.width == 7);
}

TEST_CASE("PNG: all-zero image round trips to zeros") {
    ScratchFile f("llgm_io_f.png");
    Image img(4, 4, 3);
    save_image(img, f.path);
    Image back = load_image(f.path);
    for (float v : back.data) CHECK(v == 0.0f);
}

TEST_CASE("PNG: 16-bit input is rejected naming the format") {
    ScratchFile f("llgm_io_g.png");
    {
        std::FILE* fp = std::fopen(f.path.c_str(), "wb");
        REQUIRE(fp != nullptr);
        png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        png_infop info = png_create_info_struct(png);
        REQUIRE(setjmp(png_jmpbuf(png)) == 0);
        png_init_io(png, fp);
        png_set_IHDR(png, info, 2, 2, 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                     PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        const png_byte row[4] = {0, 0, 255, 255};
        png_write_row(png, row);
        png_write_row(png, row);
        png_write_end(png, nullptr);
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
    }
    try {
        load_image(f.path);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("16-bit") != std::string::npos);
    }
}

TEST_CASE("load: missing file is an I/O error, garbage is a format error") {
    CHECK_THROWS_AS(load_image(temp_path("llgm_does_not_exist.png")), IoError);
    ScratchFile f("llgm_io_h.png");
    {
        std::ofstream out(f.path, std::ios::binary);
        out << "this is not an image";
    }
    CHECK_THROWS_AS(load_image(f.path), FormatError);
}
