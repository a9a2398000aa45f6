#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>

#include "errors.hpp"
#include "gaussians.hpp"
#include "rng.hpp"
#include "test_util.hpp"

using namespace llgm;
using test::temp_path;

namespace {

struct ScratchFile {
    std::string path;
    explicit ScratchFile(const std::string& name) : path(temp_path(name)) {}
    ~ScratchFile() { std::filesystem::remove(path); }
};

GaussianSet make_set(Rng& rng, int n, int c, int h, int w, bool with_logits) {
    GaussianSet g;
    g.height = h;
    g.width = w;
    g.resize(n, c);
    for (float& v : g.mu) v = rng.uniform(0.0f, static_cast<float>(w - 1));
    for (float& v : g.log_scale) v = rng.uniform(-0.5f, 1.0f);
    for (float& v : g.theta) v = rng.uniform(-3.14f, 3.14f);
    for (float& v : g.color) v = rng.next_float();
    for (float& v : g.opacity_logit) v = rng.uniform(-2.0f, 2.0f);
    if (with_logits) {
        g.atom_count = 5;
        g.enh_logits.resize(static_cast<std::size_t>(g.atom_count) * n);
        for (float& v : g.enh_logits) v = rng.uniform(-1.0f, 1.0f);
    }
    return g;
}

} // namespace

TEST_CASE("covariance: axis-aligned and rotated closed forms") {
    auto c0 = covariance(0.0, 0.0, 0.0); // scales (1,1)
    CHECK(c0.a == doctest::Approx(1.0));
    CHECK(c0.b == doctest::Approx(0.0));
    CHECK(c0.c == doctest::Approx(1.0));

    auto c1 = covariance(std::log(2.0), std::log(1.0), M_PI / 2); // rotate (2,1) by 90 deg
    CHECK(c1.a == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(c1.b == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(c1.c == doctest::Approx(4.0).epsilon(1e-9));

    for (double theta : {0.3, 1.1, 2.7}) { // isotropic is rotation-invariant
        auto ci = covariance(std::log(1.7), std::log(1.7), theta);
        CHECK(ci.a == doctest::Approx(1.7 * 1.7).epsilon(1e-9));
        CHECK(ci.b == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(ci.c == doctest::Approx(1.7 * 1.7).epsilon(1e-9));
    }
}

TEST_CASE("covariance: eigenvalues are exactly the squared scales") {
    for (double sx : {0.3, 1.0, 7.5, 50.0}) {
        for (double sy : {0.3, 2.2, 50.0}) {
            for (int k = 0; k < 8; ++k) {
                const double theta = k * (2 * M_PI / 8);
                auto cv = covariance(std::log(sx), std::log(sy), theta);
                const double tr = cv.a + cv.c;
                const double disc = std::sqrt((cv.a - cv.c) * (cv.a - cv.c) + 4 * cv.b * cv.b);
                const double lo = (tr - disc) / 2, hi = (tr + disc) / 2;
                CHECK(lo == doctest::Approx(std::min(sx * sx, sy * sy)).epsilon(1e-9));
                CHECK(hi == doctest::Approx(std::max(sx * sx, sy * sy)).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("response: unit peak and closed-form falloff") {
    auto ident = covariance(0.0, 0.0, 0.0);
    CHECK(response(ident, 0.0, 0.0) == doctest::Approx(1.0));
    CHECK(response(ident, std::sqrt(2.0), 0.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-9));

    Cov2<double> stretched{1.0, 0.0, 4.0};
    CHECK(response(stretched, 0.0, 2.0) == doctest::Approx(std::exp(-0.5)).epsilon(1e-9));
}

TEST_CASE("response: pi-periodic in theta and monotone along rays") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const double lsx = rng.uniform(-1.0, 2.0), lsy = rng.uniform(-1.0, 2.0);
        const double theta = rng.uniform(-3.0, 3.0);
        auto c1 = covariance(lsx, lsy, theta);
        auto c2 = covariance(lsx, lsy, theta + M_PI);
        const double dx = rng.uniform(-3.0, 3.0), dy = rng.uniform(-3.0, 3.0);
        CHECK(response(c1, dx, dy) == doctest::Approx(response(c2, dx, dy)).epsilon(1e-6));
        double prev = response(c1, 0.0, 0.0);
        for (int step = 1; step <= 10; ++step) {
            const double cur = response(c1, dx * step / 10, dy * step / 10);
            CHECK(cur <= prev + 1e-12);
            prev = cur;
        }
    }
}

TEST_CASE("extent_3sigma: isotropic and rotated half-widths") {
    auto iso = covariance(0.0, 0.0, 0.0);
    double rx, ry;
    extent_3sigma(iso, rx, ry);
    CHECK(rx == doctest::Approx(3.0));
    CHECK(ry == doctest::Approx(3.0));

    auto rot = covariance(std::log(2.0), 0.0, M_PI / 4);
    extent_3sigma(rot, rx, ry);
    CHECK(rx == doctest::Approx(3 * std::sqrt(2.5)).epsilon(1e-9));
    CHECK(ry == doctest::Approx(3 * std::sqrt(2.5)).epsilon(1e-9));
}

TEST_CASE("model file: round trip is bit-identical") {
    Rng rng(32);
    Model m;
    m.levels.push_back(make_set(rng, 7, 3, 8, 8, false));
    m.levels.push_back(make_set(rng, 19, 3, 16, 16, true));
    m.levels[1].frozen = true;

    ScratchFile f("llgm_model_a.llgm");
    save_model(m, f.path);
    Model back = load_model(f.path);
    REQUIRE(back.levels.size() == 2);
    for (int s = 0; s < 2; ++s) {
        const GaussianSet& a = m.levels[s];
        const GaussianSet& b = back.levels[s];
        CHECK(a.height == b.height);
        CHECK(a.width == b.width);
        CHECK(a.count == b.count);
        CHECK(a.channels == b.channels);
        CHECK(a.frozen == b.frozen);
        CHECK(a.atom_count == b.atom_count);
        CHECK(a.mu == b.mu);
        CHECK(a.log_scale == b.log_scale);
        CHECK(a.theta == b.theta);
        CHECK(a.color == b.color);
        CHECK(a.opacity_logit == b.opacity_logit);
        CHECK(a.enh_logits == b.enh_logits);
    }
}

TEST_CASE("model file: exact header layout") {
    Rng rng(33);
    Model m;
    m.levels.push_back(make_set(rng, 2, 3, 4, 6, false));
    m.levels[0].frozen = true;

    ScratchFile f("llgm_model_b.llgm");
    save_model(m, f.path);

    std::ifstream in(f.path, std::ios::binary);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), {});
    auto u32 = [&](std::size_t off) {
        return static_cast<std::uint32_t>(bytes[off]) | (bytes[off + 1] << 8) |
               (bytes[off + 2] << 16) | (static_cast<std::uint32_t>(bytes[off + 3]) << 24);
    };
    REQUIRE(bytes.size() == 4 + 4 + 4 + 16 + 4 * (2 * 2 + 2 * 2 + 2) + 4 + 4 * (3 * 2) + 4 * 2);
    CHECK(bytes[0] == 'L');
    CHECK(bytes[1] == 'L');
    CHECK(bytes[2] == 'G');
    CHECK(bytes[3] == 'M');
    CHECK(u32(4) == 1);  // version
    CHECK(u32(8) == 1);  // level count
    CHECK(u32(12) == 4); // H
    CHECK(u32(16) == 6); // W
    CHECK(u32(20) == 2); // count
    CHECK(u32(24) == 2); // flags: frozen only
    const std::size_t color_header = 12 + 16 + 4 * (2 * 2 + 2 * 2 + 2);
    CHECK(u32(color_header) == 3); // channel count before color data
}

TEST_CASE("model file: error paths") {
    ScratchFile f("llgm_model_c.llgm");
    {
        std::ofstream out(f.path, std::ios::binary);
        out << "NOPExxxxxxxx";
    }
    CHECK_THROWS_AS(load_model(f.path), FormatError);
    {
        std::ofstream out(f.path, std::ios::binary);
        out << "LLGM";
        const unsigned char v2[4] = {2, 0, 0, 0};
        out.write(reinterpret_cast<const char*>(v2), 4);
        const unsigned char lc[4] = {1, 0, 0, 0};
        out.write(reinterpret_cast<const char*>(lc), 4);
    }
    CHECK_THROWS_AS(load_model(f.path), FormatError);

    Rng rng(34);
    Model m;
    m.levels.push_back(make_set(rng, 5, 3, 8, 8, false));
    save_model(m, f.path);
    const auto full = std::filesystem::file_size(f.path);
    std::filesystem::resize_file(f.path, full - 7);
    CHECK_THROWS_AS(load_model(f.path), FormatError);
    CHECK_THROWS_AS(load_model(temp_path("llgm_model_missing.llgm")), IoError);
}

TEST_CASE("model file: stage-1 files have no enhancement logits") {
    Rng rng(35);
    Model m;
    m.levels.push_back(make_set(rng, 3, 3, 4, 4, false));
    ScratchFile f("llgm_model_d.llgm");
    save_model(m, f.path);
    Model back = load_model(f.path);
    CHECK_FALSE(back.levels[0].has_enh_logits());
    CHECK(back.levels[0].enh_logits.empty());
}
