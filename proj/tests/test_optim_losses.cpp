#include <doctest.h>

#include <cmath>
#include <vector>

#include "errors.hpp"
#include "losses.hpp"
#include "optim.hpp"
#include "rng.hpp"

using namespace llgm;

namespace {

// Direct 2D sliding-window SSIM in double, independent of the separable
// production path.
double naive_ssim(const std::vector<double>& x, const std::vector<double>& y, int H, int W) {
    const int r = 5;
    std::vector<double> taps(11);
    double s = 0;
    for (int i = -r; i <= r; ++i) {
        taps[i + r] = std::exp(-0.5 * i * i / (1.5 * 1.5));
        s += taps[i + r];
    }
    for (double& t : taps) t /= s;
    double total = 0;
    int count = 0;
    for (int cy = r; cy < H - r; ++cy) {
        for (int cx = r; cx < W - r; ++cx) {
            double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    const double w = taps[dy + r] * taps[dx + r];
                    const double xv = x[(cy + dy) * W + cx + dx];
                    const double yv = y[(cy + dy) * W + cx + dx];
                    mx += w * xv;
                    my += w * yv;
                    sxx += w * xv * xv;
                    syy += w * yv * yv;
                    sxy += w * xv * yv;
                }
            const double vx = sxx - mx * mx, vy = syy - my * my, vxy = sxy - mx * my;
            const double c1 = 1e-4, c2 = 9e-4;
            total += ((2 * mx * my + c1) * (2 * vxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++count;
        }
    }
    return total / count;
}

} // namespace

TEST_CASE("adam: matches a hand-stepped double reference") {
    AdamConfig cfg;
    cfg.lr = 0.1;
    Adam opt(2, cfg);
    std::vector<float> p = {1.0f, -2.0f};
    const std::vector<std::vector<float>> grads = {{0.5f, -1.0f}, {-0.25f, 0.75f}, {1.5f, 0.1f}};

    double rm[2] = {0, 0}, rv[2] = {0, 0}, rp[2] = {1.0, -2.0};
    for (int t = 1; t <= 3; ++t) {
        opt.step(p.data(), grads[t - 1].data());
        for (int i = 0; i < 2; ++i) {
            const double g = grads[t - 1][i];
            rm[i] = 0.9 * rm[i] + 0.1 * g;
            rv[i] = 0.999 * rv[i] + 0.001 * g * g;
            const double mhat = rm[i] / (1 - std::pow(0.9, t));
            const double vhat = rv[i] / (1 - std::pow(0.999, t));
            rp[i] -= 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
        }
    }
    CHECK(p[0] == doctest::Approx(rp[0]).epsilon(1e-5));
    CHECK(p[1] == doctest::Approx(rp[1]).epsilon(1e-5));
}

TEST_CASE("adam: minimizes a quadratic") {
    AdamConfig cfg;
    cfg.lr = 0.05;
    Adam opt(1, cfg);
    float x = -4.0f;
    for (int i = 0; i < 2000; ++i) {
        const float g = 2 * (x - 3.0f);
        opt.step(&x, &g);
    }
    CHECK(x == doctest::Approx(3.0f).epsilon(1e-3));
}

TEST_CASE("adam: cosine schedule anneals from lr to its floor") {
    AdamConfig cfg;
    cfg.lr = 0.001;
    cfg.schedule = LrSchedule::Cosine;
    cfg.min_fraction = 0.05;
    cfg.total_steps = 100;
    Adam opt(1, cfg);
    CHECK(opt.next_lr() == doctest::Approx(0.001));
    float x = 0;
    const float g = 0;
    double prev = opt.next_lr();
    for (int i = 0; i < 100; ++i) {
        opt.step(&x, &g);
        CHECK(opt.next_lr() <= prev + 1e-12);
        prev = opt.next_lr();
    }
    CHECK(opt.next_lr() == doctest::Approx(0.001 * 0.05).epsilon(1e-6));
    AdamConfig bad = cfg;
    bad.total_steps = 0;
    CHECK_THROWS_AS(Adam(1, bad), InvalidArgument);
}

TEST_CASE("ssim_plane: matches the direct sliding-window reference") {
    Rng rng(51);
    const int H = 20, W = 17;
    std::vector<double> x(H * W), y(H * W);
    for (auto& v : x) v = rng.next_double();
    for (auto& v : y) v = rng.next_double();
    const double got = ssim_plane(x.data(), y.data(), H, W);
    CHECK(got == doctest::Approx(naive_ssim(x, y, H, W)).epsilon(1e-9));
}

TEST_CASE("ssim_plane: identity, symmetry, window-size guard") {
    Rng rng(52);
    const int H = 16, W = 16;
    std::vector<double> x(H * W), y(H * W);
    for (auto& v : x) v = rng.next_double();
    for (auto& v : y) v = rng.next_double();
    CHECK(ssim_plane(x.data(), x.data(), H, W) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(ssim_plane(x.data(), y.data(), H, W) ==
          doctest::Approx(ssim_plane(y.data(), x.data(), H, W)).epsilon(1e-9));
    CHECK_THROWS_AS(ssim_plane(x.data(), y.data(), 8, 8), InvalidArgument);
}

TEST_CASE("photometric_loss: zero at equality, pure L1 offset") {
    Rng rng(53);
    const int H = 16, W = 16, C = 3;
    std::vector<double> r(H * W * C);
    for (auto& v : r) v = rng.next_double();
    CHECK(photometric_loss(r.data(), r.data(), H, W, C, 0.7) == doctest::Approx(0.0).epsilon(1e-6));

    std::vector<double> t(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) t[i] = r[i] + 0.1;
    CHECK(photometric_loss(r.data(), t.data(), H, W, C, 0.0) == doctest::Approx(0.1).epsilon(1e-9));
}

TEST_CASE("photometric_loss: analytic gradient matches finite differences") {
    Rng rng(54);
    const int H = 16, W = 16, C = 3;
    std::vector<double> r(H * W * C), t(r.size());
    for (auto& v : r) v = rng.next_double();
    // Keep every |r - t| far from the L1 kink relative to the step size.
    for (std::size_t i = 0; i < r.size(); ++i)
        t[i] = r[i] + (rng.next_double() < 0.5 ? -1 : 1) * rng.uniform(0.02, 0.3);

    std::vector<double> grad;
    const double lambda = 0.7;
    photometric_loss(r.data(), t.data(), H, W, C, lambda, &grad);

    const double h = 1e-4;
    Rng pick(55);
    for (int trial = 0; trial < 120; ++trial) {
        const std::size_t j = pick.next_below(r.size());
        const double saved = r[j];
        r[j] = saved + h;
        const double lp = photometric_loss(r.data(), t.data(), H, W, C, lambda);
        r[j] = saved - h;
        const double lm = photometric_loss(r.data(), t.data(), H, W, C, lambda);
        r[j] = saved;
        const double fd = (lp - lm) / (2 * h);
        const double diff = std::abs(grad[j] - fd);
        if (diff >= 1e-5) CHECK(diff / std::max(std::abs(grad[j]), std::abs(fd)) < 1e-3);
    }
}

TEST_CASE("photometric_loss: float instantiation stays close to double") {
    Rng rng(56);
    const int H = 16, W = 16, C = 3;
    std::vector<double> rd(H * W * C), td(rd.size());
    for (auto& v : rd) v = rng.next_double();
    for (auto& v : td) v = rng.next_double();
    std::vector<float> rf(rd.begin(), rd.end()), tf(td.begin(), td.end());
    const double d = photometric_loss(rd.data(), td.data(), H, W, C, 0.7);
    const float f = photometric_loss(rf.data(), tf.data(), H, W, C, 0.7f);
    CHECK(static_cast<double>(f) == doctest::Approx(d).epsilon(1e-4));
}
