#pragma once

// Photometric loss (L1 + SSIM) with analytic gradients, templated on scalar
// type so finite-difference verification can run in double.

#include <cmath>
#include <cstddef>
#include <vector>

#include "errors.hpp"

namespace llgm {

inline constexpr int kSsimRadius = 5; // 11x11 window
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

namespace lossdetail {

template <typename T>
const std::vector<T>& ssim_taps() {
    static const std::vector<T> taps = [] {
        std::vector<T> k(2 * kSsimRadius + 1);
        T sum = 0;
        for (int i = -kSsimRadius; i <= kSsimRadius; ++i) {
            k[i + kSsimRadius] = std::exp(T(-0.5) * T(i) * T(i) / T(kSsimSigma * kSsimSigma));
            sum += k[i + kSsimRadius];
        }
        for (T& v : k) v /= sum;
        return k;
    }();
    return taps;
}

// Valid separable correlation of an H x W plane: output (H-2r) x (W-2r).
template <typename T>
void corr_valid(const std::vector<T>& src, int H, int W, std::vector<T>& out) {
    const auto& taps = ssim_taps<T>();
    const int r = kSsimRadius;
    const int ow = W - 2 * r, oh = H - 2 * r;
    std::vector<T> tmp(static_cast<std::size_t>(H) * ow);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < ow; ++x) {
            T acc = 0;
            for (int k = 0; k <= 2 * r; ++k) acc += taps[k] * src[static_cast<std::size_t>(y) * W + x + k];
            tmp[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    out.assign(static_cast<std::size_t>(oh) * ow, T(0));
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            T acc = 0;
            for (int k = 0; k <= 2 * r; ++k) acc += taps[k] * tmp[static_cast<std::size_t>(y + k) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = acc;
        }
}

// Adjoint of corr_valid: scatters a valid-grid field back onto the full plane.
template <typename T>
void corr_valid_adjoint(const std::vector<T>& field, int H, int W, std::vector<T>& out) {
    const auto& taps = ssim_taps<T>();
    const int r = kSsimRadius;
    const int ow = W - 2 * r, oh = H - 2 * r;
    std::vector<T> tmp(static_cast<std::size_t>(H) * ow, T(0));
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < ow; ++x) {
            T acc = 0;
            for (int k = 0; k <= 2 * r; ++k) {
                const int j = y - k;
                if (j >= 0 && j < oh) acc += taps[k] * field[static_cast<std::size_t>(j) * ow + x];
            }
            tmp[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    out.assign(static_cast<std::size_t>(H) * W, T(0));
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            T acc = 0;
            for (int k = 0; k <= 2 * r; ++k) {
                const int j = x - k;
                if (j >= 0 && j < ow) acc += taps[k] * tmp[static_cast<std::size_t>(y) * ow + j];
            }
            out[static_cast<std::size_t>(y) * W + x] = acc;
        }
}

} // namespace lossdetail

// Mean SSIM of one plane over all valid 11x11 windows (sigma 1.5,
// C1 = 0.01^2, C2 = 0.03^2, dynamic range 1). When grad_x is non-null it
// receives d(mean SSIM)/dx as a full-size plane.
template <typename T>
T ssim_plane(const T* x, const T* y, int H, int W, std::vector<T>* grad_x = nullptr) {
    if (H < 2 * kSsimRadius + 1 || W < 2 * kSsimRadius + 1)
        throw InvalidArgument("ssim: image smaller than the 11x11 window");
    using lossdetail::corr_valid;
    using lossdetail::corr_valid_adjoint;
    const std::size_t n = static_cast<std::size_t>(H) * W;
    std::vector<T> xv(x, x + n), yv(y, y + n), xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
        xx[i] = xv[i] * xv[i];
        yy[i] = yv[i] * yv[i];
        xy[i] = xv[i] * yv[i];
    }
    std::vector<T> mux, muy, sxx, syy, sxy;
    corr_valid(xv, H, W, mux);
    corr_valid(yv, H, W, muy);
    corr_valid(xx, H, W, sxx);
    corr_valid(yy, H, W, syy);
    corr_valid(xy, H, W, sxy);

    const T c1 = T(kSsimC1), c2 = T(kSsimC2);
    const std::size_t nv = mux.size();
    std::vector<T> f1, f2, f3;
    if (grad_x) {
        f1.resize(nv);
        f2.resize(nv);
        f3.resize(nv);
    }
    T total = 0;
    for (std::size_t i = 0; i < nv; ++i) {
        const T mx = mux[i], my = muy[i];
        const T vx = sxx[i] - mx * mx;
        const T vy = syy[i] - my * my;
        const T vxy = sxy[i] - mx * my;
        const T a1 = 2 * mx * my + c1, a2 = 2 * vxy + c2;
        const T b1 = mx * mx + my * my + c1, b2 = vx + vy + c2;
        const T l = a1 / b1, cs = a2 / b2;
        total += l * cs;
        if (grad_x) {
            // Window stats treated as (mu, S..) with sigma = S - mu products.
            f1[i] = cs * 2 * (my * b1 - mx * a1) / (b1 * b1) + l * (2 * mx * a2 / (b2 * b2) - 2 * my / b2);
            f2[i] = -l * a2 / (b2 * b2);
            f3[i] = 2 * l / b2;
        }
    }
    const T mean = total / T(nv);
    if (grad_x) {
        std::vector<T> g1, g2, g3;
        corr_valid_adjoint(f1, H, W, g1);
        corr_valid_adjoint(f2, H, W, g2);
        corr_valid_adjoint(f3, H, W, g3);
        grad_x->assign(n, T(0));
        for (std::size_t i = 0; i < n; ++i)
            (*grad_x)[i] = (g1[i] + 2 * xv[i] * g2[i] + yv[i] * g3[i]) / T(nv);
    }
    return mean;
}

// (1-lambda)*mean|r-t| + lambda*(1 - SSIM(r,t)); SSIM per channel, averaged.
// When grad is non-null it receives dLoss/drender (interleaved H x W x C).
template <typename T>
T photometric_loss(const T* render, const T* target, int H, int W, int C, T lambda,
                   std::vector<T>* grad = nullptr) {
    const std::size_t n = static_cast<std::size_t>(H) * W * C;
    if (grad) grad->assign(n, T(0));
    T l1 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const T d = render[i] - target[i];
        l1 += std::abs(d);
        if (grad) (*grad)[i] = (1 - lambda) * (d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0))) / T(n);
    }
    l1 /= T(n);
    if (lambda == T(0)) return l1; // pure L1: no window-size requirement

    const std::size_t plane = static_cast<std::size_t>(H) * W;
    std::vector<T> rp(plane), tp(plane), gp;
    T ssim_sum = 0;
    for (int c = 0; c < C; ++c) {
        for (std::size_t i = 0; i < plane; ++i) {
            rp[i] = render[i * C + c];
            tp[i] = target[i * C + c];
        }
        ssim_sum += ssim_plane(rp.data(), tp.data(), H, W, grad ? &gp : nullptr);
        if (grad)
            for (std::size_t i = 0; i < plane; ++i) (*grad)[i * C + c] -= lambda * gp[i] / T(C);
    }
    return (1 - lambda) * l1 + lambda * (1 - ssim_sum / T(C));
}

} // namespace llgm
