#pragma once

// Gain-synthesis chain: per-primitive mixing logits are softmaxed, splatted
// through frozen geometry, normalized per pixel, mixed with the curve
// dictionary into per-pixel curve parameters, and applied as a multiplicative
// gain with a global channel bias. Templated on the scalar type so the exact
// production arithmetic can be cross-checked against finite differences in
// double precision.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "dictionary.hpp"
#include "rasterizer_kernels.hpp"

namespace llgm::enh {

inline constexpr double kCoverageEps = 1e-4; // accumulated-opacity floor
inline constexpr double kGainEps = 1e-4;     // gain-ratio denominator guard

template <typename T>
inline T luma(const T* px) {
    return T(0.299) * px[0] + T(0.587) * px[1] + T(0.114) * px[2];
}

template <typename T>
struct ChainConfig {
    T e_target = T(0.6);
    int patch = 16;
    T w_target = T(0.01);
    T w_spa = T(1);
    T w_exp = T(6);
    T w_sparse = T(0.01);
    T w_tv = T(3);
    T w_cont = T(0.4);
};

// Outputs plus reusable scratch; kept alive across optimizer iterations so
// the inner loop does not reallocate.
template <typename T>
struct ChainBuffers {
    std::vector<T> softmax; // N*A
    raster::ForwardBuffers<T> splat;
    std::vector<T> omega; // H*W*A, normalized
    std::vector<T> gamma; // H*W*P
    std::vector<T> eta;   // H*W*C
    std::vector<T> out;   // H*W*C
    T terms[6] = {};
    T total = T(0);

    std::vector<T> lum_in, lum_out; // H*W
    std::vector<T> d_out, d_eta;    // H*W*C
    std::vector<T> d_gamma;         // H*W*P
    std::vector<T> d_raw;           // H*W*A
    std::vector<T> d_lum;           // H*W
    std::vector<T> d_softmax;       // N*A
    std::vector<double> patch_sum;
    std::vector<int> patch_count;
    raster::GradBuffers<T> grads;
};

template <typename T>
void softmax_rows(const T* logits, int n, int a, std::vector<T>& s) {
    s.resize(static_cast<std::size_t>(n) * a);
    for (int i = 0; i < n; ++i) {
        const T* row = logits + static_cast<std::size_t>(i) * a;
        T* dst = s.data() + static_cast<std::size_t>(i) * a;
        T m = row[0];
        for (int k = 1; k < a; ++k) m = std::max(m, row[k]);
        T sum = T(0);
        for (int k = 0; k < a; ++k) {
            dst[k] = std::exp(row[k] - m);
            sum += dst[k];
        }
        for (int k = 0; k < a; ++k) dst[k] /= sum;
    }
}

// Omega <- raw / max(A, eps); pixels with coverage below the floor fall back
// to the identity atom (one-hot row 0).
template <typename T>
void normalize_weights(const std::vector<T>& raw, const std::vector<T>& accum, std::size_t hw, int a,
                       std::vector<T>& omega) {
    omega.resize(hw * a);
    for (std::size_t p = 0; p < hw; ++p) {
        const T cov = accum[p];
        T* dst = omega.data() + p * a;
        if (cov < T(kCoverageEps)) {
            dst[0] = T(1);
            for (int k = 1; k < a; ++k) dst[k] = T(0);
        } else {
            const T* src = raw.data() + p * a;
            for (int k = 0; k < a; ++k) dst[k] = src[k] / cov;
        }
    }
}

// gamma_p(x) = sum_k Omega_k(x) * dict[k][p]; dict rows are atoms.
template <typename T>
void mix_curves(const std::vector<T>& omega, std::size_t hw, int a, const T* dict, int order,
                std::vector<T>& gamma) {
    gamma.assign(hw * order, T(0));
    for (std::size_t px = 0; px < hw; ++px) {
        const T* w = omega.data() + px * a;
        T* g = gamma.data() + px * order;
        for (int k = 0; k < a; ++k) {
            const T wk = w[k];
            const T* row = dict + static_cast<std::size_t>(k) * order;
            for (int p = 0; p < order; ++p) g[p] += wk * row[p];
        }
    }
}

// eta = (curve(v) + eps) / (v + eps), per pixel and channel.
template <typename T>
void gain_field(const T* img, const std::vector<T>& gamma, std::size_t hw, int c, int order,
                std::vector<T>& eta) {
    eta.resize(hw * c);
    for (std::size_t px = 0; px < hw; ++px) {
        const T* g = gamma.data() + px * order;
        for (int ch = 0; ch < c; ++ch) {
            const T v = img[px * c + ch];
            const T vp = apply_curve(v, g, order);
            eta[px * c + ch] = (vp + T(kGainEps)) / (v + T(kGainEps));
        }
    }
}

template <typename T>
void compose(const T* img, const std::vector<T>& eta, const T* bias, std::size_t hw, int c,
             std::vector<T>& out) {
    out.resize(hw * c);
    for (std::size_t px = 0; px < hw; ++px)
        for (int ch = 0; ch < c; ++ch) {
            const T pre = img[px * c + ch] * eta[px * c + ch] + bias[ch];
            out[px * c + ch] = std::min(std::max(pre, T(0)), T(1));
        }
}

// Full forward pass and, when d_logits is non-null, the analytic backward
// pass for the logits and bias. Geometry is frozen, so splats and tile lists
// are prepared once by the caller and reused across iterations. `target` is
// the precomputed exposure-corrected reference; `img` and `target` are
// H*W*C with C == 3.
template <typename T>
void enhance_chain(const raster::SceneView<T>& geom, const std::vector<raster::Splat<T>>& splats,
                   const raster::TileLists& tiles, const T* logits, const T* bias, const T* dict,
                   int atoms, int order, const T* img, const T* target, int out_h, int out_w,
                   const ChainConfig<T>& cfg, ChainBuffers<T>& buf, T* d_logits, T* d_bias) {
    const int C = 3;
    const int H = out_h, W = out_w;
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    const int n = geom.count;

    // --- forward ---
    softmax_rows(logits, n, atoms, buf.softmax);
    raster::SceneView<T> view = geom;
    view.channels = atoms;
    view.attrs = buf.softmax.data();
    raster::render_tiles(view, H, W, raster::Mode::Alpha, splats, tiles, buf.splat);
    normalize_weights(buf.splat.image, buf.splat.accum, hw, atoms, buf.omega);
    mix_curves(buf.omega, hw, atoms, dict, order, buf.gamma);
    gain_field(img, buf.gamma, hw, C, order, buf.eta);
    compose(img, buf.eta, bias, hw, C, buf.out);

    buf.lum_in.resize(hw);
    buf.lum_out.resize(hw);
    for (std::size_t p = 0; p < hw; ++p) {
        buf.lum_in[p] = luma(img + p * C);
        buf.lum_out[p] = luma(buf.out.data() + p * C);
    }

    // --- loss terms (serial double accumulation for determinism) ---
    const double inv_hwc = 1.0 / (double(hw) * C);
    const double inv_hw = 1.0 / double(hw);

    double acc = 0.0;
    for (std::size_t i = 0; i < hw * C; ++i) acc += std::abs(double(buf.out[i]) - double(target[i]));
    buf.terms[0] = T(acc * inv_hwc);

    auto fwd_dx = [&](const T* f, int y, int x, int ch) {
        return x + 1 < W ? f[(std::size_t(y) * W + x + 1) * C + ch] - f[(std::size_t(y) * W + x) * C + ch]
                         : T(0);
    };
    auto fwd_dy = [&](const T* f, int y, int x, int ch) {
        return y + 1 < H ? f[(std::size_t(y + 1) * W + x) * C + ch] - f[(std::size_t(y) * W + x) * C + ch]
                         : T(0);
    };
    acc = 0.0;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int ch = 0; ch < C; ++ch) {
                acc += std::abs(double(fwd_dx(buf.out.data(), y, x, ch)) - double(fwd_dx(img, y, x, ch)));
                acc += std::abs(double(fwd_dy(buf.out.data(), y, x, ch)) - double(fwd_dy(img, y, x, ch)));
            }
    buf.terms[1] = T(acc * inv_hwc);

    const int pw = (W + cfg.patch - 1) / cfg.patch;
    const int ph = (H + cfg.patch - 1) / cfg.patch;
    const std::size_t np = static_cast<std::size_t>(pw) * ph;
    buf.patch_sum.assign(np, 0.0);
    buf.patch_count.assign(np, 0);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const std::size_t j = static_cast<std::size_t>(y / cfg.patch) * pw + x / cfg.patch;
            buf.patch_sum[j] += double(buf.lum_out[std::size_t(y) * W + x]);
            buf.patch_count[j] += 1;
        }
    acc = 0.0;
    for (std::size_t j = 0; j < np; ++j) {
        const double mean = buf.patch_sum[j] / buf.patch_count[j];
        const double d = mean - double(cfg.e_target);
        acc += d * d;
    }
    buf.terms[2] = T(acc / double(np));

    acc = 0.0;
    for (int i = 0; i < n; ++i) acc += 1.0 - double(buf.softmax[static_cast<std::size_t>(i) * atoms]);
    buf.terms[3] = T(n > 0 ? acc / n : 0.0);

    acc = 0.0;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int ch = 0; ch < C; ++ch)
                acc += std::abs(double(fwd_dx(buf.eta.data(), y, x, ch))) +
                       std::abs(double(fwd_dy(buf.eta.data(), y, x, ch)));
    buf.terms[4] = T(acc * inv_hwc);

    auto plane_dx = [&](const std::vector<T>& f, int y, int x) {
        return x + 1 < W ? f[std::size_t(y) * W + x + 1] - f[std::size_t(y) * W + x] : T(0);
    };
    auto plane_dy = [&](const std::vector<T>& f, int y, int x) {
        return y + 1 < H ? f[std::size_t(y + 1) * W + x] - f[std::size_t(y) * W + x] : T(0);
    };
    double mean_m_in = 0.0, mean_m_out = 0.0;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const double gxi = double(plane_dx(buf.lum_in, y, x));
            const double gyi = double(plane_dy(buf.lum_in, y, x));
            const double gxo = double(plane_dx(buf.lum_out, y, x));
            const double gyo = double(plane_dy(buf.lum_out, y, x));
            mean_m_in += std::sqrt(gxi * gxi + gyi * gyi);
            mean_m_out += std::sqrt(gxo * gxo + gyo * gyo);
        }
    mean_m_in *= inv_hw;
    mean_m_out *= inv_hw;
    buf.terms[5] = T(std::max(mean_m_in - mean_m_out, 0.0));

    buf.total = cfg.w_target * buf.terms[0] + cfg.w_spa * buf.terms[1] + cfg.w_exp * buf.terms[2] +
                cfg.w_sparse * buf.terms[3] + cfg.w_tv * buf.terms[4] + cfg.w_cont * buf.terms[5];

    if (d_logits == nullptr) return;

    // --- backward ---
    buf.d_out.assign(hw * C, T(0));

    const T t_scale = cfg.w_target * T(inv_hwc);
    for (std::size_t i = 0; i < hw * C; ++i) {
        const T r = buf.out[i] - target[i];
        if (r > T(0))
            buf.d_out[i] += t_scale;
        else if (r < T(0))
            buf.d_out[i] -= t_scale;
    }

    const T s_scale = cfg.w_spa * T(inv_hwc);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int ch = 0; ch < C; ++ch) {
                const std::size_t at = (std::size_t(y) * W + x) * C + ch;
                if (x + 1 < W) {
                    const T r = fwd_dx(buf.out.data(), y, x, ch) - fwd_dx(img, y, x, ch);
                    const T s = r > T(0) ? s_scale : (r < T(0) ? -s_scale : T(0));
                    buf.d_out[at] -= s;
                    buf.d_out[at + C] += s;
                }
                if (y + 1 < H) {
                    const T r = fwd_dy(buf.out.data(), y, x, ch) - fwd_dy(img, y, x, ch);
                    const T s = r > T(0) ? s_scale : (r < T(0) ? -s_scale : T(0));
                    buf.d_out[at] -= s;
                    buf.d_out[at + std::size_t(W) * C] += s;
                }
            }

    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const std::size_t j = static_cast<std::size_t>(y / cfg.patch) * pw + x / cfg.patch;
            const double mean = buf.patch_sum[j] / buf.patch_count[j];
            const T d_lum_px = T(double(cfg.w_exp) * 2.0 * (mean - double(cfg.e_target)) /
                                 (double(np) * buf.patch_count[j]));
            T* dst = buf.d_out.data() + (std::size_t(y) * W + x) * C;
            dst[0] += d_lum_px * T(0.299);
            dst[1] += d_lum_px * T(0.587);
            dst[2] += d_lum_px * T(0.114);
        }

    if (mean_m_in - mean_m_out > 0.0) {
        buf.d_lum.assign(hw, T(0));
        const T c_scale = -cfg.w_cont * T(inv_hw);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const T gx = plane_dx(buf.lum_out, y, x);
                const T gy = plane_dy(buf.lum_out, y, x);
                const T m = std::sqrt(gx * gx + gy * gy);
                if (!(m > T(0))) continue;
                const std::size_t at = std::size_t(y) * W + x;
                const T dgx = c_scale * gx / m;
                const T dgy = c_scale * gy / m;
                if (x + 1 < W) {
                    buf.d_lum[at] -= dgx;
                    buf.d_lum[at + 1] += dgx;
                }
                if (y + 1 < H) {
                    buf.d_lum[at] -= dgy;
                    buf.d_lum[at + W] += dgy;
                }
            }
        for (std::size_t p = 0; p < hw; ++p) {
            T* dst = buf.d_out.data() + p * C;
            dst[0] += buf.d_lum[p] * T(0.299);
            dst[1] += buf.d_lum[p] * T(0.587);
            dst[2] += buf.d_lum[p] * T(0.114);
        }
    }

    // Clamp gate, bias gradient, and gain gradient.
    buf.d_eta.assign(hw * C, T(0));
    const T tv_scale = cfg.w_tv * T(inv_hwc);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int ch = 0; ch < C; ++ch) {
                const std::size_t at = (std::size_t(y) * W + x) * C + ch;
                if (x + 1 < W) {
                    const T r = fwd_dx(buf.eta.data(), y, x, ch);
                    const T s = r > T(0) ? tv_scale : (r < T(0) ? -tv_scale : T(0));
                    buf.d_eta[at] -= s;
                    buf.d_eta[at + C] += s;
                }
                if (y + 1 < H) {
                    const T r = fwd_dy(buf.eta.data(), y, x, ch);
                    const T s = r > T(0) ? tv_scale : (r < T(0) ? -tv_scale : T(0));
                    buf.d_eta[at] -= s;
                    buf.d_eta[at + std::size_t(W) * C] += s;
                }
            }

    d_bias[0] = d_bias[1] = d_bias[2] = T(0);
    for (std::size_t p = 0; p < hw; ++p)
        for (int ch = 0; ch < C; ++ch) {
            const std::size_t at = p * C + ch;
            const T v = img[at];
            const T pre = v * buf.eta[at] + bias[ch];
            const T d_pre = (pre >= T(0) && pre <= T(1)) ? buf.d_out[at] : T(0);
            d_bias[ch] += d_pre;
            buf.d_eta[at] += d_pre * v;
        }

    // Through the gain ratio and the iterated curve into the mixed
    // parameters; the curve state is recomputed per channel.
    buf.d_gamma.assign(hw * order, T(0));
    std::vector<T> u(static_cast<std::size_t>(order) + 1);
    for (std::size_t p = 0; p < hw; ++p) {
        const T* g = buf.gamma.data() + p * order;
        T* dg = buf.d_gamma.data() + p * order;
        for (int ch = 0; ch < C; ++ch) {
            const std::size_t at = p * C + ch;
            const T v = img[at];
            T t = buf.d_eta[at] / (v + T(kGainEps));
            if (t == T(0)) continue;
            u[0] = v;
            for (int q = 0; q < order; ++q) u[q + 1] = u[q] + g[q] * (u[q] * u[q] - u[q]);
            for (int q = order - 1; q >= 0; --q) {
                dg[q] += t * (u[q] * u[q] - u[q]);
                t *= T(1) + g[q] * (T(2) * u[q] - T(1));
            }
        }
    }

    // d wrt the raw splatted weights: only covered pixels pass gradient, the
    // coverage denominator is constant because the geometry is frozen.
    buf.d_raw.assign(hw * atoms, T(0));
    for (std::size_t p = 0; p < hw; ++p) {
        const T cov = buf.splat.accum[p];
        if (cov < T(kCoverageEps)) continue;
        const T* dg = buf.d_gamma.data() + p * order;
        T* dst = buf.d_raw.data() + p * atoms;
        for (int k = 0; k < atoms; ++k) {
            const T* row = dict + static_cast<std::size_t>(k) * order;
            T s = T(0);
            for (int q = 0; q < order; ++q) s += dg[q] * row[q];
            dst[k] = s / cov;
        }
    }

    raster::render_backward_tiles(view, H, W, raster::Mode::Alpha, splats, tiles, buf.d_raw.data(),
                                  /*attrs_only=*/true, buf.grads);

    buf.d_softmax = buf.grads.d_attrs;
    if (n > 0) {
        const T sp_scale = cfg.w_sparse / T(n);
        for (int i = 0; i < n; ++i)
            for (int k = 1; k < atoms; ++k) buf.d_softmax[static_cast<std::size_t>(i) * atoms + k] += sp_scale;
    }

    for (int i = 0; i < n; ++i) {
        const T* s = buf.softmax.data() + static_cast<std::size_t>(i) * atoms;
        const T* ds = buf.d_softmax.data() + static_cast<std::size_t>(i) * atoms;
        T dot = T(0);
        for (int k = 0; k < atoms; ++k) dot += ds[k] * s[k];
        T* dl = d_logits + static_cast<std::size_t>(i) * atoms;
        for (int k = 0; k < atoms; ++k) dl[k] = s[k] * (ds[k] - dot);
    }
}

} // namespace llgm::enh
