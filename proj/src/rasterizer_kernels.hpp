#pragma once

// Tile-based splatting kernels, templated on scalar type: float for the
// production path, double for finite-difference verification.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "gaussians.hpp"
#include "parallel.hpp"

namespace llgm::raster {

inline constexpr int kTileSize = 16;
inline constexpr double kEarlyExitT = 1e-4;

enum class Mode { Alpha, Sum };

template <typename T>
inline T sigmoid(T x) {
    return T(1) / (T(1) + std::exp(-x));
}

// Raw views over one level's parameters plus an attribute matrix. mu lives in
// the level's pixel grid; rendering maps it to the target grid.
template <typename T>
struct SceneView {
    int count = 0;
    int channels = 0;
    int level_h = 0, level_w = 0;
    const T* mu = nullptr;            // 2N (x, y)
    const T* log_scale = nullptr;     // 2N
    const T* theta = nullptr;         // N
    const T* opacity_logit = nullptr; // N
    const T* attrs = nullptr;         // N*C, per-primitive contiguous
};

// Per-primitive screen-space quantities: conic (inverse covariance) in render
// coordinates plus the closed 3-sigma pixel box [x0,x1]x[y0,y1].
template <typename T>
struct Splat {
    T cx, cy;
    T mxx, mxy, myy;
    T opacity;
    int x0, x1, y0, y1;
    bool active;
};

template <typename T>
void prepare_splats(const SceneView<T>& s, int out_h, int out_w, std::vector<Splat<T>>& splats) {
    const T fx = T(out_w) / T(s.level_w);
    const T fy = T(out_h) / T(s.level_h);
    splats.resize(s.count);
    for (int i = 0; i < s.count; ++i) {
        Splat<T>& sp = splats[i];
        sp.active = false;
        const Cov2<T> cov = covariance(s.log_scale[2 * i], s.log_scale[2 * i + 1], s.theta[i]);
        const T a = cov.a * fx * fx;
        const T b = cov.b * fx * fy;
        const T c = cov.c * fy * fy;
        const T det = a * c - b * b;
        if (!(det > T(0)) || !std::isfinite(det)) continue;
        sp.cx = (s.mu[2 * i] + T(0.5)) * fx - T(0.5);
        sp.cy = (s.mu[2 * i + 1] + T(0.5)) * fy - T(0.5);
        sp.mxx = c / det;
        sp.mxy = -b / det;
        sp.myy = a / det;
        sp.opacity = sigmoid(s.opacity_logit[i]);
        const T rx = T(3) * std::sqrt(a);
        const T ry = T(3) * std::sqrt(c);
        const T lo_x = std::ceil(sp.cx - rx), hi_x = std::floor(sp.cx + rx);
        const T lo_y = std::ceil(sp.cy - ry), hi_y = std::floor(sp.cy + ry);
        if (!(lo_x <= T(out_w - 1)) || !(hi_x >= T(0)) || !(lo_y <= T(out_h - 1)) || !(hi_y >= T(0)))
            continue;
        sp.x0 = static_cast<int>(std::max(lo_x, T(0)));
        sp.x1 = static_cast<int>(std::min(hi_x, T(out_w - 1)));
        sp.y0 = static_cast<int>(std::max(lo_y, T(0)));
        sp.y1 = static_cast<int>(std::min(hi_y, T(out_h - 1)));
        sp.active = sp.x0 <= sp.x1 && sp.y0 <= sp.y1;
    }
}

// CSR tile lists; each tile's segment keeps ascending primitive order, which
// fixes the compositing order at every pixel.
struct TileLists {
    int tiles_x = 0, tiles_y = 0;
    std::vector<int> offsets; // tiles+1
    std::vector<int> indices;
};

template <typename T>
void build_tile_lists(const std::vector<Splat<T>>& splats, int out_h, int out_w, TileLists& tl) {
    tl.tiles_x = (out_w + kTileSize - 1) / kTileSize;
    tl.tiles_y = (out_h + kTileSize - 1) / kTileSize;
    const int n_tiles = tl.tiles_x * tl.tiles_y;
    tl.offsets.assign(n_tiles + 1, 0);
    auto tile_range = [&](const Splat<T>& sp, int& tx0, int& tx1, int& ty0, int& ty1) {
        tx0 = sp.x0 / kTileSize;
        tx1 = sp.x1 / kTileSize;
        ty0 = sp.y0 / kTileSize;
        ty1 = sp.y1 / kTileSize;
    };
    for (const Splat<T>& sp : splats) {
        if (!sp.active) continue;
        int tx0, tx1, ty0, ty1;
        tile_range(sp, tx0, tx1, ty0, ty1);
        for (int ty = ty0; ty <= ty1; ++ty)
            for (int tx = tx0; tx <= tx1; ++tx) ++tl.offsets[ty * tl.tiles_x + tx + 1];
    }
    for (int t = 0; t < n_tiles; ++t) tl.offsets[t + 1] += tl.offsets[t];
    tl.indices.resize(tl.offsets[n_tiles]);
    std::vector<int> cursor(tl.offsets.begin(), tl.offsets.end() - 1);
    for (int i = 0; i < static_cast<int>(splats.size()); ++i) {
        const Splat<T>& sp = splats[i];
        if (!sp.active) continue;
        int tx0, tx1, ty0, ty1;
        tile_range(sp, tx0, tx1, ty0, ty1);
        for (int ty = ty0; ty <= ty1; ++ty)
            for (int tx = tx0; tx <= tx1; ++tx) tl.indices[cursor[ty * tl.tiles_x + tx]++] = i;
    }
}

template <typename T>
struct ForwardBuffers {
    std::vector<T> image;               // H*W*C
    std::vector<T> accum;               // H*W
    std::vector<std::int32_t> contrib;  // H*W
};

template <typename T>
void render_tiles(const SceneView<T>& s, int out_h, int out_w, Mode mode,
                  const std::vector<Splat<T>>& splats, const TileLists& tl, ForwardBuffers<T>& out) {
    const int C = s.channels;
    out.image.assign(static_cast<std::size_t>(out_h) * out_w * C, T(0));
    out.accum.assign(static_cast<std::size_t>(out_h) * out_w, T(0));
    out.contrib.assign(static_cast<std::size_t>(out_h) * out_w, 0);
    const int n_tiles = tl.tiles_x * tl.tiles_y;

    parallel_for(static_cast<std::size_t>(n_tiles), [&](std::size_t t) {
        const int ty = static_cast<int>(t) / tl.tiles_x;
        const int tx = static_cast<int>(t) % tl.tiles_x;
        const int px0 = tx * kTileSize, px1 = std::min(px0 + kTileSize, out_w);
        const int py0 = ty * kTileSize, py1 = std::min(py0 + kTileSize, out_h);
        const int* list = tl.indices.data() + tl.offsets[t];
        const int list_len = tl.offsets[t + 1] - tl.offsets[t];
        for (int y = py0; y < py1; ++y) {
            for (int x = px0; x < px1; ++x) {
                T* px_img = out.image.data() + (static_cast<std::size_t>(y) * out_w + x) * C;
                T& px_accum = out.accum[static_cast<std::size_t>(y) * out_w + x];
                std::int32_t& px_cnt = out.contrib[static_cast<std::size_t>(y) * out_w + x];
                T trans = T(1);
                for (int li = 0; li < list_len; ++li) {
                    const Splat<T>& sp = splats[list[li]];
                    if (x < sp.x0 || x > sp.x1 || y < sp.y0 || y > sp.y1) continue;
                    const T dx = T(x) - sp.cx;
                    const T dy = T(y) - sp.cy;
                    const T q = T(0.5) * (sp.mxx * dx * dx + sp.myy * dy * dy) + sp.mxy * dx * dy;
                    const T g = std::exp(-q);
                    const T alpha = sp.opacity * g;
                    const T* attr = s.attrs + static_cast<std::size_t>(list[li]) * C;
                    if (mode == Mode::Alpha) {
                        const T w = alpha * trans;
                        for (int c = 0; c < C; ++c) px_img[c] += attr[c] * w;
                        px_accum += w;
                        ++px_cnt;
                        trans *= T(1) - alpha;
                        if (trans < T(kEarlyExitT)) break;
                    } else {
                        for (int c = 0; c < C; ++c) px_img[c] += attr[c] * alpha;
                        px_accum += alpha;
                        ++px_cnt;
                    }
                }
            }
        }
    });
}

template <typename T>
struct GradBuffers {
    std::vector<T> d_mu;            // 2N
    std::vector<T> d_log_scale;     // 2N
    std::vector<T> d_theta;         // N
    std::vector<T> d_attrs;         // N*C
    std::vector<T> d_opacity_logit; // N
};

namespace detail {

// Per-contributor record captured during the backward recomputation sweep.
template <typename T>
struct Contrib {
    int prim;
    int list_pos;
    T g, alpha, trans, dot;
};

} // namespace detail

// Analytic adjoint of render_tiles for loss L = sum_x upstream(x) . image(x).
// Accumulation is per-tile into private buffers, reduced in tile order, so the
// result is independent of thread count.
template <typename T>
void render_backward_tiles(const SceneView<T>& s, int out_h, int out_w, Mode mode,
                           const std::vector<Splat<T>>& splats, const TileLists& tl,
                           const T* upstream, bool attrs_only, GradBuffers<T>& grads) {
    const int C = s.channels;
    const std::size_t n = static_cast<std::size_t>(s.count);
    grads.d_mu.assign(2 * n, T(0));
    grads.d_log_scale.assign(2 * n, T(0));
    grads.d_theta.assign(n, T(0));
    grads.d_attrs.assign(n * C, T(0));
    grads.d_opacity_logit.assign(n, T(0));

    const int n_tiles = tl.tiles_x * tl.tiles_y;
    // Compact per-tile accumulators: one slot per tile-list entry.
    // Slot layout: [dmu'x, dmu'y, dVxx, dVxy(both off-diagonals), dVyy, dopacity, dattr*C]
    const int geom_slots = attrs_only ? 0 : 6;
    const int slot = geom_slots + C;
    std::vector<T> tile_grads(static_cast<std::size_t>(tl.offsets[n_tiles]) * slot, T(0));

    parallel_for(static_cast<std::size_t>(n_tiles), [&](std::size_t t) {
        const int ty = static_cast<int>(t) / tl.tiles_x;
        const int tx = static_cast<int>(t) % tl.tiles_x;
        const int px0 = tx * kTileSize, px1 = std::min(px0 + kTileSize, out_w);
        const int py0 = ty * kTileSize, py1 = std::min(py0 + kTileSize, out_h);
        const int* list = tl.indices.data() + tl.offsets[t];
        const int list_len = tl.offsets[t + 1] - tl.offsets[t];
        T* tg = tile_grads.data() + static_cast<std::size_t>(tl.offsets[t]) * slot;
        std::vector<detail::Contrib<T>> recs;
        recs.reserve(64);

        for (int y = py0; y < py1; ++y) {
            for (int x = px0; x < px1; ++x) {
                const T* u = upstream + (static_cast<std::size_t>(y) * out_w + x) * C;
                // Sweep 1: recompute the forward compositing, record contributors.
                recs.clear();
                T trans = T(1);
                T total_w = T(0); // W = sum_k dot_k * alpha_k * T_k (alpha mode)
                for (int li = 0; li < list_len; ++li) {
                    const Splat<T>& sp = splats[list[li]];
                    if (x < sp.x0 || x > sp.x1 || y < sp.y0 || y > sp.y1) continue;
                    const T dx = T(x) - sp.cx;
                    const T dy = T(y) - sp.cy;
                    const T q = T(0.5) * (sp.mxx * dx * dx + sp.myy * dy * dy) + sp.mxy * dx * dy;
                    const T g = std::exp(-q);
                    const T alpha = sp.opacity * g;
                    const T* attr = s.attrs + static_cast<std::size_t>(list[li]) * C;
                    T dot = T(0);
                    if (!attrs_only)
                        for (int c = 0; c < C; ++c) dot += u[c] * attr[c];
                    if (mode == Mode::Alpha) {
                        const T w_attr = alpha * trans;
                        T* slot_ptr = tg + static_cast<std::size_t>(li) * slot;
                        for (int c = 0; c < C; ++c) slot_ptr[geom_slots + c] += u[c] * w_attr;
                        if (!attrs_only) {
                            recs.push_back({list[li], li, g, alpha, trans, dot});
                            total_w += dot * w_attr;
                        }
                        trans *= T(1) - alpha;
                        if (trans < T(kEarlyExitT)) break;
                    } else {
                        T* slot_ptr = tg + static_cast<std::size_t>(li) * slot;
                        for (int c = 0; c < C; ++c) slot_ptr[geom_slots + c] += u[c] * alpha;
                        if (!attrs_only) {
                            // d/dalpha is immediate in sum mode; chain it now.
                            const T dl_da = dot;
                            const T gq = -dl_da * sp.opacity * g; // dL/dq
                            slot_ptr[0] += gq * (sp.mxx * dx + sp.mxy * dy) * T(-1);
                            slot_ptr[1] += gq * (sp.mxy * dx + sp.myy * dy) * T(-1);
                            slot_ptr[2] += gq * T(0.5) * dx * dx;
                            slot_ptr[3] += gq * dx * dy;
                            slot_ptr[4] += gq * T(0.5) * dy * dy;
                            slot_ptr[5] += dl_da * g;
                        }
                    }
                }
                if (mode != Mode::Alpha || attrs_only || recs.empty()) continue;
                // Sweep 2: dL/dalpha_k = dot_k*T_k - (W - P_k)/(1 - alpha_k),
                // P_k the prefix of W through k. When (1 - alpha_k) underflows the
                // early exit guarantees the numerator is exactly zero.
                T prefix = T(0);
                for (const detail::Contrib<T>& r : recs) {
                    const Splat<T>& sp = splats[r.prim];
                    const T w_k = r.dot * r.alpha * r.trans;
                    prefix += w_k;
                    const T downstream = total_w - prefix;
                    const T one_minus = T(1) - r.alpha;
                    T dl_da = r.dot * r.trans;
                    if (downstream != T(0)) dl_da -= downstream / one_minus;
                    const T dx = T(x) - sp.cx;
                    const T dy = T(y) - sp.cy;
                    const T gq = -dl_da * sp.opacity * r.g; // dL/dq through g = exp(-q)
                    T* slot_ptr = tg + static_cast<std::size_t>(r.list_pos) * slot;
                    // q = 0.5 d^T M d with d = x - mu': dq/dmu' = -(M d)
                    slot_ptr[0] += gq * (sp.mxx * dx + sp.mxy * dy) * T(-1);
                    slot_ptr[1] += gq * (sp.mxy * dx + sp.myy * dy) * T(-1);
                    slot_ptr[2] += gq * T(0.5) * dx * dx;
                    slot_ptr[3] += gq * dx * dy;
                    slot_ptr[4] += gq * T(0.5) * dy * dy;
                    slot_ptr[5] += dl_da * r.g;
                }
            }
        }
    });

    // Deterministic reduction: tiles in order, list entries in order.
    std::vector<T> g_mu_r(2 * n, T(0)); // d/dmu in render coords
    std::vector<T> g_conic(3 * n, T(0));
    std::vector<T> g_opacity(n, T(0));
    for (int t = 0; t < n_tiles; ++t) {
        const int* list = tl.indices.data() + tl.offsets[t];
        const int list_len = tl.offsets[t + 1] - tl.offsets[t];
        const T* tg = tile_grads.data() + static_cast<std::size_t>(tl.offsets[t]) * slot;
        for (int li = 0; li < list_len; ++li) {
            const int i = list[li];
            const T* sp = tg + static_cast<std::size_t>(li) * slot;
            if (!attrs_only) {
                g_mu_r[2 * i] += sp[0];
                g_mu_r[2 * i + 1] += sp[1];
                g_conic[3 * i] += sp[2];
                g_conic[3 * i + 1] += sp[3];
                g_conic[3 * i + 2] += sp[4];
                g_opacity[i] += sp[5];
            }
            for (int c = 0; c < C; ++c) grads.d_attrs[static_cast<std::size_t>(i) * C + c] += sp[geom_slots + c];
        }
    }
    if (attrs_only) return;

    // Chain conic/screen gradients back to the native parameters.
    const T fx = T(out_w) / T(s.level_w);
    const T fy = T(out_h) / T(s.level_h);
    parallel_for(n, [&](std::size_t i) {
        const Splat<T>& sp = splats[i];
        if (!sp.active) return;
        // dL/dM (full symmetric) from packed accumulation.
        const T vxx = g_conic[3 * i], vxy = g_conic[3 * i + 1] * T(0.5), vyy = g_conic[3 * i + 2];
        // dL/dSigma' = -M V M for M = Sigma'^{-1}.
        const T mxx = sp.mxx, mxy = sp.mxy, myy = sp.myy;
        const T p00 = mxx * vxx + mxy * vxy, p01 = mxx * vxy + mxy * vyy;
        const T p10 = mxy * vxx + myy * vxy, p11 = mxy * vxy + myy * vyy;
        const T s00 = -(p00 * mxx + p01 * mxy);
        const T s01 = -(p00 * mxy + p01 * myy);
        const T s10 = -(p10 * mxx + p11 * mxy);
        const T s11 = -(p10 * mxy + p11 * myy);
        // Sigma' = F Sigma F with F = diag(fx, fy); packed (a, b, c) with b both off-diagonals.
        const T ga = s00 * fx * fx;
        const T gb = (s01 + s10) * fx * fy;
        const T gc = s11 * fy * fy;
        const T ct = std::cos(s.theta[i]), st = std::sin(s.theta[i]);
        const T sx2 = std::exp(T(2) * s.log_scale[2 * i]);
        const T sy2 = std::exp(T(2) * s.log_scale[2 * i + 1]);
        grads.d_theta[i] = ga * T(2) * ct * st * (sy2 - sx2) + gb * (ct * ct - st * st) * (sx2 - sy2) +
                           gc * T(2) * ct * st * (sx2 - sy2);
        grads.d_log_scale[2 * i] = (ga * ct * ct + gb * ct * st + gc * st * st) * T(2) * sx2;
        grads.d_log_scale[2 * i + 1] = (ga * st * st - gb * ct * st + gc * ct * ct) * T(2) * sy2;
        grads.d_mu[2 * i] = g_mu_r[2 * i] * fx;
        grads.d_mu[2 * i + 1] = g_mu_r[2 * i + 1] * fy;
        const T o = sp.opacity;
        grads.d_opacity_logit[i] = g_opacity[i] * o * (T(1) - o);
    });
}

// Convenience wrappers that run prepare + tile build + the kernel.
template <typename T>
void render_scene(const SceneView<T>& s, int out_h, int out_w, Mode mode, ForwardBuffers<T>& out) {
    std::vector<Splat<T>> splats;
    prepare_splats(s, out_h, out_w, splats);
    TileLists tl;
    build_tile_lists(splats, out_h, out_w, tl);
    render_tiles(s, out_h, out_w, mode, splats, tl, out);
}

template <typename T>
void render_scene_backward(const SceneView<T>& s, int out_h, int out_w, Mode mode, const T* upstream,
                           bool attrs_only, GradBuffers<T>& grads) {
    std::vector<Splat<T>> splats;
    prepare_splats(s, out_h, out_w, splats);
    TileLists tl;
    build_tile_lists(splats, out_h, out_w, tl);
    render_backward_tiles(s, out_h, out_w, mode, splats, tl, upstream, attrs_only, grads);
}

} // namespace llgm::raster
