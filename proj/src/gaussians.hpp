#pragma once

#include <cmath>
#include <string>
#include <vector>

namespace llgm {

// 2x2 symmetric covariance [[a, b], [b, c]].
template <typename T>
struct Cov2 {
    T a, b, c;
};

// Sigma = R(theta) diag(sx^2, sy^2) R(theta)^T with sx = exp(log_sx), sy = exp(log_sy).
template <typename T>
inline Cov2<T> covariance(T log_sx, T log_sy, T theta) {
    const T sx2 = std::exp(T(2) * log_sx);
    const T sy2 = std::exp(T(2) * log_sy);
    const T c = std::cos(theta);
    const T s = std::sin(theta);
    return {c * c * sx2 + s * s * sy2, c * s * (sx2 - sy2), s * s * sx2 + c * c * sy2};
}

// Unnormalized response exp(-0.5 d^T Sigma^{-1} d) for offset d = x - mu.
template <typename T>
inline T response(const Cov2<T>& cov, T dx, T dy) {
    const T det = cov.a * cov.c - cov.b * cov.b;
    const T ia = cov.c / det, ib = -cov.b / det, ic = cov.a / det;
    const T q = T(0.5) * (ia * dx * dx + T(2) * ib * dx * dy + ic * dy * dy);
    return std::exp(-q);
}

// Half-extents of the axis-aligned box containing the 3-sigma ellipse.
template <typename T>
inline void extent_3sigma(const Cov2<T>& cov, T& rx, T& ry) {
    rx = T(3) * std::sqrt(cov.a);
    ry = T(3) * std::sqrt(cov.c);
}

// One pyramid level of Gaussian primitives, stored SoA. Positions live in the
// level's own pixel grid (pixel centers at integer coordinates).
struct GaussianSet {
    int height = 0;   // level raster height
    int width = 0;    // level raster width
    int count = 0;    // number of primitives N
    int channels = 0; // color channels C
    bool frozen = false;

    std::vector<float> mu;            // 2N, (x, y) per primitive
    std::vector<float> log_scale;     // 2N, (log sx, log sy)
    std::vector<float> theta;         // N
    std::vector<float> color;         // C*N, per-primitive contiguous
    std::vector<float> opacity_logit; // N

    int atom_count = 0;            // K+1 when enhancement logits are present, else 0
    std::vector<float> enh_logits; // atom_count*N, per-primitive contiguous

    void resize(int n, int c) {
        count = n;
        channels = c;
        mu.assign(2 * static_cast<std::size_t>(n), 0.0f);
        log_scale.assign(2 * static_cast<std::size_t>(n), 0.0f);
        theta.assign(n, 0.0f);
        color.assign(static_cast<std::size_t>(c) * n, 0.0f);
        opacity_logit.assign(n, 0.0f);
    }
    bool has_enh_logits() const { return atom_count > 0; }
};

// A fitted multi-scale model: levels[0] is the coarsest.
struct Model {
    std::vector<GaussianSet> levels;
};

// Binary model container ("LLGM", version 1, little-endian).
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

} // namespace llgm
