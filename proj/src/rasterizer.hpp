#pragma once

#include <cstdint>
#include <vector>

#include "gaussians.hpp"
#include "image.hpp"

namespace llgm {

enum class RenderMode { Alpha, Sum };

struct RenderOutput {
    Image image;         // C channels, unclamped
    Image accum_opacity; // A(x): composited opacity with attributes stripped
    std::vector<std::int32_t> contrib_count; // contributors composited per pixel
};

struct RenderGrads {
    std::vector<float> d_mu;            // 2N
    std::vector<float> d_log_scale;     // 2N
    std::vector<float> d_theta;         // N
    std::vector<float> d_attrs;         // N*C
    std::vector<float> d_opacity_logit; // N
};

// Splats `set` with an external N x channels attribute matrix onto an
// out_h x out_w grid (positions are mapped from the set's own grid).
RenderOutput render(const GaussianSet& set, const float* attrs, int channels, int out_h, int out_w,
                    RenderMode mode = RenderMode::Alpha);

// Gradients of sum_x upstream(x).image(x); attrs_only skips the geometry
// chain (Stage 2: geometry is frozen, only attribute gradients are needed).
RenderGrads render_backward(const GaussianSet& set, const float* attrs, int channels, int out_h,
                            int out_w, RenderMode mode, const Image& upstream,
                            bool attrs_only = false);

// Renders the set's own colors at its native dims.
RenderOutput render_level(const GaussianSet& set, RenderMode mode = RenderMode::Alpha);

} // namespace llgm
