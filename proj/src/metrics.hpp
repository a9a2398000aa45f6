#pragma once

#include <cstdint>
#include <optional>

#include "image.hpp"

namespace llgm {

struct MetricsReport {
    std::optional<double> psnr; // full-reference entries absent without a reference
    std::optional<double> ssim;
    std::optional<double> loe;
    double de = 0.0;
    double eme = 0.0;
};

// 10*log10(1/MSE) over all values, capped at 99 dB (MSE < 1e-10 counts as 99).
double psnr(const Image& a, const Image& b);

// Mean local SSIM, 11x11 Gaussian window sigma 1.5, C1=0.01^2, C2=0.03^2,
// dynamic range 1. 3-channel images are compared on luminance unless
// per_channel is set (then per-channel scores are averaged).
double ssim(const Image& a, const Image& b, bool per_channel = false);

// Lightness order error: luminances downsampled to at most 100x100, then for
// every pixel the relative order against 500 seeded random pixels is compared
// between original and enhanced; returns mean flips per pixel (0..500).
double loe(const Image& enhanced, const Image& original, std::uint64_t seed = 0);

// Shannon entropy (bits) of the 256-bin histogram of round(L*255).
double discrete_entropy(const Image& img);

// Weber local contrast: mean over block x block tiles (ragged edges use true
// extents) of 20*log10((max+d)/(min+d)) on luminance, d = 1e-4.
double eme(const Image& img, int block = 8);

// Full report; psnr/ssim/loe only when a reference is supplied.
MetricsReport evaluate(const Image& pred, const Image* ref, std::uint64_t seed = 0);

} // namespace llgm
