#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gaussians.hpp"
#include "image.hpp"

namespace llgm {

struct ReconConfig {
    int num_primitives = 70000;
    int scales = 2;                                // pyramid levels, coarse to fine
    int iterations = 20000;                        // total, split across levels
    double lr = 0.01;
    double ssim_weight = 0.7;                      // lambda in the photometric loss
    std::vector<double> level_fractions = {0.25, 0.75}; // primitive share per level
    std::uint64_t seed = 0;
    std::string log_csv;                           // optional per-iteration trace
};

// Primitive share per level when none is given: proportional to 3^s, which
// reproduces the stock 0.25/0.75 split at two scales.
std::vector<double> default_level_fractions(int scales);

struct FitResult {
    Model model;                     // every level frozen
    Image reconstruction;            // clamped cascaded sum at input dims
    double psnr = 0.0;               // reconstruction vs input
    std::vector<float> loss_trace;   // per iteration, level order
    std::vector<int> level_of_iter;  // same length as loss_trace
};

// Raster dims per level: level s is ceil(dim / 2^(S-1-s)); the last level
// matches the input.
std::vector<std::pair<int, int>> pyramid_level_dims(int height, int width, int scales);

// Per-level regression targets. Level s is the input resized to the level
// dims minus every finished level's render resized to the same dims
// (unclamped residual). Returns targets for levels 0..finished.size(), capped
// at `scales`.
std::vector<Image> build_pyramid_targets(const Image& img, int scales,
                                         const std::vector<Image>& finished_renders);

// Jittered-grid initialization over the target raster: isotropic scale
// 0.5*spacing, zero rotation, colors sampled bilinearly from the target,
// opacity logit 0.
GaussianSet init_gaussians(const Image& target, int count, std::uint64_t seed);

// Optimizes one level against its target in place (Adam over all parameter
// classes, photometric loss). Appends one loss value per iteration to trace;
// when psnr_trace is non-null the per-iteration psnr of the level render
// against its target is recorded too. Refuses frozen sets.
void fit_level(GaussianSet& set, const Image& target, int iterations, double lr,
               double ssim_weight, std::vector<float>& trace,
               std::vector<float>* psnr_trace = nullptr);

// Unclamped sum of every level's render upsampled to height x width.
Image assemble_reconstruction(const Model& model, int height, int width);

// Full multi-scale fit: sequential coarse-to-fine residual regression.
FitResult fit(const Image& img, const ReconConfig& cfg);

} // namespace llgm
