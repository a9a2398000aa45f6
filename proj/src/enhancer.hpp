#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dictionary.hpp"
#include "gaussians.hpp"
#include "image.hpp"

namespace llgm {

struct EnhanceConfig {
    int iterations = 50000;
    double lr = 1e-3;
    double min_lr_fraction = 0.05; // cosine floor as a fraction of lr
    double e_target = 0.6;         // desired mean exposure
    double blur_sigma = 0.0;       // exposure-reference blur; 0 = 0.05*min(H, W)
    double eps = 1e-3;             // exposure-reference denominator guard
    int patch = 16;                // exposure-loss patch size
    // target, spatial, exposure, sparsity, gain-smoothness, contrast
    std::array<double, 6> weights{0.01, 1.0, 6.0, 0.01, 3.0, 0.4};
    std::uint64_t seed = 0;
    std::string log_csv; // per-iteration loss trace when non-empty
};

// Per-pixel curve parameters plus the resulting multiplicative gain and the
// global channel bias.
struct GainField {
    Image gamma;
    Image eta;
    std::array<float, 3> bias{0.0f, 0.0f, 0.0f};
};

struct SplatWeights {
    Image omega; // normalized per-pixel atom weights, one channel per atom
    Image accum; // accumulated opacity before normalization
};

struct LossTerms {
    float total = 0.0f;
    float target = 0.0f;
    float spatial = 0.0f;
    float exposure = 0.0f;
    float sparsity = 0.0f;
    float smooth = 0.0f;
    float contrast = 0.0f;
};

struct EnhanceResult {
    Image output;
    GainField gain;
    Image omega;
    Image accum;
    std::vector<float> loss_trace;
    LossTerms final_terms;
};

// Collapses a multi-scale model into one frozen full-resolution set: means
// and covariances are mapped into the finest grid and re-expressed as
// scale/rotation, preserving level order. The finest level passes through
// unchanged.
GaussianSet flatten_model(const Model& model);

// 1 - luminance; bright pixels need little correction.
Image attention_map(const Image& img);

// Seeds per-primitive mixing logits from the attention map sampled at each
// mean: dark regions favor the curve atoms, bright regions the identity atom.
void init_logits(GaussianSet& set, const Image& img, const Dictionary& dict);

// Splats softmaxed logits through the frozen geometry and normalizes by the
// accumulated opacity; uncovered pixels fall back to the identity atom.
SplatWeights splat_weights(const GaussianSet& set, int out_h, int out_w);

// Mixes dictionary rows with the per-pixel weights and turns the curve
// response into a multiplicative gain.
GainField synthesize_gain(const Image& omega, const Dictionary& dict, const Image& img);

// clamp(img * eta + bias)
Image compose_output(const Image& img, const GainField& gain);

// Exposure-corrected reference: clamp(img * e_target / (blur(luminance) + eps)).
Image exposure_target(const Image& img, double e_target, double blur_sigma, double eps = 1e-3);

// Forward evaluation of the six-term objective for a set with logits.
LossTerms hybrid_loss(const GaussianSet& set, const Dictionary& dict, const Image& img,
                      const Image& target, const EnhanceConfig& cfg,
                      const std::array<float, 3>& bias = {0.0f, 0.0f, 0.0f});

// Per-image optimization of the mixing logits and bias over the frozen set.
EnhanceResult enhance(const Image& img, GaussianSet& set, const Dictionary& dict,
                      const EnhanceConfig& cfg);
EnhanceResult enhance(const Image& img, const Model& model, const Dictionary& dict,
                      const EnhanceConfig& cfg);

} // namespace llgm
