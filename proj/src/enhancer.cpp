#include "enhancer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <utility>

#include "enhancer_kernels.hpp"
#include "errors.hpp"
#include "optim.hpp"

namespace llgm {
namespace {

constexpr float kInitTau = 2.0f;   // initial logit mass
constexpr float kBiasClamp = 0.1f; // bias projection bound

raster::SceneView<float> make_view(const GaussianSet& set) {
    raster::SceneView<float> v;
    v.count = set.count;
    v.level_h = set.height;
    v.level_w = set.width;
    v.mu = set.mu.data();
    v.log_scale = set.log_scale.data();
    v.theta = set.theta.data();
    v.opacity_logit = set.opacity_logit.data();
    return v;
}

void require_logits(const GaussianSet& set, const char* who) {
    if (!set.frozen) throw InvalidArgument(std::string(who) + ": set must be frozen");
    if (!set.has_enh_logits()) throw InvalidArgument(std::string(who) + ": set has no mixing logits");
    if (set.enh_logits.size() != static_cast<std::size_t>(set.atom_count) * set.count)
        throw InvalidArgument(std::string(who) + ": logits size mismatch");
}

enh::ChainConfig<float> chain_config(const EnhanceConfig& cfg) {
    enh::ChainConfig<float> c;
    c.e_target = static_cast<float>(cfg.e_target);
    c.patch = cfg.patch;
    c.w_target = static_cast<float>(cfg.weights[0]);
    c.w_spa = static_cast<float>(cfg.weights[1]);
    c.w_exp = static_cast<float>(cfg.weights[2]);
    c.w_sparse = static_cast<float>(cfg.weights[3]);
    c.w_tv = static_cast<float>(cfg.weights[4]);
    c.w_cont = static_cast<float>(cfg.weights[5]);
    return c;
}

LossTerms terms_from(const enh::ChainBuffers<float>& buf) {
    LossTerms t;
    t.total = buf.total;
    t.target = buf.terms[0];
    t.spatial = buf.terms[1];
    t.exposure = buf.terms[2];
    t.sparsity = buf.terms[3];
    t.smooth = buf.terms[4];
    t.contrast = buf.terms[5];
    return t;
}

void validate_enhance_config(const EnhanceConfig& cfg) {
    if (cfg.iterations < 0) throw InvalidArgument("enhance: negative iterations");
    if (!(cfg.lr > 0.0)) throw InvalidArgument("enhance: lr must be positive");
    if (!(cfg.min_lr_fraction >= 0.0 && cfg.min_lr_fraction <= 1.0))
        throw InvalidArgument("enhance: min_lr_fraction must be in [0, 1]");
    if (!(cfg.e_target > 0.0 && cfg.e_target < 1.0))
        throw InvalidArgument("enhance: e_target must be in (0, 1)");
    if (cfg.patch < 1) throw InvalidArgument("enhance: patch must be >= 1");
    for (double w : cfg.weights)
        if (!(w >= 0.0)) throw InvalidArgument("enhance: loss weights must be non-negative");
}

} // namespace

GaussianSet flatten_model(const Model& model) {
    if (model.levels.empty()) throw InvalidArgument("flatten_model: empty model");
    int h = 0, w = 0;
    int total = 0;
    const int channels = model.levels.front().channels;
    for (const GaussianSet& lvl : model.levels) {
        if (!lvl.frozen) throw InvalidArgument("flatten_model: all levels must be frozen");
        if (lvl.channels != channels)
            throw IncompatibleError("flatten_model: levels disagree on channel count");
        h = std::max(h, lvl.height);
        w = std::max(w, lvl.width);
        total += lvl.count;
    }
    GaussianSet out;
    out.height = h;
    out.width = w;
    out.resize(total, channels);
    out.frozen = true;

    int at = 0;
    for (const GaussianSet& lvl : model.levels) {
        const bool native = lvl.height == h && lvl.width == w;
        const double fx = static_cast<double>(w) / lvl.width;
        const double fy = static_cast<double>(h) / lvl.height;
        for (int i = 0; i < lvl.count; ++i, ++at) {
            if (native) {
                out.mu[2 * at] = lvl.mu[2 * i];
                out.mu[2 * at + 1] = lvl.mu[2 * i + 1];
                out.log_scale[2 * at] = lvl.log_scale[2 * i];
                out.log_scale[2 * at + 1] = lvl.log_scale[2 * i + 1];
                out.theta[at] = lvl.theta[i];
            } else {
                // Map the mean into the finest grid and re-express the scaled
                // covariance as scale/rotation via its eigendecomposition.
                out.mu[2 * at] = static_cast<float>((lvl.mu[2 * i] + 0.5) * fx - 0.5);
                out.mu[2 * at + 1] = static_cast<float>((lvl.mu[2 * i + 1] + 0.5) * fy - 0.5);
                const double sx2 = std::exp(2.0 * lvl.log_scale[2 * i]);
                const double sy2 = std::exp(2.0 * lvl.log_scale[2 * i + 1]);
                const double ct = std::cos(lvl.theta[i]), st = std::sin(lvl.theta[i]);
                const double a = (ct * ct * sx2 + st * st * sy2) * fx * fx;
                const double b = (ct * st * (sx2 - sy2)) * fx * fy;
                const double c = (st * st * sx2 + ct * ct * sy2) * fy * fy;
                const double mid = 0.5 * (a + c);
                const double rad = std::sqrt(0.25 * (a - c) * (a - c) + b * b);
                const double lam1 = std::max(mid + rad, 1e-300);
                const double lam2 = std::max((a * c - b * b) / lam1, 1e-300);
                out.log_scale[2 * at] = static_cast<float>(0.5 * std::log(lam1));
                out.log_scale[2 * at + 1] = static_cast<float>(0.5 * std::log(lam2));
                out.theta[at] = static_cast<float>(0.5 * std::atan2(2.0 * b, a - c));
            }
            for (int ch = 0; ch < channels; ++ch)
                out.color[static_cast<std::size_t>(at) * channels + ch] =
                    lvl.color[static_cast<std::size_t>(i) * channels + ch];
            out.opacity_logit[at] = lvl.opacity_logit[i];
        }
    }
    return out;
}

Image attention_map(const Image& img) {
    Image att = luminance(img);
    for (float& v : att.data) v = 1.0f - v;
    return att;
}

void init_logits(GaussianSet& set, const Image& img, const Dictionary& dict) {
    if (!set.frozen) throw InvalidArgument("init_logits: set must be frozen");
    if (img.height != set.height || img.width != set.width)
        throw IncompatibleError("init_logits: image resolution does not match the set");
    const int atoms = dict.rows();
    if (set.has_enh_logits() && set.atom_count != atoms)
        throw IncompatibleError("init_logits: existing logits disagree with dictionary atoms");
    const Image att = attention_map(img);
    set.atom_count = atoms;
    set.enh_logits.assign(static_cast<std::size_t>(atoms) * set.count, 0.0f);
    const int k = atoms - 1;
    for (int i = 0; i < set.count; ++i) {
        float m = 0.0f;
        sample_bilinear(att, set.mu[2 * i], set.mu[2 * i + 1], &m);
        float* row = set.enh_logits.data() + static_cast<std::size_t>(i) * atoms;
        row[0] = (1.0f - m) * kInitTau;
        const float rest = k > 0 ? m * kInitTau / static_cast<float>(k) : 0.0f;
        for (int j = 1; j < atoms; ++j) row[j] = rest;
    }
}

SplatWeights splat_weights(const GaussianSet& set, int out_h, int out_w) {
    require_logits(set, "splat_weights");
    if (out_h < 1 || out_w < 1) throw InvalidArgument("splat_weights: bad output resolution");
    const int atoms = set.atom_count;
    std::vector<float> softmax;
    enh::softmax_rows(set.enh_logits.data(), set.count, atoms, softmax);
    raster::SceneView<float> view = make_view(set);
    view.channels = atoms;
    view.attrs = softmax.data();
    raster::ForwardBuffers<float> fb;
    raster::render_scene(view, out_h, out_w, raster::Mode::Alpha, fb);
    SplatWeights sw;
    sw.omega = Image(out_h, out_w, atoms);
    enh::normalize_weights(fb.image, fb.accum, sw.omega.pixel_count(), atoms, sw.omega.data);
    sw.accum = Image(out_h, out_w, 1);
    sw.accum.data = std::move(fb.accum);
    return sw;
}

GainField synthesize_gain(const Image& omega, const Dictionary& dict, const Image& img) {
    if (omega.height != img.height || omega.width != img.width)
        throw IncompatibleError("synthesize_gain: weight/image resolution mismatch");
    if (omega.channels != dict.rows())
        throw IncompatibleError("synthesize_gain: weight channels disagree with dictionary atoms");
    if (img.channels != 3) throw InvalidArgument("synthesize_gain: expected a 3-channel image");
    GainField gf;
    gf.gamma = Image(img.height, img.width, dict.order);
    enh::mix_curves(omega.data, img.pixel_count(), dict.rows(), dict.atoms.data(), dict.order,
                    gf.gamma.data);
    gf.eta = Image(img.height, img.width, img.channels);
    enh::gain_field(img.data.data(), gf.gamma.data, img.pixel_count(), img.channels, dict.order,
                    gf.eta.data);
    return gf;
}

Image compose_output(const Image& img, const GainField& gain) {
    if (!img.same_shape(gain.eta)) throw IncompatibleError("compose_output: gain/image shape mismatch");
    if (img.channels < 1 || img.channels > 3)
        throw InvalidArgument("compose_output: expected 1-3 channels");
    Image out(img.height, img.width, img.channels);
    enh::compose(img.data.data(), gain.eta.data, gain.bias.data(), img.pixel_count(), img.channels,
                 out.data);
    return out;
}

Image exposure_target(const Image& img, double e_target, double blur_sigma, double eps) {
    if (img.channels != 3) throw InvalidArgument("exposure_target: expected a 3-channel image");
    if (!(e_target > 0.0 && e_target < 1.0))
        throw InvalidArgument("exposure_target: e_target must be in (0, 1)");
    if (!(eps > 0.0)) throw InvalidArgument("exposure_target: eps must be positive");
    float sigma = static_cast<float>(blur_sigma);
    if (sigma <= 0.0f) sigma = 0.05f * static_cast<float>(std::min(img.height, img.width));
    const Image blurred = gaussian_blur(luminance(img), sigma);
    Image out(img.height, img.width, 3);
    const float e = static_cast<float>(e_target);
    const float guard = static_cast<float>(eps);
    for (std::size_t p = 0; p < img.pixel_count(); ++p) {
        const float denom = blurred.data[p] + guard;
        for (int ch = 0; ch < 3; ++ch) {
            const float v = img.data[p * 3 + ch] * e / denom;
            out.data[p * 3 + ch] = std::min(std::max(v, 0.0f), 1.0f);
        }
    }
    return out;
}

LossTerms hybrid_loss(const GaussianSet& set, const Dictionary& dict, const Image& img,
                      const Image& target, const EnhanceConfig& cfg,
                      const std::array<float, 3>& bias) {
    require_logits(set, "hybrid_loss");
    if (set.atom_count != dict.rows())
        throw IncompatibleError("hybrid_loss: set logits disagree with dictionary atoms");
    if (img.channels != 3) throw InvalidArgument("hybrid_loss: expected a 3-channel image");
    if (!img.same_shape(target)) throw IncompatibleError("hybrid_loss: image/target shape mismatch");
    validate_enhance_config(cfg);
    raster::SceneView<float> view = make_view(set);
    view.channels = set.atom_count;
    std::vector<raster::Splat<float>> splats;
    raster::prepare_splats(view, img.height, img.width, splats);
    raster::TileLists tiles;
    raster::build_tile_lists(splats, img.height, img.width, tiles);
    enh::ChainBuffers<float> buf;
    enh::enhance_chain<float>(view, splats, tiles, set.enh_logits.data(), bias.data(),
                              dict.atoms.data(), set.atom_count, dict.order, img.data.data(),
                              target.data.data(), img.height, img.width, chain_config(cfg), buf,
                              nullptr, nullptr);
    return terms_from(buf);
}

EnhanceResult enhance(const Image& img, GaussianSet& set, const Dictionary& dict,
                      const EnhanceConfig& cfg) {
    if (img.channels != 3) throw InvalidArgument("enhance: expected a 3-channel image");
    if (img.height < 1 || img.width < 1) throw InvalidArgument("enhance: empty image");
    if (!set.frozen) throw InvalidArgument("enhance: set must be frozen");
    if (set.count < 1) throw InvalidArgument("enhance: empty set");
    if (set.height != img.height || set.width != img.width)
        throw IncompatibleError("enhance: set resolution does not match the image");
    if (set.has_enh_logits() && set.atom_count != dict.rows())
        throw IncompatibleError("enhance: set logits disagree with dictionary atoms");
    validate_enhance_config(cfg);

    if (!set.has_enh_logits()) init_logits(set, img, dict);

    const int n = set.count;
    const int atoms = set.atom_count;
    const int h = img.height, w = img.width;
    const std::size_t logit_count = static_cast<std::size_t>(n) * atoms;

    const Image target = exposure_target(img, cfg.e_target, cfg.blur_sigma, cfg.eps);
    const enh::ChainConfig<float> ccfg = chain_config(cfg);

    raster::SceneView<float> view = make_view(set);
    view.channels = atoms;
    std::vector<raster::Splat<float>> splats;
    raster::prepare_splats(view, h, w, splats);
    raster::TileLists tiles;
    raster::build_tile_lists(splats, h, w, tiles);

    std::vector<float> params(logit_count + 3, 0.0f);
    std::copy(set.enh_logits.begin(), set.enh_logits.end(), params.begin());
    std::vector<float> grads(logit_count + 3, 0.0f);

    AdamConfig acfg;
    acfg.lr = cfg.lr;
    acfg.schedule = LrSchedule::Cosine;
    acfg.min_fraction = cfg.min_lr_fraction;
    acfg.total_steps = std::max(cfg.iterations, 1);
    Adam adam(params.size(), acfg);

    std::ofstream csv;
    if (!cfg.log_csv.empty()) {
        csv.open(cfg.log_csv);
        if (!csv) throw IoError("enhance: cannot open log file: " + cfg.log_csv);
        csv << "iteration,total,target,spatial,exposure,sparsity,smooth,contrast\n";
    }

    enh::ChainBuffers<float> buf;
    EnhanceResult res;
    res.loss_trace.reserve(static_cast<std::size_t>(cfg.iterations));

    for (int it = 0; it < cfg.iterations; ++it) {
        enh::enhance_chain(view, splats, tiles, params.data(), params.data() + logit_count,
                           dict.atoms.data(), atoms, dict.order, img.data.data(), target.data.data(),
                           h, w, ccfg, buf, grads.data(), grads.data() + logit_count);
        res.loss_trace.push_back(buf.total);
        if (csv)
            csv << it << ',' << buf.total << ',' << buf.terms[0] << ',' << buf.terms[1] << ','
                << buf.terms[2] << ',' << buf.terms[3] << ',' << buf.terms[4] << ',' << buf.terms[5]
                << '\n';
        adam.step(params.data(), grads.data());
        for (std::size_t c = 0; c < 3; ++c)
            params[logit_count + c] =
                std::min(std::max(params[logit_count + c], -kBiasClamp), kBiasClamp);
    }

    enh::enhance_chain<float>(view, splats, tiles, params.data(), params.data() + logit_count,
                              dict.atoms.data(), atoms, dict.order, img.data.data(),
                              target.data.data(), h, w, ccfg, buf, nullptr, nullptr);

    set.enh_logits.assign(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(logit_count));

    res.output = Image(h, w, 3);
    res.output.data = buf.out;
    res.gain.gamma = Image(h, w, dict.order);
    res.gain.gamma.data = buf.gamma;
    res.gain.eta = Image(h, w, 3);
    res.gain.eta.data = buf.eta;
    res.gain.bias = {params[logit_count], params[logit_count + 1], params[logit_count + 2]};
    res.omega = Image(h, w, atoms);
    res.omega.data = buf.omega;
    res.accum = Image(h, w, 1);
    res.accum.data = buf.splat.accum;
    res.final_terms = terms_from(buf);
    return res;
}

EnhanceResult enhance(const Image& img, const Model& model, const Dictionary& dict,
                      const EnhanceConfig& cfg) {
    GaussianSet flat = flatten_model(model);
    if (flat.height != img.height || flat.width != img.width)
        throw IncompatibleError("enhance: model resolution does not match the image");
    return enhance(img, flat, dict, cfg);
}

} // namespace llgm
