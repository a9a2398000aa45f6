#include "reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "errors.hpp"
#include "losses.hpp"
#include "metrics.hpp"
#include "optim.hpp"
#include "rasterizer.hpp"
#include "rng.hpp"

namespace llgm {

namespace {

constexpr float kMinLogScale = -1.2039728f; // log(0.3): smallest useful footprint

// Flat parameter order: mu, log_scale, theta, color, opacity_logit.
std::size_t param_count(const GaussianSet& set) {
    return static_cast<std::size_t>(set.count) * (6 + set.channels);
}

void pack_params(const GaussianSet& set, std::vector<float>& p) {
    p.clear();
    p.reserve(param_count(set));
    p.insert(p.end(), set.mu.begin(), set.mu.end());
    p.insert(p.end(), set.log_scale.begin(), set.log_scale.end());
    p.insert(p.end(), set.theta.begin(), set.theta.end());
    p.insert(p.end(), set.color.begin(), set.color.end());
    p.insert(p.end(), set.opacity_logit.begin(), set.opacity_logit.end());
}

void unpack_params(const std::vector<float>& p, GaussianSet& set) {
    const float* src = p.data();
    auto take = [&src](std::vector<float>& dst) {
        std::copy(src, src + dst.size(), dst.begin());
        src += dst.size();
    };
    take(set.mu);
    take(set.log_scale);
    take(set.theta);
    take(set.color);
    take(set.opacity_logit);
}

Image subtract(const Image& a, const Image& b) {
    Image out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

} // namespace

std::vector<double> default_level_fractions(int scales) {
    if (scales < 1) throw InvalidArgument("pyramid: scales must be >= 1");
    std::vector<double> f(scales);
    double sum = 0.0;
    for (int s = 0; s < scales; ++s) sum += (f[s] = std::pow(3.0, s));
    for (double& v : f) v /= sum;
    return f;
}

std::vector<std::pair<int, int>> pyramid_level_dims(int height, int width, int scales) {
    if (scales < 1) throw InvalidArgument("pyramid: scales must be >= 1");
    if (height < 1 || width < 1) throw InvalidArgument("pyramid: empty raster");
    std::vector<std::pair<int, int>> dims;
    dims.reserve(scales);
    for (int s = 0; s < scales; ++s) {
        const int div = 1 << (scales - 1 - s);
        dims.emplace_back((height + div - 1) / div, (width + div - 1) / div);
    }
    return dims;
}

std::vector<Image> build_pyramid_targets(const Image& img, int scales,
                                         const std::vector<Image>& finished_renders) {
    const auto dims = pyramid_level_dims(img.height, img.width, scales);
    const int n = std::min<int>(scales, static_cast<int>(finished_renders.size()) + 1);
    std::vector<Image> targets;
    targets.reserve(n);
    for (int s = 0; s < n; ++s) {
        Image t = resize_bilinear(img, dims[s].first, dims[s].second);
        for (int j = 0; j < s; ++j) {
            if (finished_renders[j].channels != img.channels)
                throw InvalidArgument("pyramid: render channel mismatch");
            t = subtract(t, resize_bilinear(finished_renders[j], dims[s].first, dims[s].second));
        }
        targets.push_back(std::move(t));
    }
    return targets;
}

GaussianSet init_gaussians(const Image& target, int count, std::uint64_t seed) {
    if (count < 1) throw InvalidArgument("init: need at least one primitive");
    if (target.height < 1 || target.width < 1) throw InvalidArgument("init: empty target");
    const int H = target.height, W = target.width;

    GaussianSet set;
    set.height = H;
    set.width = W;
    set.resize(count, target.channels);

    const double spacing = std::sqrt(static_cast<double>(H) * W / count);
    const int nx = std::max(1, static_cast<int>(std::lround(std::sqrt(
                                    static_cast<double>(count) * W / H))));
    const int ny = (count + nx - 1) / nx;
    const double cw = static_cast<double>(W) / nx;
    const double ch = static_cast<double>(H) / ny;
    const double jitter = 0.25 * spacing;
    const float ls = std::max(kMinLogScale, static_cast<float>(std::log(0.5 * spacing)));

    Rng rng = Rng(seed).fork("init");
    for (int i = 0; i < count; ++i) {
        const int gx = i % nx, gy = i / nx;
        const double x = (gx + 0.5) * cw - 0.5 + rng.uniform(-jitter, jitter);
        const double y = (gy + 0.5) * ch - 0.5 + rng.uniform(-jitter, jitter);
        const float mx = std::clamp(static_cast<float>(x), 0.0f, static_cast<float>(W - 1));
        const float my = std::clamp(static_cast<float>(y), 0.0f, static_cast<float>(H - 1));
        set.mu[2 * i] = mx;
        set.mu[2 * i + 1] = my;
        set.log_scale[2 * i] = ls;
        set.log_scale[2 * i + 1] = ls;
        sample_bilinear(target, mx, my, &set.color[static_cast<std::size_t>(i) * set.channels]);
    }
    return set;
}

void fit_level(GaussianSet& set, const Image& target, int iterations, double lr,
               double ssim_weight, std::vector<float>& trace, std::vector<float>* psnr_trace) {
    if (set.frozen) throw IncompatibleError("fit: level is frozen, geometry updates refused");
    if (set.height != target.height || set.width != target.width ||
        set.channels != target.channels)
        throw InvalidArgument("fit: target does not match the level raster");
    if (iterations < 0) throw InvalidArgument("fit: negative iteration count");
    if (lr <= 0.0) throw InvalidArgument("fit: learning rate must be positive");
    if (ssim_weight < 0.0 || ssim_weight > 1.0)
        throw InvalidArgument("fit: ssim weight outside [0, 1]");

    std::vector<float> params;
    pack_params(set, params);
    AdamConfig cfg;
    cfg.lr = lr; // initial rate; cosine-annealed to 5% over the level's budget
    cfg.schedule = LrSchedule::Cosine;
    cfg.min_fraction = 0.05;
    cfg.total_steps = std::max(iterations, 1);
    Adam adam(params.size(), cfg);

    const std::size_t n = static_cast<std::size_t>(set.count);
    std::vector<float> grads(params.size());
    std::vector<float> dloss;
    Image upstream(set.height, set.width, set.channels);

    for (int it = 0; it < iterations; ++it) {
        RenderOutput out = render_level(set, RenderMode::Alpha);
        const float loss =
            photometric_loss<float>(out.image.data.data(), target.data.data(), set.height,
                                    set.width, set.channels, static_cast<float>(ssim_weight),
                                    &dloss);
        trace.push_back(loss);
        if (psnr_trace) psnr_trace->push_back(static_cast<float>(psnr(out.image, target)));

        upstream.data = dloss;
        RenderGrads g = render_backward(set, set.color.data(), set.channels, set.height,
                                        set.width, RenderMode::Alpha, upstream);
        float* dst = grads.data();
        auto put = [&dst](const std::vector<float>& src) {
            std::copy(src.begin(), src.end(), dst);
            dst += src.size();
        };
        put(g.d_mu);
        put(g.d_log_scale);
        put(g.d_theta);
        put(g.d_attrs);
        put(g.d_opacity_logit);

        adam.step(params.data(), grads.data());
        for (std::size_t i = 2 * n; i < 4 * n; ++i) // scale floor projection
            params[i] = std::max(params[i], kMinLogScale);
        unpack_params(params, set);
    }
}

Image assemble_reconstruction(const Model& model, int height, int width) {
    if (model.levels.empty()) throw InvalidArgument("reconstruction: empty model");
    Image acc(height, width, model.levels.front().channels);
    for (const GaussianSet& level : model.levels) {
        const Image up =
            resize_bilinear(render_level(level, RenderMode::Alpha).image, height, width);
        if (up.channels != acc.channels)
            throw InvalidArgument("reconstruction: level channel mismatch");
        for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += up.data[i];
    }
    return acc;
}

FitResult fit(const Image& img, const ReconConfig& cfg) {
    if (img.height < 1 || img.width < 1 || img.channels < 1)
        throw InvalidArgument("fit: empty input");
    if (cfg.scales < 1) throw InvalidArgument("fit: scales must be >= 1");
    const std::vector<double> fractions =
        cfg.level_fractions.empty() ? default_level_fractions(cfg.scales) : cfg.level_fractions;
    if (static_cast<int>(fractions.size()) != cfg.scales)
        throw InvalidArgument("fit: one primitive fraction per level required");
    double frac_sum = 0.0;
    for (const double f : fractions) {
        if (f <= 0.0) throw InvalidArgument("fit: level fractions must be positive");
        frac_sum += f;
    }
    if (std::abs(frac_sum - 1.0) > 1e-9)
        throw InvalidArgument("fit: level fractions must sum to 1");
    if (cfg.num_primitives < cfg.scales)
        throw InvalidArgument("fit: need at least one primitive per level");
    if (cfg.iterations < 0) throw InvalidArgument("fit: negative iteration count");

    // Primitive and iteration budgets per level, proportional to the fractions.
    std::vector<int> counts(cfg.scales), iters(cfg.scales);
    int used_n = 0, used_it = 0;
    for (int s = 0; s < cfg.scales; ++s) {
        if (s + 1 == cfg.scales) {
            counts[s] = cfg.num_primitives - used_n;
            iters[s] = cfg.iterations - used_it;
        } else {
            counts[s] =
                std::max(1, static_cast<int>(std::lround(fractions[s] * cfg.num_primitives)));
            iters[s] = static_cast<int>(std::lround(fractions[s] * cfg.iterations));
        }
        used_n += counts[s];
        used_it += iters[s];
    }
    if (counts.back() < 1) throw InvalidArgument("fit: level fractions starve the last level");
    iters.back() = std::max(0, iters.back());

    std::ofstream csv;
    if (!cfg.log_csv.empty()) {
        csv.open(cfg.log_csv);
        if (!csv) throw IoError("fit: cannot open log file: " + cfg.log_csv);
        csv << "iteration,loss,psnr\n";
    }

    const auto dims = pyramid_level_dims(img.height, img.width, cfg.scales);
    FitResult result;
    std::vector<Image> finished; // native-resolution renders of frozen levels
    Rng root(cfg.seed);
    for (int s = 0; s < cfg.scales; ++s) {
        Image target = resize_bilinear(img, dims[s].first, dims[s].second);
        for (int j = 0; j < s; ++j)
            target = subtract(target, resize_bilinear(finished[j], dims[s].first, dims[s].second));

        GaussianSet level =
            init_gaussians(target, counts[s], root.fork("level" + std::to_string(s)).next_u64());
        std::vector<float> trace, psnr_trace;
        fit_level(level, target, iters[s], cfg.lr, cfg.ssim_weight, trace,
                  csv.is_open() ? &psnr_trace : nullptr);

        for (std::size_t i = 0; i < trace.size(); ++i) {
            if (csv.is_open())
                csv << result.loss_trace.size() << ',' << trace[i] << ',' << psnr_trace[i] << '\n';
            result.loss_trace.push_back(trace[i]);
            result.level_of_iter.push_back(s);
        }

        level.frozen = true;
        finished.push_back(render_level(level, RenderMode::Alpha).image);
        result.model.levels.push_back(std::move(level));
    }

    Image recon = assemble_reconstruction(result.model, img.height, img.width);
    clamp01(recon);
    result.psnr = psnr(recon, img);
    result.reconstruction = std::move(recon);
    return result;
}

} // namespace llgm
