#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "enhancer_kernels.hpp"
#include "rasterizer_kernels.hpp"
#include "rng.hpp"

namespace llgm {
namespace {

struct DScene {
    int n = 0, channels = 0, level_h = 0, level_w = 0;
    std::vector<double> mu, log_scale, theta, opacity_logit, attrs;

    raster::SceneView<double> view() const {
        raster::SceneView<double> v;
        v.count = n;
        v.channels = channels;
        v.level_h = level_h;
        v.level_w = level_w;
        v.mu = mu.data();
        v.log_scale = log_scale.data();
        v.theta = theta.data();
        v.opacity_logit = opacity_logit.data();
        v.attrs = attrs.data();
        return v;
    }
};

// Smooth by construction: every 3-sigma box covers the whole render with
// margin, so no truncation kink lies within +/- h of any parameter, and
// transmittance stays above the early-exit threshold.
DScene smooth_scene(Rng& rng, int n, int c, int level_h, int level_w, int out_h, int out_w) {
    DScene s;
    s.n = n;
    s.channels = c;
    s.level_h = level_h;
    s.level_w = level_w;
    const double fx = static_cast<double>(out_w) / level_w;
    const double fy = static_cast<double>(out_h) / level_h;
    const double reach = 0.7 * std::max(out_h, out_w) + 0.5 * std::max(fx, fy) + 1.0;
    const double smin = reach / (3.0 * std::min(fx, fy));
    for (int i = 0; i < n; ++i) {
        s.mu.push_back(rng.uniform(0.3 * (level_w - 1), 0.7 * (level_w - 1)));
        s.mu.push_back(rng.uniform(0.3 * (level_h - 1), 0.7 * (level_h - 1)));
        s.log_scale.push_back(rng.uniform(std::log(smin), std::log(smin * 1.4)));
        s.log_scale.push_back(rng.uniform(std::log(smin), std::log(smin * 1.4)));
        s.theta.push_back(rng.uniform(-M_PI, M_PI));
        s.opacity_logit.push_back(rng.uniform(-1.0, 1.2));
        for (int k = 0; k < c; ++k) s.attrs.push_back(rng.uniform(0.1, 0.9));
    }
    return s;
}

double weighted_render_loss(const DScene& s, int out_h, int out_w, raster::Mode mode,
                            const std::vector<double>& upstream) {
    raster::ForwardBuffers<double> buf;
    raster::render_scene(s.view(), out_h, out_w, mode, buf);
    double loss = 0.0;
    for (std::size_t i = 0; i < buf.image.size(); ++i) loss += upstream[i] * buf.image[i];
    return loss;
}

// Worst effective error between analytic and central-difference gradients;
// differences under the absolute floor are ignored.
class ErrorTracker {
public:
    void add(double analytic, double fd) {
        const double diff = std::abs(analytic - fd);
        if (diff < 1e-5) return;
        worst_ = std::max(worst_, diff / std::max(std::abs(analytic), std::abs(fd)));
    }
    double worst() const { return worst_; }

private:
    double worst_ = 0.0;
};

void check_render_class(DScene& s, std::vector<double>& params, const std::vector<double>& analytic,
                        int out_h, int out_w, raster::Mode mode, const std::vector<double>& upstream,
                        double h, ErrorTracker& tracker) {
    for (std::size_t j = 0; j < params.size(); ++j) {
        const double saved = params[j];
        params[j] = saved + h;
        const double lp = weighted_render_loss(s, out_h, out_w, mode, upstream);
        params[j] = saved - h;
        const double lm = weighted_render_loss(s, out_h, out_w, mode, upstream);
        params[j] = saved;
        tracker.add(analytic[j], (lp - lm) / (2 * h));
    }
}

struct ChainSetup {
    static constexpr int kH = 8, kW = 8, kN = 4, kAtoms = 4, kOrder = 3;
    std::vector<double> mu, log_scale, theta, opacity;
    std::vector<double> dict, img, target, params;
    std::vector<raster::Splat<double>> splats;
    raster::TileLists tiles;
    enh::ChainConfig<double> cfg;

    raster::SceneView<double> view() const {
        raster::SceneView<double> v;
        v.count = kN;
        v.channels = kAtoms;
        v.level_h = kH;
        v.level_w = kW;
        v.mu = mu.data();
        v.log_scale = log_scale.data();
        v.theta = theta.data();
        v.opacity_logit = opacity.data();
        return v;
    }

    explicit ChainSetup(Rng& rng) {
        mu = {1.5, 2.0, 5.0, 2.5, 2.0, 5.5, 6.0, 6.0};
        for (int i = 0; i < kN; ++i) {
            log_scale.push_back(std::log(rng.uniform(1.2, 2.2)));
            log_scale.push_back(std::log(rng.uniform(1.2, 2.2)));
            theta.push_back(rng.uniform(-1.5, 1.5));
            opacity.push_back(rng.uniform(0.2, 1.2));
        }
        dict.assign(static_cast<std::size_t>(kAtoms) * kOrder, 0.0);
        for (int i = kOrder; i < kAtoms * kOrder; ++i) dict[i] = rng.uniform(-0.4, 0.4);
        img.resize(static_cast<std::size_t>(kH) * kW * 3);
        target.resize(img.size());
        for (double& v : img) v = rng.uniform(0.05, 0.6);
        for (double& v : target) v = rng.uniform(0.1, 0.9);
        params.resize(static_cast<std::size_t>(kN) * kAtoms + 3);
        for (std::size_t i = 0; i + 3 < params.size(); ++i) params[i] = rng.uniform(-1.0, 1.0);
        params[params.size() - 3] = 0.01;
        params[params.size() - 2] = 0.03;
        params[params.size() - 1] = 0.05;
        raster::prepare_splats(view(), kH, kW, splats);
        raster::build_tile_lists(splats, kH, kW, tiles);
    }

    double eval(const std::vector<double>& p) const {
        enh::ChainBuffers<double> buf;
        enh::enhance_chain<double>(view(), splats, tiles, p.data(),
                                   p.data() + static_cast<std::size_t>(kN) * kAtoms, dict.data(),
                                   kAtoms, kOrder, img.data(), target.data(), kH, kW, cfg, buf,
                                   nullptr, nullptr);
        return buf.total;
    }
};

} // namespace

GradcheckReport run_gradcheck(std::uint64_t seed) {
    GradcheckReport report;
    const double h = 1e-3;

    ErrorTracker mu_err, scale_err, theta_err, attr_err, opacity_err;

    Rng rng(seed);
    struct Case {
        int level_h, level_w, out_h, out_w;
    };
    // Native resolution plus a level-to-render scale change.
    const Case cases[] = {{8, 8, 8, 8}, {4, 6, 8, 9}};
    int case_idx = 0;
    for (const Case& c : cases) {
        Rng case_rng = rng.fork("case" + std::to_string(case_idx++));
        Rng scene_rng = case_rng.fork("scene");
        DScene s = smooth_scene(scene_rng, 5, 3, c.level_h, c.level_w, c.out_h, c.out_w);
        for (raster::Mode mode : {raster::Mode::Alpha, raster::Mode::Sum}) {
            Rng up_rng = case_rng.fork(mode == raster::Mode::Alpha ? "up-alpha" : "up-sum");
            std::vector<double> upstream(static_cast<std::size_t>(c.out_h) * c.out_w * 3);
            for (double& u : upstream) u = up_rng.uniform(-1.0, 1.0);

            raster::GradBuffers<double> grads;
            raster::render_scene_backward(s.view(), c.out_h, c.out_w, mode, upstream.data(), false,
                                          grads);
            check_render_class(s, s.mu, grads.d_mu, c.out_h, c.out_w, mode, upstream, h, mu_err);
            check_render_class(s, s.log_scale, grads.d_log_scale, c.out_h, c.out_w, mode, upstream,
                               h, scale_err);
            check_render_class(s, s.theta, grads.d_theta, c.out_h, c.out_w, mode, upstream, h,
                               theta_err);
            check_render_class(s, s.attrs, grads.d_attrs, c.out_h, c.out_w, mode, upstream, h,
                               attr_err);
            check_render_class(s, s.opacity_logit, grads.d_opacity_logit, c.out_h, c.out_w, mode,
                               upstream, h, opacity_err);
        }
    }

    ErrorTracker logit_err, bias_err;
    {
        Rng chain_rng = rng.fork("chain");
        ChainSetup chain(chain_rng);
        std::vector<double> grads(chain.params.size(), 0.0);
        enh::ChainBuffers<double> buf;
        const std::size_t logit_count =
            static_cast<std::size_t>(ChainSetup::kN) * ChainSetup::kAtoms;
        enh::enhance_chain<double>(chain.view(), chain.splats, chain.tiles, chain.params.data(),
                                   chain.params.data() + logit_count, chain.dict.data(),
                                   ChainSetup::kAtoms, ChainSetup::kOrder, chain.img.data(),
                                   chain.target.data(), ChainSetup::kH, ChainSetup::kW, chain.cfg,
                                   buf, grads.data(), grads.data() + logit_count);
        // Smaller step than the render check: the chain's L1-style terms put
        // kinks wherever an absolute difference crosses zero, and a narrow
        // step keeps central differences inside one smooth piece. Double
        // precision leaves cancellation noise far below the error floor.
        const double step = 1e-5;
        std::vector<double> probe = chain.params;
        for (std::size_t j = 0; j < probe.size(); ++j) {
            probe[j] = chain.params[j] + step;
            const double lp = chain.eval(probe);
            probe[j] = chain.params[j] - step;
            const double lm = chain.eval(probe);
            probe[j] = chain.params[j];
            const double fd = (lp - lm) / (2 * step);
            (j < logit_count ? logit_err : bias_err).add(grads[j], fd);
        }
    }

    auto emit = [&](const char* name, const ErrorTracker& t) {
        GradcheckClass c;
        c.name = name;
        c.max_error = t.worst();
        c.pass = t.worst() < report.tolerance;
        report.pass = report.pass && c.pass;
        report.classes.push_back(std::move(c));
    };
    emit("mu", mu_err);
    emit("log_scale", scale_err);
    emit("theta", theta_err);
    emit("color", attr_err);
    emit("opacity_logit", opacity_err);
    emit("mix_logits", logit_err);
    emit("mix_bias", bias_err);
    return report;
}

} // namespace llgm
