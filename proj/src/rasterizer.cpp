#include "rasterizer.hpp"

#include "errors.hpp"
#include "rasterizer_kernels.hpp"

namespace llgm {

namespace {

raster::SceneView<float> make_view(const GaussianSet& set, const float* attrs, int channels) {
    if (channels < 1) throw InvalidArgument("render: channels must be >= 1");
    if (set.height < 1 || set.width < 1) throw InvalidArgument("render: set has no raster dims");
    raster::SceneView<float> v;
    v.count = set.count;
    v.channels = channels;
    v.level_h = set.height;
    v.level_w = set.width;
    v.mu = set.mu.data();
    v.log_scale = set.log_scale.data();
    v.theta = set.theta.data();
    v.opacity_logit = set.opacity_logit.data();
    v.attrs = attrs;
    return v;
}

raster::Mode to_kernel(RenderMode m) {
    return m == RenderMode::Alpha ? raster::Mode::Alpha : raster::Mode::Sum;
}

} // namespace

RenderOutput render(const GaussianSet& set, const float* attrs, int channels, int out_h, int out_w,
                    RenderMode mode) {
    if (out_h < 1 || out_w < 1) throw InvalidArgument("render: dims must be >= 1x1");
    const raster::SceneView<float> view = make_view(set, attrs, channels);
    raster::ForwardBuffers<float> buf;
    raster::render_scene(view, out_h, out_w, to_kernel(mode), buf);

    RenderOutput out;
    out.image = Image(out_h, out_w, channels);
    out.image.data = std::move(buf.image);
    out.accum_opacity = Image(out_h, out_w, 1);
    out.accum_opacity.data = std::move(buf.accum);
    out.contrib_count = std::move(buf.contrib);
    return out;
}

RenderGrads render_backward(const GaussianSet& set, const float* attrs, int channels, int out_h,
                            int out_w, RenderMode mode, const Image& upstream, bool attrs_only) {
    if (upstream.height != out_h || upstream.width != out_w || upstream.channels != channels)
        throw InvalidArgument("render_backward: upstream shape mismatch");
    const raster::SceneView<float> view = make_view(set, attrs, channels);
    raster::GradBuffers<float> buf;
    raster::render_scene_backward(view, out_h, out_w, to_kernel(mode), upstream.data.data(),
                                  attrs_only, buf);
    RenderGrads g;
    g.d_mu = std::move(buf.d_mu);
    g.d_log_scale = std::move(buf.d_log_scale);
    g.d_theta = std::move(buf.d_theta);
    g.d_attrs = std::move(buf.d_attrs);
    g.d_opacity_logit = std::move(buf.d_opacity_logit);
    return g;
}

RenderOutput render_level(const GaussianSet& set, RenderMode mode) {
    if (set.channels < 1) throw InvalidArgument("render_level: set has no colors");
    return render(set, set.color.data(), set.channels, set.height, set.width, mode);
}

} // namespace llgm
