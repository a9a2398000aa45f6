#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "errors.hpp"
#include "losses.hpp"
#include "rng.hpp"

namespace llgm {

namespace {

std::vector<double> luma_plane(const Image& img) {
    const Image lum = img.channels == 1 ? img : luminance(img);
    std::vector<double> out(lum.data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(lum.data[i]);
    return out;
}

std::vector<double> channel_plane(const Image& img, int c) {
    std::vector<double> out(img.pixel_count());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<double>(img.data[i * img.channels + c]);
    return out;
}

} // namespace

double psnr(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw InvalidArgument("psnr: image shapes differ");
    double se = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        se += d * d;
    }
    const double mse = se / static_cast<double>(a.data.size());
    if (mse < 1e-10) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b, bool per_channel) {
    if (!a.same_shape(b)) throw InvalidArgument("ssim: image shapes differ");
    if (per_channel && a.channels > 1) {
        double acc = 0.0;
        for (int c = 0; c < a.channels; ++c) {
            const auto pa = channel_plane(a, c);
            const auto pb = channel_plane(b, c);
            acc += ssim_plane<double>(pa.data(), pb.data(), a.height, a.width);
        }
        return acc / a.channels;
    }
    const auto pa = luma_plane(a);
    const auto pb = luma_plane(b);
    return ssim_plane<double>(pa.data(), pb.data(), a.height, a.width);
}

double loe(const Image& enhanced, const Image& original, std::uint64_t seed) {
    if (!enhanced.same_shape(original)) throw InvalidArgument("loe: image shapes differ");
    Image le = enhanced.channels == 1 ? enhanced : luminance(enhanced);
    Image lo = original.channels == 1 ? original : luminance(original);
    const int longest = std::max(le.height, le.width);
    if (longest > 100) {
        const double scale = 100.0 / longest;
        const int nh = std::max(1, static_cast<int>(std::lround(le.height * scale)));
        const int nw = std::max(1, static_cast<int>(std::lround(le.width * scale)));
        le = resize_bilinear(le, nh, nw);
        lo = resize_bilinear(lo, nh, nw);
    }
    const std::size_t n = le.pixel_count();
    if (n < 1) throw InvalidArgument("loe: empty image");
    constexpr int kSamples = 500;
    Rng rng = Rng(seed).fork("loe");
    std::int64_t flips = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const float ei = le.data[i];
        const float oi = lo.data[i];
        for (int s = 0; s < kSamples; ++s) {
            const auto j = static_cast<std::size_t>(rng.next_below(n));
            const bool order_e = ei > le.data[j];
            const bool order_o = oi > lo.data[j];
            flips += (order_e != order_o) ? 1 : 0;
        }
    }
    return static_cast<double>(flips) / static_cast<double>(n);
}

double discrete_entropy(const Image& img) {
    const Image lum = img.channels == 1 ? img : luminance(img);
    std::vector<std::int64_t> hist(256, 0);
    for (const float v : lum.data) {
        const long bin = std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f);
        ++hist[static_cast<std::size_t>(std::clamp<long>(bin, 0, 255))];
    }
    const double total = static_cast<double>(lum.data.size());
    double h = 0.0;
    for (const std::int64_t c : hist) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / total;
        h -= p * std::log2(p);
    }
    return h;
}

double eme(const Image& img, int block) {
    if (block < 1) throw InvalidArgument("eme: block size must be positive");
    const Image lum = img.channels == 1 ? img : luminance(img);
    constexpr double kDelta = 1e-4;
    double acc = 0.0;
    std::int64_t blocks = 0;
    for (int by = 0; by < lum.height; by += block) {
        for (int bx = 0; bx < lum.width; bx += block) {
            const int ey = std::min(by + block, lum.height);
            const int ex = std::min(bx + block, lum.width);
            float lo = lum.at(by, bx, 0);
            float hi = lo;
            for (int y = by; y < ey; ++y)
                for (int x = bx; x < ex; ++x) {
                    const float v = lum.at(y, x, 0);
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
            acc += 20.0 * std::log10((static_cast<double>(hi) + kDelta) / (static_cast<double>(lo) + kDelta));
            ++blocks;
        }
    }
    return blocks > 0 ? acc / static_cast<double>(blocks) : 0.0;
}

MetricsReport evaluate(const Image& pred, const Image* ref, std::uint64_t seed) {
    MetricsReport r;
    r.de = discrete_entropy(pred);
    r.eme = eme(pred);
    if (ref != nullptr) {
        r.psnr = psnr(pred, *ref);
        r.ssim = ssim(pred, *ref);
        r.loe = loe(pred, *ref, seed);
    }
    return r;
}

} // namespace llgm
