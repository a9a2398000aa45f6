#include "image.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"

namespace llgm {

namespace {

// Symmetric reflection (edge pixel repeated): ..., v[1], v[0] | v[0], v[1], ...
int reflect(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -1 - i;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

} // namespace

Image luminance(const Image& img) {
    if (img.channels != 3)
        throw InvalidArgument("luminance: expected 3 channels, got " +
                              std::to_string(img.channels));
    Image out(img.height, img.width, 1);
    const float* src = img.data.data();
    float* dst = out.data.data();
    const std::size_t n = img.pixel_count();
    for (std::size_t i = 0; i < n; ++i) {
        dst[i] = 0.299f * src[3 * i] + 0.587f * src[3 * i + 1] + 0.114f * src[3 * i + 2];
    }
    return out;
}

Image resize_bilinear(const Image& img, int new_h, int new_w) {
    if (new_h < 1 || new_w < 1)
        throw InvalidArgument("resize_bilinear: target dimensions must be >= 1");
    if (new_h == img.height && new_w == img.width) return img;

    Image out(new_h, new_w, img.channels);
    const int C = img.channels;
    const float sy = static_cast<float>(img.height) / static_cast<float>(new_h);
    const float sx = static_cast<float>(img.width) / static_cast<float>(new_w);

    for (int y = 0; y < new_h; ++y) {
        float fy = (static_cast<float>(y) + 0.5f) * sy - 0.5f;
        fy = std::clamp(fy, 0.0f, static_cast<float>(img.height - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const float wy = fy - static_cast<float>(y0);
        for (int x = 0; x < new_w; ++x) {
            float fx = (static_cast<float>(x) + 0.5f) * sx - 0.5f;
            fx = std::clamp(fx, 0.0f, static_cast<float>(img.width - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const float wx = fx - static_cast<float>(x0);
            for (int c = 0; c < C; ++c) {
                const float v00 = img.at(y0, x0, c), v01 = img.at(y0, x1, c);
                const float v10 = img.at(y1, x0, c), v11 = img.at(y1, x1, c);
                const float top = v00 + (v01 - v00) * wx;
                const float bot = v10 + (v11 - v10) * wx;
                out.at(y, x, c) = top + (bot - top) * wy;
            }
        }
    }
    return out;
}

std::vector<float> gaussian_kernel(float sigma) {
    const int radius = static_cast<int>(std::ceil(3.0f * sigma));
    std::vector<float> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * (static_cast<double>(i) * i) / (static_cast<double>(sigma) * sigma));
        k[i + radius] = static_cast<float>(v);
        sum += v;
    }
    for (float& v : k) v = static_cast<float>(v / sum);
    return k;
}

Image gaussian_blur(const Image& img, float sigma) {
    if (!(sigma > 0.0f))
        throw InvalidArgument("gaussian_blur: sigma must be positive");
    const std::vector<float> k = gaussian_kernel(sigma);
    const int radius = static_cast<int>(k.size() / 2);
    const int C = img.channels;

    // Horizontal pass.
    Image tmp(img.height, img.width, C);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < C; ++c) {
                float acc = 0.0f;
                for (int t = -radius; t <= radius; ++t)
                    acc += k[t + radius] * img.at(y, reflect(x + t, img.width), c);
                tmp.at(y, x, c) = acc;
            }
        }
    }
    // Vertical pass.
    Image out(img.height, img.width, C);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < C; ++c) {
                float acc = 0.0f;
                for (int t = -radius; t <= radius; ++t)
                    acc += k[t + radius] * tmp.at(reflect(y + t, img.height), x, c);
                out.at(y, x, c) = acc;
            }
        }
    }
    return out;
}

void grad_xy(const Image& img, Image& dx, Image& dy) {
    const int H = img.height, W = img.width, C = img.channels;
    dx = Image(H, W, C);
    dy = Image(H, W, C);
    for (int y = 0; y < H; ++y) {
        const int yn = reflect(y + 1, H);
        for (int x = 0; x < W; ++x) {
            const int xn = reflect(x + 1, W);
            for (int c = 0; c < C; ++c) {
                dx.at(y, x, c) = img.at(y, xn, c) - img.at(y, x, c);
                dy.at(y, x, c) = img.at(yn, x, c) - img.at(y, x, c);
            }
        }
    }
}

Image patch_means(const Image& img, int patch) {
    if (patch < 1) throw InvalidArgument("patch_means: patch must be >= 1");
    const int gh = (img.height + patch - 1) / patch;
    const int gw = (img.width + patch - 1) / patch;
    const int C = img.channels;
    Image grid(gh, gw, C);
    for (int gy = 0; gy < gh; ++gy) {
        const int y0 = gy * patch;
        const int y1 = std::min(y0 + patch, img.height);
        for (int gx = 0; gx < gw; ++gx) {
            const int x0 = gx * patch;
            const int x1 = std::min(x0 + patch, img.width);
            const float inv = 1.0f / (static_cast<float>(y1 - y0) * (x1 - x0));
            for (int c = 0; c < C; ++c) {
                double acc = 0.0;
                for (int y = y0; y < y1; ++y)
                    for (int x = x0; x < x1; ++x) acc += img.at(y, x, c);
                grid.at(gy, gx, c) = static_cast<float>(acc) * inv;
            }
        }
    }
    return grid;
}

void sample_bilinear(const Image& img, float x, float y, float* out) {
    const float fx = std::clamp(x, 0.0f, static_cast<float>(img.width - 1));
    const float fy = std::clamp(y, 0.0f, static_cast<float>(img.height - 1));
    const int x0 = static_cast<int>(fx);
    const int y0 = static_cast<int>(fy);
    const int x1 = std::min(x0 + 1, img.width - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const float wx = fx - static_cast<float>(x0);
    const float wy = fy - static_cast<float>(y0);
    for (int c = 0; c < img.channels; ++c) {
        const float top = img.at(y0, x0, c) + (img.at(y0, x1, c) - img.at(y0, x0, c)) * wx;
        const float bot = img.at(y1, x0, c) + (img.at(y1, x1, c) - img.at(y1, x0, c)) * wx;
        out[c] = top + (bot - top) * wy;
    }
}

void clamp01(Image& img) {
    for (float& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
}

} // namespace llgm
