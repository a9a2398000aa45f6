#pragma once

#include <cstddef>
#include <vector>

namespace llgm {

// Row-major H x W x C buffer of float intensities. Values live in [0, 1]
// except in buffers explicitly documented as unclamped (residual targets,
// raw renders, gain fields).
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> data;

    Image() = default;
    Image(int h, int w, int c, float fill = 0.0f)
        : height(h), width(w), channels(c),
          data(static_cast<std::size_t>(h) * w * c, fill) {}

    float& at(int y, int x, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    float at(int y, int x, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }

    std::size_t pixel_count() const {
        return static_cast<std::size_t>(height) * width;
    }
    std::size_t value_count() const { return pixel_count() * channels; }

    bool same_shape(const Image& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
};

// BT.601 weighted sum of a 3-channel image. Throws on channel mismatch.
Image luminance(const Image& img);

// Bilinear resampling with half-pixel-centered source coordinates.
// Resizing to the original dimensions returns a bit-identical copy.
Image resize_bilinear(const Image& img, int new_h, int new_w);

// Separable Gaussian convolution, kernel truncated at radius ceil(3*sigma),
// normalized to sum 1, symmetric-reflect padding.
Image gaussian_blur(const Image& img, float sigma);

// Normalized 1D Gaussian taps, radius ceil(3*sigma); shared by blur and SSIM.
std::vector<float> gaussian_kernel(float sigma);

// Forward differences with symmetric-reflect padding: the last column/row
// of dx/dy is zero. Applied channel-wise.
void grad_xy(const Image& img, Image& dx, Image& dy);

// Per-channel means over a non-overlapping patch x patch tiling. Ragged
// edge patches average over their true pixel count. Output grid is
// ceil(H/patch) x ceil(W/patch) x C.
Image patch_means(const Image& img, int patch);

// Bilinear sample with pixel centers at integer coordinates; x, y are
// clamped to the image rectangle. Writes `channels` values to out.
void sample_bilinear(const Image& img, float x, float y, float* out);

void clamp01(Image& img);

} // namespace llgm
