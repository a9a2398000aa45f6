#pragma once

#include <string>

#include "image.hpp"

namespace llgm {

// Loads an 8-bit PNG or binary PPM (P6) into [0,1] floats. Palette images are
// expanded, alpha is dropped, 16-bit files are rejected.
Image load_image(const std::string& path);

// Saves 8-bit output; format picked by extension (".ppm" -> PPM, else PNG).
// Values are clamped to [0,1] and quantized with round-half-away-from-zero.
void save_image(const Image& img, const std::string& path);

} // namespace llgm
