#pragma once

#include <cstdio>
#include <filesystem>
#include <string>

#include "image.hpp"
#include "rng.hpp"

namespace llgm::test {

inline Image random_image(int h, int w, int c, Rng& rng) {
    Image img(h, w, c);
    for (float& v : img.data) v = rng.next_float();
    return img;
}

inline Image random_image(int h, int w, int c, std::uint64_t seed) {
    Rng rng = Rng(seed).fork("image");
    return random_image(h, w, c, rng);
}

inline Image constant_image(int h, int w, int c, float value) {
    Image img(h, w, c);
    for (float& v : img.data) v = value;
    return img;
}

// Unique scratch path under the system temp dir; caller removes it.
inline std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

} // namespace llgm::test
