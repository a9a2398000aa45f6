#include "gaussians.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "errors.hpp"

namespace llgm {

namespace {

constexpr char kMagic[4] = {'L', 'L', 'G', 'M'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kFlagEnhLogits = 1u << 0;
constexpr std::uint32_t kFlagFrozen = 1u << 1;

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw FormatError("truncated model file: " + path);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32s(std::ostream& out, const std::vector<float>& v) {
    for (float x : v) {
        std::uint32_t bits;
        std::memcpy(&bits, &x, 4);
        write_u32(out, bits);
    }
}

void read_f32s(std::istream& in, std::vector<float>& v, std::size_t n, const std::string& path) {
    v.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t bits = read_u32(in, path);
        std::memcpy(&v[i], &bits, 4);
    }
}

} // namespace

void save_model(const Model& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(kMagic, 4);
    write_u32(out, kVersion);
    write_u32(out, static_cast<std::uint32_t>(model.levels.size()));
    for (const GaussianSet& g : model.levels) {
        std::uint32_t flags = 0;
        if (g.has_enh_logits()) flags |= kFlagEnhLogits;
        if (g.frozen) flags |= kFlagFrozen;
        write_u32(out, static_cast<std::uint32_t>(g.height));
        write_u32(out, static_cast<std::uint32_t>(g.width));
        write_u32(out, static_cast<std::uint32_t>(g.count));
        write_u32(out, flags);
        write_f32s(out, g.mu);
        write_f32s(out, g.log_scale);
        write_f32s(out, g.theta);
        write_u32(out, static_cast<std::uint32_t>(g.channels));
        write_f32s(out, g.color);
        write_f32s(out, g.opacity_logit);
        if (g.has_enh_logits()) {
            write_u32(out, static_cast<std::uint32_t>(g.atom_count));
            write_f32s(out, g.enh_logits);
        }
    }
    if (!out) throw IoError("write failed: " + path);
}

Model load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("not a model file (bad magic): " + path);
    const std::uint32_t version = read_u32(in, path);
    if (version != kVersion)
        throw FormatError("unsupported model version " + std::to_string(version) + ": " + path);

    Model model;
    const std::uint32_t level_count = read_u32(in, path);
    model.levels.resize(level_count);
    for (GaussianSet& g : model.levels) {
        g.height = static_cast<int>(read_u32(in, path));
        g.width = static_cast<int>(read_u32(in, path));
        g.count = static_cast<int>(read_u32(in, path));
        const std::uint32_t flags = read_u32(in, path);
        g.frozen = (flags & kFlagFrozen) != 0;
        if (g.height < 1 || g.width < 1 || g.count < 0)
            throw FormatError("invalid level header: " + path);
        const std::size_t n = static_cast<std::size_t>(g.count);
        read_f32s(in, g.mu, 2 * n, path);
        read_f32s(in, g.log_scale, 2 * n, path);
        read_f32s(in, g.theta, n, path);
        g.channels = static_cast<int>(read_u32(in, path));
        if (g.channels < 1) throw FormatError("invalid channel count: " + path);
        read_f32s(in, g.color, static_cast<std::size_t>(g.channels) * n, path);
        read_f32s(in, g.opacity_logit, n, path);
        if (flags & kFlagEnhLogits) {
            g.atom_count = static_cast<int>(read_u32(in, path));
            if (g.atom_count < 1) throw FormatError("invalid atom count: " + path);
            read_f32s(in, g.enh_logits, static_cast<std::size_t>(g.atom_count) * n, path);
        }
    }
    return model;
}

} // namespace llgm
