#include "dictionary.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "errors.hpp"
#include "image_io.hpp"
#include "rng.hpp"

namespace llgm {

namespace {

constexpr char kMagic[4] = {'L', 'L', 'G', 'D'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw FormatError("truncated dictionary file: " + path);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_u64(std::ostream& out, std::uint64_t v) {
    write_u32(out, static_cast<std::uint32_t>(v));
    write_u32(out, static_cast<std::uint32_t>(v >> 32));
}

std::uint64_t read_u64(std::istream& in, const std::string& path) {
    const std::uint64_t lo = read_u32(in, path);
    const std::uint64_t hi = read_u32(in, path);
    return lo | (hi << 32);
}

// Sorted (value, count) histogram: the curve mean and its gradient only
// depend on distinct intensities, which keeps high-order fits cheap.
std::vector<std::pair<float, std::int64_t>> value_histogram(const Image& img) {
    std::vector<float> sorted = img.data;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::pair<float, std::int64_t>> hist;
    for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i;
        while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
        hist.emplace_back(sorted[i], static_cast<std::int64_t>(j - i));
        i = j;
    }
    return hist;
}

} // namespace

CurveParams fit_alpha(const Image& img, double e_ref, int order) {
    if (order < 1) throw InvalidArgument("fit_alpha: order must be >= 1");
    if (img.data.empty()) throw InvalidArgument("fit_alpha: empty image");
    if (e_ref <= 0.0 || e_ref >= 1.0) throw InvalidArgument("fit_alpha: target mean outside (0,1)");

    CurveParams out;
    out.a.assign(order, 0.0f);

    const double total = static_cast<double>(img.data.size());
    double mean_v = 0.0, mean_q = 0.0; // q = v^2 - v
    for (const float v : img.data) {
        const double d = v;
        mean_v += d;
        mean_q += d * d - d;
    }
    mean_v /= total;
    mean_q /= total;
    if (std::abs(mean_q) < 1e-12) { // every value at a fixed point (0 or 1)
        out.degenerate = true;
        return out;
    }

    if (order == 1) {
        out.a[0] = static_cast<float>(std::clamp((e_ref - mean_v) / mean_q, -1.0, 1.0));
        return out;
    }

    const auto hist = value_histogram(img);
    std::vector<double> a(order, 0.0), grad(order), u(order + 1);
    for (int step = 0; step < 500; ++step) {
        double mean = 0.0;
        std::fill(grad.begin(), grad.end(), 0.0);
        for (const auto& [v, count] : hist) {
            u[0] = v;
            for (int p = 0; p < order; ++p) u[p + 1] = u[p] + a[p] * (u[p] * u[p] - u[p]);
            const double w = static_cast<double>(count);
            mean += w * u[order];
            double t = w; // d(final)/d(u_p), scaled by the histogram weight
            for (int p = order - 1; p >= 0; --p) {
                grad[p] += t * (u[p] * u[p] - u[p]);
                t *= 1.0 + a[p] * (2.0 * u[p] - 1.0);
            }
        }
        mean /= total;
        const double err = mean - e_ref;
        if (std::abs(err) < 1e-4) break;
        for (int p = 0; p < order; ++p)
            a[p] = std::clamp(a[p] - 0.05 * 2.0 * err * grad[p] / total, -1.0, 1.0);
    }
    for (int p = 0; p < order; ++p) out.a[p] = static_cast<float>(a[p]);
    return out;
}

KMeansResult kmeans(const float* points, int n, int dim, int k, std::uint64_t seed) {
    if (n < 1 || dim < 1) throw InvalidArgument("kmeans: empty point set");
    if (k < 1 || k > n) throw InvalidArgument("kmeans: need 1 <= k <= point count");

    const auto point = [&](int i) { return points + static_cast<std::size_t>(i) * dim; };
    auto dist2 = [&](const double* c, const float* p) {
        double d = 0.0;
        for (int j = 0; j < dim; ++j) {
            const double t = c[j] - static_cast<double>(p[j]);
            d += t * t;
        }
        return d;
    };

    std::vector<double> centers(static_cast<std::size_t>(k) * dim);
    Rng rng = Rng(seed).fork("kmeans");

    // k-means++ seeding.
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    { // first center uniform, the rest proportional to squared distance
        const float* p0 = point(static_cast<int>(rng.next_below(n)));
        for (int j = 0; j < dim; ++j) centers[j] = p0[j];
    }
    for (int c = 1; c < k; ++c) {
        double sum = 0.0;
        for (int i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], dist2(&centers[static_cast<std::size_t>(c - 1) * dim], point(i)));
            sum += d2[i];
        }
        int pick = static_cast<int>(rng.next_below(n));
        if (sum > 0.0) {
            const double r = rng.next_double() * sum;
            double acc = 0.0;
            for (int i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc >= r) {
                    pick = i;
                    break;
                }
            }
        }
        const float* p = point(pick);
        for (int j = 0; j < dim; ++j) centers[static_cast<std::size_t>(c) * dim + j] = p[j];
    }

    KMeansResult result;
    result.assignment.assign(n, 0);
    std::vector<double> nearest(n);
    std::vector<std::int64_t> members(k);

    auto assign = [&]() {
        double inertia = 0.0;
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double best_d = dist2(centers.data(), point(i));
            for (int c = 1; c < k; ++c) {
                const double d = dist2(&centers[static_cast<std::size_t>(c) * dim], point(i));
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            result.assignment[i] = best;
            nearest[i] = best_d;
            inertia += best_d;
        }
        return inertia;
    };

    auto update = [&]() {
        std::fill(centers.begin(), centers.end(), 0.0);
        std::fill(members.begin(), members.end(), 0);
        for (int i = 0; i < n; ++i) {
            double* c = &centers[static_cast<std::size_t>(result.assignment[i]) * dim];
            const float* p = point(i);
            for (int j = 0; j < dim; ++j) c[j] += p[j];
            ++members[result.assignment[i]];
        }
        std::vector<int> taken;
        for (int c = 0; c < k; ++c) {
            if (members[c] > 0) {
                for (int j = 0; j < dim; ++j)
                    centers[static_cast<std::size_t>(c) * dim + j] /= static_cast<double>(members[c]);
                continue;
            }
            // Empty cluster: reseed to the farthest point from its center.
            int far = -1;
            double far_d = -1.0;
            for (int i = 0; i < n; ++i) {
                if (std::find(taken.begin(), taken.end(), i) != taken.end()) continue;
                if (nearest[i] > far_d) {
                    far_d = nearest[i];
                    far = i;
                }
            }
            taken.push_back(far);
            const float* p = point(far);
            for (int j = 0; j < dim; ++j) centers[static_cast<std::size_t>(c) * dim + j] = p[j];
        }
    };

    double prev = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < 100; ++iter) {
        const double inertia = assign();
        result.inertia_trace.push_back(inertia);
        if (prev - inertia < 1e-6) break;
        prev = inertia;
        update();
    }
    // One final sweep so every returned center is exactly the mean of its
    // returned members.
    assign();
    update();

    result.centers.resize(centers.size());
    for (std::size_t i = 0; i < centers.size(); ++i)
        result.centers[i] = static_cast<float>(centers[i]);
    for (int a = 0; a < k; ++a)
        for (int b = a + 1; b < k; ++b) {
            bool same = true;
            for (int j = 0; j < dim && same; ++j)
                same = result.centers[static_cast<std::size_t>(a) * dim + j] ==
                       result.centers[static_cast<std::size_t>(b) * dim + j];
            result.duplicate_centers += same ? 1 : 0;
        }
    return result;
}

DictionaryBuild build_dictionary(const std::vector<Image>& corpus, int k, int order,
                                 const std::vector<double>& e_ref_set, std::uint64_t seed,
                                 const std::string& corpus_tag) {
    if (k < 1) throw InvalidArgument("dictionary: need at least one atom");
    if (order < 1) throw InvalidArgument("dictionary: order must be >= 1");
    if (e_ref_set.empty()) throw InvalidArgument("dictionary: empty target-mean set");

    DictionaryBuild build;
    for (const Image& img : corpus) {
        for (const double e_ref : e_ref_set) {
            const CurveParams fit = fit_alpha(img, e_ref, order);
            if (fit.degenerate) {
                ++build.stats.skipped_degenerate;
                continue;
            }
            build.coefficients.insert(build.coefficients.end(), fit.a.begin(), fit.a.end());
            ++build.stats.pairs_fitted;
        }
    }
    if (build.stats.pairs_fitted < k)
        throw InvalidArgument("dictionary: corpus too small: " +
                              std::to_string(build.stats.pairs_fitted) +
                              " coefficient vectors for " + std::to_string(k) +
                              " atoms; reduce k or add corpus images");

    KMeansResult km = kmeans(build.coefficients.data(), build.stats.pairs_fitted, order, k, seed);
    build.assignment = std::move(km.assignment);
    build.stats.duplicate_atoms = km.duplicate_centers;
    if (km.duplicate_centers > 0)
        std::fprintf(stderr, "warning: dictionary has %d coincident atom pair(s)\n",
                     km.duplicate_centers);

    build.dict.num_atoms = k;
    build.dict.order = order;
    build.dict.seed = seed;
    build.dict.corpus_tag = corpus_tag;
    build.dict.atoms.assign(static_cast<std::size_t>(k + 1) * order, 0.0f);
    std::copy(km.centers.begin(), km.centers.end(), build.dict.atoms.begin() + order);
    return build;
}

DictionaryBuild build_dictionary_from_paths(const std::vector<std::string>& paths, int k,
                                            int order, const std::vector<double>& e_ref_set,
                                            std::uint64_t seed, const std::string& corpus_tag) {
    std::vector<Image> corpus;
    int skipped = 0;
    for (const std::string& path : paths) {
        try {
            corpus.push_back(load_image(path));
        } catch (const std::runtime_error& e) {
            std::fprintf(stderr, "warning: skipping unreadable image %s (%s)\n", path.c_str(),
                         e.what());
            ++skipped;
        }
    }
    DictionaryBuild build = build_dictionary(corpus, k, order, e_ref_set, seed, corpus_tag);
    build.stats.skipped_unreadable = skipped;
    return build;
}

void save_dictionary(const Dictionary& dict, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(kMagic, 4);
    write_u32(out, kVersion);
    write_u32(out, static_cast<std::uint32_t>(dict.num_atoms));
    write_u32(out, static_cast<std::uint32_t>(dict.order));
    for (const float x : dict.atoms) {
        std::uint32_t bits;
        std::memcpy(&bits, &x, 4);
        write_u32(out, bits);
    }
    write_u64(out, dict.seed);
    write_u32(out, static_cast<std::uint32_t>(dict.corpus_tag.size()));
    out.write(dict.corpus_tag.data(), static_cast<std::streamsize>(dict.corpus_tag.size()));
    if (!out) throw IoError("write failed: " + path);
}

Dictionary load_dictionary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("not a dictionary file (bad magic): " + path);
    const std::uint32_t version = read_u32(in, path);
    if (version != kVersion)
        throw FormatError("unsupported dictionary version " + std::to_string(version) + ": " +
                          path);

    Dictionary dict;
    dict.num_atoms = static_cast<int>(read_u32(in, path));
    dict.order = static_cast<int>(read_u32(in, path));
    if (dict.num_atoms < 1 || dict.order < 1 || dict.num_atoms > 1000000 || dict.order > 1000000)
        throw FormatError("invalid dictionary header: " + path);
    const std::size_t total = static_cast<std::size_t>(dict.num_atoms + 1) * dict.order;
    dict.atoms.resize(total);
    for (std::size_t i = 0; i < total; ++i) {
        const std::uint32_t bits = read_u32(in, path);
        std::memcpy(&dict.atoms[i], &bits, 4);
    }
    dict.seed = read_u64(in, path);
    const std::uint32_t tag_len = read_u32(in, path);
    dict.corpus_tag.resize(tag_len);
    in.read(dict.corpus_tag.data(), tag_len);
    if (!in) throw FormatError("truncated dictionary file: " + path);

    for (int j = 0; j < dict.order; ++j)
        if (dict.atoms[static_cast<std::size_t>(j)] != 0.0f)
            throw FormatError("dictionary zero atom is nonzero: " + path);
    for (const float x : dict.atoms)
        if (!std::isfinite(x)) throw FormatError("dictionary has non-finite atoms: " + path);
    return dict;
}

void export_manifold_csv(const DictionaryBuild& build, const std::string& dir) {
    std::filesystem::create_directories(dir);
    const int order = build.dict.order;

    std::ofstream manifold(dir + "/manifold.csv");
    if (!manifold) throw IoError("cannot open for writing: " + dir + "/manifold.csv");
    for (int j = 0; j < order; ++j) manifold << 'a' << j << ',';
    manifold << "cluster\n";
    const int n = static_cast<int>(build.assignment.size());
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < order; ++j)
            manifold << build.coefficients[static_cast<std::size_t>(i) * order + j] << ',';
        manifold << build.assignment[i] << '\n';
    }

    std::ofstream curves(dir + "/curves.csv");
    if (!curves) throw IoError("cannot open for writing: " + dir + "/curves.csv");
    curves << "atom,v,value\n";
    for (int i = 0; i < build.dict.rows(); ++i)
        for (int s = 0; s <= 100; ++s) {
            const float v = static_cast<float>(s) / 100.0f;
            curves << i << ',' << v << ',' << apply_curve(v, build.dict.atom(i), order) << '\n';
        }
    if (!manifold || !curves) throw IoError("csv export failed under " + dir);
}

} // namespace llgm
