#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "image.hpp"

namespace llgm {

// Iterated quadratic intensity curve: u_0 = v, u_p = u_{p-1} + a_p*(u_{p-1}^2 - u_{p-1}).
// With |a_p| <= 1 it maps [0,1] to [0,1] and keeps 0 and 1 fixed.
template <typename T>
inline T apply_curve(T v, const T* a, int order) {
    T u = v;
    for (int p = 0; p < order; ++p) u += a[p] * (u * u - u);
    return u;
}

struct CurveParams {
    std::vector<float> a;    // `order` coefficients, each clamped to [-1, 1]
    bool degenerate = false; // every pixel sat on a curve fixed point
};

// Curve coefficients whose application drives the image mean to e_ref.
// Order 1 is closed-form; higher orders run projected gradient descent
// (500 steps, lr 0.05, from zero, stopping once the mean is within 1e-4).
CurveParams fit_alpha(const Image& img, double e_ref, int order);

struct KMeansResult {
    std::vector<float> centers;        // k x dim, each the mean of its members
    std::vector<int> assignment;       // n, values in [0, k)
    std::vector<double> inertia_trace; // one entry per Lloyd iteration
    int duplicate_centers = 0;         // pairs of coincident final centers
};

// Lloyd's algorithm with k-means++ seeding; empty clusters are reseeded to
// the point farthest from its current center. Deterministic for a seed.
KMeansResult kmeans(const float* points, int n, int dim, int k, std::uint64_t seed);

// Mixing dictionary: row 0 is the identity (zero) atom, rows 1..num_atoms are
// learned curve coefficients.
struct Dictionary {
    int num_atoms = 0; // learned atoms K; the stored matrix has K+1 rows
    int order = 0;     // curve order P
    std::vector<float> atoms; // (num_atoms+1) x order, row-major
    std::uint64_t seed = 0;   // provenance
    std::string corpus_tag;

    int rows() const { return num_atoms + 1; }
    const float* atom(int i) const { return atoms.data() + static_cast<std::size_t>(i) * order; }
};

struct DictionaryBuildStats {
    int pairs_fitted = 0;
    int skipped_unreadable = 0;
    int skipped_degenerate = 0;
    int duplicate_atoms = 0;
};

struct DictionaryBuild {
    Dictionary dict;
    std::vector<float> coefficients; // pairs_fitted x order: the clustered cloud
    std::vector<int> assignment;     // cluster id per coefficient vector
    DictionaryBuildStats stats;
};

// Fits one coefficient vector per (image, target mean) pair and clusters the
// cloud into the dictionary atoms.
DictionaryBuild build_dictionary(const std::vector<Image>& corpus, int k, int order,
                                 const std::vector<double>& e_ref_set, std::uint64_t seed,
                                 const std::string& corpus_tag);

// Same, loading images from disk; unreadable files are skipped with a warning.
DictionaryBuild build_dictionary_from_paths(const std::vector<std::string>& paths, int k,
                                            int order, const std::vector<double>& e_ref_set,
                                            std::uint64_t seed, const std::string& corpus_tag);

// Binary dictionary container ("LLGD", version 1, little-endian).
void save_dictionary(const Dictionary& dict, const std::string& path);
Dictionary load_dictionary(const std::string& path);

// Writes manifold.csv (coefficient vectors + cluster id) and curves.csv
// (each atom's curve sampled at v = 0, 0.01, ..., 1) into dir.
void export_manifold_csv(const DictionaryBuild& build, const std::string& dir);

} // namespace llgm
