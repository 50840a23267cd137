#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <vector>

#include "common.hpp"
#include "rng.hpp"

namespace unitprompt {

using FeatureFrame = std::vector<float>;
using FeatureSeq = std::vector<FeatureFrame>;

// K-means codebook over feature frames. Immutable once fitted.
struct Codebook {
    int k = 0;
    int d_f = 0;
    std::vector<float> centroids;  // k rows of d_f, row-major

    const float* centroid(int i) const { return centroids.data() + static_cast<size_t>(i) * d_f; }
};

namespace detail {

inline double sq_dist(const float* a, const float* b, int d) {
    double acc = 0.0;
    for (int i = 0; i < d; ++i) {
        double diff = double(a[i]) - double(b[i]);
        acc += diff * diff;
    }
    return acc;
}

// Nearest centroid id, ties to the lowest index.
inline int nearest_centroid(const float* x, const Codebook& cb) {
    int best = 0;
    double best_d = sq_dist(x, cb.centroid(0), cb.d_f);
    for (int i = 1; i < cb.k; ++i) {
        double d = sq_dist(x, cb.centroid(i), cb.d_f);
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return best;
}

}  // namespace detail

// Lloyd's algorithm with seeded initialization from k distinct input points.
// Empty clusters are re-seeded with the point farthest from its centroid.
inline Codebook kmeans_fit(const FeatureSeq& features, int k, int max_iters, uint64_t seed) {
    require(!features.empty(), "kmeans_fit: empty input");
    require(k >= 1, format_msg("kmeans_fit: k must be >= 1, got ", k));
    int d = static_cast<int>(features[0].size());
    require(d > 0, "kmeans_fit: zero-dimensional features");
    for (const auto& f : features)
        require(static_cast<int>(f.size()) == d,
                format_msg("kmeans_fit: inconsistent feature dimension ", f.size(), " vs ", d));

    std::set<std::vector<float>> distinct(features.begin(), features.end());
    require(static_cast<int>(distinct.size()) >= k,
            format_msg("kmeans_fit: ", distinct.size(), " distinct points for k=", k));

    int n = static_cast<int>(features.size());
    Codebook cb;
    cb.k = k;
    cb.d_f = d;
    cb.centroids.assign(static_cast<size_t>(k) * d, 0.0f);

    // Initialization: uniform draws without replacement, skipping points that
    // duplicate an already chosen centroid.
    Rng rng(seed);
    std::set<std::vector<float>> chosen;
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    int placed = 0;
    for (int idx : order) {
        if (placed == k) break;
        if (!chosen.insert(features[idx]).second) continue;
        std::copy(features[idx].begin(), features[idx].end(),
                  cb.centroids.begin() + static_cast<size_t>(placed) * d);
        ++placed;
    }

    std::vector<int> assign(n, -1);
    for (int iter = 0; iter < max_iters; ++iter) {
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            int a = detail::nearest_centroid(features[i].data(), cb);
            if (a != assign[i]) {
                assign[i] = a;
                changed = true;
            }
        }
        if (!changed && iter > 0) break;

        std::vector<double> sums(static_cast<size_t>(k) * d, 0.0);
        std::vector<int> counts(k, 0);
        for (int i = 0; i < n; ++i) {
            const auto& f = features[i];
            double* row = sums.data() + static_cast<size_t>(assign[i]) * d;
            for (int j = 0; j < d; ++j) row[j] += f[j];
            ++counts[assign[i]];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // Repair: move this centroid onto the point farthest from its
                // current centroid.
                int far_i = 0;
                double far_d = -1.0;
                for (int i = 0; i < n; ++i) {
                    double dd = detail::sq_dist(features[i].data(), cb.centroid(assign[i]), d);
                    if (dd > far_d) {
                        far_d = dd;
                        far_i = i;
                    }
                }
                std::copy(features[far_i].begin(), features[far_i].end(),
                          cb.centroids.begin() + static_cast<size_t>(c) * d);
                assign[far_i] = c;
                continue;
            }
            float* row = cb.centroids.data() + static_cast<size_t>(c) * d;
            for (int j = 0; j < d; ++j)
                row[j] = static_cast<float>(sums[static_cast<size_t>(c) * d + j] / counts[c]);
        }
    }
    return cb;
}

inline double kmeans_inertia(const FeatureSeq& features, const Codebook& cb) {
    double total = 0.0;
    for (const auto& f : features)
        total += detail::sq_dist(f.data(), cb.centroid(detail::nearest_centroid(f.data(), cb)), cb.d_f);
    return total;
}

// Maps each frame to its nearest centroid id. No deduplication here.
inline UnitSequence quantize(const FeatureSeq& features, const Codebook& cb) {
    UnitSequence units;
    units.reserve(features.size());
    for (const auto& f : features) {
        require(static_cast<int>(f.size()) == cb.d_f,
                format_msg("quantize: feature dimension ", f.size(), " vs codebook ", cb.d_f));
        units.push_back(detail::nearest_centroid(f.data(), cb));
    }
    return units;
}

// Collapses each maximal run of equal adjacent units to one occurrence.
inline UnitSequence deduplicate(const UnitSequence& units) {
    UnitSequence out;
    out.reserve(units.size());
    for (int u : units)
        if (out.empty() || out.back() != u) out.push_back(u);
    return out;
}

}  // namespace unitprompt
