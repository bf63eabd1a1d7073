#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "ecovector/core.hpp"

namespace ecovector {

struct KMeansModel {
    std::vector<std::vector<float>> centroids;
    std::unordered_map<NodeId, std::uint32_t> assignments;
    int iterations_run = 0;

    std::size_t n_clusters() const { return centroids.size(); }
    std::size_t dim() const { return centroids.empty() ? 0 : centroids.front().size(); }
};

/// Index of the nearest centroid by exact scan; ties go to the lower index.
inline std::uint32_t nearest_centroid(std::span<const float> v,
                                      const std::vector<std::vector<float>>& centroids) {
    std::uint32_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::uint32_t c = 0; c < centroids.size(); ++c) {
        const double d = distance(v, centroids[c], Metric::kL2);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

/// k-means++ seeding followed by Lloyd iterations until assignments stop
/// changing or `max_iters` is reached. Empty clusters take the point of the
/// largest cluster that lies farthest from its centroid.
inline KMeansModel kmeans_fit(std::span<const VectorRecord> data, std::size_t n_clusters, int max_iters,
                              Rng& rng) {
    if (data.empty()) fail(ErrorCode::kEmpty, "k-means on an empty set");
    if (n_clusters == 0) fail(ErrorCode::kInvalidArgument, "k-means needs at least one cluster");
    if (n_clusters > data.size())
        fail(ErrorCode::kInvalidArgument, "more clusters (" + std::to_string(n_clusters) + ") than points (" +
                                              std::to_string(data.size()) + ")");
    if (max_iters < 1) fail(ErrorCode::kInvalidArgument, "max_iters must be >= 1");
    const std::size_t dim = data.front().dim();
    for (const auto& r : data) check_record(r, dim);
    const std::size_t n = data.size();

    // k-means++ seeding.
    std::vector<std::vector<float>> centroids;
    centroids.reserve(n_clusters);
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    std::vector<bool> chosen(n, false);
    std::size_t first = rng.below(n);
    centroids.push_back(data[first].values);
    chosen[first] = true;
    while (centroids.size() < n_clusters) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], distance(data[i].values, centroids.back(), Metric::kL2));
            if (!chosen[i]) total += d2[i];
        }
        std::size_t pick = n;
        if (total > 0.0) {
            double target = rng.uniform() * total;
            for (std::size_t i = 0; i < n; ++i) {
                if (chosen[i]) continue;
                pick = i;
                target -= d2[i];
                if (target < 0.0) break;
            }
        } else {
            std::size_t skip = rng.below(n - centroids.size());
            for (std::size_t i = 0; i < n; ++i) {
                if (chosen[i]) continue;
                if (skip-- == 0) {
                    pick = i;
                    break;
                }
            }
        }
        chosen[pick] = true;
        centroids.push_back(data[pick].values);
    }

    std::vector<std::uint32_t> label(n, std::numeric_limits<std::uint32_t>::max());
    KMeansModel model;
    for (int it = 0; it < max_iters; ++it) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            const auto c = nearest_centroid(data[i].values, centroids);
            if (c != label[i]) {
                label[i] = c;
                changed = true;
            }
        }

        std::vector<std::size_t> sizes(n_clusters, 0);
        for (auto l : label) ++sizes[l];
        for (std::uint32_t empty = 0; empty < n_clusters; ++empty) {
            if (sizes[empty] != 0) continue;
            const auto largest = std::uint32_t(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
            std::size_t far = n;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (label[i] != largest) continue;
                const double d = distance(data[i].values, centroids[largest], Metric::kL2);
                if (d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            label[far] = empty;
            --sizes[largest];
            sizes[empty] = 1;
            centroids[empty] = data[far].values;
            changed = true;
        }

        std::vector<std::vector<double>> sums(n_clusters, std::vector<double>(dim, 0.0));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < dim; ++j) sums[label[i]][j] += data[i].values[j];
        for (std::size_t c = 0; c < n_clusters; ++c)
            for (std::size_t j = 0; j < dim; ++j) centroids[c][j] = float(sums[c][j] / double(sizes[c]));

        model.iterations_run = it + 1;
        if (!changed) break;
    }

    model.centroids = std::move(centroids);
    for (std::size_t i = 0; i < n; ++i) model.assignments[data[i].id] = label[i];
    return model;
}

}  // namespace ecovector
