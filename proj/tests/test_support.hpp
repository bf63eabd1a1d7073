#pragma once

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "ecovector/core.hpp"

namespace testing_support {

using ecovector::NodeId;
using ecovector::Rng;
using ecovector::VectorRecord;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("ecovector-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

inline std::vector<float> uniform_vector(std::size_t dim, Rng& rng) {
    std::vector<float> v(dim);
    for (auto& x : v) x = float(rng.uniform() * 2.0 - 1.0);
    return v;
}

/// Ids start at `first_id`.
inline std::vector<VectorRecord> uniform_vectors(std::size_t n, std::size_t dim, std::uint64_t seed, NodeId first_id = 0) {
    Rng rng(seed);
    std::vector<VectorRecord> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back({first_id + i, uniform_vector(dim, rng)});
    return out;
}

/// `n_centers` standard-normal centers; each point is a center plus N(0, spread^2) noise.
struct Mixture {
    std::vector<std::vector<float>> centers;
    std::vector<VectorRecord> points;
};

inline Mixture gaussian_mixture(std::size_t n, std::size_t dim, std::size_t n_centers, double spread, std::uint64_t seed) {
    Rng rng(seed);
    Mixture m;
    for (std::size_t c = 0; c < n_centers; ++c) {
        std::vector<float> v(dim);
        for (auto& x : v) x = float(rng.normal());
        m.centers.push_back(std::move(v));
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto& c = m.centers[rng.below(n_centers)];
        std::vector<float> v(dim);
        for (std::size_t j = 0; j < dim; ++j) v[j] = float(c[j] + spread * rng.normal());
        m.points.push_back({NodeId(i), std::move(v)});
    }
    return m;
}

/// Stored points perturbed by N(0, noise^2).
inline std::vector<std::vector<float>> noisy_queries(const std::vector<VectorRecord>& data, std::size_t n, double noise,
                                                     std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<float>> out;
    for (std::size_t i = 0; i < n; ++i) {
        auto v = data[rng.below(data.size())].values;
        for (auto& x : v) x = float(x + noise * rng.normal());
        out.push_back(std::move(v));
    }
    return out;
}

/// Exhaustive k-NN under squared L2, written without the library's helpers:
/// long double accumulation and a full sort on (distance, id).
inline std::vector<NodeId> oracle_topk(const std::vector<float>& q, const std::vector<VectorRecord>& corpus, std::size_t k) {
    std::vector<std::pair<long double, NodeId>> all;
    for (const auto& r : corpus) {
        long double s = 0;
        for (std::size_t i = 0; i < q.size(); ++i) {
            const long double d = (long double)q[i] - (long double)r.values[i];
            s += d * d;
        }
        all.push_back({s, r.id});
    }
    std::sort(all.begin(), all.end());
    std::vector<NodeId> ids;
    for (std::size_t i = 0; i < std::min(k, all.size()); ++i) ids.push_back(all[i].second);
    return ids;
}

inline double overlap_fraction(const std::vector<NodeId>& found, const std::vector<NodeId>& truth) {
    std::size_t hit = 0;
    for (auto id : found)
        if (std::find(truth.begin(), truth.end(), id) != truth.end()) ++hit;
    return truth.empty() ? 1.0 : double(hit) / double(truth.size());
}

}  // namespace testing_support
