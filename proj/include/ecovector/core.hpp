#pragma once

// Shared value types, distance metrics and deterministic randomness.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ecovector {

using NodeId = std::uint64_t;

enum class ErrorCode {
    kInvalidArgument,
    kDimensionMismatch,
    kZeroVector,
    kNotFound,
    kDuplicateKey,
    kDanglingReference,
    kFormat,
    kIo,
    kEmpty,
    kUnavailable,
    kBusy,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

struct VectorRecord {
    NodeId id = 0;
    std::vector<float> values;

    std::size_t dim() const noexcept { return values.size(); }
    friend bool operator==(const VectorRecord&, const VectorRecord&) = default;
};

inline bool all_finite(std::span<const float> v) {
    return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
}

inline void check_record(const VectorRecord& r, std::size_t dim) {
    if (r.values.size() != dim)
        fail(ErrorCode::kDimensionMismatch, "vector " + std::to_string(r.id) + " has dimension " +
                                                std::to_string(r.values.size()) + ", expected " +
                                                std::to_string(dim));
    if (!all_finite(r.values))
        fail(ErrorCode::kInvalidArgument, "vector " + std::to_string(r.id) + " has non-finite values");
}

enum class Metric { kL2, kInnerProduct, kCosine };

inline std::string_view metric_name(Metric m) {
    switch (m) {
        case Metric::kL2: return "l2";
        case Metric::kInnerProduct: return "ip";
        case Metric::kCosine: return "cosine";
    }
    return "?";
}

inline Metric parse_metric(std::string_view s) {
    if (s == "l2") return Metric::kL2;
    if (s == "ip") return Metric::kInnerProduct;
    if (s == "cosine") return Metric::kCosine;
    fail(ErrorCode::kInvalidArgument, "unknown metric '" + std::string(s) + "'");
}

/// Distance under `m`. L2 is squared Euclidean. Inner product is reported as
/// the negated dot product so that smaller is always closer. Cosine is
/// 1 - cos(a, b) and rejects zero vectors.
inline double distance(std::span<const float> a, std::span<const float> b, Metric m) {
    if (a.size() != b.size())
        fail(ErrorCode::kDimensionMismatch, "distance between vectors of dimension " +
                                                std::to_string(a.size()) + " and " +
                                                std::to_string(b.size()));
    switch (m) {
        case Metric::kL2: {
            double acc = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) {
                const double diff = double(a[i]) - double(b[i]);
                acc += diff * diff;
            }
            return acc;
        }
        case Metric::kInnerProduct: {
            double dot = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) dot += double(a[i]) * double(b[i]);
            return -dot;
        }
        case Metric::kCosine: {
            double dot = 0.0, na = 0.0, nb = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) {
                dot += double(a[i]) * double(b[i]);
                na += double(a[i]) * double(a[i]);
                nb += double(b[i]) * double(b[i]);
            }
            if (na == 0.0 || nb == 0.0) fail(ErrorCode::kZeroVector, "cosine distance of a zero vector");
            // sqrt(x*x) == x exactly, so identical inputs give exactly 0.
            const double d = 1.0 - dot / std::sqrt(na * nb);
            return d < 0.0 ? 0.0 : d;
        }
    }
    return 0.0;
}

inline double distance(const VectorRecord& a, const VectorRecord& b, Metric m) {
    return distance(std::span<const float>(a.values), std::span<const float>(b.values), m);
}

/// Cosine similarity, 0 when either side is the zero vector.
inline double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) fail(ErrorCode::kDimensionMismatch, "cosine similarity dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += double(a[i]) * double(b[i]);
        na += double(a[i]) * double(a[i]);
        nb += double(b[i]) * double(b[i]);
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

struct Neighbor {
    NodeId id = 0;
    double distance = 0.0;

    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Total order used everywhere: ascending distance, then ascending id.
inline bool closer(const Neighbor& a, const Neighbor& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.id < b.id;
}

struct CloserFirst {
    bool operator()(const Neighbor& a, const Neighbor& b) const { return closer(a, b); }
};

/// Deterministic generator. mt19937_64 is specified bit-for-bit by the
/// standard; the real-valued draws below avoid the implementation-defined
/// std distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in (0, 1].
    double uniform_open_closed() { return double((engine_() >> 11) + 1) * 0x1.0p-53; }

    /// Uniform in [0, 1).
    double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) fail(ErrorCode::kInvalidArgument, "Rng::below(0)");
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    /// Standard normal via Box-Muller.
    double normal() {
        const double u1 = uniform_open_closed();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Exhaustive top-k. Ties are broken by ascending id.
inline std::vector<Neighbor> brute_force_topk_scored(std::span<const float> query,
                                                     std::span<const VectorRecord> corpus,
                                                     std::size_t k, Metric m) {
    if (corpus.empty()) fail(ErrorCode::kEmpty, "brute_force_topk on an empty corpus");
    if (k == 0) fail(ErrorCode::kInvalidArgument, "k must be positive");
    std::vector<Neighbor> all;
    all.reserve(corpus.size());
    for (const auto& r : corpus) all.push_back({r.id, distance(query, r.values, m)});
    k = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + std::ptrdiff_t(k), all.end(), closer);
    all.resize(k);
    return all;
}

inline std::vector<NodeId> brute_force_topk(std::span<const float> query,
                                            std::span<const VectorRecord> corpus, std::size_t k,
                                            Metric m) {
    std::vector<NodeId> ids;
    for (const auto& n : brute_force_topk_scored(query, corpus, k, m)) ids.push_back(n.id);
    return ids;
}

/// |found ∩ truth| / |truth|.
inline double recall_at_k(std::span<const NodeId> found, std::span<const NodeId> truth) {
    if (truth.empty()) return 1.0;
    std::vector<NodeId> t(truth.begin(), truth.end());
    std::sort(t.begin(), t.end());
    std::size_t hit = 0;
    for (NodeId id : found)
        if (std::binary_search(t.begin(), t.end(), id)) ++hit;
    return double(hit) / double(truth.size());
}

}  // namespace ecovector
