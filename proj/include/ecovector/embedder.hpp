#pragma once

#include <atomic>
#include <cctype>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ecovector/core.hpp"

namespace ecovector {

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::size_t dimension() const = 0;
    virtual std::vector<std::vector<float>> embed(std::span<const std::string> texts) = 0;

    std::vector<float> embed_one(const std::string& text) {
        auto v = embed(std::span<const std::string>(&text, 1));
        if (v.size() != 1) fail(ErrorCode::kUnavailable, "embedder returned wrong batch size");
        return std::move(v.front());
    }
};

/// Lowercased alphanumeric runs.
inline std::vector<std::string> word_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isalnum(c) || c >= 0x80) {
            cur.push_back(char(std::tolower(c)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Signed feature hashing of word tokens, L2-normalized. Texts with no
/// tokens map to the zero vector. Fully offline and deterministic.
class HashEmbedder final : public Embedder {
public:
    explicit HashEmbedder(std::size_t dim = 64) : dim_(dim) {
        if (dim_ == 0) fail(ErrorCode::kInvalidArgument, "embedding dimension must be positive");
    }

    std::size_t dimension() const override { return dim_; }

    std::vector<std::vector<float>> embed(std::span<const std::string> texts) override {
        std::vector<std::vector<float>> out;
        out.reserve(texts.size());
        for (const auto& t : texts) {
            std::vector<double> acc(dim_, 0.0);
            for (const auto& tok : word_tokens(t)) {
                const std::uint64_t h = mix64(fnv1a64(tok));
                acc[h % dim_] += (h >> 63) ? 1.0 : -1.0;
            }
            double norm = 0.0;
            for (double x : acc) norm += x * x;
            norm = std::sqrt(norm);
            std::vector<float> v(dim_, 0.0f);
            if (norm > 0.0)
                for (std::size_t i = 0; i < dim_; ++i) v[i] = float(acc[i] / norm);
            out.push_back(std::move(v));
        }
        ++calls_;
        return out;
    }

    std::size_t calls() const { return calls_; }

private:
    std::size_t dim_;
    std::atomic<std::size_t> calls_{0};
};

}  // namespace ecovector
