#pragma once

// fvecs / ivecs files (each vector prefixed by a little-endian u32 dimension)
// and JSON-lines text corpora: one {"title": ..., "text": ...} per line.

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "json.hpp"

#include "ecovector/core.hpp"
#include "ecovector/graph_io.hpp"

namespace ecovector {

static_assert(std::endian::native == std::endian::little, "vector files are read with native little-endian layout");

namespace detail {

template <class T>
std::vector<std::vector<T>> read_xvecs(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    std::vector<std::vector<T>> out;
    std::size_t pos = 0;
    std::optional<std::uint32_t> dim;
    while (pos < bytes.size()) {
        if (bytes.size() - pos < 4) fail(ErrorCode::kFormat, path.string() + ": truncated dimension prefix");
        std::uint32_t d;
        std::memcpy(&d, bytes.data() + pos, 4);
        pos += 4;
        if (d == 0) fail(ErrorCode::kFormat, path.string() + ": zero dimension");
        if (dim && *dim != d) fail(ErrorCode::kFormat, path.string() + ": mixed dimensions");
        dim = d;
        if (bytes.size() - pos < std::size_t(d) * sizeof(T))
            fail(ErrorCode::kFormat, path.string() + ": truncated vector " + std::to_string(out.size()));
        std::vector<T> v(d);
        std::memcpy(v.data(), bytes.data() + pos, std::size_t(d) * sizeof(T));
        pos += std::size_t(d) * sizeof(T);
        out.push_back(std::move(v));
    }
    return out;
}

template <class T>
void write_xvecs(const std::filesystem::path& path, const std::vector<std::vector<T>>& rows) {
    std::vector<std::uint8_t> bytes;
    for (const auto& r : rows) {
        const auto d = std::uint32_t(r.size());
        const auto* p = reinterpret_cast<const std::uint8_t*>(&d);
        bytes.insert(bytes.end(), p, p + 4);
        const auto* q = reinterpret_cast<const std::uint8_t*>(r.data());
        bytes.insert(bytes.end(), q, q + r.size() * sizeof(T));
    }
    write_file_atomic(path, bytes);
}

}  // namespace detail

inline std::vector<std::vector<float>> read_fvecs(const std::filesystem::path& p) {
    auto rows = detail::read_xvecs<float>(p);
    for (std::size_t i = 0; i < rows.size(); ++i)
        if (!all_finite(rows[i])) fail(ErrorCode::kFormat, p.string() + ": non-finite value in vector " + std::to_string(i));
    return rows;
}

inline std::vector<std::vector<std::int32_t>> read_ivecs(const std::filesystem::path& p) {
    return detail::read_xvecs<std::int32_t>(p);
}

inline void write_fvecs(const std::filesystem::path& p, const std::vector<std::vector<float>>& rows) {
    detail::write_xvecs(p, rows);
}

inline void write_ivecs(const std::filesystem::path& p, const std::vector<std::vector<std::int32_t>>& rows) {
    detail::write_xvecs(p, rows);
}

/// Row i becomes id i.
inline std::vector<VectorRecord> as_records(const std::vector<std::vector<float>>& rows) {
    std::vector<VectorRecord> out;
    out.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) out.push_back({NodeId(i), rows[i]});
    return out;
}

struct CorpusEntry {
    std::string title;
    std::string text;
};

inline std::vector<CorpusEntry> read_jsonl_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::kIo, "cannot read " + path.string());
    std::vector<CorpusEntry> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            auto j = nlohmann::json::parse(line);
            out.push_back({j.value("title", "doc" + std::to_string(out.size() + 1)), j.at("text").get<std::string>()});
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::kFormat, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

/// Writes each entry to `<dir>/<nnnnn>.txt` so it can be indexed like any
/// other file; returns the paths in corpus order.
inline std::vector<std::filesystem::path> materialize_corpus(const std::vector<CorpusEntry>& corpus,
                                                             const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> out;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%05zu.txt", i);
        out.push_back(dir / name);
        write_file_atomic(out.back(), corpus[i].text);
    }
    return out;
}

}  // namespace ecovector
