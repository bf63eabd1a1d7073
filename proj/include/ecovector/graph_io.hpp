#pragma once

// Binary graph and vector-block files. All integers are little-endian.
//
// Graph file:
//   "ECOV" | u16 version | u32 dim | u32 node_count
//   node_count x { u64 id | u16 level | (level+1) x u32 count | sum(count) x u64 neighbor }
//   ceil(node_count / 8) bytes deleted bitmap
// The entry point is the first node record; the rest follow in ascending id.
// Tombstones are never written, so the bitmap is all zero on output.
//
// Vector block:
//   "ECVV" | u16 version | u32 dim | u32 count | count x { u64 id | dim x f32 }

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "ecovector/core.hpp"
#include "ecovector/hnsw.hpp"

namespace ecovector {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

inline constexpr std::uint16_t kGraphFormatVersion = 1;
inline constexpr std::size_t kGraphHeaderBytes = 4 + 2 + 4 + 4;

namespace detail {

class ByteWriter {
public:
    template <typename T>
    void put(T v) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
        out_.insert(out_.end(), p, p + sizeof(T));
    }
    void bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
    std::vector<std::uint8_t>& buffer() { return out_; }

private:
    std::vector<std::uint8_t> out_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, in_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::span<const std::uint8_t> take(std::size_t n) {
        need(n);
        auto s = in_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t remaining() const { return in_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (in_.size() - pos_ < n) fail(ErrorCode::kFormat, "truncated stream");
    }
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

inline void check_magic(ByteReader& r, std::string_view magic, std::uint16_t version) {
    auto m = r.take(4);
    if (std::memcmp(m.data(), magic.data(), 4) != 0)
        fail(ErrorCode::kFormat, "bad magic, expected " + std::string(magic));
    const auto v = r.get<std::uint16_t>();
    if (v != version)
        fail(ErrorCode::kFormat, "unsupported format version " + std::to_string(v) + " (expected " +
                                     std::to_string(version) + ")");
}

}  // namespace detail

inline std::vector<NodeId> serialization_order(const HnswGraph& g) {
    std::vector<NodeId> ids = g.live_ids();
    if (auto ep = g.entry_point()) {
        ids.erase(std::remove(ids.begin(), ids.end(), *ep), ids.end());
        ids.insert(ids.begin(), *ep);
    }
    return ids;
}

inline std::vector<std::uint8_t> serialize_graph(const HnswGraph& g) {
    detail::ByteWriter w;
    w.bytes("ECOV");
    w.put<std::uint16_t>(kGraphFormatVersion);
    w.put<std::uint32_t>(std::uint32_t(g.dim()));
    const std::vector<NodeId> order = serialization_order(g);
    w.put<std::uint32_t>(std::uint32_t(order.size()));
    for (NodeId id : order) {
        const int lvl = g.level(id);
        w.put<std::uint64_t>(id);
        w.put<std::uint16_t>(std::uint16_t(lvl));
        for (int l = 0; l <= lvl; ++l) w.put<std::uint32_t>(std::uint32_t(g.neighbors(id, l).size()));
        for (int l = 0; l <= lvl; ++l)
            for (NodeId nb : g.neighbors(id, l)) w.put<std::uint64_t>(nb);
    }
    w.buffer().resize(w.buffer().size() + (order.size() + 7) / 8, 0);
    return std::move(w.buffer());
}

/// Byte size of the serialized graph, computed from counts alone.
inline std::size_t predicted_graph_file_size(const HnswGraph& g) {
    std::size_t bytes = kGraphHeaderBytes;
    const auto ids = g.live_ids();
    for (NodeId id : ids) {
        const int lvl = g.level(id);
        bytes += 8 + 2 + 4 * std::size_t(lvl + 1);
        for (int l = 0; l <= lvl; ++l) bytes += 8 * g.neighbors(id, l).size();
    }
    return bytes + (ids.size() + 7) / 8;
}

/// Rebuilds graph structure; vectors are attached separately.
inline HnswGraph deserialize_graph(std::span<const std::uint8_t> bytes, const HnswParams& params,
                                   Metric metric = Metric::kL2) {
    detail::ByteReader r(bytes);
    detail::check_magic(r, "ECOV", kGraphFormatVersion);
    const auto dim = r.get<std::uint32_t>();
    const auto count = r.get<std::uint32_t>();
    if (dim == 0) fail(ErrorCode::kFormat, "graph file with zero dimension");
    HnswGraph g(dim, params, metric);
    std::vector<NodeId> order;
    order.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto id = r.get<std::uint64_t>();
        const int lvl = r.get<std::uint16_t>();
        std::vector<std::uint32_t> counts(std::size_t(lvl) + 1);
        for (auto& c : counts) c = r.get<std::uint32_t>();
        std::vector<std::vector<NodeId>> links(counts.size());
        for (std::size_t l = 0; l < counts.size(); ++l) {
            if (std::size_t(counts[l]) * 8 > r.remaining()) fail(ErrorCode::kFormat, "truncated stream");
            links[l].resize(counts[l]);
            for (auto& nb : links[l]) nb = r.get<std::uint64_t>();
        }
        g.restore_node(id, lvl, std::move(links));
        order.push_back(id);
    }
    auto bitmap = r.take((std::size_t(count) + 7) / 8);
    for (auto b : bitmap)
        if (b != 0) fail(ErrorCode::kFormat, "graph file contains tombstoned nodes");
    if (r.remaining() != 0) fail(ErrorCode::kFormat, "trailing bytes after graph");
    g.restore_entry(order.empty() ? std::nullopt : std::optional<NodeId>(order.front()));
    for (NodeId id : order)
        for (int l = 0; l <= g.level(id); ++l)
            for (NodeId nb : g.neighbors(id, l))
                if (!g.contains(nb) || g.level(nb) < l)
                    fail(ErrorCode::kFormat, "edge to missing node " + std::to_string(nb));
    return g;
}

// -- vector blocks -------------------------------------------------------------

inline std::vector<std::uint8_t> serialize_vectors(std::size_t dim, std::span<const VectorRecord> records) {
    detail::ByteWriter w;
    w.bytes("ECVV");
    w.put<std::uint16_t>(kGraphFormatVersion);
    w.put<std::uint32_t>(std::uint32_t(dim));
    w.put<std::uint32_t>(std::uint32_t(records.size()));
    for (const auto& r : records) {
        if (r.values.size() != dim) fail(ErrorCode::kDimensionMismatch, "vector block dimension mismatch");
        w.put<std::uint64_t>(r.id);
        for (float x : r.values) w.put<float>(x);
    }
    return std::move(w.buffer());
}

inline std::vector<VectorRecord> deserialize_vectors(std::span<const std::uint8_t> bytes, std::size_t* dim_out = nullptr) {
    detail::ByteReader r(bytes);
    detail::check_magic(r, "ECVV", kGraphFormatVersion);
    const auto dim = r.get<std::uint32_t>();
    const auto count = r.get<std::uint32_t>();
    if (std::size_t(count) * (8 + 4 * std::size_t(dim)) != r.remaining())
        fail(ErrorCode::kFormat, "vector block size does not match header");
    std::vector<VectorRecord> out(count);
    for (auto& rec : out) {
        rec.id = r.get<std::uint64_t>();
        rec.values.resize(dim);
        for (auto& x : rec.values) x = r.get<float>();
    }
    if (dim_out) *dim_out = dim;
    return out;
}

/// Live vectors of a graph, ascending id.
inline std::vector<VectorRecord> graph_vectors(const HnswGraph& g) {
    std::vector<VectorRecord> out;
    for (NodeId id : g.live_ids()) {
        auto v = g.vector(id);
        out.push_back({id, {v.begin(), v.end()}});
    }
    return out;
}

// -- files ---------------------------------------------------------------------

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) fail(ErrorCode::kIo, "cannot open " + p.string());
    in.seekg(0, std::ios::end);
    const auto n = in.tellg();
    in.seekg(0);
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(n));
    if (n > 0 && !in.read(reinterpret_cast<char*>(buf.data()), n)) fail(ErrorCode::kIo, "short read on " + p.string());
    return buf;
}

/// Writes to a sibling temp file then renames over the target.
inline void write_file_atomic(const std::filesystem::path& p, std::span<const std::uint8_t> bytes) {
    auto tmp = p;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorCode::kIo, "cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
        out.flush();
        if (!out) fail(ErrorCode::kIo, "write failed on " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, p, ec);
    if (ec) fail(ErrorCode::kIo, "rename to " + p.string() + " failed: " + ec.message());
}

inline void write_file_atomic(const std::filesystem::path& p, std::string_view text) {
    write_file_atomic(p, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace ecovector
