#pragma once

// Disk-partitioned ANN index: a resident HNSW graph over k-means centroids
// routes each query to a few clusters, whose own HNSW graphs live on disk and
// are loaded one at a time, searched, and released.

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

#include "ecovector/core.hpp"
#include "ecovector/graph_io.hpp"
#include "ecovector/hnsw.hpp"
#include "ecovector/kmeans.hpp"

namespace ecovector {

namespace fs = std::filesystem;

inline constexpr int kManifestVersion = 1;

struct BuildOptions {
    std::size_t n_clusters = 100;
    HnswParams centroid_params{8, 0, 64, 1.0, 0.0};
    HnswParams cluster_params{8, 0, 64, 1.0, 0.0};
    int kmeans_iters = 25;
    std::uint64_t seed = 42;
    Metric metric = Metric::kL2;
    std::size_t max_resident_clusters = 1;
};

struct SearchParams {
    std::size_t n_probe = 8;
    std::size_t ef_c = 32;
    std::size_t ef_l = 64;
    std::size_t k = 10;

    void validate(std::size_t n_clusters) const {
        if (k == 0) fail(ErrorCode::kInvalidArgument, "k must be positive");
        if (n_probe < 1 || n_probe > n_clusters)
            fail(ErrorCode::kInvalidArgument, "n_probe must be in [1, " + std::to_string(n_clusters) + "]");
        if (ef_c < n_probe) fail(ErrorCode::kInvalidArgument, "ef_c must be >= n_probe");
        if (ef_l < k) fail(ErrorCode::kInvalidArgument, "ef_l must be >= k");
    }
};

struct ClusterInfo {
    std::string graph_file;
    std::string vector_file;
    std::uint64_t graph_bytes = 0;
    std::uint64_t vector_bytes = 0;
    std::size_t live_count = 0;

    bool empty() const { return live_count == 0; }
    std::uint64_t bytes() const { return graph_bytes + vector_bytes; }
};

struct ResidencyEvent {
    enum class Kind { kLoad, kUnload };
    Kind kind;
    std::uint32_t cluster;
    std::size_t resident_after;
};

struct SearchTrace {
    std::uint64_t centroid_distance_computations = 0;
    std::uint64_t cluster_distance_computations = 0;
    std::uint64_t centroid_nodes_expanded = 0;
    std::uint64_t cluster_nodes_expanded = 0;
    std::uint64_t neighbor_visits = 0;
    std::size_t clusters_loaded = 0;
    std::uint64_t bytes_read = 0;
    std::size_t max_resident = 0;
    std::size_t peak_cluster_memory_bytes = 0;
    std::vector<std::uint32_t> probed;
    std::vector<ResidencyEvent> events;

    std::uint64_t distance_computations() const {
        return centroid_distance_computations + cluster_distance_computations;
    }

    /// key=value lines, one per counter.
    std::string to_text() const {
        std::ostringstream os;
        os << "distance_computations=" << distance_computations() << '\n'
           << "centroid_distance_computations=" << centroid_distance_computations << '\n'
           << "cluster_distance_computations=" << cluster_distance_computations << '\n'
           << "clusters_loaded=" << clusters_loaded << '\n'
           << "bytes_read=" << bytes_read << '\n'
           << "max_resident=" << max_resident << '\n'
           << "probed=";
        for (std::size_t i = 0; i < probed.size(); ++i) os << (i ? "," : "") << probed[i];
        os << '\n';
        return os.str();
    }
};

struct SearchOutcome {
    std::vector<Neighbor> hits;
    SearchTrace trace;
};

inline nlohmann::json to_json(const HnswParams& p) {
    return {{"M", p.M}, {"max_m0", p.level0_cap()}, {"ef_construction", p.ef_construction},
            {"alpha", p.alpha}, {"ml", p.level_factor()}};
}

inline HnswParams hnsw_params_from_json(const nlohmann::json& j) {
    HnswParams p;
    p.M = j.at("M").get<std::size_t>();
    p.max_m0 = j.at("max_m0").get<std::size_t>();
    p.ef_construction = j.at("ef_construction").get<std::size_t>();
    p.alpha = j.at("alpha").get<double>();
    p.ml = j.at("ml").get<double>();
    p.validate();
    return p;
}

class EcoVectorIndex {
public:
    /// A cluster graph held in RAM. Releasing the handle unloads it.
    class LoadedCluster {
    public:
        LoadedCluster(const EcoVectorIndex* owner, std::uint32_t cluster, HnswGraph graph, std::uint64_t bytes)
            : owner_(owner), cluster_(cluster), graph_(std::move(graph)), bytes_(bytes) {}
        LoadedCluster(LoadedCluster&& o) noexcept
            : owner_(std::exchange(o.owner_, nullptr)), cluster_(o.cluster_), graph_(std::move(o.graph_)),
              bytes_(o.bytes_) {}
        LoadedCluster(const LoadedCluster&) = delete;
        LoadedCluster& operator=(const LoadedCluster&) = delete;
        LoadedCluster& operator=(LoadedCluster&&) = delete;
        ~LoadedCluster() {
            if (owner_) owner_->note_unload(cluster_);
        }

        HnswGraph& graph() { return graph_; }
        const HnswGraph& graph() const { return graph_; }
        std::uint32_t cluster() const { return cluster_; }
        std::uint64_t bytes_read() const { return bytes_; }

    private:
        const EcoVectorIndex* owner_;
        std::uint32_t cluster_;
        HnswGraph graph_;
        std::uint64_t bytes_;
    };

    EcoVectorIndex() : lock_(std::make_unique<std::shared_mutex>()) {}
    EcoVectorIndex(EcoVectorIndex&& o) noexcept { *this = std::move(o); }
    EcoVectorIndex& operator=(EcoVectorIndex&& o) noexcept {
        dir_ = std::move(o.dir_);
        opts_ = o.opts_;
        dim_ = o.dim_;
        centroids_ = std::move(o.centroids_);
        centroid_graph_ = std::move(o.centroid_graph_);
        clusters_ = std::move(o.clusters_);
        assignments_ = std::move(o.assignments_);
        live_count_ = o.live_count_;
        kmeans_iterations_ = o.kmeans_iterations_;
        resident_.store(o.resident_.load());
        peak_resident_.store(o.peak_resident_.load());
        lock_ = std::move(o.lock_);
        observer_ = std::move(o.observer_);
        return *this;
    }

    // -- construction ----------------------------------------------------------

    static EcoVectorIndex build(std::span<const VectorRecord> vectors, const BuildOptions& opts, const fs::path& dir) {
        if (vectors.empty()) fail(ErrorCode::kEmpty, "cannot build an index over zero vectors");
        const std::size_t dim = vectors.front().dim();
        std::unordered_set<NodeId> seen;
        for (const auto& r : vectors) {
            check_record(r, dim);
            if (!seen.insert(r.id).second) fail(ErrorCode::kDuplicateKey, "duplicate id " + std::to_string(r.id));
        }
        if (opts.max_resident_clusters < 1) fail(ErrorCode::kInvalidArgument, "max_resident_clusters must be >= 1");

        EcoVectorIndex idx;
        idx.dir_ = dir;
        idx.opts_ = opts;
        idx.dim_ = dim;

        Rng rng(opts.seed);
        KMeansModel km = kmeans_fit(vectors, opts.n_clusters, opts.kmeans_iters, rng);
        idx.kmeans_iterations_ = km.iterations_run;
        idx.centroids_ = std::move(km.centroids);
        idx.build_centroid_graph();

        fs::create_directories(dir / "clusters");
        std::vector<std::vector<VectorRecord>> members(idx.centroids_.size());
        for (const auto& r : vectors) {
            const auto c = km.assignments.at(r.id);
            members[c].push_back(r);
            idx.assignments_[r.id] = c;
        }
        idx.clusters_.resize(idx.centroids_.size());
        for (std::uint32_t c = 0; c < members.size(); ++c) {
            HnswGraph g(dim, opts.cluster_params, opts.metric);
            for (const auto& r : members[c]) {
                Rng level_rng = idx.level_rng(r.id);
                g.insert(r, level_rng);
            }
            idx.persist_cluster(c, g);
        }
        idx.live_count_ = vectors.size();
        idx.write_centroids();
        idx.write_manifest();
        return idx;
    }

    static EcoVectorIndex open(const fs::path& dir) {
        const auto text = read_file_bytes(dir / "manifest.json");
        nlohmann::json m;
        try {
            m = nlohmann::json::parse(text.begin(), text.end());
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::kFormat, std::string("manifest: ") + e.what());
        }
        if (m.value("format_version", 0) != kManifestVersion)
            fail(ErrorCode::kFormat, "unsupported manifest version");

        EcoVectorIndex idx;
        idx.dir_ = dir;
        try {
            idx.dim_ = m.at("dim").get<std::size_t>();
            idx.opts_.n_clusters = m.at("n_clusters").get<std::size_t>();
            idx.opts_.metric = parse_metric(m.at("metric").get<std::string>());
            idx.opts_.seed = m.at("seed").get<std::uint64_t>();
            idx.opts_.max_resident_clusters = m.at("max_resident_clusters").get<std::size_t>();
            idx.opts_.kmeans_iters = m.at("kmeans_max_iters").get<int>();
            idx.opts_.centroid_params = hnsw_params_from_json(m.at("centroid_params"));
            idx.opts_.cluster_params = hnsw_params_from_json(m.at("cluster_params"));
            idx.live_count_ = m.at("live_count").get<std::size_t>();
            idx.kmeans_iterations_ = m.at("kmeans_iterations").get<int>();
            for (const auto& c : m.at("clusters")) {
                ClusterInfo info;
                info.graph_file = c.at("graph_file").get<std::string>();
                info.vector_file = c.at("vector_file").get<std::string>();
                info.graph_bytes = c.at("graph_bytes").get<std::uint64_t>();
                info.vector_bytes = c.at("vector_bytes").get<std::uint64_t>();
                info.live_count = c.at("live_count").get<std::size_t>();
                idx.clusters_.push_back(info);
            }
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::kFormat, std::string("manifest: ") + e.what());
        }
        if (idx.clusters_.size() != idx.opts_.n_clusters) fail(ErrorCode::kFormat, "manifest cluster count mismatch");

        std::size_t cdim = 0;
        for (auto& r : deserialize_vectors(read_file_bytes(dir / "centroids.vec"), &cdim)) {
            if (r.id != idx.centroids_.size()) fail(ErrorCode::kFormat, "centroid ids out of order");
            idx.centroids_.push_back(std::move(r.values));
        }
        if (cdim != idx.dim_ || idx.centroids_.size() != idx.clusters_.size())
            fail(ErrorCode::kFormat, "centroid file does not match manifest");
        idx.centroid_graph_ = deserialize_graph(read_file_bytes(dir / "centroids.graph"),
                                                idx.opts_.centroid_params, idx.opts_.metric);
        for (std::uint32_t c = 0; c < idx.centroids_.size(); ++c) idx.centroid_graph_.set_vector(c, idx.centroids_[c]);

        std::size_t total = 0;
        for (std::uint32_t c = 0; c < idx.clusters_.size(); ++c) {
            auto recs = deserialize_vectors(read_file_bytes(dir / idx.clusters_[c].vector_file));
            if (recs.size() != idx.clusters_[c].live_count) fail(ErrorCode::kFormat, "cluster count mismatch");
            for (const auto& r : recs) idx.assignments_[r.id] = c;
            total += recs.size();
        }
        if (total != idx.live_count_) fail(ErrorCode::kFormat, "live count mismatch");
        return idx;
    }

    // -- accessors -----------------------------------------------------------------

    const fs::path& directory() const { return dir_; }
    const BuildOptions& options() const { return opts_; }
    std::size_t dim() const { return dim_; }
    std::size_t n_clusters() const { return centroids_.size(); }
    std::size_t live_count() const { return live_count_; }
    int kmeans_iterations() const { return kmeans_iterations_; }
    const HnswGraph& centroid_graph() const { return centroid_graph_; }
    const std::vector<std::vector<float>>& centroids() const { return centroids_; }
    const ClusterInfo& cluster(std::uint32_t c) const { return clusters_.at(c); }
    bool contains(NodeId id) const { return assignments_.count(id) != 0; }
    std::optional<std::uint32_t> cluster_of(NodeId id) const {
        auto it = assignments_.find(id);
        if (it == assignments_.end()) return std::nullopt;
        return it->second;
    }
    std::size_t max_cluster_size() const {
        std::size_t m = 0;
        for (const auto& c : clusters_) m = std::max(m, c.live_count);
        return m;
    }
    std::size_t peak_resident_clusters() const { return peak_resident_.load(); }
    std::size_t resident_clusters() const { return resident_.load(); }

    /// Called on every cluster load/unload (from the searching thread).
    void set_residency_observer(std::function<void(const ResidencyEvent&)> f) { observer_ = std::move(f); }

    // -- cluster access -------------------------------------------------------------

    LoadedCluster load_cluster(std::uint32_t c) const {
        const ClusterInfo& info = clusters_.at(c);
        const auto gbytes = read_cluster_file(info.graph_file);
        const auto vbytes = read_cluster_file(info.vector_file);
        HnswGraph g = deserialize_graph(gbytes, opts_.cluster_params, opts_.metric);
        for (const auto& r : deserialize_vectors(vbytes)) g.set_vector(r.id, r.values);
        for (NodeId id : g.live_ids())
            if (!g.has_vector(id)) fail(ErrorCode::kFormat, "cluster " + std::to_string(c) + " lacks vector for " + std::to_string(id));
        note_load(c);
        return LoadedCluster(this, c, std::move(g), gbytes.size() + vbytes.size());
    }

    std::vector<VectorRecord> live_vectors() const {
        std::vector<VectorRecord> out;
        for (std::uint32_t c = 0; c < clusters_.size(); ++c) {
            auto v = deserialize_vectors(read_cluster_file(clusters_[c].vector_file));
            out.insert(out.end(), std::make_move_iterator(v.begin()), std::make_move_iterator(v.end()));
        }
        std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
        return out;
    }

    // -- search ---------------------------------------------------------------------

    SearchOutcome search(std::span<const float> query, const SearchParams& sp) const {
        std::shared_lock guard(*lock_);
        if (query.size() != dim_)
            fail(ErrorCode::kDimensionMismatch, "query dimension " + std::to_string(query.size()) +
                                                    " differs from index dimension " + std::to_string(dim_));
        sp.validate(n_clusters());
        SearchOutcome out;
        if (live_count_ == 0) return out;
        SearchTrace& tr = out.trace;

        GraphSearchStats cst;
        const auto routed = centroid_graph_.search(query, std::min(sp.ef_c, n_clusters()), sp.ef_c, &cst);
        std::vector<std::uint32_t> probe;
        std::unordered_set<std::uint32_t> taken;
        for (const auto& n : routed) {
            if (probe.size() == sp.n_probe) break;
            const auto c = std::uint32_t(n.id);
            taken.insert(c);
            if (!clusters_[c].empty()) probe.push_back(c);
        }
        if (probe.size() < sp.n_probe) {
            std::vector<Neighbor> rest;
            for (std::uint32_t c = 0; c < clusters_.size(); ++c) {
                if (taken.count(c) || clusters_[c].empty()) continue;
                ++cst.distance_computations;
                rest.push_back({c, distance(query, centroids_[c], opts_.metric)});
            }
            std::sort(rest.begin(), rest.end(), closer);
            for (const auto& n : rest) {
                if (probe.size() == sp.n_probe) break;
                probe.push_back(std::uint32_t(n.id));
            }
        }
        tr.centroid_distance_computations = cst.distance_computations;
        tr.centroid_nodes_expanded = cst.nodes_expanded;
        tr.neighbor_visits = cst.neighbor_visits;
        tr.probed = probe;

        std::size_t resident = 0;
        std::vector<Neighbor> merged;
        for (std::uint32_t c : probe) {
            if (resident + 1 > opts_.max_resident_clusters)
                fail(ErrorCode::kBusy, "resident cluster budget exceeded");
            LoadedCluster lc = load_cluster(c);
            ++resident;
            tr.events.push_back({ResidencyEvent::Kind::kLoad, c, resident});
            tr.max_resident = std::max(tr.max_resident, resident);
            tr.peak_cluster_memory_bytes = std::max(tr.peak_cluster_memory_bytes, lc.graph().memory_bytes());
            ++tr.clusters_loaded;
            tr.bytes_read += lc.bytes_read();
            GraphSearchStats st;
            for (const auto& n : lc.graph().search(query, sp.k, sp.ef_l, &st)) merged.push_back(n);
            tr.cluster_distance_computations += st.distance_computations;
            tr.cluster_nodes_expanded += st.nodes_expanded;
            tr.neighbor_visits += st.neighbor_visits;
            {
                LoadedCluster release = std::move(lc);
            }
            --resident;
            tr.events.push_back({ResidencyEvent::Kind::kUnload, c, resident});
        }
        std::sort(merged.begin(), merged.end(), closer);
        if (merged.size() > sp.k) merged.resize(sp.k);
        out.hits = std::move(merged);
        return out;
    }

    // -- updates --------------------------------------------------------------------

    /// Routes to the nearest centroid by exact scan. Centroids are not moved.
    std::uint32_t insert(const VectorRecord& record) {
        std::unique_lock guard(*lock_);
        check_record(record, dim_);
        if (contains(record.id)) fail(ErrorCode::kDuplicateKey, "id " + std::to_string(record.id) + " is already live");
        const std::uint32_t c = nearest_centroid(record.values, centroids_);
        {
            LoadedCluster lc = load_cluster(c);
            Rng rng = level_rng(record.id);
            lc.graph().insert(record, rng);
            persist_cluster(c, lc.graph());
        }
        assignments_[record.id] = c;
        ++live_count_;
        write_manifest();
        return c;
    }

    void erase(NodeId id) {
        std::unique_lock guard(*lock_);
        auto it = assignments_.find(id);
        if (it == assignments_.end()) fail(ErrorCode::kNotFound, "unknown id " + std::to_string(id));
        const std::uint32_t c = it->second;
        {
            LoadedCluster lc = load_cluster(c);
            lc.graph().remove(id);
            lc.graph().compact();
            persist_cluster(c, lc.graph());
        }
        assignments_.erase(it);
        --live_count_;
        write_manifest();
    }

    /// Re-clusters every live vector from scratch in the same directory.
    void rebuild() {
        auto vecs = live_vectors();
        BuildOptions o = opts_;
        o.n_clusters = std::min(o.n_clusters, vecs.size());
        for (const auto& c : clusters_) {
            fs::remove(dir_ / c.graph_file);
            fs::remove(dir_ / c.vector_file);
        }
        *this = build(vecs, o, dir_);
    }

private:
    Rng level_rng(NodeId id) const { return Rng(mix64(opts_.seed ^ mix64(id))); }

    void build_centroid_graph() {
        centroid_graph_ = HnswGraph(dim_, opts_.centroid_params, opts_.metric);
        for (std::uint32_t c = 0; c < centroids_.size(); ++c) {
            Rng rng(mix64(opts_.seed + 0x5eedULL + c));
            centroid_graph_.insert({c, centroids_[c]}, rng);
        }
    }

    std::vector<std::uint8_t> read_cluster_file(const std::string& rel) const {
        const fs::path p = dir_ / rel;
        if (!fs::exists(p)) fail(ErrorCode::kIo, "missing cluster file " + p.string() + " (index corrupted)");
        return read_file_bytes(p);
    }

    void persist_cluster(std::uint32_t c, const HnswGraph& g) {
        char name[32];
        std::snprintf(name, sizeof(name), "clusters/c%05u", c);
        ClusterInfo& info = clusters_.at(c);
        info.graph_file = std::string(name) + ".graph";
        info.vector_file = std::string(name) + ".vec";
        const auto gbytes = serialize_graph(g);
        const auto vbytes = serialize_vectors(dim_, graph_vectors(g));
        write_file_atomic(dir_ / info.graph_file, gbytes);
        write_file_atomic(dir_ / info.vector_file, vbytes);
        info.graph_bytes = gbytes.size();
        info.vector_bytes = vbytes.size();
        info.live_count = g.size();
    }

    void write_centroids() {
        std::vector<VectorRecord> recs;
        for (std::uint32_t c = 0; c < centroids_.size(); ++c) recs.push_back({c, centroids_[c]});
        write_file_atomic(dir_ / "centroids.vec", serialize_vectors(dim_, recs));
        write_file_atomic(dir_ / "centroids.graph", serialize_graph(centroid_graph_));
    }

    void write_manifest() const {
        nlohmann::json m;
        m["format_version"] = kManifestVersion;
        m["graph_format_version"] = kGraphFormatVersion;
        m["dim"] = dim_;
        m["metric"] = std::string(metric_name(opts_.metric));
        m["n_clusters"] = centroids_.size();
        m["live_count"] = live_count_;
        m["seed"] = opts_.seed;
        m["max_resident_clusters"] = opts_.max_resident_clusters;
        m["kmeans_max_iters"] = opts_.kmeans_iters;
        m["kmeans_iterations"] = kmeans_iterations_;
        m["centroid_params"] = to_json(opts_.centroid_params);
        m["cluster_params"] = to_json(opts_.cluster_params);
        m["centroid_graph"] = "centroids.graph";
        m["centroid_vectors"] = "centroids.vec";
        auto& cl = m["clusters"] = nlohmann::json::array();
        for (std::uint32_t c = 0; c < clusters_.size(); ++c) {
            const auto& i = clusters_[c];
            cl.push_back({{"index", c}, {"graph_file", i.graph_file}, {"vector_file", i.vector_file},
                          {"graph_bytes", i.graph_bytes}, {"vector_bytes", i.vector_bytes},
                          {"live_count", i.live_count}});
        }
        write_file_atomic(dir_ / "manifest.json", m.dump(2) + "\n");
    }

    void note_load(std::uint32_t c) const {
        const auto now = ++resident_;
        auto peak = peak_resident_.load();
        while (now > peak && !peak_resident_.compare_exchange_weak(peak, now)) {
        }
        if (observer_) observer_({ResidencyEvent::Kind::kLoad, c, now});
    }

    void note_unload(std::uint32_t c) const {
        const auto now = --resident_;
        if (observer_) observer_({ResidencyEvent::Kind::kUnload, c, now});
    }

    fs::path dir_;
    BuildOptions opts_;
    std::size_t dim_ = 0;
    std::vector<std::vector<float>> centroids_;
    HnswGraph centroid_graph_;
    std::vector<ClusterInfo> clusters_;
    std::unordered_map<NodeId, std::uint32_t> assignments_;
    std::size_t live_count_ = 0;
    int kmeans_iterations_ = 0;
    mutable std::atomic<std::size_t> resident_{0};
    mutable std::atomic<std::size_t> peak_resident_{0};
    std::unique_ptr<std::shared_mutex> lock_;
    std::function<void(const ResidencyEvent&)> observer_;
};

}  // namespace ecovector
