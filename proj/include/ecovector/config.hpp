#pragma once

// Application configuration. Precedence, lowest first: built-in defaults,
// JSON config file, ECOVECTOR_* environment variables, command-line flags.
// Unknown JSON keys are rejected at every nesting level.

#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <set>
#include <type_traits>

#include "json.hpp"

#include "ecovector/costmodel.hpp"
#include "ecovector/ragpipe.hpp"

namespace ecovector {

struct EndpointConfig {
    std::string embed;     // empty: offline hash embedder
    std::string generate;  // empty: offline echo generator
    std::uint32_t timeout_ms = 30000;
    bool stream = true;
};

struct AppConfig {
    std::filesystem::path index_dir = "ecovector-data";
    std::size_t dim = 64;
    PipelineConfig pipeline;
    cost::CostModelParams cost;
    EndpointConfig endpoints;

    void validate() const {
        if (dim == 0) fail(ErrorCode::kInvalidArgument, "dim must be positive");
        if (pipeline.chunk_tokens == 0) fail(ErrorCode::kInvalidArgument, "chunk_tokens must be positive");
        if (pipeline.build.n_clusters == 0) fail(ErrorCode::kInvalidArgument, "n_clusters must be positive");
        if (pipeline.build.max_resident_clusters == 0)
            fail(ErrorCode::kInvalidArgument, "max_resident_clusters must be positive");
        pipeline.build.centroid_params.validate();
        pipeline.build.cluster_params.validate();
        const auto& s = pipeline.search;
        if (s.k == 0 || s.n_probe == 0) fail(ErrorCode::kInvalidArgument, "k and n_probe must be positive");
        if (s.ef_c < s.n_probe) fail(ErrorCode::kInvalidArgument, "ef_c must be >= n_probe");
        if (s.ef_l < s.k) fail(ErrorCode::kInvalidArgument, "ef_l must be >= k");
        pipeline.scr.validate();
        if (cost.V_volts <= 0.0) fail(ErrorCode::kInvalidArgument, "V must be positive");
    }
};

namespace detail {

/// Reads known keys off a JSON object and rejects the rest.
class StrictObject {
public:
    StrictObject(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) fail(ErrorCode::kInvalidArgument, where_ + " must be a JSON object");
    }

    template <class T>
    void read(const char* key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
            if (!it->is_number_unsigned())
                fail(ErrorCode::kInvalidArgument, "config key " + where_ + "." + key + " must be a non-negative integer");
        }
        try {
            out = it->template get<T>();
        } catch (const nlohmann::json::exception&) {
            fail(ErrorCode::kInvalidArgument, "config key " + where_ + "." + key + " has the wrong type");
        }
    }

    void read(const char* key, std::optional<double>& out) {
        double v = 0.0;
        seen_.insert(key);
        if (!j_.contains(key)) return;
        read(key, v);
        out = v;
    }

    const nlohmann::json* child(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) fail(ErrorCode::kInvalidArgument, "unknown config key " + where_ + "." + it.key());
    }

private:
    const nlohmann::json& j_;
    std::string where_;
    std::set<std::string, std::less<>> seen_;
};

inline void read_hnsw(const nlohmann::json& j, const std::string& where, HnswParams& p) {
    StrictObject o(j, where);
    o.read("M", p.M);
    o.read("max_m0", p.max_m0);
    o.read("ef_construction", p.ef_construction);
    o.read("alpha", p.alpha);
    o.finish();
}

}  // namespace detail

/// Overlays `j` onto `cfg`.
inline void apply_config_json(AppConfig& cfg, const nlohmann::json& j) {
    detail::StrictObject o(j, "config");
    std::string index_dir = cfg.index_dir.string();
    o.read("index_dir", index_dir);
    cfg.index_dir = index_dir;
    o.read("dim", cfg.dim);
    auto& b = cfg.pipeline.build;
    o.read("seed", b.seed);
    std::string metric(metric_name(b.metric));
    o.read("metric", metric);
    b.metric = parse_metric(metric);
    o.read("n_clusters", b.n_clusters);
    o.read("kmeans_iters", b.kmeans_iters);
    o.read("max_resident_clusters", b.max_resident_clusters);
    o.read("chunk_tokens", cfg.pipeline.chunk_tokens);
    if (auto* c = o.child("centroid_hnsw")) detail::read_hnsw(*c, "centroid_hnsw", b.centroid_params);
    if (auto* c = o.child("cluster_hnsw")) detail::read_hnsw(*c, "cluster_hnsw", b.cluster_params);
    if (auto* c = o.child("search")) {
        detail::StrictObject s(*c, "search");
        s.read("n_probe", cfg.pipeline.search.n_probe);
        s.read("ef_c", cfg.pipeline.search.ef_c);
        s.read("ef_l", cfg.pipeline.search.ef_l);
        s.read("k", cfg.pipeline.search.k);
        s.finish();
    }
    if (auto* c = o.child("scr")) {
        detail::StrictObject s(*c, "scr");
        s.read("sliding_window_size", cfg.pipeline.scr.sliding_window_size);
        s.read("overlap_size", cfg.pipeline.scr.overlap_size);
        s.read("context_extension_size", cfg.pipeline.scr.context_extension_size);
        s.finish();
    }
    if (auto* c = o.child("cost")) {
        detail::StrictObject s(*c, "cost");
        auto& p = cfg.cost;
        s.read("N", p.N);
        s.read("N_c", p.N_c);
        s.read("d", p.d);
        s.read("n_P", p.n_P);
        s.read("M", p.M);
        s.read("M_prime", p.M_prime);
        s.read("M_h", p.M_h);
        s.read("M_pq", p.M_pq);
        s.read("nbits", p.nbits);
        s.read("ef_H", p.ef_H);
        s.read("ef_c", p.ef_c);
        s.read("ef_L", p.ef_L);
        s.read("t_op_ms", p.t_op_ms);
        s.read("T_seek_ms", p.T_seek_ms);
        s.read("T_cmd_ms", p.T_cmd_ms);
        s.read("T_transfer_ms_per_byte", p.T_transfer_ms_per_byte);
        s.read("I_s_amps", p.I_s_amps);
        s.read("I_d_amps", p.I_d_amps);
        s.read("V_volts", p.V_volts);
        s.finish();
    }
    if (auto* c = o.child("endpoints")) {
        detail::StrictObject s(*c, "endpoints");
        s.read("embed", cfg.endpoints.embed);
        s.read("generate", cfg.endpoints.generate);
        s.read("timeout_ms", cfg.endpoints.timeout_ms);
        s.read("stream", cfg.endpoints.stream);
        s.finish();
    }
    o.finish();
}

inline void apply_config_file(AppConfig& cfg, const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorCode::kInvalidArgument, "config " + path.string() + " is not valid JSON: " + e.what());
    }
    apply_config_json(cfg, j);
}

using EnvLookup = std::function<std::optional<std::string>(const char*)>;

inline std::optional<std::string> process_env(const char* name) {
    if (const char* v = std::getenv(name)) return std::string(v);
    return std::nullopt;
}

/// ECOVECTOR_INDEX_DIR, _DIM, _NC, _N_PROBE, _EF_C, _EF_L, _K, _SEED,
/// _ENDPOINT_EMBED, _ENDPOINT_GENERATE, _TIMEOUT_MS.
inline void apply_env(AppConfig& cfg, const EnvLookup& env = process_env) {
    auto number = [&](const char* name, auto& out) {
        auto v = env(name);
        if (!v) return;
        try {
            if (v->empty() || !std::isdigit(static_cast<unsigned char>(v->front()))) throw std::invalid_argument(*v);
            std::size_t used = 0;
            const unsigned long long n = std::stoull(*v, &used);
            if (used != v->size()) throw std::invalid_argument(*v);
            out = static_cast<std::remove_reference_t<decltype(out)>>(n);
        } catch (const std::exception&) {
            fail(ErrorCode::kInvalidArgument, std::string(name) + " must be a non-negative integer");
        }
    };
    if (auto v = env("ECOVECTOR_INDEX_DIR")) cfg.index_dir = *v;
    number("ECOVECTOR_DIM", cfg.dim);
    number("ECOVECTOR_NC", cfg.pipeline.build.n_clusters);
    number("ECOVECTOR_N_PROBE", cfg.pipeline.search.n_probe);
    number("ECOVECTOR_EF_C", cfg.pipeline.search.ef_c);
    number("ECOVECTOR_EF_L", cfg.pipeline.search.ef_l);
    number("ECOVECTOR_K", cfg.pipeline.search.k);
    number("ECOVECTOR_SEED", cfg.pipeline.build.seed);
    number("ECOVECTOR_TIMEOUT_MS", cfg.endpoints.timeout_ms);
    if (auto v = env("ECOVECTOR_ENDPOINT_EMBED")) cfg.endpoints.embed = *v;
    if (auto v = env("ECOVECTOR_ENDPOINT_GENERATE")) cfg.endpoints.generate = *v;
}

}  // namespace ecovector
