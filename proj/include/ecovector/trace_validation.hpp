#pragma once

// Compares counters from a real EcoVector search against the cost model.

#include "ecovector/costmodel.hpp"
#include "ecovector/ecovector_index.hpp"

namespace ecovector::cost {

struct TraceReport {
    // Adjacency entries examined, which is what ef * M' counts.
    double measured_ops = 0.0;
    // Unique distance evaluations; reported for information.
    double measured_distance_computations = 0.0;
    double model_ops = 0.0;
    double ratio = 0.0;  // measured / model, 0 when the model is 0

    double measured_bytes = 0.0;
    double model_bytes = 0.0;
    double measured_t_d_ms = 0.0;
    double model_t_d_ms = 0.0;
    double model_t_s_ms = 0.0;
    double model_energy_j = 0.0;
};

/// Mean on-disk size of the non-empty clusters, the n_byte of one seek.
inline double mean_cluster_bytes(const EcoVectorIndex& index) {
    double total = 0.0;
    std::size_t n = 0;
    for (std::uint32_t c = 0; c < index.n_clusters(); ++c) {
        if (index.cluster(c).empty()) continue;
        total += double(index.cluster(c).bytes());
        ++n;
    }
    return n ? total / double(n) : 0.0;
}

/// Model parameters for an EcoVector search of `index` with `sp`.
inline CostModelParams ecovector_params(const EcoVectorIndex& index, const SearchParams& sp, CostModelParams base = {}) {
    base.N = double(index.live_count());
    base.N_c = double(index.n_clusters());
    base.d = double(index.dim());
    base.n_P = double(sp.n_probe);
    base.M_prime = double(index.options().cluster_params.M);
    base.ef_c = double(sp.ef_c);
    base.ef_L = double(sp.ef_l);
    return base;
}

inline TraceReport validate_trace(const SearchTrace& trace, const EcoVectorIndex& index, const SearchParams& sp,
                                  const CostModelParams& base = {}) {
    TraceReport r;
    r.measured_ops = double(trace.neighbor_visits);
    r.measured_distance_computations = double(trace.distance_computations());
    r.measured_bytes = double(trace.bytes_read);
    r.measured_t_d_ms = disk_time_ms(double(trace.clusters_loaded),
                                     trace.clusters_loaded ? r.measured_bytes / double(trace.clusters_loaded) : 0.0, base);
    if (index.live_count() == 0) return r;

    const CostModelParams p = ecovector_params(index, sp, base);
    r.model_ops = search_ops(Algorithm::kEcoVector, p);
    r.ratio = r.model_ops > 0.0 ? r.measured_ops / r.model_ops : 0.0;
    const double per_seek = mean_cluster_bytes(index);
    r.model_bytes = double(sp.n_probe) * per_seek;
    r.model_t_d_ms = disk_time_ms(double(sp.n_probe), per_seek, p);
    r.model_t_s_ms = cpu_time_ms(r.model_ops, p);
    r.model_energy_j = energy_joules(r.model_t_s_ms, r.model_t_d_ms, p);
    return r;
}

}  // namespace ecovector::cost
