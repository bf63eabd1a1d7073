#pragma once

// Recall / throughput sweep over n_probe and ef_L with cost-model columns.

#include <chrono>
#include <map>
#include <ostream>

#include "ecovector/ecovector_index.hpp"
#include "ecovector/trace_validation.hpp"

namespace ecovector {

struct BenchConfig {
    std::vector<std::size_t> n_probes{1, 2, 4, 8, 16, 32};
    std::vector<std::size_t> ef_ls{64};
    std::size_t k = 10;
    std::size_t ef_c = 32;
    cost::CostModelParams cost;
};

struct BenchRow {
    std::size_t n_probe = 0;
    std::size_t ef_c = 0;
    std::size_t ef_l = 0;
    std::size_t k = 0;
    std::size_t queries = 0;
    double recall = 0.0;
    double qps = 0.0;
    double distance_computations = 0.0;
    double neighbor_visits = 0.0;
    double bytes_read = 0.0;
    double clusters_loaded = 0.0;
    double model_ops = 0.0;
    double ops_ratio = 0.0;  // measured neighbor visits / model ops
    double model_t_s_ms = 0.0;
    double model_t_d_ms = 0.0;
    double model_energy_j = 0.0;
    double measured_t_d_ms = 0.0;
};

struct BenchResult {
    std::vector<BenchRow> rows;
    /// For every ef_L, recall never drops as n_probe grows.
    bool recall_monotone = true;
};

inline std::vector<std::vector<NodeId>> brute_force_truth(const EcoVectorIndex& index,
                                                          const std::vector<std::vector<float>>& queries, std::size_t k) {
    const auto base = index.live_vectors();
    std::vector<std::vector<NodeId>> out;
    for (const auto& q : queries) out.push_back(brute_force_topk(q, base, std::min(k, base.size()), index.options().metric));
    return out;
}

inline BenchResult run_bench(const EcoVectorIndex& index, const std::vector<std::vector<float>>& queries,
                             std::vector<std::vector<NodeId>> truth, const BenchConfig& cfg) {
    if (queries.empty()) fail(ErrorCode::kEmpty, "bench needs at least one query");
    if (index.live_count() == 0) fail(ErrorCode::kEmpty, "bench needs a non-empty index");
    if (truth.empty()) truth = brute_force_truth(index, queries, cfg.k);
    if (truth.size() != queries.size()) fail(ErrorCode::kInvalidArgument, "ground truth and query counts differ");
    for (auto& t : truth)
        if (t.size() > cfg.k) t.resize(cfg.k);

    BenchResult res;
    std::map<std::size_t, double> last_recall;
    auto n_probes = cfg.n_probes;
    std::sort(n_probes.begin(), n_probes.end());
    for (std::size_t np : n_probes) {
        if (np == 0 || np > index.n_clusters()) continue;
        for (std::size_t ef_l : cfg.ef_ls) {
            if (ef_l < cfg.k) continue;
            SearchParams sp{np, std::max(cfg.ef_c, np), ef_l, cfg.k};
            BenchRow row;
            row.n_probe = np;
            row.ef_c = sp.ef_c;
            row.ef_l = ef_l;
            row.k = cfg.k;
            row.queries = queries.size();
            double recall = 0.0, model_td = 0.0;
            const auto t0 = std::chrono::steady_clock::now();
            for (std::size_t i = 0; i < queries.size(); ++i) {
                const auto out = index.search(queries[i], sp);
                std::vector<NodeId> found;
                for (const auto& h : out.hits) found.push_back(h.id);
                recall += recall_at_k(found, truth[i]);
                const auto rep = cost::validate_trace(out.trace, index, sp, cfg.cost);
                row.distance_computations += rep.measured_distance_computations;
                row.neighbor_visits += rep.measured_ops;
                row.bytes_read += rep.measured_bytes;
                row.clusters_loaded += double(out.trace.clusters_loaded);
                row.measured_t_d_ms += rep.measured_t_d_ms;
                row.model_ops = rep.model_ops;
                row.model_t_s_ms = rep.model_t_s_ms;
                model_td = rep.model_t_d_ms;
                row.model_energy_j = rep.model_energy_j;
            }
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            const double n = double(queries.size());
            row.recall = recall / n;
            row.qps = secs > 0.0 ? n / secs : 0.0;
            row.distance_computations /= n;
            row.neighbor_visits /= n;
            row.bytes_read /= n;
            row.clusters_loaded /= n;
            row.measured_t_d_ms /= n;
            row.model_t_d_ms = model_td;
            row.ops_ratio = row.model_ops > 0.0 ? row.neighbor_visits / row.model_ops : 0.0;
            auto it = last_recall.find(ef_l);
            if (it != last_recall.end() && row.recall < it->second) res.recall_monotone = false;
            last_recall[ef_l] = row.recall;
            res.rows.push_back(row);
        }
    }
    return res;
}

inline void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows) {
    os << "n_probe,ef_c,ef_l,k,queries,recall,qps,distance_computations,neighbor_visits,bytes_read,clusters_loaded,"
          "model_ops,ops_ratio,model_t_s_ms,model_t_d_ms,model_energy_j,measured_t_d_ms\n";
    for (const auto& r : rows) {
        os << r.n_probe << ',' << r.ef_c << ',' << r.ef_l << ',' << r.k << ',' << r.queries << ',' << r.recall << ','
           << r.qps << ',' << r.distance_computations << ',' << r.neighbor_visits << ',' << r.bytes_read << ','
           << r.clusters_loaded << ',' << r.model_ops << ',' << r.ops_ratio << ',' << r.model_t_s_ms << ','
           << r.model_t_d_ms << ',' << r.model_energy_j << ',' << r.measured_t_d_ms << '\n';
    }
}

}  // namespace ecovector
