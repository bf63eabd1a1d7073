#pragma once

// Layered proximity graph with in-place insertion and deletion.
//
// Neighbor lists are kept strictly symmetric: whenever a list is re-pruned,
// the dropped partner loses the reverse edge too. Dropped partners are
// re-attached to the accepted neighbor that occluded them when both sides
// have spare capacity, so the path through the pruning node survives.

#include <cmath>
#include <cstdint>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ecovector/core.hpp"

namespace ecovector {

struct HnswParams {
    std::size_t M = 16;
    std::size_t max_m0 = 0;  // 0 means 2 * M
    std::size_t ef_construction = 64;
    double alpha = 1.0;
    double ml = 0.0;  // 0 means 1 / ln(M)

    std::size_t level0_cap() const { return max_m0 == 0 ? 2 * M : max_m0; }
    double level_factor() const { return ml > 0.0 ? ml : 1.0 / std::log(double(M)); }

    void validate() const {
        if (M < 2) fail(ErrorCode::kInvalidArgument, "HNSW M must be >= 2");
        if (level0_cap() < M) fail(ErrorCode::kInvalidArgument, "HNSW maxM0 must be >= M");
        if (ef_construction < M) fail(ErrorCode::kInvalidArgument, "efConstruction must be >= M");
        if (!(alpha >= 1.0)) fail(ErrorCode::kInvalidArgument, "alpha must be >= 1");
        if (ml < 0.0) fail(ErrorCode::kInvalidArgument, "ml must be positive");
    }

    friend bool operator==(const HnswParams&, const HnswParams&) = default;
};

/// floor(-ln(u) * ml) with u uniform in (0, 1].
inline int get_random_level(double ml, Rng& rng) {
    if (!(ml > 0.0)) fail(ErrorCode::kInvalidArgument, "level factor must be positive");
    const double u = rng.uniform_open_closed();
    return int(std::floor(-std::log(u) * ml));
}

/// Counters filled by read-only graph operations.
struct GraphSearchStats {
    std::uint64_t distance_computations = 0;
    std::uint64_t nodes_expanded = 0;
    std::uint64_t neighbor_visits = 0;  // adjacency entries examined
};

class HnswGraph {
public:
    HnswGraph() = default;
    HnswGraph(std::size_t dim, HnswParams params, Metric metric = Metric::kL2)
        : dim_(dim), params_(params), metric_(metric) {
        params_.validate();
        if (dim_ == 0) fail(ErrorCode::kInvalidArgument, "dimension must be positive");
    }

    std::size_t dim() const noexcept { return dim_; }
    const HnswParams& params() const noexcept { return params_; }
    Metric metric() const noexcept { return metric_; }
    std::optional<NodeId> entry_point() const noexcept { return entry_; }
    int max_level() const noexcept { return max_level_; }
    std::size_t size() const noexcept { return live_; }
    bool empty() const noexcept { return live_ == 0; }
    std::size_t cap(int level) const { return level == 0 ? params_.level0_cap() : params_.M; }

    bool contains(NodeId id) const {
        auto it = nodes_.find(id);
        return it != nodes_.end() && !it->second.deleted;
    }
    bool is_deleted(NodeId id) const {
        auto it = nodes_.find(id);
        return it != nodes_.end() && it->second.deleted;
    }
    int level(NodeId id) const { return node(id).level; }

    const std::vector<NodeId>& neighbors(NodeId id, int level) const {
        const Node& n = node(id);
        if (level < 0 || std::size_t(level) >= n.links.size())
            fail(ErrorCode::kInvalidArgument, "node " + std::to_string(id) + " has no level " +
                                                  std::to_string(level));
        return n.links[std::size_t(level)];
    }

    std::vector<NodeId> live_ids() const {
        std::vector<NodeId> ids;
        ids.reserve(live_);
        for (const auto& [id, n] : nodes_)
            if (!n.deleted) ids.push_back(id);
        std::sort(ids.begin(), ids.end());
        return ids;
    }

    std::size_t tombstone_count() const { return nodes_.size() - live_; }

    // -- vectors ---------------------------------------------------------

    void set_vector(NodeId id, std::span<const float> values) {
        if (values.size() != dim_)
            fail(ErrorCode::kDimensionMismatch, "vector " + std::to_string(id) + " has dimension " +
                                                    std::to_string(values.size()) + ", graph has " +
                                                    std::to_string(dim_));
        if (!all_finite(values))
            fail(ErrorCode::kInvalidArgument, "vector " + std::to_string(id) + " is not finite");
        vectors_[id].assign(values.begin(), values.end());
    }

    bool has_vector(NodeId id) const { return vectors_.count(id) != 0; }

    std::span<const float> vector(NodeId id) const {
        auto it = vectors_.find(id);
        if (it == vectors_.end())
            fail(ErrorCode::kNotFound, "no vector stored for id " + std::to_string(id));
        return it->second;
    }

    // -- mutation ----------------------------------------------------------

    void insert(const VectorRecord& record, Rng& rng) {
        if (contains(record.id))
            fail(ErrorCode::kDuplicateKey, "id " + std::to_string(record.id) + " is already live");
        set_vector(record.id, record.values);
        insert_point(record.id, rng);
    }

    /// Inserts a node whose vector is already stored. A tombstoned id is
    /// revived and keeps its previous level when that level is above 0.
    void insert_point(NodeId id, Rng& rng) {
        const std::span<const float> vec = vector(id);
        if (contains(id)) fail(ErrorCode::kDuplicateKey, "id " + std::to_string(id) + " is already live");

        int lvl = 0;
        if (auto it = nodes_.find(id); it != nodes_.end()) lvl = it->second.level;
        if (lvl <= 0) lvl = get_random_level(params_.level_factor(), rng);

        Node& fresh = nodes_[id];
        fresh.level = lvl;
        fresh.deleted = true;  // stays invisible to traversal until linked
        fresh.links.assign(std::size_t(lvl) + 1, {});

        if (!entry_) {
            fresh.deleted = false;
            ++live_;
            entry_ = id;
            max_level_ = lvl;
            return;
        }

        GraphSearchStats stats;
        NodeId cur = *entry_;
        double cur_dist = dist(vec, cur, stats);
        for (int l = max_level_; l > lvl; --l) greedy_descend(vec, l, cur, cur_dist, stats);

        for (int l = std::min(lvl, max_level_); l >= 0; --l) {
            std::vector<Neighbor> cand = search_layer({cur}, vec, l, params_.ef_construction, id, stats);
            if (cand.empty()) continue;
            std::vector<NodeId> chosen = robust_prune(cand, params_.alpha, cap(l), id);
            connect_two_way(id, chosen, l);
            cur = cand.front().id;
        }

        nodes_[id].deleted = false;
        ++live_;
        if (lvl > max_level_) {
            max_level_ = lvl;
            entry_ = id;
        }
    }

    /// Occlusion-based neighbor selection. Candidates are visited in
    /// ascending distance to the target; `c` is rejected when some accepted
    /// `a` satisfies alpha * dist(c, a) < dist(c, target). At most `max_m`
    /// are accepted. If `occluders` is given it receives, for each rejected
    /// candidate, the accepted node that rejected it.
    std::vector<NodeId> robust_prune(std::vector<Neighbor> cand, double alpha, std::size_t max_m,
                                     NodeId target,
                                     std::vector<std::pair<NodeId, NodeId>>* occluders = nullptr) const {
        std::sort(cand.begin(), cand.end(), closer);
        cand.erase(std::unique(cand.begin(), cand.end(),
                               [](const Neighbor& a, const Neighbor& b) { return a.id == b.id; }),
                   cand.end());
        std::vector<NodeId> accepted;
        GraphSearchStats stats;
        for (const Neighbor& c : cand) {
            if (c.id == target) continue;
            if (accepted.size() >= max_m) {
                if (occluders) occluders->push_back({c.id, c.id});
                continue;
            }
            const std::span<const float> cv = vector(c.id);
            std::optional<NodeId> blocker;
            for (NodeId a : accepted) {
                if (alpha * dist(cv, a, stats) < c.distance) {
                    blocker = a;
                    break;
                }
            }
            if (blocker) {
                if (occluders) occluders->push_back({c.id, *blocker});
            } else {
                accepted.push_back(c.id);
            }
        }
        return accepted;
    }

    /// Adds `id`-`n` edges in both directions at `level`; any list pushed over
    /// its cap is re-pruned.
    void connect_two_way(NodeId id, std::span<const NodeId> nbrs, int level) {
        for (NodeId n : nbrs) {
            if (n == id) continue;
            if (!has_level(n, level))
                fail(ErrorCode::kInvalidArgument, "node " + std::to_string(n) + " is not on level " +
                                                      std::to_string(level));
            add_edge(id, n, level);
            add_edge(n, id, level);
        }
        for (NodeId n : nbrs)
            if (n != id && links(n, level).size() > cap(level)) shrink(n, level);
        if (links(id, level).size() > cap(level)) shrink(id, level);
    }

    /// Removes `label`, reconnecting its former neighbors at every level.
    void remove(NodeId label, std::size_t k_reconnect = 0) {
        if (!contains(label)) {
            if (is_deleted(label)) fail(ErrorCode::kNotFound, "id " + std::to_string(label) + " is already deleted");
            fail(ErrorCode::kNotFound, "unknown id " + std::to_string(label));
        }
        if (k_reconnect == 0) k_reconnect = 2 * params_.M;
        Node& victim = nodes_.at(label);
        const int top = victim.level;
        victim.deleted = true;
        --live_;

        if (entry_ == label) {
            std::optional<NodeId> best;
            int best_level = -1;
            for (const auto& [id, n] : nodes_) {
                if (n.deleted) continue;
                if (n.level > best_level || (n.level == best_level && id < *best)) {
                    best = id;
                    best_level = n.level;
                }
            }
            entry_ = best;
            max_level_ = best ? best_level : 0;
        } else if (top == max_level_) {
            check_and_decrease_max_level();
        }

        for (int l = 0; l <= top; ++l) {
            std::vector<NodeId> old = std::move(nodes_.at(label).links[std::size_t(l)]);
            nodes_.at(label).links[std::size_t(l)].clear();
            for (NodeId u : old) erase_edge(u, label, l);
            reconnect_neighbors(label, old, l, k_reconnect);
        }
        nodes_.at(label).links.clear();
    }

    /// Drops tombstones and their vectors.
    void compact() {
        for (auto it = nodes_.begin(); it != nodes_.end();) {
            if (it->second.deleted) {
                vectors_.erase(it->first);
                it = nodes_.erase(it);
            } else {
                ++it;
            }
        }
    }

    // -- search ------------------------------------------------------------

    /// Best-first expansion from `cur` at `level`, returning at most `ef`
    /// live nodes closest to the stored vector of `target` (excluding it).
    std::vector<Neighbor> expand_candidates(NodeId cur, NodeId target, int level, std::size_t ef,
                                            GraphSearchStats* stats = nullptr) const {
        GraphSearchStats local;
        return search_layer({cur}, vector(target), level, ef, target, stats ? *stats : local);
    }

    /// Greedy descent to level 0 followed by a beam search of width ef.
    std::vector<Neighbor> search(std::span<const float> query, std::size_t k, std::size_t ef,
                                 GraphSearchStats* stats = nullptr) const {
        if (query.size() != dim_)
            fail(ErrorCode::kDimensionMismatch, "query has dimension " + std::to_string(query.size()) +
                                                    ", graph has " + std::to_string(dim_));
        if (!entry_) fail(ErrorCode::kEmpty, "search on an empty graph");
        if (k == 0) fail(ErrorCode::kInvalidArgument, "k must be positive");
        GraphSearchStats local;
        GraphSearchStats& st = stats ? *stats : local;
        ef = std::max(ef, k);
        NodeId cur = *entry_;
        double cur_dist = dist(query, cur, st);
        for (int l = max_level_; l > 0; --l) greedy_descend(query, l, cur, cur_dist, st);
        std::vector<Neighbor> res = search_layer({cur}, query, 0, ef, std::nullopt, st);
        if (res.size() > k) res.resize(k);
        return res;
    }

    // -- inspection ----------------------------------------------------------

    /// Empty when every structural invariant holds; otherwise one message per
    /// violation.
    std::vector<std::string> check_invariants() const {
        std::vector<std::string> errs;
        std::size_t live = 0;
        for (const auto& [id, n] : nodes_) {
            if (n.deleted) {
                if (!n.links.empty() && std::any_of(n.links.begin(), n.links.end(),
                                                    [](const auto& v) { return !v.empty(); }))
                    errs.push_back("tombstone " + std::to_string(id) + " keeps edges");
                continue;
            }
            ++live;
            if (n.links.size() != std::size_t(n.level) + 1)
                errs.push_back("node " + std::to_string(id) + " has wrong level count");
            for (int l = 0; l < int(n.links.size()); ++l) {
                const auto& lst = n.links[std::size_t(l)];
                if (lst.size() > cap(l))
                    errs.push_back("node " + std::to_string(id) + " exceeds cap at level " + std::to_string(l));
                std::unordered_set<NodeId> seen;
                for (NodeId nb : lst) {
                    if (!seen.insert(nb).second)
                        errs.push_back("duplicate edge " + std::to_string(id) + "->" + std::to_string(nb));
                    if (nb == id) errs.push_back("self loop at " + std::to_string(id));
                    if (!contains(nb)) {
                        errs.push_back("edge to dead node " + std::to_string(id) + "->" + std::to_string(nb));
                        continue;
                    }
                    if (!has_level(nb, l)) {
                        errs.push_back("edge below neighbor level " + std::to_string(id) + "->" +
                                       std::to_string(nb));
                        continue;
                    }
                    const auto& back = links(nb, l);
                    if (std::find(back.begin(), back.end(), id) == back.end())
                        errs.push_back("asymmetric edge " + std::to_string(id) + "->" + std::to_string(nb) +
                                       " at level " + std::to_string(l));
                }
            }
        }
        if (live != live_) errs.push_back("live counter out of sync");
        if (entry_.has_value() != (live_ > 0)) errs.push_back("entry point presence mismatch");
        if (entry_) {
            if (!contains(*entry_)) errs.push_back("entry point is not live");
            else if (level(*entry_) != max_level_) errs.push_back("entry point level differs from max");
            for (const auto& [id, n] : nodes_)
                if (!n.deleted && n.level > max_level_) errs.push_back("node above max level");
        }
        return errs;
    }

    /// Live nodes reachable from the entry point over level-0 edges.
    std::size_t reachable_at_level0() const {
        if (!entry_) return 0;
        std::unordered_set<NodeId> seen{*entry_};
        std::vector<NodeId> stack{*entry_};
        while (!stack.empty()) {
            NodeId u = stack.back();
            stack.pop_back();
            for (NodeId v : links(u, 0))
                if (contains(v) && seen.insert(v).second) stack.push_back(v);
        }
        return seen.size();
    }

    /// Structural equality over live nodes (tombstones and vectors ignored).
    bool same_structure(const HnswGraph& o) const {
        if (dim_ != o.dim_ || live_ != o.live_ || entry_ != o.entry_) return false;
        if (entry_ && max_level_ != o.max_level_) return false;
        for (const auto& [id, n] : nodes_) {
            if (n.deleted) continue;
            auto it = o.nodes_.find(id);
            if (it == o.nodes_.end() || it->second.deleted) return false;
            if (it->second.level != n.level || it->second.links != n.links) return false;
        }
        return true;
    }

    /// Approximate resident size: vectors, ids, levels and neighbor ids of
    /// live nodes.
    std::size_t memory_bytes() const {
        std::size_t bytes = 0;
        for (const auto& [id, n] : nodes_) {
            if (n.deleted) continue;
            bytes += 4 * dim_ + sizeof(NodeId) + sizeof(std::uint16_t);
            for (const auto& lst : n.links) bytes += sizeof(std::uint32_t) + sizeof(NodeId) * lst.size();
        }
        return bytes;
    }

    // -- raw restore (deserialization) -----------------------------------------

    void restore_node(NodeId id, int level, std::vector<std::vector<NodeId>> links) {
        if (level < 0 || links.size() != std::size_t(level) + 1)
            fail(ErrorCode::kFormat, "inconsistent level data for node " + std::to_string(id));
        if (nodes_.count(id)) fail(ErrorCode::kFormat, "duplicate node " + std::to_string(id));
        nodes_[id] = Node{level, std::move(links), false};
        ++live_;
    }

    void restore_entry(std::optional<NodeId> entry) {
        entry_ = entry;
        max_level_ = entry ? node(*entry).level : 0;
    }

private:
    struct Node {
        int level = 0;
        std::vector<std::vector<NodeId>> links;
        bool deleted = false;
    };

    const Node& node(NodeId id) const {
        auto it = nodes_.find(id);
        if (it == nodes_.end()) fail(ErrorCode::kNotFound, "unknown node " + std::to_string(id));
        return it->second;
    }

    bool has_level(NodeId id, int level) const {
        auto it = nodes_.find(id);
        return it != nodes_.end() && level >= 0 && std::size_t(level) < it->second.links.size();
    }

    std::vector<NodeId>& links(NodeId id, int level) { return nodes_.at(id).links.at(std::size_t(level)); }
    const std::vector<NodeId>& links(NodeId id, int level) const {
        return nodes_.at(id).links.at(std::size_t(level));
    }

    double dist(std::span<const float> q, NodeId id, GraphSearchStats& st) const {
        ++st.distance_computations;
        return distance(q, vector(id), metric_);
    }

    void add_edge(NodeId from, NodeId to, int level) {
        auto& lst = links(from, level);
        if (std::find(lst.begin(), lst.end(), to) == lst.end()) lst.push_back(to);
    }

    void erase_edge(NodeId from, NodeId to, int level) {
        if (!has_level(from, level)) return;
        auto& lst = links(from, level);
        lst.erase(std::remove(lst.begin(), lst.end(), to), lst.end());
    }

    void greedy_descend(std::span<const float> q, int level, NodeId& cur, double& cur_dist,
                        GraphSearchStats& st) const {
        bool improved = true;
        while (improved) {
            improved = false;
            ++st.nodes_expanded;
            for (NodeId nb : links(cur, level)) {
                ++st.neighbor_visits;
                if (!contains(nb)) continue;
                const double d = dist(q, nb, st);
                if (d < cur_dist) {
                    cur = nb;
                    cur_dist = d;
                    improved = true;
                    break;
                }
            }
        }
    }

    /// Beam search at one level. `exclude` is traversed but never returned.
    std::vector<Neighbor> search_layer(const std::vector<NodeId>& entries, std::span<const float> q,
                                       int level, std::size_t ef, std::optional<NodeId> exclude,
                                       GraphSearchStats& st) const {
        struct FartherFirst {
            bool operator()(const Neighbor& a, const Neighbor& b) const { return closer(b, a); }
        };
        std::priority_queue<Neighbor, std::vector<Neighbor>, FartherFirst> frontier;  // closest on top
        std::priority_queue<Neighbor, std::vector<Neighbor>, CloserFirst> best;        // farthest on top
        std::unordered_set<NodeId> visited;

        for (NodeId e : entries) {
            if (!contains(e) || !has_level(e, level) || !visited.insert(e).second) continue;
            Neighbor n{e, dist(q, e, st)};
            frontier.push(n);
            if (e != exclude) best.push(n);
        }
        while (best.size() > ef) best.pop();

        while (!frontier.empty()) {
            const Neighbor c = frontier.top();
            if (best.size() >= ef && closer(best.top(), c)) break;
            frontier.pop();
            ++st.nodes_expanded;
            for (NodeId nb : links(c.id, level)) {
                ++st.neighbor_visits;
                if (!visited.insert(nb).second || !contains(nb)) continue;
                Neighbor n{nb, dist(q, nb, st)};
                if (best.size() < ef || closer(n, best.top())) {
                    frontier.push(n);
                    if (nb != exclude) {
                        best.push(n);
                        if (best.size() > ef) best.pop();
                    }
                }
            }
        }
        std::vector<Neighbor> out;
        out.reserve(best.size());
        while (!best.empty()) {
            out.push_back(best.top());
            best.pop();
        }
        std::reverse(out.begin(), out.end());
        return out;
    }

    std::vector<Neighbor> score_against(NodeId anchor, const std::vector<NodeId>& ids) const {
        GraphSearchStats st;
        const auto av = vector(anchor);
        std::vector<Neighbor> out;
        out.reserve(ids.size());
        for (NodeId id : ids) out.push_back({id, dist(av, id, st)});
        std::sort(out.begin(), out.end(), closer);
        return out;
    }

    /// Re-prunes an overflowing list and keeps the graph symmetric.
    void shrink(NodeId n, int level) {
        std::vector<std::pair<NodeId, NodeId>> occluded;
        std::vector<NodeId> kept =
            robust_prune(score_against(n, links(n, level)), params_.alpha, cap(level), n, &occluded);
        replace_links(n, level, std::move(kept), occluded);
    }

    /// Sets n's list at `level`; removed partners lose the reverse edge and
    /// are re-attached to their occluder when capacity allows; added partners
    /// gain the reverse edge (re-pruning them if they overflow).
    void replace_links(NodeId n, int level, std::vector<NodeId> kept,
                       const std::vector<std::pair<NodeId, NodeId>>& occluded) {
        std::vector<NodeId> before = links(n, level);
        links(n, level) = kept;
        for (NodeId x : before) {
            if (std::find(kept.begin(), kept.end(), x) != kept.end()) continue;
            erase_edge(x, n, level);
            auto it = std::find_if(occluded.begin(), occluded.end(),
                                   [x](const auto& p) { return p.first == x; });
            if (it == occluded.end() || it->second == x) continue;
            const NodeId a = it->second;
            auto& xl = links(x, level);
            auto& al = links(a, level);
            if (std::find(xl.begin(), xl.end(), a) != xl.end()) continue;
            if (xl.size() < cap(level) && al.size() < cap(level)) {
                xl.push_back(a);
                al.push_back(x);
            }
        }
        std::vector<NodeId> overflow;
        for (NodeId v : kept) {
            if (std::find(before.begin(), before.end(), v) != before.end()) continue;
            add_edge(v, n, level);
            if (links(v, level).size() > cap(level)) overflow.push_back(v);
        }
        for (NodeId v : overflow)
            if (links(v, level).size() > cap(level)) shrink(v, level);
    }

    void reconnect_neighbors(NodeId label, const std::vector<NodeId>& old, int level, std::size_t k) {
        std::vector<NodeId> seeds;
        for (NodeId u : old)
            if (contains(u)) seeds.push_back(u);
        for (NodeId u : old) {
            if (!contains(u) || !has_level(u, level)) continue;
            std::unordered_set<NodeId> pool(links(u, level).begin(), links(u, level).end());
            for (NodeId o : old)
                if (o != u && contains(o)) pool.insert(o);
            GraphSearchStats st;
            for (const Neighbor& nb : search_layer(seeds, vector(u), level, k, u, st)) pool.insert(nb.id);
            pool.erase(u);
            pool.erase(label);
            std::vector<NodeId> ids(pool.begin(), pool.end());
            std::sort(ids.begin(), ids.end());
            std::vector<std::pair<NodeId, NodeId>> occluded;
            std::vector<NodeId> kept =
                robust_prune(score_against(u, ids), params_.alpha, cap(level), u, &occluded);
            replace_links(u, level, std::move(kept), occluded);
        }
    }

    void check_and_decrease_max_level() {
        int m = 0;
        for (const auto& [id, n] : nodes_)
            if (!n.deleted) m = std::max(m, n.level);
        max_level_ = m;
    }

    std::size_t dim_ = 0;
    HnswParams params_{};
    Metric metric_ = Metric::kL2;
    std::unordered_map<NodeId, Node> nodes_;
    std::unordered_map<NodeId, std::vector<float>> vectors_;
    std::optional<NodeId> entry_;
    int max_level_ = 0;
    std::size_t live_ = 0;
};

}  // namespace ecovector
