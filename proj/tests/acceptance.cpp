// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "ecovector/ecovector_index.hpp"
#include "ecovector/embedder.hpp"
#include "ecovector/generation.hpp"
#include "ecovector/graph_io.hpp"
#include "ecovector/ragpipe.hpp"
#include "ecovector/scr.hpp"
#include "ecovector/trace_validation.hpp"
#include "scr_fixtures.hpp"
#include "test_support.hpp"

using namespace ecovector;
using testing_support::oracle_topk;
using testing_support::TempDir;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::vector<NodeId> ids_of(const std::vector<Neighbor>& hits) {
    std::vector<NodeId> out;
    for (const auto& h : hits) out.push_back(h.id);
    return out;
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// The clustered 10k x 64 configuration shared by several criteria.
struct RecallSetup {
    TempDir dir;
    testing_support::Mixture mix = testing_support::gaussian_mixture(10'000, 64, 100, 0.3, 1001);
    EcoVectorIndex idx;
    std::vector<std::vector<float>> queries;

    RecallSetup() {
        BuildOptions o;
        o.n_clusters = 100;
        o.cluster_params.M = 8;
        idx = EcoVectorIndex::build(mix.points, o, dir.path());
        queries = testing_support::noisy_queries(mix.points, 100, 0.3, 1002);
    }

    double recall(const SearchParams& sp) const {
        double sum = 0;
        for (const auto& q : queries)
            sum += testing_support::overlap_fraction(ids_of(idx.search(q, sp).hits), oracle_topk(q, mix.points, sp.k));
        return sum / double(queries.size());
    }
};

RecallSetup& recall_setup() {
    static RecallSetup s;
    return s;
}

Verdict oracle_exactness() {
    const auto t0 = std::chrono::steady_clock::now();
    TempDir dir;
    const auto data = testing_support::uniform_vectors(2000, 32, 11);
    BuildOptions o;
    o.n_clusters = 20;
    auto idx = EcoVectorIndex::build(data, o, dir.path());
    const SearchParams sp{idx.n_clusters(), idx.n_clusters(), std::max<std::size_t>(idx.max_cluster_size(), 10), 10};
    Rng rng(12);
    int mismatches = 0;
    for (int i = 0; i < 100; ++i) {
        const auto q = testing_support::uniform_vector(32, rng);
        if (ids_of(idx.search(q, sp).hits) != oracle_topk(q, data, 10)) ++mismatches;
    }
    const double secs = seconds_since(t0);
    return {mismatches == 0 && secs < 60.0, fmt("%d mismatches over 100 queries in %.1f s", mismatches, secs)};
}

Verdict recall_floor() {
    auto& s = recall_setup();
    const double r8 = s.recall(SearchParams{8, 32, 64, 10});
    std::ostringstream curve;
    bool monotone = true;
    double prev = -1;
    for (std::size_t np : {1, 2, 4, 8, 16, 32}) {
        const double r = s.recall(SearchParams{np, std::max<std::size_t>(32, np), 64, 10});
        curve << (prev < 0 ? "" : " ") << np << ":" << fmt("%.3f", r);
        if (r + 1e-12 < prev) monotone = false;
        prev = r;
    }
    return {r8 >= 0.90 && monotone,
            fmt("recall@10=%.3f at n_probe=8, curve %s%s", r8, curve.str().c_str(), monotone ? "" : " (not monotone)")};
}

Verdict update_integrity() {
    TempDir dir;
    const auto mix = testing_support::gaussian_mixture(6000, 32, 50, 0.4, 2001);
    std::vector<VectorRecord> base(mix.points.begin(), mix.points.begin() + 5000);
    BuildOptions o;
    o.n_clusters = 50;
    auto idx = EcoVectorIndex::build(base, o, dir.path());
    std::map<NodeId, VectorRecord> live;
    for (const auto& r : base) live[r.id] = r;
    std::set<NodeId> deleted;
    Rng pick(2002);
    std::size_t inserted = 0, removed = 0, next = 5000;
    while (inserted < 1000 || removed < 300) {
        const bool do_insert = removed >= 300 || (inserted < 1000 && pick.below(13) < 10);
        if (do_insert) {
            idx.insert(mix.points[next]);
            live[mix.points[next].id] = mix.points[next];
            ++next;
            ++inserted;
        } else {
            auto it = live.begin();
            std::advance(it, std::ptrdiff_t(pick.below(live.size())));
            idx.erase(it->first);
            deleted.insert(it->first);
            live.erase(it);
            ++removed;
        }
    }

    std::size_t violations = 0;
    for (std::uint32_t c = 0; c < idx.n_clusters(); ++c) violations += idx.load_cluster(c).graph().check_invariants().size();
    violations += idx.centroid_graph().check_invariants().size();

    std::vector<VectorRecord> live_vec;
    for (auto& [id, r] : live) live_vec.push_back(r);
    const auto qs = testing_support::noisy_queries(live_vec, 100, 0.1, 2003);
    std::size_t leaked = 0;
    double sum = 0;
    const SearchParams sp{8, 32, 64, 10};
    for (const auto& q : qs) {
        const auto ids = ids_of(idx.search(q, sp).hits);
        for (auto id : ids) leaked += deleted.count(id);
        sum += testing_support::overlap_fraction(ids, oracle_topk(q, live_vec, 10));
    }
    const double recall = sum / double(qs.size());
    const bool counts = idx.live_count() == live_vec.size();
    return {violations == 0 && leaked == 0 && recall >= 0.90 && counts,
            fmt("%zu inserts, %zu deletes, %zu invariant violations, %zu deleted ids returned, live recall@10=%.3f",
                inserted, removed, violations, leaked, recall)};
}

// Rows written out again here rather than shared with the unit tests.
long double link_factor(long double m) { return m / (1.0L - 1.0L / std::log(m)); }

long double independent_memory(cost::Algorithm a, const cost::CostModelParams& p) {
    using cost::Algorithm;
    const long double N = *p.N, Nc = *p.N_c, d = *p.d;
    const long double pq_bytes = (long double)*p.M_pq * *p.nbits / 8, book = std::pow(2.0L, *p.nbits) * 4 * d;
    switch (a) {
        case Algorithm::kIvf: return Nc * 4 * d + 8 * N + N * 4 * d;
        case Algorithm::kIvfPq: return Nc * 4 * d + 8 * N + N * pq_bytes + book;
        case Algorithm::kHnsw: return N * 4 * d + 4 * N * link_factor(*p.M);
        case Algorithm::kHnswPq: return N * pq_bytes + 16 * N * link_factor(*p.M) + book;
        case Algorithm::kIvfDisk: return Nc * 4 * d + 8 * N + 4 * d;
        case Algorithm::kIvfPqDisk: return Nc * 4 * d + 8 * N + pq_bytes + book;
        case Algorithm::kIvfHnsw: return 4 * Nc * (d + link_factor(*p.M_prime)) + 8 * N + 4 * d;
        case Algorithm::kEcoVector:
            return 4 * Nc * (d + link_factor(*p.M_prime)) + 8 * N + 4 * (d + link_factor(*p.M_prime));
    }
    return -1;
}

long double independent_ops(cost::Algorithm a, const cost::CostModelParams& p) {
    using cost::Algorithm;
    const long double N = *p.N, Nc = *p.N_c, d = *p.d, nP = *p.n_P;
    const long double pq = (long double)*p.M_pq / d * *p.nbits / 8, book = std::pow(2.0L, *p.nbits);
    switch (a) {
        case Algorithm::kIvf:
        case Algorithm::kIvfDisk: return Nc + nP * N / Nc;
        case Algorithm::kIvfPq:
        case Algorithm::kIvfPqDisk: return Nc + nP * N / Nc * pq + book;
        case Algorithm::kHnsw: return (long double)*p.ef_H * *p.M_h;
        case Algorithm::kHnswPq: return (long double)*p.ef_H * *p.M_h * pq + book;
        case Algorithm::kIvfHnsw: return (long double)*p.ef_c * *p.M_prime + nP * N / Nc;
        case Algorithm::kEcoVector: return (long double)*p.ef_c * *p.M_prime + nP * *p.ef_L * *p.M_prime;
    }
    return -1;
}

Verdict cost_fidelity() {
    Rng rng(3001);
    long double worst = 0;
    for (int i = 0; i < 50; ++i) {
        cost::CostModelParams p;
        p.N = double(1 + rng.below(2'000'000));
        p.N_c = double(1 + rng.below(5000));
        p.d = double(1 + rng.below(1024));
        p.n_P = double(rng.below(64));
        p.M = double(3 + rng.below(62));
        p.M_prime = double(3 + rng.below(62));
        p.M_h = double(1 + rng.below(64));
        p.M_pq = double(1 + rng.below(64));
        p.nbits = double(1 + rng.below(12));
        p.ef_H = double(1 + rng.below(512));
        p.ef_c = double(1 + rng.below(512));
        p.ef_L = double(1 + rng.below(512));
        for (auto a : cost::kAllAlgorithms) {
            for (auto [got, want] : {std::pair{(long double)cost::memory_bytes(a, p), independent_memory(a, p)},
                                     std::pair{(long double)cost::search_ops(a, p), independent_ops(a, p)}})
                worst = std::max(worst, std::fabs(got - want) / std::max(1.0L, std::fabs(want)));
        }
    }

    auto& s = recall_setup();
    const SearchParams sp{8, 32, 64, 10};
    double ratio_sum = 0;
    for (const auto& q : s.queries) ratio_sum += cost::validate_trace(s.idx.search(q, sp).trace, s.idx, sp).ratio;
    const double ratio = ratio_sum / double(s.queries.size());

    const cost::CostModelParams dev;
    const double e = cost::energy_joules(100, 50, dev);
    const bool energy_ok = std::fabs(e - 1.08e-3) < 1e-15;
    return {worst < 1e-13L && ratio >= 0.5 && ratio <= 2.0 && energy_ok,
            fmt("max relative error %.2Le over 50 parameter sets, measured/model ops %.3f, energy(100 ms, 50 ms)=%.6g J",
                worst, ratio, e)};
}

Verdict memory_discipline() {
    auto& s = recall_setup();
    std::size_t peak_from_events = 0;
    bool balanced = true;
    s.idx.set_residency_observer([&](const ResidencyEvent& ev) { peak_from_events = std::max(peak_from_events, ev.resident_after); });
    std::size_t peak_cluster_bytes = 0;
    for (const auto& q : s.queries) {
        const auto out = s.idx.search(q, SearchParams{8, 32, 64, 10});
        peak_cluster_bytes = std::max(peak_cluster_bytes, out.trace.peak_cluster_memory_bytes);
        std::size_t loads = 0, unloads = 0;
        for (const auto& ev : out.trace.events) (ev.kind == ResidencyEvent::Kind::kLoad ? loads : unloads)++;
        if (loads != unloads || loads != 8) balanced = false;
    }
    s.idx.set_residency_observer({});

    cost::CostModelParams p;
    p.N = 10'000;
    p.d = 64;
    p.M = 8;
    const double flat = cost::memory_bytes(cost::Algorithm::kHnsw, p);
    const double resident = double(s.idx.centroid_graph().memory_bytes() + peak_cluster_bytes);
    const double share = resident / flat;
    return {peak_from_events <= 1 && balanced && share <= 0.20,
            fmt("peak resident clusters %zu, centroid graph + largest loaded cluster %.0f B = %.1f%% of %.0f B flat HNSW",
                peak_from_events, resident, 100.0 * share, flat)};
}

Verdict scr_golden() {
    testing_support::Tiramisu t;
    testing_support::ScriptedEmbedder e;
    t.script(e);
    const std::string a = "Doc A talks about gelato.", c = "Doc C talks about croissants.";
    e.set(a, 0.7);
    e.set(c, 0.4);
    const std::vector<scr::RetrievedDocument> docs{{1, "A", a}, {2, "B", t.document()}, {3, "C", c}};
    const auto out = scr::run_scr(testing_support::ScriptedEmbedder::query(), docs, t.params(), e);
    const bool order = out.size() == 3 && out[0].doc_id == 2 && out[1].doc_id == 1 && out[2].doc_id == 3;
    const bool merged = !out.empty() && out[0].text == testing_support::Tiramisu::kGoldenMerged;
    std::string got;
    for (const auto& d : out) got += d.title;
    return {order && merged, fmt("order %s, merged text %s", got.c_str(), merged ? "matches" : "differs")};
}

std::vector<SourceDocument> generated_corpus(const std::filesystem::path& dir, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::filesystem::create_directories(dir);
    std::vector<SourceDocument> docs;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t sentences = 1 + rng.below(30);
        const auto path = dir / ("doc" + std::to_string(i) + ".txt");
        std::ofstream(path) << testing_support::generated_document("topic" + std::to_string(i % 20), sentences,
                                                                   rng.next_u64());
        docs.push_back({path, ""});
    }
    return docs;
}

Verdict scr_reduction() {
    TempDir dir;
    HashEmbedder emb(64);
    EchoGenerator gen;
    PipelineConfig cfg;
    cfg.chunk_tokens = 1000;  // one chunk per document
    cfg.build.n_clusters = 16;
    RagPipeline pipe(dir / "pipe", cfg, emb, gen);
    pipe.build_index(generated_corpus(dir / "docs", 200, 4001));

    std::size_t docs_checked = 0, bad_counts = 0, long_queries = 0, not_smaller = 0, grew = 0;
    for (int i = 0; i < 50; ++i) {
        const std::string query = "the price of topic" + std::to_string(i % 20);
        const auto r = pipe.answer_query(query, 10);
        std::map<std::uint64_t, std::size_t> source_sentences;
        bool any_long = false;
        for (const auto& d : r.retrieved) {
            const auto n = scr::split_sentences(d.text).size();
            source_sentences[d.doc_id] = n;
            any_long = any_long || n > cfg.scr.merged_length();
        }
        for (const auto& d : r.reduced) {
            ++docs_checked;
            const auto want = std::min(source_sentences.at(d.doc_id), cfg.scr.merged_length());
            if (d.sentence_count != want || scr::split_sentences(d.text).size() != want) ++bad_counts;
        }
        const auto reduced_tokens = scr::count_tokens(r.prompt);
        const auto full_tokens = scr::count_tokens(build_prompt(prompt_blocks(r.retrieved), query));
        if (any_long) {
            ++long_queries;
            if (reduced_tokens >= full_tokens) ++not_smaller;
        } else if (reduced_tokens > full_tokens) {
            ++grew;
        }
    }
    return {bad_counts == 0 && not_smaller == 0 && grew == 0 && long_queries > 0,
            fmt("%zu reduced documents, %zu with wrong sentence count, %zu/%zu prompts with long documents not shorter",
                docs_checked, bad_counts, not_smaller, long_queries)};
}

Verdict offline_pipeline() {
    TempDir dir;
    HashEmbedder emb(64);
    EchoGenerator gen;
    PipelineConfig cfg;
    cfg.build.n_clusters = 4;
    const auto before = network_operations().load();
    std::size_t answered = 0;
    {
        RagPipeline pipe(dir / "pipe", cfg, emb, gen);
        pipe.build_index(generated_corpus(dir / "docs", 40, 5001));
        pipe.update_index(generated_corpus(dir / "more", 3, 5002), std::vector<std::uint64_t>{1});
        for (int i = 0; i < 10; ++i)
            if (!pipe.answer_query("the history of topic" + std::to_string(i), 5).answer.empty()) ++answered;
    }
    RagPipeline reopened(dir / "pipe", cfg, emb, gen);
    if (!reopened.answer_query("the taste of topic3", 5).answer.empty()) ++answered;
    const auto ops = network_operations().load() - before;
    return {ops == 0 && answered == 11, fmt("%llu network operations across build, update and 11 queries",
                                            static_cast<unsigned long long>(ops))};
}

Verdict serialization() {
    const HnswParams params{4, 0, 16, 1.0, 0.0};
    std::size_t failures = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        const auto data = testing_support::uniform_vectors(20 + seed % 80, 6, seed);
        HnswGraph g(6, params);
        Rng rng(seed * 31 + 1);
        for (const auto& r : data) g.insert(r, rng);
        const auto bytes = serialize_graph(g);
        const auto back = deserialize_graph(bytes, params);
        if (!back.same_structure(g) || back.entry_point() != g.entry_point() || serialize_graph(back) != bytes) ++failures;
    }

    HnswGraph g(6, params);
    Rng rng(7);
    for (const auto& r : testing_support::uniform_vectors(30, 6, 7)) g.insert(r, rng);
    const auto good = serialize_graph(g);
    auto rejected = [&](std::vector<std::uint8_t> b) {
        try {
            deserialize_graph(b, params);
        } catch (const Error& e) {
            return e.code() == ErrorCode::kFormat;
        }
        return false;
    };
    auto bad_magic = good;
    bad_magic[0] ^= 0xFF;
    auto bad_version = good;
    bad_version[4] = 99;
    std::vector<std::uint8_t> truncated(good.begin(), good.begin() + 10);
    const std::size_t rejections = rejected(bad_magic) + rejected(bad_version) + rejected(truncated);
    return {failures == 0 && rejections == 3,
            fmt("%zu of 100 round trips differ, %zu of 3 corrupt headers rejected", failures, rejections)};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
        {"oracle-exactness", oracle_exactness}, {"recall-floor", recall_floor},
        {"update-integrity", update_integrity}, {"cost-model-fidelity", cost_fidelity},
        {"memory-discipline", memory_discipline}, {"scr-golden", scr_golden},
        {"scr-reduction", scr_reduction},         {"offline-pipeline", offline_pipeline},
        {"serialization", serialization},
    };
    int failed = 0;
    for (const auto& [name, run] : criteria) {
        Verdict v;
        try {
            v = run();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s %s: %s\n", v.pass ? "PASS" : "FAIL", name, v.detail.c_str());
        std::fflush(stdout);
        failed += !v.pass;
    }
    std::printf("%d/%zu criteria passed\n", int(criteria.size()) - failed, criteria.size());
    return failed ? 1 : 0;
}
