// ecovector: build, update, search, query, bench and serve.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "ecovector/bench.hpp"
#include "ecovector/config.hpp"
#include "ecovector/dataset.hpp"
#include "ecovector/http_clients.hpp"
#include "ecovector/service.hpp"

using namespace ecovector;
namespace fs = std::filesystem;

namespace {

struct Overrides {
    std::optional<std::string> index_dir, config, endpoint_embed, endpoint_generate, csv_out;
    std::optional<std::size_t> dim, nc, n_probe, ef_c, ef_l, k;
    std::optional<std::uint64_t> seed;
};

AppConfig resolve(const Overrides& o) {
    AppConfig cfg;
    if (o.config) apply_config_file(cfg, *o.config);
    apply_env(cfg);
    if (o.index_dir) cfg.index_dir = *o.index_dir;
    if (o.dim) cfg.dim = *o.dim;
    if (o.nc) cfg.pipeline.build.n_clusters = *o.nc;
    if (o.n_probe) cfg.pipeline.search.n_probe = *o.n_probe;
    if (o.ef_c) cfg.pipeline.search.ef_c = *o.ef_c;
    if (o.ef_l) cfg.pipeline.search.ef_l = *o.ef_l;
    if (o.k) cfg.pipeline.search.k = *o.k;
    if (o.seed) cfg.pipeline.build.seed = *o.seed;
    if (o.endpoint_embed) cfg.endpoints.embed = *o.endpoint_embed;
    if (o.endpoint_generate) cfg.endpoints.generate = *o.endpoint_generate;
    cfg.validate();
    return cfg;
}

std::unique_ptr<Embedder> make_embedder(const AppConfig& cfg) {
    if (cfg.endpoints.embed.empty()) return std::make_unique<HashEmbedder>(cfg.dim);
    return std::make_unique<RemoteEmbedder>(cfg.endpoints.embed, cfg.dim, std::chrono::milliseconds(cfg.endpoints.timeout_ms));
}

std::unique_ptr<GenerationClient> make_generator(const AppConfig& cfg) {
    if (cfg.endpoints.generate.empty()) return std::make_unique<EchoGenerator>();
    return std::make_unique<RemoteGenerator>(cfg.endpoints.generate, cfg.endpoints.stream,
                                             std::chrono::milliseconds(cfg.endpoints.timeout_ms));
}

/// Files named directly, plus the regular files inside named directories.
std::vector<fs::path> expand_paths(const std::vector<std::string>& args) {
    std::vector<fs::path> out;
    for (const auto& a : args) {
        if (fs::is_directory(a)) {
            std::vector<fs::path> inside;
            for (const auto& e : fs::recursive_directory_iterator(a))
                if (e.is_regular_file()) inside.push_back(e.path());
            std::sort(inside.begin(), inside.end());
            out.insert(out.end(), inside.begin(), inside.end());
        } else {
            out.emplace_back(a);
        }
    }
    return out;
}

std::vector<std::size_t> parse_list(const std::string& s) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(std::stoul(item));
    if (out.empty()) fail(ErrorCode::kInvalidArgument, "empty list: " + s);
    return out;
}

void print_hits(const std::vector<Neighbor>& hits) {
    std::cout << std::left << std::setw(6) << "rank" << std::setw(14) << "id" << "distance\n";
    for (std::size_t i = 0; i < hits.size(); ++i)
        std::cout << std::left << std::setw(6) << i + 1 << std::setw(14) << hits[i].id << std::setprecision(6)
                  << hits[i].distance << '\n';
}

BuildOptions vector_build_options(const AppConfig& cfg, std::size_t n) {
    BuildOptions o = cfg.pipeline.build;
    o.n_clusters = std::min(o.n_clusters, n);
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"EcoVector index and retrieval pipeline"};
    app.require_subcommand(1);
    Overrides ov;
    app.add_option("--index-dir", ov.index_dir, "Directory holding the index and record tables");
    app.add_option("--config", ov.config, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--dim", ov.dim, "Embedding dimension");
    app.add_option("--nc", ov.nc, "Number of clusters");
    app.add_option("--n-probe", ov.n_probe, "Clusters searched per query");
    app.add_option("--ef-c", ov.ef_c, "Centroid graph beam width");
    app.add_option("--ef-l", ov.ef_l, "Cluster graph beam width");
    app.add_option("--k", ov.k, "Results per query");
    app.add_option("--seed", ov.seed, "Random seed");
    app.add_option("--endpoint-embed", ov.endpoint_embed, "Remote embedding endpoint URL");
    app.add_option("--endpoint-generate", ov.endpoint_generate, "Remote generation endpoint URL");
    app.add_option("--csv-out", ov.csv_out, "Write bench rows to this CSV file");

    auto* build = app.add_subcommand("build", "Index documents, a JSON-lines corpus, or an fvecs file");
    std::vector<std::string> build_paths;
    std::string corpus, vectors;
    build->add_option("paths", build_paths, "Files or directories to index");
    build->add_option("--corpus", corpus, "JSON-lines corpus")->check(CLI::ExistingFile);
    build->add_option("--vectors", vectors, "fvecs base vectors (vector-only index)")->check(CLI::ExistingFile);

    auto* update = app.add_subcommand("update", "Add and remove documents without a rebuild");
    std::vector<std::string> add_paths;
    std::vector<std::uint64_t> remove_ids;
    update->add_option("--add", add_paths, "Files or directories to add");
    update->add_option("--remove", remove_ids, "Document ids to remove");

    auto* search = app.add_subcommand("search", "Nearest-neighbor search");
    std::string search_text, search_queries;
    std::size_t search_limit = 1;
    bool show_trace = false;
    search->add_option("--text", search_text, "Embed this text and search");
    search->add_option("--queries", search_queries, "fvecs query file")->check(CLI::ExistingFile);
    search->add_option("--limit", search_limit, "Queries to run from --queries");
    search->add_flag("--trace", show_trace, "Print search counters");

    auto* query = app.add_subcommand("query", "Answer a question from the indexed documents");
    std::string query_text;
    bool query_stream = false;
    query->add_option("text", query_text, "Question")->required();
    query->add_flag("--stream", query_stream, "Print tokens as they arrive");

    auto* bench = app.add_subcommand("bench", "Recall/QPS sweep with cost-model columns");
    std::string bench_base, bench_queries, bench_gt, bench_np = "1,2,4,8,16,32", bench_efl = "64";
    bench->add_option("--base", bench_base, "fvecs base vectors; builds a fresh index")->check(CLI::ExistingFile);
    bench->add_option("--queries", bench_queries, "fvecs queries")->required()->check(CLI::ExistingFile);
    bench->add_option("--gt", bench_gt, "ivecs ground truth (brute force when absent)")->check(CLI::ExistingFile);
    bench->add_option("--n-probes", bench_np, "Comma-separated n_probe sweep");
    bench->add_option("--ef-ls", bench_efl, "Comma-separated ef_L sweep");

    auto* serve = app.add_subcommand("serve", "Run the HTTP service");
    std::string host = "127.0.0.1";
    int port = 8080;
    serve->add_option("--host", host, "Bind address");
    serve->add_option("--port", port, "Port");

    CLI11_PARSE(app, argc, argv);

    try {
        const AppConfig cfg = resolve(ov);
        auto embedder = make_embedder(cfg);
        auto generator = make_generator(cfg);
        const fs::path index_path = cfg.index_dir / "index";

        if (*build) {
            if (!vectors.empty()) {
                auto recs = as_records(read_fvecs(vectors));
                if (recs.empty()) fail(ErrorCode::kEmpty, "empty corpus: " + vectors);
                fs::remove_all(index_path);
                auto idx = EcoVectorIndex::build(recs, vector_build_options(cfg, recs.size()), index_path);
                std::cout << idx.live_count() << " Vectors in " << idx.n_clusters() << " clusters\n";
                return 0;
            }
            RagPipeline pipe(cfg.index_dir, cfg.pipeline, *embedder, *generator);
            std::vector<SourceDocument> docs;
            if (!corpus.empty()) {
                const auto entries = read_jsonl_corpus(corpus);
                const auto paths = materialize_corpus(entries, cfg.index_dir / "corpus");
                for (std::size_t i = 0; i < entries.size(); ++i) docs.push_back({paths[i], entries[i].title});
            }
            for (const auto& p : expand_paths(build_paths)) docs.push_back({p, {}});
            std::cout << pipe.build_index(docs).display() << '\n';
        } else if (*update) {
            RagPipeline pipe(cfg.index_dir, cfg.pipeline, *embedder, *generator);
            const auto r = pipe.update_index(expand_paths(add_paths), remove_ids);
            std::cout << "added " << r.files_added << " files (" << r.vectors_added << " vectors), removed "
                      << r.files_removed << " files (" << r.vectors_removed << " vectors)\n"
                      << r.totals.display() << '\n';
        } else if (*search) {
            auto idx = EcoVectorIndex::open(index_path);
            SearchParams sp = cfg.pipeline.search;
            sp.n_probe = std::min(sp.n_probe, idx.n_clusters());
            sp.ef_c = std::max(sp.ef_c, sp.n_probe);
            std::vector<std::vector<float>> qs;
            if (!search_text.empty()) qs.push_back(embedder->embed_one(search_text));
            if (!search_queries.empty()) {
                auto all = read_fvecs(search_queries);
                if (all.size() > search_limit) all.resize(search_limit);
                qs.insert(qs.end(), all.begin(), all.end());
            }
            if (qs.empty()) fail(ErrorCode::kInvalidArgument, "search needs --text or --queries");
            for (std::size_t i = 0; i < qs.size(); ++i) {
                if (qs.size() > 1) std::cout << "query " << i << '\n';
                const auto out = idx.search(qs[i], sp);
                print_hits(out.hits);
                if (show_trace) std::cout << out.trace.to_text();
            }
        } else if (*query) {
            RagPipeline pipe(cfg.index_dir, cfg.pipeline, *embedder, *generator);
            TokenSink sink;
            if (query_stream) sink = [](std::string_view t) { std::cout << t << std::flush; };
            const auto r = pipe.answer_query(query_text, cfg.pipeline.search.k, sink);
            if (query_stream)
                std::cout << '\n';
            else
                std::cout << r.answer << '\n';
            std::cout << "\nReferences:\n";
            for (std::size_t i = 0; i < r.references.size(); ++i)
                std::cout << "  " << i + 1 << ". [" << r.references[i].doc_id << "] " << r.references[i].title
                          << " (score " << std::setprecision(4) << r.references[i].score << ")\n";
            std::cout << std::fixed << std::setprecision(3) << "\nretrieval_ms=" << r.timing.retrieval_ms
                      << " scr_ms=" << r.timing.scr_ms << " first_token_ms=" << r.timing.first_token_ms
                      << " ttft_ms=" << r.timing.ttft_ms << " total_ms=" << r.timing.total_ms << '\n';
        } else if (*bench) {
            std::optional<EcoVectorIndex> idx;
            if (!bench_base.empty()) {
                auto recs = as_records(read_fvecs(bench_base));
                if (recs.empty()) fail(ErrorCode::kEmpty, "empty corpus: " + bench_base);
                fs::remove_all(index_path);
                idx.emplace(EcoVectorIndex::build(recs, vector_build_options(cfg, recs.size()), index_path));
            } else {
                idx.emplace(EcoVectorIndex::open(index_path));
            }
            const auto queries = read_fvecs(bench_queries);
            std::vector<std::vector<NodeId>> truth;
            if (!bench_gt.empty())
                for (const auto& row : read_ivecs(bench_gt)) {
                    std::vector<NodeId> ids;
                    for (auto v : row) {
                        if (v < 0) fail(ErrorCode::kFormat, "negative id in ground truth");
                        ids.push_back(NodeId(v));
                    }
                    truth.push_back(std::move(ids));
                }
            BenchConfig bc;
            bc.n_probes = parse_list(bench_np);
            bc.ef_ls = parse_list(bench_efl);
            bc.k = cfg.pipeline.search.k;
            bc.ef_c = cfg.pipeline.search.ef_c;
            bc.cost = cfg.cost;
            const auto res = run_bench(*idx, queries, truth, bc);
            if (ov.csv_out) {
                std::ofstream out(*ov.csv_out);
                if (!out) fail(ErrorCode::kIo, "cannot write " + *ov.csv_out);
                write_bench_csv(out, res.rows);
            }
            write_bench_csv(std::cout, res.rows);
            if (!res.recall_monotone) {
                std::cerr << "warning: recall decreased as n_probe grew\n";
                return 2;
            }
        } else if (*serve) {
            RagPipeline pipe(cfg.index_dir, cfg.pipeline, *embedder, *generator);
            Service svc(pipe);
            std::cout << "listening on http://" << host << ':' << port << "/v1\n" << std::flush;
            if (!svc.listen(host, port)) fail(ErrorCode::kIo, "cannot listen on " + host + ":" + std::to_string(port));
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
