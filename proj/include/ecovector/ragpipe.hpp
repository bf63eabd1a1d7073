#pragma once

// End-to-end retrieval pipeline: chunk and embed documents into an EcoVector
// index plus record tables, then answer questions by retrieving chunks,
// reducing them with SCR and handing a prompt to a generation client.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <shared_mutex>

#include "json.hpp"

#include "ecovector/ecovector_index.hpp"
#include "ecovector/embedder.hpp"
#include "ecovector/generation.hpp"
#include "ecovector/scr.hpp"
#include "ecovector/tables.hpp"

namespace ecovector {

inline constexpr int kPromptTemplateVersion = 1;
inline constexpr std::string_view kNoContextAnswer =
    "No indexed document matched this question, so there is no context to answer from.";

/// Byte range [start, end) of one chunk inside its document.
struct ChunkSpan {
    std::uint64_t start = 0;
    std::uint64_t end = 0;
    friend bool operator==(const ChunkSpan&, const ChunkSpan&) = default;
};

/// Consecutive runs of `chunk_tokens` whitespace tokens, no overlap. A span
/// runs from its first token's first byte to its last token's last byte.
inline std::vector<ChunkSpan> chunk_text(std::string_view text, std::size_t chunk_tokens) {
    if (chunk_tokens == 0) fail(ErrorCode::kInvalidArgument, "chunk size must be positive");
    std::vector<ChunkSpan> out;
    std::size_t i = 0, in_chunk = 0;
    ChunkSpan cur;
    while (i < text.size()) {
        while (i < text.size() && scr::is_space(text[i])) ++i;
        if (i == text.size()) break;
        const std::size_t tok_start = i;
        while (i < text.size() && !scr::is_space(text[i])) ++i;
        if (in_chunk == 0) cur.start = tok_start;
        cur.end = i;
        if (++in_chunk == chunk_tokens) {
            out.push_back(cur);
            in_chunk = 0;
        }
    }
    if (in_chunk) out.push_back(cur);
    return out;
}

struct SourceDocument {
    std::filesystem::path path;
    std::string title;  // empty means the file stem
};

struct PromptBlock {
    std::string title;
    std::string text;
};

/// Template v1: numbered context blocks labeled with titles, a separator,
/// then the question.
inline std::string build_prompt(const std::vector<PromptBlock>& blocks, std::string_view query) {
    std::string out;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        out += "Context " + std::to_string(i + 1) + " [" + blocks[i].title + "]:\n";
        out += blocks[i].text;
        out += "\n\n";
    }
    out += "---\nQuestion: ";
    out += query;
    out += "\nAnswer:";
    return out;
}

inline std::vector<PromptBlock> prompt_blocks(const std::vector<scr::ReducedDocument>& docs) {
    std::vector<PromptBlock> out;
    for (const auto& d : docs) out.push_back({d.title, d.text});
    return out;
}

inline std::vector<PromptBlock> prompt_blocks(const std::vector<scr::RetrievedDocument>& docs) {
    std::vector<PromptBlock> out;
    for (const auto& d : docs) out.push_back({d.title, d.text});
    return out;
}

struct PipelineConfig {
    std::size_t chunk_tokens = 128;
    BuildOptions build;
    SearchParams search;
    scr::ScrParams scr;
};

struct BuildReport {
    std::size_t files = 0;
    std::size_t vectors = 0;

    /// "N Files, M Vectors"
    std::string display() const { return std::to_string(files) + " Files, " + std::to_string(vectors) + " Vectors"; }
};

struct UpdateReport {
    std::size_t files_added = 0;
    std::size_t vectors_added = 0;
    std::size_t files_removed = 0;
    std::size_t vectors_removed = 0;
    BuildReport totals;
};

struct PipelineStatus {
    std::size_t files = 0;
    std::size_t vectors = 0;
    std::uint64_t index_version = 0;
};

struct Reference {
    std::uint64_t doc_id = 0;
    std::string title;
    double score = 0.0;
    friend bool operator==(const Reference&, const Reference&) = default;
};

/// retrieval + scr + first_token is the time to first token.
struct QueryTimings {
    double retrieval_ms = 0.0;
    double scr_ms = 0.0;
    double first_token_ms = 0.0;
    double ttft_ms = 0.0;
    double total_ms = 0.0;
};

struct QueryResult {
    std::string query_id;
    std::string answer;
    std::string prompt;
    std::vector<Reference> references;
    std::vector<scr::RetrievedDocument> retrieved;
    std::vector<scr::ReducedDocument> reduced;
    QueryTimings timing;
    SearchTrace trace;
};

struct DocumentView {
    std::uint64_t doc_id = 0;
    std::string title;
    std::string path;
    std::string text;
};

class RagPipeline {
public:
    RagPipeline(std::filesystem::path dir, PipelineConfig cfg, Embedder& embedder, GenerationClient& generator)
        : dir_(std::move(dir)), cfg_(std::move(cfg)), embedder_(embedder), generator_(generator) {
        cfg_.scr.validate();
        std::filesystem::create_directories(dir_);
        store_ = std::make_unique<SqliteStore>(db_path());
        load_state();
        if (state_.built) index_ = std::make_unique<EcoVectorIndex>(EcoVectorIndex::open(index_dir()));
    }

    const std::filesystem::path& directory() const { return dir_; }
    std::filesystem::path index_dir() const { return dir_ / "index"; }
    const PipelineConfig& config() const { return cfg_; }
    const RecordStore& store() const { return *store_; }
    bool built() const { return index_ != nullptr; }
    const EcoVectorIndex& index() const {
        if (!index_) fail(ErrorCode::kUnavailable, "index has not been built");
        return *index_;
    }

    /// Exclusive access for index mutations. Callers that must not block use
    /// try_lock on it.
    std::shared_mutex& mutation_lock() { return mu_; }

    BuildReport build_index(const std::vector<SourceDocument>& docs) {
        std::unique_lock guard(mu_);
        return build_locked(docs);
    }

    BuildReport build_index(const std::vector<std::filesystem::path>& paths) { return build_index(as_sources(paths)); }

    UpdateReport update_index(const std::vector<SourceDocument>& add, const std::vector<std::uint64_t>& remove) {
        std::unique_lock guard(mu_);
        return update_locked(add, remove);
    }

    UpdateReport update_index(const std::vector<std::filesystem::path>& add, const std::vector<std::uint64_t>& remove) {
        return update_index(as_sources(add), remove);
    }

    PipelineStatus status() const {
        std::shared_lock guard(mu_);
        return {store_->counts().documents, index_ ? index_->live_count() : 0, state_.index_version};
    }

    std::optional<DocumentView> document(std::uint64_t id) const {
        std::shared_lock guard(mu_);
        auto d = store_->find_document(id);
        if (!d) return std::nullopt;
        return DocumentView{d->document_id, d->title, d->path, read_text_file(d->path)};
    }

    /// Retrieval, reduction and generation. Tokens reach `sink` as they are
    /// produced.
    QueryResult answer_query(const std::string& text, std::size_t k, const TokenSink& sink = {}) {
        using Clock = std::chrono::steady_clock;
        std::shared_lock guard(mu_);
        if (!index_) fail(ErrorCode::kUnavailable, "index has not been built");
        if (k == 0) fail(ErrorCode::kInvalidArgument, "k must be positive");

        QueryResult r;
        r.query_id = "q" + std::to_string(++query_counter_);
        const auto t0 = Clock::now();
        const auto qv = embedder_.embed_one(text);
        const auto sp = effective_search(k);
        auto outcome = index_->search(qv, sp);
        r.trace = outcome.trace;
        for (const auto& hit : outcome.hits) {
            auto m = store_->find_metadata(hit.id);
            if (!m) fail(ErrorCode::kDanglingReference, "index returned unknown chunk " + std::to_string(hit.id));
            auto d = store_->find_document(m->document_id);
            if (!d) fail(ErrorCode::kDanglingReference, "chunk " + std::to_string(hit.id) + " has no document");
            r.retrieved.push_back({d->document_id, d->title, fetch_chunk_text(*store_, hit.id)});
        }
        const auto t1 = Clock::now();
        r.reduced = scr::run_scr(qv, r.retrieved, cfg_.scr, embedder_);
        for (const auto& d : r.reduced) r.references.push_back({d.doc_id, d.title, d.best_score});
        r.prompt = build_prompt(prompt_blocks(r.reduced), text);
        const auto t2 = Clock::now();

        std::optional<Clock::time_point> first;
        auto on_token = [&](std::string_view tok) {
            if (!first) first = Clock::now();
            if (sink) sink(tok);
        };
        if (r.retrieved.empty()) {
            r.answer = std::string(kNoContextAnswer);
            on_token(r.answer);
        } else {
            r.answer = generator_.generate(r.prompt, on_token);
        }
        const auto t3 = Clock::now();
        if (!first) first = t3;

        auto ms = [](Clock::duration d) { return std::chrono::duration<double, std::milli>(d).count(); };
        r.timing.retrieval_ms = ms(t1 - t0);
        r.timing.scr_ms = ms(t2 - t1);
        r.timing.first_token_ms = ms(*first - t2);
        r.timing.ttft_ms = ms(*first - t0);
        r.timing.total_ms = ms(t3 - t0);
        return r;
    }

    SearchParams effective_search(std::size_t k) const {
        SearchParams sp = cfg_.search;
        sp.k = k;
        sp.n_probe = std::clamp<std::size_t>(sp.n_probe, 1, index_->n_clusters());
        sp.ef_c = std::max(sp.ef_c, sp.n_probe);
        sp.ef_l = std::max(sp.ef_l, k);
        return sp;
    }

private:
    struct State {
        bool built = false;
        std::uint64_t index_version = 0;
        std::uint64_t next_doc_id = 1;
        std::uint64_t next_embedding_id = 1;
    };

    std::filesystem::path db_path() const { return dir_ / "records.db"; }
    std::filesystem::path state_path() const { return dir_ / "pipeline.json"; }

    static std::vector<SourceDocument> as_sources(const std::vector<std::filesystem::path>& paths) {
        std::vector<SourceDocument> out;
        for (const auto& p : paths) out.push_back({p, {}});
        return out;
    }

    void load_state() {
        if (!std::filesystem::exists(state_path())) return;
        try {
            auto j = nlohmann::json::parse(read_text_file(state_path()));
            state_.built = j.at("built").get<bool>();
            state_.index_version = j.at("index_version").get<std::uint64_t>();
            state_.next_doc_id = j.at("next_doc_id").get<std::uint64_t>();
            state_.next_embedding_id = j.at("next_embedding_id").get<std::uint64_t>();
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::kFormat, std::string("bad pipeline state: ") + e.what());
        }
    }

    void save_state() const {
        nlohmann::json j = {{"built", state_.built},
                            {"index_version", state_.index_version},
                            {"next_doc_id", state_.next_doc_id},
                            {"next_embedding_id", state_.next_embedding_id}};
        write_file_atomic(state_path(), j.dump(2) + "\n");
    }

    struct Ingested {
        DocumentRow doc;
        std::vector<EmbeddingRow> embeddings;
        std::vector<MetadataRow> metadata;
    };

    Ingested ingest(const SourceDocument& src) {
        const auto abs = std::filesystem::absolute(src.path).lexically_normal();
        const std::string text = read_text_file(abs);
        Ingested out;
        out.doc = {state_.next_doc_id++, abs.string(), src.title.empty() ? abs.stem().string() : src.title};
        const auto spans = chunk_text(text, cfg_.chunk_tokens);
        std::vector<std::string> texts;
        for (const auto& s : spans) texts.push_back(text.substr(s.start, s.end - s.start));
        constexpr std::size_t kBatch = 64;
        for (std::size_t b = 0; b < texts.size(); b += kBatch) {
            const std::size_t n = std::min(kBatch, texts.size() - b);
            auto vecs = embedder_.embed(std::span<const std::string>(texts.data() + b, n));
            if (vecs.size() != n) fail(ErrorCode::kUnavailable, "embedder returned wrong batch size");
            for (std::size_t i = 0; i < n; ++i) {
                if (vecs[i].size() != embedder_.dimension())
                    fail(ErrorCode::kDimensionMismatch, "embedder returned wrong dimension");
                const std::uint64_t id = state_.next_embedding_id++;
                out.embeddings.push_back({id, out.doc.document_id, std::move(vecs[i])});
                out.metadata.push_back({id, out.doc.document_id, id, spans[b + i].start, spans[b + i].end});
            }
        }
        return out;
    }

    void write_rows(const Ingested& in) {
        store_->insert_document(in.doc);
        for (const auto& e : in.embeddings) store_->insert_embedding(e);
        for (const auto& m : in.metadata) store_->insert_metadata(m);
    }

    BuildReport build_locked(const std::vector<SourceDocument>& docs) {
        if (docs.empty()) fail(ErrorCode::kEmpty, "empty corpus: no documents given");
        for (const auto& d : docs)
            if (!std::filesystem::is_regular_file(d.path)) fail(ErrorCode::kIo, "cannot read " + d.path.string());

        index_.reset();
        store_.reset();
        for (const char* suffix : {"", "-wal", "-shm"}) std::filesystem::remove(db_path().string() + suffix);
        std::filesystem::remove_all(index_dir());
        const std::uint64_t version = state_.index_version;
        state_ = State{};
        state_.index_version = version;
        store_ = std::make_unique<SqliteStore>(db_path());

        std::vector<Ingested> all;
        std::vector<VectorRecord> vecs;
        for (const auto& d : docs) {
            all.push_back(ingest(d));
            for (const auto& e : all.back().embeddings) vecs.push_back({e.embedding_id, e.vector});
        }
        if (vecs.empty()) fail(ErrorCode::kEmpty, "empty corpus: documents contain no text");

        store_->begin();
        for (const auto& in : all) write_rows(in);
        store_->commit();

        BuildOptions opts = cfg_.build;
        opts.n_clusters = std::min(opts.n_clusters, vecs.size());
        index_ = std::make_unique<EcoVectorIndex>(EcoVectorIndex::build(vecs, opts, index_dir()));
        state_.built = true;
        ++state_.index_version;
        save_state();
        return {all.size(), vecs.size()};
    }

    UpdateReport update_locked(const std::vector<SourceDocument>& add, const std::vector<std::uint64_t>& remove) {
        if (!index_) fail(ErrorCode::kUnavailable, "index has not been built");
        for (auto id : remove)
            if (!store_->find_document(id)) fail(ErrorCode::kNotFound, "unknown document " + std::to_string(id));
        for (const auto& d : add)
            if (!std::filesystem::is_regular_file(d.path)) fail(ErrorCode::kIo, "cannot read " + d.path.string());

        UpdateReport rep;
        for (auto id : remove) {
            if (!store_->find_document(id)) continue;  // listed twice
            for (auto e : store_->delete_document(id)) {
                index_->erase(e);
                ++rep.vectors_removed;
            }
            ++rep.files_removed;
        }
        for (const auto& d : add) {
            auto in = ingest(d);
            store_->begin();
            write_rows(in);
            store_->commit();
            for (const auto& e : in.embeddings) index_->insert({e.embedding_id, e.vector});
            ++rep.files_added;
            rep.vectors_added += in.embeddings.size();
        }
        ++state_.index_version;
        save_state();
        rep.totals = {store_->counts().documents, index_->live_count()};
        return rep;
    }

    std::filesystem::path dir_;
    PipelineConfig cfg_;
    Embedder& embedder_;
    GenerationClient& generator_;
    std::unique_ptr<RecordStore> store_;
    std::unique_ptr<EcoVectorIndex> index_;
    State state_;
    mutable std::shared_mutex mu_;
    std::atomic<std::uint64_t> query_counter_{0};
};

}  // namespace ecovector
