#pragma once

// Embedding / Document / Metadata tables behind one store interface, with
// an in-memory implementation and an SQLite-backed one.
//
// Referential rules: embeddings and metadata rows must point at an existing
// document; a metadata row's embedding_offset names the embedding_id of the
// chunk's vector. Deleting a document cascades to its embeddings and
// metadata; deleting an embedding cascades to the metadata naming it.
// Character spans are byte offsets into the document file.

#include <sqlite3.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ecovector/core.hpp"

namespace ecovector {

struct EmbeddingRow {
    std::uint64_t embedding_id = 0;
    std::uint64_t document_id = 0;
    std::vector<float> vector;

    friend bool operator==(const EmbeddingRow&, const EmbeddingRow&) = default;
};

struct DocumentRow {
    std::uint64_t document_id = 0;
    std::string path;
    std::string title;

    friend bool operator==(const DocumentRow&, const DocumentRow&) = default;
};

struct MetadataRow {
    std::uint64_t chunk_id = 0;
    std::uint64_t document_id = 0;
    std::uint64_t embedding_offset = 0;
    std::uint64_t span_start = 0;
    std::uint64_t span_end = 0;

    friend bool operator==(const MetadataRow&, const MetadataRow&) = default;
};

struct TableCounts {
    std::size_t documents = 0;
    std::size_t embeddings = 0;
    std::size_t metadata = 0;
};

class RecordStore {
public:
    virtual ~RecordStore() = default;

    // -- lookups -------------------------------------------------------------
    virtual std::optional<DocumentRow> find_document(std::uint64_t id) const = 0;
    virtual std::optional<EmbeddingRow> find_embedding(std::uint64_t id) const = 0;
    virtual std::optional<MetadataRow> find_metadata(std::uint64_t chunk_id) const = 0;
    virtual std::vector<DocumentRow> documents() const = 0;
    virtual std::vector<EmbeddingRow> embeddings() const = 0;
    virtual std::vector<MetadataRow> metadata() const = 0;
    virtual TableCounts counts() const = 0;

    std::vector<MetadataRow> metadata_for_document(std::uint64_t doc) const {
        std::vector<MetadataRow> out;
        for (auto& m : metadata())
            if (m.document_id == doc) out.push_back(m);
        return out;
    }

    std::vector<std::uint64_t> embedding_ids_for_document(std::uint64_t doc) const {
        std::vector<std::uint64_t> out;
        for (auto& e : embeddings())
            if (e.document_id == doc) out.push_back(e.embedding_id);
        return out;
    }

    // -- writes ----------------------------------------------------------------
    void insert_document(const DocumentRow& r) {
        if (find_document(r.document_id)) fail(ErrorCode::kDuplicateKey, "document " + std::to_string(r.document_id) + " exists");
        put_document(r);
    }
    void upsert_document(const DocumentRow& r) { put_document(r); }

    void insert_embedding(const EmbeddingRow& r) {
        if (find_embedding(r.embedding_id)) fail(ErrorCode::kDuplicateKey, "embedding " + std::to_string(r.embedding_id) + " exists");
        upsert_embedding(r);
    }
    void upsert_embedding(const EmbeddingRow& r) {
        require_document(r.document_id);
        if (auto old = find_embedding(r.embedding_id); old && old->document_id != r.document_id)
            for (auto& m : metadata())
                if (m.embedding_offset == r.embedding_id)
                    fail(ErrorCode::kDanglingReference, "embedding " + std::to_string(r.embedding_id) + " is referenced by chunk " + std::to_string(m.chunk_id));
        put_embedding(r);
    }

    void insert_metadata(const MetadataRow& r) {
        if (find_metadata(r.chunk_id)) fail(ErrorCode::kDuplicateKey, "chunk " + std::to_string(r.chunk_id) + " exists");
        upsert_metadata(r);
    }
    void upsert_metadata(const MetadataRow& r) {
        require_document(r.document_id);
        auto e = find_embedding(r.embedding_offset);
        if (!e || e->document_id != r.document_id)
            fail(ErrorCode::kDanglingReference, "chunk " + std::to_string(r.chunk_id) + " names unknown embedding " + std::to_string(r.embedding_offset));
        if (r.span_start > r.span_end) fail(ErrorCode::kInvalidArgument, "chunk span start after end");
        put_metadata(r);
    }

    /// Removes the document with its embeddings and metadata; returns the
    /// removed embedding ids.
    std::vector<std::uint64_t> delete_document(std::uint64_t id) {
        if (!find_document(id)) fail(ErrorCode::kNotFound, "unknown document " + std::to_string(id));
        begin();
        for (auto& m : metadata_for_document(id)) erase_metadata(m.chunk_id);
        auto emb = embedding_ids_for_document(id);
        for (auto e : emb) erase_embedding(e);
        erase_document(id);
        commit();
        return emb;
    }

    void delete_embedding(std::uint64_t id) {
        if (!find_embedding(id)) fail(ErrorCode::kNotFound, "unknown embedding " + std::to_string(id));
        begin();
        for (auto& m : metadata())
            if (m.embedding_offset == id) erase_metadata(m.chunk_id);
        erase_embedding(id);
        commit();
    }

    void delete_metadata(std::uint64_t chunk_id) {
        if (!find_metadata(chunk_id)) fail(ErrorCode::kNotFound, "unknown chunk " + std::to_string(chunk_id));
        erase_metadata(chunk_id);
    }

    /// Groups many writes; no-op for stores without transactions.
    virtual void begin() {}
    virtual void commit() {}

    /// One message per broken reference.
    std::vector<std::string> integrity_violations() const {
        std::vector<std::string> out;
        std::map<std::uint64_t, std::uint64_t> emb_doc;
        for (auto& e : embeddings()) {
            emb_doc[e.embedding_id] = e.document_id;
            if (!find_document(e.document_id))
                out.push_back("embedding " + std::to_string(e.embedding_id) + " -> missing document");
        }
        for (auto& m : metadata()) {
            if (!find_document(m.document_id)) out.push_back("chunk " + std::to_string(m.chunk_id) + " -> missing document");
            auto it = emb_doc.find(m.embedding_offset);
            if (it == emb_doc.end() || it->second != m.document_id)
                out.push_back("chunk " + std::to_string(m.chunk_id) + " -> missing embedding");
            if (m.span_start > m.span_end) out.push_back("chunk " + std::to_string(m.chunk_id) + " has inverted span");
        }
        return out;
    }

protected:
    virtual void put_document(const DocumentRow&) = 0;
    virtual void put_embedding(const EmbeddingRow&) = 0;
    virtual void put_metadata(const MetadataRow&) = 0;
    virtual void erase_document(std::uint64_t) = 0;
    virtual void erase_embedding(std::uint64_t) = 0;
    virtual void erase_metadata(std::uint64_t) = 0;

private:
    void require_document(std::uint64_t id) const {
        if (!find_document(id)) fail(ErrorCode::kDanglingReference, "unknown document " + std::to_string(id));
    }
};

class MemoryStore final : public RecordStore {
public:
    std::optional<DocumentRow> find_document(std::uint64_t id) const override { return find(docs_, id); }
    std::optional<EmbeddingRow> find_embedding(std::uint64_t id) const override { return find(embs_, id); }
    std::optional<MetadataRow> find_metadata(std::uint64_t id) const override { return find(meta_, id); }
    std::vector<DocumentRow> documents() const override { return values(docs_); }
    std::vector<EmbeddingRow> embeddings() const override { return values(embs_); }
    std::vector<MetadataRow> metadata() const override { return values(meta_); }
    TableCounts counts() const override { return {docs_.size(), embs_.size(), meta_.size()}; }

protected:
    void put_document(const DocumentRow& r) override { docs_[r.document_id] = r; }
    void put_embedding(const EmbeddingRow& r) override { embs_[r.embedding_id] = r; }
    void put_metadata(const MetadataRow& r) override { meta_[r.chunk_id] = r; }
    void erase_document(std::uint64_t id) override { docs_.erase(id); }
    void erase_embedding(std::uint64_t id) override { embs_.erase(id); }
    void erase_metadata(std::uint64_t id) override { meta_.erase(id); }

private:
    template <typename Row>
    static std::optional<Row> find(const std::map<std::uint64_t, Row>& m, std::uint64_t id) {
        auto it = m.find(id);
        if (it == m.end()) return std::nullopt;
        return it->second;
    }
    template <typename Row>
    static std::vector<Row> values(const std::map<std::uint64_t, Row>& m) {
        std::vector<Row> out;
        out.reserve(m.size());
        for (auto& [k, v] : m) out.push_back(v);
        return out;
    }

    std::map<std::uint64_t, DocumentRow> docs_;
    std::map<std::uint64_t, EmbeddingRow> embs_;
    std::map<std::uint64_t, MetadataRow> meta_;
};

class SqliteStore final : public RecordStore {
public:
    explicit SqliteStore(const std::filesystem::path& file) {
        sqlite3* raw = nullptr;
        if (sqlite3_open(file.string().c_str(), &raw) != SQLITE_OK) {
            std::string msg = raw ? sqlite3_errmsg(raw) : "out of memory";
            sqlite3_close(raw);
            fail(ErrorCode::kIo, "cannot open " + file.string() + ": " + msg);
        }
        db_.reset(raw);
        exec("PRAGMA journal_mode=WAL;");
        exec("CREATE TABLE IF NOT EXISTS documents(document_id INTEGER PRIMARY KEY, path TEXT NOT NULL, title TEXT NOT NULL);"
             "CREATE TABLE IF NOT EXISTS embeddings(embedding_id INTEGER PRIMARY KEY, document_id INTEGER NOT NULL, vector BLOB NOT NULL);"
             "CREATE TABLE IF NOT EXISTS metadata(chunk_id INTEGER PRIMARY KEY, document_id INTEGER NOT NULL, embedding_offset INTEGER NOT NULL, span_start INTEGER NOT NULL, span_end INTEGER NOT NULL);");
    }

    std::optional<DocumentRow> find_document(std::uint64_t id) const override {
        auto rows = query_documents("SELECT document_id, path, title FROM documents WHERE document_id = ?", id);
        return rows.empty() ? std::nullopt : std::optional(rows.front());
    }
    std::optional<EmbeddingRow> find_embedding(std::uint64_t id) const override {
        auto rows = query_embeddings("SELECT embedding_id, document_id, vector FROM embeddings WHERE embedding_id = ?", id);
        return rows.empty() ? std::nullopt : std::optional(rows.front());
    }
    std::optional<MetadataRow> find_metadata(std::uint64_t id) const override {
        auto rows = query_metadata("SELECT chunk_id, document_id, embedding_offset, span_start, span_end FROM metadata WHERE chunk_id = ?", id);
        return rows.empty() ? std::nullopt : std::optional(rows.front());
    }
    std::vector<DocumentRow> documents() const override {
        return query_documents("SELECT document_id, path, title FROM documents ORDER BY document_id", std::nullopt);
    }
    std::vector<EmbeddingRow> embeddings() const override {
        return query_embeddings("SELECT embedding_id, document_id, vector FROM embeddings ORDER BY embedding_id", std::nullopt);
    }
    std::vector<MetadataRow> metadata() const override {
        return query_metadata("SELECT chunk_id, document_id, embedding_offset, span_start, span_end FROM metadata ORDER BY chunk_id", std::nullopt);
    }
    TableCounts counts() const override {
        return {count("documents"), count("embeddings"), count("metadata")};
    }

    void begin() override {
        if (depth_++ == 0) exec("BEGIN;");
    }
    void commit() override {
        if (--depth_ == 0) exec("COMMIT;");
    }

protected:
    void put_document(const DocumentRow& r) override {
        Stmt s = prepare("INSERT OR REPLACE INTO documents VALUES (?, ?, ?)");
        bind_id(s, 1, r.document_id);
        sqlite3_bind_text(s.get(), 2, r.path.c_str(), int(r.path.size()), SQLITE_TRANSIENT);
        sqlite3_bind_text(s.get(), 3, r.title.c_str(), int(r.title.size()), SQLITE_TRANSIENT);
        step_done(s);
    }
    void put_embedding(const EmbeddingRow& r) override {
        Stmt s = prepare("INSERT OR REPLACE INTO embeddings VALUES (?, ?, ?)");
        bind_id(s, 1, r.embedding_id);
        bind_id(s, 2, r.document_id);
        sqlite3_bind_blob(s.get(), 3, r.vector.data(), int(r.vector.size() * sizeof(float)), SQLITE_TRANSIENT);
        step_done(s);
    }
    void put_metadata(const MetadataRow& r) override {
        Stmt s = prepare("INSERT OR REPLACE INTO metadata VALUES (?, ?, ?, ?, ?)");
        bind_id(s, 1, r.chunk_id);
        bind_id(s, 2, r.document_id);
        bind_id(s, 3, r.embedding_offset);
        bind_id(s, 4, r.span_start);
        bind_id(s, 5, r.span_end);
        step_done(s);
    }
    void erase_document(std::uint64_t id) override { erase("DELETE FROM documents WHERE document_id = ?", id); }
    void erase_embedding(std::uint64_t id) override { erase("DELETE FROM embeddings WHERE embedding_id = ?", id); }
    void erase_metadata(std::uint64_t id) override { erase("DELETE FROM metadata WHERE chunk_id = ?", id); }

private:
    struct DbClose {
        void operator()(sqlite3* db) const { sqlite3_close(db); }
    };
    struct StmtFinalize {
        void operator()(sqlite3_stmt* s) const { sqlite3_finalize(s); }
    };
    using Stmt = std::unique_ptr<sqlite3_stmt, StmtFinalize>;

    [[noreturn]] void raise(const std::string& what) const {
        fail(ErrorCode::kIo, what + ": " + sqlite3_errmsg(db_.get()));
    }

    void exec(const char* sql) const {
        char* err = nullptr;
        if (sqlite3_exec(db_.get(), sql, nullptr, nullptr, &err) != SQLITE_OK) {
            std::string msg = err ? err : "unknown error";
            sqlite3_free(err);
            fail(ErrorCode::kIo, std::string("sqlite: ") + msg);
        }
    }

    Stmt prepare(const char* sql) const {
        sqlite3_stmt* s = nullptr;
        if (sqlite3_prepare_v2(db_.get(), sql, -1, &s, nullptr) != SQLITE_OK) raise("prepare");
        return Stmt(s);
    }

    static void bind_id(Stmt& s, int col, std::uint64_t v) { sqlite3_bind_int64(s.get(), col, sqlite3_int64(v)); }

    void step_done(Stmt& s) const {
        if (sqlite3_step(s.get()) != SQLITE_DONE) raise("write");
    }

    void erase(const char* sql, std::uint64_t id) {
        Stmt s = prepare(sql);
        bind_id(s, 1, id);
        step_done(s);
    }

    std::size_t count(const char* table) const {
        Stmt s = prepare((std::string("SELECT COUNT(*) FROM ") + table).c_str());
        if (sqlite3_step(s.get()) != SQLITE_ROW) raise("count");
        return std::size_t(sqlite3_column_int64(s.get(), 0));
    }

    template <typename Row, typename Read>
    std::vector<Row> run(const char* sql, std::optional<std::uint64_t> key, Read read) const {
        Stmt s = prepare(sql);
        if (key) bind_id(s, 1, *key);
        std::vector<Row> out;
        int rc;
        while ((rc = sqlite3_step(s.get())) == SQLITE_ROW) out.push_back(read(s.get()));
        if (rc != SQLITE_DONE) raise("read");
        return out;
    }

    static std::uint64_t col_id(sqlite3_stmt* s, int c) { return std::uint64_t(sqlite3_column_int64(s, c)); }
    static std::string col_text(sqlite3_stmt* s, int c) {
        const auto* p = sqlite3_column_text(s, c);
        return p ? std::string(reinterpret_cast<const char*>(p), std::size_t(sqlite3_column_bytes(s, c))) : std::string();
    }

    std::vector<DocumentRow> query_documents(const char* sql, std::optional<std::uint64_t> key) const {
        return run<DocumentRow>(sql, key, [](sqlite3_stmt* s) {
            return DocumentRow{col_id(s, 0), col_text(s, 1), col_text(s, 2)};
        });
    }
    std::vector<EmbeddingRow> query_embeddings(const char* sql, std::optional<std::uint64_t> key) const {
        return run<EmbeddingRow>(sql, key, [](sqlite3_stmt* s) {
            EmbeddingRow r{col_id(s, 0), col_id(s, 1), {}};
            const auto n = std::size_t(sqlite3_column_bytes(s, 2)) / sizeof(float);
            r.vector.resize(n);
            if (n) std::memcpy(r.vector.data(), sqlite3_column_blob(s, 2), n * sizeof(float));
            return r;
        });
    }
    std::vector<MetadataRow> query_metadata(const char* sql, std::optional<std::uint64_t> key) const {
        return run<MetadataRow>(sql, key, [](sqlite3_stmt* s) {
            return MetadataRow{col_id(s, 0), col_id(s, 1), col_id(s, 2), col_id(s, 3), col_id(s, 4)};
        });
    }

    std::unique_ptr<sqlite3, DbClose> db_;
    int depth_ = 0;
};

inline std::string read_text_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) fail(ErrorCode::kIo, "cannot read " + p.string());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

/// Exact byte slice of the chunk's document.
inline std::string fetch_chunk_text(const RecordStore& store, std::uint64_t chunk_id) {
    auto m = store.find_metadata(chunk_id);
    if (!m) fail(ErrorCode::kNotFound, "unknown chunk " + std::to_string(chunk_id));
    auto d = store.find_document(m->document_id);
    if (!d) fail(ErrorCode::kDanglingReference, "chunk " + std::to_string(chunk_id) + " has no document");
    const std::string text = read_text_file(d->path);
    if (m->span_end > text.size() || m->span_start > m->span_end)
        fail(ErrorCode::kInvalidArgument, "chunk " + std::to_string(chunk_id) + " span out of range");
    return text.substr(m->span_start, m->span_end - m->span_start);
}

}  // namespace ecovector
