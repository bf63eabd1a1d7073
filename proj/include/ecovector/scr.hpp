#pragma once

// Selective content reduction: score sentence windows of each retrieved
// document against the query, keep the best window plus surrounding context,
// and order documents by their best window score.

#include <algorithm>
#include <string>
#include <string_view>
#include <vector>

#include "ecovector/core.hpp"
#include "ecovector/embedder.hpp"

namespace ecovector::scr {

struct ScrParams {
    std::size_t sliding_window_size = 3;
    std::size_t overlap_size = 2;
    std::size_t context_extension_size = 1;

    void validate() const {
        if (sliding_window_size == 0) fail(ErrorCode::kInvalidArgument, "sliding_window_size must be positive");
        if (overlap_size >= sliding_window_size)
            fail(ErrorCode::kInvalidArgument, "overlap_size must be smaller than sliding_window_size");
    }
    std::size_t step() const { return sliding_window_size - overlap_size; }
    std::size_t merged_length() const { return sliding_window_size + 2 * context_extension_size; }
};

/// Inclusive sentence index range.
struct SentenceRange {
    std::size_t first = 0;
    std::size_t last = 0;

    std::size_t size() const { return last - first + 1; }
    friend bool operator==(const SentenceRange&, const SentenceRange&) = default;
};

struct ScoredWindow {
    std::uint64_t doc_id = 0;
    SentenceRange range;
    double score = 0.0;
};

struct RetrievedDocument {
    std::uint64_t doc_id = 0;
    std::string title;
    std::string text;
};

struct ReducedDocument {
    std::uint64_t doc_id = 0;
    std::string title;
    std::string text;
    double best_score = -1.0;
    SentenceRange best_window;
    std::vector<SentenceRange> source_ranges;
    std::size_t sentence_count = 0;
};

inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

/// Splits after '.', '!' or '?' when followed by whitespace or the end of
/// text. Abbreviations are not recognized.
inline std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if ((c == '.' || c == '!' || c == '?') && (i + 1 == text.size() || is_space(text[i + 1]))) {
            auto s = trim(text.substr(start, i + 1 - start));
            if (!s.empty()) out.emplace_back(s);
            start = i + 1;
        }
    }
    if (start < text.size()) {
        auto s = trim(text.substr(start));
        if (!s.empty()) out.emplace_back(s);
    }
    return out;
}

/// Whitespace-delimited token count.
inline std::size_t count_tokens(std::string_view text) {
    std::size_t n = 0;
    bool in = false;
    for (char c : text) {
        if (is_space(c)) {
            in = false;
        } else if (!in) {
            in = true;
            ++n;
        }
    }
    return n;
}

inline std::vector<SentenceRange> make_windows(std::size_t n_sentences, const ScrParams& p) {
    p.validate();
    std::vector<SentenceRange> out;
    if (n_sentences == 0) return out;
    const std::size_t w = p.sliding_window_size;
    if (n_sentences <= w) return {{0, n_sentences - 1}};
    std::size_t start = 0;
    for (; start + w <= n_sentences; start += p.step()) out.push_back({start, start + w - 1});
    if (out.back().last + 1 < n_sentences) out.push_back({start, n_sentences - 1});
    return out;
}

inline std::string join_sentences(const std::vector<std::string>& sentences, SentenceRange r) {
    std::string out;
    for (std::size_t i = r.first; i <= r.last; ++i) {
        if (i != r.first) out.push_back(' ');
        out += sentences.at(i);
    }
    return out;
}

inline std::vector<ScoredWindow> score_windows(std::span<const float> query_vec, std::uint64_t doc_id,
                                               const std::vector<std::string>& sentences,
                                               const std::vector<SentenceRange>& windows, Embedder& embedder) {
    if (embedder.dimension() != query_vec.size())
        fail(ErrorCode::kDimensionMismatch, "embedder dimension differs from query dimension");
    std::vector<std::string> texts;
    texts.reserve(windows.size());
    for (const auto& w : windows) texts.push_back(join_sentences(sentences, w));
    auto vecs = embedder.embed(texts);
    if (vecs.size() != windows.size()) fail(ErrorCode::kUnavailable, "embedder returned wrong batch size");
    std::vector<ScoredWindow> out;
    out.reserve(windows.size());
    for (std::size_t i = 0; i < windows.size(); ++i)
        out.push_back({doc_id, windows[i], cosine_similarity(query_vec, vecs[i])});
    return out;
}

/// The merged span has min(n, window + 2 * extension) sentences and contains
/// the best window; when one side hits a document bound the span slides
/// inward to keep its length.
inline SentenceRange extend_range(SentenceRange best, std::size_t n_sentences, const ScrParams& p) {
    const std::size_t len = std::min(n_sentences, p.merged_length());
    std::ptrdiff_t lo = std::ptrdiff_t(best.first) - std::ptrdiff_t(p.context_extension_size);
    if (lo < 0) lo = 0;
    std::ptrdiff_t hi = lo + std::ptrdiff_t(len) - 1;
    if (hi > std::ptrdiff_t(n_sentences) - 1) {
        lo -= hi - (std::ptrdiff_t(n_sentences) - 1);
        hi = std::ptrdiff_t(n_sentences) - 1;
    }
    return {std::size_t(lo), std::size_t(hi)};
}

inline ReducedDocument select_and_merge(const RetrievedDocument& doc, const std::vector<std::string>& sentences,
                                        const std::vector<ScoredWindow>& scored, const ScrParams& p) {
    if (scored.empty()) fail(ErrorCode::kInvalidArgument, "select_and_merge needs at least one window");
    const ScoredWindow* best = &scored.front();
    for (const auto& w : scored) {
        if (w.range.last >= sentences.size()) fail(ErrorCode::kInvalidArgument, "window outside the document");
        if (w.score > best->score || (w.score == best->score && w.range.first < best->range.first)) best = &w;
    }
    const SentenceRange merged = extend_range(best->range, sentences.size(), p);
    ReducedDocument out;
    out.doc_id = doc.doc_id;
    out.title = doc.title;
    out.text = join_sentences(sentences, merged);
    out.best_score = best->score;
    out.best_window = best->range;
    out.source_ranges = {merged};
    out.sentence_count = merged.size();
    return out;
}

/// Descending best score; equal scores keep their input order.
inline std::vector<ReducedDocument> reorder(std::vector<ReducedDocument> docs) {
    std::stable_sort(docs.begin(), docs.end(),
                     [](const ReducedDocument& a, const ReducedDocument& b) { return a.best_score > b.best_score; });
    return docs;
}

inline ReducedDocument reduce_document(std::span<const float> query_vec, const RetrievedDocument& doc,
                                       const ScrParams& p, Embedder& embedder) {
    const auto sentences = split_sentences(doc.text);
    if (sentences.empty()) {
        ReducedDocument empty;
        empty.doc_id = doc.doc_id;
        empty.title = doc.title;
        return empty;
    }
    const auto windows = make_windows(sentences.size(), p);
    return select_and_merge(doc, sentences, score_windows(query_vec, doc.doc_id, sentences, windows, embedder), p);
}

inline std::vector<ReducedDocument> run_scr(std::span<const float> query_vec, const std::vector<RetrievedDocument>& docs,
                                            const ScrParams& p, Embedder& embedder) {
    p.validate();
    std::vector<ReducedDocument> reduced;
    reduced.reserve(docs.size());
    for (const auto& d : docs) reduced.push_back(reduce_document(query_vec, d, p, embedder));
    return reorder(std::move(reduced));
}

}  // namespace ecovector::scr
