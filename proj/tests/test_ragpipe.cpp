#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "ecovector/generation.hpp"
#include "ecovector/ragpipe.hpp"
#include "scr_fixtures.hpp"
#include "test_support.hpp"

using namespace ecovector;
using testing_support::TempDir;

namespace {

std::filesystem::path write(const TempDir& dir, const std::string& name, const std::string& text) {
    const auto p = dir / name;
    std::ofstream(p, std::ios::binary) << text;
    return p;
}

std::string words(std::size_t n, const std::string& stem) {
    std::string s;
    for (std::size_t i = 0; i < n; ++i) s += (i ? " " : "") + stem + std::to_string(i);
    return s;
}

PipelineConfig small_config(std::size_t chunk_tokens = 8) {
    PipelineConfig c;
    c.chunk_tokens = chunk_tokens;
    c.build.n_clusters = 4;
    c.search = SearchParams{4, 16, 64, 5};
    return c;
}

class FailingGenerator final : public GenerationClient {
public:
    std::string generate(const std::string&, const TokenSink&) override {
        fail(ErrorCode::kUnavailable, "generation endpoint down");
    }
};

}  // namespace

TEST(ChunkText, SpansCoverTokens) {
    const std::string t = "  a bb ccc\n dddd e  ";
    const auto spans = chunk_text(t, 2);
    ASSERT_EQ(spans.size(), 3u);
    EXPECT_EQ(t.substr(spans[0].start, spans[0].end - spans[0].start), "a bb");
    EXPECT_EQ(t.substr(spans[1].start, spans[1].end - spans[1].start), "ccc\n dddd");
    EXPECT_EQ(t.substr(spans[2].start, spans[2].end - spans[2].start), "e");
    EXPECT_TRUE(chunk_text("   ", 4).empty());
    EXPECT_THROW(chunk_text("x", 0), Error);
}

TEST(BuildPrompt, TemplateIsFixed) {
    EXPECT_EQ(build_prompt({{"T1", "alpha."}, {"T2", "beta."}}, "why?"),
              "Context 1 [T1]:\nalpha.\n\nContext 2 [T2]:\nbeta.\n\n---\nQuestion: why?\nAnswer:");
    EXPECT_EQ(build_prompt({}, "q"), "---\nQuestion: q\nAnswer:");
}

TEST(RagPipeline, RowCountsMatchChunks) {
    TempDir dir;
    HashEmbedder e(16);
    EchoGenerator g;
    RagPipeline p(dir / "data", small_config(8), e, g);
    // 20, 8 and 3 tokens: 3 + 1 + 1 chunks
    const auto files = std::vector<std::filesystem::path>{write(dir, "a.txt", words(20, "a")),
                                                          write(dir, "b.txt", words(8, "b")),
                                                          write(dir, "c.txt", words(3, "c"))};
    const auto rep = p.build_index(files);
    EXPECT_EQ(rep.files, 3u);
    EXPECT_EQ(rep.vectors, 5u);
    EXPECT_EQ(rep.display(), "3 Files, 5 Vectors");
    EXPECT_EQ(p.store().counts().documents, 3u);
    EXPECT_EQ(p.store().counts().embeddings, 5u);
    EXPECT_EQ(p.store().counts().metadata, 5u);
    EXPECT_EQ(p.index().live_count(), 5u);
    EXPECT_TRUE(p.store().integrity_violations().empty());
    std::size_t tokens = 0;
    for (const auto& m : p.store().metadata()) {
        const auto n = scr::count_tokens(fetch_chunk_text(p.store(), m.chunk_id));
        EXPECT_LE(n, 8u);
        tokens += n;
    }
    EXPECT_EQ(tokens, 31u);
    EXPECT_EQ(p.document(1)->title, "a");
}

TEST(RagPipeline, EmptyCorpusRejected) {
    TempDir dir;
    HashEmbedder e(16);
    EchoGenerator g;
    RagPipeline p(dir / "data", small_config(), e, g);
    try {
        p.build_index(std::vector<std::filesystem::path>{});
        FAIL();
    } catch (const Error& err) {
        EXPECT_EQ(err.code(), ErrorCode::kEmpty);
    }
    EXPECT_THROW(p.build_index(std::vector<std::filesystem::path>{write(dir, "blank.txt", " \n ")}), Error);
    EXPECT_THROW(p.build_index(std::vector<std::filesystem::path>{dir / "missing.txt"}), Error);
    EXPECT_FALSE(p.built());
    EXPECT_THROW(p.answer_query("anything", 3), Error);
}

TEST(RagPipeline, RebuildIsIdempotent) {
    TempDir dir;
    HashEmbedder e(16);
    EchoGenerator g;
    std::vector<std::filesystem::path> files;
    for (int i = 0; i < 6; ++i) files.push_back(write(dir, "f" + std::to_string(i) + ".txt", words(30, "w" + std::to_string(i))));
    RagPipeline p(dir / "data", small_config(), e, g);
    p.build_index(files);
    const auto first = read_file_bytes(p.index_dir() / "manifest.json");
    const auto answer1 = p.answer_query("w3x5 w3x6", 3).answer;
    p.build_index(files);
    EXPECT_EQ(read_file_bytes(p.index_dir() / "manifest.json"), first);
    EXPECT_EQ(p.answer_query("w3x5 w3x6", 3).answer, answer1);
    EXPECT_EQ(p.status().index_version, 2u);
}

TEST(RagPipeline, UpdateAddsAndRemoves) {
    TempDir dir;
    HashEmbedder e(32);
    EchoGenerator g;
    RagPipeline p(dir / "data", small_config(), e, g);
    p.build_index(std::vector<std::filesystem::path>{write(dir, "a.txt", words(16, "apple")),
                                                     write(dir, "b.txt", words(16, "banana"))});
    const auto before = p.index().live_count();
    const auto rep = p.update_index(std::vector<std::filesystem::path>{write(dir, "c.txt", words(24, "cherry"))}, {});
    EXPECT_EQ(rep.vectors_added, 3u);
    EXPECT_EQ(p.index().live_count(), before + 3);

    const auto q = p.answer_query("banana3 banana4", 5);
    bool had_b = false;
    for (const auto& r : q.references) had_b |= r.doc_id == 2;
    EXPECT_TRUE(had_b);
    p.update_index(std::vector<std::filesystem::path>{}, {2});
    for (int i = 0; i < 5; ++i)
        for (const auto& r : p.answer_query("banana" + std::to_string(i), 5).references) EXPECT_NE(r.doc_id, 2u);
    EXPECT_FALSE(p.document(2));
    EXPECT_EQ(p.status().files, 2u);

    // unknown ids are rejected before anything changes
    const auto live = p.index().live_count();
    EXPECT_THROW(p.update_index(std::vector<std::filesystem::path>{write(dir, "d.txt", "more words")}, {1, 99}), Error);
    EXPECT_EQ(p.index().live_count(), live);
    EXPECT_TRUE(p.document(1));
    EXPECT_TRUE(p.store().integrity_violations().empty());
}

TEST(RagPipeline, ReopenKeepsState) {
    TempDir dir;
    HashEmbedder e(16);
    EchoGenerator g;
    std::string answer;
    {
        RagPipeline p(dir / "data", small_config(), e, g);
        p.build_index(std::vector<std::filesystem::path>{write(dir, "a.txt", words(40, "x"))});
        answer = p.answer_query("x1 x2", 2).answer;
    }
    RagPipeline p(dir / "data", small_config(), e, g);
    EXPECT_TRUE(p.built());
    EXPECT_EQ(p.status().vectors, 5u);
    EXPECT_EQ(p.answer_query("x1 x2", 2).answer, answer);
}

TEST(RagPipeline, OfflineQueryMakesNoNetworkCalls) {
    TempDir dir;
    HashEmbedder e(32);
    EchoGenerator g;
    const auto before = network_operations().load();
    RagPipeline p(dir / "data", small_config(16), e, g);
    std::vector<std::filesystem::path> files;
    for (int i = 0; i < 5; ++i)
        files.push_back(write(dir, "d" + std::to_string(i) + ".txt", testing_support::generated_document("t" + std::to_string(i), 12, i)));
    p.build_index(files);
    std::vector<std::string> streamed;
    const auto r = p.answer_query("the recipe of t2", 3, [&](std::string_view t) { streamed.emplace_back(t); });
    EXPECT_EQ(network_operations().load(), before);
    EXPECT_GT(g.calls(), 0u);
    std::string joined;
    for (auto& s : streamed) joined += s;
    EXPECT_EQ(joined, r.answer);
    EXPECT_EQ(r.answer.rfind("[echo] contexts=3 ", 0), 0u);
}

TEST(RagPipeline, PromptFollowsReorderAndShrinks) {
    TempDir dir;
    HashEmbedder e(64);
    EchoGenerator g;
    auto cfg = small_config(60);
    RagPipeline p(dir / "data", cfg, e, g);
    std::vector<std::filesystem::path> files;
    for (int i = 0; i < 8; ++i)
        files.push_back(write(dir, "d" + std::to_string(i) + ".txt", testing_support::generated_document("topic" + std::to_string(i), 20, 100 + i)));
    p.build_index(files);
    for (int i = 0; i < 8; ++i) {
        const auto r = p.answer_query("price of topic" + std::to_string(i), 4);
        ASSERT_FALSE(r.references.empty());
        EXPECT_EQ(r.prompt, build_prompt(prompt_blocks(r.reduced), "price of topic" + std::to_string(i)));
        EXPECT_EQ(r.prompt, build_prompt(prompt_blocks(scr::reorder(r.reduced)), "price of topic" + std::to_string(i)));
        ASSERT_EQ(r.references.size(), r.reduced.size());
        for (std::size_t j = 0; j < r.references.size(); ++j) {
            EXPECT_EQ(r.references[j].doc_id, r.reduced[j].doc_id);
            if (j) {
                EXPECT_GE(r.references[j - 1].score, r.references[j].score);
            }
        }
        const std::string unreduced = build_prompt(prompt_blocks(r.retrieved), "price of topic" + std::to_string(i));
        EXPECT_LE(scr::count_tokens(r.prompt), scr::count_tokens(unreduced));
    }
}

TEST(RagPipeline, TiramisuPromptPutsMergedDocFirst) {
    TempDir dir;
    testing_support::Tiramisu t;
    testing_support::ScriptedEmbedder e;
    t.script(e);
    const std::string a = "Gelato is churned slowly.", c = "Croissants need cold butter.";
    const std::string query = "Show me the dessert recipe from recent downloads";
    e.set(a, 0.7);
    e.set(c, 0.4);
    e.set(t.document(), 0.6);
    e.set(query, 1.0);
    EchoGenerator g;
    PipelineConfig cfg;
    cfg.chunk_tokens = 1000;
    cfg.build.n_clusters = 1;
    cfg.search = SearchParams{1, 1, 8, 3};
    cfg.scr = t.params();
    RagPipeline p(dir / "data", cfg, e, g);
    p.build_index(std::vector<SourceDocument>{{write(dir, "a.txt", a), "Doc A"},
                                              {write(dir, "b.txt", t.document()), "Doc B"},
                                              {write(dir, "c.txt", c), "Doc C"}});
    const auto r = p.answer_query(query, 3);
    ASSERT_EQ(r.references.size(), 3u);
    EXPECT_EQ(r.references[0].title, "Doc B");
    EXPECT_EQ(r.references[1].title, "Doc A");
    EXPECT_EQ(r.references[2].title, "Doc C");
    const std::string expected = std::string("Context 1 [Doc B]:\n") + testing_support::Tiramisu::kGoldenMerged +
                                 "\n\nContext 2 [Doc A]:\n" + a + "\n\nContext 3 [Doc C]:\n" + c +
                                 "\n\n---\nQuestion: " + query + "\nAnswer:";
    EXPECT_EQ(r.prompt, expected);
}

TEST(RagPipeline, TimingsDecompose) {
    TempDir dir;
    HashEmbedder e(16);
    EchoGenerator g;
    RagPipeline p(dir / "data", small_config(), e, g);
    p.build_index(std::vector<std::filesystem::path>{write(dir, "a.txt", words(50, "z"))});
    const auto r = p.answer_query("z4", 3);
    const auto& t = r.timing;
    EXPECT_GE(t.retrieval_ms, 0.0);
    EXPECT_GE(t.scr_ms, 0.0);
    EXPECT_GE(t.first_token_ms, 0.0);
    EXPECT_NEAR(t.retrieval_ms + t.scr_ms + t.first_token_ms, t.ttft_ms, 1e-6);
    EXPECT_LE(t.ttft_ms, t.total_ms + 1e-9);
    EXPECT_NE(p.answer_query("z4", 3).query_id, r.query_id);
}

TEST(RagPipeline, GeneratorFailureSurfaces) {
    TempDir dir;
    HashEmbedder e(16);
    FailingGenerator g;
    RagPipeline p(dir / "data", small_config(), e, g);
    p.build_index(std::vector<std::filesystem::path>{write(dir, "a.txt", words(10, "q"))});
    try {
        p.answer_query("q1", 2);
        FAIL();
    } catch (const Error& err) {
        EXPECT_EQ(err.code(), ErrorCode::kUnavailable);
    }
}

TEST(RagPipeline, NoRetrievalMeansNoContextAnswer) {
    TempDir dir;
    HashEmbedder e(16);
    EchoGenerator g;
    RagPipeline p(dir / "data", small_config(), e, g);
    p.build_index(std::vector<std::filesystem::path>{write(dir, "a.txt", words(5, "only"))});
    p.update_index(std::vector<std::filesystem::path>{}, {1});
    const auto r = p.answer_query("only1", 3);
    EXPECT_EQ(r.answer, kNoContextAnswer);
    EXPECT_TRUE(r.references.empty());
    EXPECT_EQ(g.calls(), 0u);
}
