#include <gtest/gtest.h>

#include <fstream>
#include <map>

#include "ecovector/config.hpp"
#include "ecovector/dataset.hpp"
#include "test_support.hpp"

using namespace ecovector;
using testing_support::TempDir;

namespace {

EnvLookup fake_env(std::map<std::string, std::string> vars) {
    return [vars = std::move(vars)](const char* name) -> std::optional<std::string> {
        auto it = vars.find(name);
        if (it == vars.end()) return std::nullopt;
        return it->second;
    };
}

}  // namespace

TEST(Config, DefaultsAreValid) {
    AppConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    EXPECT_EQ(cfg.pipeline.chunk_tokens, 128u);
    EXPECT_EQ(cfg.pipeline.scr.sliding_window_size, 3u);
    EXPECT_EQ(cfg.pipeline.scr.overlap_size, 2u);
    EXPECT_EQ(cfg.pipeline.scr.context_extension_size, 1u);
    EXPECT_DOUBLE_EQ(cfg.cost.V_volts, 4.0);
    EXPECT_EQ(cfg.pipeline.build.max_resident_clusters, 1u);
}

TEST(Config, JsonOverridesDefaults) {
    AppConfig cfg;
    apply_config_json(cfg, nlohmann::json::parse(R"({
        "index_dir": "/tmp/idx", "dim": 32, "n_clusters": 12, "metric": "cosine",
        "search": {"n_probe": 3, "ef_l": 40},
        "scr": {"overlap_size": 1},
        "cluster_hnsw": {"M": 12},
        "cost": {"V_volts": 3.8, "N": 5},
        "endpoints": {"embed": "http://localhost:9000/embed", "stream": false}
    })"));
    EXPECT_EQ(cfg.index_dir, "/tmp/idx");
    EXPECT_EQ(cfg.dim, 32u);
    EXPECT_EQ(cfg.pipeline.build.n_clusters, 12u);
    EXPECT_EQ(cfg.pipeline.build.metric, Metric::kCosine);
    EXPECT_EQ(cfg.pipeline.search.n_probe, 3u);
    EXPECT_EQ(cfg.pipeline.search.ef_l, 40u);
    EXPECT_EQ(cfg.pipeline.scr.overlap_size, 1u);
    EXPECT_EQ(cfg.pipeline.build.cluster_params.M, 12u);
    EXPECT_DOUBLE_EQ(cfg.cost.V_volts, 3.8);
    EXPECT_EQ(cfg.cost.N, 5.0);
    EXPECT_EQ(cfg.endpoints.embed, "http://localhost:9000/embed");
    EXPECT_FALSE(cfg.endpoints.stream);
    EXPECT_EQ(cfg.pipeline.search.k, SearchParams{}.k);
}

TEST(Config, UnknownKeysRejected) {
    for (const char* text : {R"({"dimm": 3})", R"({"search": {"nprobe": 3}})", R"({"scr": {"window": 3}})",
                             R"({"cost": {"volts": 4}})", R"({"endpoints": {"url": "x"}})"}) {
        AppConfig cfg;
        EXPECT_THROW(apply_config_json(cfg, nlohmann::json::parse(text)), Error) << text;
    }
    AppConfig cfg;
    EXPECT_THROW(apply_config_json(cfg, nlohmann::json::parse(R"({"dim": "big"})")), Error);
    EXPECT_THROW(apply_config_json(cfg, nlohmann::json::parse(R"([1, 2])")), Error);
    EXPECT_THROW(apply_config_json(cfg, nlohmann::json::parse(R"({"n_clusters": -4})")), Error);
    EXPECT_THROW(apply_config_json(cfg, nlohmann::json::parse(R"({"search": {"k": 2.5}})")), Error);
}

TEST(Config, FileErrors) {
    TempDir dir;
    AppConfig cfg;
    std::ofstream(dir / "bad.json") << "{ not json";
    EXPECT_THROW(apply_config_file(cfg, dir / "bad.json"), Error);
    EXPECT_THROW(apply_config_file(cfg, dir / "missing.json"), Error);
    std::ofstream(dir / "ok.json") << R"({"dim": 8})";
    apply_config_file(cfg, dir / "ok.json");
    EXPECT_EQ(cfg.dim, 8u);
}

TEST(Config, EnvironmentBeatsFile) {
    AppConfig cfg;
    apply_config_json(cfg, nlohmann::json::parse(R"({"dim": 32, "n_clusters": 12, "search": {"k": 7}})"));
    apply_env(cfg, fake_env({{"ECOVECTOR_DIM", "48"},
                             {"ECOVECTOR_N_PROBE", "5"},
                             {"ECOVECTOR_ENDPOINT_GENERATE", "http://h:1/gen"},
                             {"ECOVECTOR_INDEX_DIR", "/data/x"}}));
    EXPECT_EQ(cfg.dim, 48u);
    EXPECT_EQ(cfg.pipeline.build.n_clusters, 12u);
    EXPECT_EQ(cfg.pipeline.search.k, 7u);
    EXPECT_EQ(cfg.pipeline.search.n_probe, 5u);
    EXPECT_EQ(cfg.endpoints.generate, "http://h:1/gen");
    EXPECT_EQ(cfg.index_dir, "/data/x");
    EXPECT_THROW(apply_env(cfg, fake_env({{"ECOVECTOR_K", "ten"}})), Error);
    EXPECT_THROW(apply_env(cfg, fake_env({{"ECOVECTOR_K", "-3"}})), Error);
}

TEST(Config, ValidationCatchesInconsistentSearch) {
    AppConfig cfg;
    cfg.pipeline.search.ef_l = cfg.pipeline.search.k - 1;
    EXPECT_THROW(cfg.validate(), Error);
    cfg = AppConfig{};
    cfg.pipeline.scr.overlap_size = 3;
    EXPECT_THROW(cfg.validate(), Error);
    cfg = AppConfig{};
    cfg.dim = 0;
    EXPECT_THROW(cfg.validate(), Error);
}

TEST(Vecs, FvecsAndIvecsRoundTrip) {
    TempDir dir;
    const std::vector<std::vector<float>> rows{{1.f, 2.f, 3.f}, {-0.5f, 0.f, 1e30f}};
    write_fvecs(dir / "a.fvecs", rows);
    EXPECT_EQ(read_fvecs(dir / "a.fvecs"), rows);
    EXPECT_EQ(std::filesystem::file_size(dir / "a.fvecs"), 2u * (4 + 12));
    const std::vector<std::vector<std::int32_t>> ids{{5, 1}, {0, 9}};
    write_ivecs(dir / "g.ivecs", ids);
    EXPECT_EQ(read_ivecs(dir / "g.ivecs"), ids);
    const auto recs = as_records(rows);
    EXPECT_EQ(recs[1].id, 1u);
    EXPECT_EQ(recs[1].values, rows[1]);
}

TEST(Vecs, MalformedFilesRejected) {
    TempDir dir;
    write_fvecs(dir / "a.fvecs", {{1.f, 2.f}, {3.f, 4.f}});
    std::filesystem::resize_file(dir / "a.fvecs", std::filesystem::file_size(dir / "a.fvecs") - 2);
    EXPECT_THROW(read_fvecs(dir / "a.fvecs"), Error);
    write_fvecs(dir / "b.fvecs", {{1.f, 2.f}, {3.f}});
    EXPECT_THROW(read_fvecs(dir / "b.fvecs"), Error);
    EXPECT_THROW(read_fvecs(dir / "none.fvecs"), Error);
}

TEST(Corpus, JsonlReadAndMaterialize) {
    TempDir dir;
    std::ofstream(dir / "c.jsonl") << R"({"title": "First", "text": "One. Two."})" << "\n\n"
                                   << R"({"text": "Untitled body."})" << "\n";
    const auto corpus = read_jsonl_corpus(dir / "c.jsonl");
    ASSERT_EQ(corpus.size(), 2u);
    EXPECT_EQ(corpus[0].title, "First");
    EXPECT_EQ(corpus[1].title, "doc2");
    const auto paths = materialize_corpus(corpus, dir / "out");
    ASSERT_EQ(paths.size(), 2u);
    EXPECT_EQ(paths[0].filename(), "00000.txt");
    EXPECT_EQ(read_text_file(paths[1]), "Untitled body.");

    std::ofstream(dir / "bad.jsonl") << R"({"title": "no text"})" << "\n";
    EXPECT_THROW(read_jsonl_corpus(dir / "bad.jsonl"), Error);
}
