#pragma once

// JSON-over-HTTP facade for chat clients, versioned under /v1.
//
//   POST /v1/query                {text, k?, session_id?, stream?}
//   GET  /v1/documents/{id}
//   GET  /v1/status
//   POST /v1/index/build          {paths: [...]} or {directory: "..."}
//   POST /v1/index/update         {add?: [...], remove?: [doc_id, ...]}
//   GET  /v1/jobs/{id}
//   GET  /v1/sessions/{sid}/queries/{qid}/references
//
// Streaming queries answer with NDJSON frames: {"type":"token","text":...}
// per token, then one terminal {"type":"done", query_id, references, timings}.

#include <deque>
#include <map>
#include <mutex>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "ecovector/ragpipe.hpp"

namespace ecovector {

struct ServiceOptions {
    std::string cors_origin = "*";
    std::size_t session_history = 32;
    std::size_t default_k = 5;
    /// Runs at the start of every index job, before the work. Tests use it
    /// to hold a job open.
    std::function<void()> job_hook;
};

inline int http_status(ErrorCode c) {
    switch (c) {
        case ErrorCode::kInvalidArgument:
        case ErrorCode::kDimensionMismatch:
        case ErrorCode::kZeroVector:
        case ErrorCode::kFormat:
        case ErrorCode::kEmpty:
        case ErrorCode::kIo:
            return 400;
        case ErrorCode::kNotFound:
            return 404;
        case ErrorCode::kBusy:
        case ErrorCode::kDuplicateKey:
            return 409;
        case ErrorCode::kUnavailable:
            return 503;
        case ErrorCode::kDanglingReference:
            return 500;
    }
    return 500;
}

inline nlohmann::json to_json(const Reference& r) {
    return {{"doc_id", r.doc_id}, {"title", r.title}, {"score", r.score}};
}

inline nlohmann::json to_json(const std::vector<Reference>& refs) {
    auto a = nlohmann::json::array();
    for (const auto& r : refs) a.push_back(to_json(r));
    return a;
}

inline nlohmann::json to_json(const QueryTimings& t) {
    return {{"retrieval_ms", t.retrieval_ms}, {"scr_ms", t.scr_ms}, {"first_token_ms", t.first_token_ms},
            {"ttft_ms", t.ttft_ms}, {"total_ms", t.total_ms}};
}

class Service {
public:
    Service(RagPipeline& pipeline, ServiceOptions opts = {}) : pipe_(pipeline), opts_(std::move(opts)) { routes(); }

    ~Service() {
        stop();
        wait_for_jobs();
    }

    httplib::Server& server() { return srv_; }

    int bind_to_any_port(const std::string& host = "127.0.0.1") { return srv_.bind_to_any_port(host); }
    bool listen_after_bind() { return srv_.listen_after_bind(); }
    bool listen(const std::string& host, int port) { return srv_.listen(host, port); }
    void stop() { srv_.stop(); }

    bool update_in_progress() const { return lease_.load(); }

    /// Blocks until no index job is running.
    void wait_for_jobs() {
        std::vector<std::thread> done;
        {
            std::lock_guard g(jobs_mu_);
            done.swap(workers_);
        }
        for (auto& t : done) t.join();
    }

private:
    struct Job {
        std::string id;
        std::string kind;
        std::string state = "running";
        nlohmann::json result = nlohmann::json::object();
        std::string error;
    };

    struct Session {
        std::deque<std::string> recent;
        std::map<std::string, std::vector<Reference>> references;
    };

    static void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    static void send_error(httplib::Response& res, int status, const std::string& msg) {
        send_json(res, status, {{"error", msg}, {"status", status}});
    }

    static std::optional<std::uint64_t> parse_id(const std::string& s) {
        if (s.empty() || s.size() > 19 || s.find_first_not_of("0123456789") != std::string::npos) return std::nullopt;
        return std::stoull(s);
    }

    static nlohmann::json parse_body(const httplib::Request& req) {
        auto j = nlohmann::json::parse(req.body.empty() ? std::string("{}") : req.body, nullptr, false);
        if (j.is_discarded() || !j.is_object()) fail(ErrorCode::kInvalidArgument, "request body must be a JSON object");
        return j;
    }

    template <class F>
    void guarded(httplib::Response& res, F&& f) {
        try {
            f();
        } catch (const Error& e) {
            send_error(res, http_status(e.code()), e.what());
        } catch (const nlohmann::json::exception& e) {
            send_error(res, 400, e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, e.what());
        }
    }

    void routes() {
        srv_.set_default_headers({{"Access-Control-Allow-Origin", opts_.cors_origin},
                                  {"Access-Control-Expose-Headers", "Content-Type"}});
        srv_.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
            res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
            res.set_header("Access-Control-Allow-Headers", "Content-Type");
            res.status = 204;
        });

        srv_.Get("/v1/status", [this](const httplib::Request&, httplib::Response& res) {
            guarded(res, [&] {
                const auto s = pipe_.status();
                send_json(res, 200, {{"files", s.files}, {"vectors", s.vectors}, {"index_version", s.index_version},
                                     {"built", pipe_.built()}, {"update_in_progress", lease_.load()}});
            });
        });

        srv_.Get(R"(/v1/documents/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                auto id = parse_id(req.matches[1]);
                if (!id) fail(ErrorCode::kInvalidArgument, "document id must be an unsigned integer");
                auto d = pipe_.document(*id);
                if (!d) fail(ErrorCode::kNotFound, "unknown document " + std::to_string(*id));
                send_json(res, 200, {{"doc_id", d->doc_id}, {"title", d->title}, {"text", d->text}});
            });
        });

        srv_.Get(R"(/v1/sessions/([^/]+)/queries/([^/]+)/references)",
                 [this](const httplib::Request& req, httplib::Response& res) {
                     guarded(res, [&] {
                         std::lock_guard g(sessions_mu_);
                         auto s = sessions_.find(req.matches[1]);
                         if (s == sessions_.end()) fail(ErrorCode::kNotFound, "unknown session");
                         auto q = s->second.references.find(req.matches[2]);
                         if (q == s->second.references.end()) fail(ErrorCode::kNotFound, "unknown query in session");
                         send_json(res, 200, {{"query_id", q->first}, {"references", to_json(q->second)}});
                     });
                 });

        srv_.Post("/v1/query", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { handle_query(req, res); });
        });

        srv_.Post("/v1/index/build", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto body = parse_body(req);
                std::vector<std::filesystem::path> paths;
                if (body.contains("directory")) {
                    const std::filesystem::path dir = body.at("directory").get<std::string>();
                    if (!std::filesystem::is_directory(dir)) fail(ErrorCode::kInvalidArgument, "not a directory: " + dir.string());
                    for (const auto& e : std::filesystem::directory_iterator(dir))
                        if (e.is_regular_file()) paths.push_back(e.path());
                    std::sort(paths.begin(), paths.end());
                }
                if (body.contains("paths"))
                    for (const auto& p : body.at("paths").get<std::vector<std::string>>()) paths.emplace_back(p);
                start_job(res, "build", [this, paths] {
                    const auto r = pipe_.build_index(paths);
                    return nlohmann::json{{"files", r.files}, {"vectors", r.vectors}};
                });
            });
        });

        srv_.Post("/v1/index/update", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto body = parse_body(req);
                std::vector<std::filesystem::path> add;
                std::vector<std::uint64_t> remove;
                if (body.contains("add"))
                    for (const auto& p : body.at("add").get<std::vector<std::string>>()) add.emplace_back(p);
                if (body.contains("remove")) remove = body.at("remove").get<std::vector<std::uint64_t>>();
                start_job(res, "update", [this, add, remove] {
                    const auto r = pipe_.update_index(add, remove);
                    return nlohmann::json{{"files_added", r.files_added},     {"vectors_added", r.vectors_added},
                                          {"files_removed", r.files_removed}, {"vectors_removed", r.vectors_removed},
                                          {"files", r.totals.files},          {"vectors", r.totals.vectors}};
                });
            });
        });

        srv_.Get(R"(/v1/jobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                std::lock_guard g(jobs_mu_);
                auto it = jobs_.find(req.matches[1]);
                if (it == jobs_.end()) fail(ErrorCode::kNotFound, "unknown job");
                send_json(res, 200, job_json(it->second));
            });
        });
    }

    static nlohmann::json job_json(const Job& j) {
        nlohmann::json out = {{"job_id", j.id}, {"kind", j.kind}, {"state", j.state}, {"result", j.result}};
        if (!j.error.empty()) out["error"] = j.error;
        return out;
    }

    void start_job(httplib::Response& res, const std::string& kind, std::function<nlohmann::json()> work) {
        bool expected = false;
        if (!lease_.compare_exchange_strong(expected, true)) fail(ErrorCode::kBusy, "an index update is already in progress");
        std::lock_guard g(jobs_mu_);
        const std::string id = "job" + std::to_string(++job_counter_);
        Job& job = jobs_[id];
        job.id = id;
        job.kind = kind;
        workers_.emplace_back([this, id, work = std::move(work)] {
            nlohmann::json result;
            std::string error;
            try {
                if (opts_.job_hook) opts_.job_hook();
                result = work();
            } catch (const std::exception& e) {
                error = e.what();
            }
            {
                std::lock_guard g2(jobs_mu_);
                Job& j = jobs_[id];
                j.state = error.empty() ? "succeeded" : "failed";
                j.error = error;
                if (error.empty()) j.result = result;
            }
            lease_ = false;
        });
        send_json(res, 202, job_json(jobs_[id]));
    }

    std::string remember(const std::string& requested_session, const QueryResult& r) {
        std::lock_guard g(sessions_mu_);
        std::string sid = requested_session;
        if (sid.empty()) sid = "s" + std::to_string(++session_counter_);
        Session& s = sessions_[sid];
        s.recent.push_back(r.query_id);
        s.references[r.query_id] = r.references;
        while (s.recent.size() > opts_.session_history) {
            s.references.erase(s.recent.front());
            s.recent.pop_front();
        }
        return sid;
    }

    void handle_query(const httplib::Request& req, httplib::Response& res) {
        if (lease_.load()) fail(ErrorCode::kBusy, "an index update is in progress");
        const auto body = parse_body(req);
        if (!body.contains("text") || !body.at("text").is_string())
            fail(ErrorCode::kInvalidArgument, "query needs a string field 'text'");
        const std::string text = body.at("text").get<std::string>();
        if (scr::trim(text).empty()) fail(ErrorCode::kInvalidArgument, "query text is empty");
        std::size_t k = opts_.default_k;
        if (body.contains("k")) {
            if (!body.at("k").is_number_unsigned() || body.at("k").get<std::size_t>() == 0)
                fail(ErrorCode::kInvalidArgument, "k must be a positive integer");
            k = body.at("k").get<std::size_t>();
        }
        const std::string session = body.value("session_id", std::string());
        const bool stream = body.value("stream", false);
        if (!pipe_.built()) fail(ErrorCode::kUnavailable, "index has not been built");

        if (!stream) {
            const auto r = pipe_.answer_query(text, k);
            const auto sid = remember(session, r);
            send_json(res, 200, {{"query_id", r.query_id}, {"session_id", sid}, {"answer", r.answer},
                                 {"references", to_json(r.references)}, {"timings", to_json(r.timing)}});
            return;
        }
        res.set_chunked_content_provider("application/x-ndjson", [this, text, k, session](std::size_t, httplib::DataSink& sink) {
            auto frame = [&](const nlohmann::json& j) {
                const std::string line = j.dump() + "\n";
                sink.write(line.data(), line.size());
            };
            try {
                const auto r = pipe_.answer_query(text, k, [&](std::string_view tok) {
                    frame({{"type", "token"}, {"text", std::string(tok)}});
                });
                const auto sid = remember(session, r);
                frame({{"type", "done"}, {"query_id", r.query_id}, {"session_id", sid}, {"answer", r.answer},
                       {"references", to_json(r.references)}, {"timings", to_json(r.timing)}});
            } catch (const Error& e) {
                frame({{"type", "error"}, {"status", http_status(e.code())}, {"error", e.what()}});
            } catch (const std::exception& e) {
                frame({{"type", "error"}, {"status", 500}, {"error", e.what()}});
            }
            sink.done();
            return true;
        });
    }

    RagPipeline& pipe_;
    ServiceOptions opts_;
    httplib::Server srv_;
    std::atomic<bool> lease_{false};

    std::mutex jobs_mu_;
    std::map<std::string, Job> jobs_;
    std::vector<std::thread> workers_;
    std::uint64_t job_counter_ = 0;

    std::mutex sessions_mu_;
    std::map<std::string, Session> sessions_;
    std::uint64_t session_counter_ = 0;
};

}  // namespace ecovector
