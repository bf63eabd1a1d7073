#pragma once

// Clients for remote embedding and generation endpoints.
//
// Embedding:  POST <url>  {"texts": [string, ...]}
//             200         {"embeddings": [[float, ...], ...]}
// Generation: POST <url>  {"prompt": string, "stream": bool}
//             200         {"text": string}                       (stream=false)
//             200         NDJSON lines {"token": string}         (stream=true)

#include <chrono>
#include <string>

#include "httplib.h"
#include "json.hpp"

#include "ecovector/embedder.hpp"
#include "ecovector/generation.hpp"

namespace ecovector {

struct EndpointUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;

    static EndpointUrl parse(const std::string& url) {
        const auto scheme = url.find("://");
        if (scheme == std::string::npos) fail(ErrorCode::kInvalidArgument, "endpoint URL needs a scheme: " + url);
        const auto slash = url.find('/', scheme + 3);
        if (slash == std::string::npos) return {url, "/"};
        return {url.substr(0, slash), url.substr(slash)};
    }
};

namespace detail {

inline httplib::Client make_client(const EndpointUrl& u, std::chrono::milliseconds timeout) {
    httplib::Client cli(u.origin);
    cli.set_connection_timeout(timeout);
    cli.set_read_timeout(timeout);
    cli.set_write_timeout(timeout);
    return cli;
}

}  // namespace detail

class RemoteEmbedder final : public Embedder {
public:
    RemoteEmbedder(const std::string& url, std::size_t dim, std::chrono::milliseconds timeout = std::chrono::seconds(30))
        : url_(EndpointUrl::parse(url)), dim_(dim), timeout_(timeout) {}

    std::size_t dimension() const override { return dim_; }

    std::vector<std::vector<float>> embed(std::span<const std::string> texts) override {
        ++network_operations();
        auto cli = detail::make_client(url_, timeout_);
        nlohmann::json body = {{"texts", std::vector<std::string>(texts.begin(), texts.end())}};
        auto res = cli.Post(url_.path, body.dump(), "application/json");
        if (!res) fail(ErrorCode::kUnavailable, "embedding endpoint unreachable: " + httplib::to_string(res.error()));
        if (res->status != 200) fail(ErrorCode::kUnavailable, "embedding endpoint returned " + std::to_string(res->status));
        try {
            auto j = nlohmann::json::parse(res->body);
            auto out = j.at("embeddings").get<std::vector<std::vector<float>>>();
            if (out.size() != texts.size()) fail(ErrorCode::kUnavailable, "embedding endpoint returned wrong batch size");
            for (const auto& v : out)
                if (v.size() != dim_) fail(ErrorCode::kDimensionMismatch, "embedding endpoint returned wrong dimension");
            return out;
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::kUnavailable, std::string("malformed embedding response: ") + e.what());
        }
    }

private:
    EndpointUrl url_;
    std::size_t dim_;
    std::chrono::milliseconds timeout_;
};

class RemoteGenerator final : public GenerationClient {
public:
    explicit RemoteGenerator(const std::string& url, bool stream = true,
                             std::chrono::milliseconds timeout = std::chrono::seconds(120))
        : url_(EndpointUrl::parse(url)), stream_(stream), timeout_(timeout) {}

    std::string generate(const std::string& prompt, const TokenSink& sink) override {
        ++network_operations();
        auto cli = detail::make_client(url_, timeout_);
        const std::string body = nlohmann::json{{"prompt", prompt}, {"stream", stream_}}.dump();
        std::string answer;
        std::string pending;
        auto handle_line = [&](std::string_view line) {
            if (line.empty()) return;
            auto j = nlohmann::json::parse(line);
            const auto tok = j.at("token").get<std::string>();
            answer += tok;
            if (sink) sink(tok);
        };
        httplib::Request req;
        req.method = "POST";
        req.path = url_.path;
        req.body = body;
        req.set_header("Content-Type", "application/json");
        std::string whole;
        req.content_receiver = [&](const char* data, size_t n, uint64_t, uint64_t) {
            if (!stream_) {
                whole.append(data, n);
                return true;
            }
            pending.append(data, n);
            std::size_t nl;
            while ((nl = pending.find('\n')) != std::string::npos) {
                handle_line(std::string_view(pending).substr(0, nl));
                pending.erase(0, nl + 1);
            }
            return true;
        };
        httplib::Response res;
        httplib::Error err = httplib::Error::Success;
        try {
            if (!cli.send(req, res, err))
                fail(ErrorCode::kUnavailable, "generation endpoint unreachable: " + httplib::to_string(err));
            if (res.status != 200) fail(ErrorCode::kUnavailable, "generation endpoint returned " + std::to_string(res.status));
            if (stream_) {
                handle_line(pending);
            } else {
                answer = nlohmann::json::parse(whole).at("text").get<std::string>();
                if (sink) sink(answer);
            }
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::kUnavailable, std::string("malformed generation response: ") + e.what());
        }
        return answer;
    }

private:
    EndpointUrl url_;
    bool stream_;
    std::chrono::milliseconds timeout_;
};

}  // namespace ecovector
