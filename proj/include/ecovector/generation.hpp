#pragma once

#include <atomic>
#include <functional>
#include <string>
#include <string_view>

#include "ecovector/core.hpp"

namespace ecovector {

/// Process-wide count of outbound network requests. Every client that talks
/// to a remote endpoint bumps it before connecting.
inline std::atomic<std::uint64_t>& network_operations() {
    static std::atomic<std::uint64_t> counter{0};
    return counter;
}

using TokenSink = std::function<void(std::string_view token)>;

class GenerationClient {
public:
    virtual ~GenerationClient() = default;
    /// Streams tokens into `sink` and returns the full answer.
    virtual std::string generate(const std::string& prompt, const TokenSink& sink) = 0;
};

/// Offline stand-in: answers with a deterministic summary of the prompt.
class EchoGenerator final : public GenerationClient {
public:
    std::string generate(const std::string& prompt, const TokenSink& sink) override {
        std::size_t contexts = 0;
        for (std::size_t pos = prompt.find("\nContext "); pos != std::string::npos;
             pos = prompt.find("\nContext ", pos + 1))
            ++contexts;
        if (prompt.rfind("Context ", 0) == 0) ++contexts;
        std::size_t tokens = 0;
        bool in = false;
        for (char c : prompt) {
            const bool ws = c == ' ' || c == '\n' || c == '\t' || c == '\r';
            if (!ws && !in) ++tokens;
            in = !ws;
        }
        const std::string answer = "[echo] contexts=" + std::to_string(contexts) +
                                   " prompt_tokens=" + std::to_string(tokens);
        std::size_t start = 0;
        while (start < answer.size()) {
            std::size_t end = answer.find(' ', start);
            end = end == std::string::npos ? answer.size() : end + 1;
            if (sink) sink(std::string_view(answer).substr(start, end - start));
            start = end;
        }
        ++calls_;
        return answer;
    }

    std::size_t calls() const { return calls_; }

private:
    std::atomic<std::size_t> calls_{0};
};

}  // namespace ecovector
