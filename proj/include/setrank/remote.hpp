#pragma once

#include <chrono>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "setrank/judge.hpp"
#include "setrank/types.hpp"

namespace setrank {

struct RemoteJudgeConfig {
    std::string endpoint;  // e.g. http://127.0.0.1:8080/judge
    std::string api_key;   // sent as a bearer token when non-empty
    double timeout_seconds = 30.0;
    int transport_retries = 2;  // extra attempts on transport failure only
};

namespace detail {

struct SplitUrl {
    std::string base;  // scheme://host[:port]
    std::string path;  // starts with '/'
};

inline SplitUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw std::invalid_argument("endpoint must be a full URL: " + url);
    }
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace detail

/// Sends one prompt bundle to the endpoint and returns the raw completion.
/// Request body: {"system", "user", "query", "passages": [{"title","text"}]}.
/// Transport failures are retried up to the configured count; timeouts,
/// transport errors and non-success statuses each surface as their own
/// exception type. Parse failures are never retried here because parsing
/// happens in the caller.
inline std::string remote_judge_call(const RemoteJudgeConfig& cfg, const PromptBundle& bundle) {
    if (cfg.endpoint.empty()) throw std::invalid_argument("remote judge endpoint not configured");
    const auto url = detail::split_url(cfg.endpoint);

    nlohmann::ordered_json body;
    body["system"] = bundle.system_text;
    body["user"] = bundle.user_text;
    body["query"] = bundle.query;
    body["passages"] = nlohmann::json::array();
    for (const auto& [title, text] : bundle.passages) {
        body["passages"].push_back({{"title", title}, {"text", text}});
    }
    const std::string payload = body.dump();

    std::string last_error;
    bool last_was_timeout = false;
    for (int attempt = 0; attempt <= cfg.transport_retries; ++attempt) {
        httplib::Client client(url.base);
        const auto micros = static_cast<std::chrono::microseconds::rep>(cfg.timeout_seconds * 1e6);
        client.set_connection_timeout(std::chrono::microseconds(micros));
        client.set_read_timeout(std::chrono::microseconds(micros));
        client.set_write_timeout(std::chrono::microseconds(micros));
        httplib::Headers headers;
        if (!cfg.api_key.empty()) {
            headers.emplace("Authorization", "Bearer " + cfg.api_key);
        }

        const auto started = std::chrono::steady_clock::now();
        auto res = client.Post(url.path, headers, payload, "application/json");
        if (res) {
            if (res->status < 200 || res->status >= 300) {
                throw HttpStatusError(res->status,
                                      "judge endpoint returned status " +
                                          std::to_string(res->status),
                                      res->body);
            }
            return res->body;
        }
        const auto elapsed = std::chrono::duration<double>(
                                 std::chrono::steady_clock::now() - started)
                                 .count();
        last_was_timeout = res.error() == httplib::Error::ConnectionTimeout ||
                           elapsed >= cfg.timeout_seconds * 0.95;
        last_error = httplib::to_string(res.error());
    }
    if (last_was_timeout) {
        throw TimeoutError("judge call timed out after retries: " + last_error);
    }
    throw TransportError("judge transport failed after retries: " + last_error);
}

/// Remote setwise judge speaking the fixed prompt format. The corpus supplies
/// passage titles and bodies; titles are matched case-insensitively against
/// the returned answer block.
class RemoteJudge : public SetwiseJudge {
public:
    RemoteJudge(RemoteJudgeConfig cfg, const Corpus& docs) : cfg_(std::move(cfg)), docs_(docs) {}

    JudgeVerdict judge_batch(const std::string& query, const Batch& batch) override {
        const PromptBundle bundle = format_prompt(query, batch, docs_);
        const std::string raw = remote_judge_call(cfg_, bundle);
        std::vector<std::string> titles;
        titles.reserve(bundle.passages.size());
        for (const auto& [title, text] : bundle.passages) titles.push_back(title);
        const ParsedAnswer parsed = parse_answer_block(raw, titles);
        JudgeVerdict verdict;
        verdict.doc_ids = batch.doc_ids;
        verdict.bits = parsed.bits;
        verdict.raw_output = raw;
        return verdict;
    }

private:
    RemoteJudgeConfig cfg_;
    const Corpus& docs_;
};

}  // namespace setrank
