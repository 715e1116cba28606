#pragma once

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "polca/core.hpp"
#include "polca/error.hpp"
#include "polca/oracles.hpp"

namespace polca {

struct LlmEndpointConfig {
    std::string base_url;            // e.g. http://localhost:8080/v1
    std::string model;
    std::string api_key_env = "POLCA_API_KEY";
    int timeout_ms = 30000;
    int max_retries = 3;
    double temperature = 0.7;
    int backoff_initial_ms = 250;    // doubled per retry

    void validate() const {
        if (timeout_ms <= 0) throw ConfigError("llm.timeout_ms must be positive");
        if (max_retries < 0) throw ConfigError("llm.max_retries must be non-negative");
        if (backoff_initial_ms < 0) throw ConfigError("llm.backoff_initial_ms must be non-negative");
        if (base_url.rfind("http://", 0) != 0 && base_url.rfind("https://", 0) != 0)
            throw ConfigError("llm.base_url must start with http:// or https://");
    }
};

enum class ChatRole { system, user, assistant };

inline const char* to_string(ChatRole r) {
    switch (r) {
        case ChatRole::system: return "system";
        case ChatRole::user: return "user";
        case ChatRole::assistant: return "assistant";
    }
    return "?";
}

struct ChatMessage {
    ChatRole role = ChatRole::user;
    std::string content;
};

namespace detail {

struct SplitUrl {
    std::string host;  // scheme://host[:port]
    std::string path_prefix;
};

inline SplitUrl split_base_url(const std::string& base_url) {
    const std::size_t scheme_end = base_url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("llm.base_url: missing scheme");
    const std::size_t path_start = base_url.find('/', scheme_end + 3);
    SplitUrl out;
    if (path_start == std::string::npos) {
        out.host = base_url;
    } else {
        out.host = base_url.substr(0, path_start);
        out.path_prefix = base_url.substr(path_start);
        while (!out.path_prefix.empty() && out.path_prefix.back() == '/')
            out.path_prefix.pop_back();
    }
    return out;
}

inline std::string redact(std::string text, const std::string& secret) {
    if (secret.empty()) return text;
    std::size_t pos = 0;
    while ((pos = text.find(secret, pos)) != std::string::npos) {
        text.replace(pos, secret.size(), "[redacted]");
        pos += 10;
    }
    return text;
}

inline bool transient_status(int status) {
    return status == 429 || (status >= 500 && status < 600);
}

}  // namespace detail

// Chat-completion and embeddings client in the common JSON wire shape.
// Transient failures (connect errors, 429, 5xx) retry with exponential
// backoff up to max_retries; other HTTP errors fail immediately. The API key
// is read from the configured environment variable and never appears in
// error text (response excerpts are redacted).
class LlmClient {
public:
    explicit LlmClient(LlmEndpointConfig config) : config_(std::move(config)) {
        config_.validate();
        const char* key = std::getenv(config_.api_key_env.c_str());
        if (key == nullptr || *key == '\0')
            throw ConfigError("llm: API key environment variable '" + config_.api_key_env +
                              "' is not set");
        api_key_ = key;
        url_ = detail::split_base_url(config_.base_url);
    }

    // Optional debug sink; every request and response line passes through
    // key redaction before reaching it.
    void set_logger(std::function<void(const std::string&)> logger) {
        logger_ = std::move(logger);
    }

    std::string chat_complete(const std::vector<ChatMessage>& messages) {
        for (const auto& m : messages)
            if (m.content.empty() && m.role != ChatRole::assistant)
                throw Error("chat_complete: empty content for a " + std::string(to_string(m.role)) +
                            " message");
        Json body{{"model", config_.model}, {"temperature", config_.temperature}};
        Json jmsgs = Json::array();
        for (const auto& m : messages)
            jmsgs.push_back(Json{{"role", to_string(m.role)}, {"content", m.content}});
        body["messages"] = std::move(jmsgs);

        const Json response = post_json("/chat/completions", body);
        try {
            return response.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const Json::exception& e) {
            throw ParseError("chat_complete: malformed response body: " +
                             detail::redact(e.what(), api_key_));
        }
    }

    Embedding embed(const std::string& text) {
        if (text.empty()) throw Error("embed: text must be non-empty");
        Json body{{"model", config_.model}, {"input", text}};
        const Json response = post_json("/embeddings", body);
        Embedding vec;
        try {
            vec = response.at("data").at(0).at("embedding").get<Embedding>();
        } catch (const Json::exception& e) {
            throw ParseError("embed: malformed response body: " +
                             detail::redact(e.what(), api_key_));
        }
        if (locked_dimension_ == 0) {
            locked_dimension_ = vec.size();
        } else if (vec.size() != locked_dimension_) {
            throw Error("embed: dimension drift: provider returned " + std::to_string(vec.size()) +
                        ", locked at " + std::to_string(locked_dimension_));
        }
        return vec;
    }

    std::size_t locked_dimension() const { return locked_dimension_; }

private:
    void log(const std::string& line) const {
        if (logger_) logger_(detail::redact(line, api_key_));
    }

    Json post_json(const std::string& route, const Json& body) {
        const std::string path = url_.path_prefix + route;
        const std::string payload = body.dump();
        log("POST " + url_.host + path + " " + payload);
        int backoff_ms = config_.backoff_initial_ms;
        std::string last_error = "no attempt made";
        int last_status = -1;
        for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
                backoff_ms *= 2;
            }
            httplib::Client client(url_.host);
            client.set_connection_timeout(std::chrono::milliseconds(config_.timeout_ms));
            client.set_read_timeout(std::chrono::milliseconds(config_.timeout_ms));
            client.set_default_headers({{"Authorization", "Bearer " + api_key_}});
            auto res = client.Post(path, payload, "application/json");
            if (!res) {
                last_status = -1;
                last_error = "connection failure: " + httplib::to_string(res.error());
                log("attempt " + std::to_string(attempt + 1) + ": " + last_error);
                continue;  // transient
            }
            log("attempt " + std::to_string(attempt + 1) + ": HTTP " +
                std::to_string(res->status) + " " + res->body.substr(0, 500));
            if (res->status >= 200 && res->status < 300) {
                try {
                    return Json::parse(res->body);
                } catch (const Json::exception& e) {
                    throw ParseError("llm: response is not JSON: " +
                                     detail::redact(e.what(), api_key_));
                }
            }
            last_status = res->status;
            last_error = "HTTP " + std::to_string(res->status) + ": " +
                         detail::redact(res->body.substr(0, 200), api_key_);
            if (!detail::transient_status(res->status)) break;
        }
        throw TransportError("llm: request to " + path + " failed: " + last_error, last_status);
    }

    LlmEndpointConfig config_;
    std::string api_key_;
    detail::SplitUrl url_;
    std::size_t locked_dimension_ = 0;
    std::function<void(const std::string&)> logger_;
};

// Extracts a candidate payload from a model response: the first fenced code
// block if present, else the first <summary> tag body, else the whole
// trimmed response. A whitespace-only response is unusable.
inline std::string parse_proposal(const std::string& raw) {
    auto trim = [](std::string s) {
        const char* ws = " \t\r\n";
        const auto begin = s.find_first_not_of(ws);
        if (begin == std::string::npos) return std::string();
        const auto end = s.find_last_not_of(ws);
        return s.substr(begin, end - begin + 1);
    };

    const std::size_t fence = raw.find("```");
    if (fence != std::string::npos) {
        std::size_t content_start = fence + 3;
        // Skip an optional language tag on the fence line.
        const std::size_t newline = raw.find('\n', content_start);
        const std::size_t close = raw.find("```", content_start);
        if (close != std::string::npos) {
            if (newline != std::string::npos && newline < close) content_start = newline + 1;
            const std::string block = trim(raw.substr(content_start, close - content_start));
            if (!block.empty()) return block;
        }
    }

    const std::size_t open = raw.find("<summary>");
    if (open != std::string::npos) {
        const std::size_t body = open + std::string("<summary>").size();
        const std::size_t close = raw.find("</summary>", body);
        if (close != std::string::npos) {
            const std::string tag = trim(raw.substr(body, close - body));
            if (!tag.empty()) return tag;
        }
    }

    const std::string whole = trim(raw);
    if (whole.empty()) throw ParseError("parse_proposal: response contains no usable text");
    return whole;
}

// ---------------------------------------------------------------------------
// Oracle implementations on top of the client.
// ---------------------------------------------------------------------------

// Optimizer: renders C_theta (parameter, rollouts in batch order, history
// digest) into a revision prompt and extracts the proposed parameter from
// the reply.
class LlmOptimizer final : public Optimizer {
public:
    explicit LlmOptimizer(std::shared_ptr<LlmClient> client) : client_(std::move(client)) {}

    std::string propose(const ProposalContext& context, RngEngine&) override {
        std::string rollouts;
        for (const auto& obs : context.rollouts) {
            char reward[32];
            std::snprintf(reward, sizeof(reward), "%.6f", obs.reward);
            rollouts += "- task " + obs.task_id + ": output=" + obs.output +
                        " reward=" + reward + " feedback=" + obs.feedback + "\n";
        }
        std::vector<ChatMessage> messages{
            {ChatRole::system,
             "You are an expert program optimizer. Propose an improved parameter for the "
             "program below. Reply with the full new parameter inside a single fenced code "
             "block."},
            {ChatRole::user, "Current parameter:\n```\n" + context.seed.payload +
                                 "\n```\n\nRollouts on the current minibatch:\n" + rollouts +
                                 "\nOptimization history summary:\n" + context.history_context +
                                 "\n\nPropose the improved parameter now."}};
        return parse_proposal(client_->chat_complete(messages));
    }

private:
    std::shared_ptr<LlmClient> client_;
};

class LlmSummarizer final : public Summarizer {
public:
    explicit LlmSummarizer(std::shared_ptr<LlmClient> client) : client_(std::move(client)) {}

    std::string summarize(const SummarizerPrompt& prompt) override {
        return client_->chat_complete(
            {{ChatRole::system, prompt.system}, {ChatRole::user, prompt.user}});
    }

private:
    std::shared_ptr<LlmClient> client_;
};

// Embedder over the embeddings endpoint; provider vectors are used as-is
// (no normalization) and the dimension is locked by the client.
class LlmEmbedder final : public Embedder {
public:
    LlmEmbedder(std::shared_ptr<LlmClient> client, std::size_t expected_dimension)
        : client_(std::move(client)), expected_dimension_(expected_dimension) {}

    Embedding embed(const std::string& payload) override {
        Embedding v = client_->embed(payload);
        if (expected_dimension_ != 0 && v.size() != expected_dimension_)
            throw Error("llm embedder: expected dimension " + std::to_string(expected_dimension_) +
                        ", got " + std::to_string(v.size()));
        return v;
    }

    std::size_t dimension() const override {
        return expected_dimension_ != 0 ? expected_dimension_ : client_->locked_dimension();
    }

private:
    std::shared_ptr<LlmClient> client_;
    std::size_t expected_dimension_;
};

// Guide backed by a judge model: asks for a score in [0,1] inside a <score>
// tag and uses the remainder of the reply as feedback. The external
// benchmark harnesses of interest supply their own guides; this one makes
// llm-mode runs self-contained.
class LlmJudgeGuide final : public Guide {
public:
    explicit LlmJudgeGuide(std::shared_ptr<LlmClient> client) : client_(std::move(client)) {}

    GuideResult score(const Candidate& candidate, const Task& task, RngEngine&) override {
        std::vector<ChatMessage> messages{
            {ChatRole::system,
             "You are a strict evaluator. Execute the parameterized program mentally on the "
             "task, then reply with the program output, a critique, and a final line "
             "<score>X</score> where X is a number in [0,1]."},
            {ChatRole::user, "Parameter:\n" + candidate.payload + "\n\nTask input:\n" + task.input +
                                 (task.side_info.empty() ? "" : "\n\nSide information:\n" +
                                                                    task.side_info)}};
        const std::string reply = client_->chat_complete(messages);
        GuideResult result;
        result.output = reply;
        result.feedback = reply;
        const std::size_t open = reply.find("<score>");
        const std::size_t close = reply.find("</score>");
        if (open == std::string::npos || close == std::string::npos || close <= open)
            throw ParseError("llm judge: reply lacks a <score> tag");
        const std::string score = reply.substr(open + 7, close - open - 7);
        result.reward = std::clamp(std::stod(score), 0.0, 1.0);
        return result;
    }

private:
    std::shared_ptr<LlmClient> client_;
};

}  // namespace polca
