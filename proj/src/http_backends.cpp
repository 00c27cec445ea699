#include "kcomp/http_backends.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "kcomp/errors.hpp"

namespace kcomp {

using nlohmann::json;

void BackendConfig::validate() const {
    if (timeout_ms <= 0) throw ConfigError("backend timeout_ms must be positive");
    if (max_retries < 0) throw ConfigError("backend max_retries must be >= 0");
    if (max_inflight < 1) throw ConfigError("backend max_inflight must be >= 1");
}

BackendConfig apply_env_overrides(BackendConfig base, const std::string& backend_name) {
    std::string upper;
    for (char c : backend_name) upper += static_cast<char>(std::toupper(c));
    if (const char* url = std::getenv(("KCOMP_" + upper + "_URL").c_str())) {
        base.base_url = url;
    }
    if (const char* token = std::getenv(("KCOMP_" + upper + "_TOKEN").c_str())) {
        base.auth_token = token;
    }
    return base;
}

namespace {

struct SemaphoreGuard {
    explicit SemaphoreGuard(Semaphore& s) : sem(s) { sem.acquire(); }
    ~SemaphoreGuard() { sem.release(); }
    Semaphore& sem;
};

constexpr int kBackoffBaseMs = 100;
constexpr int kBackoffCapMs = 5000;

int backoff_delay_ms(int completed_attempts) {
    double delay = kBackoffBaseMs * std::pow(2.0, completed_attempts - 1);
    return static_cast<int>(std::min<double>(delay, kBackoffCapMs));
}

}  // namespace

HttpCaller::HttpCaller(BackendConfig config, std::shared_ptr<Transport> transport,
                       Sleeper sleeper)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      sleeper_(std::move(sleeper)),
      inflight_(config_.max_inflight) {
    config_.validate();
    if (config_.base_url.empty()) {
        throw ConfigError("backend base_url is empty; set it in the config file or "
                          "via the KCOMP_<BACKEND>_URL environment variable");
    }
    if (!sleeper_) {
        sleeper_ = [](int ms) {
            std::this_thread::sleep_for(std::chrono::milliseconds(ms));
        };
    }
}

json HttpCaller::call(const std::string& path, const json& request) {
    SemaphoreGuard guard(inflight_);
    const int attempts_allowed = std::max(1, config_.max_retries);
    std::string last_failure;
    for (int attempt = 1; attempt <= attempts_allowed; ++attempt) {
        HttpResponse response = transport_->post_json(
            config_.base_url, path, request.dump(), config_.timeout_ms,
            config_.auth_token);
        if (response.status >= 200 && response.status < 300) {
            json parsed = json::parse(response.body, nullptr, /*allow_exceptions=*/false);
            if (parsed.is_discarded()) {
                throw ProtocolError("backend " + config_.base_url + path +
                                    " returned unparseable JSON");
            }
            return parsed;
        }
        if (response.status >= 400 && response.status < 500) {
            // Client errors are never retried: the request itself is wrong.
            throw ProtocolError("backend " + config_.base_url + path + " returned " +
                                std::to_string(response.status) + ": " + response.body);
        }
        last_failure = response.status == 0
                           ? "transport failure: " + response.body
                           : "server status " + std::to_string(response.status);
        if (attempt < attempts_allowed) sleeper_(backoff_delay_ms(attempt));
    }
    throw TransportError("backend " + config_.base_url + path + " failed after " +
                             std::to_string(attempts_allowed) +
                             " attempt(s); last error: " + last_failure,
                         attempts_allowed);
}

std::vector<std::vector<float>> HttpEmbeddingBackend::embed(
    const std::vector<std::string>& texts, const std::string& prefix) {
    json request = {{"texts", texts}, {"prefix", prefix}};
    json response = caller_.call("/embed", request);
    if (!response.contains("vectors") || !response.contains("dim")) {
        throw ProtocolError("embed response missing 'vectors' or 'dim'");
    }
    const std::size_t dim = response.at("dim").get<std::size_t>();
    auto vectors = response.at("vectors").get<std::vector<std::vector<float>>>();
    if (vectors.size() != texts.size()) {
        throw ProtocolError("embed response count mismatch: sent " +
                            std::to_string(texts.size()) + " texts, got " +
                            std::to_string(vectors.size()) + " vectors");
    }
    for (const auto& v : vectors) {
        if (v.size() != dim) throw ProtocolError("embed vector length != dim");
    }
    return vectors;
}

std::string HttpEmbeddingBackend::describe() const {
    return "http-embed(" + caller_.config().base_url + ")";
}

GenerateResponse HttpGenerationBackend::generate(const GenerateRequest& request) {
    json wire = {{"prompt", request.prompt},
                 {"temperature", request.temperature},
                 {"top_p", request.top_p},
                 {"max_new_tokens", request.max_new_tokens},
                 {"stop", request.stop}};
    if (request.seed) wire["seed"] = *request.seed;
    json response = caller_.call("/generate", wire);
    if (!response.contains("text")) {
        throw ProtocolError("generate response missing 'text'");
    }
    GenerateResponse out;
    out.text = response.at("text").get<std::string>();
    out.prompt_tokens = response.value("prompt_tokens", 0L);
    out.completion_tokens = response.value("completion_tokens", 0L);
    return out;
}

std::string HttpGenerationBackend::describe() const {
    return "http-generate(" + caller_.config().base_url + ")";
}

std::vector<double> HttpRerankBackend::rerank(const std::string& query,
                                              const std::vector<std::string>& candidates) {
    json request = {{"query", query}, {"candidates", candidates}};
    json response = caller_.call("/rerank", request);
    if (!response.contains("scores")) {
        throw ProtocolError("rerank response missing 'scores'");
    }
    auto scores = response.at("scores").get<std::vector<double>>();
    if (scores.size() != candidates.size()) {
        throw ProtocolError("rerank score count mismatch");
    }
    return scores;
}

std::string HttpRerankBackend::describe() const {
    return "http-rerank(" + caller_.config().base_url + ")";
}

std::vector<NerSpan> HttpNerBackend::recognize(const std::string& text) {
    json response = caller_.call("/ner", json{{"text", text}});
    if (!response.contains("spans")) throw ProtocolError("ner response missing 'spans'");
    std::vector<NerSpan> spans;
    for (const auto& s : response.at("spans")) {
        NerSpan span;
        span.start = s.at("start").get<std::size_t>();
        span.end = s.at("end").get<std::size_t>();
        span.label = s.value("label", "");
        if (span.start >= span.end || span.end > text.size()) {
            throw ProtocolError("ner span [" + std::to_string(span.start) + "," +
                                std::to_string(span.end) + ") outside text");
        }
        spans.push_back(std::move(span));
    }
    return spans;
}

std::string HttpNerBackend::describe() const {
    return "http-ner(" + caller_.config().base_url + ")";
}

}  // namespace kcomp
