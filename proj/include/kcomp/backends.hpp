#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace kcomp {

// Connection settings for one remote service. auth_token is only ever
// populated from the environment (KCOMP_<BACKEND>_TOKEN); it must not be
// read from config files and is never echoed into manifests.
struct BackendConfig {
    std::string base_url;
    int timeout_ms = 30000;
    int max_retries = 3;  // total attempts; 2 failures then success uses all 3
    int max_inflight = 4;
    std::string auth_token;

    void validate() const;  // throws ConfigError
};

// Reads KCOMP_<name>_URL / KCOMP_<name>_TOKEN (name upper-cased) over the
// given base config. Environment wins for the URL; the token has no other
// source at all.
BackendConfig apply_env_overrides(BackendConfig base, const std::string& backend_name);

struct GenerateRequest {
    std::string prompt;
    double temperature = 0.01;
    double top_p = 1.0;
    int max_new_tokens = 512;
    std::vector<std::string> stop;
    // Optional sampling seed, used by protocols that need several distinct
    // yet reproducible samples from one prompt. Omitted from the wire
    // request when unset; deterministic stubs honour it directly.
    std::optional<std::uint64_t> seed;
};

struct GenerateResponse {
    std::string text;
    long prompt_tokens = 0;
    long completion_tokens = 0;
};

struct NerSpan {
    std::size_t start = 0;  // byte offsets, [start, end)
    std::size_t end = 0;
    std::string label;
};

// The five seams through which every external model is reached. A backend
// reporting deterministic() == true promises byte-identical outputs for
// identical inputs, which the pipeline uses to decide whether a run as a
// whole is replayable.

class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;
    virtual std::vector<std::vector<float>> embed(const std::vector<std::string>& texts,
                                                  const std::string& prefix) = 0;
    virtual std::string describe() const = 0;
    virtual bool deterministic() const { return false; }
};

class GenerationBackend {
public:
    virtual ~GenerationBackend() = default;
    virtual GenerateResponse generate(const GenerateRequest& request) = 0;
    virtual std::string describe() const = 0;
    virtual bool deterministic() const { return false; }
};

class RerankBackend {
public:
    virtual ~RerankBackend() = default;
    virtual std::vector<double> rerank(const std::string& query,
                                       const std::vector<std::string>& candidates) = 0;
    virtual std::string describe() const = 0;
    virtual bool deterministic() const { return false; }
};

class NerBackend {
public:
    virtual ~NerBackend() = default;
    virtual std::vector<NerSpan> recognize(const std::string& text) = 0;
    virtual std::string describe() const = 0;
    virtual bool deterministic() const { return false; }
};

}  // namespace kcomp
