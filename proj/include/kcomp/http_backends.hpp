#pragma once

#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <string>

#include <nlohmann/json.hpp>

#include "kcomp/backends.hpp"
#include "kcomp/transport.hpp"

namespace kcomp {

// Counting semaphore bounding concurrent requests per backend.
class Semaphore {
public:
    explicit Semaphore(int count) : count_(count) {}

    void acquire() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return count_ > 0; });
        --count_;
    }
    void release() {
        {
            std::lock_guard lock(mu_);
            ++count_;
        }
        cv_.notify_one();
    }

private:
    std::mutex mu_;
    std::condition_variable cv_;
    int count_;
};

// Shared request machinery: JSON POST with bounded concurrency, exponential
// backoff on transport/5xx failures, and hard-stop on 4xx. The sleeper is
// injectable so retry timing is testable without real waiting.
class HttpCaller {
public:
    using Sleeper = std::function<void(int /*milliseconds*/)>;

    HttpCaller(BackendConfig config, std::shared_ptr<Transport> transport,
               Sleeper sleeper = nullptr);

    nlohmann::json call(const std::string& path, const nlohmann::json& request);

    const BackendConfig& config() const { return config_; }

private:
    BackendConfig config_;
    std::shared_ptr<Transport> transport_;
    Sleeper sleeper_;
    Semaphore inflight_;
};

class HttpEmbeddingBackend final : public EmbeddingBackend {
public:
    HttpEmbeddingBackend(BackendConfig config, std::shared_ptr<Transport> transport,
                         HttpCaller::Sleeper sleeper = nullptr)
        : caller_(std::move(config), std::move(transport), std::move(sleeper)) {}

    std::vector<std::vector<float>> embed(const std::vector<std::string>& texts,
                                          const std::string& prefix) override;
    std::string describe() const override;

private:
    HttpCaller caller_;
};

class HttpGenerationBackend final : public GenerationBackend {
public:
    HttpGenerationBackend(BackendConfig config, std::shared_ptr<Transport> transport,
                          HttpCaller::Sleeper sleeper = nullptr)
        : caller_(std::move(config), std::move(transport), std::move(sleeper)) {}

    GenerateResponse generate(const GenerateRequest& request) override;
    std::string describe() const override;

private:
    HttpCaller caller_;
};

class HttpRerankBackend final : public RerankBackend {
public:
    HttpRerankBackend(BackendConfig config, std::shared_ptr<Transport> transport,
                      HttpCaller::Sleeper sleeper = nullptr)
        : caller_(std::move(config), std::move(transport), std::move(sleeper)) {}

    std::vector<double> rerank(const std::string& query,
                               const std::vector<std::string>& candidates) override;
    std::string describe() const override;

private:
    HttpCaller caller_;
};

class HttpNerBackend final : public NerBackend {
public:
    HttpNerBackend(BackendConfig config, std::shared_ptr<Transport> transport,
                   HttpCaller::Sleeper sleeper = nullptr)
        : caller_(std::move(config), std::move(transport), std::move(sleeper)) {}

    std::vector<NerSpan> recognize(const std::string& text) override;
    std::string describe() const override;

private:
    HttpCaller caller_;
};

}  // namespace kcomp
