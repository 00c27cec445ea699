#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "kcomp/backends.hpp"
#include "kcomp/corpus_store.hpp"
#include "kcomp/entity_masking.hpp"
#include "kcomp/retrieval.hpp"
#include "kcomp/sequence_codec.hpp"

namespace kcomp {

// Decoding defaults follow the trained-model setup: near-greedy sampling.
struct DecodeParams {
    double temperature = 0.01;
    double top_p = 1.0;
    long max_new_tokens = 512;
    std::vector<std::string> stop_sequences;
};

GenerateRequest to_request(const DecodeParams& params, std::string prompt,
                           std::optional<std::uint64_t> seed = std::nullopt);

enum class PipelineMode { kcomp, top1, topk, summary_only };

std::string to_string(PipelineMode mode);
PipelineMode mode_from_string(std::string_view name);

struct CompressedContext {
    std::vector<EntityDescription> entries;
    std::string summary;
    std::string raw;  // verbatim backend output, kept for audit
};

// Grammar: zero or more leading lines "surface: description<eod>", then
// everything after the final <eod> (trimmed) is the summary. No <eod>
// anywhere -> the whole output is the summary. Violations throw
// ProtocolError with the raw text attached.
CompressedContext parse_compressor_output(const std::string& raw);

// Single generation call over the masked question + passages; <eod> must
// not appear in stop_sequences (descriptions continue past it).
CompressedContext compress(GenerationBackend& backend, const std::string& masked_question,
                           const std::vector<std::string>& passages,
                           const DecodeParams& params,
                           std::optional<std::uint64_t> seed = std::nullopt);

enum class ReaderLayout { entity_first, passage_first };

std::string to_string(ReaderLayout layout);
ReaderLayout reader_layout_from_string(std::string_view name);

struct ReaderSection {
    std::string header;  // "### Entity", "### Passage", "### Summary", "### Questions"
    std::string body;
};

struct ReaderPrompt {
    std::vector<ReaderSection> sections;  // question section always last
    ReaderLayout layout = ReaderLayout::entity_first;
    bool zero_shot = true;  // no exemplar mechanism exists anywhere downstream

    std::string text() const;
};

struct ReaderPromptOptions {
    ReaderLayout layout = ReaderLayout::entity_first;
    // The compressed summary is presented as a passage by default; switch
    // to "### Summary" when the reader should see it labeled explicitly.
    std::string summary_header = "### Passage";
};

// Prompt over a compressed context. The question here is the ORIGINAL
// question -- masking exists only on the compressor side.
ReaderPrompt render_reader_prompt(const CompressedContext& ctx, const std::string& question,
                                  const ReaderPromptOptions& options = {});

// Baseline prompt: raw passages, no entity section.
ReaderPrompt render_passages_prompt(const std::vector<std::string>& passages,
                                    const std::string& question);

std::string answer(GenerationBackend& reader, const ReaderPrompt& prompt,
                   const DecodeParams& params,
                   std::optional<std::uint64_t> seed = std::nullopt);

// Stage timing seam. charge() lets a deterministic clock advance by an
// amount derived from work done, so stubbed runs have reproducible timings.
class StageClock {
public:
    virtual ~StageClock() = default;
    virtual double now_ms() = 0;
    virtual void charge(long tokens) = 0;
};

class WallClock final : public StageClock {
public:
    WallClock() : origin_(std::chrono::steady_clock::now()) {}
    double now_ms() override;
    void charge(long) override {}

private:
    std::chrono::steady_clock::time_point origin_;
};

class DeterministicClock final : public StageClock {
public:
    explicit DeterministicClock(double ms_per_token = 0.25) : ms_per_token_(ms_per_token) {}
    double now_ms() override { return now_; }
    void charge(long tokens) override {
        now_ += 1.0 + ms_per_token_ * static_cast<double>(tokens);
    }

private:
    double now_ = 0.0;
    double ms_per_token_;
};

struct StageRecord {
    std::string name;  // retrieve | mask | compress | read
    double millis = 0.0;
    long prompt_tokens = 0;      // counted from the stored prompt text
    long completion_tokens = 0;  // counted from the stored output text
};

struct PipelineTrace {
    std::string qid;
    PipelineMode mode = PipelineMode::kcomp;
    std::string question;
    std::string masked_question;
    std::vector<RetrievalResult> retrieved;
    std::vector<std::string> passages;
    std::string compressor_input;
    std::string compressor_raw;
    std::vector<EntityDescription> entries;
    std::string summary;
    std::string reader_prompt;
    std::string answer_text;
    std::vector<StageRecord> stages;
    std::string tokenizer_name;
    std::string error;  // empty on success

    bool ok() const { return error.empty(); }
    double total_millis() const;
};

struct PipelineConfig {
    PipelineMode mode = PipelineMode::kcomp;
    std::size_t k = 5;
    DecodeParams compressor_decode;
    DecodeParams reader_decode;
    ReaderPromptOptions reader_options;
    RecognizerPolicy recognizer;
    std::string query_prefix;
    std::optional<std::uint64_t> seed;
};

struct PipelineEnv {
    const CorpusStore* store = nullptr;
    const VectorIndex* index = nullptr;
    EmbeddingBackend* embedder = nullptr;
    GenerationBackend* compressor = nullptr;  // unused by top1/topk
    GenerationBackend* reader = nullptr;
    NerBackend* ner = nullptr;
    StageClock* clock = nullptr;  // defaults to a WallClock per call
};

bool all_backends_deterministic(const PipelineEnv& env, PipelineMode mode);

// Full per-question pass. Stage failures do not throw: the trace carries
// every artifact produced before the failure plus the error cause.
PipelineTrace run_pipeline(const std::string& qid, const std::string& question,
                           const PipelineEnv& env, const PipelineConfig& config);

nlohmann::json trace_to_json(const PipelineTrace& trace);
PipelineTrace trace_from_json(const nlohmann::json& doc);

// <run_dir>/traces/<sanitized qid>.json
std::filesystem::path write_trace(const PipelineTrace& trace,
                                  const std::filesystem::path& run_dir);
PipelineTrace load_trace(const std::filesystem::path& path);

struct RunManifest {
    std::string mode;
    std::size_t k = 5;
    std::uint64_t seed = 0;
    std::string tokenizer_name;
    bool deterministic_clock = false;
    std::vector<std::string> qids;                  // sorted
    std::map<std::string, std::string> backends;    // role -> describe()
    std::string config_text;                        // secrets already excluded
};

void write_run_manifest(const RunManifest& manifest, const std::filesystem::path& run_dir);
RunManifest load_run_manifest(const std::filesystem::path& run_dir);

std::string sanitize_for_filename(std::string_view qid);

}  // namespace kcomp
