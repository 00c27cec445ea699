#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kcomp/backends.hpp"
#include "kcomp/dataset_builder.hpp"
#include "kcomp/inference_pipeline.hpp"

namespace kcomp {

enum class CandidateOrigin { generated, retrieved };

std::string to_string(CandidateOrigin origin);

struct RerankCandidate {
    std::size_t id = 0;  // stable id; also the tie-break among equal scores
    CandidateOrigin origin = CandidateOrigin::generated;
    std::string text;
    double score = 0.0;
};

struct RecallQuestionResult {
    std::string qid;
    std::vector<std::size_t> ranking;  // candidate ids, best score first
    std::size_t duplicate_texts = 0;   // generated candidates byte-equal to retrieved ones
};

struct RecallReport {
    std::vector<int> ks;
    std::map<int, double> recall_generated;  // fraction of evaluated questions
    std::map<int, double> recall_retrieved;
    std::size_t evaluated = 0;
    std::size_t flagged = 0;  // excluded: too few distinct generations
    std::vector<std::string> flagged_qids;
    std::vector<RecallQuestionResult> per_question;

    nlohmann::json to_json() const;
    void write(const std::filesystem::path& path) const;
};

struct RerankInputs {
    const CorpusStore* store = nullptr;
    const VectorIndex* index = nullptr;
    EmbeddingBackend* embedder = nullptr;
    GenerationBackend* compressor = nullptr;
    RerankBackend* reranker = nullptr;
    RecognizerPolicy recognizer;
    NerBackend* ner = nullptr;
    DecodeParams decode;  // temperature is forced to 1.0 for sampling
    std::vector<int> ks = {1, 5, 10, 20};
    std::size_t samples = 10;
    std::size_t retrieved_k = 10;
    std::size_t max_attempts = 30;  // seed budget for collecting distinct samples
    std::string query_prefix;
};

// Preference protocol: per question, `samples` distinct compressor
// generations at temperature 1.0 plus the top retrieved chunks are scored
// together by the reranker; recall@K asks whether any generated candidate
// lands in the top K. Questions without enough distinct samples are
// flagged and excluded from the aggregate.
RecallReport rerank_recall(const std::vector<QAExample>& questions, const RerankInputs& in);

struct ModeSpeed {
    std::string mode;
    std::size_t questions = 0;
    std::size_t failed = 0;  // traces with a recorded error, excluded from means
    double mean_prompt_tokens = 0.0;  // reader prompt, recomputed from stored text
    double compression_ms = 0.0;
    double inference_ms = 0.0;
    double other_ms = 0.0;  // retrieval + masking
    double total_ms = 0.0;  // compression + inference
};

struct SpeedReport {
    std::string tokenizer_name;
    std::vector<ModeSpeed> modes;  // sorted by mode name

    nlohmann::json to_json() const;
    void write(const std::filesystem::path& path) const;
};

// Recomputes token counts from the texts stored in each trace and checks
// them against the recorded counts; a mismatch (or a tokenizer different
// from `tokenizer_name`) is an error, not a warning.
SpeedReport token_accounting(const std::vector<std::filesystem::path>& run_dirs,
                             const std::string& tokenizer_name);

struct JudgeCandidate {
    std::string system_id;  // e.g. "kcomp", "baseline"
    std::string summary;
};

struct JudgeVerdict {
    std::string qid;
    std::uint64_t seed = 0;
    std::vector<std::size_t> permutation;  // presented[i] = candidates[permutation[i]]
    std::string choice_label;              // "Summary 2", "Tie", or "" if unparseable
    std::string chosen_system;             // mapped back; empty unless a summary won
    bool tie = false;
    bool parseable = true;
    std::string raw_response;

    nlohmann::json to_json() const;
};

// Exact judge prompt with the label list adapted to the candidate count.
std::string render_judge_prompt(const std::vector<std::string>& presented_summaries,
                                const std::string& question);

// Shuffles candidate order by seed, asks the judge, re-asks once on an
// unparseable reply, and maps the chosen label back to the system that
// actually produced it.
JudgeVerdict pairwise_judge(GenerationBackend& judge, const std::string& qid,
                            const std::string& question,
                            const std::vector<JudgeCandidate>& candidates,
                            std::uint64_t seed, const DecodeParams& decode = {});

void write_judge_verdicts(const std::vector<JudgeVerdict>& verdicts,
                          const std::filesystem::path& path);

}  // namespace kcomp
