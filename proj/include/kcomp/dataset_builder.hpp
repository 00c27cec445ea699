#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kcomp/backends.hpp"
#include "kcomp/corpus_store.hpp"
#include "kcomp/entity_masking.hpp"
#include "kcomp/retrieval.hpp"

namespace kcomp {

enum class Split { train, validation, test };

std::string to_string(Split split);
Split split_from_string(std::string_view name);

struct QAExample {
    std::string qid;
    std::string question;
    std::string gold_answer;
    Split split = Split::train;
    bool split_explicit = false;  // true when the source record carried a split
};

// Reads JSONL records {"qid","question","gold_answer","split"?}. A missing
// split defaults to train so callers can reassign with assign_splits.
std::vector<QAExample> load_qa_jsonl(const std::filesystem::path& path);

// Deterministic split assignment: shuffles by seed, then carves off
// floor(n*train_frac) train and floor(n*validation_frac) validation
// examples; the remainder is test.
void assign_splits(std::vector<QAExample>& examples, std::uint64_t seed,
                   double train_frac = 0.8, double validation_frac = 0.1);

enum class FilterReason { kept, no_entity, no_description, other };

std::string to_string(FilterReason reason);
FilterReason filter_reason_from_string(std::string_view name);

struct FilterDecision {
    bool keep = true;
    FilterReason reason = FilterReason::kept;
};

// Split-dependent keep/drop rule. Train and validation examples need at
// least one recognized mention and at least one resolved description;
// test examples only need a mention.
FilterDecision filter_example(const QAExample& example,
                              const std::vector<EntityMention>& mentions,
                              const std::vector<KnowledgeEntry>& entries);

// Prompt asking the synthesizer for a gold summary. Passages are rendered
// as "title\nbody" blocks separated by blank lines; entity surfaces are
// listed in brackets. The question deliberately has no parameter here:
// summaries must be derivable from passages and entities alone.
std::string render_synthesis_prompt(const std::vector<std::string>& passages,
                                    const std::vector<std::string>& entity_surfaces);

// One backend call; returns the trimmed generation (may be empty -- the
// caller decides whether an empty summary flags the record).
std::string synthesize_gold_summary(GenerationBackend& backend,
                                    const std::vector<std::string>& passages,
                                    const std::vector<std::string>& entity_surfaces,
                                    const GenerateRequest& baseline = {});

struct TrainingRecord {
    std::string qid;
    Split split = Split::train;
    std::string question;
    std::string gold_answer;
    MaskedQuestion masked;
    std::vector<std::string> passages;       // rendered "title\nbody" texts
    std::vector<KnowledgeEntry> entities;    // resolved surface -> description
    std::string gold_summary;                // empty for test records
    std::size_t gold_summary_sentences = 0;  // informational only
};

// Assembles and validates one record. Throws ValidationError when the
// passage count differs from expected_k or when a train/validation record
// is missing entities or a gold summary.
TrainingRecord build_training_record(const QAExample& example,
                                     const MaskedQuestion& masked,
                                     std::vector<std::string> passages,
                                     std::vector<KnowledgeEntry> entities,
                                     std::string gold_summary,
                                     std::size_t expected_k);

struct SplitCounts {
    std::size_t original = 0;
    std::size_t kept = 0;
    std::map<std::string, std::size_t> drop_reasons;

    std::size_t dropped() const { return original - kept; }
    // Percent of originals dropped, truncated toward zero to one decimal.
    double percent_filtered() const;
};

struct FilterStats {
    std::map<std::string, SplitCounts> per_split;  // keyed by split name

    SplitCounts totals() const;
    void write(const std::filesystem::path& path) const;
};

FilterStats collect_filter_stats(
    const std::vector<std::pair<Split, FilterDecision>>& decisions);

// Writes kept records as JSONL sorted by qid, plus filter_stats.json, into
// `out_dir`. Files are written via a temporary and renamed so a failed run
// leaves no partial dataset behind.
FilterStats emit_dataset(std::vector<TrainingRecord> records,
                         const std::vector<std::pair<Split, FilterDecision>>& decisions,
                         const std::filesystem::path& out_dir);

std::vector<TrainingRecord> load_dataset_jsonl(const std::filesystem::path& path);

struct DatasetBuildInputs {
    const CorpusStore* store = nullptr;
    const VectorIndex* index = nullptr;
    EmbeddingBackend* embedder = nullptr;
    GenerationBackend* synthesizer = nullptr;
    NerBackend* ner = nullptr;  // required only for external_ner policies
    RecognizerPolicy recognizer;
    std::size_t k = 5;
    std::string query_prefix;
    GenerateRequest decode;  // template for synthesis calls
};

struct DatasetBuildResult {
    std::vector<TrainingRecord> records;
    std::vector<std::pair<Split, FilterDecision>> decisions;
    std::vector<std::string> flagged;  // qids skipped for backend or empty-summary reasons
};

// Full dataset pass: recognize + mask, filter, retrieve, synthesize, and
// assemble records. Backend failures and empty summaries flag the example
// (reason `other`) instead of aborting the batch.
DatasetBuildResult build_dataset(const std::vector<QAExample>& examples,
                                 const DatasetBuildInputs& in);

}  // namespace kcomp
