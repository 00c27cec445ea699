#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace kcomp {

enum class DocSource { wikipedia, pubmed, statpearls, textbook, other };

std::string to_string(DocSource s);
DocSource doc_source_from_string(std::string_view s);

struct Document {
    std::string id;
    std::string title;
    std::string text;
    DocSource source = DocSource::other;
};

struct ChunkPolicy {
    std::size_t max_tokens = 512;     // whitespace tokens
    std::size_t overlap_tokens = 0;
    bool sentence_aware = true;

    void validate() const;  // throws ConfigError
};

struct Chunk {
    std::string chunk_id;
    std::string doc_id;
    std::string title;
    std::string body;
    std::size_t ordinal = 0;
    std::size_t token_estimate = 0;
};

struct KnowledgeEntry {
    std::string surface;      // entity title, case preserved
    std::string description;  // first sentence of the source document
    std::string source_doc_id;
};

// Maps normalized surface forms to entries. Built once, read-only afterwards.
class KnowledgeDictionary {
public:
    // First insert for a normalized surface wins; returns false on collision.
    bool insert(KnowledgeEntry entry);
    std::optional<KnowledgeEntry> lookup(std::string_view surface) const;
    std::size_t size() const { return entries_.size(); }

    const std::map<std::string, KnowledgeEntry>& entries() const { return entries_; }

private:
    std::map<std::string, KnowledgeEntry> entries_;  // key: normalize_surface(surface)
};

struct RejectedRecord {
    std::size_t line_number = 0;
    std::string reason;  // "parse_error" | "duplicate_id" | "empty_field"
    std::string detail;
};

struct CorpusStats {
    std::size_t documents = 0;
    std::size_t chunks = 0;
    std::vector<RejectedRecord> rejects;

    std::size_t reject_count(std::string_view reason) const;
};

struct SentenceSplitOptions {
    std::vector<std::string> abbreviations = {"e.g.", "i.e.", "Dr.", "vs.", "Fig."};
};

// Prefix of `text` up to the first sentence terminator: '.', '?' or '!'
// followed by whitespace and an uppercase letter, or sitting at end of text.
// Abbreviations in `opts` never terminate. No terminator -> whole text.
std::string extract_first_sentence(std::string_view text,
                                   const SentenceSplitOptions& opts = {});

// Number of sentences under the same boundary rules; trailing unterminated
// text counts as one. Empty or all-whitespace text -> 0.
std::size_t count_sentences(std::string_view text,
                            const SentenceSplitOptions& opts = {});

std::vector<Chunk> chunk_document(const Document& doc, const ChunkPolicy& policy);

// Holds an ingested corpus. Ingestion is single-writer; after seal() (or
// load()) all accessors are const and safe for concurrent use.
class CorpusStore {
public:
    explicit CorpusStore(ChunkPolicy policy = {});

    // Reads JSONL records {"id","title","text","source"?} from `in`.
    // Malformed or duplicate records are counted as rejects, never dropped
    // silently.
    CorpusStats ingest(std::istream& in);
    CorpusStats ingest_file(const std::filesystem::path& jsonl_path);

    void build_knowledge_dictionary(const SentenceSplitOptions& opts = {});

    // Writes documents.jsonl, chunks.jsonl, knowledge.jsonl, manifest.json.
    void seal(const std::filesystem::path& dir) const;
    static CorpusStore load(const std::filesystem::path& dir);

    const std::vector<Document>& documents() const { return documents_; }
    const std::vector<Chunk>& chunks() const { return chunks_; }
    const KnowledgeDictionary& dictionary() const { return dictionary_; }
    const ChunkPolicy& policy() const { return policy_; }

    const Document* find_document(std::string_view doc_id) const;
    const Chunk* find_chunk(std::string_view chunk_id) const;

    static constexpr int kFormatVersion = 1;

private:
    ChunkPolicy policy_;
    std::vector<Document> documents_;
    std::vector<Chunk> chunks_;
    KnowledgeDictionary dictionary_;
    std::unordered_map<std::string, std::size_t> doc_index_;
    std::unordered_map<std::string, std::size_t> chunk_index_;
};

}  // namespace kcomp
