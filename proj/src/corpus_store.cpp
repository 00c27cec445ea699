#include "kcomp/corpus_store.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kcomp/errors.hpp"
#include "kcomp/text.hpp"

namespace kcomp {

using nlohmann::json;

std::string to_string(DocSource s) {
    switch (s) {
        case DocSource::wikipedia: return "wikipedia";
        case DocSource::pubmed: return "pubmed";
        case DocSource::statpearls: return "statpearls";
        case DocSource::textbook: return "textbook";
        case DocSource::other: return "other";
    }
    return "other";
}

DocSource doc_source_from_string(std::string_view s) {
    if (s == "wikipedia") return DocSource::wikipedia;
    if (s == "pubmed") return DocSource::pubmed;
    if (s == "statpearls") return DocSource::statpearls;
    if (s == "textbook") return DocSource::textbook;
    if (s == "other") return DocSource::other;
    throw ValidationError("unknown document source: " + std::string(s));
}

void ChunkPolicy::validate() const {
    if (max_tokens == 0) throw ConfigError("chunk policy: max_tokens must be positive");
    if (overlap_tokens >= max_tokens)
        throw ConfigError("chunk policy: overlap_tokens must be < max_tokens");
}

std::size_t CorpusStats::reject_count(std::string_view reason) const {
    return static_cast<std::size_t>(
        std::count_if(rejects.begin(), rejects.end(),
                      [&](const RejectedRecord& r) { return r.reason == reason; }));
}

namespace {

bool is_terminator_char(char c) { return c == '.' || c == '?' || c == '!'; }

bool is_upper(unsigned char c) { return std::isupper(c) != 0; }

// The word ending at and including text[punct_pos], e.g. "e.g." or "Dr.".
std::string_view word_ending_at(std::string_view text, std::size_t punct_pos) {
    std::size_t start = punct_pos;
    while (start > 0 &&
           std::isspace(static_cast<unsigned char>(text[start - 1])) == 0) {
        --start;
    }
    return text.substr(start, punct_pos - start + 1);
}

// Position one past the terminator of the sentence starting at `from`, or
// npos when the rest of the text has no terminator.
std::size_t find_sentence_end(std::string_view text, std::size_t from,
                              const SentenceSplitOptions& opts) {
    const std::size_t n = text.size();
    for (std::size_t i = from; i < n; ++i) {
        if (!is_terminator_char(text[i])) continue;
        bool at_end = true;
        std::size_t j = i + 1;
        if (j < n) {
            if (std::isspace(static_cast<unsigned char>(text[j])) == 0) continue;
            while (j < n && std::isspace(static_cast<unsigned char>(text[j])) != 0) ++j;
            at_end = (j >= n);
        }
        if (!at_end && !is_upper(static_cast<unsigned char>(text[j]))) continue;
        auto word = word_ending_at(text, i);
        bool abbreviated = std::any_of(
            opts.abbreviations.begin(), opts.abbreviations.end(),
            [&](const std::string& a) { return word == a; });
        if (abbreviated) continue;
        return i + 1;
    }
    return std::string_view::npos;
}

}  // namespace

std::string extract_first_sentence(std::string_view text,
                                   const SentenceSplitOptions& opts) {
    auto trimmed = trim_view(text);
    auto end = find_sentence_end(trimmed, 0, opts);
    if (end == std::string_view::npos) return std::string(trimmed);
    return std::string(trimmed.substr(0, end));
}

namespace {

// Byte ranges of sentences; the trailing unterminated text forms the last one.
std::vector<TokenSpan> sentence_spans(std::string_view text,
                                      const SentenceSplitOptions& opts) {
    std::vector<TokenSpan> spans;
    std::size_t pos = 0;
    const std::size_t n = text.size();
    while (pos < n) {
        while (pos < n && std::isspace(static_cast<unsigned char>(text[pos])) != 0) ++pos;
        if (pos >= n) break;
        auto end = find_sentence_end(text, pos, opts);
        if (end == std::string_view::npos) end = n;
        spans.push_back({pos, end});
        pos = end;
    }
    return spans;
}

}  // namespace

std::size_t count_sentences(std::string_view text, const SentenceSplitOptions& opts) {
    return sentence_spans(text, opts).size();
}

namespace {

Chunk make_chunk(const Document& doc, std::size_t ordinal, std::string_view body) {
    Chunk c;
    c.chunk_id = doc.id + "#" + std::to_string(ordinal);
    c.doc_id = doc.id;
    c.title = doc.title;
    c.body = std::string(trim_view(body));
    c.ordinal = ordinal;
    c.token_estimate = count_whitespace_tokens(c.body);
    return c;
}

// Token windows of size max with step max-overlap over spans[first..last).
void append_token_windows(const Document& doc, std::string_view text,
                          const std::vector<TokenSpan>& spans,
                          std::size_t first, std::size_t last,
                          const ChunkPolicy& policy, std::vector<Chunk>& out) {
    const std::size_t step = policy.max_tokens - policy.overlap_tokens;
    std::size_t i = first;
    while (i < last) {
        std::size_t j = std::min(i + policy.max_tokens, last);
        out.push_back(make_chunk(doc, out.size(),
                                 text.substr(spans[i].begin, spans[j - 1].end - spans[i].begin)));
        if (j >= last) break;
        i += step;
    }
}

}  // namespace

std::vector<Chunk> chunk_document(const Document& doc, const ChunkPolicy& policy) {
    policy.validate();
    std::vector<Chunk> chunks;
    std::string_view text = doc.text;
    auto tokens = whitespace_token_spans(text);
    if (tokens.empty()) return chunks;

    if (!policy.sentence_aware) {
        append_token_windows(doc, text, tokens, 0, tokens.size(), policy, chunks);
        return chunks;
    }

    // Pack whole sentences up to max_tokens; an oversized sentence falls back
    // to token windows.
    auto sentences = sentence_spans(text, {});
    std::size_t cur_begin = std::string_view::npos;
    std::size_t cur_end = 0;
    std::size_t cur_tokens = 0;
    auto flush = [&]() {
        if (cur_begin == std::string_view::npos) return;
        chunks.push_back(make_chunk(doc, chunks.size(),
                                    text.substr(cur_begin, cur_end - cur_begin)));
        cur_begin = std::string_view::npos;
        cur_tokens = 0;
    };
    for (const auto& s : sentences) {
        std::size_t s_tokens =
            count_whitespace_tokens(text.substr(s.begin, s.end - s.begin));
        if (s_tokens > policy.max_tokens) {
            flush();
            auto s_spans = whitespace_token_spans(text.substr(s.begin, s.end - s.begin));
            for (auto& sp : s_spans) {
                sp.begin += s.begin;
                sp.end += s.begin;
            }
            append_token_windows(doc, text, s_spans, 0, s_spans.size(), policy, chunks);
            continue;
        }
        if (cur_begin != std::string_view::npos &&
            cur_tokens + s_tokens > policy.max_tokens) {
            flush();
        }
        if (cur_begin == std::string_view::npos) cur_begin = s.begin;
        cur_end = s.end;
        cur_tokens += s_tokens;
    }
    flush();
    return chunks;
}

bool KnowledgeDictionary::insert(KnowledgeEntry entry) {
    auto key = normalize_surface(entry.surface);
    if (key.empty()) return false;
    return entries_.emplace(std::move(key), std::move(entry)).second;
}

std::optional<KnowledgeEntry> KnowledgeDictionary::lookup(std::string_view surface) const {
    auto it = entries_.find(normalize_surface(surface));
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

CorpusStore::CorpusStore(ChunkPolicy policy) : policy_(policy) {
    policy_.validate();
}

CorpusStats CorpusStore::ingest(std::istream& in) {
    CorpusStats stats;
    const std::size_t docs_before = documents_.size();
    const std::size_t chunks_before = chunks_.size();
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (trim_view(line).empty()) continue;
        json rec = json::parse(line, nullptr, /*allow_exceptions=*/false);
        if (rec.is_discarded() || !rec.is_object()) {
            stats.rejects.push_back({line_number, "parse_error", "invalid JSON object"});
            continue;
        }
        Document doc;
        try {
            doc.id = rec.at("id").get<std::string>();
            doc.title = trim(rec.at("title").get<std::string>());
            doc.text = trim(rec.at("text").get<std::string>());
            if (rec.contains("source")) {
                doc.source = doc_source_from_string(rec.at("source").get<std::string>());
            }
        } catch (const std::exception& e) {
            stats.rejects.push_back({line_number, "parse_error", e.what()});
            continue;
        }
        if (doc.id.empty() || doc.title.empty() || doc.text.empty()) {
            stats.rejects.push_back({line_number, "empty_field", "empty id/title/text"});
            continue;
        }
        if (doc_index_.count(doc.id) != 0) {
            stats.rejects.push_back({line_number, "duplicate_id", doc.id});
            continue;
        }
        auto doc_chunks = chunk_document(doc, policy_);
        doc_index_.emplace(doc.id, documents_.size());
        documents_.push_back(std::move(doc));
        for (auto& c : doc_chunks) {
            chunk_index_.emplace(c.chunk_id, chunks_.size());
            chunks_.push_back(std::move(c));
        }
    }
    stats.documents = documents_.size() - docs_before;
    stats.chunks = chunks_.size() - chunks_before;
    return stats;
}

CorpusStats CorpusStore::ingest_file(const std::filesystem::path& jsonl_path) {
    std::ifstream in(jsonl_path);
    if (!in) throw IoError("cannot open corpus file: " + jsonl_path.string());
    return ingest(in);
}

void CorpusStore::build_knowledge_dictionary(const SentenceSplitOptions& opts) {
    dictionary_ = {};
    for (const auto& doc : documents_) {
        KnowledgeEntry entry;
        entry.surface = doc.title;
        entry.description = extract_first_sentence(doc.text, opts);
        entry.source_doc_id = doc.id;
        dictionary_.insert(std::move(entry));  // first-ingested wins on collision
    }
}

const Document* CorpusStore::find_document(std::string_view doc_id) const {
    auto it = doc_index_.find(std::string(doc_id));
    return it == doc_index_.end() ? nullptr : &documents_[it->second];
}

const Chunk* CorpusStore::find_chunk(std::string_view chunk_id) const {
    auto it = chunk_index_.find(std::string(chunk_id));
    return it == chunk_index_.end() ? nullptr : &chunks_[it->second];
}

namespace {

void write_lines(const std::filesystem::path& path, const std::vector<json>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& rec : records) out << rec.dump() << '\n';
}

std::vector<json> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    std::vector<json> records;
    std::string line;
    while (std::getline(in, line)) {
        if (trim_view(line).empty()) continue;
        records.push_back(json::parse(line));
    }
    return records;
}

}  // namespace

void CorpusStore::seal(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);

    std::vector<json> docs;
    docs.reserve(documents_.size());
    for (const auto& d : documents_) {
        docs.push_back({{"id", d.id},
                        {"title", d.title},
                        {"text", d.text},
                        {"source", to_string(d.source)}});
    }
    write_lines(dir / "documents.jsonl", docs);

    std::vector<json> chs;
    chs.reserve(chunks_.size());
    for (const auto& c : chunks_) {
        chs.push_back({{"chunk_id", c.chunk_id},
                       {"doc_id", c.doc_id},
                       {"title", c.title},
                       {"body", c.body},
                       {"ordinal", c.ordinal},
                       {"token_estimate", c.token_estimate}});
    }
    write_lines(dir / "chunks.jsonl", chs);

    std::vector<json> knowledge;
    knowledge.reserve(dictionary_.size());
    for (const auto& [key, entry] : dictionary_.entries()) {
        knowledge.push_back({{"key", key},
                             {"surface", entry.surface},
                             {"description", entry.description},
                             {"source_doc_id", entry.source_doc_id}});
    }
    write_lines(dir / "knowledge.jsonl", knowledge);

    json manifest = {
        {"format_version", kFormatVersion},
        {"documents", documents_.size()},
        {"chunks", chunks_.size()},
        {"knowledge_entries", dictionary_.size()},
        {"chunk_policy",
         {{"max_tokens", policy_.max_tokens},
          {"overlap_tokens", policy_.overlap_tokens},
          {"sentence_aware", policy_.sentence_aware}}},
    };
    std::ofstream mout(dir / "manifest.json", std::ios::binary);
    if (!mout) throw IoError("cannot write manifest.json");
    mout << manifest.dump(2) << '\n';
}

CorpusStore CorpusStore::load(const std::filesystem::path& dir) {
    std::ifstream min(dir / "manifest.json");
    if (!min) throw IoError("no sealed corpus at " + dir.string() +
                            " (missing manifest.json); run `ingest` first");
    json manifest = json::parse(min);
    if (manifest.at("format_version").get<int>() != kFormatVersion) {
        throw ValidationError("unsupported corpus format version");
    }
    ChunkPolicy policy;
    policy.max_tokens = manifest.at("chunk_policy").at("max_tokens").get<std::size_t>();
    policy.overlap_tokens =
        manifest.at("chunk_policy").at("overlap_tokens").get<std::size_t>();
    policy.sentence_aware =
        manifest.at("chunk_policy").at("sentence_aware").get<bool>();

    CorpusStore store(policy);
    for (const auto& rec : read_lines(dir / "documents.jsonl")) {
        Document d;
        d.id = rec.at("id").get<std::string>();
        d.title = rec.at("title").get<std::string>();
        d.text = rec.at("text").get<std::string>();
        d.source = doc_source_from_string(rec.at("source").get<std::string>());
        store.doc_index_.emplace(d.id, store.documents_.size());
        store.documents_.push_back(std::move(d));
    }
    for (const auto& rec : read_lines(dir / "chunks.jsonl")) {
        Chunk c;
        c.chunk_id = rec.at("chunk_id").get<std::string>();
        c.doc_id = rec.at("doc_id").get<std::string>();
        c.title = rec.at("title").get<std::string>();
        c.body = rec.at("body").get<std::string>();
        c.ordinal = rec.at("ordinal").get<std::size_t>();
        c.token_estimate = rec.at("token_estimate").get<std::size_t>();
        if (store.doc_index_.count(c.doc_id) == 0) {
            throw ValidationError("chunk " + c.chunk_id + " references unknown doc " +
                                  c.doc_id);
        }
        store.chunk_index_.emplace(c.chunk_id, store.chunks_.size());
        store.chunks_.push_back(std::move(c));
    }
    for (const auto& rec : read_lines(dir / "knowledge.jsonl")) {
        KnowledgeEntry e;
        e.surface = rec.at("surface").get<std::string>();
        e.description = rec.at("description").get<std::string>();
        e.source_doc_id = rec.at("source_doc_id").get<std::string>();
        store.dictionary_.insert(std::move(e));
    }
    if (manifest.at("documents").get<std::size_t>() != store.documents_.size() ||
        manifest.at("chunks").get<std::size_t>() != store.chunks_.size()) {
        throw ValidationError("manifest record counts do not match store contents");
    }
    return store;
}

}  // namespace kcomp
