#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kcomp/backends.hpp"
#include "kcomp/sequence_codec.hpp"

namespace kcomp {

// Deterministic in-process stand-ins for the remote services. Every stub is
// a pure function of (construction parameters, request), so test runs and
// replayed pipelines are byte-identical across processes.

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0);

// Seeded feature-hash embedder: words and character trigrams hash into a
// signed bag-of-features vector, L2-normalized. Shared vocabulary between
// two texts moves their cosine toward 1, so retrieval tests behave like a
// (crude) semantic index. The task prefix is deliberately ignored — it is a
// wire concern and would only decorrelate queries from documents here.
class HashEmbedder final : public EmbeddingBackend {
public:
    HashEmbedder(std::size_t dim, std::uint64_t seed);

    std::vector<std::vector<float>> embed(const std::vector<std::string>& texts,
                                          const std::string& prefix) override;
    std::string describe() const override;
    bool deterministic() const override { return true; }

    std::vector<float> embed_one(const std::string& text) const;
    std::size_t dim() const { return dim_; }

private:
    std::size_t dim_;
    std::uint64_t seed_;
};

struct ScriptRule {
    std::string needle;    // matches any prompt containing this substring
    std::string response;
};

// What the generator emits when no script rule matches.
enum class GeneratorFallback {
    fixed,            // always fixed_text
    echo_tail,        // last non-empty line of the prompt
    first_sentence,   // first sentence of the prompt
    compressor_demo,  // entity/description line from the first passage, then
                      // a one-sentence summary — parses as compressor output
};

// Scripted generation stub. Rules are tried in order; high-temperature
// requests (>= 0.5) get a seed-dependent sample marker appended so repeated
// sampling yields distinct but reproducible texts. Stop sequences truncate
// the final text, mirroring real decoder behaviour.
class ScriptedGenerator final : public GenerationBackend {
public:
    explicit ScriptedGenerator(std::vector<ScriptRule> rules = {},
                               GeneratorFallback fallback = GeneratorFallback::compressor_demo,
                               std::string fixed_text = "", std::uint64_t seed = 0);

    GenerateResponse generate(const GenerateRequest& request) override;
    std::string describe() const override;
    bool deterministic() const override { return true; }

private:
    std::vector<ScriptRule> rules_;
    GeneratorFallback fallback_;
    std::string fixed_text_;
    std::uint64_t seed_;
};

// Jaccard overlap between normalized word sets of query and candidate.
class LexicalReranker final : public RerankBackend {
public:
    std::vector<double> rerank(const std::string& query,
                               const std::vector<std::string>& candidates) override;
    std::string describe() const override;
    bool deterministic() const override { return true; }
};

// Returns byte spans of configured surfaces found verbatim in the text.
class EchoNer final : public NerBackend {
public:
    explicit EchoNer(std::vector<std::string> surfaces, std::string label = "ENTITY");

    std::vector<NerSpan> recognize(const std::string& text) override;
    std::string describe() const override;
    bool deterministic() const override { return true; }

private:
    std::vector<std::string> surfaces_;
    std::string label_;
};

// First-order Markov probability oracle: one distribution row per previous
// token id plus an initial row. Rows must be normalized at construction.
class TableOracle final : public TokenProbabilityOracle {
public:
    TableOracle(std::vector<double> initial_row, std::vector<std::vector<double>> rows);

    static TableOracle uniform(std::size_t vocab);
    static TableOracle random(std::size_t vocab, std::uint64_t seed);
    // Row i puts probability 1 on token (i+1) mod V; the initial row on 0.
    static TableOracle deterministic_chain(std::size_t vocab);

    std::size_t vocab_size() const override { return initial_.size(); }
    std::vector<double> distribution(const std::vector<int>& prefix) const override;

private:
    std::vector<double> initial_;
    std::vector<std::vector<double>> rows_;
};

}  // namespace kcomp
