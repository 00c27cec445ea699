#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <string_view>

#include "kcomp/backends.hpp"
#include "kcomp/corpus_store.hpp"
#include "kcomp/entity_masking.hpp"
#include "kcomp/inference_pipeline.hpp"
#include "kcomp/retrieval.hpp"
#include "kcomp/transport.hpp"

namespace kcomp {

// One backend role as configured. HTTP backends read their base URL and
// token from KCOMP_<ROLE>_URL / KCOMP_<ROLE>_TOKEN when the config leaves
// them unset; stub backends run fully offline.
struct BackendSpec {
    std::string kind = "default";  // http | hash_embedder | scripted_generator |
                                   // lexical_reranker | echo_ner | none
    BackendConfig http;
    std::uint64_t seed = 0;
    std::size_t dim = 64;                    // hash_embedder
    std::string fallback;  // scripted_generator; empty -> role-specific default
    std::string fixed_text;
    std::string script_file;  // optional JSON [{"needle","response"}] rules
};

struct RunConfig {
    // Filesystem layout.
    std::string corpus_file;
    std::string store_dir = "out/store";
    std::string index_dir = "out/index";
    std::string qa_file;
    std::string dataset_dir = "out/dataset";
    std::string run_dir = "out/run";

    ChunkPolicy chunk;
    IndexKind index_kind = IndexKind::exact_flat;
    HnswParams hnsw;

    PipelineMode mode = PipelineMode::kcomp;
    std::size_t k = 5;
    std::uint64_t seed = 0;
    std::string query_prefix;
    DecodeParams compressor_decode;
    DecodeParams reader_decode;
    ReaderPromptOptions reader_options;
    RecognizerPolicy recognizer;

    double split_train = 0.8;
    double split_validation = 0.1;

    std::map<std::string, BackendSpec> backends;  // embedder, compressor, reader,
                                                  // synthesizer, reranker, judge, ner
    std::string raw_text;  // the config file verbatim; what the manifest records

    void validate() const;  // throws ConfigError
};

// INI-style: [section] headers, key = value lines, full-line # or ;
// comments. ${VAR} in values is replaced from the environment (missing
// variable -> ConfigError). Unknown sections or keys are errors.
RunConfig parse_config_text(const std::string& text, const std::string& source_name);
RunConfig load_config_file(const std::filesystem::path& path);

// The BackendSpec for a role, falling back to the role's stub default.
BackendSpec backend_spec_for(const RunConfig& config, const std::string& role);

// True when every backend the given mode touches is an offline stub.
bool all_stub_backends(const RunConfig& config);

struct BackendSet {
    std::unique_ptr<EmbeddingBackend> embedder;
    std::unique_ptr<GenerationBackend> compressor;
    std::unique_ptr<GenerationBackend> reader;
    std::unique_ptr<GenerationBackend> synthesizer;
    std::unique_ptr<GenerationBackend> judge;
    std::unique_ptr<RerankBackend> reranker;
    std::unique_ptr<NerBackend> ner;  // null unless configured
};

// Instantiates every role. `dictionary` feeds the echo_ner stub its
// surface list; `transport` overrides the HTTP transport (tests inject a
// fake one). Secrets are read from the environment at construction time
// and never land in any serialized form.
BackendSet make_backends(const RunConfig& config, const KnowledgeDictionary* dictionary = nullptr,
                         std::shared_ptr<Transport> transport = nullptr);

// Trainer defaults exported next to the training file for downstream
// fine-tuning jobs; compression training itself is out of scope here.
std::string training_config_template();

}  // namespace kcomp
