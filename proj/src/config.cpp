#include "kcomp/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "io_internal.hpp"
#include "kcomp/errors.hpp"
#include "kcomp/http_backends.hpp"
#include "kcomp/stubs.hpp"
#include "kcomp/text.hpp"

namespace kcomp {

using nlohmann::json;

namespace {

const std::set<std::string> kRoles = {"embedder", "compressor", "reader", "synthesizer",
                                      "reranker", "judge", "ner"};

std::string interpolate_env(const std::string& value, const std::string& where) {
    std::string out;
    std::size_t pos = 0;
    while (pos < value.size()) {
        auto open = value.find("${", pos);
        if (open == std::string::npos) {
            out += value.substr(pos);
            break;
        }
        out += value.substr(pos, open - pos);
        auto close = value.find('}', open + 2);
        if (close == std::string::npos) {
            throw ConfigError(where + ": unterminated ${...} reference");
        }
        const std::string name = value.substr(open + 2, close - open - 2);
        if (name.empty()) throw ConfigError(where + ": empty ${} reference");
        const char* env = std::getenv(name.c_str());
        if (env == nullptr) {
            throw ConfigError(where + ": environment variable " + name + " is not set");
        }
        out += env;
        pos = close + 1;
    }
    return out;
}

bool parse_bool(const std::string& value, const std::string& where) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ConfigError(where + ": expected a boolean, got \"" + value + "\"");
}

std::uint64_t parse_u64(const std::string& value, const std::string& where) {
    try {
        std::size_t consumed = 0;
        auto parsed = std::stoull(value, &consumed);
        if (consumed != value.size()) throw std::invalid_argument(value);
        return parsed;
    } catch (const std::exception&) {
        throw ConfigError(where + ": expected an unsigned integer, got \"" + value + "\"");
    }
}

double parse_double(const std::string& value, const std::string& where) {
    try {
        std::size_t consumed = 0;
        double parsed = std::stod(value, &consumed);
        if (consumed != value.size()) throw std::invalid_argument(value);
        return parsed;
    } catch (const std::exception&) {
        throw ConfigError(where + ": expected a number, got \"" + value + "\"");
    }
}

std::vector<std::string> split_csv(const std::string& value) {
    std::vector<std::string> items;
    std::stringstream stream(value);
    std::string item;
    while (std::getline(stream, item, ',')) {
        auto trimmed = trim(item);
        if (!trimmed.empty()) items.push_back(std::move(trimmed));
    }
    return items;
}

void apply_decode_key(DecodeParams& params, const std::string& key, const std::string& value,
                      const std::string& where) {
    if (key == "temperature") {
        params.temperature = parse_double(value, where);
    } else if (key == "top_p") {
        params.top_p = parse_double(value, where);
    } else if (key == "max_new_tokens") {
        params.max_new_tokens = static_cast<long>(parse_u64(value, where));
    } else if (key == "stop") {
        params.stop_sequences.push_back(value);  // repeatable
    } else {
        throw ConfigError(where + ": unknown decode key \"" + key + "\"");
    }
}

void apply_backend_key(BackendSpec& spec, const std::string& key, const std::string& value,
                       const std::string& where) {
    if (key == "kind") {
        spec.kind = value;
    } else if (key == "url") {
        spec.http.base_url = value;
    } else if (key == "timeout_ms") {
        spec.http.timeout_ms = static_cast<int>(parse_u64(value, where));
    } else if (key == "max_retries") {
        spec.http.max_retries = static_cast<int>(parse_u64(value, where));
    } else if (key == "max_inflight") {
        spec.http.max_inflight = static_cast<int>(parse_u64(value, where));
    } else if (key == "seed") {
        spec.seed = parse_u64(value, where);
    } else if (key == "dim") {
        spec.dim = static_cast<std::size_t>(parse_u64(value, where));
    } else if (key == "fallback") {
        spec.fallback = value;
    } else if (key == "fixed_text") {
        spec.fixed_text = value;
    } else if (key == "script") {
        spec.script_file = value;
    } else if (key == "token" || key == "auth_token") {
        throw ConfigError(where + ": tokens never belong in config files; set KCOMP_<ROLE>_TOKEN");
    } else {
        throw ConfigError(where + ": unknown backend key \"" + key + "\"");
    }
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& source_name) {
    RunConfig config;
    config.raw_text = text;

    std::istringstream stream(text);
    std::string line;
    std::string section;
    std::size_t line_no = 0;
    while (std::getline(stream, line)) {
        ++line_no;
        const std::string where = source_name + ":" + std::to_string(line_no);
        auto stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#' || stripped[0] == ';') continue;

        if (stripped.front() == '[') {
            if (stripped.back() != ']' || stripped.size() < 3) {
                throw ConfigError(where + ": malformed section header");
            }
            section = stripped.substr(1, stripped.size() - 2);
            continue;
        }

        auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(where + ": expected key = value");
        }
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = interpolate_env(trim(stripped.substr(eq + 1)), where);
        if (key.empty()) throw ConfigError(where + ": empty key");

        if (section == "paths") {
            if (key == "corpus") {
                config.corpus_file = value;
            } else if (key == "store") {
                config.store_dir = value;
            } else if (key == "index") {
                config.index_dir = value;
            } else if (key == "qa") {
                config.qa_file = value;
            } else if (key == "dataset") {
                config.dataset_dir = value;
            } else if (key == "run") {
                config.run_dir = value;
            } else {
                throw ConfigError(where + ": unknown paths key \"" + key + "\"");
            }
        } else if (section == "corpus") {
            if (key == "max_tokens") {
                config.chunk.max_tokens = static_cast<std::size_t>(parse_u64(value, where));
            } else if (key == "overlap_tokens") {
                config.chunk.overlap_tokens = static_cast<std::size_t>(parse_u64(value, where));
            } else if (key == "sentence_aware") {
                config.chunk.sentence_aware = parse_bool(value, where);
            } else {
                throw ConfigError(where + ": unknown corpus key \"" + key + "\"");
            }
        } else if (section == "index") {
            if (key == "kind") {
                config.index_kind = index_kind_from_string(value);
            } else if (key == "neighbor_degree") {
                config.hnsw.neighbor_degree = static_cast<std::size_t>(parse_u64(value, where));
            } else if (key == "construction_beam") {
                config.hnsw.construction_beam =
                    static_cast<std::size_t>(parse_u64(value, where));
            } else if (key == "query_beam") {
                config.hnsw.query_beam = static_cast<std::size_t>(parse_u64(value, where));
            } else if (key == "build_seed") {
                config.hnsw.build_seed = parse_u64(value, where);
            } else {
                throw ConfigError(where + ": unknown index key \"" + key + "\"");
            }
        } else if (section == "pipeline") {
            if (key == "mode") {
                config.mode = mode_from_string(value);
            } else if (key == "k") {
                config.k = static_cast<std::size_t>(parse_u64(value, where));
            } else if (key == "seed") {
                config.seed = parse_u64(value, where);
            } else if (key == "query_prefix") {
                config.query_prefix = value;
            } else if (key == "reader_layout") {
                config.reader_options.layout = reader_layout_from_string(value);
            } else if (key == "summary_header") {
                config.reader_options.summary_header = value;
            } else {
                throw ConfigError(where + ": unknown pipeline key \"" + key + "\"");
            }
        } else if (section == "decode.compressor") {
            apply_decode_key(config.compressor_decode, key, value, where);
        } else if (section == "decode.reader") {
            apply_decode_key(config.reader_decode, key, value, where);
        } else if (section == "recognizer") {
            if (key == "mode") {
                config.recognizer.mode = recognizer_mode_from_string(value);
            } else if (key == "min_surface_chars") {
                config.recognizer.min_surface_chars =
                    static_cast<std::size_t>(parse_u64(value, where));
            } else if (key == "longest_match") {
                config.recognizer.longest_match = parse_bool(value, where);
            } else if (key == "case_insensitive") {
                config.recognizer.case_insensitive = parse_bool(value, where);
            } else if (key == "strip_plural_suffix") {
                config.recognizer.strip_plural_suffix = parse_bool(value, where);
            } else if (key == "stopwords") {
                config.recognizer.stopwords = split_csv(value);
            } else {
                throw ConfigError(where + ": unknown recognizer key \"" + key + "\"");
            }
        } else if (section == "split") {
            if (key == "train") {
                config.split_train = parse_double(value, where);
            } else if (key == "validation") {
                config.split_validation = parse_double(value, where);
            } else {
                throw ConfigError(where + ": unknown split key \"" + key + "\"");
            }
        } else if (section.rfind("backend.", 0) == 0) {
            const std::string role = section.substr(8);
            if (kRoles.find(role) == kRoles.end()) {
                throw ConfigError(where + ": unknown backend role \"" + role + "\"");
            }
            apply_backend_key(config.backends[role], key, value, where);
        } else if (section.empty()) {
            throw ConfigError(where + ": key outside any [section]");
        } else {
            throw ConfigError(where + ": unknown section [" + section + "]");
        }
    }

    config.validate();
    return config;
}

RunConfig load_config_file(const std::filesystem::path& path) {
    return parse_config_text(detail::read_text_file(path), path.string());
}

namespace {

const std::map<std::string, std::string>& default_kinds() {
    static const std::map<std::string, std::string> kinds = {
        {"embedder", "hash_embedder"},   {"compressor", "scripted_generator"},
        {"reader", "scripted_generator"}, {"synthesizer", "scripted_generator"},
        {"judge", "scripted_generator"},  {"reranker", "lexical_reranker"},
        {"ner", "none"}};
    return kinds;
}

const std::map<std::string, std::set<std::string>>& allowed_kinds() {
    static const std::map<std::string, std::set<std::string>> allowed = {
        {"embedder", {"http", "hash_embedder"}},
        {"compressor", {"http", "scripted_generator"}},
        {"reader", {"http", "scripted_generator"}},
        {"synthesizer", {"http", "scripted_generator"}},
        {"judge", {"http", "scripted_generator"}},
        {"reranker", {"http", "lexical_reranker"}},
        {"ner", {"http", "echo_ner", "none"}}};
    return allowed;
}

}  // namespace

void RunConfig::validate() const {
    if (k == 0) throw ConfigError("k must be positive");
    chunk.validate();
    recognizer.validate();
    if (split_train < 0.0 || split_validation < 0.0 ||
        split_train + split_validation > 1.0) {
        throw ConfigError("split fractions must be non-negative and sum to at most 1");
    }
    // Decode params share validation with request construction.
    to_request(compressor_decode, "");
    to_request(reader_decode, "");
    for (const auto& [role, spec] : backends) {
        if (kRoles.find(role) == kRoles.end()) {
            throw ConfigError("unknown backend role \"" + role + "\"");
        }
        if (spec.kind == "default") continue;
        const auto& allowed = allowed_kinds().at(role);
        if (allowed.find(spec.kind) == allowed.end()) {
            throw ConfigError("backend role " + role + " cannot use kind \"" + spec.kind +
                              "\"");
        }
    }
}

BackendSpec backend_spec_for(const RunConfig& config, const std::string& role) {
    if (kRoles.find(role) == kRoles.end()) {
        throw ConfigError("unknown backend role \"" + role + "\"");
    }
    BackendSpec spec;
    auto it = config.backends.find(role);
    if (it != config.backends.end()) spec = it->second;
    if (spec.kind == "default") spec.kind = default_kinds().at(role);
    if (spec.fallback.empty()) {
        // Role-appropriate stub behavior: the compressor must emit parseable
        // entity/summary lines; the synthesizer's output lands inside training
        // targets, so it must stay free of reserved tokens; the judge must
        // produce a choice the verdict parser accepts.
        if (role == "compressor") {
            spec.fallback = "compressor_demo";
        } else if (role == "synthesizer") {
            spec.fallback = "first_sentence";
        } else if (role == "judge") {
            spec.fallback = "fixed";
            if (spec.fixed_text.empty()) spec.fixed_text = "Summary 1";
        } else {
            spec.fallback = "echo_tail";
        }
    }
    return spec;
}

bool all_stub_backends(const RunConfig& config) {
    for (const auto& role : kRoles) {
        if (backend_spec_for(config, role).kind == "http") return false;
    }
    return true;
}

namespace {

GeneratorFallback fallback_from_string(const std::string& name) {
    if (name == "fixed") return GeneratorFallback::fixed;
    if (name == "echo_tail") return GeneratorFallback::echo_tail;
    if (name == "first_sentence") return GeneratorFallback::first_sentence;
    if (name == "compressor_demo") return GeneratorFallback::compressor_demo;
    throw ConfigError("unknown generator fallback \"" + name + "\"");
}

std::vector<ScriptRule> load_script_rules(const std::string& path) {
    if (path.empty()) return {};
    auto doc = json::parse(detail::read_text_file(path), nullptr, false);
    if (doc.is_discarded() || !doc.is_array()) {
        throw ConfigError("script file must hold a JSON array: " + path);
    }
    std::vector<ScriptRule> rules;
    for (const auto& item : doc) {
        rules.push_back({item.at("needle").get<std::string>(),
                         item.at("response").get<std::string>()});
    }
    return rules;
}

std::unique_ptr<GenerationBackend> make_generator(const BackendSpec& spec,
                                                  const std::string& role,
                                                  const std::shared_ptr<Transport>& transport) {
    if (spec.kind == "http") {
        return std::make_unique<HttpGenerationBackend>(
            apply_env_overrides(spec.http, role), transport);
    }
    return std::make_unique<ScriptedGenerator>(load_script_rules(spec.script_file),
                                               fallback_from_string(spec.fallback),
                                               spec.fixed_text, spec.seed);
}

}  // namespace

BackendSet make_backends(const RunConfig& config, const KnowledgeDictionary* dictionary,
                         std::shared_ptr<Transport> transport) {
    const bool needs_http = !all_stub_backends(config);
    if (needs_http && transport == nullptr) transport = make_httplib_transport();

    BackendSet set;

    auto embedder_spec = backend_spec_for(config, "embedder");
    if (embedder_spec.kind == "http") {
        set.embedder = std::make_unique<HttpEmbeddingBackend>(
            apply_env_overrides(embedder_spec.http, "embedder"), transport);
    } else {
        set.embedder = std::make_unique<HashEmbedder>(embedder_spec.dim, embedder_spec.seed);
    }

    set.compressor = make_generator(backend_spec_for(config, "compressor"), "compressor",
                                    transport);
    set.reader = make_generator(backend_spec_for(config, "reader"), "reader", transport);
    set.synthesizer =
        make_generator(backend_spec_for(config, "synthesizer"), "synthesizer", transport);
    set.judge = make_generator(backend_spec_for(config, "judge"), "judge", transport);

    auto reranker_spec = backend_spec_for(config, "reranker");
    if (reranker_spec.kind == "http") {
        set.reranker = std::make_unique<HttpRerankBackend>(
            apply_env_overrides(reranker_spec.http, "reranker"), transport);
    } else {
        set.reranker = std::make_unique<LexicalReranker>();
    }

    auto ner_spec = backend_spec_for(config, "ner");
    if (ner_spec.kind == "http") {
        set.ner = std::make_unique<HttpNerBackend>(apply_env_overrides(ner_spec.http, "ner"),
                                                   transport);
    } else if (ner_spec.kind == "echo_ner") {
        if (dictionary == nullptr) {
            throw ConfigError("echo_ner needs a sealed corpus dictionary; run ingest first");
        }
        std::vector<std::string> surfaces;
        for (const auto& [key, entry] : dictionary->entries()) {
            (void)key;
            surfaces.push_back(entry.surface);
        }
        set.ner = std::make_unique<EchoNer>(std::move(surfaces));
    }
    return set;
}

std::string training_config_template() {
    json doc{
        {"objective", "next_token_prediction_with_loss_mask"},
        {"global_batch_size", 8},
        {"gradient_accumulation", 1},
        {"scheduler", "cosine"},
        {"weight_decay", 0.03},
        {"epochs", 3},
        {"optimizer",
         {{"name", "adamw"}, {"beta1", 0.9}, {"beta2", 0.999}, {"epsilon", 1e-8}}},
        {"learning_rate", {{"default", 1e-4}, {"small_corpus", 1e-5}}},
        {"early_stopping", {{"enabled", true}, {"metric", "validation_loss"}}},
        {"decode", {{"temperature", 0.01}, {"top_p", 1.0}, {"max_new_tokens", 512}}},
    };
    return doc.dump(2) + "\n";
}

}  // namespace kcomp
