#include "kcomp/inference_pipeline.hpp"

#include <algorithm>
#include <cctype>

#include "io_internal.hpp"
#include "kcomp/errors.hpp"
#include "kcomp/text.hpp"
#include "kcomp/tokenizer.hpp"

namespace kcomp {

using nlohmann::json;

GenerateRequest to_request(const DecodeParams& params, std::string prompt,
                           std::optional<std::uint64_t> seed) {
    if (params.temperature < 0.0) throw ConfigError("temperature must be >= 0");
    if (params.top_p <= 0.0 || params.top_p > 1.0) throw ConfigError("top_p must be in (0,1]");
    if (params.max_new_tokens <= 0) throw ConfigError("max_new_tokens must be positive");
    GenerateRequest request;
    request.prompt = std::move(prompt);
    request.temperature = params.temperature;
    request.top_p = params.top_p;
    request.max_new_tokens = params.max_new_tokens;
    request.stop = params.stop_sequences;
    request.seed = seed;
    return request;
}

std::string to_string(PipelineMode mode) {
    switch (mode) {
        case PipelineMode::kcomp: return "kcomp";
        case PipelineMode::top1: return "top1";
        case PipelineMode::topk: return "topk";
        case PipelineMode::summary_only: return "summary_only";
    }
    throw ValidationError("unknown pipeline mode");
}

PipelineMode mode_from_string(std::string_view name) {
    if (name == "kcomp") return PipelineMode::kcomp;
    if (name == "top1") return PipelineMode::top1;
    if (name == "topk") return PipelineMode::topk;
    if (name == "summary_only") return PipelineMode::summary_only;
    throw ConfigError("unknown mode: " + std::string(name) +
                      " (expected kcomp|top1|topk|summary_only)");
}

namespace {

[[noreturn]] void unparseable(const std::string& why, const std::string& raw) {
    throw ProtocolError("compressor output unparseable: " + why +
                        "; raw output follows:\n" + raw);
}

}  // namespace

CompressedContext parse_compressor_output(const std::string& raw) {
    if (trim_view(raw).empty()) {
        throw ProtocolError("compressor returned empty output");
    }

    CompressedContext ctx;
    ctx.raw = raw;

    const auto last = raw.rfind(kEodToken);
    if (last == std::string::npos) {
        ctx.summary = trim(raw);
        return ctx;
    }

    const std::string head = raw.substr(0, last + kEodToken.size());
    ctx.summary = trim(raw.substr(last + kEodToken.size()));
    if (ctx.summary.empty()) {
        unparseable("nothing after the final " + std::string(kEodToken) +
                        " — a summary is required",
                    raw);
    }

    std::size_t pos = 0;
    while (pos < head.size()) {
        auto eol = head.find('\n', pos);
        if (eol == std::string::npos) eol = head.size();
        std::string line = trim(head.substr(pos, eol - pos));
        pos = eol + 1;
        if (line.empty()) continue;

        if (line.size() < kEodToken.size() ||
            line.compare(line.size() - kEodToken.size(), kEodToken.size(), kEodToken) != 0) {
            unparseable("entity line does not end with " + std::string(kEodToken) + ": \"" +
                            line + "\"",
                        raw);
        }
        line.erase(line.size() - kEodToken.size());
        if (line.find(kEodToken) != std::string::npos) {
            unparseable("entity line contains more than one " + std::string(kEodToken), raw);
        }
        const auto sep = line.find(": ");
        if (sep == std::string::npos || sep == 0) {
            unparseable("entity line has no \"surface: description\" separator: \"" + line +
                            "\"",
                        raw);
        }
        EntityDescription entry;
        entry.surface = trim(line.substr(0, sep));
        entry.description = trim(line.substr(sep + 2));
        if (entry.surface.empty() || entry.description.empty()) {
            unparseable("entity line has an empty surface or description", raw);
        }
        ctx.entries.push_back(std::move(entry));
    }
    return ctx;
}

namespace {

void check_compressor_stops(const DecodeParams& params) {
    for (const auto& stop : params.stop_sequences) {
        if (stop.find(kEodToken) != std::string::npos) {
            throw ConfigError(std::string(kEodToken) +
                              " must not be a stop sequence: descriptions continue past it");
        }
    }
}

}  // namespace

CompressedContext compress(GenerationBackend& backend, const std::string& masked_question,
                           const std::vector<std::string>& passages,
                           const DecodeParams& params,
                           std::optional<std::uint64_t> seed) {
    check_compressor_stops(params);
    auto request =
        to_request(params, render_compressor_input(masked_question, passages), seed);
    auto response = backend.generate(request);
    return parse_compressor_output(response.text);
}

std::string to_string(ReaderLayout layout) {
    switch (layout) {
        case ReaderLayout::entity_first: return "entity_first";
        case ReaderLayout::passage_first: return "passage_first";
    }
    throw ValidationError("unknown reader layout");
}

ReaderLayout reader_layout_from_string(std::string_view name) {
    if (name == "entity_first") return ReaderLayout::entity_first;
    if (name == "passage_first") return ReaderLayout::passage_first;
    throw ConfigError("unknown reader layout: " + std::string(name));
}

std::string ReaderPrompt::text() const {
    std::string out;
    for (std::size_t i = 0; i < sections.size(); ++i) {
        if (i > 0) out += "\n\n";
        out += sections[i].header;
        out += "\n";
        out += sections[i].body;
    }
    return out;
}

ReaderPrompt render_reader_prompt(const CompressedContext& ctx, const std::string& question,
                                  const ReaderPromptOptions& options) {
    if (trim_view(ctx.summary).empty()) {
        throw ValidationError("reader prompt needs a non-empty summary");
    }
    if (trim_view(question).empty()) {
        throw ValidationError("reader prompt needs a non-empty question");
    }

    ReaderPrompt prompt;
    prompt.layout = options.layout;

    std::optional<ReaderSection> entity_section;
    if (!ctx.entries.empty()) {
        std::string body;
        for (std::size_t i = 0; i < ctx.entries.size(); ++i) {
            if (i > 0) body += "\n";
            body += ctx.entries[i].surface;
            body += ": ";
            body += ctx.entries[i].description;
        }
        entity_section = ReaderSection{"### Entity", std::move(body)};
    }
    ReaderSection summary_section{options.summary_header, trim(ctx.summary)};

    if (options.layout == ReaderLayout::entity_first) {
        if (entity_section) prompt.sections.push_back(std::move(*entity_section));
        prompt.sections.push_back(std::move(summary_section));
    } else {
        prompt.sections.push_back(std::move(summary_section));
        if (entity_section) prompt.sections.push_back(std::move(*entity_section));
    }
    prompt.sections.push_back({"### Questions", question});
    return prompt;
}

ReaderPrompt render_passages_prompt(const std::vector<std::string>& passages,
                                    const std::string& question) {
    if (passages.empty()) throw ValidationError("reader prompt needs at least one passage");
    if (trim_view(question).empty()) {
        throw ValidationError("reader prompt needs a non-empty question");
    }
    std::string body;
    for (std::size_t i = 0; i < passages.size(); ++i) {
        if (i > 0) body += "\n\n";
        body += trim(passages[i]);
    }
    ReaderPrompt prompt;
    prompt.layout = ReaderLayout::passage_first;
    prompt.sections.push_back({"### Passage", std::move(body)});
    prompt.sections.push_back({"### Questions", question});
    return prompt;
}

std::string answer(GenerationBackend& reader, const ReaderPrompt& prompt,
                   const DecodeParams& params, std::optional<std::uint64_t> seed) {
    if (prompt.sections.empty() || prompt.sections.back().header != "### Questions") {
        throw ValidationError("reader prompt must end with the question section");
    }
    auto response = reader.generate(to_request(params, prompt.text(), seed));
    return trim(response.text);
}

double WallClock::now_ms() {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                     origin_)
        .count();
}

double PipelineTrace::total_millis() const {
    double sum = 0.0;
    for (const auto& stage : stages) sum += stage.millis;
    return sum;
}

bool all_backends_deterministic(const PipelineEnv& env, PipelineMode mode) {
    if (env.embedder == nullptr || !env.embedder->deterministic()) return false;
    if (env.reader == nullptr || !env.reader->deterministic()) return false;
    const bool needs_compressor =
        mode == PipelineMode::kcomp || mode == PipelineMode::summary_only;
    if (needs_compressor &&
        (env.compressor == nullptr || !env.compressor->deterministic())) {
        return false;
    }
    if (env.ner != nullptr && !env.ner->deterministic()) return false;
    return true;
}

PipelineTrace run_pipeline(const std::string& qid, const std::string& question,
                           const PipelineEnv& env, const PipelineConfig& config) {
    if (env.store == nullptr || env.index == nullptr || env.embedder == nullptr ||
        env.reader == nullptr) {
        throw ConfigError("run_pipeline needs a store, index, embedder and reader");
    }
    const bool needs_compressor =
        config.mode == PipelineMode::kcomp || config.mode == PipelineMode::summary_only;
    if (needs_compressor && env.compressor == nullptr) {
        throw ConfigError("mode " + to_string(config.mode) + " needs a compressor backend");
    }
    if (config.k == 0) throw ConfigError("k must be positive");
    if (needs_compressor) check_compressor_stops(config.compressor_decode);

    WhitespaceTokenizer tokenizer;
    auto tokens = [&](const std::string& text) {
        return static_cast<long>(tokenizer.count_tokens(text));
    };

    WallClock fallback;
    StageClock& clock = env.clock != nullptr ? *env.clock : fallback;

    PipelineTrace trace;
    trace.qid = qid;
    trace.mode = config.mode;
    trace.question = question;
    trace.tokenizer_name = tokenizer.name();

    const std::size_t k = config.mode == PipelineMode::top1 ? 1 : config.k;

    try {
        double begin = clock.now_ms();
        auto retrieved = retrieve_passages(question, k, *env.store, *env.index,
                                           *env.embedder, config.query_prefix);
        clock.charge(tokens(question) + static_cast<long>(retrieved.size()));
        trace.stages.push_back(
            {"retrieve", clock.now_ms() - begin, tokens(question), 0});
        for (const auto& passage : retrieved) {
            trace.retrieved.push_back({passage.chunk_id, passage.score, passage.rank});
            trace.passages.push_back(passage.text);
        }

        ReaderPrompt prompt;
        if (needs_compressor) {
            begin = clock.now_ms();
            auto mentions = recognize_entities(question, env.store->dictionary(),
                                               config.recognizer, env.ner);
            auto masked = mask_question(question, mentions);
            trace.masked_question = masked.masked;
            clock.charge(tokens(question));
            trace.stages.push_back({"mask", clock.now_ms() - begin, tokens(question), 0});

            begin = clock.now_ms();
            trace.compressor_input = render_compressor_input(masked.masked, trace.passages);
            // Generate and record the raw output before parsing, so a
            // grammar violation still leaves the evidence in the trace.
            auto response = env.compressor->generate(to_request(
                config.compressor_decode, trace.compressor_input, config.seed));
            trace.compressor_raw = response.text;
            auto ctx = parse_compressor_output(response.text);
            trace.entries = ctx.entries;
            trace.summary = ctx.summary;
            clock.charge(tokens(trace.compressor_input) + tokens(ctx.raw));
            trace.stages.push_back({"compress", clock.now_ms() - begin,
                                    tokens(trace.compressor_input), tokens(ctx.raw)});

            if (config.mode == PipelineMode::summary_only) ctx.entries.clear();
            prompt = render_reader_prompt(ctx, question, config.reader_options);
        } else {
            prompt = render_passages_prompt(trace.passages, question);
        }
        trace.reader_prompt = prompt.text();

        begin = clock.now_ms();
        trace.answer_text = answer(*env.reader, prompt, config.reader_decode, config.seed);
        clock.charge(tokens(trace.reader_prompt) + tokens(trace.answer_text));
        trace.stages.push_back({"read", clock.now_ms() - begin, tokens(trace.reader_prompt),
                                tokens(trace.answer_text)});
    } catch (const ConfigError&) {
        throw;  // misconfiguration, not a per-question failure
    } catch (const Error& err) {
        trace.error = err.what();
    }
    return trace;
}

json trace_to_json(const PipelineTrace& trace) {
    json retrieved = json::array();
    for (const auto& r : trace.retrieved) {
        retrieved.push_back(
            {{"chunk_id", r.chunk_id}, {"score", r.score}, {"rank", r.rank}});
    }
    json entries = json::array();
    for (const auto& e : trace.entries) {
        entries.push_back({{"surface", e.surface}, {"description", e.description}});
    }
    json stages = json::array();
    for (const auto& s : trace.stages) {
        stages.push_back({{"name", s.name},
                          {"millis", s.millis},
                          {"prompt_tokens", s.prompt_tokens},
                          {"completion_tokens", s.completion_tokens}});
    }
    return json{{"qid", trace.qid},
                {"mode", to_string(trace.mode)},
                {"question", trace.question},
                {"masked_question", trace.masked_question},
                {"retrieved", retrieved},
                {"passages", trace.passages},
                {"compressor_input", trace.compressor_input},
                {"compressor_raw", trace.compressor_raw},
                {"entries", entries},
                {"summary", trace.summary},
                {"reader_prompt", trace.reader_prompt},
                {"answer", trace.answer_text},
                {"stages", stages},
                {"tokenizer", trace.tokenizer_name},
                {"error", trace.error}};
}

PipelineTrace trace_from_json(const json& doc) {
    PipelineTrace trace;
    trace.qid = doc.at("qid").get<std::string>();
    trace.mode = mode_from_string(doc.at("mode").get<std::string>());
    trace.question = doc.at("question").get<std::string>();
    trace.masked_question = doc.at("masked_question").get<std::string>();
    for (const auto& r : doc.at("retrieved")) {
        trace.retrieved.push_back({r.at("chunk_id").get<std::string>(),
                                   r.at("score").get<double>(), r.at("rank").get<int>()});
    }
    trace.passages = doc.at("passages").get<std::vector<std::string>>();
    trace.compressor_input = doc.at("compressor_input").get<std::string>();
    trace.compressor_raw = doc.at("compressor_raw").get<std::string>();
    for (const auto& e : doc.at("entries")) {
        trace.entries.push_back(
            {e.at("surface").get<std::string>(), e.at("description").get<std::string>()});
    }
    trace.summary = doc.at("summary").get<std::string>();
    trace.reader_prompt = doc.at("reader_prompt").get<std::string>();
    trace.answer_text = doc.at("answer").get<std::string>();
    for (const auto& s : doc.at("stages")) {
        trace.stages.push_back({s.at("name").get<std::string>(),
                                s.at("millis").get<double>(),
                                s.at("prompt_tokens").get<long>(),
                                s.at("completion_tokens").get<long>()});
    }
    trace.tokenizer_name = doc.at("tokenizer").get<std::string>();
    trace.error = doc.at("error").get<std::string>();
    return trace;
}

std::string sanitize_for_filename(std::string_view qid) {
    std::string out;
    for (char c : qid) {
        const bool safe = std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '.' ||
                          c == '_' || c == '-';
        out += safe ? c : '_';
    }
    if (out.empty()) out = "q";
    return out;
}

std::filesystem::path write_trace(const PipelineTrace& trace,
                                  const std::filesystem::path& run_dir) {
    auto dir = run_dir / "traces";
    std::filesystem::create_directories(dir);
    auto path = dir / (sanitize_for_filename(trace.qid) + ".json");
    detail::write_file_atomically(path, trace_to_json(trace).dump(2) + "\n");
    return path;
}

PipelineTrace load_trace(const std::filesystem::path& path) {
    auto doc = json::parse(detail::read_text_file(path), nullptr, false);
    if (doc.is_discarded()) throw ValidationError("invalid trace JSON: " + path.string());
    return trace_from_json(doc);
}

void write_run_manifest(const RunManifest& manifest, const std::filesystem::path& run_dir) {
    std::filesystem::create_directories(run_dir);
    json backends = json::object();
    for (const auto& [role, desc] : manifest.backends) backends[role] = desc;
    json doc{{"mode", manifest.mode},
             {"k", manifest.k},
             {"seed", manifest.seed},
             {"tokenizer", manifest.tokenizer_name},
             {"deterministic_clock", manifest.deterministic_clock},
             {"qids", manifest.qids},
             {"backends", backends},
             {"config_text", manifest.config_text}};
    detail::write_file_atomically(run_dir / "run_manifest.json", doc.dump(2) + "\n");
}

RunManifest load_run_manifest(const std::filesystem::path& run_dir) {
    auto path = run_dir / "run_manifest.json";
    auto doc = json::parse(detail::read_text_file(path), nullptr, false);
    if (doc.is_discarded()) {
        throw ValidationError("invalid run manifest: " + path.string());
    }
    RunManifest manifest;
    manifest.mode = doc.at("mode").get<std::string>();
    manifest.k = doc.at("k").get<std::size_t>();
    manifest.seed = doc.at("seed").get<std::uint64_t>();
    manifest.tokenizer_name = doc.at("tokenizer").get<std::string>();
    manifest.deterministic_clock = doc.at("deterministic_clock").get<bool>();
    manifest.qids = doc.at("qids").get<std::vector<std::string>>();
    for (const auto& [role, desc] : doc.at("backends").items()) {
        manifest.backends[role] = desc.get<std::string>();
    }
    manifest.config_text = doc.at("config_text").get<std::string>();
    return manifest;
}

}  // namespace kcomp
