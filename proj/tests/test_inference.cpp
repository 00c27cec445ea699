#include <doctest.h>

#include <random>
#include <string>
#include <vector>

#include "kcomp/errors.hpp"
#include "kcomp/inference_pipeline.hpp"
#include "kcomp/retrieval.hpp"
#include "kcomp/sequence_codec.hpp"
#include "kcomp/stubs.hpp"
#include "kcomp/tokenizer.hpp"
#include "test_util.hpp"

using namespace kcomp;
using kcomp::testutil::TempDir;
using kcomp::testutil::write_file;

TEST_CASE("compressor output grammar: entity lines then summary") {
    auto ctx = parse_compressor_output(
        "Gout: Gout is arthritis.<eod>\nUric Acid: A waste product.<eod>\nGout comes "
        "from uric acid buildup.");
    REQUIRE(ctx.entries.size() == 2);
    CHECK(ctx.entries[0].surface == "Gout");
    CHECK(ctx.entries[0].description == "Gout is arthritis.");
    CHECK(ctx.entries[1].surface == "Uric Acid");
    CHECK(ctx.summary == "Gout comes from uric acid buildup.");
}

TEST_CASE("compressor output without <eod> is all summary") {
    auto ctx = parse_compressor_output("Just a plain summary with no entities.");
    CHECK(ctx.entries.empty());
    CHECK(ctx.summary == "Just a plain summary with no entities.");
}

TEST_CASE("malformed compressor output raises ProtocolError carrying the raw text") {
    auto expect_raw = [](const std::string& raw) {
        try {
            parse_compressor_output(raw);
            FAIL("expected ProtocolError for: ", raw);
        } catch (const ProtocolError& e) {
            CHECK(std::string(e.what()).find(raw) != std::string::npos);
        }
    };
    expect_raw("NoSeparator<eod>\nsummary");        // entity line without ": "
    expect_raw(": no surface<eod>\nsummary");       // empty surface
    expect_raw("A: <eod>\nsummary");                // empty description
    expect_raw("A: d<eod>");                        // nothing after the final <eod>
    expect_raw("A: d<eod> trailing<eod>\nsummary"); // second <eod> inside a line
    CHECK_THROWS_AS(parse_compressor_output("   "), ProtocolError);
    CHECK_THROWS_AS(parse_compressor_output(""), ProtocolError);
}

TEST_CASE("parse inverts render over fuzzed targets") {
    std::mt19937_64 rng(42);
    const std::vector<std::string> words = {"uric",   "acid", "joint", "flare",
                                            "night",  "pain", "gout",  "levels",
                                            "crystal", "kidney"};
    auto sentence = [&](std::size_t n) {
        std::string s;
        for (std::size_t i = 0; i < n; ++i) {
            if (!s.empty()) s += ' ';
            s += words[rng() % words.size()];
        }
        s += '.';
        s[0] = static_cast<char>(s[0] - 'a' + 'A');
        return s;
    };
    for (int round = 0; round < 500; ++round) {
        std::vector<EntityDescription> entries;
        auto count = 1 + rng() % 4;
        for (std::uint64_t e = 0; e < count; ++e) {
            entries.push_back({"Ent" + std::to_string(e) + "x" + std::to_string(rng() % 10),
                               sentence(1 + rng() % 6)});
        }
        std::string summary = sentence(2 + rng() % 8);

        auto [target, boundaries] = render_target(entries, summary);
        auto ctx = parse_compressor_output(target);
        CHECK(ctx.entries == entries);
        CHECK(ctx.summary == summary);
    }
}

TEST_CASE("compress refuses <eod> as a stop sequence") {
    ScriptedGenerator gen({}, GeneratorFallback::fixed, "E: d<eod>\nsummary");
    DecodeParams params;
    params.stop_sequences = {"<eod>"};
    CHECK_THROWS_AS(compress(gen, "q", {"P\nbody"}, params), ConfigError);
}

TEST_CASE("reader prompt: entity first, original question last") {
    CompressedContext ctx;
    ctx.entries = {{"Gout", "Gout is arthritis."}};
    ctx.summary = "Gout hurts at night.";
    auto prompt = render_reader_prompt(ctx, "What causes gout?");
    auto text = prompt.text();

    auto entity_at = text.find("### Entity");
    auto passage_at = text.find("### Passage");
    auto question_at = text.find("### Questions");
    REQUIRE(entity_at != std::string::npos);
    REQUIRE(passage_at != std::string::npos);
    REQUIRE(question_at != std::string::npos);
    CHECK(entity_at < passage_at);
    CHECK(passage_at < question_at);
    // Unmasked question, at the very end.
    CHECK(text.find("What causes gout?") > question_at);
    CHECK(text.rfind("What causes gout?") + std::string("What causes gout?").size() ==
          text.size());
    CHECK(prompt.zero_shot);
    CHECK(text.find("<ent>") == std::string::npos);
}

TEST_CASE("reader prompt layout and summary header options") {
    CompressedContext ctx;
    ctx.entries = {{"Gout", "Gout is arthritis."}};
    ctx.summary = "Summary text.";

    ReaderPromptOptions passage_first;
    passage_first.layout = ReaderLayout::passage_first;
    auto text = render_reader_prompt(ctx, "Q?", passage_first).text();
    CHECK(text.find("### Passage") < text.find("### Entity"));

    ReaderPromptOptions labeled;
    labeled.summary_header = "### Summary";
    auto text2 = render_reader_prompt(ctx, "Q?", labeled).text();
    CHECK(text2.find("### Summary") != std::string::npos);
    CHECK(text2.find("### Passage") == std::string::npos);
}

TEST_CASE("reader prompt omits the entity section when no entities exist") {
    CompressedContext ctx;
    ctx.summary = "Summary only.";
    auto text = render_reader_prompt(ctx, "Q?").text();
    CHECK(text.find("### Entity") == std::string::npos);
    CHECK(text.find("### Passage") != std::string::npos);
}

TEST_CASE("passages prompt lists passages without an entity section") {
    auto prompt = render_passages_prompt({"P1\nbody1", "P2\nbody2"}, "The question?");
    auto text = prompt.text();
    CHECK(text.find("### Entity") == std::string::npos);
    CHECK(text.find("P1\nbody1") != std::string::npos);
    CHECK(text.find("P2\nbody2") != std::string::npos);
    CHECK(text.find("P1") < text.find("P2"));
    CHECK(text.rfind("The question?") + std::string("The question?").size() == text.size());
}

namespace {

struct PipelineFixture {
    TempDir tmp{"pipe"};
    CorpusStore store;
    std::unique_ptr<VectorIndex> index;
    HashEmbedder embedder{32, 0};
    ScriptedGenerator compressor{{}, GeneratorFallback::compressor_demo};
    ScriptedGenerator reader{{}, GeneratorFallback::echo_tail};
    DeterministicClock clock;

    PipelineFixture() {
        write_file(
            tmp / "corpus.jsonl",
            R"({"id": "d1", "title": "Gout", "text": "Gout is arthritis from uric acid. It flares at night."})"
            "\n"
            R"({"id": "d2", "title": "Flu", "text": "Flu is a viral infection. It causes fever."})"
            "\n"
            R"({"id": "d3", "title": "Uric Acid", "text": "Uric acid is a waste product. High levels cause gout."})"
            "\n");
        store.ingest_file(tmp / "corpus.jsonl");
        store.build_knowledge_dictionary();
        std::vector<std::string> ids;
        std::vector<std::string> texts;
        for (const auto& chunk : store.chunks()) {
            ids.push_back(chunk.chunk_id);
            texts.push_back(render_passage(chunk));
        }
        index = build_index(ids, embed_batch(embedder, texts), IndexKind::exact_flat);
    }

    PipelineEnv env() {
        PipelineEnv e;
        e.store = &store;
        e.index = index.get();
        e.embedder = &embedder;
        e.compressor = &compressor;
        e.reader = &reader;
        e.clock = &clock;
        return e;
    }
};

}  // namespace

TEST_CASE("run_pipeline produces a complete trace in kcomp mode") {
    PipelineFixture fx;
    PipelineConfig config;
    config.mode = PipelineMode::kcomp;
    config.k = 2;

    auto trace = run_pipeline("q1", "What causes gout?", fx.env(), config);
    REQUIRE(trace.ok());
    CHECK(trace.qid == "q1");
    CHECK(trace.masked_question == "What causes <ent>?");
    CHECK(trace.retrieved.size() == 2);
    CHECK(trace.passages.size() == 2);
    CHECK_FALSE(trace.compressor_raw.empty());
    CHECK_FALSE(trace.summary.empty());
    CHECK_FALSE(trace.reader_prompt.empty());
    CHECK_FALSE(trace.answer_text.empty());
    CHECK(trace.tokenizer_name == "whitespace");

    // Stages in order with deterministic timings and recomputable tokens.
    REQUIRE(trace.stages.size() == 4);
    CHECK(trace.stages[0].name == "retrieve");
    CHECK(trace.stages[1].name == "mask");
    CHECK(trace.stages[2].name == "compress");
    CHECK(trace.stages[3].name == "read");
    WhitespaceTokenizer tok;
    CHECK(trace.stages[2].prompt_tokens ==
          static_cast<long>(tok.count_tokens(trace.compressor_input)));
    CHECK(trace.stages[2].completion_tokens ==
          static_cast<long>(tok.count_tokens(trace.compressor_raw)));
    CHECK(trace.stages[3].prompt_tokens ==
          static_cast<long>(tok.count_tokens(trace.reader_prompt)));
    CHECK(trace.stages[3].completion_tokens ==
          static_cast<long>(tok.count_tokens(trace.answer_text)));
    for (const auto& stage : trace.stages) CHECK(stage.millis > 0);
}

TEST_CASE("top1 and topk modes skip compression") {
    PipelineFixture fx;
    PipelineConfig config;
    config.k = 2;

    config.mode = PipelineMode::top1;
    auto t1 = run_pipeline("q", "What causes gout?", fx.env(), config);
    REQUIRE(t1.ok());
    CHECK(t1.passages.size() == 1);  // top1 forces k = 1
    CHECK(t1.compressor_raw.empty());
    // Baselines neither mask nor compress: retrieval straight into reading.
    REQUIRE(t1.stages.size() == 2);
    CHECK(t1.stages[0].name == "retrieve");
    CHECK(t1.stages[1].name == "read");
    CHECK(t1.reader_prompt.find("### Entity") == std::string::npos);

    config.mode = PipelineMode::topk;
    auto tk = run_pipeline("q", "What causes gout?", fx.env(), config);
    REQUIRE(tk.ok());
    CHECK(tk.passages.size() == 2);
    // All k passages appear in the reader prompt.
    for (const auto& p : tk.passages) {
        CHECK(tk.reader_prompt.find(p) != std::string::npos);
    }
}

TEST_CASE("summary_only is kcomp minus the entity section") {
    PipelineFixture fx;
    PipelineConfig config;
    config.k = 2;

    config.mode = PipelineMode::kcomp;
    auto full = run_pipeline("q", "What causes gout?", fx.env(), config);
    config.mode = PipelineMode::summary_only;
    auto summary_only = run_pipeline("q", "What causes gout?", fx.env(), config);
    REQUIRE(full.ok());
    REQUIRE(summary_only.ok());

    // Same compression, same summary; entity entries recorded in the trace
    // but withheld from the reader.
    CHECK(summary_only.summary == full.summary);
    CHECK(summary_only.entries == full.entries);
    CHECK(summary_only.reader_prompt.find("### Entity") == std::string::npos);

    // Removing the entity section from the kcomp prompt yields the
    // summary_only prompt byte for byte.
    auto cut_begin = full.reader_prompt.find("### Entity");
    auto cut_end = full.reader_prompt.find("### Passage");
    REQUIRE(cut_begin != std::string::npos);
    REQUIRE(cut_end != std::string::npos);
    auto reduced = full.reader_prompt.substr(0, cut_begin) +
                   full.reader_prompt.substr(cut_end);
    CHECK(reduced == summary_only.reader_prompt);
}

TEST_CASE("stage failures land in the trace instead of throwing") {
    PipelineFixture fx;
    // A compressor whose output has no summary after the final <eod>.
    ScriptedGenerator broken({}, GeneratorFallback::fixed, "E: desc<eod>");
    auto env = fx.env();
    env.compressor = &broken;
    PipelineConfig config;
    config.k = 2;
    auto trace = run_pipeline("q", "What causes gout?", env, config);
    CHECK_FALSE(trace.ok());
    CHECK_FALSE(trace.error.empty());
    // Artifacts before the failure are preserved.
    CHECK(trace.passages.size() == 2);
    CHECK_FALSE(trace.compressor_raw.empty());
    CHECK(trace.answer_text.empty());
}

TEST_CASE("misconfiguration throws rather than tracing") {
    PipelineFixture fx;
    PipelineConfig config;
    config.k = 0;
    CHECK_THROWS_AS(run_pipeline("q", "What causes gout?", fx.env(), config), ConfigError);

    PipelineConfig no_compressor;
    no_compressor.k = 2;
    auto env = fx.env();
    env.compressor = nullptr;
    CHECK_THROWS_AS(run_pipeline("q", "Q?", env, no_compressor), ConfigError);
    // Baselines run fine without a compressor.
    no_compressor.mode = PipelineMode::topk;
    CHECK(run_pipeline("q", "What causes gout?", env, no_compressor).ok());
}

TEST_CASE("identical configs give byte-identical traces with the deterministic clock") {
    PipelineFixture fx1;
    PipelineFixture fx2;
    PipelineConfig config;
    config.k = 2;
    auto a = run_pipeline("q", "What causes gout?", fx1.env(), config);
    auto b = run_pipeline("q", "What causes gout?", fx2.env(), config);
    CHECK(trace_to_json(a).dump(2) == trace_to_json(b).dump(2));
}

TEST_CASE("trace JSON round-trips") {
    PipelineFixture fx;
    PipelineConfig config;
    config.k = 2;
    auto trace = run_pipeline("q9", "What causes gout?", fx.env(), config);
    auto doc = trace_to_json(trace);
    auto back = trace_from_json(doc);
    CHECK(trace_to_json(back) == doc);
    CHECK(back.qid == trace.qid);
    CHECK(back.stages.size() == trace.stages.size());
    CHECK(back.retrieved.size() == trace.retrieved.size());
}

TEST_CASE("write_trace and load_trace with filename sanitization") {
    PipelineFixture fx;
    PipelineConfig config;
    config.k = 2;
    auto trace = run_pipeline("q/1:weird id", "What causes gout?", fx.env(), config);
    auto path = write_trace(trace, fx.tmp / "run");
    CHECK(path.filename().string() == "q_1_weird_id.json");
    auto back = load_trace(path);
    CHECK(back.qid == "q/1:weird id");
    CHECK(trace_to_json(back) == trace_to_json(trace));
}

TEST_CASE("run manifest round-trips and never carries token values") {
    TempDir tmp("manifest");
    RunManifest manifest;
    manifest.mode = "kcomp";
    manifest.k = 5;
    manifest.seed = 3;
    manifest.tokenizer_name = "whitespace";
    manifest.deterministic_clock = true;
    manifest.qids = {"a", "b"};
    manifest.backends["embedder"] = "hash_embedder(dim=64)";
    manifest.config_text = "[pipeline]\nmode = kcomp\n";
    write_run_manifest(manifest, tmp.path());
    auto back = load_run_manifest(tmp.path());
    CHECK(back.mode == "kcomp");
    CHECK(back.k == 5);
    CHECK(back.qids == manifest.qids);
    CHECK(back.deterministic_clock);
    CHECK(back.config_text == manifest.config_text);
}

TEST_CASE("all_backends_deterministic reflects the stub fleet") {
    PipelineFixture fx;
    CHECK(all_backends_deterministic(fx.env(), PipelineMode::kcomp));

    class NondetGen final : public GenerationBackend {
    public:
        GenerateResponse generate(const GenerateRequest&) override { return {"x", 1, 1}; }
        std::string describe() const override { return "nondet"; }
        // deterministic() stays false
    };
    NondetGen wild;
    auto env = fx.env();
    env.reader = &wild;
    CHECK_FALSE(all_backends_deterministic(env, PipelineMode::kcomp));
    // The compressor's determinism is irrelevant to baselines.
    env.reader = &fx.reader;
    env.compressor = &wild;
    CHECK_FALSE(all_backends_deterministic(env, PipelineMode::kcomp));
    CHECK(all_backends_deterministic(env, PipelineMode::topk));
}

TEST_CASE("decode parameter validation") {
    DecodeParams params;
    params.temperature = -0.1;
    CHECK_THROWS_AS(to_request(params, "p"), ConfigError);
    params.temperature = 0.01;
    params.top_p = 0.0;
    CHECK_THROWS_AS(to_request(params, "p"), ConfigError);
    params.top_p = 1.5;
    CHECK_THROWS_AS(to_request(params, "p"), ConfigError);
    params.top_p = 1.0;
    params.max_new_tokens = 0;
    CHECK_THROWS_AS(to_request(params, "p"), ConfigError);
    params.max_new_tokens = 16;
    auto request = to_request(params, "p", 7);
    CHECK(request.prompt == "p");
    CHECK(request.seed == 7);
}
