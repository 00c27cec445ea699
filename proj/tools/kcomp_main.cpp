// kcomp: command-line front end for the compression pipeline.
//
// Subcommands cover the full artifact chain: ingest -> index -> search /
// build-dataset -> export-training, the per-question pipeline (compress,
// answer, run), and the evaluation protocols (eval-rerank, eval-speed,
// eval-judge, stats). Exit codes: 0 success, 1 configuration/validation
// error, 2 runtime failure.

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kcomp/config.hpp"
#include "kcomp/corpus_store.hpp"
#include "kcomp/dataset_builder.hpp"
#include "kcomp/errors.hpp"
#include "kcomp/evaluation.hpp"
#include "kcomp/inference_pipeline.hpp"
#include "kcomp/retrieval.hpp"
#include "kcomp/sequence_codec.hpp"
#include "kcomp/text.hpp"
#include "kcomp/tokenizer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace kcomp;

namespace {

struct Args {
    std::string config_path;
    std::optional<std::string> mode;
    std::optional<std::size_t> k;
    std::optional<std::uint64_t> seed;
    bool dry_run = false;
    std::optional<std::string> out;
    std::string corpus;
    std::string qa;
    std::string question;
    std::string query;
    std::string split = "all";
    std::string decisions_file;
    std::vector<std::string> run_dirs;
};

RunConfig effective_config(const Args& args) {
    RunConfig config;
    if (!args.config_path.empty()) config = load_config_file(args.config_path);
    if (args.mode) config.mode = mode_from_string(*args.mode);
    if (args.k) config.k = *args.k;
    if (args.seed) config.seed = *args.seed;
    if (!args.corpus.empty()) config.corpus_file = args.corpus;
    if (!args.qa.empty()) config.qa_file = args.qa;
    config.validate();
    return config;
}

// Holds <dir>/.kcomp.lock for the lifetime of a writing subcommand so two
// invocations cannot interleave output in one run directory.
class RunLock {
public:
    explicit RunLock(const fs::path& dir) : path_(dir / ".kcomp.lock") {
        fs::create_directories(dir);
        fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd_ < 0) {
            if (errno == EEXIST) {
                throw ValidationError("run directory " + dir.string() + " is locked (" +
                                      path_.string() +
                                      " exists); remove the lock file if no other "
                                      "invocation is active");
            }
            throw IoError("cannot create lock file " + path_.string());
        }
        const auto pid = std::to_string(::getpid()) + "\n";
        if (::write(fd_, pid.c_str(), pid.size()) < 0) {
            // The lock still holds; the pid note is best-effort only.
        }
    }
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;
    ~RunLock() {
        if (fd_ >= 0) {
            ::close(fd_);
            ::unlink(path_.c_str());
        }
    }

private:
    fs::path path_;
    int fd_ = -1;
};

CorpusStore require_store(const RunConfig& config) {
    if (!fs::exists(fs::path(config.store_dir) / "manifest.json")) {
        throw ValidationError("no sealed corpus at " + config.store_dir +
                              "; run `kcomp ingest` first");
    }
    return CorpusStore::load(config.store_dir);
}

std::unique_ptr<VectorIndex> require_index(const RunConfig& config) {
    if (!fs::exists(fs::path(config.index_dir) / "index.meta.json")) {
        throw ValidationError("no vector index at " + config.index_dir +
                              "; run `kcomp index` first");
    }
    return load_index(config.index_dir);
}

std::vector<QAExample> require_examples(const RunConfig& config, const std::string& split) {
    if (config.qa_file.empty()) {
        throw ValidationError("no QA file configured; set [paths] qa or pass --qa");
    }
    if (!fs::exists(config.qa_file)) {
        throw ValidationError("QA file not found: " + config.qa_file);
    }
    auto examples = load_qa_jsonl(config.qa_file);
    bool any_explicit = false;
    for (const auto& ex : examples) any_explicit = any_explicit || ex.split_explicit;
    if (!any_explicit) {
        assign_splits(examples, config.seed, config.split_train, config.split_validation);
    }
    if (split != "all") {
        const auto wanted = split_from_string(split);
        std::vector<QAExample> filtered;
        for (auto& ex : examples) {
            if (ex.split == wanted) filtered.push_back(std::move(ex));
        }
        examples = std::move(filtered);
    }
    return examples;
}

PipelineConfig pipeline_config(const RunConfig& config) {
    PipelineConfig pc;
    pc.mode = config.mode;
    pc.k = config.k;
    pc.compressor_decode = config.compressor_decode;
    pc.reader_decode = config.reader_decode;
    pc.reader_options = config.reader_options;
    pc.recognizer = config.recognizer;
    pc.query_prefix = config.query_prefix;
    pc.seed = config.seed;
    return pc;
}

// Prompt pack rendered without touching any backend: placeholder passages
// and summary, recognition via the offline gazetteer only.
json dry_run_pack(const RunConfig& config, const CorpusStore& store, const std::string& qid,
                  const std::string& question) {
    RecognizerPolicy policy = config.recognizer;
    policy.mode = RecognizerMode::gazetteer;
    auto mentions = recognize_entities(question, store.dictionary(), policy);
    auto masked = mask_question(question, mentions);

    const std::size_t k = config.mode == PipelineMode::top1 ? 1 : config.k;
    std::vector<std::string> placeholders;
    for (std::size_t i = 0; i < k; ++i) {
        placeholders.push_back("<passage " + std::to_string(i + 1) + ">");
    }

    json pack{{"qid", qid},
              {"question", question},
              {"masked_question", masked.masked},
              {"mode", to_string(config.mode)},
              {"dry_run", true}};
    if (config.mode == PipelineMode::kcomp || config.mode == PipelineMode::summary_only) {
        pack["compressor_input"] = render_compressor_input(masked.masked, placeholders);
        CompressedContext ctx;
        ctx.summary = "<summary>";
        if (config.mode == PipelineMode::kcomp) {
            ctx.entries = {{"<entity>", "<description>"}};
        }
        pack["reader_prompt"] =
            render_reader_prompt(ctx, question, config.reader_options).text();
    } else {
        pack["reader_prompt"] = render_passages_prompt(placeholders, question).text();
    }
    return pack;
}

json filter_stats_to_json(const FilterStats& stats) {
    json splits = json::object();
    for (const auto& [name, counts] : stats.per_split) {
        splits[name] = {{"original", counts.original},
                        {"kept", counts.kept},
                        {"dropped", counts.dropped()},
                        {"percent_filtered", counts.percent_filtered()}};
    }
    const auto totals = stats.totals();
    return json{{"splits", splits},
                {"totals",
                 {{"original", totals.original},
                  {"kept", totals.kept},
                  {"dropped", totals.dropped()},
                  {"percent_filtered", totals.percent_filtered()}}}};
}

void print_filter_table(const json& doc, std::ostream& out) {
    auto row = [&](const std::string& name, const json& counts) {
        char line[160];
        std::snprintf(line, sizeof(line), "%-12s %9llu %9llu %9llu %10.1f\n", name.c_str(),
                      static_cast<unsigned long long>(counts.at("original").get<std::size_t>()),
                      static_cast<unsigned long long>(counts.at("kept").get<std::size_t>()),
                      static_cast<unsigned long long>(counts.at("dropped").get<std::size_t>()),
                      counts.at("percent_filtered").get<double>());
        out << line;
    };
    out << "split         original      kept   dropped  filtered%\n";
    for (const auto& [name, counts] : doc.at("splits").items()) row(name, counts);
    row("total", doc.at("totals"));
}

int cmd_ingest(const Args& args) {
    auto config = effective_config(args);
    if (config.corpus_file.empty()) {
        throw ValidationError("no corpus file; set [paths] corpus or pass --corpus");
    }
    const std::string store_dir = args.out.value_or(config.store_dir);

    CorpusStore store(config.chunk);
    auto stats = store.ingest_file(config.corpus_file);
    store.build_knowledge_dictionary();
    store.seal(store_dir);

    std::cout << "ingested " << stats.documents << " documents into " << stats.chunks
              << " chunks, " << store.dictionary().size() << " dictionary entries -> "
              << store_dir << "\n";
    if (!stats.rejects.empty()) {
        std::cout << stats.rejects.size() << " lines rejected (first: line "
                  << stats.rejects.front().line_number << ", "
                  << stats.rejects.front().reason << ")\n";
    }
    return 0;
}

int cmd_index(const Args& args) {
    auto config = effective_config(args);
    auto store = require_store(config);
    auto backends = make_backends(config, &store.dictionary());
    const std::string index_dir = args.out.value_or(config.index_dir);

    std::vector<std::string> ids;
    std::vector<std::string> texts;
    for (const auto& chunk : store.chunks()) {
        ids.push_back(chunk.chunk_id);
        texts.push_back(render_passage(chunk));
    }
    if (ids.empty()) throw ValidationError("corpus has no chunks to index");

    auto vectors = embed_batch(*backends.embedder, texts);
    auto index = build_index(ids, vectors, config.index_kind, config.hnsw);
    index->save(index_dir);

    std::cout << "indexed " << index->count() << " chunks (dim " << index->dim() << ", "
              << to_string(index->kind()) << ") -> " << index_dir << "\n";
    return 0;
}

int cmd_search(const Args& args) {
    auto config = effective_config(args);
    auto store = require_store(config);
    auto index = require_index(config);
    auto backends = make_backends(config, &store.dictionary());

    auto results = retrieve_passages(args.query, config.k, store, *index, *backends.embedder,
                                     config.query_prefix);
    for (const auto& result : results) {
        auto chunk = store.find_chunk(result.chunk_id);
        char line[64];
        std::snprintf(line, sizeof(line), "%2d  %.6f  ", result.rank, result.score);
        std::cout << line << result.chunk_id << "  "
                  << (chunk ? chunk->title : std::string("?")) << "\n";
    }
    return 0;
}

int cmd_build_dataset(const Args& args) {
    auto config = effective_config(args);
    auto store = require_store(config);
    auto index = require_index(config);
    auto backends = make_backends(config, &store.dictionary());
    auto examples = require_examples(config, "all");
    const std::string dataset_dir = args.out.value_or(config.dataset_dir);

    DatasetBuildInputs in;
    in.store = &store;
    in.index = index.get();
    in.embedder = backends.embedder.get();
    in.synthesizer = backends.synthesizer.get();
    in.ner = backends.ner.get();
    in.recognizer = config.recognizer;
    in.k = config.k;
    in.query_prefix = config.query_prefix;
    in.decode = to_request(config.compressor_decode, "");

    auto result = build_dataset(examples, in);
    auto stats = emit_dataset(result.records, result.decisions, dataset_dir);

    print_filter_table(filter_stats_to_json(stats), std::cout);
    if (!result.flagged.empty()) {
        std::cout << result.flagged.size() << " examples flagged (see filter reason `other`)\n";
    }
    std::cout << result.records.size() << " records -> " << dataset_dir << "/dataset.jsonl\n";
    return 0;
}

int cmd_export_training(const Args& args) {
    auto config = effective_config(args);
    const fs::path dataset_dir = config.dataset_dir;
    const fs::path out_dir = args.out.value_or(config.dataset_dir);
    const auto dataset_file = dataset_dir / "dataset.jsonl";
    if (!fs::exists(dataset_file)) {
        throw ValidationError("no dataset at " + dataset_file.string() +
                              "; run `kcomp build-dataset` first");
    }

    auto records = load_dataset_jsonl(dataset_file);
    WhitespaceTokenizer tokenizer;
    Vocabulary vocab;
    std::map<Split, std::string> bodies;
    std::map<Split, std::size_t> counts;
    for (const auto& record : records) {
        if (record.split == Split::test) continue;
        std::vector<EntityDescription> entries;
        for (const auto& entity : record.entities) {
            entries.push_back({entity.surface, entity.description});
        }
        auto tmpl = make_template(
            render_compressor_input(record.masked.masked, record.passages), entries,
            record.gold_summary);
        bodies[record.split] +=
            render_training_line(record.qid, tmpl, &tokenizer, &vocab) + "\n";
        ++counts[record.split];
    }

    fs::create_directories(out_dir);
    const std::map<Split, std::string> names = {{Split::train, "train.jsonl"},
                                                {Split::validation, "validation.jsonl"}};
    for (const auto& [split, filename] : names) {
        std::ofstream out(out_dir / filename, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + (out_dir / filename).string());
        out << bodies[split];
        if (!out.flush()) throw IoError("write failed: " + (out_dir / filename).string());
        std::cout << counts[split] << " " << to_string(split) << " sequences -> "
                  << (out_dir / filename).string() << "\n";
    }
    std::ofstream trainer(out_dir / "trainer_template.json",
                          std::ios::binary | std::ios::trunc);
    trainer << training_config_template();
    std::cout << "vocabulary size " << vocab.size() << "; trainer defaults -> "
              << (out_dir / "trainer_template.json").string() << "\n";
    return 0;
}

int cmd_compress(const Args& args) {
    auto config = effective_config(args);
    auto store = require_store(config);
    if (args.dry_run) {
        std::cout << dry_run_pack(config, store, "adhoc", args.question).dump(2) << "\n";
        return 0;
    }
    auto index = require_index(config);
    auto backends = make_backends(config, &store.dictionary());

    auto mentions = recognize_entities(args.question, store.dictionary(), config.recognizer,
                                       backends.ner.get());
    auto masked = mask_question(args.question, mentions);
    auto retrieved = retrieve_passages(args.question, config.k, store, *index,
                                       *backends.embedder, config.query_prefix);
    std::vector<std::string> passages;
    for (auto& p : retrieved) passages.push_back(std::move(p.text));

    auto ctx = compress(*backends.compressor, masked.masked, passages,
                        config.compressor_decode, config.seed);
    json entries = json::array();
    for (const auto& e : ctx.entries) {
        entries.push_back({{"surface", e.surface}, {"description", e.description}});
    }
    std::cout << json{{"question", args.question},
                      {"masked_question", masked.masked},
                      {"entries", entries},
                      {"summary", ctx.summary}}
                     .dump(2)
              << "\n";
    return 0;
}

int cmd_answer(const Args& args) {
    auto config = effective_config(args);
    auto store = require_store(config);
    if (args.dry_run) {
        std::cout << dry_run_pack(config, store, "adhoc", args.question).dump(2) << "\n";
        return 0;
    }
    auto index = require_index(config);
    auto backends = make_backends(config, &store.dictionary());

    PipelineEnv env;
    env.store = &store;
    env.index = index.get();
    env.embedder = backends.embedder.get();
    env.compressor = backends.compressor.get();
    env.reader = backends.reader.get();
    env.ner = backends.ner.get();
    DeterministicClock det_clock;
    WallClock wall_clock;
    env.clock = all_backends_deterministic(env, config.mode)
                    ? static_cast<StageClock*>(&det_clock)
                    : static_cast<StageClock*>(&wall_clock);

    auto trace = run_pipeline("adhoc", args.question, env, pipeline_config(config));
    if (!trace.ok()) throw Error("pipeline failed: " + trace.error);

    if (args.out) {
        RunLock lock(*args.out);
        auto path = write_trace(trace, *args.out);
        std::cerr << "trace -> " << path.string() << "\n";
    }
    std::cout << trace.answer_text << "\n";
    return 0;
}

int cmd_run(const Args& args) {
    auto config = effective_config(args);
    auto store = require_store(config);
    const std::string run_dir = args.out.value_or(config.run_dir);
    auto examples = require_examples(config, args.split);
    if (examples.empty()) throw ValidationError("no questions selected");

    RunLock lock(run_dir);

    if (args.dry_run) {
        fs::create_directories(fs::path(run_dir) / "dry_run");
        for (const auto& ex : examples) {
            auto pack = dry_run_pack(config, store, ex.qid, ex.question);
            std::ofstream out(fs::path(run_dir) / "dry_run" /
                                  (sanitize_for_filename(ex.qid) + ".json"),
                              std::ios::binary | std::ios::trunc);
            out << pack.dump(2) << "\n";
        }
        std::cout << "rendered " << examples.size() << " prompt packs (dry run, no backend "
                  << "calls) -> " << run_dir << "/dry_run\n";
        return 0;
    }

    auto index = require_index(config);
    auto backends = make_backends(config, &store.dictionary());

    PipelineEnv env;
    env.store = &store;
    env.index = index.get();
    env.embedder = backends.embedder.get();
    env.compressor = backends.compressor.get();
    env.reader = backends.reader.get();
    env.ner = backends.ner.get();
    const bool deterministic = all_backends_deterministic(env, config.mode);

    const auto pc = pipeline_config(config);
    std::size_t ok = 0;
    std::size_t failed = 0;
    std::vector<std::string> qids;
    for (const auto& ex : examples) {
        // A fresh clock per question keeps every trace independent of batch
        // order: identical configs give identical traces question by question.
        DeterministicClock det_clock;
        WallClock wall_clock;
        env.clock = deterministic ? static_cast<StageClock*>(&det_clock)
                                  : static_cast<StageClock*>(&wall_clock);
        auto trace = run_pipeline(ex.qid, ex.question, env, pc);
        write_trace(trace, run_dir);
        qids.push_back(ex.qid);
        if (trace.ok()) {
            ++ok;
        } else {
            ++failed;
            std::cerr << "warning: " << ex.qid << " failed: " << trace.error << "\n";
        }
    }

    RunManifest manifest;
    manifest.mode = to_string(config.mode);
    manifest.k = config.k;
    manifest.seed = config.seed;
    manifest.tokenizer_name = WhitespaceTokenizer().name();
    manifest.deterministic_clock = deterministic;
    std::sort(qids.begin(), qids.end());
    manifest.qids = qids;
    manifest.backends["embedder"] = backends.embedder->describe();
    manifest.backends["reader"] = backends.reader->describe();
    if (config.mode == PipelineMode::kcomp || config.mode == PipelineMode::summary_only) {
        manifest.backends["compressor"] = backends.compressor->describe();
    }
    if (backends.ner) manifest.backends["ner"] = backends.ner->describe();
    manifest.config_text = config.raw_text;
    write_run_manifest(manifest, run_dir);

    std::cout << ok << " ok, " << failed << " failed -> " << run_dir << "\n";
    return 0;
}

int cmd_eval_rerank(const Args& args) {
    auto config = effective_config(args);
    auto store = require_store(config);
    auto index = require_index(config);
    auto backends = make_backends(config, &store.dictionary());
    auto examples = require_examples(config, args.split);
    if (examples.empty()) throw ValidationError("no questions selected");
    const std::string out_dir = args.out.value_or(config.run_dir);

    RerankInputs in;
    in.store = &store;
    in.index = index.get();
    in.embedder = backends.embedder.get();
    in.compressor = backends.compressor.get();
    in.reranker = backends.reranker.get();
    in.recognizer = config.recognizer;
    in.ner = backends.ner.get();
    in.decode = config.compressor_decode;
    in.query_prefix = config.query_prefix;

    auto report = rerank_recall(examples, in);

    RunLock lock(out_dir);
    report.write(fs::path(out_dir) / "recall_report.json");
    for (int k : report.ks) {
        std::cout << "Recall@" << k << "  generated " << report.recall_generated.at(k)
                  << "  retrieved " << report.recall_retrieved.at(k) << "\n";
    }
    std::cout << report.evaluated << " questions evaluated, " << report.flagged
              << " flagged -> " << out_dir << "/recall_report.json\n";
    return 0;
}

int cmd_eval_speed(const Args& args) {
    auto config = effective_config(args);
    std::vector<fs::path> dirs;
    for (const auto& dir : args.run_dirs) dirs.emplace_back(dir);
    if (dirs.empty()) dirs.emplace_back(config.run_dir);
    const std::string out_dir = args.out.value_or(dirs.front().string());

    auto report = token_accounting(dirs, WhitespaceTokenizer().name());
    fs::create_directories(out_dir);
    report.write(fs::path(out_dir) / "speed_report.json");
    for (const auto& mode : report.modes) {
        char line[200];
        std::snprintf(line, sizeof(line),
                      "%-12s  %6zu q  mean prompt %8.1f tok  compress %9.1f ms  "
                      "infer %9.1f ms  total %9.1f ms\n",
                      mode.mode.c_str(), mode.questions, mode.mean_prompt_tokens,
                      mode.compression_ms, mode.inference_ms, mode.total_ms);
        std::cout << line;
    }
    std::cout << "-> " << out_dir << "/speed_report.json\n";
    return 0;
}

int cmd_eval_judge(const Args& args) {
    auto config = effective_config(args);
    if (args.run_dirs.size() < 2 || args.run_dirs.size() > 4) {
        throw ValidationError("eval-judge needs between 2 and 4 run directories");
    }
    auto store = require_store(config);
    auto backends = make_backends(config, &store.dictionary());
    const std::string out_dir = args.out.value_or(config.run_dir);

    struct RunData {
        std::string system_id;
        fs::path dir;
        RunManifest manifest;
    };
    std::vector<RunData> runs;
    for (const auto& dir : args.run_dirs) {
        RunData data;
        data.dir = dir;
        data.manifest = load_run_manifest(dir);
        data.system_id = data.manifest.mode + ":" + dir;
        runs.push_back(std::move(data));
    }

    // qids every run answered
    std::set<std::string> common(runs.front().manifest.qids.begin(),
                                 runs.front().manifest.qids.end());
    for (std::size_t i = 1; i < runs.size(); ++i) {
        std::set<std::string> next;
        for (const auto& qid : runs[i].manifest.qids) {
            if (common.count(qid) > 0) next.insert(qid);
        }
        common = std::move(next);
    }

    std::vector<JudgeVerdict> verdicts;
    std::map<std::string, std::size_t> wins;
    std::size_t ties = 0;
    std::size_t unparseable = 0;
    std::size_t skipped = 0;
    std::uint64_t question_index = 0;
    for (const auto& qid : common) {
        std::vector<JudgeCandidate> candidates;
        std::string question;
        bool usable = true;
        for (const auto& run : runs) {
            auto trace =
                load_trace(run.dir / "traces" / (sanitize_for_filename(qid) + ".json"));
            if (!trace.ok()) {
                usable = false;
                break;
            }
            question = trace.question;
            std::string summary = trace.summary;
            if (summary.empty()) {
                for (std::size_t i = 0; i < trace.passages.size(); ++i) {
                    if (i > 0) summary += "\n\n";
                    summary += trace.passages[i];
                }
            }
            candidates.push_back({run.system_id, summary});
        }
        if (!usable) {
            ++skipped;
            continue;
        }
        auto verdict = pairwise_judge(*backends.judge, qid, question, candidates,
                                      config.seed + question_index, config.reader_decode);
        ++question_index;
        if (!verdict.parseable) {
            ++unparseable;
        } else if (verdict.tie) {
            ++ties;
        } else {
            ++wins[verdict.chosen_system];
        }
        verdicts.push_back(std::move(verdict));
    }

    RunLock lock(out_dir);
    write_judge_verdicts(verdicts, fs::path(out_dir) / "judge_verdicts.jsonl");
    for (const auto& run : runs) {
        std::cout << run.system_id << ": " << wins[run.system_id] << " wins\n";
    }
    std::cout << ties << " ties, " << unparseable << " unparseable, " << skipped
              << " skipped -> " << out_dir << "/judge_verdicts.jsonl\n";
    return 0;
}

int cmd_stats(const Args& args) {
    auto config = effective_config(args);
    if (!args.decisions_file.empty()) {
        std::ifstream in(args.decisions_file);
        if (!in) throw ValidationError("cannot open decisions file: " + args.decisions_file);
        std::vector<std::pair<Split, FilterDecision>> decisions;
        std::string line;
        while (std::getline(in, line)) {
            if (trim_view(line).empty()) continue;
            auto rec = json::parse(line, nullptr, false);
            if (rec.is_discarded()) {
                throw ValidationError("invalid JSON in " + args.decisions_file);
            }
            FilterDecision decision;
            decision.keep = rec.at("keep").get<bool>();
            decision.reason = decision.keep
                                  ? FilterReason::kept
                                  : filter_reason_from_string(
                                        rec.value("reason", std::string("other")));
            decisions.emplace_back(split_from_string(rec.at("split").get<std::string>()),
                                   decision);
        }
        auto stats = collect_filter_stats(decisions);
        const std::string out_dir = args.out.value_or(config.dataset_dir);
        fs::create_directories(out_dir);
        stats.write(fs::path(out_dir) / "filter_stats.json");
        print_filter_table(filter_stats_to_json(stats), std::cout);
        return 0;
    }

    const auto path = fs::path(args.out.value_or(config.dataset_dir)) / "filter_stats.json";
    if (!fs::exists(path)) {
        throw ValidationError("no filter stats at " + path.string() +
                              "; run `kcomp build-dataset` first or pass --decisions");
    }
    std::ifstream in(path);
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw ValidationError("invalid JSON: " + path.string());
    print_filter_table(doc, std::cout);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"knowledge-injected compression for retrieval QA"};
    app.require_subcommand(1);
    app.fallthrough();

    Args args;
    app.add_option("-c,--config", args.config_path, "config file (INI-style)");
    app.add_option("--mode", args.mode, "kcomp|top1|topk|summary_only");
    app.add_option("--k", args.k, "passages retrieved per question");
    app.add_option("--seed", args.seed, "global seed");
    app.add_flag("--dry-run", args.dry_run, "render prompts without any backend call");
    app.add_option("--out", args.out, "output directory override");
    app.add_option("--corpus", args.corpus, "corpus JSONL (overrides [paths] corpus)");
    app.add_option("--qa", args.qa, "QA JSONL (overrides [paths] qa)");

    auto* ingest = app.add_subcommand("ingest", "ingest a corpus and seal the store");
    auto* index = app.add_subcommand("index", "embed chunks and build the vector index");
    auto* search = app.add_subcommand("search", "query the index");
    search->add_option("query", args.query, "query text")->required();
    auto* build_dataset =
        app.add_subcommand("build-dataset", "filter, retrieve and synthesize the dataset");
    auto* export_training =
        app.add_subcommand("export-training", "emit training sequences with loss masks");
    auto* compress_cmd = app.add_subcommand("compress", "compress one question's passages");
    compress_cmd->add_option("--question", args.question, "question text")->required();
    auto* answer_cmd = app.add_subcommand("answer", "answer one question end to end");
    answer_cmd->add_option("--question", args.question, "question text")->required();
    auto* run = app.add_subcommand("run", "run the pipeline over the QA file");
    run->add_option("--split", args.split, "all|train|validation|test");
    auto* eval_rerank =
        app.add_subcommand("eval-rerank", "reranker preference protocol (recall@K)");
    eval_rerank->add_option("--split", args.split, "all|train|validation|test");
    auto* eval_speed = app.add_subcommand("eval-speed", "token/time accounting over runs");
    eval_speed->add_option("dirs", args.run_dirs, "run directories");
    auto* eval_judge = app.add_subcommand("eval-judge", "pairwise judge over 2-4 runs");
    eval_judge->add_option("dirs", args.run_dirs, "run directories (2-4)");
    auto* stats = app.add_subcommand("stats", "print dataset filter statistics");
    stats->add_option("--decisions", args.decisions_file,
                      "JSONL decision stream {split, keep, reason}");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (ingest->parsed()) return cmd_ingest(args);
        if (index->parsed()) return cmd_index(args);
        if (search->parsed()) return cmd_search(args);
        if (build_dataset->parsed()) return cmd_build_dataset(args);
        if (export_training->parsed()) return cmd_export_training(args);
        if (compress_cmd->parsed()) return cmd_compress(args);
        if (answer_cmd->parsed()) return cmd_answer(args);
        if (run->parsed()) return cmd_run(args);
        if (eval_rerank->parsed()) return cmd_eval_rerank(args);
        if (eval_speed->parsed()) return cmd_eval_speed(args);
        if (eval_judge->parsed()) return cmd_eval_judge(args);
        if (stats->parsed()) return cmd_stats(args);
        throw ValidationError("no subcommand given");
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
