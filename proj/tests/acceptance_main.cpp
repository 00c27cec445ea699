// Acceptance gate for the pipeline: one check per shipping criterion, one
// PASS/FAIL line each, nonzero exit when anything fails. Runs fully offline
// against the stub backends.

#include <sys/wait.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kcomp/config.hpp"
#include "kcomp/corpus_store.hpp"
#include "kcomp/dataset_builder.hpp"
#include "kcomp/entity_masking.hpp"
#include "kcomp/errors.hpp"
#include "kcomp/evaluation.hpp"
#include "kcomp/inference_pipeline.hpp"
#include "kcomp/retrieval.hpp"
#include "kcomp/sequence_codec.hpp"
#include "kcomp/stubs.hpp"
#include "kcomp/tokenizer.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace kcomp;
using kcomp::testutil::TempDir;
using kcomp::testutil::read_file;
using kcomp::testutil::write_file;

namespace {

int g_failures = 0;

void report(int number, const std::string& title, bool pass, const std::string& detail) {
    std::printf("%s criterion %d: %s — %s\n", pass ? "PASS" : "FAIL", number, title.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::size_t count_occurrences(const std::string& text, const std::string& needle) {
    std::size_t count = 0;
    for (auto at = text.find(needle); at != std::string::npos;
         at = text.find(needle, at + needle.size())) {
        ++count;
    }
    return count;
}

// ---------------------------------------------------------------------------
// 1. Chain-rule factorization: the joint target segment always decomposes
//    into the entity/description part plus the summary-given-it part, and a
//    corrupted segment boundary never goes unnoticed.

LossMask fuzzed_mask(std::mt19937_64& rng, Vocabulary& vocab) {
    WhitespaceTokenizer tok;
    std::vector<EntityDescription> entries;
    auto n_entries = 1 + rng() % 3;
    for (std::uint64_t e = 0; e < n_entries; ++e) {
        entries.push_back({"Ent" + std::to_string(rng() % 40),
                           "Describes item " + std::to_string(rng() % 500) + " fully."});
    }
    std::string summary = "Summary mentions token " + std::to_string(rng() % 300) +
                          " and token " + std::to_string(rng() % 300) + ".";
    std::string input = "Question about <ent> variant " + std::to_string(rng() % 200) + "?";
    return build_loss_mask(make_template(input, entries, summary), tok, vocab);
}

void criterion_factorization() {
    const auto start = std::chrono::steady_clock::now();
    std::mt19937_64 rng(11);

    bool all_pass = true;
    double worst = 0.0;
    for (int round = 0; round < 1000; ++round) {
        Vocabulary vocab;
        auto mask = fuzzed_mask(rng, vocab);
        auto oracle = TableOracle::random(vocab.size(), rng());
        auto rep = check_factorization(oracle, mask, 1e-9);
        all_pass = all_pass && rep.pass;
        worst = std::max(worst, std::abs(rep.residual));
    }

    int detected = 0;
    const int mutations = 200;
    for (int round = 0; round < mutations; ++round) {
        Vocabulary vocab;
        auto mask = fuzzed_mask(rng, vocab);
        auto oracle = TableOracle::random(vocab.size(), rng());
        // Slide one side of the ED/S border without moving the other; the
        // partition no longer covers the joint range exactly once.
        auto broken = mask;
        const long lo = static_cast<long>(mask.segments.ed_begin);
        const long hi = static_cast<long>(mask.segments.s_end);
        long moved = static_cast<long>(mask.segments.ed_end);
        while (moved == static_cast<long>(mask.segments.ed_end)) {
            moved = lo + static_cast<long>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
        }
        broken.segments.ed_end = static_cast<std::size_t>(moved);
        if (!check_factorization(oracle, broken, 1e-9).pass) ++detected;
    }

    const double elapsed = seconds_since(start);
    std::ostringstream detail;
    detail << "1000 fuzzed sequences, worst residual " << worst << "; " << detected << "/"
           << mutations << " boundary corruptions detected; " << elapsed << "s";
    report(1, "chain-rule factorization",
           all_pass && worst <= 1e-9 && detected >= 198 && elapsed < 10.0, detail.str());
}

// ---------------------------------------------------------------------------
// 2. Masking round-trip: unmask(mask(q)) == q, the placeholder count equals
//    the mention count, and the canonical two-entity question masks exactly.

void criterion_masking() {
    KnowledgeDictionary dict;
    dict.insert({"Symptom", "A symptom is a sign of disease.", "d1"});
    dict.insert({"Glaucoma", "Glaucoma damages the optic nerve.", "d2"});

    const std::string canonical = "What are the symptoms of glaucoma?";
    auto mentions = recognize_entities(canonical, dict);
    auto masked = mask_question(canonical, mentions);
    bool pass = masked.masked == "What are the <ent> of <ent>?" &&
                count_occurrences(masked.masked, "<ent>") == mentions.size() &&
                unmask(masked) == canonical;

    // Fuzz: plant 1-3 dictionary surfaces among junk filler words.
    std::vector<std::string> surfaces;
    KnowledgeDictionary fuzz_dict;
    for (int i = 0; i < 30; ++i) {
        auto surface = "Condition" + std::to_string(i);
        surfaces.push_back(surface);
        fuzz_dict.insert({surface, surface + " is a condition.", "s" + std::to_string(i)});
    }
    std::mt19937_64 rng(23);
    std::size_t rounds_ok = 0;
    const int rounds = 1000;
    for (int round = 0; round < rounds; ++round) {
        const std::size_t planted = 1 + rng() % 3;
        std::vector<std::string> words;
        for (std::size_t i = 0; i < 4 + rng() % 5; ++i) {
            words.push_back("w" + std::to_string(rng() % 100000) + "x");
        }
        for (std::size_t i = 0; i < planted; ++i) {
            auto word = surfaces[rng() % surfaces.size()];
            if (rng() % 2 == 0) {
                for (auto& c : word) c = static_cast<char>(std::tolower(c));
            }
            words.insert(words.begin() + static_cast<long>(rng() % (words.size() + 1)),
                         word);
        }
        std::string question;
        for (std::size_t i = 0; i < words.size(); ++i) {
            if (i > 0) question += " ";
            question += words[i];
        }
        question += "?";

        auto fuzz_mentions = recognize_entities(question, fuzz_dict);
        auto fuzz_masked = mask_question(question, fuzz_mentions);
        const bool ok = unmask(fuzz_masked) == question &&
                        count_occurrences(fuzz_masked.masked, "<ent>") ==
                            fuzz_mentions.size() &&
                        fuzz_mentions.size() == planted;
        rounds_ok += ok ? 1 : 0;
    }
    pass = pass && rounds_ok == rounds;

    std::ostringstream detail;
    detail << "canonical question -> \"What are the <ent> of <ent>?\"; " << rounds_ok << "/"
           << rounds << " fuzzed round-trips exact";
    report(2, "entity masking round-trip", pass, detail.str());
}

// ---------------------------------------------------------------------------
// 3. Retrieval correctness: the exact index matches a brute-force oracle
//    bit for bit (ties included); the graph index reaches recall@10 >= 0.95.

std::vector<RetrievalResult> brute_force(const std::vector<std::string>& ids,
                                         const std::vector<std::vector<float>>& vectors,
                                         const std::vector<float>& query, std::size_t k) {
    std::vector<RetrievalResult> all;
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        double acc = 0.0;
        for (std::size_t d = 0; d < query.size(); ++d) {
            acc += static_cast<double>(query[d]) * static_cast<double>(vectors[i][d]);
        }
        all.push_back({ids[i], acc, 0});
    }
    std::sort(all.begin(), all.end(), [](const RetrievalResult& a, const RetrievalResult& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.chunk_id < b.chunk_id;
    });
    all.resize(std::min(k, all.size()));
    for (std::size_t i = 0; i < all.size(); ++i) all[i].rank = static_cast<int>(i) + 1;
    return all;
}

std::vector<float> random_unit_vector(std::mt19937_64& rng, std::size_t dim) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> v(dim);
    double norm = 0.0;
    for (auto& x : v) {
        x = normal(rng);
        norm += x * x;
    }
    norm = std::sqrt(norm);
    std::vector<float> out(dim);
    for (std::size_t d = 0; d < dim; ++d) out[d] = static_cast<float>(v[d] / norm);
    return out;
}

void criterion_knn() {
    const auto start = std::chrono::steady_clock::now();
    const std::size_t n = 10000, dim = 128;
    std::mt19937_64 rng(5);

    std::vector<std::string> ids;
    std::vector<std::vector<float>> vectors;
    for (std::size_t i = 0; i < n; ++i) {
        char id[16];
        std::snprintf(id, sizeof(id), "c%05zu", i);
        ids.emplace_back(id);
        vectors.push_back(random_unit_vector(rng, dim));
    }
    // Duplicate vectors under different ids force exact score ties.
    for (std::size_t j = 0; j < 20; ++j) vectors[5000 + j] = vectors[j];

    auto exact = build_index(ids, vectors, IndexKind::exact_flat);

    std::vector<std::vector<float>> queries;
    for (int q = 0; q < 20; ++q) queries.push_back(random_unit_vector(rng, dim));
    for (std::size_t j = 0; j < 20; ++j) queries.push_back(vectors[j]);  // tie targets

    bool exact_matches = true;
    for (std::size_t k : {std::size_t{1}, std::size_t{5}, std::size_t{10}, std::size_t{32}}) {
        for (const auto& query : queries) {
            auto got = exact->search(query, k);
            auto want = brute_force(ids, vectors, query, k);
            if (got.size() != want.size()) {
                exact_matches = false;
                continue;
            }
            for (std::size_t i = 0; i < got.size(); ++i) {
                exact_matches = exact_matches && got[i].chunk_id == want[i].chunk_id &&
                                got[i].score == want[i].score;  // bitwise
            }
        }
    }

    auto graph = build_index(ids, vectors, IndexKind::approximate_graph);
    double recall_sum = 0.0;
    const int recall_queries = 50;
    for (int q = 0; q < recall_queries; ++q) {
        auto query = random_unit_vector(rng, dim);
        auto truth = exact->search(query, 10);
        auto approx = graph->search(query, 10);
        std::set<std::string> truth_ids;
        for (const auto& r : truth) truth_ids.insert(r.chunk_id);
        std::size_t hits = 0;
        for (const auto& r : approx) hits += truth_ids.count(r.chunk_id);
        recall_sum += static_cast<double>(hits) / 10.0;
    }
    const double recall = recall_sum / recall_queries;

    const double elapsed = seconds_since(start);
    std::ostringstream detail;
    detail << "exact == oracle on 10000x128 for k in {1,5,10,32} (ties included): "
           << (exact_matches ? "yes" : "NO") << "; graph recall@10 " << recall << "; "
           << elapsed << "s";
    report(3, "nearest-neighbour retrieval", exact_matches && recall >= 0.95 && elapsed < 60.0,
           detail.str());
}

// ---------------------------------------------------------------------------
// 4. Filter statistics: the truncating percentage reproduces the reference
//    stream shapes exactly, and counts are conserved on fuzzed streams.

std::vector<std::pair<Split, FilterDecision>> make_stream(Split split, std::size_t original,
                                                          std::size_t kept) {
    std::vector<std::pair<Split, FilterDecision>> decisions;
    for (std::size_t i = 0; i < original; ++i) {
        FilterDecision d;
        d.keep = i < kept;
        d.reason = d.keep ? FilterReason::kept
                          : (i % 2 == 0 ? FilterReason::no_entity
                                        : FilterReason::no_description);
        decisions.push_back({split, d});
    }
    return decisions;
}

void criterion_filter_stats() {
    std::vector<std::pair<Split, FilterDecision>> decisions;
    for (const auto& [split, original, kept] :
         {std::tuple{Split::train, 13127u, 9064u}, std::tuple{Split::validation, 1640u, 1554u},
          std::tuple{Split::test, 707u, 647u}}) {
        auto stream = make_stream(split, original, kept);
        decisions.insert(decisions.end(), stream.begin(), stream.end());
    }
    auto stats = collect_filter_stats(decisions);
    const bool fixtures_exact =
        stats.per_split.at("train").percent_filtered() == 30.9 &&
        stats.per_split.at("validation").percent_filtered() == 5.2 &&
        stats.per_split.at("test").percent_filtered() == 8.4 &&
        stats.per_split.at("train").kept == 9064 &&
        stats.per_split.at("train").dropped() == 13127 - 9064;

    std::mt19937_64 rng(31);
    bool conserved = true;
    for (int round = 0; round < 100; ++round) {
        std::vector<std::pair<Split, FilterDecision>> fuzz;
        for (Split split : {Split::train, Split::validation, Split::test}) {
            std::size_t original = 1 + rng() % 500;
            std::size_t kept = rng() % (original + 1);
            auto stream = make_stream(split, original, kept);
            fuzz.insert(fuzz.end(), stream.begin(), stream.end());
        }
        auto fuzz_stats = collect_filter_stats(fuzz);
        for (const auto& [name, counts] : fuzz_stats.per_split) {
            std::size_t reason_total = 0;
            for (const auto& [reason, count] : counts.drop_reasons) reason_total += count;
            conserved = conserved && counts.kept + reason_total == counts.original &&
                        counts.dropped() == reason_total;
        }
        auto totals = fuzz_stats.totals();
        conserved = conserved && totals.kept + totals.dropped() == totals.original;
    }

    std::ostringstream detail;
    detail << "streams 13127->9064, 1640->1554, 707->647 give 30.9/5.2/8.4 filtered%: "
           << (fixtures_exact ? "yes" : "NO") << "; conservation held on 100 fuzzed streams: "
           << (conserved ? "yes" : "NO");
    report(4, "filter statistics", fixtures_exact && conserved, detail.str());
}

// ---------------------------------------------------------------------------
// 5. Rerank recall protocol: a planted reranker that prefers a generated
//    candidate on exactly 77 of 100 questions must yield Recall@1 = 77%.

class PlantedReranker final : public RerankBackend {
public:
    explicit PlantedReranker(std::size_t planted) : planted_(planted) {}

    std::vector<double> rerank(const std::string& query,
                               const std::vector<std::string>& candidates) override {
        std::size_t question = 0;
        auto at = query.find("Topic");
        if (at != std::string::npos) {
            question =
                static_cast<std::size_t>(std::strtoul(query.c_str() + at + 5, nullptr, 10));
        }
        const bool plant_generated = question < planted_;
        std::vector<double> scores;
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            const bool generated = candidates[i].find("[sample s") != std::string::npos;
            double score;
            if (generated) {
                const bool winner = candidates[i].find("[sample s0-") != std::string::npos;
                score = plant_generated && winner ? 100.0 : 10.0 + 0.001 * double(i);
            } else {
                score = plant_generated ? 50.0 : 90.0 - 0.001 * double(i);
            }
            scores.push_back(score);
        }
        return scores;
    }
    std::string describe() const override { return "planted_reranker"; }
    bool deterministic() const override { return true; }

private:
    std::size_t planted_;
};

struct TopicCorpus {
    TempDir tmp{"acceptance_topics"};
    CorpusStore store;
    HashEmbedder embedder{48, 0};
    std::unique_ptr<VectorIndex> index;

    explicit TopicCorpus(std::size_t docs, const std::string& body_suffix = "") {
        std::string corpus;
        for (std::size_t i = 0; i < docs; ++i) {
            corpus += R"({"id": "d)" + std::to_string(i) + R"(", "title": "Topic)" +
                      std::to_string(i) + R"(", "text": "Topic)" + std::to_string(i) +
                      R"( concerns subject number )" + std::to_string(i) + "." +
                      body_suffix + R"("})" + "\n";
        }
        write_file(tmp / "corpus.jsonl", corpus);
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
};

void criterion_rerank_recall() {
    const std::size_t n_questions = 100, planted = 77;
    TopicCorpus corpus(120);
    ScriptedGenerator compressor({}, GeneratorFallback::compressor_demo);
    PlantedReranker reranker(planted);

    std::vector<QAExample> questions;
    for (std::size_t i = 0; i < n_questions; ++i) {
        questions.push_back({"q" + std::to_string(i),
                             "What does Topic" + std::to_string(i) + " concern?", "a",
                             Split::test, true});
    }

    RerankInputs in;
    in.store = &corpus.store;
    in.index = corpus.index.get();
    in.embedder = &corpus.embedder;
    in.compressor = &compressor;
    in.reranker = &reranker;
    in.ks = {1, 5, 10, 20};
    in.samples = 10;
    in.retrieved_k = 10;

    auto rec = rerank_recall(questions, in);
    bool monotone = true;
    double prev = 0.0;
    for (int k : rec.ks) {
        monotone = monotone && rec.recall_generated.at(k) >= prev;
        prev = rec.recall_generated.at(k);
    }
    const bool pass = rec.evaluated == n_questions && rec.flagged == 0 &&
                      rec.recall_generated.at(1) == 77.0 / 100.0 && monotone &&
                      rec.recall_generated.at(20) == 1.0 && rec.recall_retrieved.at(20) == 1.0;

    std::ostringstream detail;
    detail << "recall@1 generated = " << rec.recall_generated.at(1) * 100.0
           << "% with 77/100 planted; monotone: " << (monotone ? "yes" : "NO")
           << "; recall@20 = " << rec.recall_generated.at(20) * 100.0 << "%";
    report(5, "rerank recall protocol", pass, detail.str());
}

// ---------------------------------------------------------------------------
// 6. Token accounting: with uniform T-token passages, stuffing k=5 passages
//    costs exactly 4T more prompt tokens than k=1; compression stays cheaper;
//    total time splits into compression + inference.

fs::path accounting_run(TopicCorpus& corpus, const TempDir& tmp, const std::string& name,
                        PipelineMode mode, std::size_t k, std::size_t questions) {
    ScriptedGenerator compressor({}, GeneratorFallback::compressor_demo);
    ScriptedGenerator reader({}, GeneratorFallback::echo_tail);
    PipelineEnv env;
    env.store = &corpus.store;
    env.index = corpus.index.get();
    env.embedder = &corpus.embedder;
    env.compressor = &compressor;
    env.reader = &reader;

    PipelineConfig config;
    config.mode = mode;
    config.k = k;

    RunManifest manifest;
    manifest.mode = to_string(mode);
    manifest.k = k;
    manifest.tokenizer_name = "whitespace";
    manifest.deterministic_clock = true;

    auto dir = tmp / name;
    for (std::size_t i = 0; i < questions; ++i) {
        DeterministicClock clock;
        env.clock = &clock;
        auto qid = "q" + std::to_string(i);
        auto trace = run_pipeline(qid, "What does Topic" + std::to_string(i) + " concern?",
                                  env, config);
        if (!trace.ok()) throw ValidationError("accounting run failed: " + trace.error);
        write_trace(trace, dir);
        manifest.qids.push_back(qid);
    }
    write_run_manifest(manifest, dir);
    return dir;
}

void criterion_token_accounting() {
    // Pad every document so each rendered passage is the same token count T.
    std::string suffix = " Padding words fill the body:";
    for (int w = 0; w < 17; ++w) suffix += " pad" + std::to_string(w);
    suffix += " done.";
    TopicCorpus corpus(40, suffix);

    WhitespaceTokenizer tok;
    std::size_t T = 0;
    bool uniform = true;
    for (const auto& chunk : corpus.store.chunks()) {
        auto tokens = tok.count_tokens(render_passage(chunk));
        if (T == 0) T = tokens;
        uniform = uniform && tokens == T;
    }

    TempDir tmp("acceptance_speed");
    auto top1_dir = accounting_run(corpus, tmp, "top1", PipelineMode::top1, 1, 20);
    auto topk_dir = accounting_run(corpus, tmp, "topk", PipelineMode::topk, 5, 20);
    auto kcomp_dir = accounting_run(corpus, tmp, "kcomp", PipelineMode::kcomp, 5, 20);

    auto speed = token_accounting({top1_dir, topk_dir, kcomp_dir}, "whitespace");
    std::map<std::string, const ModeSpeed*> by_mode;
    for (const auto& mode : speed.modes) by_mode[mode.mode] = &mode;

    const double top1_mean = by_mode.at("top1")->mean_prompt_tokens;
    const double topk_mean = by_mode.at("topk")->mean_prompt_tokens;
    const double kcomp_mean = by_mode.at("kcomp")->mean_prompt_tokens;
    const double predicted = top1_mean + 4.0 * static_cast<double>(T);
    const bool scaling = std::abs(topk_mean - predicted) <= 0.02 * predicted;
    const bool compressed_shorter = kcomp_mean < topk_mean;

    bool additive = true;
    for (const auto& mode : speed.modes) {
        additive = additive &&
                   std::abs(mode.total_ms - (mode.compression_ms + mode.inference_ms)) <= 1e-9;
    }

    std::ostringstream detail;
    detail << "T=" << T << " uniform: " << (uniform ? "yes" : "NO") << "; top1 mean "
           << top1_mean << " + 4T = " << predicted << " vs topk mean " << topk_mean
           << " (within 2%): " << (scaling ? "yes" : "NO") << "; compressed mean "
           << kcomp_mean << " < topk: " << (compressed_shorter ? "yes" : "NO")
           << "; time additivity: " << (additive ? "yes" : "NO");
    report(6, "token accounting", uniform && scaling && compressed_shorter && additive,
           detail.str());
}

// ---------------------------------------------------------------------------
// 7. Prompt fidelity: fixed instruction lines are rendered verbatim, the
//    question never leaks into synthesis prompts, readers stay zero-shot
//    with the question last.

class RecordingSynthesizer final : public GenerationBackend {
public:
    GenerateResponse generate(const GenerateRequest& request) override {
        prompts.push_back(request.prompt);
        return inner_.generate(request);
    }
    std::string describe() const override { return "recording-synthesizer"; }
    bool deterministic() const override { return true; }

    std::vector<std::string> prompts;

private:
    ScriptedGenerator inner_{{}, GeneratorFallback::first_sentence};
};

void criterion_prompt_fidelity() {
    const std::string instruction =
        "Please extract the content about the entity in fewer than four sentences.";
    const std::string judge_instruction = "Do not offer any opinions other than the choice.";

    std::mt19937_64 rng(47);
    bool synthesis_ok = true;
    for (int round = 0; round < 200; ++round) {
        std::string question = "zzq" + std::to_string(rng()) + " asks about vvk" +
                               std::to_string(rng()) + "?";
        std::vector<std::string> passages = {
            "Gout\nGout is a painful arthritis. It flares at night.",
            "Uric acid\nUric acid crystallizes in joints."};
        auto prompt = render_synthesis_prompt(passages, {"gout", "uric acid"});
        synthesis_ok = synthesis_ok && prompt.rfind(instruction, 0) == 0 &&
                       prompt.find(question) == std::string::npos;
    }

    // End to end: the prompts a synthesizer actually receives during dataset
    // construction never contain the question either.
    TempDir tmp("acceptance_prompts");
    write_file(tmp / "corpus.jsonl",
               R"({"id": "gout", "title": "Gout", "text": "Gout is a painful arthritis. Uric acid builds up."})" "\n");
    CorpusStore store;
    store.ingest_file(tmp / "corpus.jsonl");
    store.build_knowledge_dictionary();
    std::vector<std::string> ids;
    std::vector<std::string> texts;
    for (const auto& chunk : store.chunks()) {
        ids.push_back(chunk.chunk_id);
        texts.push_back(render_passage(chunk));
    }
    HashEmbedder embedder(32, 0);
    auto index = build_index(ids, embed_batch(embedder, texts), IndexKind::exact_flat);

    RecordingSynthesizer synthesizer;
    std::vector<QAExample> examples;
    for (int i = 0; i < 20; ++i) {
        examples.push_back({"q" + std::to_string(i),
                            "jj" + std::to_string(rng()) + " does gout flare kk" +
                                std::to_string(rng()) + "?",
                            "a", Split::train, true});
    }
    DatasetBuildInputs in;
    in.store = &store;
    in.index = index.get();
    in.embedder = &embedder;
    in.synthesizer = &synthesizer;
    in.k = 1;
    auto result = build_dataset(examples, in);
    bool capture_ok = result.records.size() == examples.size() &&
                      synthesizer.prompts.size() == examples.size();
    for (std::size_t i = 0; i < synthesizer.prompts.size(); ++i) {
        capture_ok = capture_ok && synthesizer.prompts[i].rfind(instruction, 0) == 0;
        for (const auto& example : examples) {
            capture_ok = capture_ok &&
                         synthesizer.prompts[i].find(example.question) == std::string::npos;
        }
    }

    const bool judge_ok = render_judge_prompt({"Summary A.", "Summary B."}, "Q?")
                              .find(judge_instruction) != std::string::npos;

    CompressedContext ctx;
    ctx.entries = {{"Gout", "Gout is a painful arthritis."}};
    ctx.summary = "Gout flares at night.";
    const std::string question = "Does gout flare at night?";
    bool reader_ok = true;
    for (const auto& prompt :
         {render_reader_prompt(ctx, question),
          render_passages_prompt({"Gout\nGout is a painful arthritis."}, question)}) {
        auto text = prompt.text();
        const std::string tail = "### Questions\n" + question;
        reader_ok = reader_ok && prompt.zero_shot &&
                    text.size() >= tail.size() &&
                    text.compare(text.size() - tail.size(), tail.size(), tail) == 0 &&
                    count_occurrences(text, "### Questions") == 1;
    }

    std::ostringstream detail;
    detail << "synthesis instruction verbatim and question excluded (200 rendered + "
           << synthesizer.prompts.size() << " captured): "
           << (synthesis_ok && capture_ok ? "yes" : "NO")
           << "; judge instruction verbatim: " << (judge_ok ? "yes" : "NO")
           << "; reader prompts zero-shot, question last: " << (reader_ok ? "yes" : "NO");
    report(7, "prompt fidelity", synthesis_ok && capture_ok && judge_ok && reader_ok,
           detail.str());
}

// ---------------------------------------------------------------------------
// 8. Determinism: two identical CLI runs produce byte-identical run
//    directories and reports; the judge's shuffled presentation maps back to
//    the correct system for every seed.

int run_command(const std::string& command) {
    int status = std::system(command.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

bool dirs_byte_identical(const fs::path& a, const fs::path& b, std::string& mismatch) {
    std::map<fs::path, fs::path> left;
    for (const auto& entry : fs::recursive_directory_iterator(a)) {
        if (entry.is_regular_file()) left[fs::relative(entry.path(), a)] = entry.path();
    }
    std::size_t right_count = 0;
    for (const auto& entry : fs::recursive_directory_iterator(b)) {
        if (!entry.is_regular_file()) continue;
        ++right_count;
        auto rel = fs::relative(entry.path(), b);
        auto it = left.find(rel);
        if (it == left.end()) {
            mismatch = "only in second: " + rel.string();
            return false;
        }
        if (read_file(it->second) != read_file(entry.path())) {
            mismatch = "differs: " + rel.string();
            return false;
        }
    }
    if (right_count != left.size()) {
        mismatch = "file counts differ";
        return false;
    }
    return true;
}

void criterion_determinism() {
    TempDir tmp("acceptance_determinism");
    write_file(tmp / "corpus.jsonl",
               R"({"id": "gout", "title": "Gout", "text": "Gout is a painful arthritis. Uric acid builds up."})" "\n"
               R"({"id": "flu", "title": "Influenza", "text": "Influenza is a viral infection. It spreads seasonally."})" "\n"
               R"({"id": "anemia", "title": "Anemia", "text": "Anemia is a shortage of red cells. Iron helps."})" "\n");
    write_file(tmp / "qa.jsonl",
               R"({"qid": "q1", "question": "What causes gout?", "gold_answer": "Uric acid."})" "\n"
               R"({"qid": "q2", "question": "How does influenza spread?", "gold_answer": "Seasonally."})" "\n");
    write_file(tmp / "run.ini",
               "[paths]\n"
               "corpus = " + (tmp / "corpus.jsonl").string() + "\n"
               "qa = " + (tmp / "qa.jsonl").string() + "\n"
               "store = " + (tmp / "store").string() + "\n"
               "index = " + (tmp / "index").string() + "\n"
               "[pipeline]\n"
               "mode = kcomp\n"
               "k = 2\n");

    const std::string base = std::string(KCOMP_CLI_PATH) + " -c " +
                             (tmp / "run.ini").string() + " ";
    const std::string quiet = " > /dev/null 2>&1";
    bool cli_ok = run_command(base + "ingest" + quiet) == 0 &&
                  run_command(base + "index" + quiet) == 0;
    cli_ok = cli_ok &&
             run_command(base + "run --out " + (tmp / "run_a").string() + quiet) == 0 &&
             run_command(base + "run --out " + (tmp / "run_b").string() + quiet) == 0;
    cli_ok = cli_ok &&
             run_command(base + "eval-speed " + (tmp / "run_a").string() + " --out " +
                         (tmp / "report_a").string() + quiet) == 0 &&
             run_command(base + "eval-speed " + (tmp / "run_b").string() + " --out " +
                         (tmp / "report_b").string() + quiet) == 0;

    std::string mismatch;
    bool runs_identical = cli_ok && dirs_byte_identical(tmp / "run_a", tmp / "run_b", mismatch);
    const bool reports_identical =
        cli_ok && read_file(tmp / "report_a" / "speed_report.json") ==
                      read_file(tmp / "report_b" / "speed_report.json") &&
        !read_file(tmp / "report_a" / "speed_report.json").empty();

    // Judge round-trip: with the reply pinned to "Summary 1", the winning
    // system must always be whichever one the seeded shuffle presented first.
    std::vector<JudgeCandidate> candidates = {{"system_a", "Summary from A."},
                                              {"system_b", "Summary from B."}};
    ScriptedGenerator judge({}, GeneratorFallback::fixed, "Summary 1");
    std::map<std::string, int> wins;
    bool judge_ok = true;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        auto verdict = pairwise_judge(judge, "q", "Q?", candidates, seed);
        judge_ok = judge_ok && verdict.parseable && verdict.permutation.size() == 2 &&
                   verdict.chosen_system == candidates[verdict.permutation[0]].system_id;
        ++wins[verdict.chosen_system];
    }
    judge_ok = judge_ok && wins["system_a"] > 0 && wins["system_b"] > 0;

    std::ostringstream detail;
    detail << "two runs byte-identical: " << (runs_identical ? "yes" : std::string("NO (") + mismatch + ")")
           << "; reports byte-identical: " << (reports_identical ? "yes" : "NO")
           << "; judge identity recovered for 1000 seeds: " << (judge_ok ? "yes" : "NO");
    report(8, "determinism", runs_identical && reports_identical && judge_ok, detail.str());
}

}  // namespace

int main() {
    try {
        criterion_factorization();
        criterion_masking();
        criterion_knn();
        criterion_filter_stats();
        criterion_rerank_recall();
        criterion_token_accounting();
        criterion_prompt_fidelity();
        criterion_determinism();
    } catch (const std::exception& e) {
        std::printf("FAIL unexpected exception: %s\n", e.what());
        return 99;
    }
    if (g_failures == 0) {
        std::printf("all criteria passed\n");
        return 0;
    }
    std::printf("%d criteria failed\n", g_failures);
    return g_failures;
}
