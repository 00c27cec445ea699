#include "kcomp/dataset_builder.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "io_internal.hpp"
#include "kcomp/errors.hpp"
#include "kcomp/shuffle.hpp"
#include "kcomp/text.hpp"

namespace kcomp {

using nlohmann::json;

std::string to_string(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        case Split::test: return "test";
    }
    throw ValidationError("unknown split value");
}

Split split_from_string(std::string_view name) {
    if (name == "train") return Split::train;
    if (name == "validation" || name == "valid" || name == "dev") return Split::validation;
    if (name == "test") return Split::test;
    throw ValidationError("unknown split name: " + std::string(name));
}

std::string to_string(FilterReason reason) {
    switch (reason) {
        case FilterReason::kept: return "kept";
        case FilterReason::no_entity: return "no_entity";
        case FilterReason::no_description: return "no_description";
        case FilterReason::other: return "other";
    }
    throw ValidationError("unknown filter reason");
}

FilterReason filter_reason_from_string(std::string_view name) {
    if (name == "kept") return FilterReason::kept;
    if (name == "no_entity") return FilterReason::no_entity;
    if (name == "no_description") return FilterReason::no_description;
    if (name == "other") return FilterReason::other;
    throw ValidationError("unknown filter reason: " + std::string(name));
}

std::vector<QAExample> load_qa_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open QA file: " + path.string());

    std::vector<QAExample> examples;
    std::set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim_view(line).empty()) continue;
        json rec = json::parse(line, nullptr, false);
        auto fail = [&](const std::string& what) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + what);
        };
        if (rec.is_discarded() || !rec.is_object()) fail("invalid JSON record");
        for (const char* field : {"qid", "question", "gold_answer"}) {
            if (!rec.contains(field) || !rec[field].is_string()) {
                fail(std::string("missing string field \"") + field + "\"");
            }
        }
        QAExample ex;
        ex.qid = rec["qid"].get<std::string>();
        ex.question = trim(rec["question"].get<std::string>());
        ex.gold_answer = trim(rec["gold_answer"].get<std::string>());
        if (ex.qid.empty()) fail("empty qid");
        if (ex.question.empty()) fail("empty question");
        if (!seen.insert(ex.qid).second) fail("duplicate qid: " + ex.qid);
        if (rec.contains("split")) {
            if (!rec["split"].is_string()) fail("split must be a string");
            ex.split = split_from_string(rec["split"].get<std::string>());
            ex.split_explicit = true;
        }
        examples.push_back(std::move(ex));
    }
    return examples;
}

void assign_splits(std::vector<QAExample>& examples, std::uint64_t seed,
                   double train_frac, double validation_frac) {
    if (train_frac < 0.0 || validation_frac < 0.0 || train_frac + validation_frac > 1.0) {
        throw ConfigError("split fractions must be non-negative and sum to at most 1");
    }
    auto perm = seeded_permutation(examples.size(), seed);
    const auto n = examples.size();
    const auto n_train = static_cast<std::size_t>(static_cast<double>(n) * train_frac);
    const auto n_valid = static_cast<std::size_t>(static_cast<double>(n) * validation_frac);
    for (std::size_t i = 0; i < n; ++i) {
        Split split = Split::test;
        if (i < n_train) {
            split = Split::train;
        } else if (i < n_train + n_valid) {
            split = Split::validation;
        }
        examples[perm[i]].split = split;
    }
}

FilterDecision filter_example(const QAExample& example,
                              const std::vector<EntityMention>& mentions,
                              const std::vector<KnowledgeEntry>& entries) {
    if (mentions.empty()) return {false, FilterReason::no_entity};
    if (example.split != Split::test && entries.empty()) {
        return {false, FilterReason::no_description};
    }
    return {true, FilterReason::kept};
}

std::string render_synthesis_prompt(const std::vector<std::string>& passages,
                                    const std::vector<std::string>& entity_surfaces) {
    if (passages.empty()) throw ValidationError("synthesis prompt needs at least one passage");
    if (entity_surfaces.empty()) {
        throw ValidationError("synthesis prompt needs at least one entity surface");
    }
    std::string prompt =
        "Please extract the content about the entity in fewer than four sentences.\n\n"
        "### Passage\n";
    for (std::size_t i = 0; i < passages.size(); ++i) {
        if (i > 0) prompt += "\n\n";
        prompt += trim(passages[i]);
    }
    prompt += "\n\n### Entity\n[";
    for (std::size_t i = 0; i < entity_surfaces.size(); ++i) {
        if (i > 0) prompt += ", ";
        prompt += entity_surfaces[i];
    }
    prompt += "]";
    return prompt;
}

std::string synthesize_gold_summary(GenerationBackend& backend,
                                    const std::vector<std::string>& passages,
                                    const std::vector<std::string>& entity_surfaces,
                                    const GenerateRequest& baseline) {
    GenerateRequest request = baseline;
    request.prompt = render_synthesis_prompt(passages, entity_surfaces);
    return trim(backend.generate(request).text);
}

TrainingRecord build_training_record(const QAExample& example,
                                     const MaskedQuestion& masked,
                                     std::vector<std::string> passages,
                                     std::vector<KnowledgeEntry> entities,
                                     std::string gold_summary,
                                     std::size_t expected_k) {
    if (masked.original != example.question) {
        throw ValidationError("masked question was built from a different question (qid " +
                              example.qid + ")");
    }
    if (passages.size() != expected_k) {
        throw ValidationError("qid " + example.qid + ": expected " +
                              std::to_string(expected_k) + " passages, got " +
                              std::to_string(passages.size()));
    }
    const bool needs_supervision = example.split != Split::test;
    if (needs_supervision && entities.empty()) {
        throw ValidationError("qid " + example.qid + ": train/validation records need entities");
    }
    if (needs_supervision && trim_view(gold_summary).empty()) {
        throw ValidationError("qid " + example.qid +
                              ": train/validation records need a gold summary");
    }

    TrainingRecord record;
    record.qid = example.qid;
    record.split = example.split;
    record.question = example.question;
    record.gold_answer = example.gold_answer;
    record.masked = masked;
    record.passages = std::move(passages);
    record.entities = std::move(entities);
    record.gold_summary = trim(gold_summary);
    record.gold_summary_sentences = count_sentences(record.gold_summary);
    return record;
}

double SplitCounts::percent_filtered() const {
    if (original == 0) return 0.0;
    // Truncated toward zero at one decimal so reported percentages never
    // overstate how much was removed.
    return static_cast<double>(dropped() * 1000 / original) / 10.0;
}

SplitCounts FilterStats::totals() const {
    SplitCounts sum;
    for (const auto& [name, counts] : per_split) {
        (void)name;
        sum.original += counts.original;
        sum.kept += counts.kept;
        for (const auto& [reason, n] : counts.drop_reasons) sum.drop_reasons[reason] += n;
    }
    return sum;
}

namespace {

json counts_to_json(const SplitCounts& counts) {
    json reasons = json::object();
    std::size_t reason_total = 0;
    for (const auto& [reason, n] : counts.drop_reasons) {
        reasons[reason] = n;
        reason_total += n;
    }
    if (counts.kept > counts.original || reason_total != counts.dropped()) {
        throw ValidationError("filter stats are inconsistent: kept + dropped != original");
    }
    return json{{"original", counts.original},
                {"kept", counts.kept},
                {"dropped", counts.dropped()},
                {"percent_filtered", counts.percent_filtered()},
                {"drop_reasons", reasons}};
}

json record_to_json(const TrainingRecord& record) {
    json spans = json::array();
    for (const auto& mention : record.masked.mentions) {
        spans.push_back({{"begin", mention.span.begin},
                         {"end", mention.span.end},
                         {"surface", mention.surface}});
    }
    json entities = json::array();
    for (const auto& entry : record.entities) {
        entities.push_back({{"surface", entry.surface}, {"description", entry.description}});
    }
    return json{{"qid", record.qid},
                {"question", record.question},
                {"masked_question", record.masked.masked},
                {"spans", spans},
                {"passages", record.passages},
                {"entities", entities},
                {"gold_summary", record.gold_summary},
                {"gold_answer", record.gold_answer},
                {"split", to_string(record.split)}};
}

}  // namespace

void FilterStats::write(const std::filesystem::path& path) const {
    json splits = json::object();
    for (const auto& [name, counts] : per_split) splits[name] = counts_to_json(counts);
    json doc{{"splits", splits}, {"totals", counts_to_json(totals())}};
    detail::write_file_atomically(path, doc.dump(2) + "\n");
}

FilterStats collect_filter_stats(
    const std::vector<std::pair<Split, FilterDecision>>& decisions) {
    FilterStats stats;
    for (const auto& [split, decision] : decisions) {
        auto& counts = stats.per_split[to_string(split)];
        ++counts.original;
        if (decision.keep) {
            ++counts.kept;
        } else {
            ++counts.drop_reasons[to_string(decision.reason)];
        }
    }
    return stats;
}

FilterStats emit_dataset(std::vector<TrainingRecord> records,
                         const std::vector<std::pair<Split, FilterDecision>>& decisions,
                         const std::filesystem::path& out_dir) {
    auto stats = collect_filter_stats(decisions);

    std::map<std::string, std::size_t> emitted_per_split;
    for (const auto& record : records) ++emitted_per_split[to_string(record.split)];
    for (const auto& [name, counts] : stats.per_split) {
        auto it = emitted_per_split.find(name);
        const std::size_t emitted = it == emitted_per_split.end() ? 0 : it->second;
        if (emitted != counts.kept) {
            throw ValidationError("split " + name + ": " + std::to_string(emitted) +
                                  " records emitted but " + std::to_string(counts.kept) +
                                  " marked kept");
        }
    }
    for (const auto& [name, emitted] : emitted_per_split) {
        if (stats.per_split.find(name) == stats.per_split.end()) {
            throw ValidationError("split " + name + " has records but no filter decisions");
        }
        (void)emitted;
    }

    std::sort(records.begin(), records.end(),
              [](const TrainingRecord& a, const TrainingRecord& b) { return a.qid < b.qid; });

    std::filesystem::create_directories(out_dir);
    std::string body;
    for (const auto& record : records) {
        body += record_to_json(record).dump();
        body += "\n";
    }
    detail::write_file_atomically(out_dir / "dataset.jsonl", body);
    stats.write(out_dir / "filter_stats.json");
    return stats;
}

std::vector<TrainingRecord> load_dataset_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset: " + path.string());

    std::vector<TrainingRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim_view(line).empty()) continue;
        json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.is_object()) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                                  ": invalid JSON record");
        }
        TrainingRecord record;
        record.qid = rec.at("qid").get<std::string>();
        record.question = rec.at("question").get<std::string>();
        record.gold_answer = rec.at("gold_answer").get<std::string>();
        record.split = split_from_string(rec.at("split").get<std::string>());
        record.masked.original = record.question;
        record.masked.masked = rec.at("masked_question").get<std::string>();
        for (const auto& span : rec.at("spans")) {
            EntityMention mention;
            mention.surface = span.at("surface").get<std::string>();
            mention.span.begin = span.at("begin").get<std::size_t>();
            mention.span.end = span.at("end").get<std::size_t>();
            record.masked.mentions.push_back(std::move(mention));
        }
        record.passages = rec.at("passages").get<std::vector<std::string>>();
        for (const auto& entity : rec.at("entities")) {
            KnowledgeEntry entry;
            entry.surface = entity.at("surface").get<std::string>();
            entry.description = entity.at("description").get<std::string>();
            record.entities.push_back(std::move(entry));
        }
        record.gold_summary = rec.at("gold_summary").get<std::string>();
        record.gold_summary_sentences = count_sentences(record.gold_summary);
        records.push_back(std::move(record));
    }
    return records;
}

DatasetBuildResult build_dataset(const std::vector<QAExample>& examples,
                                 const DatasetBuildInputs& in) {
    if (in.store == nullptr || in.index == nullptr || in.embedder == nullptr) {
        throw ConfigError("build_dataset needs a corpus store, index and embedder");
    }

    DatasetBuildResult result;
    for (const auto& ex : examples) {
        auto flag = [&](const std::string& why) {
            result.decisions.emplace_back(ex.split, FilterDecision{false, FilterReason::other});
            result.flagged.push_back(ex.qid + ": " + why);
        };
        try {
            auto mentions = recognize_entities(ex.question, in.store->dictionary(),
                                               in.recognizer, in.ner);
            auto attached = attach_descriptions(mentions, in.store->dictionary(),
                                                in.recognizer.strip_plural_suffix);
            auto decision = filter_example(ex, mentions, attached.entries);
            if (!decision.keep) {
                result.decisions.emplace_back(ex.split, decision);
                continue;
            }

            auto masked = mask_question(ex.question, mentions);
            auto retrieved = retrieve_passages(ex.question, in.k, *in.store, *in.index,
                                               *in.embedder, in.query_prefix);
            std::vector<std::string> passages;
            passages.reserve(retrieved.size());
            for (auto& p : retrieved) passages.push_back(std::move(p.text));

            std::string summary;
            if (ex.split != Split::test) {
                if (in.synthesizer == nullptr) {
                    throw ConfigError(
                        "build_dataset needs a synthesizer backend for train/validation splits");
                }
                std::vector<std::string> surfaces;
                surfaces.reserve(attached.entries.size());
                for (const auto& entry : attached.entries) surfaces.push_back(entry.surface);
                summary = synthesize_gold_summary(*in.synthesizer, passages, surfaces, in.decode);
                if (summary.empty()) {
                    flag("synthesizer returned an empty summary");
                    continue;
                }
            }

            result.records.push_back(build_training_record(
                ex, masked, std::move(passages), std::move(attached.entries),
                std::move(summary), in.k));
            result.decisions.emplace_back(ex.split, decision);
        } catch (const ConfigError&) {
            throw;  // misconfiguration affects every example; do not grind through the batch
        } catch (const Error& err) {
            flag(err.what());
        }
    }
    return result;
}

}  // namespace kcomp
