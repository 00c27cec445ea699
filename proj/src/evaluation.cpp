#include "kcomp/evaluation.hpp"

#include <algorithm>
#include <set>

#include "io_internal.hpp"
#include "kcomp/errors.hpp"
#include "kcomp/sequence_codec.hpp"
#include "kcomp/shuffle.hpp"
#include "kcomp/text.hpp"
#include "kcomp/tokenizer.hpp"

namespace kcomp {

using nlohmann::json;

std::string to_string(CandidateOrigin origin) {
    return origin == CandidateOrigin::generated ? "generated" : "retrieved";
}

json RecallReport::to_json() const {
    json gen = json::object();
    json ret = json::object();
    for (int k : ks) {
        gen[std::to_string(k)] = recall_generated.at(k);
        ret[std::to_string(k)] = recall_retrieved.at(k);
    }
    json questions = json::array();
    for (const auto& q : per_question) {
        questions.push_back({{"qid", q.qid},
                             {"ranking", q.ranking},
                             {"duplicate_texts", q.duplicate_texts}});
    }
    return json{{"ks", ks},
                {"recall_generated", gen},
                {"recall_retrieved", ret},
                {"evaluated", evaluated},
                {"flagged", flagged},
                {"flagged_qids", flagged_qids},
                {"per_question", questions}};
}

void RecallReport::write(const std::filesystem::path& path) const {
    detail::write_file_atomically(path, to_json().dump(2) + "\n");
}

RecallReport rerank_recall(const std::vector<QAExample>& questions, const RerankInputs& in) {
    if (in.store == nullptr || in.index == nullptr || in.embedder == nullptr ||
        in.compressor == nullptr || in.reranker == nullptr) {
        throw ConfigError("rerank_recall needs store, index, embedder, compressor, reranker");
    }
    if (in.samples == 0 || in.retrieved_k == 0) {
        throw ConfigError("samples and retrieved_k must be positive");
    }
    if (in.max_attempts < in.samples) {
        throw ConfigError("max_attempts must be at least the sample count");
    }
    if (in.ks.empty()) throw ConfigError("at least one K is required");
    for (int k : in.ks) {
        if (k < 1 || static_cast<std::size_t>(k) > in.samples + in.retrieved_k) {
            throw ConfigError("K=" + std::to_string(k) + " outside the candidate range");
        }
    }

    RecallReport report;
    report.ks = in.ks;
    std::map<int, std::size_t> hits_generated;
    std::map<int, std::size_t> hits_retrieved;
    for (int k : in.ks) {
        hits_generated[k] = 0;
        hits_retrieved[k] = 0;
    }

    for (const auto& question : questions) {
        auto retrieved = retrieve_passages(question.question, in.retrieved_k, *in.store,
                                           *in.index, *in.embedder, in.query_prefix);
        std::vector<std::string> passages;
        for (auto& p : retrieved) passages.push_back(std::move(p.text));

        auto mentions = recognize_entities(question.question, in.store->dictionary(),
                                           in.recognizer, in.ner);
        auto masked = mask_question(question.question, mentions);

        DecodeParams sampling = in.decode;
        sampling.temperature = 1.0;  // high-temperature sampling is the point here
        const auto prompt = render_compressor_input(masked.masked, passages);

        std::vector<std::string> generated;
        std::set<std::string> seen;
        for (std::uint64_t seed = 0;
             seed < in.max_attempts && generated.size() < in.samples; ++seed) {
            auto response = in.compressor->generate(to_request(sampling, prompt, seed));
            auto text = trim(response.text);
            if (!text.empty() && seen.insert(text).second) {
                generated.push_back(std::move(text));
            }
        }
        if (generated.size() < in.samples) {
            ++report.flagged;
            report.flagged_qids.push_back(question.qid);
            continue;
        }

        std::vector<RerankCandidate> candidates;
        for (auto& text : generated) {
            candidates.push_back({candidates.size(), CandidateOrigin::generated,
                                  std::move(text), 0.0});
        }
        std::size_t duplicates = 0;
        for (const auto& text : passages) {
            for (std::size_t g = 0; g < in.samples; ++g) {
                if (candidates[g].text == text) ++duplicates;
            }
            candidates.push_back({candidates.size(), CandidateOrigin::retrieved, text, 0.0});
        }

        std::vector<std::string> texts;
        for (const auto& c : candidates) texts.push_back(c.text);
        auto scores = in.reranker->rerank(question.question, texts);
        for (std::size_t i = 0; i < candidates.size(); ++i) candidates[i].score = scores[i];

        std::vector<std::size_t> order(candidates.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (candidates[a].score != candidates[b].score) {
                return candidates[a].score > candidates[b].score;
            }
            return candidates[a].id < candidates[b].id;  // documented tie-break
        });

        for (int k : in.ks) {
            bool gen_hit = false;
            bool ret_hit = false;
            const auto top = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
            for (std::size_t i = 0; i < top; ++i) {
                if (candidates[order[i]].origin == CandidateOrigin::generated) {
                    gen_hit = true;
                } else {
                    ret_hit = true;
                }
            }
            if (gen_hit) ++hits_generated[k];
            if (ret_hit) ++hits_retrieved[k];
        }

        RecallQuestionResult result;
        result.qid = question.qid;
        result.ranking = order;
        result.duplicate_texts = duplicates;
        report.per_question.push_back(std::move(result));
        ++report.evaluated;
    }

    for (int k : in.ks) {
        const double denom = report.evaluated == 0
                                 ? 1.0
                                 : static_cast<double>(report.evaluated);
        report.recall_generated[k] = static_cast<double>(hits_generated[k]) / denom;
        report.recall_retrieved[k] = static_cast<double>(hits_retrieved[k]) / denom;
    }
    return report;
}

namespace {

const StageRecord* find_stage(const PipelineTrace& trace, const std::string& name) {
    for (const auto& stage : trace.stages) {
        if (stage.name == name) return &stage;
    }
    return nullptr;
}

struct ModeAccumulator {
    std::size_t questions = 0;
    std::size_t failed = 0;
    double prompt_tokens = 0.0;
    double compression_ms = 0.0;
    double inference_ms = 0.0;
    double other_ms = 0.0;
};

}  // namespace

json SpeedReport::to_json() const {
    json mode_list = json::array();
    for (const auto& m : modes) {
        mode_list.push_back({{"mode", m.mode},
                             {"questions", m.questions},
                             {"failed", m.failed},
                             {"mean_prompt_tokens", m.mean_prompt_tokens},
                             {"compression_ms", m.compression_ms},
                             {"inference_ms", m.inference_ms},
                             {"other_ms", m.other_ms},
                             {"total_ms", m.total_ms}});
    }
    return json{{"tokenizer", tokenizer_name}, {"modes", mode_list}};
}

void SpeedReport::write(const std::filesystem::path& path) const {
    detail::write_file_atomically(path, to_json().dump(2) + "\n");
}

SpeedReport token_accounting(const std::vector<std::filesystem::path>& run_dirs,
                             const std::string& tokenizer_name) {
    if (run_dirs.empty()) throw ValidationError("token_accounting needs at least one run");
    WhitespaceTokenizer tokenizer;
    if (tokenizer_name != tokenizer.name()) {
        throw ConfigError("unsupported tokenizer: " + tokenizer_name);
    }
    auto count = [&](const std::string& text) {
        return static_cast<long>(tokenizer.count_tokens(text));
    };

    std::map<std::string, ModeAccumulator> by_mode;
    for (const auto& dir : run_dirs) {
        auto manifest = load_run_manifest(dir);
        if (manifest.tokenizer_name != tokenizer_name) {
            throw ValidationError("run " + dir.string() + " was recorded under tokenizer \"" +
                                  manifest.tokenizer_name + "\", not \"" + tokenizer_name +
                                  "\"");
        }
        auto& accum = by_mode[manifest.mode];
        for (const auto& qid : manifest.qids) {
            auto trace =
                load_trace(dir / "traces" / (sanitize_for_filename(qid) + ".json"));
            if (trace.tokenizer_name != tokenizer_name) {
                throw ValidationError("trace " + qid + " uses tokenizer \"" +
                                      trace.tokenizer_name + "\"");
            }
            if (!trace.ok()) {
                ++accum.failed;
                continue;
            }
            const auto* read = find_stage(trace, "read");
            if (read == nullptr) {
                throw ValidationError("trace " + qid + " has no read stage");
            }
            if (read->prompt_tokens != count(trace.reader_prompt) ||
                read->completion_tokens != count(trace.answer_text)) {
                throw ValidationError("trace " + qid +
                                      ": stored token counts do not match stored texts");
            }
            const auto* compressed = find_stage(trace, "compress");
            if (compressed != nullptr &&
                (compressed->prompt_tokens != count(trace.compressor_input) ||
                 compressed->completion_tokens != count(trace.compressor_raw))) {
                throw ValidationError("trace " + qid +
                                      ": compressor token counts do not match stored texts");
            }
            for (const auto& stage : trace.stages) {
                if (stage.millis < 0.0) {
                    throw ValidationError("trace " + qid + ": negative stage time");
                }
            }

            ++accum.questions;
            accum.prompt_tokens += static_cast<double>(read->prompt_tokens);
            accum.inference_ms += read->millis;
            if (compressed != nullptr) accum.compression_ms += compressed->millis;
            for (const auto& stage : trace.stages) {
                if (stage.name != "read" && stage.name != "compress") {
                    accum.other_ms += stage.millis;
                }
            }
        }
    }

    SpeedReport report;
    report.tokenizer_name = tokenizer_name;
    for (const auto& [mode, accum] : by_mode) {
        ModeSpeed speed;
        speed.mode = mode;
        speed.questions = accum.questions;
        speed.failed = accum.failed;
        speed.mean_prompt_tokens =
            accum.questions == 0
                ? 0.0
                : accum.prompt_tokens / static_cast<double>(accum.questions);
        speed.compression_ms = accum.compression_ms;
        speed.inference_ms = accum.inference_ms;
        speed.other_ms = accum.other_ms;
        speed.total_ms = accum.compression_ms + accum.inference_ms;
        report.modes.push_back(speed);
    }
    return report;
}

json JudgeVerdict::to_json() const {
    return json{{"qid", qid},
                {"seed", seed},
                {"permutation", permutation},
                {"choice_label", choice_label},
                {"chosen_system", chosen_system},
                {"tie", tie},
                {"parseable", parseable},
                {"raw_response", raw_response}};
}

std::string render_judge_prompt(const std::vector<std::string>& presented_summaries,
                                const std::string& question) {
    const auto n = presented_summaries.size();
    if (n < 2 || n > 4) {
        throw ValidationError("judge prompt needs between 2 and 4 summaries");
    }

    std::vector<std::string> labels;
    for (std::size_t i = 0; i < n; ++i) labels.push_back("Summary " + std::to_string(i + 1));

    std::string paren;  // "Summary 1, Summary 2, or Summary 3" / "Summary 1 or Summary 2"
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0) paren += n == 2 ? " or " : (i + 1 == n ? ", or " : ", ");
        paren += labels[i];
    }
    std::string bracket;
    for (const auto& label : labels) {
        bracket += label;
        bracket += ", ";
    }
    bracket += "Tie";

    std::string prompt = "Select the summary (" + paren +
                         ") that is more relevant and informative as a rationale for the "
                         "given question.\n"
                         "In particular, biomedical QA requires expertise to be credible, "
                         "so choose a summary where expertise exists in the domain.\n"
                         "Choice: [" +
                         bracket + "], Do not offer any opinions other than the choice.";
    for (std::size_t i = 0; i < n; ++i) {
        prompt += "\n\n### " + labels[i] + "\n" + presented_summaries[i];
    }
    prompt += "\n\n### Question\n" + question;
    return prompt;
}

namespace {

// Returns the 1-based label index, 0 for Tie, or nullopt when the reply
// names zero or several labels.
std::optional<std::size_t> parse_judge_choice(const std::string& raw, std::size_t n) {
    std::vector<std::size_t> found;
    for (std::size_t i = 1; i <= n; ++i) {
        if (raw.find("Summary " + std::to_string(i)) != std::string::npos) {
            found.push_back(i);
        }
    }
    const bool tie = raw.find("Tie") != std::string::npos;
    if (found.size() == 1 && !tie) return found[0];
    if (found.empty() && tie) return 0;
    return std::nullopt;
}

}  // namespace

JudgeVerdict pairwise_judge(GenerationBackend& judge, const std::string& qid,
                            const std::string& question,
                            const std::vector<JudgeCandidate>& candidates,
                            std::uint64_t seed, const DecodeParams& decode) {
    const auto n = candidates.size();
    if (n < 2 || n > 4) {
        throw ValidationError("pairwise_judge needs between 2 and 4 candidates");
    }

    JudgeVerdict verdict;
    verdict.qid = qid;
    verdict.seed = seed;
    verdict.permutation = seeded_permutation(n, seed);

    std::vector<std::string> presented;
    for (auto idx : verdict.permutation) presented.push_back(candidates[idx].summary);
    const auto prompt = render_judge_prompt(presented, question);

    std::optional<std::size_t> choice;
    for (int attempt = 0; attempt < 2 && !choice; ++attempt) {
        auto response = judge.generate(
            to_request(decode, prompt, seed + static_cast<std::uint64_t>(attempt)));
        verdict.raw_response = trim(response.text);
        choice = parse_judge_choice(verdict.raw_response, n);
    }

    if (!choice) {
        verdict.parseable = false;
        return verdict;
    }
    if (*choice == 0) {
        verdict.tie = true;
        verdict.choice_label = "Tie";
        return verdict;
    }
    verdict.choice_label = "Summary " + std::to_string(*choice);
    verdict.chosen_system = candidates[verdict.permutation[*choice - 1]].system_id;
    return verdict;
}

void write_judge_verdicts(const std::vector<JudgeVerdict>& verdicts,
                          const std::filesystem::path& path) {
    std::string body;
    for (const auto& verdict : verdicts) {
        body += verdict.to_json().dump();
        body += "\n";
    }
    detail::write_file_atomically(path, body);
}

}  // namespace kcomp
