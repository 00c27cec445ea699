#include "kcomp/stubs.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "kcomp/corpus_store.hpp"
#include "kcomp/errors.hpp"
#include "kcomp/text.hpp"

namespace kcomp {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
    constexpr std::uint64_t kBasis = 14695981039346656037ULL;
    constexpr std::uint64_t kPrime = 1099511628211ULL;
    std::uint64_t h = kBasis;
    for (int shift = 0; shift < 64; shift += 8) {
        h ^= (seed >> shift) & 0xffU;
        h *= kPrime;
    }
    for (unsigned char c : bytes) {
        h ^= c;
        h *= kPrime;
    }
    return h;
}

HashEmbedder::HashEmbedder(std::size_t dim, std::uint64_t seed)
    : dim_(dim), seed_(seed) {
    if (dim_ < 8) throw ConfigError("hash embedder dim must be >= 8");
}

std::vector<float> HashEmbedder::embed_one(const std::string& text) const {
    std::vector<double> acc(dim_, 0.0);
    std::string lowered = to_lower_ascii(text);
    auto add_feature = [&](std::string_view feature) {
        std::uint64_t h = fnv1a64(feature, seed_);
        std::size_t idx = h % dim_;
        acc[idx] += (h >> 63) != 0 ? -1.0 : 1.0;
    };
    for (const auto& span : word_token_spans(lowered)) {
        std::string_view word(lowered.data() + span.begin, span.size());
        add_feature(word);
        for (std::size_t i = 0; i + 3 <= word.size(); ++i) {
            add_feature(word.substr(i, 3));
        }
    }
    double norm = 0;
    for (double v : acc) norm += v * v;
    norm = std::sqrt(norm);
    std::vector<float> out(dim_, 0.0f);
    if (norm < 1e-12) {
        out[0] = 1.0f;  // canonical unit vector for featureless text
        return out;
    }
    for (std::size_t i = 0; i < dim_; ++i) {
        out[i] = static_cast<float>(acc[i] / norm);
    }
    return out;
}

std::vector<std::vector<float>> HashEmbedder::embed(
    const std::vector<std::string>& texts, const std::string& /*prefix*/) {
    std::vector<std::vector<float>> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed_one(t));
    return out;
}

std::string HashEmbedder::describe() const {
    return "stub-hash-embedder(dim=" + std::to_string(dim_) +
           ",seed=" + std::to_string(seed_) + ")";
}

ScriptedGenerator::ScriptedGenerator(std::vector<ScriptRule> rules,
                                     GeneratorFallback fallback, std::string fixed_text,
                                     std::uint64_t seed)
    : rules_(std::move(rules)),
      fallback_(std::move(fallback)),
      fixed_text_(std::move(fixed_text)),
      seed_(seed) {}

namespace {

std::string strip_reserved(std::string text) {
    for (std::string_view reserved : {kEntToken, kEodToken}) {
        std::size_t pos;
        while ((pos = text.find(reserved)) != std::string::npos) {
            text.erase(pos, reserved.size());
        }
    }
    return text;
}

std::string last_nonempty_line(std::string_view prompt) {
    std::size_t end = prompt.size();
    while (end > 0) {
        std::size_t start = prompt.rfind('\n', end - 1);
        std::size_t line_begin = (start == std::string_view::npos) ? 0 : start + 1;
        auto line = trim_view(prompt.substr(line_begin, end - line_begin));
        if (!line.empty()) return std::string(line);
        if (start == std::string_view::npos) break;
        end = start;
    }
    return "";
}

// Fabricates parseable compressor output from the prompt alone: the first
// passage's title becomes the entity, the first sentence of its body the
// description and the summary.
std::string demo_compressor_output(std::string_view prompt) {
    std::size_t title_end = prompt.find('\n');
    std::string title, body;
    if (title_end == std::string_view::npos) {
        body = std::string(prompt);
    } else {
        title = trim(prompt.substr(0, title_end));
        std::size_t body_end = prompt.find("\n\n", title_end + 1);
        if (body_end == std::string_view::npos) body_end = prompt.size();
        body = std::string(prompt.substr(title_end + 1, body_end - (title_end + 1)));
    }
    std::string sentence =
        collapse_whitespace(strip_reserved(extract_first_sentence(body)));
    if (sentence.empty()) {
        sentence = collapse_whitespace(strip_reserved(extract_first_sentence(prompt)));
    }
    if (sentence.empty()) sentence = "No content available.";
    title = collapse_whitespace(strip_reserved(title));
    bool title_usable = !title.empty() && title.find(':') == std::string::npos;
    if (!title_usable) return sentence;
    std::string out = title;
    out += ": ";
    out += sentence;
    out += kEodToken;
    out += '\n';
    out += sentence;
    return out;
}

}  // namespace

GenerateResponse ScriptedGenerator::generate(const GenerateRequest& request) {
    std::string text;
    bool matched = false;
    for (const auto& rule : rules_) {
        if (contains(request.prompt, rule.needle)) {
            text = rule.response;
            matched = true;
            break;
        }
    }
    if (!matched) {
        switch (fallback_) {
            case GeneratorFallback::fixed: text = fixed_text_; break;
            case GeneratorFallback::echo_tail:
                text = last_nonempty_line(request.prompt);
                break;
            case GeneratorFallback::first_sentence:
                text = extract_first_sentence(request.prompt);
                break;
            case GeneratorFallback::compressor_demo:
                text = demo_compressor_output(request.prompt);
                break;
        }
    }
    if (request.temperature >= 0.5) {
        // Sampling regime: vary the text deterministically with the seed.
        std::uint64_t sample_seed = request.seed.value_or(0);
        std::uint64_t h = fnv1a64(request.prompt, seed_ ^ sample_seed) % 97;
        text += " [sample s" + std::to_string(sample_seed) + "-" + std::to_string(h) + "]";
    }
    std::size_t cut = std::string::npos;
    for (const auto& stop : request.stop) {
        if (stop.empty()) continue;
        cut = std::min(cut, text.find(stop));
    }
    if (cut != std::string::npos) text.resize(cut);

    GenerateResponse out;
    out.text = std::move(text);
    out.prompt_tokens = static_cast<long>(count_whitespace_tokens(request.prompt));
    out.completion_tokens = static_cast<long>(count_whitespace_tokens(out.text));
    return out;
}

std::string ScriptedGenerator::describe() const {
    return "stub-scripted-generator(rules=" + std::to_string(rules_.size()) +
           ",seed=" + std::to_string(seed_) + ")";
}

namespace {

std::set<std::string> word_set(const std::string& text) {
    std::set<std::string> words;
    std::string lowered = to_lower_ascii(text);
    for (const auto& span : word_token_spans(lowered)) {
        words.insert(lowered.substr(span.begin, span.size()));
    }
    return words;
}

}  // namespace

std::vector<double> LexicalReranker::rerank(const std::string& query,
                                            const std::vector<std::string>& candidates) {
    auto q = word_set(query);
    std::vector<double> scores;
    scores.reserve(candidates.size());
    for (const auto& c : candidates) {
        auto cw = word_set(c);
        std::vector<std::string> inter;
        std::set_intersection(q.begin(), q.end(), cw.begin(), cw.end(),
                              std::back_inserter(inter));
        std::size_t uni = q.size() + cw.size() - inter.size();
        scores.push_back(uni == 0 ? 0.0
                                  : static_cast<double>(inter.size()) /
                                        static_cast<double>(uni));
    }
    return scores;
}

std::string LexicalReranker::describe() const { return "stub-lexical-reranker"; }

EchoNer::EchoNer(std::vector<std::string> surfaces, std::string label)
    : surfaces_(std::move(surfaces)), label_(std::move(label)) {}

std::vector<NerSpan> EchoNer::recognize(const std::string& text) {
    std::vector<NerSpan> spans;
    for (const auto& surface : surfaces_) {
        if (surface.empty()) continue;
        std::size_t pos = 0;
        while ((pos = text.find(surface, pos)) != std::string::npos) {
            spans.push_back({pos, pos + surface.size(), label_});
            pos += 1;
        }
    }
    std::sort(spans.begin(), spans.end(), [](const NerSpan& a, const NerSpan& b) {
        if (a.start != b.start) return a.start < b.start;
        return a.end > b.end;
    });
    return spans;
}

std::string EchoNer::describe() const {
    return "stub-echo-ner(surfaces=" + std::to_string(surfaces_.size()) + ")";
}

namespace {

void validate_row(const std::vector<double>& row, std::size_t vocab) {
    if (row.size() != vocab) throw ConfigError("oracle row size != vocab size");
    double sum = 0;
    for (double p : row) {
        if (p < 0) throw ConfigError("oracle row has negative probability");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ConfigError("oracle row not normalized (sum = " + std::to_string(sum) + ")");
    }
}

}  // namespace

TableOracle::TableOracle(std::vector<double> initial_row,
                         std::vector<std::vector<double>> rows)
    : initial_(std::move(initial_row)), rows_(std::move(rows)) {
    if (initial_.empty()) throw ConfigError("oracle vocabulary must be non-empty");
    validate_row(initial_, initial_.size());
    if (rows_.size() != initial_.size()) {
        throw ConfigError("oracle needs one transition row per vocabulary token");
    }
    for (const auto& row : rows_) validate_row(row, initial_.size());
}

TableOracle TableOracle::uniform(std::size_t vocab) {
    std::vector<double> row(vocab, 1.0 / static_cast<double>(vocab));
    return TableOracle(row, std::vector<std::vector<double>>(vocab, row));
}

TableOracle TableOracle::random(std::size_t vocab, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(0.01, 1.0);
    auto make_row = [&] {
        std::vector<double> row(vocab);
        double sum = 0;
        for (auto& p : row) {
            p = dist(rng);
            sum += p;
        }
        for (auto& p : row) p /= sum;
        return row;
    };
    std::vector<double> initial = make_row();
    std::vector<std::vector<double>> rows;
    rows.reserve(vocab);
    for (std::size_t i = 0; i < vocab; ++i) rows.push_back(make_row());
    return TableOracle(std::move(initial), std::move(rows));
}

TableOracle TableOracle::deterministic_chain(std::size_t vocab) {
    std::vector<double> initial(vocab, 0.0);
    initial[0] = 1.0;
    std::vector<std::vector<double>> rows;
    rows.reserve(vocab);
    for (std::size_t i = 0; i < vocab; ++i) {
        std::vector<double> row(vocab, 0.0);
        row[(i + 1) % vocab] = 1.0;
        rows.push_back(std::move(row));
    }
    return TableOracle(std::move(initial), std::move(rows));
}

std::vector<double> TableOracle::distribution(const std::vector<int>& prefix) const {
    if (prefix.empty()) return initial_;
    int prev = prefix.back();
    if (prev < 0 || static_cast<std::size_t>(prev) >= rows_.size()) {
        throw ValidationError("oracle transition from unknown token id " +
                              std::to_string(prev));
    }
    return rows_[static_cast<std::size_t>(prev)];
}

}  // namespace kcomp
