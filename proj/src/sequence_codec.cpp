#include "kcomp/sequence_codec.hpp"

#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "kcomp/errors.hpp"

namespace kcomp {

std::string_view input_layout_name(InputLayout layout) {
    switch (layout) {
        case InputLayout::passages_first: return "passages_first/v1";
        case InputLayout::question_first: return "question_first/v1";
    }
    return "passages_first/v1";
}

std::string render_compressor_input(std::string_view masked_question,
                                    const std::vector<std::string>& passages,
                                    InputLayout layout) {
    if (passages.empty()) throw ValidationError("compressor input requires >= 1 passage");
    std::string passage_block;
    for (std::size_t i = 0; i < passages.size(); ++i) {
        if (i > 0) passage_block += "\n\n";
        passage_block += passages[i];
    }
    std::string out;
    if (layout == InputLayout::passages_first) {
        out = passage_block;
        out += "\n\n";
        out += masked_question;
    } else {
        out = std::string(masked_question);
        out += "\n\n";
        out += passage_block;
    }
    return out;
}

namespace {

void validate_target_inputs(const std::vector<EntityDescription>& entries,
                            std::string_view summary) {
    if (entries.empty()) throw ValidationError("target requires >= 1 entity entry");
    if (trim_view(summary).empty()) throw ValidationError("target requires a summary");
    for (const auto& e : entries) {
        if (trim_view(e.surface).empty() || trim_view(e.description).empty()) {
            throw ValidationError("entity entries need non-empty surface and description");
        }
        for (std::string_view field : {std::string_view(e.surface),
                                       std::string_view(e.description)}) {
            if (contains(field, "\n") || contains(field, kEntToken) ||
                contains(field, kEodToken)) {
                throw ValidationError(
                    "entity fields must not contain newlines or reserved tokens");
            }
        }
        if (contains(e.surface, ":")) {
            throw ValidationError("entity surface must not contain ':'");
        }
    }
    if (contains(summary, kEodToken)) {
        throw ValidationError("summary must not contain the description terminator");
    }
}

}  // namespace

std::pair<std::string, SegmentBoundaries> render_target(
    const std::vector<EntityDescription>& entries, std::string_view summary) {
    validate_target_inputs(entries, summary);
    std::string text;
    for (const auto& e : entries) {
        text += e.surface;
        text += ": ";
        text += e.description;
        text += kEodToken;
        text += '\n';
    }
    SegmentBoundaries b;
    b.ed_begin = 0;
    b.ed_end = text.size();
    b.s_begin = text.size();
    text += trim_view(summary);
    b.s_end = text.size();
    return {std::move(text), b};
}

SequenceTemplate make_template(std::string input_text,
                               const std::vector<EntityDescription>& entries,
                               std::string_view summary) {
    SequenceTemplate tmpl;
    tmpl.input_text = std::move(input_text);
    auto [target, boundaries] = render_target(entries, summary);
    tmpl.target_text = std::move(target);
    tmpl.boundaries = boundaries;
    return tmpl;
}

namespace {

// A tokenizer is usable only if the reserved tokens survive as single
// tokens, both standalone and glued to surrounding text.
void require_reserved_atomicity(const Tokenizer& tokenizer) {
    for (std::string_view reserved : {kEntToken, kEodToken}) {
        auto lone = tokenizer.token_spans(reserved);
        if (lone.size() != 1 || lone[0].begin != 0 || lone[0].end != reserved.size()) {
            throw ConfigError("tokenizer '" + tokenizer.name() +
                              "' splits reserved token " + std::string(reserved));
        }
        std::string glued = "x" + std::string(reserved) + "y";
        bool atomic = false;
        for (const auto& span : tokenizer.token_spans(glued)) {
            if (span.begin == 1 && span.end == 1 + reserved.size()) atomic = true;
        }
        if (!atomic) {
            throw ConfigError("tokenizer '" + tokenizer.name() +
                              "' merges reserved token " + std::string(reserved) +
                              " with adjacent text");
        }
    }
}

}  // namespace

LossMask build_loss_mask(const SequenceTemplate& tmpl, const Tokenizer& tokenizer,
                         Vocabulary& vocab) {
    require_reserved_atomicity(tokenizer);
    if (trim_view(tmpl.target_text).empty()) {
        throw ValidationError("loss mask requires a non-empty target");
    }

    LossMask out;
    out.joined_text = tmpl.input_text + "\n" + tmpl.target_text;
    out.spans = tokenizer.token_spans(out.joined_text);
    const std::size_t target_offset = tmpl.input_text.size() + 1;
    const auto& b = tmpl.boundaries;

    bool seen_ed = false;
    bool seen_s = false;
    for (std::size_t i = 0; i < out.spans.size(); ++i) {
        const auto& span = out.spans[i];
        std::string_view token(out.joined_text.data() + span.begin, span.size());
        out.token_ids.push_back(vocab.id_of(token));

        SegmentLabel label = SegmentLabel::input;
        if (span.begin >= target_offset) {
            std::size_t rel = span.begin - target_offset;
            if (rel >= b.ed_begin && rel < b.ed_end) {
                label = SegmentLabel::ed;
            } else if (rel >= b.s_begin && rel < b.s_end) {
                label = SegmentLabel::s;
            } else {
                throw ValidationError("target token at byte " + std::to_string(rel) +
                                      " lies outside the segment boundaries");
            }
        }
        if (label == SegmentLabel::ed && !seen_ed) {
            out.segments.ed_begin = i;
            seen_ed = true;
        }
        if (label == SegmentLabel::ed) out.segments.ed_end = i + 1;
        if (label == SegmentLabel::s && !seen_s) {
            out.segments.s_begin = i;
            seen_s = true;
        }
        if (label == SegmentLabel::s) out.segments.s_end = i + 1;
        out.labels.push_back(label);
        out.mask.push_back(label != SegmentLabel::input);
    }
    if (!seen_ed || !seen_s) {
        throw ValidationError("both target segments must contain at least one token");
    }
    return out;
}

namespace {

double nll_over_range(const TokenProbabilityOracle& oracle, const LossMask& mask,
                      std::size_t begin, std::size_t end) {
    if (begin > end || end > mask.token_ids.size()) {
        throw ValidationError("segment token range out of bounds");
    }
    double total = 0;
    std::vector<int> prefix(mask.token_ids.begin(),
                            mask.token_ids.begin() + static_cast<std::ptrdiff_t>(begin));
    for (std::size_t i = begin; i < end; ++i) {
        auto dist = oracle.distribution(prefix);
        if (dist.size() != oracle.vocab_size()) {
            throw ValidationError("oracle distribution size mismatch");
        }
        int next = mask.token_ids[i];
        if (next < 0 || static_cast<std::size_t>(next) >= dist.size()) {
            throw ValidationError("token id outside oracle vocabulary");
        }
        double p = dist[static_cast<std::size_t>(next)];
        if (p <= 0) return std::numeric_limits<double>::infinity();
        total -= std::log(p);
        prefix.push_back(next);
    }
    return total;
}

}  // namespace

double segment_nll(const TokenProbabilityOracle& oracle, const LossMask& mask,
                   Segment segment) {
    const auto& seg = mask.segments;
    switch (segment) {
        case Segment::ed: return nll_over_range(oracle, mask, seg.ed_begin, seg.ed_end);
        case Segment::s: return nll_over_range(oracle, mask, seg.s_begin, seg.s_end);
        case Segment::joint:
            return nll_over_range(oracle, mask, seg.ed_begin, seg.s_end);
    }
    throw ValidationError("unknown segment");
}

FactorizationReport check_factorization(const TokenProbabilityOracle& oracle,
                                        const LossMask& mask, double tol) {
    FactorizationReport report;
    report.joint = segment_nll(oracle, mask, Segment::joint);
    report.ed = segment_nll(oracle, mask, Segment::ed);
    report.s_given_ed = segment_nll(oracle, mask, Segment::s);
    if (!std::isfinite(report.joint) || !std::isfinite(report.ed) ||
        !std::isfinite(report.s_given_ed)) {
        report.pass = false;
        report.residual = std::numeric_limits<double>::infinity();
        report.reason = "infinite negative log-likelihood in a segment";
        return report;
    }
    report.residual = std::abs(report.joint - (report.ed + report.s_given_ed));
    report.pass = report.residual <= tol;
    if (!report.pass) report.reason = "residual exceeds tolerance";
    return report;
}

std::string render_training_line(std::string_view qid, const SequenceTemplate& tmpl,
                                 const Tokenizer* tokenizer, Vocabulary* vocab) {
    nlohmann::json rec = {
        {"qid", std::string(qid)},
        {"input_text", tmpl.input_text},
        {"target_text", tmpl.target_text},
        {"boundaries",
         {{"ed_begin", tmpl.boundaries.ed_begin},
          {"ed_end", tmpl.boundaries.ed_end},
          {"s_begin", tmpl.boundaries.s_begin},
          {"s_end", tmpl.boundaries.s_end}}},
    };
    if (tokenizer != nullptr && vocab != nullptr) {
        auto mask = build_loss_mask(tmpl, *tokenizer, *vocab);
        rec["tokenizer"] = tokenizer->name();
        rec["token_ids"] = mask.token_ids;
        std::vector<int> bits(mask.mask.begin(), mask.mask.end());
        rec["loss_mask"] = bits;
    }
    return rec.dump();
}

}  // namespace kcomp
