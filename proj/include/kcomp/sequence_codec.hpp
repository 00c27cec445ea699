#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kcomp/tokenizer.hpp"

namespace kcomp {

// One entity/description pair as it appears in compressor targets and
// outputs: rendered as "{surface}: {description}<eod>".
struct EntityDescription {
    std::string surface;
    std::string description;

    bool operator==(const EntityDescription&) const = default;
};

// Byte offsets into SequenceTemplate::target_text. The entity/description
// block (ED) comes first and ends exactly where the summary (S) starts.
struct SegmentBoundaries {
    std::size_t ed_begin = 0;
    std::size_t ed_end = 0;
    std::size_t s_begin = 0;
    std::size_t s_end = 0;
};

// A fully rendered compressor training example: the conditioning input and
// the target the model must produce, with segment boundaries for masking.
struct SequenceTemplate {
    std::string input_text;   // masked question + passages
    std::string target_text;  // entity/description lines, then the summary
    SegmentBoundaries boundaries;
};

// Whether passages precede the masked question in the rendered input.
// passages_first keeps every masked span resolvable by a left-to-right
// model; question_first mirrors the plain concatenation order.
enum class InputLayout { passages_first, question_first };

// Stamped into manifests so downstream consumers can tell which layout a
// record was rendered with.
std::string_view input_layout_name(InputLayout layout);

// Passages in rank order separated by blank lines, each already rendered as
// "title\nbody", combined with the masked question per `layout`.
std::string render_compressor_input(std::string_view masked_question,
                                    const std::vector<std::string>& passages,
                                    InputLayout layout = InputLayout::passages_first);

// "{surface}: {description}<eod>\n" per entry, then the summary. Boundaries
// mark the ED block (including the newline after the last entry line) and
// the summary; ED end and S start always coincide.
// Inputs must stay within the target grammar: no reserved tokens inside
// surfaces/descriptions, no ':' in surfaces, no "<eod>" in the summary.
std::pair<std::string, SegmentBoundaries> render_target(
    const std::vector<EntityDescription>& entries, std::string_view summary);

SequenceTemplate make_template(std::string input_text,
                               const std::vector<EntityDescription>& entries,
                               std::string_view summary);

enum class SegmentLabel { input, ed, s };

// Token-index ranges (into LossMask::token_ids) for the two target
// segments. Valid masks satisfy ed_begin <= ed_end == s_begin <= s_end;
// factorization checks exist to catch bookkeeping that breaks this.
struct SegmentTokenRange {
    std::size_t ed_begin = 0;
    std::size_t ed_end = 0;
    std::size_t s_begin = 0;
    std::size_t s_end = 0;
};

// Per-token training mask over the joined input+target token stream.
struct LossMask {
    std::vector<int> token_ids;
    std::vector<bool> mask;  // true = token contributes to the loss
    std::vector<SegmentLabel> labels;
    SegmentTokenRange segments;
    std::string joined_text;      // input_text + '\n' + target_text
    std::vector<TokenSpan> spans;  // token byte spans into joined_text
};

// Tokenizes input+target as one stream and labels each token by the segment
// its first byte falls in. Throws ConfigError if the tokenizer fails to keep
// `<ent>`/`<eod>` atomic, ValidationError if either target segment ends up
// with no tokens.
LossMask build_loss_mask(const SequenceTemplate& tmpl, const Tokenizer& tokenizer,
                         Vocabulary& vocab);

// Backend-neutral stand-in for an autoregressive model: a conditional
// next-token distribution. Implementations must return distributions over
// exactly vocab_size() entries, non-negative, summing to 1 within 1e-9.
class TokenProbabilityOracle {
public:
    virtual ~TokenProbabilityOracle() = default;
    virtual std::size_t vocab_size() const = 0;
    virtual std::vector<double> distribution(const std::vector<int>& prefix) const = 0;
};

enum class Segment { ed, s, joint };

// Sum of -log P(token | full preceding prefix) over the segment's tokens.
// `joint` walks the contiguous range from ED start to S end, independently
// of the two per-segment sums. A zero-probability token yields +infinity.
double segment_nll(const TokenProbabilityOracle& oracle, const LossMask& mask,
                   Segment segment);

struct FactorizationReport {
    double joint = 0;
    double ed = 0;
    double s_given_ed = 0;
    double residual = 0;
    bool pass = false;
    std::string reason;  // set when pass is false
};

// Verifies the chain rule P(ED,S|x) = P(ED|x) * P(S|ED,x) in NLL form:
// |joint - (ed + s_given_ed)| <= tol. Holds algebraically for any valid
// mask; a residual above tol means the segment bookkeeping is corrupt
// (e.g. a boundary off by one token).
FactorizationReport check_factorization(const TokenProbabilityOracle& oracle,
                                        const LossMask& mask, double tol = 1e-9);

// One JSONL line for the training-export file: qid, input_text,
// target_text, boundaries; plus token_ids/loss_mask under `tokenizer` when
// one is supplied (vocab shared across the export run).
std::string render_training_line(std::string_view qid, const SequenceTemplate& tmpl,
                                 const Tokenizer* tokenizer = nullptr,
                                 Vocabulary* vocab = nullptr);

}  // namespace kcomp
