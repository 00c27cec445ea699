#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kcomp/backends.hpp"
#include "kcomp/corpus_store.hpp"
#include "kcomp/text.hpp"

namespace kcomp {

struct EntityMention {
    std::string surface;  // question text covered by the span, verbatim
    TokenSpan span;       // byte range into the original question
    std::optional<KnowledgeEntry> entry;
};

// A question with entity spans replaced by the `<ent>` token. The mentions
// carry enough to reverse the masking exactly: unmask() == original.
struct MaskedQuestion {
    std::string original;
    std::string masked;
    std::vector<EntityMention> mentions;
};

enum class RecognizerMode { gazetteer, external_ner };

std::string to_string(RecognizerMode mode);
RecognizerMode recognizer_mode_from_string(std::string_view name);

struct RecognizerPolicy {
    RecognizerMode mode = RecognizerMode::gazetteer;
    std::size_t min_surface_chars = 3;
    bool longest_match = true;
    bool case_insensitive = true;
    // Lets a plural question word hit a singular dictionary surface
    // ("symptoms" -> "symptom"). Applied to question words only.
    bool strip_plural_suffix = true;
    std::vector<std::string> stopwords = {"the", "a", "an", "of", "and", "or",
                                          "for", "with", "what", "how", "is",
                                          "are", "can", "you", "have"};

    void validate() const;  // throws ConfigError
};

// Dictionary lookup with the recognizer's tolerance: exact normalized match
// first, then (optionally) the surface with a plural suffix stripped.
std::optional<KnowledgeEntry> lookup_surface(const KnowledgeDictionary& dict,
                                             std::string_view surface,
                                             bool strip_plural_suffix);

// Gazetteer mode scans the question for dictionary surfaces word-by-word
// (case-insensitive, whitespace-tolerant, optional plural stripping) and
// keeps a maximal non-overlapping set, longest match first. External mode
// takes spans verbatim from the adapter — never fabricated — resolves
// overlaps deterministically and attaches entries by lookup. Mentions come
// back sorted by start offset.
std::vector<EntityMention> recognize_entities(const std::string& question,
                                              const KnowledgeDictionary& dict,
                                              const RecognizerPolicy& policy = {},
                                              NerBackend* ner = nullptr);

// Replaces each mention span with `<ent>`. Throws ValidationError on
// overlapping or out-of-range spans, or if the question already contains a
// reserved token (the round-trip guarantee would be lost).
MaskedQuestion mask_question(const std::string& question,
                             std::vector<EntityMention> mentions);

// Reconstructs the original question from masked text + mentions.
std::string unmask(const MaskedQuestion& mq);

struct AttachedDescriptions {
    std::vector<KnowledgeEntry> entries;      // first-occurrence order, deduped
    std::vector<std::string> unresolved;      // surfaces with no entry, deduped
};

AttachedDescriptions attach_descriptions(const std::vector<EntityMention>& mentions,
                                         const KnowledgeDictionary& dict,
                                         bool strip_plural_suffix = true);

}  // namespace kcomp
