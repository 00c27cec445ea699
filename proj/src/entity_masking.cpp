#include "kcomp/entity_masking.hpp"

#include <algorithm>

#include "kcomp/errors.hpp"
#include "kcomp/tokenizer.hpp"

namespace kcomp {

std::string to_string(RecognizerMode mode) {
    return mode == RecognizerMode::gazetteer ? "gazetteer" : "external_ner";
}

RecognizerMode recognizer_mode_from_string(std::string_view name) {
    if (name == "gazetteer") return RecognizerMode::gazetteer;
    if (name == "external_ner") return RecognizerMode::external_ner;
    throw ConfigError("unknown recognizer mode: " + std::string(name));
}

void RecognizerPolicy::validate() const {
    if (min_surface_chars < 1) throw ConfigError("min_surface_chars must be >= 1");
}

namespace {

// Plural variants of a single word, most specific first.
std::vector<std::string> plural_variants(std::string_view word) {
    std::vector<std::string> out;
    if (word.size() > 4 && word.substr(word.size() - 2) == "es") {
        out.emplace_back(word.substr(0, word.size() - 2));
    }
    if (word.size() > 3 && word.back() == 's') {
        out.emplace_back(word.substr(0, word.size() - 1));
    }
    return out;
}

bool word_matches(std::string_view question_word, std::string_view surface_word,
                  bool strip_plural) {
    if (question_word == surface_word) return true;
    if (!strip_plural) return false;
    for (const auto& variant : plural_variants(question_word)) {
        if (variant == surface_word) return true;
    }
    return false;
}

std::vector<std::string> key_words(std::string_view normalized_key) {
    std::vector<std::string> words;
    for (const auto& span : word_token_spans(normalized_key)) {
        words.emplace_back(normalized_key.substr(span.begin, span.size()));
    }
    return words;
}

struct Candidate {
    std::size_t begin = 0;  // byte span in the question
    std::size_t end = 0;
    std::string key;        // normalized dictionary key, for tie-breaking
    const KnowledgeEntry* entry = nullptr;
};

std::vector<EntityMention> accept_non_overlapping(const std::string& question,
                                                  std::vector<Candidate> candidates,
                                                  bool longest_match) {
    if (longest_match) {
        // Global longest-first: span length desc, then leftmost, then key.
        std::sort(candidates.begin(), candidates.end(),
                  [](const Candidate& a, const Candidate& b) {
                      auto la = a.end - a.begin;
                      auto lb = b.end - b.begin;
                      if (la != lb) return la > lb;
                      if (a.begin != b.begin) return a.begin < b.begin;
                      return a.key < b.key;
                  });
    } else {
        std::sort(candidates.begin(), candidates.end(),
                  [](const Candidate& a, const Candidate& b) {
                      if (a.begin != b.begin) return a.begin < b.begin;
                      if (a.end != b.end) return a.end > b.end;
                      return a.key < b.key;
                  });
    }
    std::vector<Candidate> accepted;
    for (const auto& c : candidates) {
        bool overlaps = std::any_of(accepted.begin(), accepted.end(),
                                    [&](const Candidate& o) {
                                        return c.begin < o.end && o.begin < c.end;
                                    });
        if (!overlaps) accepted.push_back(c);
    }
    std::sort(accepted.begin(), accepted.end(),
              [](const Candidate& a, const Candidate& b) { return a.begin < b.begin; });

    std::vector<EntityMention> mentions;
    mentions.reserve(accepted.size());
    for (const auto& c : accepted) {
        EntityMention m;
        m.surface = question.substr(c.begin, c.end - c.begin);
        m.span = {c.begin, c.end};
        if (c.entry != nullptr) m.entry = *c.entry;
        mentions.push_back(std::move(m));
    }
    return mentions;
}

std::vector<EntityMention> recognize_gazetteer(const std::string& question,
                                               const KnowledgeDictionary& dict,
                                               const RecognizerPolicy& policy) {
    std::string folded = policy.case_insensitive ? to_lower_ascii(question) : question;
    auto word_spans = word_token_spans(folded);
    std::vector<std::string_view> words;
    words.reserve(word_spans.size());
    for (const auto& s : word_spans) {
        words.emplace_back(folded.data() + s.begin, s.size());
    }

    std::vector<Candidate> candidates;
    // std::map iteration order makes this independent of insertion order.
    for (const auto& [key, entry] : dict.entries()) {
        if (key.size() < policy.min_surface_chars) continue;
        if (std::find(policy.stopwords.begin(), policy.stopwords.end(), key) !=
            policy.stopwords.end()) {
            continue;
        }
        auto surface_words = key_words(key);
        if (surface_words.empty()) continue;
        for (std::size_t start = 0; start + surface_words.size() <= words.size();
             ++start) {
            bool all = true;
            for (std::size_t j = 0; j < surface_words.size(); ++j) {
                if (!word_matches(words[start + j], surface_words[j],
                                  policy.strip_plural_suffix)) {
                    all = false;
                    break;
                }
            }
            if (!all) continue;
            Candidate c;
            c.begin = word_spans[start].begin;
            c.end = word_spans[start + surface_words.size() - 1].end;
            c.key = key;
            c.entry = &entry;
            candidates.push_back(std::move(c));
        }
    }
    return accept_non_overlapping(question, std::move(candidates),
                                  policy.longest_match);
}

std::vector<EntityMention> recognize_external(const std::string& question,
                                              const KnowledgeDictionary& dict,
                                              const RecognizerPolicy& policy,
                                              NerBackend& ner) {
    std::vector<Candidate> candidates;
    for (const auto& span : ner.recognize(question)) {
        if (span.end <= span.start || span.end > question.size()) continue;
        std::string surface = question.substr(span.start, span.end - span.start);
        std::string key = normalize_surface(surface);
        if (key.size() < policy.min_surface_chars) continue;
        if (std::find(policy.stopwords.begin(), policy.stopwords.end(), key) !=
            policy.stopwords.end()) {
            continue;
        }
        Candidate c;
        c.begin = span.start;
        c.end = span.end;
        c.key = std::move(key);
        candidates.push_back(std::move(c));
    }
    auto mentions = accept_non_overlapping(question, std::move(candidates),
                                           policy.longest_match);
    for (auto& m : mentions) {
        m.entry = lookup_surface(dict, m.surface, policy.strip_plural_suffix);
    }
    return mentions;
}

}  // namespace

std::optional<KnowledgeEntry> lookup_surface(const KnowledgeDictionary& dict,
                                             std::string_view surface,
                                             bool strip_plural_suffix) {
    if (auto hit = dict.lookup(surface)) return hit;
    if (!strip_plural_suffix) return std::nullopt;
    for (const auto& variant : plural_variants(trim_view(surface))) {
        if (auto hit = dict.lookup(variant)) return hit;
    }
    return std::nullopt;
}

std::vector<EntityMention> recognize_entities(const std::string& question,
                                              const KnowledgeDictionary& dict,
                                              const RecognizerPolicy& policy,
                                              NerBackend* ner) {
    policy.validate();
    if (trim_view(question).empty()) {
        throw ValidationError("cannot recognize entities in an empty question");
    }
    if (policy.mode == RecognizerMode::external_ner) {
        if (ner == nullptr) {
            throw ConfigError("external_ner mode requires an NER backend");
        }
        return recognize_external(question, dict, policy, *ner);
    }
    return recognize_gazetteer(question, dict, policy);
}

MaskedQuestion mask_question(const std::string& question,
                             std::vector<EntityMention> mentions) {
    if (contains(question, kEntToken) || contains(question, kEodToken)) {
        throw ValidationError("question contains a reserved token; cannot mask");
    }
    std::sort(mentions.begin(), mentions.end(),
              [](const EntityMention& a, const EntityMention& b) {
                  return a.span.begin < b.span.begin;
              });
    std::size_t previous_end = 0;
    for (const auto& m : mentions) {
        if (m.span.begin >= m.span.end || m.span.end > question.size()) {
            throw ValidationError("mention span out of range");
        }
        if (m.span.begin < previous_end) {
            throw ValidationError("mention spans overlap");
        }
        if (question.substr(m.span.begin, m.span.size()) != m.surface) {
            throw ValidationError("mention surface does not match its span");
        }
        previous_end = m.span.end;
    }

    MaskedQuestion out;
    out.original = question;
    std::size_t cursor = 0;
    for (const auto& m : mentions) {
        out.masked.append(question, cursor, m.span.begin - cursor);
        out.masked += kEntToken;
        cursor = m.span.end;
    }
    out.masked.append(question, cursor, question.size() - cursor);
    out.mentions = std::move(mentions);
    return out;
}

std::string unmask(const MaskedQuestion& mq) {
    std::string out;
    std::size_t cursor = 0;
    std::size_t next_mention = 0;
    while (cursor < mq.masked.size()) {
        std::size_t hit = mq.masked.find(kEntToken, cursor);
        if (hit == std::string::npos) {
            out.append(mq.masked, cursor, mq.masked.size() - cursor);
            break;
        }
        out.append(mq.masked, cursor, hit - cursor);
        if (next_mention >= mq.mentions.size()) {
            throw ValidationError("masked question has more placeholders than mentions");
        }
        out += mq.mentions[next_mention++].surface;
        cursor = hit + kEntToken.size();
    }
    if (next_mention != mq.mentions.size()) {
        throw ValidationError("masked question has fewer placeholders than mentions");
    }
    return out;
}

AttachedDescriptions attach_descriptions(const std::vector<EntityMention>& mentions,
                                         const KnowledgeDictionary& dict,
                                         bool strip_plural_suffix) {
    AttachedDescriptions out;
    std::vector<std::string> seen_keys;
    auto seen = [&](const std::string& key) {
        if (std::find(seen_keys.begin(), seen_keys.end(), key) != seen_keys.end()) {
            return true;
        }
        seen_keys.push_back(key);
        return false;
    };
    for (const auto& m : mentions) {
        auto entry = m.entry ? m.entry
                             : lookup_surface(dict, m.surface, strip_plural_suffix);
        if (entry) {
            if (!seen(normalize_surface(entry->surface))) {
                out.entries.push_back(*entry);
            }
        } else {
            if (!seen(normalize_surface(m.surface))) {
                out.unresolved.push_back(m.surface);
            }
        }
    }
    return out;
}

}  // namespace kcomp
