// SPDX-License-Identifier: Apache-2.0
#include "eval/predicate.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "core/error.hpp"

namespace relgen::eval {

namespace {

const std::set<std::string> kAuxiliaries = {"is", "are", "was", "were", "am", "be", "been"};
const std::set<std::string> kDeterminers = {"a", "an", "the"};
const std::set<std::string> kPrepositions = {
    "in",   "on",    "at",     "with",   "under", "over",  "across", "through", "by",
    "along", "during", "after", "before", "down",  "up",    "near",   "against", "for",
    "from", "to",     "of",     "into",   "onto",  "behind", "beside", "between", "above",
    "below", "around", "off",   "out"};

// stems of the verbs the harness understands; covers the packaged relation
// templates plus common variants
const std::set<std::string> kVerbStems = {
    "play", "eat",   "dance", "lift",  "read", "ski",   "sleep", "cook", "sing",
    "ride", "carry", "fence", "shake", "kiss", "wrestle", "hug",  "fight", "sit",
    "run",  "walk",  "jump",  "swim",  "hold", "chase",  "push", "pull", "serenade",
    "stand", "lie",  "climb", "drive", "feed", "follow", "kick", "throw", "watch"};

// light verbs take their bare-object head (plus article) into the predicate
const std::set<std::string> kLightVerbs = {"play", "ride", "eat", "lift", "read", "cook",
                                           "shake"};

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(),
                                                  suffix) == 0;
}

}  // namespace

std::vector<Token> tokenize_prompt(const std::string& prompt) {
    std::vector<Token> tokens;
    std::size_t i = 0, n = prompt.size();
    while (i < n) {
        unsigned char c = static_cast<unsigned char>(prompt[i]);
        if (c == '{') {
            std::size_t j = prompt.find('}', i);
            std::size_t end = j == std::string::npos ? n : j + 1;
            tokens.push_back({"{}", i, end, true});
            i = end;
        } else if (std::isalpha(c)) {
            std::size_t j = i;
            std::string word;
            while (j < n && (std::isalpha(static_cast<unsigned char>(prompt[j])) ||
                             prompt[j] == '\'')) {
                word.push_back(static_cast<char>(
                    std::tolower(static_cast<unsigned char>(prompt[j]))));
                ++j;
            }
            tokens.push_back({word, i, j, false});
            i = j;
        } else {
            ++i;
        }
    }
    return tokens;
}

std::string RulePosTagger::gerund_stem(const std::string& word) {
    if (!ends_with(word, "ing") || word.size() < 5) return "";
    std::string base = word.substr(0, word.size() - 3);
    if (kVerbStems.count(base)) return base;
    // doubled final consonant: hugging -> hug, sitting -> sit
    if (base.size() >= 2 && base[base.size() - 1] == base[base.size() - 2]) {
        std::string undoubled = base.substr(0, base.size() - 1);
        if (kVerbStems.count(undoubled)) return undoubled;
    }
    // dropped e: riding -> ride, dancing -> dance
    std::string restored = base + "e";
    if (kVerbStems.count(restored)) return restored;
    return "";
}

bool RulePosTagger::is_light_verb(const std::string& stem) { return kLightVerbs.count(stem) != 0; }

std::vector<Tag> RulePosTagger::tag(const std::vector<Token>& tokens) const {
    std::vector<Tag> tags(tokens.size(), Tag::noun_or_other);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const std::string& w = tokens[i].text;
        if (tokens[i].placeholder) {
            tags[i] = Tag::placeholder;
        } else if (kAuxiliaries.count(w)) {
            tags[i] = Tag::auxiliary;
        } else if (kDeterminers.count(w)) {
            tags[i] = Tag::determiner;
        } else if (kPrepositions.count(w)) {
            tags[i] = Tag::preposition;
        } else if (ends_with(w, "ing")) {
            // a known stem tags the gerund on its own; otherwise a nearby
            // auxiliary ("is ... dancing") licenses it
            bool known = !gerund_stem(w).empty();
            bool licensed = false;
            for (std::size_t back = 1; back <= 2 && back <= i; ++back)
                if (tags[i - back] == Tag::auxiliary) licensed = true;
            if (known || licensed) tags[i] = Tag::verb_gerund;
        } else if (ends_with(w, "s") && w.size() >= 3) {
            // finite 3rd-person form: shakes -> shake, carries -> carry
            std::string stem = w.substr(0, w.size() - 1);
            if (kVerbStems.count(stem)) {
                tags[i] = Tag::verb_finite;
            } else if (ends_with(w, "ies")) {
                stem = w.substr(0, w.size() - 3) + "y";
                if (kVerbStems.count(stem)) tags[i] = Tag::verb_finite;
            } else if (ends_with(w, "es")) {
                stem = w.substr(0, w.size() - 2);
                if (kVerbStems.count(stem)) tags[i] = Tag::verb_finite;
            }
        }
    }
    return tags;
}

std::string extract_predicate(const std::string& prompt) {
    RulePosTagger tagger;
    return extract_predicate(prompt, tagger);
}

std::string extract_predicate(const std::string& prompt, const PosTagger& tagger) {
    core::require(!prompt.empty(), "extract_predicate: empty prompt");
    auto tokens = tokenize_prompt(prompt);
    core::require(!tokens.empty(), "extract_predicate: no tokens in prompt");
    auto tags = tagger.tag(tokens);

    // main verb: first gerund, else first finite verb
    std::size_t verb = tokens.size();
    for (std::size_t i = 0; i < tokens.size(); ++i)
        if (tags[i] == Tag::verb_gerund) {
            verb = i;
            break;
        }
    if (verb == tokens.size())
        for (std::size_t i = 0; i < tokens.size(); ++i)
            if (tags[i] == Tag::verb_finite) {
                verb = i;
                break;
            }
    core::require(verb < tokens.size(), "extract_predicate: no predicate");

    std::size_t phrase_end = tokens[verb].end;

    std::string stem;
    if (tags[verb] == Tag::verb_gerund) {
        stem = RulePosTagger::gerund_stem(tokens[verb].text);
    } else {
        stem = tokens[verb].text.substr(0, tokens[verb].text.size() - 1);
        if (!kVerbStems.count(stem)) {
            if (ends_with(tokens[verb].text, "ies"))
                stem = tokens[verb].text.substr(0, tokens[verb].text.size() - 3) + "y";
            else if (ends_with(tokens[verb].text, "es"))
                stem = tokens[verb].text.substr(0, tokens[verb].text.size() - 2);
        }
    }

    if (RulePosTagger::is_light_verb(stem)) {
        // attach the direct object head: optional article, then a plain noun;
        // stop at prepositions, placeholders and punctuation
        std::size_t i = verb + 1;
        if (i < tokens.size() && tags[i] == Tag::determiner) ++i;
        if (i < tokens.size() && tags[i] == Tag::noun_or_other) phrase_end = tokens[i].end;
    }

    return prompt.substr(tokens[verb].begin, phrase_end - tokens[verb].begin);
}

}  // namespace relgen::eval
