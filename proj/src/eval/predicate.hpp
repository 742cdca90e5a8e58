// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace relgen::eval {

// Token with its character span in the source string, so extracted phrases
// are verbatim substrings.
struct Token {
    std::string text;  // lowercased
    std::size_t begin = 0;
    std::size_t end = 0;
    bool placeholder = false;  // "{ }" subject slot in prompt templates
};

enum class Tag {
    determiner,
    auxiliary,
    verb_gerund,   // progressive form ("hugging")
    verb_finite,   // finite form from the verb lexicon ("shakes")
    preposition,
    placeholder,
    noun_or_other,
};

std::vector<Token> tokenize_prompt(const std::string& prompt);

// Pluggable tagger contract; the default is a deterministic rule table over
// small lexicons (auxiliaries, determiners, prepositions, verb stems).
class PosTagger {
public:
    virtual ~PosTagger() = default;
    virtual std::vector<Tag> tag(const std::vector<Token>& tokens) const = 0;
};

class RulePosTagger : public PosTagger {
public:
    std::vector<Tag> tag(const std::vector<Token>& tokens) const override;

    // -ing stem recovery: drop "ing", undouble a final consonant pair, try a
    // restored "e". Returns an empty string when no lexicon stem matches.
    static std::string gerund_stem(const std::string& word);
    static bool is_light_verb(const std::string& stem);
};

// Main verb phrase of the prompt: the root verb with its form preserved,
// plus the particle/direct-object head (with its article) when the verb is a
// light verb ("playing guitar", "riding a bike"). Prepositional phrases are
// excluded. Throws "no predicate" when no verb is found.
std::string extract_predicate(const std::string& prompt);
std::string extract_predicate(const std::string& prompt, const PosTagger& tagger);

}  // namespace relgen::eval
