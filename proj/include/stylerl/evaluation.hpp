#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stylerl/bleu.hpp"
#include "stylerl/classifier.hpp"
#include "stylerl/models.hpp"

namespace stylerl {

// 2ab/(a+b), 0 when a+b == 0. Throws RangeError unless both lie in [0,1].
double harmonic_mean(double acc, double bleu);

// Fraction of outputs the classifier labels as their target style.
// Throws DataError for an empty list and AlignmentError on a size mismatch.
double style_accuracy(std::span<const Sentence> outputs, std::span<const Style> target_styles,
                      const TextCnn& clf);

struct DirectionScores {
    double bleu = 0.0;
    double acc = 0.0;
    double hm = 0.0;
    std::size_t count = 0;
};

struct EvalReport {
    DirectionScores informal_to_formal;
    DirectionScores formal_to_informal;
    DirectionScores overall; // pooled over both directions
    std::vector<std::pair<std::string, std::string>> config;

    std::string text() const;
    // One `key<TAB>value` line per entry, values printed with %.17g.
    std::string tsv() const;
};

struct EvalOutputs {
    std::vector<Sentence> informal_to_formal;
    std::vector<Sentence> formal_to_informal;
};

// Greedy transfer of every item; items are decoded in parallel.
// When use_tags is false the items' domain tags are ignored.
EvalOutputs transfer_split(const Generator& model, const EvalSplit& split, bool use_tags);

// Scores given outputs against the split.
EvalReport score_outputs(const EvalOutputs& outputs, const EvalSplit& split, const TextCnn& clf);

EvalReport evaluate_system(const Generator& model, const EvalSplit& split, const TextCnn& clf,
                           bool use_tags);

} // namespace stylerl
