#include "stylerl/evaluation.hpp"

#include <cstdio>
#include <exception>

#include "stylerl/errors.hpp"

namespace stylerl {

double harmonic_mean(double acc, double bleu) {
    if (!(acc >= 0.0 && acc <= 1.0) || !(bleu >= 0.0 && bleu <= 1.0))
        throw RangeError("harmonic mean inputs must lie in [0,1], got " + std::to_string(acc) + " and " +
                         std::to_string(bleu));
    if (acc + bleu == 0.0)
        return 0.0;
    return 2.0 * acc * bleu / (acc + bleu);
}

double style_accuracy(std::span<const Sentence> outputs, std::span<const Style> target_styles,
                      const TextCnn& clf) {
    if (outputs.empty())
        throw DataError("style accuracy of no outputs");
    if (outputs.size() != target_styles.size())
        throw AlignmentError("outputs and target styles differ in length");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < outputs.size(); ++i)
        hits += !outputs[i].empty() && clf.predict(outputs[i]) == target_styles[i];
    return static_cast<double>(hits) / static_cast<double>(outputs.size());
}

namespace {

std::vector<Sentence> transfer_items(const Generator& model, const std::vector<EvalItem>& items,
                                     bool use_tags) {
    std::vector<Sentence> out(items.size());
    std::vector<std::exception_ptr> errors(items.size());
    const GenerationConfig greedy;
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < items.size(); ++i) {
        try {
            const auto tag = use_tags ? items[i].domain_tag : std::nullopt;
            out[i] = model.generate(items[i].source, tag, greedy).sentence;
        } catch (...) {
            errors[i] = std::current_exception();
        }
    }
    for (const auto& e : errors)
        if (e)
            std::rethrow_exception(e);
    return out;
}

struct Tally {
    BleuStats stats;
    std::size_t hits = 0;
    std::size_t count = 0;
};

Tally tally(const std::vector<Sentence>& outputs, const std::vector<EvalItem>& items, const TextCnn& clf) {
    if (outputs.size() != items.size())
        throw AlignmentError(std::to_string(outputs.size()) + " outputs for " + std::to_string(items.size()) +
                             " evaluation items");
    Tally t;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& refs = items[i].references;
        t.stats += segment_stats(outputs[i], refs);
        // An empty output cannot carry the target style.
        t.hits += !outputs[i].empty() && clf.predict(outputs[i]) == items[i].target_style();
    }
    t.count = items.size();
    return t;
}

DirectionScores scores(const Tally& t) {
    DirectionScores d;
    d.count = t.count;
    if (t.count == 0)
        return d;
    d.bleu = bleu_from_stats(t.stats);
    d.acc = static_cast<double>(t.hits) / static_cast<double>(t.count);
    d.hm = harmonic_mean(d.acc, d.bleu);
    return d;
}

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

} // namespace

EvalOutputs transfer_split(const Generator& model, const EvalSplit& split, bool use_tags) {
    return {transfer_items(model, split.informal_to_formal, use_tags),
            transfer_items(model, split.formal_to_informal, use_tags)};
}

EvalReport score_outputs(const EvalOutputs& outputs, const EvalSplit& split, const TextCnn& clf) {
    if (split.size() == 0)
        throw DataError("evaluation split is empty");
    const Tally a = tally(outputs.informal_to_formal, split.informal_to_formal, clf);
    const Tally b = tally(outputs.formal_to_informal, split.formal_to_informal, clf);
    Tally both = a;
    both.stats += b.stats;
    both.hits += b.hits;
    both.count += b.count;
    EvalReport r;
    r.informal_to_formal = scores(a);
    r.formal_to_informal = scores(b);
    r.overall = scores(both);
    return r;
}

EvalReport evaluate_system(const Generator& model, const EvalSplit& split, const TextCnn& clf,
                           bool use_tags) {
    EvalReport r = score_outputs(transfer_split(model, split, use_tags), split, clf);
    r.config.emplace_back("model", family_name(model.family()));
    r.config.emplace_back("domain_tags", use_tags ? "1" : "0");
    return r;
}

std::string EvalReport::text() const {
    std::string out;
    for (const auto& [k, v] : config)
        out += k + ": " + v + "\n";
    auto row = [&](const char* name, const DirectionScores& d) {
        out += std::string(name) + "  BLEU " + fmt("%.4f", d.bleu) + "  ACC " + fmt("%.4f", d.acc) + "  HM " +
               fmt("%.4f", d.hm) + "  (n=" + std::to_string(d.count) + ")\n";
    };
    row("informal->formal", informal_to_formal);
    row("formal->informal", formal_to_informal);
    row("both            ", overall);
    return out;
}

std::string EvalReport::tsv() const {
    std::string out;
    for (const auto& [k, v] : config)
        out += "config." + k + "\t" + v + "\n";
    auto block = [&](const char* prefix, const DirectionScores& d) {
        const std::string p(prefix);
        out += p + ".bleu\t" + fmt("%.17g", d.bleu) + "\n";
        out += p + ".acc\t" + fmt("%.17g", d.acc) + "\n";
        out += p + ".hm\t" + fmt("%.17g", d.hm) + "\n";
        out += p + ".count\t" + std::to_string(d.count) + "\n";
    };
    block("0to1", informal_to_formal);
    block("1to0", formal_to_informal);
    block("both", overall);
    return out;
}

} // namespace stylerl
