#include "stylerl/bleu.hpp"

#include <cmath>
#include <string>
#include <unordered_map>

#include "stylerl/errors.hpp"

namespace stylerl {

namespace {

using NgramCounts = std::unordered_map<std::string, std::size_t>;

// Keys join tokens with a byte that cannot occur inside a token.
NgramCounts count_ngrams(const Sentence& s, std::size_t n) {
    NgramCounts out;
    const auto& t = s.tokens;
    for (std::size_t i = 0; i + n <= t.size(); ++i) {
        std::string key = t[i];
        for (std::size_t j = 1; j < n; ++j) {
            key += ' ';
            key += t[i + j];
        }
        ++out[key];
    }
    return out;
}

std::size_t closest_ref_length(std::size_t c, std::span<const Sentence> refs) {
    std::size_t best = refs[0].size();
    for (const auto& r : refs) {
        const std::size_t len = r.size();
        const auto dist = [c](std::size_t l) { return l > c ? l - c : c - l; };
        if (dist(len) < dist(best) || (dist(len) == dist(best) && len < best))
            best = len;
    }
    return best;
}

} // namespace

BleuStats& BleuStats::operator+=(const BleuStats& o) {
    for (std::size_t n = 0; n < kMaxOrder; ++n) {
        matches[n] += o.matches[n];
        totals[n] += o.totals[n];
    }
    hyp_length += o.hyp_length;
    ref_length += o.ref_length;
    return *this;
}

BleuStats segment_stats(const Sentence& hyp, std::span<const Sentence> refs) {
    if (refs.empty())
        throw AlignmentError("segment has no references");
    BleuStats s;
    s.hyp_length = hyp.size();
    s.ref_length = closest_ref_length(hyp.size(), refs);
    for (std::size_t n = 1; n <= kMaxOrder; ++n) {
        const auto h = count_ngrams(hyp, n);
        NgramCounts max_ref;
        for (const auto& r : refs)
            for (const auto& [g, c] : count_ngrams(r, n)) {
                auto& m = max_ref[g];
                m = std::max(m, c);
            }
        std::size_t matched = 0;
        for (const auto& [g, c] : h) {
            auto it = max_ref.find(g);
            if (it != max_ref.end())
                matched += std::min(c, it->second);
        }
        s.matches[n - 1] = matched;
        s.totals[n - 1] = hyp.size() >= n ? hyp.size() - n + 1 : 0;
    }
    return s;
}

double bleu_from_stats(const BleuStats& s) {
    if (s.hyp_length == 0)
        return 0.0;
    double log_sum = 0.0;
    for (std::size_t n = 0; n < kMaxOrder; ++n) {
        if (s.matches[n] == 0 || s.totals[n] == 0)
            return 0.0;
        log_sum += std::log(static_cast<double>(s.matches[n]) / static_cast<double>(s.totals[n]));
    }
    const double c = static_cast<double>(s.hyp_length), r = static_cast<double>(s.ref_length);
    const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
    return bp * std::exp(log_sum / static_cast<double>(kMaxOrder));
}

BleuStats corpus_stats(std::span<const Sentence> hyps, std::span<const std::vector<Sentence>> refs) {
    if (hyps.size() != refs.size())
        throw AlignmentError(std::to_string(hyps.size()) + " hypotheses for " + std::to_string(refs.size()) +
                             " reference sets");
    std::vector<BleuStats> per(hyps.size());
    bool missing = false;
#pragma omp parallel for schedule(static) reduction(|| : missing)
    for (std::size_t i = 0; i < hyps.size(); ++i) {
        if (refs[i].empty())
            missing = true;
        else
            per[i] = segment_stats(hyps[i], refs[i]);
    }
    if (missing)
        throw AlignmentError("empty reference set");
    BleuStats total;
    for (const auto& s : per)
        total += s;
    return total;
}

double corpus_bleu(std::span<const Sentence> hyps, std::span<const std::vector<Sentence>> refs) {
    return bleu_from_stats(corpus_stats(hyps, refs));
}

double sentence_bleu_smoothed(const Sentence& hyp, const Sentence& ref) {
    if (ref.empty())
        throw DataError("empty reference sentence");
    if (hyp.empty())
        return 0.0;
    const BleuStats s = segment_stats(hyp, std::span<const Sentence>(&ref, 1));
    if (s.matches[0] == 0)
        return 0.0;
    double log_sum = std::log(static_cast<double>(s.matches[0]) / static_cast<double>(s.totals[0]));
    for (std::size_t n = 1; n < kMaxOrder; ++n)
        log_sum += std::log((static_cast<double>(s.matches[n]) + 1.0) / (static_cast<double>(s.totals[n]) + 1.0));
    const double c = static_cast<double>(s.hyp_length), r = static_cast<double>(s.ref_length);
    const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
    return bp * std::exp(log_sum / static_cast<double>(kMaxOrder));
}

} // namespace stylerl
