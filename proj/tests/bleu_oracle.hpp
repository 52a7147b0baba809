#pragma once

// Brute-force corpus BLEU used as an independent check of the library scorer.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "stylerl/bleu.hpp"
#include "stylerl/rng.hpp"

namespace bleu_oracle {

using namespace stylerl;

using Tokens = std::vector<std::string>;

// Occurrences of hyp[start, start+n) in seq, by direct scanning.
inline std::size_t occurrences(const Tokens& seq, const Tokens& hyp, std::size_t start, std::size_t n) {
    std::size_t count = 0;
    for (std::size_t i = 0; i + n <= seq.size(); ++i) {
        bool same = true;
        for (std::size_t k = 0; k < n && same; ++k)
            same = seq[i + k] == hyp[start + k];
        count += same;
    }
    return count;
}

// Brute-force clipped counts: every hypothesis n-gram position is visited,
// and the first position of each distinct n-gram contributes
// min(count in hyp, max count in any reference).
inline BleuStats brute_stats(const Tokens& hyp, const std::vector<Tokens>& refs) {
    BleuStats s;
    s.hyp_length = hyp.size();
    std::size_t best = refs[0].size();
    for (const auto& r : refs) {
        const auto d = [&](std::size_t len) { return len > hyp.size() ? len - hyp.size() : hyp.size() - len; };
        if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best))
            best = r.size();
    }
    s.ref_length = best;
    for (std::size_t n = 1; n <= 4; ++n) {
        if (hyp.size() < n)
            continue;
        s.totals[n - 1] = hyp.size() - n + 1;
        for (std::size_t i = 0; i + n <= hyp.size(); ++i) {
            bool first = true;
            for (std::size_t j = 0; j < i && first; ++j) {
                bool same = true;
                for (std::size_t k = 0; k < n && same; ++k)
                    same = hyp[j + k] == hyp[i + k];
                first = !same;
            }
            if (!first)
                continue;
            std::size_t max_ref = 0;
            for (const auto& r : refs)
                max_ref = std::max(max_ref, occurrences(r, hyp, i, n));
            s.matches[n - 1] += std::min(occurrences(hyp, hyp, i, n), max_ref);
        }
    }
    return s;
}

inline double brute_bleu(const BleuStats& s) {
    double log_sum = 0.0;
    for (std::size_t n = 0; n < 4; ++n) {
        if (s.matches[n] == 0)
            return 0.0;
        log_sum += std::log(static_cast<double>(s.matches[n]) / static_cast<double>(s.totals[n]));
    }
    const double c = static_cast<double>(s.hyp_length), r = static_cast<double>(s.ref_length);
    const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
    return bp * std::exp(log_sum / 4.0);
}

inline Tokens random_tokens(Rng& rng, std::size_t max_len) {
    static const char* alphabet[] = {"a", "b", "c", "d", "e"};
    Tokens t(rng.below(max_len + 1));
    for (auto& x : t)
        x = alphabet[rng.below(3 + rng.below(3))];
    return t;
}

// One random corpus: hypotheses mostly derived from a reference so that
// higher-order n-grams match.
struct RandomCorpus {
    std::vector<Sentence> hyps;
    std::vector<std::vector<Sentence>> refs;
    std::vector<BleuStats> segment_oracle;
    BleuStats oracle;
};

inline RandomCorpus random_corpus(std::uint64_t seed) {
    Rng rng(seed);
    RandomCorpus c;
    const std::size_t segments = 1 + rng.below(8);
    for (std::size_t i = 0; i < segments; ++i) {
        Tokens h = random_tokens(rng, 9);
        std::vector<Tokens> rs(1 + rng.below(4));
        for (auto& r : rs) {
            r = random_tokens(rng, 9);
            if (r.empty())
                r = {"a"};
        }
        if (rng.bernoulli(0.6)) {
            h = rs[rng.below(rs.size())];
            if (!h.empty() && rng.bernoulli(0.5))
                h[rng.below(h.size())] = "e";
        }
        const BleuStats seg = brute_stats(h, rs);
        std::vector<Sentence> ref_sentences;
        for (auto& r : rs)
            ref_sentences.emplace_back(r);
        c.segment_oracle.push_back(seg);
        c.oracle += seg;
        c.hyps.emplace_back(h);
        c.refs.push_back(std::move(ref_sentences));
    }
    return c;
}

} // namespace bleu_oracle
