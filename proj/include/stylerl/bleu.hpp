#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "stylerl/corpus.hpp"

namespace stylerl {

inline constexpr std::size_t kMaxOrder = 4;

// Sufficient statistics of BLEU; additive across segments.
struct BleuStats {
    std::array<std::size_t, kMaxOrder> matches{}; // clipped n-gram matches, n = 1..4
    std::array<std::size_t, kMaxOrder> totals{};  // hypothesis n-grams
    std::size_t hyp_length = 0;
    std::size_t ref_length = 0;

    BleuStats& operator+=(const BleuStats& o);
    bool operator==(const BleuStats&) const = default;
};

// Statistics of one segment against its references: counts are clipped by
// the per-reference maximum, and the reference length is the one closest to
// the hypothesis length (shorter on ties). Case-sensitive.
BleuStats segment_stats(const Sentence& hyp, std::span<const Sentence> refs);

// Geometric mean of the four precisions times the brevity penalty
// exp(1 - r/c) when c < r. Zero when any match count (or c) is zero.
double bleu_from_stats(const BleuStats& s);

// Segment statistics are computed in parallel and summed in order.
// Throws AlignmentError when the counts differ or a reference set is empty.
BleuStats corpus_stats(std::span<const Sentence> hyps, std::span<const std::vector<Sentence>> refs);
double corpus_bleu(std::span<const Sentence> hyps, std::span<const std::vector<Sentence>> refs);

// Single-reference BLEU with add-one smoothing of the n >= 2 precisions.
// Returns 0 for an empty hypothesis; throws DataError for an empty reference.
double sentence_bleu_smoothed(const Sentence& hyp, const Sentence& ref);

} // namespace stylerl
