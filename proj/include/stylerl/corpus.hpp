#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stylerl/rng.hpp"

namespace stylerl {

// Whitespace-tokenized sentence.
struct Sentence {
    std::vector<std::string> tokens;

    Sentence() = default;
    explicit Sentence(std::vector<std::string> toks) : tokens(std::move(toks)) {}

    // Splits on runs of whitespace.
    static Sentence parse(std::string_view line);
    std::string str() const; // tokens joined by single spaces

    std::size_t size() const { return tokens.size(); }
    bool empty() const { return tokens.empty(); }

    bool operator==(const Sentence&) const = default;
};

enum class Style : int { Informal = 0, Formal = 1 };

inline Style opposite(Style s) { return s == Style::Informal ? Style::Formal : Style::Informal; }
const char* style_name(Style s);

// The two domains of the synthetic grammar. Their tags are ordinary
// vocabulary tokens placed right after [BOS] when domain tagging is on.
enum class Domain { EntertainmentMusic, FamilyRelationships };

const char* domain_tag(Domain d);
std::span<const std::string_view> all_domain_tags();

struct ParallelPair {
    Sentence source;
    Sentence target;
    Style source_style = Style::Informal;
    std::optional<std::string> domain_tag;

    Style target_style() const { return opposite(source_style); }
    bool operator==(const ParallelPair&) const = default;
};

inline constexpr std::size_t kReferenceCount = 4;

struct EvalItem {
    Sentence source;
    Style source_style = Style::Informal;
    std::array<Sentence, kReferenceCount> references;
    std::optional<std::string> domain_tag;

    Style target_style() const { return opposite(source_style); }
    bool operator==(const EvalItem&) const = default;
};

// One evaluation split with both transfer directions.
struct EvalSplit {
    std::vector<EvalItem> informal_to_formal; // 0 -> 1
    std::vector<EvalItem> formal_to_informal; // 1 -> 0

    std::size_t size() const { return informal_to_formal.size() + formal_to_informal.size(); }
    bool operator==(const EvalSplit&) const = default;
};

struct Corpus {
    // Line-aligned training pairs stored informal -> formal.
    std::vector<ParallelPair> train;
    EvalSplit valid;
    EvalSplit test;
    // Unpaired text for pretraining.
    std::vector<Sentence> unpaired_formal;
    std::vector<Sentence> unpaired_informal;

    bool operator==(const Corpus&) const = default;
};

// Every training pair in both directions: the stored pair followed by its
// swap, in input order.
std::vector<ParallelPair> bidirectional(std::span<const ParallelPair> pairs);

// ---------------------------------------------------------------------------
// Synthetic formality corpus

struct SyntheticSizes {
    std::size_t train_pairs = 1000;
    std::size_t eval_items = 100; // per direction, per split
    std::size_t unpaired = 2000;  // per style
};

Corpus generate_synthetic_corpus(std::uint64_t seed, const SyntheticSizes& sizes,
                                 Domain domain = Domain::EntertainmentMusic);

// A formal sentence drawn from the domain's template grammar.
Sentence sample_formal_sentence(Domain domain, Rng& rng);

// Tokens that mark the informal register (abbreviations, interjections and
// informal sentence endings).
bool is_informal_marker(std::string_view token);

// Formal-register rewrite rules applied in this order:
//   lowercase every token; drop politeness tokens (indeed, certainly);
//   abbreviate (you->u, are->r, to->2, for->4, please->plz, thanks->thx,
//   really->rly, because->cuz, people->ppl); replace a terminal "." by "!!!"
//   (oracle) or one of {"!!","!!!","..."} (stochastic); stochastic mode
//   additionally prepends one of {lol, omg, hey} with probability 0.5.
// Throws UnknownTokenError for tokens outside the grammar vocabulary.
Sentence informalize_oracle(const Sentence& formal);
Sentence informalize_stochastic(const Sentence& formal, Rng& rng);

// Up to four meaning-preserving variants of a formal sentence produced by
// rotating every synonym-table word through its group; variant 0 is the
// sentence itself.
std::array<Sentence, kReferenceCount> synonym_variants(const Sentence& formal);

// ---------------------------------------------------------------------------
// GYAFC-style directory layout
//
//   train/informal, train/formal              line-aligned pairs
//   {valid,test}/informal + formal.ref0..3    informal -> formal items
//   {valid,test}/formal + informal.ref0..3    formal -> informal items
//   unpaired/formal, unpaired/informal        optional pretraining text
//
// UTF-8, LF line endings, one space-separated sentence per line.

// Throws AlignmentError on misaligned files and FormatError on missing ones.
// When `tag` is given, every pair and item is stamped with it.
Corpus load_gyafc_dir(const std::filesystem::path& dir,
                      std::optional<std::string> tag = std::nullopt);

// Throws IoError when the directory cannot be written.
void write_gyafc_dir(const Corpus& corpus, const std::filesystem::path& dir);

// Uniform sample without replacement of ceil(fraction * N) pairs, returned
// in their original relative order; fraction == 1 is the identity.
// Throws ConfigError unless 0 < fraction <= 1.
std::vector<ParallelPair> subset_fraction(std::span<const ParallelPair> pairs, double fraction,
                                          std::uint64_t seed);

} // namespace stylerl
