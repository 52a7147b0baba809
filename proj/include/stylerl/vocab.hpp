#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "stylerl/corpus.hpp"

namespace stylerl {

// Token <-> id map with fixed special ids:
//   0 <pad>, 1 <unk>, 2 [BOS], 3 [SEP], 4 [EOS], then the domain tags, then
//   corpus tokens ordered by (frequency desc, token asc).
class Vocabulary {
  public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kBos = 2;
    static constexpr int kSep = 3;
    static constexpr int kEos = 4;
    static constexpr int kFirstTag = 5;

    Vocabulary();

    static Vocabulary build(std::span<const Sentence> sentences);

    std::size_t size() const { return tokens_.size(); }
    int id(std::string_view token) const; // kUnk when absent
    const std::string& token(int id) const;
    bool contains(std::string_view token) const;

    // Specials and domain tags.
    bool is_reserved(int id) const { return id >= 0 && id < first_regular_; }

    std::vector<int> encode(const Sentence& s) const;
    // Drops reserved ids.
    Sentence decode(std::span<const int> ids) const;

    // One token per line; byte-stable for a given vocabulary.
    std::string serialize() const;
    static Vocabulary deserialize(std::string_view text);

    bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

  private:
    void add(std::string token);

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
    int first_regular_ = 0;
};

// Causal-LM layout: [BOS] (tag) source [SEP] target [EOS].
// loss_mask[i] marks whether predicting ids[i+1] from ids[..i] counts toward
// the loss: every source and target token plus [SEP] and [EOS]; the domain
// tag is given, never predicted.
struct LmSequence {
    std::vector<int> ids;
    std::vector<std::uint8_t> loss_mask; // size ids.size() - 1
    std::size_t sep_pos = 0;             // index of [SEP] in ids
};

// Encoder/decoder layout: encoder [BOS] (tag) source [EOS]; decoder inputs
// [BOS] target; decoder targets target [EOS].
struct Seq2SeqExample {
    std::vector<int> encoder_ids;
    std::vector<int> decoder_inputs;
    std::vector<int> decoder_targets;
};

// Both throw EmptySentenceError for an empty source or target.
LmSequence encode_lm_sequence(const ParallelPair& pair, const Vocabulary& vocab);
Seq2SeqExample encode_s2s_pair(const ParallelPair& pair, const Vocabulary& vocab);

// Prompts used at generation time.
std::vector<int> lm_prompt(const Sentence& source, const std::optional<std::string>& tag,
                           const Vocabulary& vocab);
std::vector<int> s2s_encoder_input(const Sentence& source, const std::optional<std::string>& tag,
                                   const Vocabulary& vocab);

} // namespace stylerl
