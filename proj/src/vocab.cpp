#include "stylerl/vocab.hpp"

#include <algorithm>
#include <map>

#include "stylerl/errors.hpp"

namespace stylerl {

Vocabulary::Vocabulary() {
    for (const char* s : {"<pad>", "<unk>", "[BOS]", "[SEP]", "[EOS]"})
        add(s);
    for (auto tag : all_domain_tags())
        add(std::string(tag));
    first_regular_ = static_cast<int>(tokens_.size());
}

void Vocabulary::add(std::string token) {
    ids_.emplace(token, static_cast<int>(tokens_.size()));
    tokens_.push_back(std::move(token));
}

Vocabulary Vocabulary::build(std::span<const Sentence> sentences) {
    std::map<std::string, std::size_t> counts;
    for (const auto& s : sentences)
        for (const auto& t : s.tokens)
            ++counts[t];
    std::vector<std::pair<std::string, std::size_t>> ordered(counts.begin(), counts.end());
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    Vocabulary v;
    for (auto& [tok, n] : ordered)
        if (!v.contains(tok))
            v.add(tok);
    return v;
}

int Vocabulary::id(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    return it == ids_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return ids_.contains(std::string(token)); }

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
        throw RangeError("token id " + std::to_string(id) + " outside vocabulary of " +
                         std::to_string(tokens_.size()));
    return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const Sentence& s) const {
    std::vector<int> out;
    out.reserve(s.size());
    for (const auto& t : s.tokens)
        out.push_back(id(t));
    return out;
}

Sentence Vocabulary::decode(std::span<const int> ids) const {
    std::vector<std::string> toks;
    for (int id : ids)
        if (!is_reserved(id))
            toks.push_back(token(id));
    return Sentence(std::move(toks));
}

std::string Vocabulary::serialize() const {
    std::string out;
    for (const auto& t : tokens_) {
        out += t;
        out += '\n';
    }
    return out;
}

Vocabulary Vocabulary::deserialize(std::string_view text) {
    Vocabulary v;
    std::size_t pos = 0, index = 0;
    while (pos < text.size()) {
        const std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos)
            throw FormatError("vocabulary text must end with a newline");
        std::string tok(text.substr(pos, nl - pos));
        if (index < v.tokens_.size()) {
            if (tok != v.tokens_[index])
                throw FormatError("vocabulary reserved entry " + std::to_string(index) + " is '" + tok +
                                  "', expected '" + v.tokens_[index] + "'");
        } else {
            if (tok.empty() || v.contains(tok))
                throw FormatError("bad or duplicate vocabulary token at line " + std::to_string(index));
            v.add(std::move(tok));
        }
        ++index;
        pos = nl + 1;
    }
    if (index < v.tokens_.size())
        throw FormatError("vocabulary is missing reserved entries");
    return v;
}

namespace {

void require_nonempty(const Sentence& s, const char* what) {
    if (s.empty())
        throw EmptySentenceError(std::string("empty ") + what + " sentence");
}

void append_tag(std::vector<int>& ids, const std::optional<std::string>& tag, const Vocabulary& vocab) {
    if (!tag)
        return;
    const int id = vocab.id(*tag);
    if (id == Vocabulary::kUnk)
        throw ConfigError("domain tag '" + *tag + "' is not in the vocabulary");
    ids.push_back(id);
}

} // namespace

std::vector<int> lm_prompt(const Sentence& source, const std::optional<std::string>& tag,
                           const Vocabulary& vocab) {
    require_nonempty(source, "source");
    std::vector<int> ids{Vocabulary::kBos};
    append_tag(ids, tag, vocab);
    for (int id : vocab.encode(source))
        ids.push_back(id);
    ids.push_back(Vocabulary::kSep);
    return ids;
}

std::vector<int> s2s_encoder_input(const Sentence& source, const std::optional<std::string>& tag,
                                   const Vocabulary& vocab) {
    require_nonempty(source, "source");
    std::vector<int> ids{Vocabulary::kBos};
    append_tag(ids, tag, vocab);
    for (int id : vocab.encode(source))
        ids.push_back(id);
    ids.push_back(Vocabulary::kEos);
    return ids;
}

LmSequence encode_lm_sequence(const ParallelPair& pair, const Vocabulary& vocab) {
    require_nonempty(pair.target, "target");
    LmSequence seq;
    seq.ids = lm_prompt(pair.source, pair.domain_tag, vocab);
    seq.sep_pos = seq.ids.size() - 1;
    for (int id : vocab.encode(pair.target))
        seq.ids.push_back(id);
    seq.ids.push_back(Vocabulary::kEos);
    seq.loss_mask.assign(seq.ids.size() - 1, 1);
    if (pair.domain_tag)
        seq.loss_mask[0] = 0; // [BOS] -> tag
    return seq;
}

Seq2SeqExample encode_s2s_pair(const ParallelPair& pair, const Vocabulary& vocab) {
    require_nonempty(pair.target, "target");
    Seq2SeqExample ex;
    ex.encoder_ids = s2s_encoder_input(pair.source, pair.domain_tag, vocab);
    const auto tgt = vocab.encode(pair.target);
    ex.decoder_inputs.push_back(Vocabulary::kBos);
    ex.decoder_inputs.insert(ex.decoder_inputs.end(), tgt.begin(), tgt.end());
    ex.decoder_targets = tgt;
    ex.decoder_targets.push_back(Vocabulary::kEos);
    return ex;
}

} // namespace stylerl
