#include "stylerl/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "stylerl/errors.hpp"

namespace stylerl {

Sentence Sentence::parse(std::string_view line) {
    std::vector<std::string> toks;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i])))
            ++i;
        std::size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j])))
            ++j;
        if (j > i)
            toks.emplace_back(line.substr(i, j - i));
        i = j;
    }
    return Sentence(std::move(toks));
}

std::string Sentence::str() const {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i)
            out += ' ';
        out += tokens[i];
    }
    return out;
}

const char* style_name(Style s) { return s == Style::Informal ? "informal" : "formal"; }

namespace {
constexpr std::array<std::string_view, 2> kDomainTags = {"<E&M>", "<F&R>"};
} // namespace

const char* domain_tag(Domain d) {
    return d == Domain::EntertainmentMusic ? kDomainTags[0].data() : kDomainTags[1].data();
}

std::span<const std::string_view> all_domain_tags() { return kDomainTags; }

std::vector<ParallelPair> bidirectional(std::span<const ParallelPair> pairs) {
    std::vector<ParallelPair> out;
    out.reserve(2 * pairs.size());
    for (const auto& p : pairs) {
        out.push_back(p);
        out.push_back(ParallelPair{p.target, p.source, p.target_style(), p.domain_tag});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Grammar

namespace {

using WordList = std::vector<std::string_view>;

// Synonym groups double as slot fillers. A word belongs to at most one group.
const std::vector<WordList>& synonym_groups() {
    static const std::vector<WordList> groups = {
        {"watch", "view", "see"},
        {"like", "enjoy", "appreciate", "love"},
        {"think", "believe", "feel", "suppose"},
        {"excellent", "wonderful", "superb", "outstanding"},
        {"terrible", "awful", "dreadful", "horrible"},
        {"boring", "dull", "tedious", "tiresome"},
        {"funny", "amusing", "hilarious", "humorous"},
        {"very", "extremely", "quite", "truly"},
        {"buy", "purchase", "get"},
        {"talk", "speak"},
        {"help", "assist", "support"},
        {"important", "essential", "vital", "crucial"},
        {"lucky", "fortunate", "blessed"},
        {"kind", "generous", "thoughtful", "considerate"},
        {"trust", "respect", "admire"},
        {"advice", "guidance", "counsel"},
        {"happy", "glad", "pleased", "delighted"},
        {"smart", "clever", "intelligent", "wise"},
        {"movie", "film"},
        {"song", "track"},
    };
    return groups;
}

WordList concat(std::initializer_list<WordList> lists) {
    WordList out;
    for (const auto& l : lists)
        out.insert(out.end(), l.begin(), l.end());
    return out;
}

constexpr std::size_t kNameCount = 1200;

const std::vector<std::string_view>& templates(Domain d);
std::string lowercase(std::string_view s);

// Lowercase pseudo-word names (CV CV plus an optional final n/r/s), taken
// from the 19600 combinations in a fixed strided order. They are the
// open-class tail of the grammar: style-neutral and untouched by the rules.
const std::vector<std::string>& name_list() {
    static const std::vector<std::string> names = [] {
        static constexpr std::string_view onsets = "bdfgklmnprstvz";
        static constexpr std::string_view vowels = "aeiou";
        static constexpr std::array<std::string_view, 4> finals = {"", "n", "r", "s"};
        constexpr std::size_t syllables = onsets.size() * vowels.size();
        constexpr std::size_t combos = syllables * syllables * finals.size();
        std::vector<std::string> out;
        // Never reuse a word the rest of the grammar already owns.
        std::unordered_set<std::string> taken;
        for (const auto& g : synonym_groups())
            for (auto w : g)
                taken.emplace(w);
        for (Domain d : {Domain::EntertainmentMusic, Domain::FamilyRelationships})
            for (auto tpl : templates(d))
                for (const auto& tok : Sentence::parse(tpl).tokens)
                    taken.insert(lowercase(tok));
        for (std::size_t i = 0; out.size() < kNameCount; ++i) {
            std::size_t k = (i * 7919) % combos;
            const std::size_t f = k % finals.size();
            k /= finals.size();
            std::string w;
            for (int s = 0; s < 2; ++s) {
                const std::size_t syl = k % syllables;
                k /= syllables;
                w += onsets[syl / vowels.size()];
                w += vowels[syl % vowels.size()];
            }
            w += finals[f];
            if (taken.insert(w).second)
                out.push_back(std::move(w));
        }
        return out;
    }();
    return names;
}

const std::map<std::string_view, WordList>& slots() {
    static const std::map<std::string_view, WordList> table = [] {
        const auto& g = synonym_groups();
        std::map<std::string_view, WordList> t;
        t["watch"] = g[0];
        t["like"] = g[1];
        t["think"] = g[2];
        t["good"] = g[3];
        t["adj"] = concat({g[3], g[4], g[5], g[6]});
        t["negadj"] = concat({g[4], g[5]});
        t["very"] = g[7];
        t["buy"] = g[8];
        t["talk"] = g[9];
        t["help"] = g[10];
        t["important"] = g[11];
        t["lucky"] = g[12];
        t["kind"] = g[13];
        t["trust"] = g[14];
        t["advice"] = g[15];
        t["happy"] = g[16];
        t["smart"] = g[17];
        t["em_noun"] = {"movie", "film", "song", "track", "album", "show", "series", "concert"};
        t["artist"] = {"band", "singer", "actor", "director", "musician"};
        t["fr_noun"] = {"friend",  "mother",   "father",   "brother",   "sister",    "partner",
                        "husband", "wife",     "cousin",   "neighbor",  "aunt",      "uncle",
                        "son",     "daughter", "boyfriend", "girlfriend", "roommate", "colleague"};
        t["time"] = {"today", "tonight", "tomorrow", "again"};
        t["really"] = {"really"};
        t["name"] = WordList(name_list().begin(), name_list().end());
        return t;
    }();
    return table;
}

const std::vector<std::string_view>& templates(Domain d) {
    static const std::vector<std::string_view> em = {
        "Please {watch} the {em_noun} by {name} because it is {very} {good} .",
        "I {think} that the {em_noun} by the {artist} {name} is {very} {adj} .",
        "You should {really?} {watch} this {em_noun} with {name} {time} .",
        "We {like} the {em_noun} by this {artist} {name} indeed .",
        "Thanks for the {em_noun} by {name} , it is {very} {good} .",
        "People {really?} {like} the {artist} {name} because the {em_noun} is {adj} .",
        "It is certainly a {very} {adj} {em_noun} by {name} .",
        "I do not {like} this {em_noun} by {name} because it is {very} {negadj} .",
        "They are going to {buy} the new {em_noun} by {name} for you {time} .",
        "You are going to {like} the {artist} {name} , the {em_noun} is {good} .",
    };
    static const std::vector<std::string_view> fr = {
        "Please {talk} to your {fr_noun} {name} {time} because it is {very} {important} .",
        "I {think} that you should {help} your {fr_noun} {name} {time} .",
        "You are {very} {lucky} to have such a {kind} {fr_noun} like {name} .",
        "We {really?} {trust} our {fr_noun} {name} and our {fr_noun} indeed .",
        "Thanks for helping my {fr_noun} {name} , it was {very} {kind} of you .",
        "People should {talk} to their {fr_noun} {name} for {advice} {time} .",
        "My {fr_noun} {name} and I are certainly {very} {happy} together .",
        "It is {important} to {trust} your {fr_noun} {name} because they are {very} {smart} .",
        "I {really?} {think} that your {fr_noun} {name} is {very} {kind} to you .",
        "You should ask your {fr_noun} {name} for {advice} {time} .",
    };
    return d == Domain::EntertainmentMusic ? em : fr;
}

const std::unordered_map<std::string_view, std::string_view>& abbreviations() {
    static const std::unordered_map<std::string_view, std::string_view> table = {
        {"you", "u"},      {"are", "r"},     {"to", "2"},       {"for", "4"},    {"please", "plz"},
        {"thanks", "thx"}, {"really", "rly"}, {"because", "cuz"}, {"people", "ppl"},
    };
    return table;
}

constexpr std::array<std::string_view, 2> kPoliteness = {"indeed", "certainly"};
constexpr std::array<std::string_view, 3> kInterjections = {"lol", "omg", "hey"};
constexpr std::array<std::string_view, 3> kEndings = {"!!", "!!!", "..."};

std::string lowercase(std::string_view s) {
    std::string out(s);
    for (char& c : out)
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

const std::unordered_set<std::string>& grammar_vocabulary() {
    static const std::unordered_set<std::string> vocab = [] {
        std::unordered_set<std::string> v;
        auto add = [&](std::string_view w) {
            v.emplace(w);
            v.emplace(lowercase(w));
        };
        for (Domain d : {Domain::EntertainmentMusic, Domain::FamilyRelationships})
            for (auto tpl : templates(d))
                for (const auto& tok : Sentence::parse(tpl).tokens)
                    if (tok.front() != '{')
                        add(tok);
        for (const auto& [name, words] : slots())
            for (auto w : words)
                add(w);
        for (const auto& [from, to] : abbreviations())
            add(to);
        for (auto w : kInterjections)
            add(w);
        for (auto w : kEndings)
            add(w);
        return v;
    }();
    return vocab;
}

void check_known(const Sentence& s) {
    const auto& vocab = grammar_vocabulary();
    for (const auto& tok : s.tokens)
        if (!vocab.contains(tok))
            throw UnknownTokenError("token '" + tok + "' is outside the grammar vocabulary");
}

Sentence informalize_impl(const Sentence& formal, Rng* rng) {
    check_known(formal);
    std::vector<std::string> out;
    out.reserve(formal.size() + 1);
    for (const auto& tok : formal.tokens) {
        std::string low = lowercase(tok);
        if (std::find(kPoliteness.begin(), kPoliteness.end(), low) != kPoliteness.end())
            continue;
        if (auto it = abbreviations().find(low); it != abbreviations().end())
            low = std::string(it->second);
        out.push_back(std::move(low));
    }
    if (!out.empty() && out.back() == ".")
        out.back() = rng ? std::string(kEndings[rng->below(kEndings.size())]) : std::string("!!!");
    if (rng && rng->bernoulli(0.5))
        out.insert(out.begin(), std::string(kInterjections[rng->below(kInterjections.size())]));
    return Sentence(std::move(out));
}

} // namespace

bool is_informal_marker(std::string_view token) {
    for (const auto& [from, to] : abbreviations())
        if (token == to)
            return true;
    return std::find(kInterjections.begin(), kInterjections.end(), token) != kInterjections.end() ||
           std::find(kEndings.begin(), kEndings.end(), token) != kEndings.end();
}

Sentence informalize_oracle(const Sentence& formal) { return informalize_impl(formal, nullptr); }

Sentence informalize_stochastic(const Sentence& formal, Rng& rng) {
    return informalize_impl(formal, &rng);
}

Sentence sample_formal_sentence(Domain domain, Rng& rng) {
    const auto& tpls = templates(domain);
    const auto tpl = Sentence::parse(tpls[rng.below(tpls.size())]);
    std::vector<std::string> out;
    for (const auto& tok : tpl.tokens) {
        if (tok.front() != '{') {
            out.push_back(tok);
            continue;
        }
        std::string name = tok.substr(1, tok.size() - 2);
        const bool optional = name.back() == '?';
        if (optional) {
            name.pop_back();
            if (!rng.bernoulli(0.5))
                continue;
        }
        const auto& words = slots().at(name);
        out.emplace_back(words[rng.below(words.size())]);
    }
    return Sentence(std::move(out));
}

std::array<Sentence, kReferenceCount> synonym_variants(const Sentence& formal) {
    const auto& groups = synonym_groups();
    // (position, group, index within group)
    struct Site {
        std::size_t pos, group, index;
    };
    std::vector<Site> sites;
    for (std::size_t p = 0; p < formal.size(); ++p)
        for (std::size_t g = 0; g < groups.size(); ++g) {
            auto it = std::find(groups[g].begin(), groups[g].end(), formal.tokens[p]);
            if (it != groups[g].end())
                sites.push_back({p, g, static_cast<std::size_t>(it - groups[g].begin())});
        }
    std::array<Sentence, kReferenceCount> out;
    for (std::size_t r = 0; r < kReferenceCount; ++r) {
        out[r] = formal;
        for (const auto& s : sites) {
            const auto& grp = groups[s.group];
            out[r].tokens[s.pos] = std::string(grp[(s.index + r) % grp.size()]);
        }
    }
    return out;
}

Corpus generate_synthetic_corpus(std::uint64_t seed, const SyntheticSizes& sizes, Domain domain) {
    if (sizes.train_pairs == 0 || sizes.eval_items == 0 || sizes.unpaired == 0)
        throw ConfigError("synthetic corpus sizes must be at least 1");

    // Draw order: all distinct formal sentences from stream 0 (train, valid
    // 0->1, valid 1->0, test 0->1, test 1->0, unpaired formal, unpaired
    // informal sources), then stochastic informalization from stream 1.
    Rng sentence_rng = Rng(seed).fork(0);
    Rng style_rng = Rng(seed).fork(1);

    const std::size_t total = sizes.train_pairs + 4 * sizes.eval_items + 2 * sizes.unpaired;
    std::vector<Sentence> formal;
    formal.reserve(total);
    std::set<std::vector<std::string>> seen;
    std::size_t attempts = 0;
    while (formal.size() < total) {
        if (++attempts > 50 * total + 10000)
            throw ConfigError("grammar cannot supply " + std::to_string(total) + " distinct sentences");
        Sentence s = sample_formal_sentence(domain, sentence_rng);
        if (seen.insert(s.tokens).second)
            formal.push_back(std::move(s));
    }

    const std::string tag = domain_tag(domain);
    Corpus c;
    std::size_t next = 0;
    for (std::size_t i = 0; i < sizes.train_pairs; ++i, ++next) {
        const Sentence& f = formal[next];
        c.train.push_back({informalize_stochastic(f, style_rng), f, Style::Informal, tag});
    }
    auto fill_split = [&](EvalSplit& split) {
        for (std::size_t i = 0; i < sizes.eval_items; ++i, ++next) {
            const Sentence& f = formal[next];
            split.informal_to_formal.push_back(
                {informalize_stochastic(f, style_rng), Style::Informal, synonym_variants(f), tag});
        }
        for (std::size_t i = 0; i < sizes.eval_items; ++i, ++next) {
            const Sentence& f = formal[next];
            auto variants = synonym_variants(f);
            EvalItem item{f, Style::Formal, {}, tag};
            for (std::size_t r = 0; r < kReferenceCount; ++r)
                item.references[r] = informalize_oracle(variants[r]);
            split.formal_to_informal.push_back(std::move(item));
        }
    };
    fill_split(c.valid);
    fill_split(c.test);
    for (std::size_t i = 0; i < sizes.unpaired; ++i, ++next)
        c.unpaired_formal.push_back(formal[next]);
    for (std::size_t i = 0; i < sizes.unpaired; ++i, ++next)
        c.unpaired_informal.push_back(informalize_stochastic(formal[next], style_rng));
    return c;
}

// ---------------------------------------------------------------------------
// GYAFC directory I/O

namespace {

namespace fs = std::filesystem;

std::vector<Sentence> read_lines(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in)
        throw FormatError("missing file " + file.string());
    std::vector<Sentence> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        Sentence s = Sentence::parse(line);
        if (s.empty())
            throw FormatError(file.string() + ":" + std::to_string(lineno) + ": empty sentence");
        out.push_back(std::move(s));
    }
    return out;
}

void write_lines(const fs::path& file, const std::vector<Sentence>& lines) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot write " + file.string());
    for (const auto& s : lines)
        out << s.str() << '\n';
    if (!out)
        throw IoError("write failed for " + file.string());
}

void check_aligned(const fs::path& a, std::size_t na, const fs::path& b, std::size_t nb) {
    if (na != nb)
        throw AlignmentError(a.string() + " has " + std::to_string(na) + " lines but " + b.string() +
                             " has " + std::to_string(nb));
}

std::vector<EvalItem> read_items(const fs::path& dir, Style source_style,
                                 const std::optional<std::string>& tag) {
    const std::string src_name = style_name(source_style);
    const std::string ref_name = style_name(opposite(source_style));
    const auto sources = read_lines(dir / src_name);
    std::vector<EvalItem> items(sources.size());
    for (std::size_t i = 0; i < sources.size(); ++i) {
        items[i].source = sources[i];
        items[i].source_style = source_style;
        items[i].domain_tag = tag;
    }
    for (std::size_t r = 0; r < kReferenceCount; ++r) {
        const fs::path ref_file = dir / (ref_name + ".ref" + std::to_string(r));
        const auto refs = read_lines(ref_file);
        check_aligned(dir / src_name, sources.size(), ref_file, refs.size());
        for (std::size_t i = 0; i < refs.size(); ++i)
            items[i].references[r] = refs[i];
    }
    return items;
}

void write_items(const fs::path& dir, Style source_style, const std::vector<EvalItem>& items) {
    const std::string src_name = style_name(source_style);
    const std::string ref_name = style_name(opposite(source_style));
    std::vector<Sentence> sources;
    for (const auto& it : items)
        sources.push_back(it.source);
    write_lines(dir / src_name, sources);
    for (std::size_t r = 0; r < kReferenceCount; ++r) {
        std::vector<Sentence> refs;
        for (const auto& it : items)
            refs.push_back(it.references[r]);
        write_lines(dir / (ref_name + ".ref" + std::to_string(r)), refs);
    }
}

} // namespace

Corpus load_gyafc_dir(const fs::path& dir, std::optional<std::string> tag) {
    Corpus c;
    const auto informal = read_lines(dir / "train" / "informal");
    const auto formal = read_lines(dir / "train" / "formal");
    check_aligned(dir / "train" / "informal", informal.size(), dir / "train" / "formal", formal.size());
    for (std::size_t i = 0; i < informal.size(); ++i)
        c.train.push_back({informal[i], formal[i], Style::Informal, tag});
    for (auto [name, split] : {std::pair{"valid", &c.valid}, std::pair{"test", &c.test}}) {
        split->informal_to_formal = read_items(dir / name, Style::Informal, tag);
        split->formal_to_informal = read_items(dir / name, Style::Formal, tag);
    }
    if (fs::exists(dir / "unpaired" / "formal"))
        c.unpaired_formal = read_lines(dir / "unpaired" / "formal");
    if (fs::exists(dir / "unpaired" / "informal"))
        c.unpaired_informal = read_lines(dir / "unpaired" / "informal");
    return c;
}

void write_gyafc_dir(const Corpus& corpus, const fs::path& dir) {
    std::error_code ec;
    for (const char* sub : {"train", "valid", "test", "unpaired"}) {
        fs::create_directories(dir / sub, ec);
        if (ec)
            throw IoError("cannot create " + (dir / sub).string() + ": " + ec.message());
    }
    std::vector<Sentence> informal, formal;
    for (const auto& p : corpus.train) {
        const bool forward = p.source_style == Style::Informal;
        informal.push_back(forward ? p.source : p.target);
        formal.push_back(forward ? p.target : p.source);
    }
    write_lines(dir / "train" / "informal", informal);
    write_lines(dir / "train" / "formal", formal);
    for (auto [name, split] : {std::pair{"valid", &corpus.valid}, std::pair{"test", &corpus.test}}) {
        write_items(dir / name, Style::Informal, split->informal_to_formal);
        write_items(dir / name, Style::Formal, split->formal_to_informal);
    }
    write_lines(dir / "unpaired" / "formal", corpus.unpaired_formal);
    write_lines(dir / "unpaired" / "informal", corpus.unpaired_informal);
}

std::vector<ParallelPair> subset_fraction(std::span<const ParallelPair> pairs, double fraction,
                                          std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw ConfigError("fraction must lie in (0, 1], got " + std::to_string(fraction));
    if (fraction == 1.0)
        return {pairs.begin(), pairs.end()};
    // ceil with a small guard so 0.1 * 1000 is 100, not 101
    const double exact = fraction * static_cast<double>(pairs.size());
    auto keep = static_cast<std::size_t>(std::ceil(exact - 1e-9));
    keep = std::min(keep, pairs.size());
    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);
    order.resize(keep);
    std::sort(order.begin(), order.end());
    std::vector<ParallelPair> out;
    out.reserve(keep);
    for (std::size_t i : order)
        out.push_back(pairs[i]);
    return out;
}

} // namespace stylerl
