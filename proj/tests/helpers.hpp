#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "stylerl/classifier.hpp"
#include "stylerl/corpus.hpp"
#include "stylerl/models.hpp"
#include "stylerl/rng.hpp"
#include "stylerl/vocab.hpp"

namespace testing_helpers {

using namespace stylerl;

inline std::vector<Sentence> toy_sentences() {
    return {Sentence::parse("u r great !!!"), Sentence::parse("You are great ."),
            Sentence::parse("plz watch it cuz it is good !!"), Sentence::parse("Please watch it because it is good ."),
            Sentence::parse("lol ppl rly like the show ..."), Sentence::parse("People really like the show .")};
}

inline std::vector<ParallelPair> toy_pairs() {
    const auto s = toy_sentences();
    return {{s[0], s[1], Style::Informal, std::nullopt},
            {s[3], s[2], Style::Formal, std::nullopt},
            {s[4], s[5], Style::Informal, std::nullopt}};
}

inline Vocabulary toy_vocab() { return Vocabulary::build(toy_sentences()); }

inline TransformerConfig tiny_arch(std::size_t d = 8, std::size_t heads = 2, std::size_t layers = 1) {
    return TransformerConfig{d, heads, layers, 2 * d, 48};
}

// Larger weights than the default init so finite differences see curvature.
inline void randomize(std::vector<ParamRef> params, std::uint64_t seed, double stddev) {
    Rng rng(seed);
    for (auto& p : params)
        for (auto& v : p.tensor->values)
            v = rng.normal(0.0, stddev);
}

// Classifier with random (non-symmetric) weights, frozen.
inline std::unique_ptr<TextCnn> random_classifier(const Vocabulary& vocab, std::uint64_t seed) {
    auto clf = std::make_unique<TextCnn>(vocab, TextCnnConfig{6, {1, 2}, 4});
    randomize(clf->parameters(), seed, 0.8);
    clf->freeze();
    return clf;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline std::filesystem::path fresh_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("stylerl_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace testing_helpers
