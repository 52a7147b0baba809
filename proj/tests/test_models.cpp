#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "stylerl/errors.hpp"
#include "stylerl/optim.hpp"
#include "stylerl/trainer.hpp"

using namespace stylerl;
using namespace testing_helpers;

namespace {

// NLL recomputed from the model's own logits, one log-softmax per row.
double enumerated_nll(std::span<const double> logits, std::size_t V, std::span<const int> targets) {
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (targets[i] < 0)
            continue;
        const auto row = logits.subspan(i * V, V);
        double mx = row[0];
        for (double v : row)
            mx = std::max(mx, v);
        double z = 0.0;
        for (double v : row)
            z += std::exp(v - mx);
        total += -(row[static_cast<std::size_t>(targets[i])] - mx - std::log(z));
        ++n;
    }
    return total / static_cast<double>(n);
}

void zero_all(std::vector<ParamRef> params) {
    for (auto& p : params)
        std::fill(p.tensor->values.begin(), p.tensor->values.end(), 0.0);
}

} // namespace

TEST(CausalLM, UniformPredictorLossIsLogV) {
    Rng init(1);
    MiniCausalLM m(toy_vocab(), tiny_arch(), init);
    zero_all(m.parameters());
    for (const auto& p : toy_pairs()) {
        Tape tape(false);
        Binder bind(tape);
        EXPECT_NEAR(m.pair_loss(bind, p).item(), std::log(static_cast<double>(m.vocab().size())), 1e-9);
    }
}

TEST(CausalLM, LossMatchesEnumeratedNll) {
    // two-word vocabulary, one layer
    const Vocabulary vocab = Vocabulary::build(std::vector<Sentence>{Sentence::parse("a b")});
    Rng init(2);
    MiniCausalLM m(vocab, tiny_arch(4, 1, 1), init);
    randomize(m.parameters(), 3, 0.7);
    const ParallelPair pair{Sentence::parse("a b a"), Sentence::parse("b b"), Style::Informal, std::nullopt};
    const LmSequence seq = encode_lm_sequence(pair, vocab);
    std::vector<int> targets;
    for (std::size_t i = 0; i + 1 < seq.ids.size(); ++i)
        targets.push_back(seq.loss_mask[i] ? seq.ids[i + 1] : -1);
    Tape tape(false);
    Binder bind(tape);
    const std::vector<int> inputs(seq.ids.begin(), seq.ids.end() - 1);
    Var logits = m.logits(bind, inputs);
    EXPECT_NEAR(m.lm_loss(bind, seq).item(), enumerated_nll(logits.values(), vocab.size(), targets), 1e-12);
}

TEST(CausalLM, ForcedPredictionHasZeroLoss) {
    // zero weights plus a huge head bias on "a": every prediction is "a"
    const Vocabulary vocab = Vocabulary::build(std::vector<Sentence>{Sentence::parse("a")});
    Rng init(0);
    MiniCausalLM m(vocab, tiny_arch(4, 1, 1), init);
    zero_all(m.parameters());
    Tape tape(false);
    Binder bind(tape);
    const int a = vocab.id("a");
    for (auto& p : m.parameters())
        if (p.name == "head.b")
            p.tensor->values[static_cast<std::size_t>(a)] = 1000.0;
    LmSequence seq;
    seq.ids = {Vocabulary::kBos, a, a, a};
    seq.loss_mask = {1, 1, 1};
    seq.sep_pos = 0;
    EXPECT_NEAR(m.lm_loss(bind, seq).item(), 0.0, 1e-9);
}

TEST(Seq2Seq, UniformPredictorLossIsLogV) {
    Rng init(1);
    MiniSeq2Seq m(toy_vocab(), tiny_arch(), init);
    zero_all(m.parameters());
    for (const auto& p : toy_pairs()) {
        Tape tape(false);
        Binder bind(tape);
        EXPECT_NEAR(m.pair_loss(bind, p).item(), std::log(static_cast<double>(m.vocab().size())), 1e-9);
    }
}

TEST(Seq2Seq, LossMatchesEnumeratedNll) {
    const Vocabulary vocab = Vocabulary::build(std::vector<Sentence>{Sentence::parse("a b")});
    Rng init(2);
    MiniSeq2Seq m(vocab, tiny_arch(4, 1, 1), init);
    randomize(m.parameters(), 4, 0.7);
    const ParallelPair pair{Sentence::parse("a b a"), Sentence::parse("b b a"), Style::Informal, std::nullopt};
    const auto ex = encode_s2s_pair(pair, vocab);
    Tape tape(false);
    Binder bind(tape);
    Var logits = m.decoder_logits(bind, m.encode(bind, ex.encoder_ids), ex.decoder_inputs);
    EXPECT_NEAR(m.s2s_loss(bind, ex).item(), enumerated_nll(logits.values(), vocab.size(), ex.decoder_targets),
                1e-12);
}

TEST(Seq2Seq, ForcedPredictionHasZeroLoss) {
    const Vocabulary vocab = Vocabulary::build(std::vector<Sentence>{Sentence::parse("a")});
    Rng init(0);
    MiniSeq2Seq m(vocab, tiny_arch(4, 1, 1), init);
    zero_all(m.parameters());
    const int a = vocab.id("a");
    for (auto& p : m.parameters())
        if (p.name == "head.b")
            p.tensor->values[static_cast<std::size_t>(a)] = 1000.0;
    Seq2SeqExample ex{{Vocabulary::kBos, a, Vocabulary::kEos}, {Vocabulary::kBos, a, a}, {a, a, a}};
    Tape tape(false);
    Binder bind(tape);
    EXPECT_NEAR(m.s2s_loss(bind, ex).item(), 0.0, 1e-9);
}

// ---------------------------------------------------------------------------
// Generation contracts, for both families.

class GeneratorContract : public ::testing::TestWithParam<ModelFamily> {
  protected:
    std::unique_ptr<Generator> make(std::uint64_t seed) {
        Rng init(seed);
        auto m = make_generator(GetParam(), toy_vocab(), tiny_arch(), init);
        randomize(m->parameters(), seed + 10, 0.5);
        return m;
    }
};

TEST_P(GeneratorContract, GreedyIsDeterministic) {
    auto m = make(1);
    for (const auto& s : toy_sentences()) {
        const auto a = m->generate(s, std::nullopt, {});
        const auto b = m->generate(s, std::nullopt, {});
        EXPECT_EQ(a.ids, b.ids);
        EXPECT_EQ(a.logprobs, b.logprobs);
    }
}

TEST_P(GeneratorContract, StepLogprobsSumToTeacherForcedLogprob) {
    auto m = make(2);
    for (auto mode : {GenerationConfig::Mode::Greedy, GenerationConfig::Mode::Sample}) {
        for (std::uint64_t seed = 0; seed < 6; ++seed) {
            GenerationConfig cfg;
            cfg.mode = mode;
            cfg.seed = seed;
            const Sentence src = toy_sentences()[seed % 6];
            const auto g = m->generate(src, std::nullopt, cfg);
            Tape tape(false);
            Binder bind(tape);
            EXPECT_NEAR(m->sequence_logprob(bind, src, std::nullopt, g.ids).item(), g.total_logprob(), 1e-9);
        }
    }
}

TEST_P(GeneratorContract, MaxLengthCap) {
    EXPECT_EQ(default_max_len(10), 20u);
    EXPECT_EQ(default_max_len(1), 7u);
    auto m = make(3);
    // push the model away from [EOS] so the cap is what stops decoding
    for (auto& p : m->parameters())
        if (p.name == "head.b")
            p.tensor->values[Vocabulary::kEos] = -50.0;
    const Sentence src = Sentence::parse("a b c d e f g h i j");
    const auto g = m->generate(src, std::nullopt, {});
    EXPECT_EQ(g.ids.size(), 20u);
    EXPECT_FALSE(g.finished);
}

TEST_P(GeneratorContract, AppendingTokensNeverRaisesLogprob) {
    auto m = make(4);
    const Sentence src = toy_sentences()[0];
    std::vector<int> cand;
    double last = 0.0;
    for (int tok : {7, 9, 8, 10, Vocabulary::kEos}) {
        cand.push_back(tok);
        Tape tape(false);
        Binder bind(tape);
        const double lp = m->sequence_logprob(bind, src, std::nullopt, cand).item();
        EXPECT_LE(lp, last);
        last = lp;
    }
}

TEST_P(GeneratorContract, EosOnlyCandidateIsOneStep) {
    auto m = make(5);
    for (auto& p : m->parameters())
        if (p.name == "head.b")
            p.tensor->values[Vocabulary::kEos] = 50.0;
    const Sentence src = toy_sentences()[1];
    const auto g = m->generate(src, std::nullopt, {});
    ASSERT_EQ(g.ids, std::vector<int>{Vocabulary::kEos});
    EXPECT_TRUE(g.finished);
    EXPECT_TRUE(g.sentence.empty());
    Tape tape(false);
    Binder bind(tape);
    EXPECT_NEAR(m->sequence_logprob(bind, src, std::nullopt, g.ids).item(), g.logprobs[0], 1e-12);
}

TEST_P(GeneratorContract, SamplingIsSeedDeterministic) {
    auto m = make(6);
    GenerationConfig cfg;
    cfg.mode = GenerationConfig::Mode::Sample;
    cfg.seed = 42;
    const auto a = m->generate(toy_sentences()[2], std::nullopt, cfg);
    const auto b = m->generate(toy_sentences()[2], std::nullopt, cfg);
    EXPECT_EQ(a.ids, b.ids);
}

TEST_P(GeneratorContract, SourceTooLongForContextThrows) {
    Rng init(0);
    TransformerConfig arch = tiny_arch();
    arch.context = 8;
    auto m = make_generator(GetParam(), toy_vocab(), arch, init);
    const Sentence src = Sentence::parse("a a a a a a a a a a a a");
    EXPECT_THROW(m->generate(src, std::nullopt, {}), LengthError);
}

INSTANTIATE_TEST_SUITE_P(Families, GeneratorContract,
                         ::testing::Values(ModelFamily::Causal, ModelFamily::Seq2Seq),
                         [](const auto& info) { return std::string(family_name(info.param)) == "causal" ? "Causal" : "Seq2Seq"; });

// ---------------------------------------------------------------------------
// Finite-difference checks of both training losses on random tiny models.

TEST(ModelGradients, LossesOnRandomTinyConfigs) {
    const auto pairs = toy_pairs();
    for (int i = 0; i < 20; ++i) {
        Rng pick(500 + i);
        const std::size_t heads = 1 + pick.below(2);
        const std::size_t d = heads * (2 + pick.below(3));
        const std::size_t layers = 1 + pick.below(2);
        const ParallelPair& pair = pairs[pick.below(pairs.size())];
        for (auto family : {ModelFamily::Causal, ModelFamily::Seq2Seq}) {
            Rng init(i);
            auto m = make_generator(family, toy_vocab(), TransformerConfig{d, heads, layers, 2 * d, 48}, init);
            randomize(m->parameters(), 900 + i, 0.4);
            auto fn = [&](Tape& tape) {
                Binder bind(tape);
                return m->pair_loss(bind, pair);
            };
            const auto report = check_gradients(fn, m->parameters(), GradCheckOptions{1e-5, 12});
            EXPECT_LE(report.max_error(), 1e-4) << family_name(family) << " config " << i;
        }
    }
}

// ---------------------------------------------------------------------------

TEST(Noise, SeedDeterministicAndBounded) {
    const Sentence s = Sentence::parse("a b c d e f g h");
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        Rng a(seed), b(seed);
        const Sentence x = add_noise(s, {}, a);
        EXPECT_EQ(x, add_noise(s, {}, b));
        EXPECT_LE(x.size(), s.size());
        EXPECT_FALSE(x.empty());
    }
    Rng rng(0);
    EXPECT_EQ(add_noise(s, {0.0, 0.0}, rng), s);
    EXPECT_EQ(add_noise(s, {0.0, 1.0}, rng).str(), "<unk>");
}

TEST(Pretraining, CausalPerplexityBeatsUniformAndDecreases) {
    const Corpus c = generate_synthetic_corpus(0, {20, 2, 150});
    Rng init(0);
    MiniCausalLM m(corpus_vocabulary(c), tiny_arch(16, 2, 1), init);
    PretrainConfig cfg;
    cfg.max_epochs = 3;
    cfg.lr = 3e-3;
    const auto text = pretraining_text(c);
    const auto res = pretrain_causal(m, text, cfg);
    EXPECT_LT(res.heldout_perplexity, static_cast<double>(m.vocab().size()));
    ASSERT_GE(res.heldout_loss.size(), 2u);
    EXPECT_LT(res.heldout_loss[1], res.heldout_loss[0]);
    // deterministic given the seed
    Rng init2(0);
    MiniCausalLM m2(corpus_vocabulary(c), tiny_arch(16, 2, 1), init2);
    EXPECT_EQ(pretrain_causal(m2, text, cfg).heldout_loss, res.heldout_loss);
}

TEST(Pretraining, NoiselessDenoisingLearnsToCopy) {
    std::vector<Sentence> text;
    for (int i = 0; i < 40; ++i)
        text.push_back(toy_sentences()[static_cast<std::size_t>(i) % 6]);
    Rng init(0);
    MiniSeq2Seq m(toy_vocab(), tiny_arch(16, 2, 1), init);
    PretrainConfig cfg;
    cfg.noise = {0.0, 0.0};
    cfg.max_epochs = 40;
    cfg.patience = 40;
    cfg.lr = 1e-2;
    cfg.batch_size = 8;
    const auto res = pretrain_denoising(m, text, cfg);
    EXPECT_LT(res.train_loss.back(), 0.05);
    EXPECT_GT(reconstruction_accuracy(m, toy_sentences(), {0.0, 0.0}, 0), 0.95);
}
