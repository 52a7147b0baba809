#include <gtest/gtest.h>

#include "helpers.hpp"
#include "stylerl/checkpoint.hpp"
#include "stylerl/errors.hpp"
#include "stylerl/trainer.hpp"

using namespace stylerl;
using namespace testing_helpers;

namespace {

// Reference rule: best = first index of the maximum; stop once the epochs
// after it number at least `patience`.
StopDecision stop_oracle(const std::vector<double>& h, std::size_t patience) {
    StopDecision d;
    if (h.empty())
        return d;
    std::size_t best = 0;
    for (std::size_t i = 1; i < h.size(); ++i)
        if (h[i] > h[best])
            best = i;
    d.best_epoch = best + 1;
    d.stop = h.size() - 1 - best >= patience;
    return d;
}

class TinyRun : public ::testing::Test {
  protected:
    static void SetUpTestSuite() {
        corpus_ = new Corpus(generate_synthetic_corpus(0, {24, 4, 12}));
        clf_ = random_classifier(corpus_vocabulary(*corpus_), 3).release();
    }
    static void TearDownTestSuite() {
        delete corpus_;
        delete clf_;
    }

    static TrainConfig config(bool rewards) {
        TrainConfig cfg;
        cfg.model = ModelKind::Seq2SeqScratch;
        cfg.max_epochs = 2;
        cfg.batch_size = 8;
        cfg.arch = tiny_arch();
        cfg.rewards.use_cls = cfg.rewards.use_bleu = rewards;
        return cfg;
    }

    static std::unique_ptr<Generator> model(const TrainConfig& cfg) { return make_finetune_model(cfg, *corpus_); }

    static Corpus* corpus_;
    static TextCnn* clf_;
};
Corpus* TinyRun::corpus_ = nullptr;
TextCnn* TinyRun::clf_ = nullptr;

std::string drop_line(const std::string& log, const std::string& key) {
    std::stringstream in(log);
    std::string out;
    for (std::string line; std::getline(in, line);)
        if (!line.starts_with(key + "\t"))
            out += line + "\n";
    return out;
}

} // namespace

TEST(EarlyStopping, Examples) {
    EXPECT_FALSE(early_stopping_check(std::vector<double>{0.3, 0.4, 0.5}, 3).stop);
    const auto flat = early_stopping_check(std::vector<double>{0.5, 0.5, 0.5, 0.5}, 3);
    EXPECT_TRUE(flat.stop);
    EXPECT_EQ(flat.best_epoch, 1u);
    const auto late = early_stopping_check(std::vector<double>{0.5, 0.6, 0.6, 0.6, 0.6}, 3);
    EXPECT_TRUE(late.stop);
    EXPECT_EQ(late.best_epoch, 2u);
    EXPECT_FALSE(early_stopping_check(std::vector<double>{}, 3).stop);
}

TEST(EarlyStopping, AgreesWithReferenceRule) {
    Rng rng(1);
    for (int i = 0; i < 5000; ++i) {
        std::vector<double> h(1 + rng.below(10));
        for (auto& v : h)
            v = static_cast<double>(rng.below(4)) / 4.0; // many ties
        const std::size_t patience = 1 + rng.below(4);
        const auto got = early_stopping_check(h, patience);
        const auto want = stop_oracle(h, patience);
        EXPECT_EQ(got.stop, want.stop);
        EXPECT_EQ(got.best_epoch, want.best_epoch);
    }
}

TEST(TrainConfig, DefaultsFollowTheModelFamily) {
    EXPECT_EQ(default_lr(ModelKind::Causal), 5e-5);
    EXPECT_EQ(default_lr(ModelKind::Seq2Seq), 3e-5);
    TrainConfig cfg;
    EXPECT_EQ(cfg.batch_size, 32u);
    EXPECT_EQ(cfg.patience, 3u);
    EXPECT_EQ(cfg.rewards.lambda_cls, 1.0);
    EXPECT_EQ(cfg.rewards.lambda_bleu, 0.2);
    cfg.lr = 1e-4;
    EXPECT_EQ(cfg.learning_rate(), 1e-4);
}

TEST(TrainConfig, ParsesKeyValueText) {
    const auto kv = parse_config_text("# comment\nmodel = causal\n\n  lr=2e-4  # trailing\nfraction = 0.5\n");
    ASSERT_EQ(kv.size(), 3u);
    TrainConfig cfg;
    for (const auto& [k, v] : kv)
        apply_config_value(cfg, k, v);
    EXPECT_EQ(cfg.model, ModelKind::Causal);
    EXPECT_EQ(cfg.learning_rate(), 2e-4);
    EXPECT_EQ(cfg.fraction, 0.5);

    EXPECT_THROW(parse_config_text("model causal\n"), FormatError);
    EXPECT_THROW(apply_config_value(cfg, "learning_rate", "1"), UsageError);
    EXPECT_THROW(apply_config_value(cfg, "batch_size", "many"), UsageError);
    EXPECT_THROW(apply_config_value(cfg, "model", "lstm"), UsageError);
}

TEST(TrainConfig, ValidationAndHash) {
    TrainConfig cfg;
    const auto h = cfg.hash();
    EXPECT_EQ(h, TrainConfig{}.hash());
    cfg.rewards.lambda_cls = 0.5;
    EXPECT_NE(cfg.hash(), h);
    cfg.fraction = 0.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg.fraction = 1.5;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg.fraction = 1.0;
    cfg.patience = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

// ---------------------------------------------------------------------------

TEST(Checkpoint, GeneratorRoundTripIsByteIdentical) {
    for (auto f : {ModelFamily::Causal, ModelFamily::Seq2Seq}) {
        Rng init(4);
        auto m = make_generator(f, toy_vocab(), tiny_arch(), init);
        randomize(m->parameters(), 5, 0.3);
        const CheckpointMeta meta{17, 3, 0xabcdef};
        const std::string first = serialize_checkpoint(make_checkpoint(*m, meta));
        const Checkpoint parsed = parse_checkpoint(first);
        EXPECT_EQ(parsed.meta, meta);
        auto back = generator_from_checkpoint(parsed);
        EXPECT_EQ(back->family(), f);
        EXPECT_EQ(serialize_checkpoint(make_checkpoint(*back, meta)), first);
        const auto a = m->generate(toy_sentences()[0], std::nullopt, {});
        const auto b = back->generate(toy_sentences()[0], std::nullopt, {});
        EXPECT_EQ(a.ids, b.ids);
        EXPECT_EQ(a.logprobs, b.logprobs);
    }
}

TEST(Checkpoint, ClassifierRoundTripThroughFile) {
    auto clf = random_classifier(toy_vocab(), 6);
    const auto dir = fresh_dir("ckpt");
    save_classifier(*clf, {}, dir / "a.ckpt");
    auto back = load_classifier(dir / "a.ckpt");
    save_classifier(*back, {}, dir / "b.ckpt");
    EXPECT_EQ(slurp(dir / "a.ckpt"), slurp(dir / "b.ckpt"));
    for (const auto& s : toy_sentences())
        EXPECT_EQ(clf->confidence(s), back->confidence(s));
}

TEST(Checkpoint, CorruptOrMismatchedInputsThrow) {
    Rng init(7);
    auto m = make_generator(ModelFamily::Seq2Seq, toy_vocab(), tiny_arch(), init);
    const std::string bytes = serialize_checkpoint(make_checkpoint(*m, {}));
    for (std::size_t cut : {std::size_t{0}, std::size_t{5}, bytes.size() / 2, bytes.size() - 1})
        EXPECT_THROW(parse_checkpoint(bytes.substr(0, cut)), FormatError) << "cut " << cut;
    std::string bad = bytes;
    bad[0] = 'X';
    EXPECT_THROW(parse_checkpoint(bad), FormatError);
    EXPECT_THROW(parse_checkpoint(bytes + "junk"), FormatError);
    EXPECT_THROW(classifier_from_checkpoint(parse_checkpoint(bytes)), FormatError);
    auto clf = random_classifier(toy_vocab(), 1);
    EXPECT_THROW(generator_from_checkpoint(make_checkpoint(*clf, {})), FormatError);
    EXPECT_THROW(load_generator("/nonexistent/model.ckpt"), IoError);
}

// ---------------------------------------------------------------------------

TEST_F(TinyRun, FinetuneIsDeterministic) {
    const TrainConfig cfg = config(true);
    std::string logs[2], ckpts[2];
    for (int i = 0; i < 2; ++i) {
        auto m = model(cfg);
        const auto res = finetune(*m, corpus_->train, corpus_->valid, *clf_, cfg);
        logs[i] = res.log;
        ckpts[i] = serialize_checkpoint(make_checkpoint(*m, {res.steps, cfg.seed, cfg.hash()}));
        EXPECT_EQ(res.steps, 2 * ((2 * 24 + 7) / 8));
    }
    EXPECT_EQ(logs[0], logs[1]);
    EXPECT_EQ(ckpts[0], ckpts[1]);
}

TEST_F(TinyRun, ClassifierIsUntouchedByFinetuning) {
    const std::string before = serialize_checkpoint(make_checkpoint(*clf_, {}));
    const TrainConfig cfg = config(true);
    auto m = model(cfg);
    finetune(*m, corpus_->train, corpus_->valid, *clf_, cfg);
    EXPECT_EQ(serialize_checkpoint(make_checkpoint(*clf_, {})), before);
}

TEST_F(TinyRun, ZeroWeightsReproducePlainFinetuning) {
    TrainConfig zero = config(true);
    zero.rewards.lambda_cls = zero.rewards.lambda_bleu = 0.0;
    const TrainConfig plain = config(false);
    auto a = model(zero);
    auto b = model(plain);
    const auto ra = finetune(*a, corpus_->train, corpus_->valid, *clf_, zero);
    const auto rb = finetune(*b, corpus_->train, corpus_->valid, *clf_, plain);
    EXPECT_EQ(drop_line(ra.log, "config_hash"), drop_line(rb.log, "config_hash"));
    EXPECT_EQ(serialize_checkpoint(make_checkpoint(*a, {})), serialize_checkpoint(make_checkpoint(*b, {})));
}

TEST_F(TinyRun, ContractErrors) {
    TrainConfig cfg = config(false);
    auto m = model(cfg);
    TextCnn unfrozen(corpus_vocabulary(*corpus_), TextCnnConfig{4, {1}, 2});
    for (auto& p : unfrozen.parameters())
        p.tensor->requires_grad = true;
    EXPECT_THROW(finetune(*m, corpus_->train, corpus_->valid, unfrozen, cfg), ConfigError);
    EXPECT_THROW(finetune(*m, std::span<const ParallelPair>{}, corpus_->valid, *clf_, cfg), DataError);
    cfg.model = ModelKind::Causal;
    EXPECT_THROW(finetune(*m, corpus_->train, corpus_->valid, *clf_, cfg), ConfigError);
    cfg.init.clear();
    EXPECT_THROW(make_finetune_model(cfg, *corpus_), ConfigError);
}

TEST_F(TinyRun, AblationWritesEveryCellAndResumes) {
    const auto dir = fresh_dir("ablation");
    TrainConfig base = config(false);
    base.max_epochs = 1;
    std::map<std::string, std::string> kv{{"fractions", "0.5,1"}, {"variants", "base,sc"}, {"seeds", "0"}};
    const AblationSpec spec = parse_ablation_spec(kv, base);
    int built = 0;
    const ModelFactory factory = [&](std::uint64_t seed) {
        ++built;
        TrainConfig c = base;
        c.seed = seed;
        return model(c);
    };
    const auto rows = run_ablation(spec, *corpus_, *clf_, base, factory, dir);
    EXPECT_EQ(rows.size(), 4u);
    EXPECT_EQ(built, 4);
    const std::string csv = slurp(dir / "ablation.csv");
    EXPECT_TRUE(csv.starts_with("fraction,variant,seed,bleu,acc,hm\n"));
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
    EXPECT_NE(slurp(dir / "curve.tsv").find("sc\t0.5\t"), std::string::npos);

    // a second run finds every cell and trains nothing
    const auto again = run_ablation(spec, *corpus_, *clf_, base, factory, dir);
    EXPECT_EQ(built, 4);
    ASSERT_EQ(again.size(), rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        EXPECT_NEAR(again[i].hm, rows[i].hm, 5e-7);
    EXPECT_EQ(slurp(dir / "ablation.csv"), csv);
}

TEST(AblationSpec, Validation) {
    TrainConfig train;
    EXPECT_THROW(parse_ablation_spec({{"fractions", "0.5,0.1"}}, train), ConfigError);
    EXPECT_THROW(parse_ablation_spec({{"fractions", "0,1"}}, train), ConfigError);
    EXPECT_THROW(parse_ablation_spec({{"variants", "base,dropout"}}, train), UsageError);
    const auto spec = parse_ablation_spec({{"variants", "sc+bleu"}, {"lambda_cls", "0.3"}}, train);
    EXPECT_EQ(spec.variants, std::vector<RewardVariant>{RewardVariant::SCBLEU});
    EXPECT_EQ(train.rewards.lambda_cls, 0.3);
    const auto r = variant_rewards(RewardVariant::SC, train.rewards);
    EXPECT_TRUE(r.use_cls);
    EXPECT_FALSE(r.use_bleu);
}
