// End-to-end acceptance run: one PASS/FAIL line per criterion. Exit status
// is nonzero when any criterion fails.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "bleu_oracle.hpp"
#include "gradcheck_cases.hpp"
#include "helpers.hpp"
#include "stylerl/bleu.hpp"
#include "stylerl/checkpoint.hpp"
#include "stylerl/evaluation.hpp"
#include "stylerl/optim.hpp"
#include "stylerl/rewards.hpp"
#include "stylerl/trainer.hpp"

using namespace stylerl;
using namespace testing_helpers;

namespace {

// Tolerances and budgets.
constexpr double kGradTol = 1e-4;
constexpr int kGradConfigs = 20;
constexpr std::size_t kModelCoords = 16;
constexpr double kBleuTol = 1e-9;
constexpr double kHmTol = 0.0005;
constexpr int kPgSamples = 100000;
constexpr double kPgSigmas = 3.0;
constexpr int kRewardCases = 10000;
constexpr double kClassifierAcc = 0.95;
constexpr double kInformalConfidence = 0.9;
constexpr double kClassifierCpuBudget = 5 * 60;
constexpr double kSelfCriticalGain = 0.02;
constexpr double kTrendCpuBudget = 30 * 60;

// Trend-run settings (seed 0, default corpus and model sizes).
constexpr std::size_t kPretrainEpochs = 20;
constexpr std::size_t kPretrainPatience = 3;
constexpr double kFinetuneLr = 3e-4;
constexpr double kTrendLambdaCls = 0.2;

struct Outcome {
    bool pass = true;
    std::string detail;

    void check(bool ok, const std::string& what) {
        pass = pass && ok;
        if (!detail.empty())
            detail += "; ";
        detail += what + (ok ? "" : " [fail]");
    }
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

std::string checkpoint_bytes(const Generator& m) { return serialize_checkpoint(make_checkpoint(m, {})); }
std::string checkpoint_bytes(const TextCnn& c) { return serialize_checkpoint(make_checkpoint(c, {})); }

std::unique_ptr<Generator> clone(const std::string& bytes) { return generator_from_checkpoint(parse_checkpoint(bytes)); }

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
    Outcome o;
    double worst = 0.0;
    std::string worst_name;
    for (const auto& [name, make] : gradcheck_cases::primitive_cases())
        for (int i = 0; i < kGradConfigs; ++i) {
            const double e = gradcheck_cases::case_error(name, make, i);
            if (e > worst) {
                worst = e;
                worst_name = name;
            }
        }
    o.check(worst <= kGradTol, "primitives max rel err " + fmt("%.2e", worst) + " (" + worst_name + ")");

    GradCheckOptions opt;
    opt.max_coords = kModelCoords;
    double loss_err[2] = {0.0, 0.0};
    for (int c = 0; c < kGradConfigs; ++c) {
        Rng pick(500 + c);
        const TransformerConfig arch = tiny_arch(4 * (1 + pick.below(2)), 1 + pick.below(2), 1 + pick.below(2));
        const auto pairs = toy_pairs();
        const ParallelPair pair = pairs[pick.below(pairs.size())];
        for (int f = 0; f < 2; ++f) {
            Rng init(600 + c);
            auto m = make_generator(f == 0 ? ModelFamily::Causal : ModelFamily::Seq2Seq, toy_vocab(), arch, init);
            randomize(m->parameters(), 700 + c, 0.5);
            auto fn = [&](Tape& tape) {
                Binder bind(tape);
                return m->pair_loss(bind, pair);
            };
            loss_err[f] = std::max(loss_err[f], check_gradients(fn, m->parameters(), opt).max_error());
        }
    }
    o.check(loss_err[0] <= kGradTol, "causal LM loss " + fmt("%.2e", loss_err[0]));
    o.check(loss_err[1] <= kGradTol, "seq2seq loss " + fmt("%.2e", loss_err[1]));

    double obj_err = 0.0;
    for (int c = 0; c < kGradConfigs; ++c) {
        Rng pick(800 + c);
        const ModelFamily f = c % 2 ? ModelFamily::Causal : ModelFamily::Seq2Seq;
        Rng init(30 + c);
        auto m = make_generator(f, toy_vocab(), tiny_arch(4 + 4 * pick.below(2)), init);
        randomize(m->parameters(), 130 + c, 0.4);
        auto clf = random_classifier(toy_vocab(), 40 + c);
        RewardConfig cfg;
        cfg.use_cls = pick.bernoulli(0.7);
        cfg.use_bleu = !cfg.use_cls || pick.bernoulli(0.5);
        cfg.lambda_cls = 0.2 + pick.uniform();
        cfg.lambda_bleu = 0.1 + pick.uniform();
        if (f == ModelFamily::Causal)
            cfg.source_reward = pick.bernoulli(0.5);
        auto pairs = toy_pairs();
        pairs.resize(1 + pick.below(3));
        const std::uint64_t sample_seed = 50 + c;
        auto fn = [&](Tape& tape) {
            Binder bind(tape);
            Rng rng(sample_seed);
            return total_objective(bind, pairs, *m, clf.get(), cfg, rng).loss;
        };
        obj_err = std::max(obj_err, check_gradients(fn, m->parameters(), opt).max_error());
    }
    o.check(obj_err <= kGradTol, "total objective " + fmt("%.2e", obj_err));
    return o;
}

Outcome bleu_oracle_equivalence() {
    Outcome o;
    std::size_t count_mismatch = 0;
    double worst = 0.0;
    for (int corpus = 0; corpus < 50; ++corpus) {
        const auto c = bleu_oracle::random_corpus(90000 + corpus);
        for (std::size_t i = 0; i < c.hyps.size(); ++i)
            count_mismatch += !(segment_stats(c.hyps[i], c.refs[i]) == c.segment_oracle[i]);
        count_mismatch += !(corpus_stats(c.hyps, c.refs) == c.oracle);
        worst = std::max(worst, std::abs(corpus_bleu(c.hyps, c.refs) - bleu_oracle::brute_bleu(c.oracle)));
    }
    o.check(count_mismatch == 0, "50 corpora, clipped-count mismatches " + std::to_string(count_mismatch));
    o.check(worst <= kBleuTol, "max |BLEU diff| " + fmt("%.1e", worst));

    auto S = [](const char* t) { return Sentence::parse(t); };
    const std::vector<Sentence> perfect{S("the cat sat on the mat ."), S("u r great !!!")};
    const std::vector<std::vector<Sentence>> perfect_refs{{S("a cat ."), S("the cat sat on the mat .")},
                                                          {S("u r great !!!")}};
    o.check(corpus_bleu(perfect, perfect_refs) == 1.0, "hyp equals a reference -> 1");

    const std::vector<Sentence> h{S("a b c d")};
    const std::vector<std::vector<Sentence>> r{{S("a b c e")}};
    const BleuStats st = corpus_stats(h, r);
    const bool counts = st.matches == std::array<std::size_t, 4>{3, 2, 1, 0} &&
                        st.totals == std::array<std::size_t, 4>{4, 3, 2, 1};
    o.check(counts && corpus_bleu(h, r) == 0.0, "'a b c d' vs 'a b c e' -> 0");

    const double smoothed = std::exp((std::log(3.0 / 4) + std::log(3.0 / 4) + std::log(2.0 / 3) +
                                      std::log(1.0 / 2)) /
                                     4);
    o.check(std::abs(sentence_bleu_smoothed(S("a b c d"), S("a b c e")) - smoothed) <= kBleuTol,
            "smoothed sentence BLEU " + fmt("%.6f", smoothed));
    return o;
}

Outcome harmonic_mean_arithmetic() {
    Outcome o;
    const double rows[3][3] = {{0.577, 0.859, 0.690}, {0.542, 0.923, 0.683}, {0.745, 0.937, 0.830}};
    for (const auto& row : rows) {
        const double hm = harmonic_mean(row[1], row[0]);
        o.check(std::abs(hm - row[2]) <= kHmTol,
                "(" + fmt("%.3f", row[0]) + ", " + fmt("%.3f", row[1]) + ") -> " + fmt("%.5f", hm));
    }
    return o;
}

// One-step policy over three outcomes; the mean surrogate gradient is compared
// with the exact expectation sum_k p_k R_k (e_k - p).
Outcome policy_gradient_unbiasedness() {
    Outcome o;
    const Sentence outcomes[3] = {Sentence::parse("Please watch it ."), Sentence::parse("plz watch it !!!"),
                                  Sentence::parse("watch it")};
    const double theta0[3] = {0.4, -0.3, 0.1};
    auto clf = random_classifier(
        Vocabulary::build(std::vector<Sentence>(std::begin(outcomes), std::end(outcomes))), 17);
    const Sentence ref = outcomes[0];
    const Sentence& greedy = outcomes[0]; // argmax of theta0

    struct RewardType {
        const char* name;
        std::function<double(const Sentence&)> r;
    };
    const RewardType types[] = {
        {"style", [&](const Sentence& s) { return style_reward_target(s, Style::Formal, *clf, 1.0); }},
        {"bleu", [&](const Sentence& s) { return bleu_reward(greedy, s, ref, 0.2); }},
        {"source-style",
         [&](const Sentence& s) { return style_reward_source(s, Style::Informal, *clf, 1.0, ModelFamily::Causal); }},
    };

    double p[3], z = 0.0;
    for (int k = 0; k < 3; ++k)
        z += std::exp(theta0[k]);
    for (int k = 0; k < 3; ++k)
        p[k] = std::exp(theta0[k]) / z;

    for (std::size_t t = 0; t < std::size(types); ++t) {
        double reward[3];
        for (int k = 0; k < 3; ++k)
            reward[k] = types[t].r(outcomes[k]);
        double exact[3] = {0, 0, 0};
        for (int k = 0; k < 3; ++k)
            for (int j = 0; j < 3; ++j)
                exact[j] += p[k] * reward[k] * ((j == k) - p[j]);

        Tensor theta({3}, {theta0[0], theta0[1], theta0[2]}, true);
        Rng rng(4242 + t);
        double sum[3] = {0, 0, 0}, sum_sq[3] = {0, 0, 0};
        for (int i = 0; i < kPgSamples; ++i) {
            const int k = static_cast<int>(rng.categorical(std::span<const double>(p, 3)));
            theta.zero_grad();
            Tape tape;
            Binder bind(tape);
            Var lp = log_softmax(reshape(bind(theta), {1, 3}));
            const int idx[] = {k};
            tape.backward(policy_gradient_term(reward[k], gather(lp, idx)));
            for (int j = 0; j < 3; ++j) {
                const double g = -theta.grad[j]; // R * d log P / d theta
                sum[j] += g;
                sum_sq[j] += g * g;
            }
        }
        double worst_z = 0.0;
        bool ok = true;
        for (int j = 0; j < 3; ++j) {
            const double mean = sum[j] / kPgSamples;
            const double se = std::sqrt(std::max(0.0, sum_sq[j] / kPgSamples - mean * mean) / kPgSamples);
            const double dev = std::abs(mean - exact[j]);
            if (se > 0.0)
                worst_z = std::max(worst_z, dev / se);
            ok = ok && (se > 0.0 ? dev <= kPgSigmas * se : dev <= 1e-12);
        }
        o.check(ok, std::string(types[t].name) + " max " + fmt("%.2f", worst_z) + " SE");
    }
    return o;
}

Outcome reward_contracts() {
    Outcome o;
    const Corpus c = generate_synthetic_corpus(1, {60, 6, 60});
    const Vocabulary vocab = corpus_vocabulary(c);
    auto clf = random_classifier(vocab, 23);
    Rng rng(24);

    std::size_t cls_bad = 0, bleu_bad = 0, equal_bad = 0;
    const std::size_t first_word = Vocabulary::kFirstTag + all_domain_tags().size();
    auto random_sentence = [&](std::size_t min_len) {
        std::vector<std::string> toks(min_len + rng.below(10));
        for (auto& t : toks)
            t = vocab.token(static_cast<int>(first_word + rng.below(vocab.size() - first_word)));
        return Sentence(toks);
    };
    for (int i = 0; i < kRewardCases; ++i) {
        const double lc = 2.0 * rng.uniform(), lb = rng.uniform();
        const Style target = rng.bernoulli(0.5) ? Style::Formal : Style::Informal;
        const double rc = style_reward_target(random_sentence(1), target, *clf, lc);
        cls_bad += !(std::abs(rc) <= lc);
        const Sentence ref = random_sentence(1), g = random_sentence(0), s = random_sentence(0);
        bleu_bad += !(std::abs(bleu_reward(g, s, ref, lb)) <= lb);
        equal_bad += bleu_reward(g, g, ref, lb) != 0.0;
    }
    o.check(cls_bad == 0, "|R_cls| <= lambda violations " + std::to_string(cls_bad) + "/10000");
    o.check(bleu_bad == 0, "|R_bleu| <= lambda violations " + std::to_string(bleu_bad) + "/10000");
    o.check(equal_bad == 0, "R_bleu != 0 for greedy == sample " + std::to_string(equal_bad));

    TrainConfig cfg;
    cfg.model = ModelKind::Seq2SeqScratch;
    cfg.arch = tiny_arch(16);
    cfg.rewards.use_cls = cfg.rewards.use_bleu = true;
    auto m = make_finetune_model(cfg, c);
    const std::string before = checkpoint_bytes(*clf);
    const auto res = finetune(*m, c.train, c.valid, *clf, cfg);
    o.check(checkpoint_bytes(*clf) == before,
            "classifier bytes unchanged over " + std::to_string(res.history.size()) + "-epoch SC+BLEU fine-tune");
    return o;
}

struct TrendInputs {
    Corpus corpus;
    std::unique_ptr<TextCnn> classifier;
};

Outcome classifier_quality(TrendInputs& in) {
    Outcome o;
    const double t0 = cpu_seconds();
    in.corpus = generate_synthetic_corpus(0, {});
    Rng init(0);
    in.classifier = std::make_unique<TextCnn>(corpus_vocabulary(in.corpus), TextCnnConfig{}, init);
    const auto res = train_textcnn(*in.classifier, classifier_data(in.corpus), {});
    const double cpu = cpu_seconds() - t0;
    o.check(res.heldout_accuracy >= kClassifierAcc, "held-out accuracy " + fmt("%.4f", res.heldout_accuracy));
    const double p_informal = in.classifier->confidence(Sentence::parse("plz watch it !!!"))[0];
    o.check(p_informal > kInformalConfidence, "p(informal | 'plz watch it !!!') " + fmt("%.4f", p_informal));
    o.check(cpu <= kClassifierCpuBudget, "cpu " + fmt("%.0f", cpu) + " s");
    return o;
}

Outcome trend_reproduction(const TrendInputs& in) {
    Outcome o;
    if (!in.classifier) {
        o.check(false, "no classifier");
        return o;
    }
    const double t0 = cpu_seconds();
    const Corpus& c = in.corpus;
    const Vocabulary vocab = corpus_vocabulary(c);
    const TextCnn& clf = *in.classifier;
    const std::string clf_before = checkpoint_bytes(clf);

    std::string pretrained;
    {
        Rng init(0);
        MiniSeq2Seq m(vocab, TransformerConfig{}, init);
        PretrainConfig pc;
        pc.max_epochs = kPretrainEpochs;
        pc.patience = kPretrainPatience;
        pretrain_denoising(m, pretraining_text(c), pc);
        pretrained = checkpoint_bytes(m);
    }

    auto run = [&](ModelKind kind, double fraction, bool sc) {
        TrainConfig cfg;
        cfg.model = kind;
        cfg.fraction = fraction;
        std::unique_ptr<Generator> m;
        if (kind == ModelKind::Seq2SeqScratch) {
            Rng init(0);
            m = std::make_unique<MiniSeq2Seq>(vocab, TransformerConfig{}, init);
        } else {
            cfg.lr = kFinetuneLr;
            m = clone(pretrained);
        }
        if (sc) {
            cfg.rewards.use_cls = true;
            cfg.rewards.lambda_cls = kTrendLambdaCls;
        }
        finetune(*m, c.train, c.valid, clf, cfg);
        return evaluate_system(*m, c.test, clf, false).overall;
    };

    const DirectionScores base10 = run(ModelKind::Seq2Seq, 0.1, false);
    const DirectionScores sc10 = run(ModelKind::Seq2Seq, 0.1, true);
    const DirectionScores scratch[3] = {run(ModelKind::Seq2SeqScratch, 0.1, false),
                               run(ModelKind::Seq2SeqScratch, 0.5, false),
                               run(ModelKind::Seq2SeqScratch, 1.0, false)};
    const double cpu = cpu_seconds() - t0;

    o.check(base10.bleu > scratch[2].bleu, "(a) pretrained@10% BLEU " + fmt("%.4f", base10.bleu) +
                                               " vs scratch@100% " + fmt("%.4f", scratch[2].bleu));
    // ACC moves in steps of 1/count; the slack only absorbs rounding.
    o.check(sc10.acc - base10.acc >= kSelfCriticalGain - 1e-12,
            "(b) ACC base " + fmt("%.4f", base10.acc) + " -> +SC " + fmt("%.4f", sc10.acc) + " (BLEU " +
                fmt("%.4f", base10.bleu) + " -> " + fmt("%.4f", sc10.bleu) + ")");
    o.check(scratch[0].bleu <= scratch[1].bleu && scratch[1].bleu <= scratch[2].bleu,
            "(c) scratch BLEU 10/50/100% " + fmt("%.4f", scratch[0].bleu) + " " + fmt("%.4f", scratch[1].bleu) +
                " " + fmt("%.4f", scratch[2].bleu));
    o.check(checkpoint_bytes(clf) == clf_before, "classifier unchanged");
    o.check(cpu <= kTrendCpuBudget, "cpu " + fmt("%.0f", cpu) + " s");
    return o;
}

Outcome determinism_and_persistence() {
    Outcome o;
    const auto dir = fresh_dir("acceptance_persist");

    // corpus generation and GYAFC round trip
    const Corpus a = generate_synthetic_corpus(7, {80, 10, 40});
    const Corpus b = generate_synthetic_corpus(7, {80, 10, 40});
    o.check(a == b, "corpus generation repeatable");
    write_gyafc_dir(a, dir / "c1");
    // the files carry no domain tag; the generator tags everything E&M
    const Corpus loaded = load_gyafc_dir(dir / "c1", std::string(domain_tag(Domain::EntertainmentMusic)));
    write_gyafc_dir(loaded, dir / "c2");
    bool files_equal = true;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir / "c1"))
        if (entry.is_regular_file())
            files_equal = files_equal &&
                          slurp(entry.path()) == slurp(dir / "c2" / std::filesystem::relative(entry.path(), dir / "c1"));
    o.check(loaded == a && files_equal, "GYAFC write -> load -> write round trip");

    // two identical fine-tunes
    auto clf = random_classifier(corpus_vocabulary(a), 31);
    TrainConfig cfg;
    cfg.model = ModelKind::Seq2SeqScratch;
    cfg.arch = tiny_arch(16);
    cfg.max_epochs = 3;
    cfg.rewards.use_cls = cfg.rewards.use_bleu = true;
    std::string logs[2], ckpts[2];
    for (int i = 0; i < 2; ++i) {
        auto m = make_finetune_model(cfg, a);
        const auto res = finetune(*m, a.train, a.valid, *clf, cfg);
        logs[i] = res.log;
        const auto path = dir / ("run" + std::to_string(i) + ".ckpt");
        save_generator(*m, {res.steps, cfg.seed, cfg.hash()}, path);
        ckpts[i] = slurp(path);
    }
    o.check(logs[0] == logs[1], "metrics logs identical");
    o.check(ckpts[0] == ckpts[1], "checkpoints identical");

    // save -> load -> save
    bool resave = true;
    for (auto f : {ModelFamily::Causal, ModelFamily::Seq2Seq}) {
        Rng init(9);
        auto m = make_generator(f, corpus_vocabulary(a), tiny_arch(), init);
        save_generator(*m, {3, 4, 5}, dir / "g1.ckpt");
        CheckpointMeta meta;
        auto back = load_generator(dir / "g1.ckpt", &meta);
        save_generator(*back, meta, dir / "g2.ckpt");
        resave = resave && slurp(dir / "g1.ckpt") == slurp(dir / "g2.ckpt");
    }
    save_classifier(*clf, {}, dir / "k1.ckpt");
    save_classifier(*load_classifier(dir / "k1.ckpt"), {}, dir / "k2.ckpt");
    resave = resave && slurp(dir / "k1.ckpt") == slurp(dir / "k2.ckpt");
    o.check(resave, "checkpoint save -> load -> save byte-identical");
    return o;
}

Outcome guarded(const std::function<Outcome()>& fn) {
    try {
        return fn();
    } catch (const std::exception& e) {
        Outcome o;
        o.check(false, std::string("exception: ") + e.what());
        return o;
    }
}

} // namespace

int main() {
    TrendInputs trend;
    const std::pair<const char*, std::function<Outcome()>> criteria[] = {
        {"gradient correctness", gradient_correctness},
        {"BLEU oracle equivalence", bleu_oracle_equivalence},
        {"harmonic mean arithmetic", harmonic_mean_arithmetic},
        {"policy-gradient unbiasedness", policy_gradient_unbiasedness},
        {"reward contracts", reward_contracts},
        {"classifier quality", [&] { return classifier_quality(trend); }},
        {"trend reproduction", [&] { return trend_reproduction(trend); }},
        {"determinism and persistence", determinism_and_persistence},
    };
    int failures = 0;
    int index = 1;
    for (const auto& [name, fn] : criteria) {
        const double t0 = cpu_seconds();
        const Outcome o = guarded(fn);
        failures += !o.pass;
        std::cout << "CRITERION " << index++ << " " << (o.pass ? "PASS" : "FAIL") << "  " << name << ": "
                  << o.detail << " (" << fmt("%.1f", cpu_seconds() - t0) << " s)" << std::endl;
    }
    std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
    return failures == 0 ? 0 : 1;
}
