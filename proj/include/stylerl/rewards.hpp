#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "stylerl/classifier.hpp"
#include "stylerl/models.hpp"

namespace stylerl {

struct RewardConfig {
    double lambda_cls = 1.0;
    double lambda_bleu = 0.2;
    bool use_cls = false;
    bool use_bleu = false;
    // Source-segment style term of the causal LM. Unset means on for the
    // causal LM and off for seq2seq; explicitly on for seq2seq is an error.
    std::optional<bool> source_reward;

    // A reward contributes only when enabled with a positive weight.
    bool cls_active() const { return use_cls && lambda_cls > 0.0; }
    bool bleu_active() const { return use_bleu && lambda_bleu > 0.0; }
    bool source_active(ModelFamily f) const;
    bool any_active() const { return cls_active() || bleu_active(); }

    // Throws ConfigError for negative weights or a source reward on seq2seq.
    void validate(ModelFamily family) const;
};

// lambda * (p(target) - p(other)) for a binary confidence pair.
double style_reward_target(const std::array<double, 2>& confidence, Style target, double lambda);
// Throws EmptySentenceError for an empty sample.
double style_reward_target(const Sentence& sample, Style target, const TextCnn& clf, double lambda);

// lambda * (p(source) - p(other)): the source-style term, opposite in sign to
// style_reward_target for the same confidences.
double style_reward_source(const std::array<double, 2>& confidence, Style source, double lambda);
// Throws ConfigError unless family is the causal LM.
double style_reward_source(const Sentence& regenerated, Style source, const TextCnn& clf, double lambda,
                           ModelFamily family);

// Self-critical BLEU reward lambda * (bleu(greedy, ref) - bleu(sample, ref))
// with smoothed sentence BLEU. Throws DataError for an empty reference.
double bleu_reward(const Sentence& greedy, const Sentence& sample, const Sentence& reference, double lambda);

// -R * logprob; R is a constant. Throws NumericsError for non-finite R or
// log-probability.
Var policy_gradient_term(double reward, Var logprob);

struct RewardSample {
    Generation sample;                // y^s
    std::optional<Generation> greedy; // y', when the BLEU reward is active
    double r_cls = 0.0;
    double r_bleu = 0.0;
    std::optional<Generation> source_sample; // x' (causal LM)
    double r_cls_source = 0.0;
};

struct Objective {
    Var loss;               // base + policy-gradient surrogate
    double base_loss = 0.0; // mean per-pair base loss
    std::vector<RewardSample> samples;
};

// Base loss (mean over the batch) plus, per active reward, the sample-mean
// surrogate (1/N) sum_i -R_i * log P(y_i^s | x_i) with one sample per pair.
// An empty sample or regenerated source scores -lambda_cls. All sampling
// draws from `sampling`, in pair order: y^s, then y', then x'.
Objective total_objective(Binder& bind, std::span<const ParallelPair> batch, const Generator& model,
                          const TextCnn* classifier, const RewardConfig& cfg, Rng& sampling);

} // namespace stylerl
