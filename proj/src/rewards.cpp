#include "stylerl/rewards.hpp"

#include <cmath>

#include "stylerl/bleu.hpp"
#include "stylerl/errors.hpp"

namespace stylerl {

bool RewardConfig::source_active(ModelFamily f) const {
    return cls_active() && f == ModelFamily::Causal && source_reward.value_or(true);
}

void RewardConfig::validate(ModelFamily family) const {
    if (!(lambda_cls >= 0.0) || !(lambda_bleu >= 0.0) || !std::isfinite(lambda_cls) ||
        !std::isfinite(lambda_bleu))
        throw ConfigError("reward weights must be finite and nonnegative");
    if (family != ModelFamily::Causal && source_reward.value_or(false))
        throw ConfigError("the source-sentence reward applies to the causal LM only");
}

double style_reward_target(const std::array<double, 2>& conf, Style target, double lambda) {
    const auto t = static_cast<std::size_t>(target);
    return lambda * (conf[t] - conf[1 - t]);
}

double style_reward_target(const Sentence& sample, Style target, const TextCnn& clf, double lambda) {
    if (sample.empty())
        throw EmptySentenceError("style reward of an empty sample");
    return style_reward_target(clf.confidence(sample), target, lambda);
}

double style_reward_source(const std::array<double, 2>& conf, Style source, double lambda) {
    return style_reward_target(conf, source, lambda);
}

double style_reward_source(const Sentence& regenerated, Style source, const TextCnn& clf, double lambda,
                           ModelFamily family) {
    if (family != ModelFamily::Causal)
        throw ConfigError("the source-sentence reward applies to the causal LM only");
    if (regenerated.empty())
        throw EmptySentenceError("style reward of an empty regenerated source");
    return style_reward_source(clf.confidence(regenerated), source, lambda);
}

double bleu_reward(const Sentence& greedy, const Sentence& sample, const Sentence& reference, double lambda) {
    if (reference.empty())
        throw DataError("BLEU reward needs a nonempty reference");
    return lambda * (sentence_bleu_smoothed(greedy, reference) - sentence_bleu_smoothed(sample, reference));
}

Var policy_gradient_term(double reward, Var logprob) {
    if (!std::isfinite(reward))
        throw NumericsError("non-finite reward " + std::to_string(reward));
    if (logprob.values().size() != 1 || !std::isfinite(logprob.item()))
        throw NumericsError("policy gradient needs a finite scalar log-probability");
    return scale(logprob, -reward);
}

Objective total_objective(Binder& bind, std::span<const ParallelPair> batch, const Generator& model,
                          const TextCnn* classifier, const RewardConfig& cfg, Rng& sampling) {
    if (batch.empty())
        throw DataError("empty batch");
    const ModelFamily family = model.family();
    cfg.validate(family);
    if (cfg.cls_active() && classifier == nullptr)
        throw ConfigError("the style reward needs a classifier");
    const auto* causal = dynamic_cast<const MiniCausalLM*>(&model);

    Objective obj;
    Var base;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        Var l = model.pair_loss(bind, batch[i]);
        base = i == 0 ? l : add(base, l);
    }
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    obj.loss = scale(base, inv_n);
    obj.base_loss = obj.loss.item();
    if (!cfg.any_active())
        return obj;

    GenerationConfig sample_cfg;
    sample_cfg.mode = GenerationConfig::Mode::Sample;
    const GenerationConfig greedy_cfg;

    Var surrogate;
    bool have_surrogate = false;
    auto add_term = [&](Var term) {
        surrogate = have_surrogate ? add(surrogate, term) : term;
        have_surrogate = true;
    };

    for (const auto& pair : batch) {
        RewardSample rs;
        rs.sample = model.generate(pair.source, pair.domain_tag, sample_cfg, sampling);
        if (cfg.bleu_active())
            rs.greedy = model.generate(pair.source, pair.domain_tag, greedy_cfg, sampling);

        Var logprob = model.sequence_logprob(bind, pair.source, pair.domain_tag, rs.sample.ids);
        if (cfg.cls_active()) {
            rs.r_cls = rs.sample.sentence.empty()
                           ? -cfg.lambda_cls
                           : style_reward_target(rs.sample.sentence, pair.target_style(), *classifier,
                                                 cfg.lambda_cls);
            add_term(policy_gradient_term(rs.r_cls, logprob));
        }
        if (cfg.bleu_active()) {
            rs.r_bleu = bleu_reward(rs.greedy->sentence, rs.sample.sentence, pair.target, cfg.lambda_bleu);
            add_term(policy_gradient_term(rs.r_bleu, logprob));
        }
        if (cfg.source_active(family) && causal != nullptr) {
            rs.source_sample = causal->sample_source(pair.domain_tag, default_max_len(pair.source.size()),
                                                     sampling);
            const Sentence& xs = rs.source_sample->sentence;
            rs.r_cls_source = xs.empty() ? -cfg.lambda_cls
                                         : style_reward_source(xs, pair.source_style, *classifier,
                                                               cfg.lambda_cls, family);
            Var src_lp = causal->source_logprob(bind, pair.domain_tag, rs.source_sample->ids);
            add_term(policy_gradient_term(rs.r_cls_source, src_lp));
        }
        obj.samples.push_back(std::move(rs));
    }
    if (have_surrogate)
        obj.loss = add(obj.loss, scale(surrogate, inv_n));
    return obj;
}

} // namespace stylerl
