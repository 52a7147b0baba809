#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stylerl/classifier.hpp"
#include "stylerl/evaluation.hpp"
#include "stylerl/models.hpp"
#include "stylerl/rewards.hpp"

namespace stylerl {

// ---------------------------------------------------------------------------
// Early stopping

struct StopDecision {
    bool stop = false;
    std::size_t best_epoch = 0; // 1-based; first epoch reaching the maximum
};

// Stop once `patience` epochs have passed since the best value; only a
// strictly greater value counts as an improvement. Empty history continues.
StopDecision early_stopping_check(std::span<const double> history, std::size_t patience);

// ---------------------------------------------------------------------------
// Pretraining

struct PretrainConfig {
    double lr = 1e-3;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 10;
    std::size_t patience = 2;
    double heldout_fraction = 0.05;
    std::uint64_t seed = 0;
    NoiseConfig noise; // denoising objective only
};

struct PretrainResult {
    std::vector<double> train_loss;   // per epoch, mean over batches
    std::vector<double> heldout_loss; // per epoch, token-weighted mean NLL
    std::size_t best_epoch = 0;       // 1-based
    double heldout_perplexity = 0.0;  // exp(best held-out loss)
};

// Next-token training on [BOS] s [EOS]; early stopping on held-out
// perplexity, best weights restored. Throws DataError for an empty corpus.
PretrainResult pretrain_causal(MiniCausalLM& model, std::span<const Sentence> text, const PretrainConfig& cfg);

// Reconstruct each sentence from a noised copy. Held-out noise is drawn once
// and reused every epoch.
PretrainResult pretrain_denoising(MiniSeq2Seq& model, std::span<const Sentence> text, const PretrainConfig& cfg);

// Teacher-forced next-token accuracy of reconstructing noised sentences.
double reconstruction_accuracy(const MiniSeq2Seq& model, std::span<const Sentence> text,
                               const NoiseConfig& noise, std::uint64_t seed);

// Pretraining text: unpaired sentences of both styles, informal first.
std::vector<Sentence> pretraining_text(const Corpus& corpus);

// Generator vocabulary built from every training-side sentence of the corpus.
Vocabulary corpus_vocabulary(const Corpus& corpus);

// ---------------------------------------------------------------------------
// Fine-tuning

enum class ModelKind { Causal, Seq2Seq, Seq2SeqScratch };

const char* model_kind_name(ModelKind k);
ModelKind parse_model_kind(const std::string& s); // UsageError when unknown
ModelFamily family_of(ModelKind k);

struct TrainConfig {
    ModelKind model = ModelKind::Seq2Seq;
    std::optional<double> lr; // unset: default_lr(model)
    std::size_t batch_size = 32;
    std::size_t patience = 3;
    std::size_t max_epochs = 50;
    std::size_t warmup_epochs = 0; // reward-free epochs before the rewards switch on
    std::uint64_t seed = 0;
    RewardConfig rewards;
    double fraction = 1.0;
    bool domain_tags = false;
    TransformerConfig arch; // fresh models only

    // paths
    std::string data;
    std::string classifier;
    std::string init; // pretrained generator checkpoint
    std::string out;

    double learning_rate() const;
    // Throws ConfigError.
    void validate() const;
    // Every key = value in a fixed order; the hash covers this text.
    std::string canonical() const;
    std::uint64_t hash() const;
};

double default_lr(ModelKind k);

// `key = value` lines, '#' starts a comment. Throws FormatError for a line
// without '=' and UsageError for an unknown key or unparsable value.
std::map<std::string, std::string> parse_config_text(const std::string& text);
void apply_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);
TrainConfig load_train_config(const std::filesystem::path& path);

struct FinetuneResult {
    std::vector<EvalReport> history; // validation report per epoch
    std::size_t best_epoch = 0;      // 1-based
    std::uint64_t steps = 0;
    std::string log; // key<TAB>value lines
};

// Joint base + reward training on `train` (stored orientation, expanded to
// both directions here after subsetting by cfg.fraction). Validation HM
// drives early stopping and the best epoch's weights are restored. Throws
// NumericsError naming the step when the loss stops being finite.
FinetuneResult finetune(Generator& model, std::span<const ParallelPair> train, const EvalSplit& valid,
                        const TextCnn& classifier, const TrainConfig& cfg);

// The model a fine-tuning run starts from: a fresh seq2seq over the corpus
// vocabulary for seq2seq-scratch (initialized from cfg.seed), otherwise the
// pretrained checkpoint cfg.init, which must hold the configured family.
std::unique_ptr<Generator> make_finetune_model(const TrainConfig& cfg, const Corpus& corpus);

// Copies of the pairs/items with domain tags kept or stripped.
std::vector<ParallelPair> with_tags(std::span<const ParallelPair> pairs, bool keep);

// ---------------------------------------------------------------------------
// Ablation

enum class RewardVariant { Base, SC, BLEU, SCBLEU };

const char* variant_name(RewardVariant v); // base, sc, bleu, sc+bleu
RewardVariant parse_variant(const std::string& s);
RewardConfig variant_rewards(RewardVariant v, const RewardConfig& weights);

struct AblationSpec {
    std::vector<double> fractions{0.10, 0.50, 1.00};
    std::vector<RewardVariant> variants{RewardVariant::Base, RewardVariant::SC, RewardVariant::BLEU,
                                        RewardVariant::SCBLEU};
    std::vector<std::uint64_t> seeds{0};

    // Throws ConfigError unless fractions are ascending in (0,1] and the
    // lists are nonempty.
    void validate() const;
};

// Reads `fractions`, `variants` and `seeds` (comma lists); every other key
// goes to the train config.
AblationSpec parse_ablation_spec(const std::map<std::string, std::string>& kv, TrainConfig& train);

struct AblationRow {
    double fraction = 0.0;
    RewardVariant variant = RewardVariant::Base;
    std::uint64_t seed = 0;
    double bleu = 0.0, acc = 0.0, hm = 0.0;
};

using ModelFactory = std::function<std::unique_ptr<Generator>(std::uint64_t seed)>;

// One fine-tune + test evaluation per (fraction, variant, seed) cell.
// `<out>/ablation.csv` gains a flushed row after each cell and cells already
// present there are skipped; `<out>/curve.tsv` holds the mean test HM per
// (variant, fraction).
std::vector<AblationRow> run_ablation(const AblationSpec& spec, const Corpus& corpus, const TextCnn& classifier,
                                      const TrainConfig& base, const ModelFactory& make_model,
                                      const std::filesystem::path& out_dir);

} // namespace stylerl
