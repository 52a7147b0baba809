#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stylerl/corpus.hpp"
#include "stylerl/nn.hpp"
#include "stylerl/vocab.hpp"

namespace stylerl {

struct TransformerConfig {
    std::size_t d_model = 64;
    std::size_t heads = 4;
    std::size_t layers = 2;
    std::size_t d_ff = 256;
    std::size_t context = 128; // k: longest sequence either stack accepts

    bool operator==(const TransformerConfig&) const = default;
};

enum class ModelFamily : std::uint8_t { Causal = 1, Seq2Seq = 2 };

const char* family_name(ModelFamily f);

struct GenerationConfig {
    enum class Mode { Greedy, Sample };
    Mode mode = Mode::Greedy;
    double temperature = 1.0;
    std::size_t max_len = 0; // 0: default_max_len(source length)
    std::uint64_t seed = 0;  // sampling only
};

// ceil(1.5 n) + 5 decoding steps, the [EOS] step included.
std::size_t default_max_len(std::size_t source_tokens);

struct Generation {
    std::vector<int> ids;         // emitted ids, ending in the stop token when one was emitted
    std::vector<double> logprobs; // log-softmax of each emitted id (temperature 1)
    bool finished = false;        // stop token emitted before max_len
    Sentence sentence;            // ids decoded, reserved tokens dropped

    double total_logprob() const;
};

// Common surface of the two generator families.
class Generator {
  public:
    virtual ~Generator() = default;

    virtual ModelFamily family() const = 0;
    virtual const Vocabulary& vocab() const = 0;
    virtual const TransformerConfig& config() const = 0;
    virtual std::vector<ParamRef> parameters() = 0;
    std::vector<ParamRef> parameters() const { return const_cast<Generator*>(this)->parameters(); }

    // Per-token mean negative log-likelihood of the pair's training sequence.
    virtual Var pair_loss(Binder& bind, const ParallelPair& pair) const = 0;

    virtual Generation generate(const Sentence& source, const std::optional<std::string>& tag,
                                const GenerationConfig& cfg, Rng& rng) const = 0;
    Generation generate(const Sentence& source, const std::optional<std::string>& tag,
                        const GenerationConfig& cfg) const;

    // Teacher-forced sum of log-probabilities of `candidate` (target-side ids,
    // normally ending in [EOS]) given the source.
    virtual Var sequence_logprob(Binder& bind, const Sentence& source,
                                 const std::optional<std::string>& tag,
                                 std::span<const int> candidate) const = 0;
};

// Decoder-only transformer over [BOS] (tag) source [SEP] target [EOS].
class MiniCausalLM final : public Generator {
  public:
    MiniCausalLM(Vocabulary vocab, TransformerConfig cfg, Rng& init);

    ModelFamily family() const override { return ModelFamily::Causal; }
    const Vocabulary& vocab() const override { return vocab_; }
    const TransformerConfig& config() const override { return cfg_; }
    std::vector<ParamRef> parameters() override { return store_.refs(); }
    ParameterStore& store() { return store_; }

    // Final hidden states [n,d]. Throws LengthError when n > context.
    Var hidden(Binder& bind, std::span<const int> ids) const;
    Var logits(Binder& bind, std::span<const int> ids) const; // [n,V]

    // Mean NLL over the masked positions.
    Var lm_loss(Binder& bind, const LmSequence& seq) const;
    // Plain language-model sequence [BOS] s [EOS] used for pretraining.
    Var sentence_loss(Binder& bind, const Sentence& s) const;

    Var pair_loss(Binder& bind, const ParallelPair& pair) const override;
    using Generator::generate;
    Generation generate(const Sentence& source, const std::optional<std::string>& tag,
                        const GenerationConfig& cfg, Rng& rng) const override;
    Var sequence_logprob(Binder& bind, const Sentence& source, const std::optional<std::string>& tag,
                         std::span<const int> candidate) const override;

    // The source segment x' regenerated from [BOS] (tag) alone, stopping at
    // [SEP]; and its teacher-forced log-probability.
    Generation sample_source(const std::optional<std::string>& tag, std::size_t max_len,
                             Rng& rng) const;
    Var source_logprob(Binder& bind, const std::optional<std::string>& tag,
                       std::span<const int> candidate) const;

  private:
    struct Block {
        LayerNormParams ln1, ln2;
        Attention attn;
        FeedForward ff;
    };

    Generation continue_from(std::vector<int> prefix, int stop, std::size_t max_len,
                             const GenerationConfig& cfg, Rng& rng) const;
    Var continuation_logprob(Binder& bind, std::vector<int> prefix,
                             std::span<const int> candidate) const;

    Vocabulary vocab_;
    TransformerConfig cfg_;
    ParameterStore store_;
    Tensor* tok_ = nullptr;
    Tensor* pos_ = nullptr;
    std::vector<Block> blocks_;
    LayerNormParams ln_f_;
    Linear head_;
};

// Encoder-decoder transformer with a shared token embedding.
class MiniSeq2Seq final : public Generator {
  public:
    MiniSeq2Seq(Vocabulary vocab, TransformerConfig cfg, Rng& init);

    ModelFamily family() const override { return ModelFamily::Seq2Seq; }
    const Vocabulary& vocab() const override { return vocab_; }
    const TransformerConfig& config() const override { return cfg_; }
    std::vector<ParamRef> parameters() override { return store_.refs(); }
    ParameterStore& store() { return store_; }

    Var encode(Binder& bind, std::span<const int> encoder_ids) const; // [n,d]
    Var decoder_logits(Binder& bind, Var memory, std::span<const int> decoder_ids) const;

    // Mean NLL over decoder targets.
    Var s2s_loss(Binder& bind, const Seq2SeqExample& ex) const;

    Var pair_loss(Binder& bind, const ParallelPair& pair) const override;
    using Generator::generate;
    Generation generate(const Sentence& source, const std::optional<std::string>& tag,
                        const GenerationConfig& cfg, Rng& rng) const override;
    Var sequence_logprob(Binder& bind, const Sentence& source, const std::optional<std::string>& tag,
                         std::span<const int> candidate) const override;

  private:
    struct EncoderBlock {
        LayerNormParams ln1, ln2;
        Attention attn;
        FeedForward ff;
    };
    struct DecoderBlock {
        LayerNormParams ln1, ln2, ln3;
        Attention self_attn, cross_attn;
        FeedForward ff;
    };

    Var embed(Binder& bind, std::span<const int> ids) const;
    Var decoder_hidden(Binder& bind, Var memory, std::span<const int> decoder_ids) const;

    Vocabulary vocab_;
    TransformerConfig cfg_;
    ParameterStore store_;
    Tensor* tok_ = nullptr;
    Tensor* pos_ = nullptr;
    std::vector<EncoderBlock> enc_;
    std::vector<DecoderBlock> dec_;
    LayerNormParams enc_ln_, dec_ln_;
    Linear head_;
};

std::unique_ptr<Generator> make_generator(ModelFamily family, Vocabulary vocab,
                                          TransformerConfig cfg, Rng& init);

// Token-level denoising noise: each token is independently deleted with
// probability delete_p or replaced by <unk> with probability mask_p (one
// uniform draw per token). An all-deleted sentence becomes a single <unk>.
struct NoiseConfig {
    double mask_p = 0.15;
    double delete_p = 0.10;
};
Sentence add_noise(const Sentence& s, const NoiseConfig& noise, Rng& rng);

} // namespace stylerl
