#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "stylerl/corpus.hpp"
#include "stylerl/nn.hpp"
#include "stylerl/vocab.hpp"

namespace stylerl {

struct TextCnnConfig {
    std::size_t embed_dim = 64;
    std::vector<std::size_t> widths{3, 4, 5};
    std::size_t filters = 100; // per width

    std::size_t max_width() const;
    bool operator==(const TextCnnConfig&) const = default;
};

// Convolutional sentence classifier: embedding, one ReLU conv bank per
// width, max-over-time pooling, linear layer to two logits.
class TextCnn {
  public:
    // Parameters start at zero; pass an Rng to draw a random initialization.
    TextCnn(Vocabulary vocab, TextCnnConfig cfg);
    TextCnn(Vocabulary vocab, TextCnnConfig cfg, Rng& init);

    const Vocabulary& vocab() const { return vocab_; }
    const TextCnnConfig& config() const { return cfg_; }
    std::vector<ParamRef> parameters() { return store_.refs(); }
    std::vector<ParamRef> parameters() const { return const_cast<TextCnn*>(this)->store_.refs(); }

    // Stops gradient accumulation; the classifier is read-only afterwards.
    void freeze() { store_.set_trainable(false); }

    // Logits [2] for an id sequence. Trailing <pad> ids are ignored; inputs
    // shorter than the widest filter are padded. Throws EmptySentenceError
    // when no real token remains.
    Var logits(Binder& bind, std::span<const int> ids) const;

    // (p(informal), p(formal)).
    std::array<double, 2> confidence_ids(std::span<const int> ids) const;
    std::array<double, 2> confidence(const Sentence& s) const;

    // argmax of confidence; an exact tie goes to Informal (label 0).
    Style predict(const Sentence& s) const;

  private:
    Vocabulary vocab_;
    TextCnnConfig cfg_;
    ParameterStore store_;
    Tensor* emb_ = nullptr;
    std::vector<Linear> convs_; // w [width*embed, filters], b [filters]
    Linear out_;
};

struct LabeledSentence {
    Sentence sentence;
    Style label = Style::Informal;
};

struct ClassifierTrainConfig {
    double lr = 1e-3;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 10;
    std::size_t patience = 3;
    double heldout_fraction = 0.1;
    std::uint64_t seed = 0;
};

struct ClassifierTrainResult {
    double heldout_accuracy = 0.0;
    std::size_t epochs = 0;
    std::vector<double> history; // held-out accuracy per epoch
};

// Adam with early stopping on held-out accuracy; the best epoch's weights
// are kept and the classifier is frozen on return. The held-out split is a
// seeded random slice of `data`. Throws DataError unless both labels occur.
ClassifierTrainResult train_textcnn(TextCnn& model, std::span<const LabeledSentence> data,
                                    const ClassifierTrainConfig& cfg);

double classifier_accuracy(const TextCnn& model, std::span<const LabeledSentence> data);

// Both sides of the parallel pairs plus the unpaired text, labeled by style.
std::vector<LabeledSentence> classifier_data(const Corpus& corpus);

} // namespace stylerl
