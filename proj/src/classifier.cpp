#include "stylerl/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stylerl/errors.hpp"
#include "stylerl/optim.hpp"

namespace stylerl {

std::size_t TextCnnConfig::max_width() const {
    return widths.empty() ? 0 : *std::max_element(widths.begin(), widths.end());
}

TextCnn::TextCnn(Vocabulary vocab, TextCnnConfig cfg) : vocab_(std::move(vocab)), cfg_(std::move(cfg)) {
    if (cfg_.widths.empty() || cfg_.filters == 0 || cfg_.embed_dim == 0 ||
        std::find(cfg_.widths.begin(), cfg_.widths.end(), 0u) != cfg_.widths.end())
        throw ConfigError("TextCNN needs nonzero widths, filters and embedding size");
    const std::size_t e = cfg_.embed_dim;
    emb_ = &store_.add("emb", {vocab_.size(), e});
    for (std::size_t w : cfg_.widths)
        convs_.push_back(make_linear(store_, "conv" + std::to_string(w), w * e, cfg_.filters));
    out_ = make_linear(store_, "out", cfg_.widths.size() * cfg_.filters, 2);
}

TextCnn::TextCnn(Vocabulary vocab, TextCnnConfig cfg, Rng& init) : TextCnn(std::move(vocab), std::move(cfg)) {
    init_normal(*emb_, init, 0.1);
    for (std::size_t i = 0; i < convs_.size(); ++i)
        init_normal(*convs_[i].w, init,
                    1.0 / std::sqrt(static_cast<double>(cfg_.widths[i] * cfg_.embed_dim)));
    // The output layer starts at zero so that training on label-swapped data
    // follows the mirror-image trajectory.
}

Var TextCnn::logits(Binder& bind, std::span<const int> ids) const {
    std::size_t n = ids.size();
    while (n > 0 && ids[n - 1] == Vocabulary::kPad)
        --n;
    if (n == 0)
        throw EmptySentenceError("classifier input has no tokens");
    const std::size_t len = std::max(n, cfg_.max_width());
    std::vector<int> padded(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n));
    padded.resize(len, Vocabulary::kPad);

    Var x = embedding(bind(*emb_), padded);
    std::vector<Var> pooled;
    pooled.reserve(convs_.size());
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        const std::size_t w = cfg_.widths[i];
        Var c = relu(conv1d(x, bind(*convs_[i].w), bind(*convs_[i].b), w));
        pooled.push_back(reshape(max_over_time(c, len - w + 1), {1, cfg_.filters}));
    }
    Var features = pooled.size() == 1 ? pooled[0] : concat_cols(pooled);
    return reshape(linear(bind, out_, features), {2});
}

std::array<double, 2> TextCnn::confidence_ids(std::span<const int> ids) const {
    Tape tape(false);
    Binder bind(tape);
    Var p = softmax(reshape(logits(bind, ids), {1, 2}));
    return {p.values()[0], p.values()[1]};
}

std::array<double, 2> TextCnn::confidence(const Sentence& s) const {
    if (s.empty())
        throw EmptySentenceError("cannot classify an empty sentence");
    return confidence_ids(vocab_.encode(s));
}

Style TextCnn::predict(const Sentence& s) const {
    const auto p = confidence(s);
    return p[1] > p[0] ? Style::Formal : Style::Informal;
}

double classifier_accuracy(const TextCnn& model, std::span<const LabeledSentence> data) {
    if (data.empty())
        throw DataError("accuracy of an empty set");
    std::size_t hits = 0;
    for (const auto& ex : data)
        hits += model.predict(ex.sentence) == ex.label;
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

ClassifierTrainResult train_textcnn(TextCnn& model, std::span<const LabeledSentence> data,
                                    const ClassifierTrainConfig& cfg) {
    bool seen[2] = {false, false};
    for (const auto& ex : data)
        seen[static_cast<int>(ex.label)] = true;
    if (!seen[0] || !seen[1])
        throw DataError("classifier training data must contain both styles");
    if (cfg.batch_size == 0 || cfg.patience == 0 || !(cfg.heldout_fraction > 0.0 && cfg.heldout_fraction < 1.0))
        throw ConfigError("bad classifier training configuration");

    Rng root(cfg.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Rng split_rng = root.fork(0);
    split_rng.shuffle(order);
    const auto n_held = static_cast<std::size_t>(std::ceil(cfg.heldout_fraction * static_cast<double>(data.size())));
    if (n_held >= data.size())
        throw DataError("not enough classifier data for a held-out split");
    std::vector<LabeledSentence> held;
    for (std::size_t i = 0; i < n_held; ++i)
        held.push_back(data[order[i]]);
    std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_held), order.end());
    std::sort(train.begin(), train.end());

    auto params = model.parameters();
    for (auto& p : params)
        p.tensor->requires_grad = true;
    AdamState adam(AdamConfig{cfg.lr}, params);
    Rng order_rng = root.fork(1);

    ClassifierTrainResult result;
    ParamSnapshot best = snapshot(params);
    double best_acc = -1.0;
    std::size_t since_best = 0;
    const auto& vocab = model.vocab();
    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        order_rng.shuffle(train);
        for (std::size_t start = 0; start < train.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(train.size(), start + cfg.batch_size);
            zero_grads(params);
            Tape tape;
            Binder bind(tape);
            std::vector<Var> losses;
            for (std::size_t i = start; i < end; ++i) {
                const auto& ex = data[train[i]];
                Var lg = reshape(model.logits(bind, vocab.encode(ex.sentence)), {1, 2});
                const int label = static_cast<int>(ex.label);
                losses.push_back(cross_entropy(lg, std::span<const int>(&label, 1)));
            }
            Var total = losses[0];
            for (std::size_t i = 1; i < losses.size(); ++i)
                total = add(total, losses[i]);
            tape.backward(scale(total, 1.0 / static_cast<double>(losses.size())));
            adam_step(params, adam);
        }
        const double acc = classifier_accuracy(model, held);
        result.history.push_back(acc);
        result.epochs = epoch + 1;
        if (acc > best_acc) {
            best_acc = acc;
            best = snapshot(params);
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    restore(params, best);
    model.freeze();
    result.heldout_accuracy = best_acc;
    return result;
}

std::vector<LabeledSentence> classifier_data(const Corpus& corpus) {
    std::vector<LabeledSentence> out;
    for (const auto& p : corpus.train) {
        out.push_back({p.source, p.source_style});
        out.push_back({p.target, p.target_style()});
    }
    for (const auto& s : corpus.unpaired_informal)
        out.push_back({s, Style::Informal});
    for (const auto& s : corpus.unpaired_formal)
        out.push_back({s, Style::Formal});
    return out;
}

} // namespace stylerl
