#include "stylerl/models.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "stylerl/errors.hpp"

namespace stylerl {

namespace {

constexpr double kInitStd = 0.02;

std::vector<int> positions(std::size_t n) {
    std::vector<int> p(n);
    std::iota(p.begin(), p.end(), 0);
    return p;
}

void check_length(std::size_t n, const TransformerConfig& cfg, const char* what) {
    if (n == 0)
        throw LengthError(std::string("empty ") + what);
    if (n > cfg.context)
        throw LengthError(std::string(what) + " of " + std::to_string(n) +
                          " tokens exceeds the context window of " + std::to_string(cfg.context));
}

// Weights and embeddings ~ N(0, 0.02) in registration order; biases and
// layer-norm shifts stay zero, layer-norm gains stay one.
void init_weights(ParameterStore& ps, Rng& rng) {
    for (auto& p : ps.refs()) {
        const auto& n = p.name;
        if (n.ends_with(".w") || n.ends_with("emb"))
            init_normal(*p.tensor, rng, kInitStd);
    }
}

int pick(std::span<const double> logprobs, const GenerationConfig& cfg, Rng& rng) {
    if (cfg.mode == GenerationConfig::Mode::Greedy) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < logprobs.size(); ++i)
            if (logprobs[i] > logprobs[best])
                best = i;
        return static_cast<int>(best);
    }
    if (!(cfg.temperature > 0.0))
        throw ConfigError("sampling temperature must be positive");
    double top = -std::numeric_limits<double>::infinity();
    for (double lp : logprobs)
        top = std::max(top, lp);
    std::vector<double> w(logprobs.size());
    for (std::size_t i = 0; i < w.size(); ++i)
        w[i] = std::exp((logprobs[i] - top) / cfg.temperature);
    return static_cast<int>(rng.categorical(w));
}

Generation finish(Generation g, const Vocabulary& vocab) {
    g.sentence = vocab.decode(g.ids);
    return g;
}

} // namespace

const char* family_name(ModelFamily f) {
    switch (f) {
    case ModelFamily::Causal: return "causal";
    case ModelFamily::Seq2Seq: return "seq2seq";
    }
    return "?";
}

std::size_t default_max_len(std::size_t n) { return (3 * n + 1) / 2 + 5; }

double Generation::total_logprob() const {
    double s = 0.0;
    for (double lp : logprobs)
        s += lp;
    return s;
}

Generation Generator::generate(const Sentence& source, const std::optional<std::string>& tag,
                               const GenerationConfig& cfg) const {
    Rng rng(cfg.seed);
    return generate(source, tag, cfg, rng);
}

// ---------------------------------------------------------------------------
// MiniCausalLM

MiniCausalLM::MiniCausalLM(Vocabulary vocab, TransformerConfig cfg, Rng& init)
    : vocab_(std::move(vocab)), cfg_(cfg) {
    const std::size_t d = cfg_.d_model, V = vocab_.size();
    tok_ = &store_.add("tok_emb", {V, d});
    pos_ = &store_.add("pos_emb", {cfg_.context, d});
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        const std::string p = "block" + std::to_string(l);
        Block b;
        b.ln1 = make_layer_norm(store_, p + ".ln1", d);
        b.attn = make_attention(store_, p + ".attn", d);
        b.ln2 = make_layer_norm(store_, p + ".ln2", d);
        b.ff = make_feed_forward(store_, p + ".ff", d, cfg_.d_ff);
        blocks_.push_back(b);
    }
    ln_f_ = make_layer_norm(store_, "ln_f", d);
    head_ = make_linear(store_, "head", d, V);
    init_weights(store_, init);
}

Var MiniCausalLM::hidden(Binder& bind, std::span<const int> ids) const {
    check_length(ids.size(), cfg_, "sequence");
    const auto pos = positions(ids.size());
    Var x = add(embedding(bind(*tok_), ids), embedding(bind(*pos_), pos));
    for (const auto& b : blocks_) {
        Var h = layer_norm(bind, b.ln1, x);
        x = add(x, attention(bind, b.attn, h, h, cfg_.heads, true));
        x = add(x, feed_forward(bind, b.ff, layer_norm(bind, b.ln2, x)));
    }
    return layer_norm(bind, ln_f_, x);
}

Var MiniCausalLM::logits(Binder& bind, std::span<const int> ids) const {
    return linear(bind, head_, hidden(bind, ids));
}

Var MiniCausalLM::lm_loss(Binder& bind, const LmSequence& seq) const {
    const std::size_t n = seq.ids.size();
    check_length(n, cfg_, "sequence");
    if (n < 2 || seq.loss_mask.size() != n - 1)
        throw ShapeError("loss mask must have one entry per predicted position");
    std::span<const int> inputs(seq.ids.data(), n - 1);
    std::vector<int> targets(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i)
        targets[i] = seq.loss_mask[i] ? seq.ids[i + 1] : -1;
    return cross_entropy(logits(bind, inputs), targets);
}

Var MiniCausalLM::sentence_loss(Binder& bind, const Sentence& s) const {
    if (s.empty())
        throw EmptySentenceError("empty pretraining sentence");
    LmSequence seq;
    seq.ids.push_back(Vocabulary::kBos);
    for (int id : vocab_.encode(s))
        seq.ids.push_back(id);
    seq.ids.push_back(Vocabulary::kEos);
    seq.loss_mask.assign(seq.ids.size() - 1, 1);
    return lm_loss(bind, seq);
}

Var MiniCausalLM::pair_loss(Binder& bind, const ParallelPair& pair) const {
    return lm_loss(bind, encode_lm_sequence(pair, vocab_));
}

Generation MiniCausalLM::continue_from(std::vector<int> ids, int stop, std::size_t max_len,
                                       const GenerationConfig& cfg, Rng& rng) const {
    if (ids.size() >= cfg_.context)
        throw LengthError("prompt fills the whole context window");
    max_len = std::min(max_len, cfg_.context - ids.size());
    Generation g;
    Tape tape(false);
    Binder bind(tape);
    for (std::size_t step = 0; step < max_len; ++step) {
        Var h = hidden(bind, ids);
        const std::size_t n = ids.size();
        Var lp = log_softmax(linear(bind, head_, slice_rows(h, n - 1, n)));
        const auto row = lp.values();
        const int tok = pick(row, cfg, rng);
        g.ids.push_back(tok);
        g.logprobs.push_back(row[static_cast<std::size_t>(tok)]);
        ids.push_back(tok);
        if (tok == stop) {
            g.finished = true;
            break;
        }
    }
    return finish(std::move(g), vocab_);
}

Generation MiniCausalLM::generate(const Sentence& source, const std::optional<std::string>& tag,
                                  const GenerationConfig& cfg, Rng& rng) const {
    const std::size_t max_len = cfg.max_len ? cfg.max_len : default_max_len(source.size());
    return continue_from(lm_prompt(source, tag, vocab_), Vocabulary::kEos, max_len, cfg, rng);
}

Generation MiniCausalLM::sample_source(const std::optional<std::string>& tag, std::size_t max_len,
                                       Rng& rng) const {
    std::vector<int> prefix{Vocabulary::kBos};
    if (tag) {
        const int id = vocab_.id(*tag);
        if (id == Vocabulary::kUnk)
            throw ConfigError("domain tag '" + *tag + "' is not in the vocabulary");
        prefix.push_back(id);
    }
    GenerationConfig cfg;
    cfg.mode = GenerationConfig::Mode::Sample;
    return continue_from(std::move(prefix), Vocabulary::kSep, max_len, cfg, rng);
}

Var MiniCausalLM::continuation_logprob(Binder& bind, std::vector<int> ids,
                                       std::span<const int> candidate) const {
    if (candidate.empty())
        throw EmptySentenceError("empty candidate sequence");
    const std::size_t p = ids.size();
    ids.insert(ids.end(), candidate.begin(), candidate.end());
    const std::size_t n = ids.size();
    Var h = slice_rows(hidden(bind, std::span<const int>(ids.data(), n - 1)), p - 1, n - 1);
    return sum(gather(log_softmax(linear(bind, head_, h)), candidate));
}

Var MiniCausalLM::sequence_logprob(Binder& bind, const Sentence& source,
                                   const std::optional<std::string>& tag,
                                   std::span<const int> candidate) const {
    return continuation_logprob(bind, lm_prompt(source, tag, vocab_), candidate);
}

Var MiniCausalLM::source_logprob(Binder& bind, const std::optional<std::string>& tag,
                                 std::span<const int> candidate) const {
    std::vector<int> prefix{Vocabulary::kBos};
    if (tag)
        prefix.push_back(vocab_.id(*tag));
    return continuation_logprob(bind, std::move(prefix), candidate);
}

// ---------------------------------------------------------------------------
// MiniSeq2Seq

MiniSeq2Seq::MiniSeq2Seq(Vocabulary vocab, TransformerConfig cfg, Rng& init)
    : vocab_(std::move(vocab)), cfg_(cfg) {
    const std::size_t d = cfg_.d_model, V = vocab_.size();
    tok_ = &store_.add("tok_emb", {V, d});
    pos_ = &store_.add("pos_emb", {cfg_.context, d});
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        const std::string p = "enc" + std::to_string(l);
        EncoderBlock b;
        b.ln1 = make_layer_norm(store_, p + ".ln1", d);
        b.attn = make_attention(store_, p + ".attn", d);
        b.ln2 = make_layer_norm(store_, p + ".ln2", d);
        b.ff = make_feed_forward(store_, p + ".ff", d, cfg_.d_ff);
        enc_.push_back(b);
    }
    enc_ln_ = make_layer_norm(store_, "enc_ln", d);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        const std::string p = "dec" + std::to_string(l);
        DecoderBlock b;
        b.ln1 = make_layer_norm(store_, p + ".ln1", d);
        b.self_attn = make_attention(store_, p + ".self", d);
        b.ln2 = make_layer_norm(store_, p + ".ln2", d);
        b.cross_attn = make_attention(store_, p + ".cross", d);
        b.ln3 = make_layer_norm(store_, p + ".ln3", d);
        b.ff = make_feed_forward(store_, p + ".ff", d, cfg_.d_ff);
        dec_.push_back(b);
    }
    dec_ln_ = make_layer_norm(store_, "dec_ln", d);
    head_ = make_linear(store_, "head", d, V);
    init_weights(store_, init);
}

Var MiniSeq2Seq::embed(Binder& bind, std::span<const int> ids) const {
    const auto pos = positions(ids.size());
    return add(embedding(bind(*tok_), ids), embedding(bind(*pos_), pos));
}

Var MiniSeq2Seq::encode(Binder& bind, std::span<const int> encoder_ids) const {
    check_length(encoder_ids.size(), cfg_, "encoder input");
    Var x = embed(bind, encoder_ids);
    for (const auto& b : enc_) {
        Var h = layer_norm(bind, b.ln1, x);
        x = add(x, attention(bind, b.attn, h, h, cfg_.heads, false));
        x = add(x, feed_forward(bind, b.ff, layer_norm(bind, b.ln2, x)));
    }
    return layer_norm(bind, enc_ln_, x);
}

Var MiniSeq2Seq::decoder_hidden(Binder& bind, Var memory, std::span<const int> decoder_ids) const {
    check_length(decoder_ids.size(), cfg_, "decoder input");
    Var x = embed(bind, decoder_ids);
    for (const auto& b : dec_) {
        Var h = layer_norm(bind, b.ln1, x);
        x = add(x, attention(bind, b.self_attn, h, h, cfg_.heads, true));
        x = add(x, attention(bind, b.cross_attn, layer_norm(bind, b.ln2, x), memory, cfg_.heads, false));
        x = add(x, feed_forward(bind, b.ff, layer_norm(bind, b.ln3, x)));
    }
    return layer_norm(bind, dec_ln_, x);
}

Var MiniSeq2Seq::decoder_logits(Binder& bind, Var memory, std::span<const int> decoder_ids) const {
    return linear(bind, head_, decoder_hidden(bind, memory, decoder_ids));
}

Var MiniSeq2Seq::s2s_loss(Binder& bind, const Seq2SeqExample& ex) const {
    if (ex.decoder_inputs.size() != ex.decoder_targets.size())
        throw ShapeError("decoder inputs and targets differ in length");
    Var memory = encode(bind, ex.encoder_ids);
    return cross_entropy(decoder_logits(bind, memory, ex.decoder_inputs), ex.decoder_targets);
}

Var MiniSeq2Seq::pair_loss(Binder& bind, const ParallelPair& pair) const {
    return s2s_loss(bind, encode_s2s_pair(pair, vocab_));
}

Generation MiniSeq2Seq::generate(const Sentence& source, const std::optional<std::string>& tag,
                                 const GenerationConfig& cfg, Rng& rng) const {
    std::size_t max_len = cfg.max_len ? cfg.max_len : default_max_len(source.size());
    max_len = std::min(max_len, cfg_.context);
    Tape tape(false);
    Binder bind(tape);
    Var memory = encode(bind, s2s_encoder_input(source, tag, vocab_));
    std::vector<int> ids{Vocabulary::kBos};
    Generation g;
    for (std::size_t step = 0; step < max_len; ++step) {
        Var h = decoder_hidden(bind, memory, ids);
        const std::size_t n = ids.size();
        Var lp = log_softmax(linear(bind, head_, slice_rows(h, n - 1, n)));
        const auto row = lp.values();
        const int tok = pick(row, cfg, rng);
        g.ids.push_back(tok);
        g.logprobs.push_back(row[static_cast<std::size_t>(tok)]);
        if (tok == Vocabulary::kEos) {
            g.finished = true;
            break;
        }
        ids.push_back(tok);
    }
    return finish(std::move(g), vocab_);
}

Var MiniSeq2Seq::sequence_logprob(Binder& bind, const Sentence& source,
                                  const std::optional<std::string>& tag,
                                  std::span<const int> candidate) const {
    if (candidate.empty())
        throw EmptySentenceError("empty candidate sequence");
    Var memory = encode(bind, s2s_encoder_input(source, tag, vocab_));
    std::vector<int> inputs{Vocabulary::kBos};
    inputs.insert(inputs.end(), candidate.begin(), candidate.end() - 1);
    return sum(gather(log_softmax(decoder_logits(bind, memory, inputs)), candidate));
}

std::unique_ptr<Generator> make_generator(ModelFamily family, Vocabulary vocab,
                                          TransformerConfig cfg, Rng& init) {
    switch (family) {
    case ModelFamily::Causal: return std::make_unique<MiniCausalLM>(std::move(vocab), cfg, init);
    case ModelFamily::Seq2Seq: return std::make_unique<MiniSeq2Seq>(std::move(vocab), cfg, init);
    }
    throw ConfigError("unknown model family");
}

Sentence add_noise(const Sentence& s, const NoiseConfig& noise, Rng& rng) {
    if (noise.mask_p < 0 || noise.delete_p < 0 || noise.mask_p + noise.delete_p > 1)
        throw ConfigError("noise probabilities must be nonnegative and sum to at most 1");
    std::vector<std::string> out;
    for (const auto& t : s.tokens) {
        const double u = rng.uniform();
        if (u < noise.delete_p)
            continue;
        out.push_back(u < noise.delete_p + noise.mask_p ? "<unk>" : t);
    }
    if (out.empty())
        out.push_back("<unk>");
    return Sentence(std::move(out));
}

} // namespace stylerl
