#include "stylerl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

#include "stylerl/checkpoint.hpp"
#include "stylerl/errors.hpp"
#include "stylerl/optim.hpp"

namespace stylerl {

namespace {

std::string g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (auto t = trim(item); !t.empty())
            out.push_back(t);
    return out;
}

Var mean_of(std::vector<Var>& vs) {
    Var total = vs[0];
    for (std::size_t i = 1; i < vs.size(); ++i)
        total = add(total, vs[i]);
    return scale(total, 1.0 / static_cast<double>(vs.size()));
}

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> held;
};

Split split_indices(std::size_t n, double held_fraction, Rng rng) {
    if (n < 2)
        throw DataError("pretraining needs at least two sentences");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    auto n_held = static_cast<std::size_t>(std::ceil(held_fraction * static_cast<double>(n)));
    n_held = std::clamp<std::size_t>(n_held, 1, n - 1);
    Split s;
    s.held.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_held));
    s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_held), idx.end());
    std::sort(s.held.begin(), s.held.end());
    std::sort(s.train.begin(), s.train.end());
    return s;
}

void validate_pretrain(std::span<const Sentence> text, const PretrainConfig& cfg) {
    if (text.empty())
        throw DataError("empty pretraining corpus");
    if (cfg.batch_size == 0 || cfg.patience == 0 || cfg.max_epochs == 0 || !(cfg.lr > 0.0) ||
        !(cfg.heldout_fraction > 0.0 && cfg.heldout_fraction < 1.0))
        throw ConfigError("bad pretraining configuration");
}

// Shared epoch loop: batch_loss builds the mean loss of a batch, heldout
// returns the token-weighted held-out NLL.
PretrainResult pretrain_loop(std::vector<ParamRef> params, std::vector<std::size_t> train, const PretrainConfig& cfg,
                             const std::function<Var(Binder&, std::span<const std::size_t>)>& batch_loss,
                             const std::function<double()>& heldout) {
    AdamState adam(AdamConfig{cfg.lr}, params);
    Rng order(Rng(cfg.seed).fork(1));
    PretrainResult res;
    ParamSnapshot best = snapshot(params);
    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        order.shuffle(train);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < train.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(train.size(), start + cfg.batch_size);
            zero_grads(params);
            Tape tape;
            Binder bind(tape);
            Var loss = batch_loss(bind, std::span<const std::size_t>(train.data() + start, end - start));
            if (!std::isfinite(loss.item()))
                throw NumericsError("pretraining loss is not finite at step " + std::to_string(adam.step + 1));
            tape.backward(loss);
            adam_step(params, adam);
            loss_sum += loss.item();
            ++batches;
        }
        res.train_loss.push_back(loss_sum / static_cast<double>(batches));
        res.heldout_loss.push_back(heldout());
        // Lower loss is better: feed the negated history to the HM-style rule.
        std::vector<double> neg(res.heldout_loss.size());
        std::transform(res.heldout_loss.begin(), res.heldout_loss.end(), neg.begin(), [](double v) { return -v; });
        const auto stop = early_stopping_check(neg, cfg.patience);
        if (stop.best_epoch == epoch + 1)
            best = snapshot(params);
        res.best_epoch = stop.best_epoch;
        if (stop.stop)
            break;
    }
    restore(params, best);
    res.heldout_perplexity = std::exp(res.heldout_loss[res.best_epoch - 1]);
    return res;
}

} // namespace

// ---------------------------------------------------------------------------

StopDecision early_stopping_check(std::span<const double> history, std::size_t patience) {
    StopDecision d;
    if (history.empty())
        return d;
    std::size_t best = 0;
    for (std::size_t i = 1; i < history.size(); ++i)
        if (history[i] > history[best])
            best = i;
    d.best_epoch = best + 1;
    d.stop = history.size() - 1 - best >= patience;
    return d;
}

std::vector<Sentence> pretraining_text(const Corpus& corpus) {
    std::vector<Sentence> out(corpus.unpaired_informal);
    out.insert(out.end(), corpus.unpaired_formal.begin(), corpus.unpaired_formal.end());
    return out;
}

Vocabulary corpus_vocabulary(const Corpus& corpus) {
    std::vector<Sentence> all;
    for (const auto& p : corpus.train) {
        all.push_back(p.source);
        all.push_back(p.target);
    }
    all.insert(all.end(), corpus.unpaired_informal.begin(), corpus.unpaired_informal.end());
    all.insert(all.end(), corpus.unpaired_formal.begin(), corpus.unpaired_formal.end());
    return Vocabulary::build(all);
}

PretrainResult pretrain_causal(MiniCausalLM& model, std::span<const Sentence> text, const PretrainConfig& cfg) {
    validate_pretrain(text, cfg);
    const Split split = split_indices(text.size(), cfg.heldout_fraction, Rng(cfg.seed).fork(0));
    auto batch_loss = [&](Binder& bind, std::span<const std::size_t> idx) {
        std::vector<Var> losses;
        for (auto i : idx)
            losses.push_back(model.sentence_loss(bind, text[i]));
        return mean_of(losses);
    };
    auto heldout = [&] {
        double nll = 0.0, tokens = 0.0;
        for (auto i : split.held) {
            Tape tape(false);
            Binder bind(tape);
            const double n = static_cast<double>(text[i].size() + 1);
            nll += model.sentence_loss(bind, text[i]).item() * n;
            tokens += n;
        }
        return nll / tokens;
    };
    return pretrain_loop(model.parameters(), split.train, cfg, batch_loss, heldout);
}

PretrainResult pretrain_denoising(MiniSeq2Seq& model, std::span<const Sentence> text, const PretrainConfig& cfg) {
    validate_pretrain(text, cfg);
    const Split split = split_indices(text.size(), cfg.heldout_fraction, Rng(cfg.seed).fork(0));
    Rng train_noise = Rng(cfg.seed).fork(2);
    Rng held_noise = Rng(cfg.seed).fork(3);
    std::vector<ParallelPair> held;
    for (auto i : split.held)
        held.push_back({add_noise(text[i], cfg.noise, held_noise), text[i], Style::Informal, std::nullopt});

    auto batch_loss = [&](Binder& bind, std::span<const std::size_t> idx) {
        std::vector<Var> losses;
        for (auto i : idx) {
            ParallelPair p{add_noise(text[i], cfg.noise, train_noise), text[i], Style::Informal, std::nullopt};
            losses.push_back(model.pair_loss(bind, p));
        }
        return mean_of(losses);
    };
    auto heldout = [&] {
        double nll = 0.0, tokens = 0.0;
        for (const auto& p : held) {
            Tape tape(false);
            Binder bind(tape);
            const double n = static_cast<double>(p.target.size() + 1);
            nll += model.pair_loss(bind, p).item() * n;
            tokens += n;
        }
        return nll / tokens;
    };
    return pretrain_loop(model.parameters(), split.train, cfg, batch_loss, heldout);
}

double reconstruction_accuracy(const MiniSeq2Seq& model, std::span<const Sentence> text, const NoiseConfig& noise,
                               std::uint64_t seed) {
    if (text.empty())
        throw DataError("reconstruction accuracy of an empty set");
    Rng rng(seed);
    std::size_t hits = 0, total = 0;
    for (const auto& s : text) {
        const auto ex = encode_s2s_pair({add_noise(s, noise, rng), s, Style::Informal, std::nullopt}, model.vocab());
        Tape tape(false);
        Binder bind(tape);
        Var logits = model.decoder_logits(bind, model.encode(bind, ex.encoder_ids), ex.decoder_inputs);
        const auto v = logits.values();
        const std::size_t V = model.vocab().size();
        for (std::size_t i = 0; i < ex.decoder_targets.size(); ++i) {
            const auto row = v.subspan(i * V, V);
            const auto arg = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
            hits += arg == ex.decoder_targets[i];
            ++total;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Configuration

const char* model_kind_name(ModelKind k) {
    switch (k) {
    case ModelKind::Causal: return "causal";
    case ModelKind::Seq2Seq: return "seq2seq";
    case ModelKind::Seq2SeqScratch: return "seq2seq-scratch";
    }
    return "?";
}

ModelKind parse_model_kind(const std::string& s) {
    if (s == "causal")
        return ModelKind::Causal;
    if (s == "seq2seq")
        return ModelKind::Seq2Seq;
    if (s == "seq2seq-scratch")
        return ModelKind::Seq2SeqScratch;
    throw UsageError("unknown model '" + s + "' (causal, seq2seq, seq2seq-scratch)");
}

ModelFamily family_of(ModelKind k) { return k == ModelKind::Causal ? ModelFamily::Causal : ModelFamily::Seq2Seq; }

double default_lr(ModelKind k) {
    switch (k) {
    case ModelKind::Causal: return 5e-5;
    case ModelKind::Seq2Seq: return 3e-5;
    case ModelKind::Seq2SeqScratch: return 1e-3;
    }
    return 1e-3;
}

double TrainConfig::learning_rate() const { return lr.value_or(default_lr(model)); }

void TrainConfig::validate() const {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw ConfigError("fraction must lie in (0, 1]");
    if (patience < 1)
        throw ConfigError("patience must be at least 1");
    if (batch_size < 1 || max_epochs < 1)
        throw ConfigError("batch_size and max_epochs must be positive");
    if (!(learning_rate() > 0.0) || !std::isfinite(learning_rate()))
        throw ConfigError("learning rate must be positive");
    rewards.validate(family_of(model));
}

std::string TrainConfig::canonical() const {
    std::string s;
    auto kv = [&](const char* k, const std::string& v) { s += std::string(k) + " = " + v + "\n"; };
    kv("model", model_kind_name(model));
    kv("lr", g17(learning_rate()));
    kv("batch_size", std::to_string(batch_size));
    kv("patience", std::to_string(patience));
    kv("max_epochs", std::to_string(max_epochs));
    kv("warmup_epochs", std::to_string(warmup_epochs));
    kv("seed", std::to_string(seed));
    std::string r;
    if (rewards.use_cls)
        r = "sc";
    if (rewards.use_bleu)
        r += r.empty() ? "bleu" : ",bleu";
    kv("rewards", r.empty() ? "none" : r);
    kv("lambda_cls", g17(rewards.lambda_cls));
    kv("lambda_bleu", g17(rewards.lambda_bleu));
    kv("source_reward", rewards.source_reward ? (*rewards.source_reward ? "1" : "0") : "auto");
    kv("fraction", g17(fraction));
    kv("domain_tags", domain_tags ? "1" : "0");
    kv("d_model", std::to_string(arch.d_model));
    kv("heads", std::to_string(arch.heads));
    kv("layers", std::to_string(arch.layers));
    kv("d_ff", std::to_string(arch.d_ff));
    kv("context", std::to_string(arch.context));
    kv("data", data);
    kv("classifier", classifier);
    kv("init", init);
    return s;
}

std::uint64_t TrainConfig::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull; // FNV-1a
    for (unsigned char c : canonical()) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
    std::map<std::string, std::string> out;
    std::stringstream ss(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError("config line " + std::to_string(lineno) + " has no '='");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty())
            throw FormatError("config line " + std::to_string(lineno) + " has an empty key");
        out[key] = trim(line.substr(eq + 1));
    }
    return out;
}

namespace {

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size())
            throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw UsageError("config key '" + key + "' expects a number, got '" + v + "'");
    }
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        if (v.empty() || v[0] == '-')
            throw std::invalid_argument(v);
        const auto u = std::stoull(v, &used);
        if (used != v.size())
            throw std::invalid_argument(v);
        return u;
    } catch (const std::exception&) {
        throw UsageError("config key '" + key + "' expects a nonnegative integer, got '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes" || v == "on")
        return true;
    if (v == "0" || v == "false" || v == "no" || v == "off")
        return false;
    throw UsageError("config key '" + key + "' expects a boolean, got '" + v + "'");
}

} // namespace

void apply_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "model")
        cfg.model = parse_model_kind(value);
    else if (key == "lr")
        cfg.lr = parse_double(key, value);
    else if (key == "batch_size")
        cfg.batch_size = parse_uint(key, value);
    else if (key == "patience")
        cfg.patience = parse_uint(key, value);
    else if (key == "max_epochs")
        cfg.max_epochs = parse_uint(key, value);
    else if (key == "warmup_epochs")
        cfg.warmup_epochs = parse_uint(key, value);
    else if (key == "seed")
        cfg.seed = parse_uint(key, value);
    else if (key == "lambda_cls")
        cfg.rewards.lambda_cls = parse_double(key, value);
    else if (key == "lambda_bleu")
        cfg.rewards.lambda_bleu = parse_double(key, value);
    else if (key == "source_reward") {
        if (value == "auto")
            cfg.rewards.source_reward.reset();
        else
            cfg.rewards.source_reward = parse_bool(key, value);
    } else if (key == "rewards") {
        cfg.rewards.use_cls = cfg.rewards.use_bleu = false;
        for (const auto& r : split_list(value)) {
            if (r == "sc")
                cfg.rewards.use_cls = true;
            else if (r == "bleu")
                cfg.rewards.use_bleu = true;
            else if (r != "none")
                throw UsageError("unknown reward '" + r + "' (sc, bleu, none)");
        }
    } else if (key == "fraction")
        cfg.fraction = parse_double(key, value);
    else if (key == "domain_tags")
        cfg.domain_tags = parse_bool(key, value);
    else if (key == "d_model")
        cfg.arch.d_model = parse_uint(key, value);
    else if (key == "heads")
        cfg.arch.heads = parse_uint(key, value);
    else if (key == "layers")
        cfg.arch.layers = parse_uint(key, value);
    else if (key == "d_ff")
        cfg.arch.d_ff = parse_uint(key, value);
    else if (key == "context")
        cfg.arch.context = parse_uint(key, value);
    else if (key == "data")
        cfg.data = value;
    else if (key == "classifier")
        cfg.classifier = value;
    else if (key == "init")
        cfg.init = value;
    else if (key == "out")
        cfg.out = value;
    else
        throw UsageError("unknown config key '" + key + "'");
}

TrainConfig load_train_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f)
        throw IoError("cannot open config " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    TrainConfig cfg;
    for (const auto& [k, v] : parse_config_text(ss.str()))
        apply_config_value(cfg, k, v);
    return cfg;
}

// ---------------------------------------------------------------------------
// Fine-tuning

std::vector<ParallelPair> with_tags(std::span<const ParallelPair> pairs, bool keep) {
    std::vector<ParallelPair> out(pairs.begin(), pairs.end());
    if (!keep)
        for (auto& p : out)
            p.domain_tag.reset();
    return out;
}

std::unique_ptr<Generator> make_finetune_model(const TrainConfig& cfg, const Corpus& corpus) {
    if (cfg.model == ModelKind::Seq2SeqScratch) {
        Rng init(cfg.seed);
        return std::make_unique<MiniSeq2Seq>(corpus_vocabulary(corpus), cfg.arch, init);
    }
    if (cfg.init.empty())
        throw ConfigError(std::string("a ") + model_kind_name(cfg.model) + " run needs a pretrained checkpoint (init)");
    auto model = load_generator(cfg.init);
    if (model->family() != family_of(cfg.model))
        throw ConfigError("init checkpoint holds a " + std::string(family_name(model->family())) + " model, config asks for " +
                          model_kind_name(cfg.model));
    return model;
}

FinetuneResult finetune(Generator& model, std::span<const ParallelPair> train, const EvalSplit& valid,
                        const TextCnn& classifier, const TrainConfig& cfg) {
    cfg.validate();
    if (family_of(cfg.model) != model.family())
        throw ConfigError(std::string("config is for a ") + model_kind_name(cfg.model) + " model, got a " +
                          family_name(model.family()) + " model");
    if (train.empty())
        throw DataError("no training pairs");
    if (valid.size() == 0)
        throw DataError("no validation items");
    for (const auto& p : classifier.parameters())
        if (p.tensor->requires_grad)
            throw ConfigError("the classifier must be frozen before fine-tuning");

    const auto subset = subset_fraction(train, cfg.fraction, cfg.seed);
    const auto pairs = with_tags(bidirectional(subset), cfg.domain_tags);

    auto params = model.parameters();
    for (auto& p : params)
        p.tensor->requires_grad = true;
    AdamState adam(AdamConfig{cfg.learning_rate()}, params);
    const Rng root(cfg.seed);
    Rng order_rng = root.fork(10);
    Rng sampling = root.fork(11);
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);

    FinetuneResult res;
    res.log += "config_hash\t" + std::to_string(cfg.hash()) + "\n";
    res.log += "train_pairs\t" + std::to_string(pairs.size()) + "\n";
    std::vector<double> hm_history;
    ParamSnapshot best = snapshot(params);
    std::vector<ParallelPair> batch;
    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const bool rewards_on = epoch >= cfg.warmup_epochs;
        RewardConfig rcfg = cfg.rewards;
        if (!rewards_on)
            rcfg.use_cls = rcfg.use_bleu = false;
        order_rng.shuffle(order);
        double loss_sum = 0.0, base_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            batch.clear();
            for (std::size_t i = start; i < end; ++i)
                batch.push_back(pairs[order[i]]);
            zero_grads(params);
            Tape tape;
            Binder bind(tape);
            Objective obj = total_objective(bind, batch, model, &classifier, rcfg, sampling);
            const double loss = obj.loss.item();
            if (!std::isfinite(loss))
                throw NumericsError("training loss diverged at step " + std::to_string(res.steps + 1));
            tape.backward(obj.loss);
            adam_step(params, adam);
            ++res.steps;
            loss_sum += loss;
            base_sum += obj.base_loss;
            ++batches;
        }
        EvalReport report = evaluate_system(model, valid, classifier, cfg.domain_tags);
        hm_history.push_back(report.overall.hm);
        res.log += "epoch\t" + std::to_string(epoch + 1) + "\n";
        res.log += "steps\t" + std::to_string(res.steps) + "\n";
        res.log += "train_objective\t" + g17(loss_sum / static_cast<double>(batches)) + "\n";
        res.log += "train_base_loss\t" + g17(base_sum / static_cast<double>(batches)) + "\n";
        std::stringstream tsv(report.tsv());
        for (std::string line; std::getline(tsv, line);)
            if (!line.starts_with("config."))
                res.log += "valid." + line + "\n";
        res.history.push_back(std::move(report));

        const auto stop = early_stopping_check(hm_history, cfg.patience);
        if (stop.best_epoch == epoch + 1)
            best = snapshot(params);
        res.best_epoch = stop.best_epoch;
        if (stop.stop)
            break;
    }
    restore(params, best);
    res.log += "best_epoch\t" + std::to_string(res.best_epoch) + "\n";
    res.log += "best_valid_hm\t" + g17(hm_history[res.best_epoch - 1]) + "\n";
    return res;
}

// ---------------------------------------------------------------------------
// Ablation

const char* variant_name(RewardVariant v) {
    switch (v) {
    case RewardVariant::Base: return "base";
    case RewardVariant::SC: return "sc";
    case RewardVariant::BLEU: return "bleu";
    case RewardVariant::SCBLEU: return "sc+bleu";
    }
    return "?";
}

RewardVariant parse_variant(const std::string& s) {
    for (auto v : {RewardVariant::Base, RewardVariant::SC, RewardVariant::BLEU, RewardVariant::SCBLEU})
        if (s == variant_name(v))
            return v;
    throw UsageError("unknown reward variant '" + s + "' (base, sc, bleu, sc+bleu)");
}

RewardConfig variant_rewards(RewardVariant v, const RewardConfig& weights) {
    RewardConfig r = weights;
    r.use_cls = v == RewardVariant::SC || v == RewardVariant::SCBLEU;
    r.use_bleu = v == RewardVariant::BLEU || v == RewardVariant::SCBLEU;
    return r;
}

void AblationSpec::validate() const {
    if (fractions.empty() || variants.empty() || seeds.empty())
        throw ConfigError("ablation needs at least one fraction, variant and seed");
    for (std::size_t i = 0; i < fractions.size(); ++i) {
        if (!(fractions[i] > 0.0 && fractions[i] <= 1.0))
            throw ConfigError("ablation fractions must lie in (0, 1]");
        if (i > 0 && !(fractions[i] > fractions[i - 1]))
            throw ConfigError("ablation fractions must be strictly ascending");
    }
}

AblationSpec parse_ablation_spec(const std::map<std::string, std::string>& kv, TrainConfig& train) {
    AblationSpec spec;
    for (const auto& [k, v] : kv) {
        if (k == "fractions") {
            spec.fractions.clear();
            for (const auto& f : split_list(v))
                spec.fractions.push_back(parse_double(k, f));
        } else if (k == "variants") {
            spec.variants.clear();
            for (const auto& s : split_list(v))
                spec.variants.push_back(parse_variant(s));
        } else if (k == "seeds") {
            spec.seeds.clear();
            for (const auto& s : split_list(v))
                spec.seeds.push_back(parse_uint(k, s));
        } else {
            apply_config_value(train, k, v);
        }
    }
    spec.validate();
    return spec;
}

namespace {

using CellKey = std::tuple<std::string, std::string, std::uint64_t>;

std::string fraction_text(double f) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", f);
    return buf;
}

constexpr const char* kAblationHeader = "fraction,variant,seed,bleu,acc,hm";

} // namespace

std::vector<AblationRow> run_ablation(const AblationSpec& spec, const Corpus& corpus, const TextCnn& classifier,
                                      const TrainConfig& base, const ModelFactory& make_model,
                                      const std::filesystem::path& out_dir) {
    spec.validate();
    std::filesystem::create_directories(out_dir);
    const auto csv_path = out_dir / "ablation.csv";

    std::map<CellKey, AblationRow> done;
    {
        std::ifstream in(csv_path);
        std::string line;
        if (in && std::getline(in, line)) {
            if (line != kAblationHeader)
                throw FormatError(csv_path.string() + " does not start with the ablation header");
            while (std::getline(in, line)) {
                if (line.empty())
                    continue;
                std::stringstream ss(line);
                std::string f, v, s, b, a, h;
                if (!std::getline(ss, f, ',') || !std::getline(ss, v, ',') || !std::getline(ss, s, ',') ||
                    !std::getline(ss, b, ',') || !std::getline(ss, a, ',') || !std::getline(ss, h))
                    throw FormatError("malformed ablation row: " + line);
                AblationRow row{parse_double("fraction", f), parse_variant(v), parse_uint("seed", s),
                                parse_double("bleu", b), parse_double("acc", a), parse_double("hm", h)};
                done[{fraction_text(row.fraction), v, row.seed}] = row;
            }
        }
    }
    if (done.empty()) {
        std::ofstream out(csv_path, std::ios::trunc);
        if (!out)
            throw IoError("cannot write " + csv_path.string());
        out << kAblationHeader << "\n";
    }

    std::vector<AblationRow> rows;
    for (double fraction : spec.fractions)
        for (auto variant : spec.variants)
            for (auto seed : spec.seeds) {
                const CellKey key{fraction_text(fraction), variant_name(variant), seed};
                if (auto it = done.find(key); it != done.end()) {
                    rows.push_back(it->second);
                    continue;
                }
                TrainConfig cfg = base;
                cfg.fraction = fraction;
                cfg.seed = seed;
                cfg.rewards = variant_rewards(variant, base.rewards);
                auto model = make_model(seed);
                finetune(*model, corpus.train, corpus.valid, classifier, cfg);
                const EvalReport rep = evaluate_system(*model, corpus.test, classifier, cfg.domain_tags);
                AblationRow row{fraction, variant, seed, rep.overall.bleu, rep.overall.acc, rep.overall.hm};
                std::ofstream out(csv_path, std::ios::app);
                char buf[256];
                std::snprintf(buf, sizeof buf, "%s,%s,%llu,%.6f,%.6f,%.6f\n", fraction_text(fraction).c_str(),
                              variant_name(variant), static_cast<unsigned long long>(seed), row.bleu, row.acc,
                              row.hm);
                out << buf;
                out.flush();
                if (!out)
                    throw IoError("cannot append to " + csv_path.string());
                rows.push_back(row);
            }

    std::ofstream curve(out_dir / "curve.tsv", std::ios::trunc);
    curve << "variant\tfraction\tmean_hm\n";
    for (auto variant : spec.variants)
        for (double fraction : spec.fractions) {
            double sum = 0.0;
            std::size_t n = 0;
            for (const auto& r : rows)
                if (r.variant == variant && fraction_text(r.fraction) == fraction_text(fraction)) {
                    sum += r.hm;
                    ++n;
                }
            char buf[128];
            std::snprintf(buf, sizeof buf, "%s\t%s\t%.6f\n", variant_name(variant), fraction_text(fraction).c_str(),
                          n ? sum / static_cast<double>(n) : 0.0);
            curve << buf;
        }
    if (!curve)
        throw IoError("cannot write curve file in " + out_dir.string());
    return rows;
}

} // namespace stylerl
