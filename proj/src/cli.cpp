#include "stylerl/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include "stylerl/checkpoint.hpp"
#include "stylerl/errors.hpp"
#include "stylerl/trainer.hpp"

namespace stylerl {

namespace {

using KeyValues = std::map<std::string, std::string>;

std::string dashed(std::string key) {
    std::replace(key.begin(), key.end(), '_', '-');
    return key;
}

std::string g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw IoError("cannot open " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << text;
    if (!f)
        throw IoError("cannot write " + path.string());
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// One subcommand. Every key is settable from the config file and through a
// `--key-with-dashes` flag; flags win.
class Command {
  public:
    Command(CLI::App& parent, const std::string& name, const std::string& about) {
        app_ = parent.add_subcommand(name, about);
        app_->add_option("--config", config_, "key = value configuration file");
    }

    CLI::App* app() { return app_; }

    Command& key(const std::string& k, const std::string& help) {
        opts_[k] = app_->add_option("--" + dashed(k), store_[k], help);
        return *this;
    }
    Command& flag(const std::string& k, const std::string& help) {
        opts_[k] = app_->add_flag("--" + dashed(k), flags_[k], help);
        return *this;
    }
    Command& positional(const std::string& name, const std::string& help) {
        app_->add_option(name, config_, help);
        return *this;
    }

    bool parsed() const { return app_->parsed(); }

    KeyValues merged() const {
        KeyValues kv;
        if (!config_.empty())
            kv = parse_config_text(read_file(config_));
        for (const auto& [k, v] : kv)
            if (!opts_.count(k))
                throw UsageError("unknown config key '" + k + "' for " + app_->get_name());
        for (const auto& [k, opt] : opts_) {
            if (opt->count() == 0)
                continue;
            if (auto it = store_.find(k); it != store_.end())
                kv[k] = it->second;
            else
                kv[k] = flags_.at(k) ? "1" : "0";
        }
        return kv;
    }

  private:
    CLI::App* app_ = nullptr;
    std::string config_;
    std::map<std::string, CLI::Option*> opts_;
    std::map<std::string, std::string> store_;
    std::map<std::string, bool> flags_;
};

std::string require(const KeyValues& kv, const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end() || it->second.empty())
        throw UsageError("missing --" + dashed(key));
    return it->second;
}

std::string get(const KeyValues& kv, const std::string& key, const std::string& fallback = "") {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
}

double get_double(const KeyValues& kv, const std::string& key, double fallback) {
    auto it = kv.find(key);
    if (it == kv.end())
        return fallback;
    try {
        std::size_t used = 0;
        const double d = std::stod(it->second, &used);
        if (used == it->second.size())
            return d;
    } catch (const std::exception&) {
    }
    throw UsageError("--" + dashed(key) + " expects a number, got '" + it->second + "'");
}

std::uint64_t get_uint(const KeyValues& kv, const std::string& key, std::uint64_t fallback) {
    auto it = kv.find(key);
    if (it == kv.end())
        return fallback;
    const std::string& v = it->second;
    try {
        std::size_t used = 0;
        if (!v.empty() && v[0] != '-') {
            const auto u = std::stoull(v, &used);
            if (used == v.size())
                return u;
        }
    } catch (const std::exception&) {
    }
    throw UsageError("--" + dashed(key) + " expects a nonnegative integer, got '" + v + "'");
}

bool get_bool(const KeyValues& kv, const std::string& key) {
    const std::string v = get(kv, key, "0");
    if (v == "1" || v == "true" || v == "yes" || v == "on")
        return true;
    if (v == "0" || v == "false" || v == "no" || v == "off")
        return false;
    throw UsageError("--" + dashed(key) + " expects a boolean, got '" + v + "'");
}

Domain parse_domain(const std::string& s) {
    if (s == "em")
        return Domain::EntertainmentMusic;
    if (s == "fr")
        return Domain::FamilyRelationships;
    throw UsageError("unknown domain '" + s + "' (em, fr)");
}

// Config text without output paths, for checkpoint metadata.
std::uint64_t settings_hash(const KeyValues& kv) {
    std::string s;
    for (const auto& [k, v] : kv)
        if (k != "out")
            s += k + " = " + v + "\n";
    return fnv1a(s);
}

Corpus load_data(const KeyValues& kv, bool tagged) {
    std::optional<std::string> tag;
    if (tagged)
        tag = domain_tag(parse_domain(get(kv, "domain", "em")));
    return load_gyafc_dir(require(kv, "data"), tag);
}

TransformerConfig arch_from(const KeyValues& kv) {
    TransformerConfig a;
    a.d_model = get_uint(kv, "d_model", a.d_model);
    a.heads = get_uint(kv, "heads", a.heads);
    a.layers = get_uint(kv, "layers", a.layers);
    a.d_ff = get_uint(kv, "d_ff", a.d_ff);
    a.context = get_uint(kv, "context", a.context);
    return a;
}

void add_arch_keys(Command& c) {
    c.key("d_model", "model width")
        .key("heads", "attention heads")
        .key("layers", "layers per stack")
        .key("d_ff", "feed-forward width")
        .key("context", "maximum sequence length");
}

// ---------------------------------------------------------------------------

int run_gen_corpus(const KeyValues& kv, std::ostream& out) {
    SyntheticSizes sizes;
    sizes.train_pairs = get_uint(kv, "train_pairs", sizes.train_pairs);
    sizes.eval_items = get_uint(kv, "eval_items", sizes.eval_items);
    sizes.unpaired = get_uint(kv, "unpaired", sizes.unpaired);
    const std::string dir = require(kv, "out");
    const Corpus c = generate_synthetic_corpus(get_uint(kv, "seed", 0), sizes, parse_domain(get(kv, "domain", "em")));
    write_gyafc_dir(c, dir);
    out << "train_pairs\t" << c.train.size() << "\n"
        << "valid_items\t" << c.valid.size() << "\n"
        << "test_items\t" << c.test.size() << "\n"
        << "unpaired\t" << c.unpaired_formal.size() + c.unpaired_informal.size() << "\n";
    return 0;
}

int run_train_classifier(const KeyValues& kv, std::ostream& out) {
    const Corpus corpus = load_data(kv, false);
    const std::string path = require(kv, "out");
    TextCnnConfig cnn;
    cnn.embed_dim = get_uint(kv, "embed_dim", cnn.embed_dim);
    cnn.filters = get_uint(kv, "filters", cnn.filters);
    if (auto w = get(kv, "widths"); !w.empty()) {
        cnn.widths.clear();
        std::stringstream ss(w);
        for (std::string item; std::getline(ss, item, ',');)
            cnn.widths.push_back(get_uint({{"widths", item}}, "widths", 0));
    }
    ClassifierTrainConfig cfg;
    cfg.lr = get_double(kv, "lr", cfg.lr);
    cfg.batch_size = get_uint(kv, "batch_size", cfg.batch_size);
    cfg.max_epochs = get_uint(kv, "max_epochs", cfg.max_epochs);
    cfg.patience = get_uint(kv, "patience", cfg.patience);
    cfg.heldout_fraction = get_double(kv, "heldout_fraction", cfg.heldout_fraction);
    cfg.seed = get_uint(kv, "seed", cfg.seed);

    Rng init(cfg.seed);
    TextCnn clf(corpus_vocabulary(corpus), cnn, init);
    const auto data = classifier_data(corpus);
    const auto res = train_textcnn(clf, data, cfg);
    save_classifier(clf, {res.epochs, cfg.seed, settings_hash(kv)}, path);
    for (std::size_t i = 0; i < res.history.size(); ++i)
        out << "epoch\t" << i + 1 << "\nheldout_accuracy\t" << g17(res.history[i]) << "\n";
    out << "best_heldout_accuracy\t" << g17(res.heldout_accuracy) << "\n";
    return 0;
}

int run_pretrain(const KeyValues& kv, std::ostream& out) {
    const std::string objective = require(kv, "objective");
    if (objective != "causal" && objective != "denoise")
        throw UsageError("unknown objective '" + objective + "' (causal, denoise)");
    const Corpus corpus = load_data(kv, false);
    const std::string path = require(kv, "out");
    PretrainConfig cfg;
    cfg.lr = get_double(kv, "lr", cfg.lr);
    cfg.batch_size = get_uint(kv, "batch_size", cfg.batch_size);
    cfg.max_epochs = get_uint(kv, "max_epochs", cfg.max_epochs);
    cfg.patience = get_uint(kv, "patience", cfg.patience);
    cfg.heldout_fraction = get_double(kv, "heldout_fraction", cfg.heldout_fraction);
    cfg.seed = get_uint(kv, "seed", cfg.seed);
    cfg.noise.mask_p = get_double(kv, "mask_p", cfg.noise.mask_p);
    cfg.noise.delete_p = get_double(kv, "delete_p", cfg.noise.delete_p);

    const auto text = pretraining_text(corpus);
    Rng init(cfg.seed);
    PretrainResult res;
    std::unique_ptr<Generator> model;
    if (objective == "causal") {
        auto m = std::make_unique<MiniCausalLM>(corpus_vocabulary(corpus), arch_from(kv), init);
        res = pretrain_causal(*m, text, cfg);
        model = std::move(m);
    } else {
        auto m = std::make_unique<MiniSeq2Seq>(corpus_vocabulary(corpus), arch_from(kv), init);
        res = pretrain_denoising(*m, text, cfg);
        model = std::move(m);
    }
    save_generator(*model, {res.train_loss.size(), cfg.seed, settings_hash(kv)}, path);
    for (std::size_t i = 0; i < res.train_loss.size(); ++i)
        out << "epoch\t" << i + 1 << "\ntrain_loss\t" << g17(res.train_loss[i]) << "\nheldout_loss\t"
            << g17(res.heldout_loss[i]) << "\n";
    out << "best_epoch\t" << res.best_epoch << "\nheldout_perplexity\t" << g17(res.heldout_perplexity) << "\n";
    return 0;
}

// Keys owned by the CLI rather than the training config.
const char* const kCliOnly[] = {"domain", "resume"};

TrainConfig train_config_from(const KeyValues& kv) {
    TrainConfig cfg;
    for (const auto& [k, v] : kv)
        if (std::find(std::begin(kCliOnly), std::end(kCliOnly), k) == std::end(kCliOnly))
            apply_config_value(cfg, k, v);
    return cfg;
}

void add_train_keys(Command& c) {
    c.key("model", "causal | seq2seq | seq2seq-scratch")
        .key("lr", "learning rate (family default when unset)")
        .key("batch_size", "pairs per step")
        .key("patience", "epochs without validation HM gain before stopping")
        .key("max_epochs", "epoch budget")
        .key("warmup_epochs", "reward-free epochs first")
        .key("seed", "run seed")
        .key("rewards", "comma list of sc, bleu, or none")
        .key("lambda_cls", "style reward weight")
        .key("lambda_bleu", "BLEU reward weight")
        .key("source_reward", "auto | 1 | 0 (causal models only)")
        .flag("domain_tags", "prefix inputs with the domain tag")
        .key("domain", "domain tag used with --domain-tags: em | fr")
        .key("data", "corpus directory")
        .key("classifier", "style classifier checkpoint")
        .key("init", "pretrained generator checkpoint");
    add_arch_keys(c);
}

int run_finetune(const KeyValues& kv, std::ostream& out) {
    TrainConfig cfg = train_config_from(kv);
    cfg.validate();
    const std::filesystem::path dir = require(kv, "out");
    const Corpus corpus = load_data(kv, cfg.domain_tags);
    const auto clf = load_classifier(require(kv, "classifier"));
    std::unique_ptr<Generator> model;
    if (auto resume = get(kv, "resume"); !resume.empty()) {
        CheckpointMeta meta;
        model = load_generator(resume, &meta);
        if (meta.config_hash != cfg.hash())
            throw ConfigError("checkpoint " + resume + " was written under a different configuration");
    } else {
        model = make_finetune_model(cfg, corpus);
    }
    const FinetuneResult res = finetune(*model, corpus.train, corpus.valid, *clf, cfg);
    std::filesystem::create_directories(dir);
    save_generator(*model, {res.steps, cfg.seed, cfg.hash()}, dir / "model.ckpt");
    write_file(dir / "metrics.tsv", res.log);
    out << res.log;
    return 0;
}

int run_transfer(const KeyValues& kv, std::istream& in, std::ostream& out, std::ostream& err) {
    const std::string direction = require(kv, "direction");
    if (direction != "0to1" && direction != "1to0")
        throw UsageError("unknown direction '" + direction + "' (0to1, 1to0)");
    const Style target = direction == "0to1" ? Style::Formal : Style::Informal;
    const auto model = load_generator(require(kv, "model"));
    std::optional<std::string> tag;
    if (auto d = get(kv, "domain"); !d.empty())
        tag = domain_tag(parse_domain(d));

    std::ifstream file;
    std::istream* src = &in;
    if (auto p = get(kv, "input"); !p.empty() && p != "-") {
        file.open(p);
        if (!file)
            throw IoError("cannot open " + p);
        src = &file;
    }
    std::vector<Sentence> outputs;
    for (std::string line; std::getline(*src, line);) {
        const Sentence s = Sentence::parse(line);
        outputs.push_back(s.empty() ? Sentence{} : model->generate(s, tag, {}).sentence);
    }
    std::string text;
    for (const auto& s : outputs)
        text += s.str() + "\n";
    if (auto p = get(kv, "output"); !p.empty() && p != "-")
        write_file(p, text);
    else
        out << text;

    if (auto c = get(kv, "classifier"); !c.empty() && !outputs.empty()) {
        const auto clf = load_classifier(c);
        std::size_t hits = 0;
        for (const auto& s : outputs)
            hits += !s.empty() && clf->predict(s) == target;
        err << "style_accuracy\t" << g17(static_cast<double>(hits) / static_cast<double>(outputs.size())) << "\n";
    }
    return 0;
}

int run_evaluate(const KeyValues& kv, std::ostream& out) {
    const bool tags = get_bool(kv, "domain_tags");
    const Corpus corpus = load_data(kv, tags);
    const std::string split = get(kv, "split", "test");
    if (split != "test" && split != "valid")
        throw UsageError("unknown split '" + split + "' (valid, test)");
    const auto model = load_generator(require(kv, "model"));
    const auto clf = load_classifier(require(kv, "classifier"));
    const EvalReport rep = evaluate_system(*model, split == "test" ? corpus.test : corpus.valid, *clf, tags);
    if (auto p = get(kv, "out"); !p.empty())
        write_file(p, rep.tsv());
    out << rep.text();
    return 0;
}

int run_ablate(const KeyValues& raw, std::ostream& out) {
    KeyValues kv = raw;
    const std::filesystem::path dir = require(kv, "out");
    kv.erase("out");
    KeyValues cli;
    for (const char* k : kCliOnly)
        if (auto it = kv.find(k); it != kv.end()) {
            cli.insert(*it);
            kv.erase(it);
        }
    TrainConfig base;
    const AblationSpec spec = parse_ablation_spec(kv, base);
    base.validate();
    if (cli.count("resume"))
        throw UsageError("ablate does not take --resume");
    KeyValues data_kv = cli;
    data_kv["data"] = base.data;
    const Corpus corpus = load_data(data_kv, base.domain_tags);
    if (base.classifier.empty())
        throw UsageError("missing --classifier");
    const auto clf = load_classifier(base.classifier);
    ModelFactory factory = [&](std::uint64_t seed) {
        TrainConfig c = base;
        c.seed = seed;
        return make_finetune_model(c, corpus);
    };
    const auto rows = run_ablation(spec, corpus, *clf, base, factory, dir);
    out << read_file(dir / "ablation.csv");
    return rows.empty() ? 1 : 0;
}

} // namespace

int cli_main(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
    CLI::App app("Formality style transfer with reward-augmented fine-tuning", "stylerl");
    app.require_subcommand(1);

    Command gen(app, "gen-corpus", "Write a synthetic formality corpus in GYAFC layout");
    gen.key("seed", "corpus seed")
        .key("train_pairs", "parallel training pairs")
        .key("eval_items", "items per direction in valid and test")
        .key("unpaired", "unpaired sentences per style")
        .key("domain", "em | fr")
        .key("out", "output directory");

    Command clf(app, "train-classifier", "Train the TextCNN style classifier");
    clf.key("data", "corpus directory")
        .key("out", "classifier checkpoint to write")
        .key("seed", "seed")
        .key("lr", "learning rate")
        .key("batch_size", "batch size")
        .key("max_epochs", "epoch budget")
        .key("patience", "early-stopping patience")
        .key("heldout_fraction", "held-out share of the data")
        .key("embed_dim", "embedding width")
        .key("filters", "filters per width")
        .key("widths", "comma list of filter widths");

    Command pre(app, "pretrain", "Pretrain a generator on unpaired text");
    pre.key("objective", "causal | denoise")
        .key("data", "corpus directory")
        .key("out", "generator checkpoint to write")
        .key("seed", "seed")
        .key("lr", "learning rate")
        .key("batch_size", "batch size")
        .key("max_epochs", "epoch budget")
        .key("patience", "early-stopping patience")
        .key("heldout_fraction", "held-out share of the text")
        .key("mask_p", "token masking probability (denoise)")
        .key("delete_p", "token deletion probability (denoise)");
    add_arch_keys(pre);

    Command ft(app, "finetune", "Fine-tune a generator on parallel data with optional rewards");
    add_train_keys(ft);
    ft.key("fraction", "share of the training pairs used")
        .key("resume", "continue from a checkpoint written under the same config")
        .key("out", "output directory (model.ckpt, metrics.tsv)");

    Command tr(app, "transfer", "Transfer sentences read one per line");
    tr.key("model", "generator checkpoint")
        .key("direction", "0to1 (informal to formal) | 1to0")
        .key("input", "input file (default stdin)")
        .key("output", "output file (default stdout)")
        .key("domain", "prefix inputs with this domain tag: em | fr")
        .key("classifier", "report style accuracy of the outputs on stderr");

    Command ev(app, "evaluate", "Score a generator on a corpus split");
    ev.key("model", "generator checkpoint")
        .key("classifier", "style classifier checkpoint")
        .key("data", "corpus directory")
        .key("split", "valid | test")
        .flag("domain_tags", "prefix inputs with the domain tag")
        .key("domain", "domain tag used with --domain-tags: em | fr")
        .key("out", "write the report as key<TAB>value lines");

    Command ab(app, "ablate", "Run the data-fraction by reward-variant grid");
    ab.positional("spec", "spec file (same as --config)");
    add_train_keys(ab);
    ab.key("fractions", "comma list of ascending fractions")
        .key("variants", "comma list of base, sc, bleu, sc+bleu")
        .key("seeds", "comma list of seeds")
        .key("out", "output directory (ablation.csv, curve.tsv)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0)
            return app.exit(e, out, err);
        err << "error: UsageError: " << e.what() << "\n";
        return 2;
    }

    try {
        if (gen.parsed())
            return run_gen_corpus(gen.merged(), out);
        if (clf.parsed())
            return run_train_classifier(clf.merged(), out);
        if (pre.parsed())
            return run_pretrain(pre.merged(), out);
        if (ft.parsed())
            return run_finetune(ft.merged(), out);
        if (tr.parsed())
            return run_transfer(tr.merged(), in, out, err);
        if (ev.parsed())
            return run_evaluate(ev.merged(), out);
        if (ab.parsed())
            return run_ablate(ab.merged(), out);
    } catch (const UsageError& e) {
        err << "error: " << e.category() << ": " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        err << "error: " << e.category() << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: InternalError: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

} // namespace stylerl
