#include "stylerl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "stylerl/errors.hpp"

namespace stylerl {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', 'R', 'L', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

class Reader {
  public:
    explicit Reader(const std::string& b) : bytes_(b) {}

    template <class T>
    T get(const char* what) {
        need(sizeof(T), what);
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string take(std::size_t n, const char* what) {
        need(n, what);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == bytes_.size(); }

  private:
    void need(std::size_t n, const char* what) {
        if (bytes_.size() - pos_ < n)
            throw FormatError(std::string("checkpoint truncated while reading ") + what);
    }
    const std::string& bytes_;
    std::size_t pos_ = 0;
};

const char* kind_name(CheckpointKind k) {
    switch (k) {
    case CheckpointKind::Classifier: return "classifier";
    case CheckpointKind::Causal: return "causal";
    case CheckpointKind::Seq2Seq: return "seq2seq";
    }
    return "?";
}

// Shapes of the checkpoint must match the freshly built model exactly.
void load_into(std::vector<ParamRef> params, const Checkpoint& ck) {
    if (params.size() != ck.tensors.size())
        throw FormatError("checkpoint has " + std::to_string(ck.tensors.size()) + " tensors, a " +
                          kind_name(ck.kind) + " model with these settings has " + std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].tensor->shape != ck.tensors[i].shape)
            throw FormatError("tensor " + std::to_string(i) + " (" + params[i].name + ") has shape " +
                              shape_string(ck.tensors[i].shape) + ", expected " +
                              shape_string(params[i].tensor->shape));
        params[i].tensor->values = ck.tensors[i].values;
    }
}

std::vector<Tensor> copy_tensors(const std::vector<ParamRef>& params) {
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (const auto& p : params)
        out.emplace_back(p.tensor->shape, p.tensor->values);
    return out;
}

} // namespace

std::string serialize_checkpoint(const Checkpoint& ck) {
    std::string out(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kVersion);
    put<std::uint8_t>(out, static_cast<std::uint8_t>(ck.kind));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ck.hparams.size()));
    for (auto h : ck.hparams)
        put<std::uint64_t>(out, h);
    const std::string vocab = ck.vocab.serialize();
    put<std::uint64_t>(out, vocab.size());
    out += vocab;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ck.tensors.size()));
    for (const auto& t : ck.tensors) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
        for (auto d : t.shape)
            put<std::uint64_t>(out, d);
    }
    for (const auto& t : ck.tensors)
        for (double v : t.values)
            put<double>(out, v);
    put<std::uint64_t>(out, ck.meta.step);
    put<std::uint64_t>(out, ck.meta.seed);
    put<std::uint64_t>(out, ck.meta.config_hash);
    return out;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
    Reader r(bytes);
    if (r.take(sizeof kMagic, "magic") != std::string(kMagic, sizeof kMagic))
        throw FormatError("not a checkpoint file (bad magic)");
    const auto version = r.get<std::uint32_t>("version");
    if (version != kVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ck;
    const auto kind = r.get<std::uint8_t>("kind");
    if (kind > 2)
        throw FormatError("unknown checkpoint kind " + std::to_string(kind));
    ck.kind = static_cast<CheckpointKind>(kind);
    const auto n_h = r.get<std::uint32_t>("hyperparameter count");
    if (n_h > 1024)
        throw FormatError("implausible hyperparameter count");
    for (std::uint32_t i = 0; i < n_h; ++i)
        ck.hparams.push_back(r.get<std::uint64_t>("hyperparameters"));
    const auto vocab_bytes = r.get<std::uint64_t>("vocabulary size");
    ck.vocab = Vocabulary::deserialize(r.take(vocab_bytes, "vocabulary"));
    const auto n_t = r.get<std::uint32_t>("tensor count");
    if (n_t > 100000)
        throw FormatError("implausible tensor count");
    for (std::uint32_t i = 0; i < n_t; ++i) {
        const auto rank = r.get<std::uint32_t>("tensor rank");
        if (rank > 8)
            throw FormatError("implausible tensor rank");
        Shape s;
        for (std::uint32_t k = 0; k < rank; ++k)
            s.push_back(r.get<std::uint64_t>("tensor dims"));
        ck.tensors.emplace_back();
        ck.tensors.back().shape = std::move(s);
    }
    for (auto& t : ck.tensors) {
        const std::size_t n = numel(t.shape);
        auto raw = r.take(n * sizeof(double), "tensor payload");
        t.values.resize(n);
        std::memcpy(t.values.data(), raw.data(), raw.size());
    }
    ck.meta.step = r.get<std::uint64_t>("step");
    ck.meta.seed = r.get<std::uint64_t>("seed");
    ck.meta.config_hash = r.get<std::uint64_t>("config hash");
    if (!r.done())
        throw FormatError("trailing bytes after checkpoint");
    return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f)
        throw IoError("cannot write " + path.string());
    const std::string bytes = serialize_checkpoint(ck);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f)
        throw IoError("short write to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_checkpoint(ss.str());
}

Checkpoint make_checkpoint(const Generator& model, const CheckpointMeta& meta) {
    Checkpoint ck;
    ck.kind = model.family() == ModelFamily::Causal ? CheckpointKind::Causal : CheckpointKind::Seq2Seq;
    const auto& c = model.config();
    ck.hparams = {c.d_model, c.heads, c.layers, c.d_ff, c.context};
    ck.vocab = model.vocab();
    ck.tensors = copy_tensors(model.parameters());
    ck.meta = meta;
    return ck;
}

Checkpoint make_checkpoint(const TextCnn& clf, const CheckpointMeta& meta) {
    Checkpoint ck;
    ck.kind = CheckpointKind::Classifier;
    const auto& c = clf.config();
    ck.hparams = {c.embed_dim, c.filters, c.widths.size()};
    ck.hparams.insert(ck.hparams.end(), c.widths.begin(), c.widths.end());
    ck.vocab = clf.vocab();
    ck.tensors = copy_tensors(clf.parameters());
    ck.meta = meta;
    return ck;
}

std::unique_ptr<Generator> generator_from_checkpoint(const Checkpoint& ck) {
    if (ck.kind == CheckpointKind::Classifier)
        throw FormatError("checkpoint holds a classifier, not a generator");
    if (ck.hparams.size() != 5)
        throw FormatError("generator checkpoint needs 5 hyperparameters, found " +
                          std::to_string(ck.hparams.size()));
    TransformerConfig cfg{ck.hparams[0], ck.hparams[1], ck.hparams[2], ck.hparams[3], ck.hparams[4]};
    if (cfg.d_model == 0 || cfg.heads == 0 || cfg.d_model % cfg.heads != 0 || cfg.context == 0)
        throw FormatError("invalid transformer dimensions in checkpoint");
    Rng unused(0);
    auto family = ck.kind == CheckpointKind::Causal ? ModelFamily::Causal : ModelFamily::Seq2Seq;
    auto model = make_generator(family, ck.vocab, cfg, unused);
    load_into(model->parameters(), ck);
    return model;
}

std::unique_ptr<TextCnn> classifier_from_checkpoint(const Checkpoint& ck) {
    if (ck.kind != CheckpointKind::Classifier)
        throw FormatError(std::string("checkpoint holds a ") + kind_name(ck.kind) + " generator, not a classifier");
    if (ck.hparams.size() < 3 || ck.hparams.size() != 3 + ck.hparams[2])
        throw FormatError("malformed classifier hyperparameters");
    TextCnnConfig cfg;
    cfg.embed_dim = ck.hparams[0];
    cfg.filters = ck.hparams[1];
    cfg.widths.assign(ck.hparams.begin() + 3, ck.hparams.end());
    std::unique_ptr<TextCnn> clf;
    try {
        clf = std::make_unique<TextCnn>(ck.vocab, cfg);
    } catch (const ConfigError& e) {
        throw FormatError(std::string("invalid classifier settings in checkpoint: ") + e.what());
    }
    load_into(clf->parameters(), ck);
    clf->freeze();
    return clf;
}

void save_generator(const Generator& model, const CheckpointMeta& meta, const std::filesystem::path& path) {
    save_checkpoint(make_checkpoint(model, meta), path);
}

void save_classifier(const TextCnn& clf, const CheckpointMeta& meta, const std::filesystem::path& path) {
    save_checkpoint(make_checkpoint(clf, meta), path);
}

std::unique_ptr<Generator> load_generator(const std::filesystem::path& path, CheckpointMeta* meta) {
    const Checkpoint ck = load_checkpoint(path);
    if (meta)
        *meta = ck.meta;
    return generator_from_checkpoint(ck);
}

std::unique_ptr<TextCnn> load_classifier(const std::filesystem::path& path) {
    return classifier_from_checkpoint(load_checkpoint(path));
}

} // namespace stylerl
