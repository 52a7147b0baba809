#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "stylerl/classifier.hpp"
#include "stylerl/models.hpp"

namespace stylerl {

// Binary layout, little-endian:
//   magic "SRLCKPT\0" | u32 version (1) | u8 kind (0 classifier, 1 causal, 2 seq2seq)
//   u32 n_hparams | u64 hparams[n]
//     generators: d_model heads layers d_ff context
//     classifier: embed_dim filters n_widths widths...
//   u64 vocab_bytes | vocabulary text (one token per line)
//   u32 n_tensors | per tensor: u32 rank, u64 dims[rank]
//   f64 payload of every tensor in table order
//   u64 step | u64 seed | u64 config_hash
enum class CheckpointKind : std::uint8_t { Classifier = 0, Causal = 1, Seq2Seq = 2 };

struct CheckpointMeta {
    std::uint64_t step = 0;
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;
    bool operator==(const CheckpointMeta&) const = default;
};

struct Checkpoint {
    CheckpointKind kind = CheckpointKind::Classifier;
    std::vector<std::uint64_t> hparams;
    Vocabulary vocab;
    std::vector<Tensor> tensors; // values only
    CheckpointMeta meta;
};

std::string serialize_checkpoint(const Checkpoint& ck);
// Throws FormatError on bad magic, version, kind or truncated data.
Checkpoint parse_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint make_checkpoint(const Generator& model, const CheckpointMeta& meta);
Checkpoint make_checkpoint(const TextCnn& clf, const CheckpointMeta& meta);

// Rebuild a model; FormatError when the checkpoint holds the other kind of
// model or its shape table disagrees with the declared hyperparameters.
std::unique_ptr<Generator> generator_from_checkpoint(const Checkpoint& ck);
std::unique_ptr<TextCnn> classifier_from_checkpoint(const Checkpoint& ck);

void save_generator(const Generator& model, const CheckpointMeta& meta, const std::filesystem::path& path);
void save_classifier(const TextCnn& clf, const CheckpointMeta& meta, const std::filesystem::path& path);
std::unique_ptr<Generator> load_generator(const std::filesystem::path& path, CheckpointMeta* meta = nullptr);
std::unique_ptr<TextCnn> load_classifier(const std::filesystem::path& path);

} // namespace stylerl
