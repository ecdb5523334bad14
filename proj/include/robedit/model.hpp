#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "robedit/matrix.hpp"

namespace robedit {

struct ModelConfig {
    int n_layers = 4;
    int n_heads = 4;
    int d_model = 64;
    int d_ff = 256;
    int vocab_size = 259;
    int max_seq = 128;
    int pad_id = 256;
    int bos_id = 257;
    int eos_id = 258;

    void validate() const;
};

struct LayerWeights {
    Matrix attn_norm_gain;  // 1 x d
    Matrix wq, wk, wv, wo;  // d x d
    Matrix mlp_norm_gain;   // 1 x d
    Matrix mlp_up;          // d x f
    Matrix mlp_up_bias;     // 1 x f
    Matrix mlp_down;        // f x d, the only tensor the editor may touch
};

struct ModelBundle {
    ModelConfig config;
    Matrix token_embedding;     // V x d
    Matrix position_embedding;  // max_seq x d
    std::vector<LayerWeights> layers;
    Matrix final_norm_gain;  // 1 x d
    Matrix unembedding;      // d x V
};

// Stable, ordered view over every tensor in the bundle. Serialization,
// fingerprints, and locality checks all iterate this directory.
struct TensorEntry {
    std::string name;
    const Matrix* tensor;
};
std::vector<TensorEntry> tensor_directory(const ModelBundle& bundle);

// FNV-1a over names, shapes, and raw little-endian payload in directory order.
uint64_t bundle_fingerprint(const ModelBundle& bundle);

// Weights ~ N(0, 0.02), norm gains = 1; fully determined by the seed.
ModelBundle seeded_random_model(const ModelConfig& config, uint64_t seed);

// Left-padded token grid. Padding may only appear as a prefix of a row;
// position ids count non-pad tokens from 0.
struct Batch {
    int n_samples = 0;
    int seq_len = 0;
    std::vector<int> token_ids;     // S*T row-major
    std::vector<uint8_t> mask;      // 1 = real token
    std::vector<int> position_ids;  // 0-based over non-pad positions

    static Batch from_prompts(const std::vector<std::vector<int>>& prompts, const ModelConfig& cfg);

    int token(int s, int t) const { return token_ids[static_cast<size_t>(s) * seq_len + t]; }
    bool is_real(int s, int t) const { return mask[static_cast<size_t>(s) * seq_len + t] != 0; }
    int position(int s, int t) const { return position_ids[static_cast<size_t>(s) * seq_len + t]; }
    // Index of the first non-pad position of sample s (seq_len if all pad).
    int first_real(int s) const;

    void validate(const ModelConfig& cfg) const;
};

// Per sample, per layer index 0..N: a T x d matrix of layer outputs
// (index 0 = embedding output). Pad rows are zero.
struct HiddenTrace {
    std::vector<std::vector<Matrix>> states;  // [sample][layer]
};

// Overwrite layer `layer`'s output rows at `positions` with rows of
// `source_states`, right-aligned: target position p reads source row
// p - (T_target - T_source). `samples` empty means every sample.
struct PatchSpec {
    int layer = 1;  // 1..N
    Matrix source_states;
    std::vector<int> positions;
    std::vector<int> samples;
};

struct GenerationParams {
    int max_new_tokens = 16;
    float temperature = 0.2f;
    uint64_t seed = 0;
    int n_samples = 1;
};

struct ForwardOptions {
    const PatchSpec* patch = nullptr;
    bool capture_hidden = false;
    // When in 1..N, also capture that layer's post-activation MLP
    // up-projection output (T x f per sample).
    int capture_mlp_layer = 0;
};

struct ForwardResult {
    std::vector<Matrix> logits;  // per sample: T x V
    std::optional<HiddenTrace> trace;
    std::vector<Matrix> mlp_activations;  // per sample, when requested
};

ForwardResult forward(const ModelBundle& model, const Batch& batch, const ForwardOptions& opts = {});

// Autoregressive sampling with cached keys/values. The patch applies once
// to the prompt forward pass; generated tokens are never patched. Sample s
// uses seed + s, so results do not depend on evaluation order. Sequences
// stop at eos_id (excluded from the output) or max_new_tokens.
std::vector<std::vector<int>> generate(const ModelBundle& model, const std::vector<int>& prompt,
                                       const GenerationParams& params, const PatchSpec* patch = nullptr);

// Byte-level tokenizer: ids 0..255 are raw bytes, then pad/bos/eos.
// tokenize prepends bos; detokenize drops non-byte ids.
std::vector<int> tokenize(const std::string& text, const ModelConfig& cfg);
std::string detokenize(const std::vector<int>& tokens, const ModelConfig& cfg);

}  // namespace robedit
