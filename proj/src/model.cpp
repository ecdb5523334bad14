#include "robedit/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <random>
#include <set>
#include <string>

#include "robedit/errors.hpp"
#include "robedit/rng.hpp"

static_assert(std::endian::native == std::endian::little, "little-endian host required");

namespace robedit {

namespace {

constexpr double kNormEps = 1e-5;

void rms_norm_row(std::span<const float> x, std::span<const float> gain, std::span<float> out) {
    double ms = 0.0;
    for (float v : x) {
        ms += static_cast<double>(v) * static_cast<double>(v);
    }
    ms /= static_cast<double>(x.size());
    const double inv = 1.0 / std::sqrt(ms + kNormEps);
    for (size_t i = 0; i < x.size(); ++i) {
        out[i] = static_cast<float>(static_cast<double>(x[i]) * inv * static_cast<double>(gain[i]));
    }
}

Matrix rms_norm(const Matrix& x, const Matrix& gain) {
    Matrix out(x.rows(), x.cols());
    for (int i = 0; i < x.rows(); ++i) {
        rms_norm_row(x.row(i), gain.row(0), out.row(i));
    }
    return out;
}

// Causal attention context for one query row against keys/values rows
// [0, n_keys). Scores and the softmax run in double.
void attend_row(std::span<const float> q, const Matrix& k, const Matrix& v, int n_keys, int n_heads,
                std::span<float> ctx_out) {
    const int d = static_cast<int>(q.size());
    const int dh = d / n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<double> scores(static_cast<size_t>(n_keys));
    for (int h = 0; h < n_heads; ++h) {
        const int off = h * dh;
        double mx = -1e300;
        for (int j = 0; j < n_keys; ++j) {
            double s = 0.0;
            for (int c = 0; c < dh; ++c) {
                s += static_cast<double>(q[off + c]) * static_cast<double>(k.at(j, off + c));
            }
            scores[j] = s * scale;
            mx = std::max(mx, scores[j]);
        }
        double sum = 0.0;
        for (int j = 0; j < n_keys; ++j) {
            scores[j] = std::exp(scores[j] - mx);
            sum += scores[j];
        }
        for (int c = 0; c < dh; ++c) {
            double acc = 0.0;
            for (int j = 0; j < n_keys; ++j) {
                acc += (scores[j] / sum) * static_cast<double>(v.at(j, off + c));
            }
            ctx_out[off + c] = static_cast<float>(acc);
        }
    }
}

Matrix add(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), a.cols());
    for (size_t i = 0; i < a.data().size(); ++i) {
        out.data()[i] = a.data()[i] + b.data()[i];
    }
    return out;
}

void add_bias_rows(Matrix& m, const Matrix& bias) {
    for (int i = 0; i < m.rows(); ++i) {
        std::span<float> r = m.row(i);
        std::span<const float> b = bias.row(0);
        for (int j = 0; j < m.cols(); ++j) {
            r[j] += b[j];
        }
    }
}

// Grows row-by-row; rows beyond `used` are scratch.
struct KvCache {
    Matrix k, v;
    int used = 0;
};

// One transformer layer over a full sequence of real tokens (no pads).
// h_in is n x d; writes the layer output, and optionally the layer's
// keys/values and the post-activation MLP up-projection output.
Matrix layer_forward_seq(const LayerWeights& lw, int n_heads, const Matrix& h_in, KvCache* kv, Matrix* mlp_act_out) {
    const int n = h_in.rows();
    const Matrix x = rms_norm(h_in, lw.attn_norm_gain);
    const Matrix q = matmul(x, lw.wq);
    const Matrix k = matmul(x, lw.wk);
    const Matrix v = matmul(x, lw.wv);
    Matrix ctx(n, h_in.cols());
    for (int i = 0; i < n; ++i) {
        attend_row(q.row(i), k, v, i + 1, n_heads, ctx.row(i));
    }
    const Matrix att = matmul(ctx, lw.wo);
    const Matrix mid = add(h_in, att);
    const Matrix xm = rms_norm(mid, lw.mlp_norm_gain);
    Matrix up = matmul(xm, lw.mlp_up);
    add_bias_rows(up, lw.mlp_up_bias);
    const Matrix act = gelu(up);
    if (mlp_act_out != nullptr) {
        *mlp_act_out = act;
    }
    const Matrix mlp = matmul(act, lw.mlp_down);
    if (kv != nullptr) {
        for (int i = 0; i < n; ++i) {
            std::copy(k.row(i).begin(), k.row(i).end(), kv->k.row(kv->used).begin());
            std::copy(v.row(i).begin(), v.row(i).end(), kv->v.row(kv->used).begin());
            ++kv->used;
        }
    }
    return add(h_in, mlp);
}

// One new token through one layer, attending to the cache (which already
// holds every earlier position) plus itself. Row arithmetic is identical
// to layer_forward_seq, so padded and incremental paths agree bitwise.
Matrix layer_forward_step(const LayerWeights& lw, int n_heads, const Matrix& h_row, KvCache& kv) {
    const Matrix x = rms_norm(h_row, lw.attn_norm_gain);
    const Matrix q = matmul(x, lw.wq);
    const Matrix k_new = matmul(x, lw.wk);
    const Matrix v_new = matmul(x, lw.wv);
    std::copy(k_new.row(0).begin(), k_new.row(0).end(), kv.k.row(kv.used).begin());
    std::copy(v_new.row(0).begin(), v_new.row(0).end(), kv.v.row(kv.used).begin());
    ++kv.used;
    Matrix ctx(1, h_row.cols());
    attend_row(q.row(0), kv.k, kv.v, kv.used, n_heads, ctx.row(0));
    const Matrix att = matmul(ctx, lw.wo);
    const Matrix mid = add(h_row, att);
    const Matrix xm = rms_norm(mid, lw.mlp_norm_gain);
    Matrix up = matmul(xm, lw.mlp_up);
    add_bias_rows(up, lw.mlp_up_bias);
    const Matrix act = gelu(up);
    const Matrix mlp = matmul(act, lw.mlp_down);
    return add(h_row, mlp);
}

Matrix embed_tokens(const ModelBundle& model, std::span<const int> tokens, int first_position) {
    const int d = model.config.d_model;
    Matrix h(static_cast<int>(tokens.size()), d);
    for (size_t i = 0; i < tokens.size(); ++i) {
        const int pos = first_position + static_cast<int>(i);
        std::span<float> row = h.row(static_cast<int>(i));
        std::span<const float> te = model.token_embedding.row(tokens[i]);
        std::span<const float> pe = model.position_embedding.row(pos);
        for (int c = 0; c < d; ++c) {
            row[c] = te[c] + pe[c];
        }
    }
    return h;
}

// Maps patch positions into local rows of a sample whose real tokens span
// target positions [start, start + n) of a width-T sequence space.
struct ResolvedPatch {
    std::vector<std::pair<int, int>> rows;  // (local row, source row)
};

ResolvedPatch resolve_patch(const PatchSpec& patch, int target_width, int start, int n_real, int d_model) {
    if (patch.source_states.cols() != d_model) {
        throw DimensionError("patch source_states column count does not match d_model");
    }
    ResolvedPatch r;
    const int shift = target_width - patch.source_states.rows();
    for (int p : patch.positions) {
        const int local = p - start;
        if (local < 0 || local >= n_real) {
            throw DimensionError("patch position " + std::to_string(p) + " is not a non-pad position");
        }
        const int srow = p - shift;
        if (srow < 0 || srow >= patch.source_states.rows()) {
            throw DimensionError("patch position " + std::to_string(p) + " has no right-aligned source row");
        }
        r.rows.emplace_back(local, srow);
    }
    return r;
}

void apply_patch(Matrix& h, const PatchSpec& patch, const ResolvedPatch& resolved) {
    for (auto [local, srow] : resolved.rows) {
        std::span<const float> src = patch.source_states.row(srow);
        std::copy(src.begin(), src.end(), h.row(local).begin());
    }
}

int sample_token(std::span<const float> logits, float temperature, std::mt19937_64& rng) {
    const int v = static_cast<int>(logits.size());
    if (temperature == 0.0f) {
        int best = 0;
        for (int i = 1; i < v; ++i) {
            if (logits[i] > logits[best]) {
                best = i;
            }
        }
        return best;
    }
    double mx = -1e300;
    for (int i = 0; i < v; ++i) {
        mx = std::max(mx, static_cast<double>(logits[i]) / temperature);
    }
    std::vector<double> p(static_cast<size_t>(v));
    double sum = 0.0;
    for (int i = 0; i < v; ++i) {
        p[i] = std::exp(static_cast<double>(logits[i]) / temperature - mx);
        sum += p[i];
    }
    const double u = uniform53(rng) * sum;
    double cum = 0.0;
    for (int i = 0; i < v; ++i) {
        cum += p[i];
        if (u < cum) {
            return i;
        }
    }
    return v - 1;
}

void fill_normal(Matrix& m, NormalSampler& sampler, double stddev) {
    for (float& v : m.data()) {
        v = static_cast<float>(sampler.next(0.0, stddev));
    }
}

void fill_ones(Matrix& m) {
    std::fill(m.data().begin(), m.data().end(), 1.0f);
}

void append_u32(std::string& buf, uint32_t v) {
    buf.append(reinterpret_cast<const char*>(&v), sizeof(v));
}

}  // namespace

void ModelConfig::validate() const {
    if (n_layers < 1 || n_heads < 1 || d_model < 1 || d_ff < 1 || vocab_size < 1 || max_seq < 1) {
        throw ConfigError("model dimensions must be positive");
    }
    if (d_model % n_heads != 0) {
        throw ConfigError("d_model must be divisible by n_heads");
    }
    for (int id : {pad_id, bos_id, eos_id}) {
        if (id < 0 || id >= vocab_size) {
            throw ConfigError("special token id out of vocabulary range");
        }
    }
    if (pad_id == bos_id || pad_id == eos_id || bos_id == eos_id) {
        throw ConfigError("pad/bos/eos ids must be pairwise distinct");
    }
}

std::vector<TensorEntry> tensor_directory(const ModelBundle& bundle) {
    std::vector<TensorEntry> dir;
    dir.push_back({"token_embedding", &bundle.token_embedding});
    dir.push_back({"position_embedding", &bundle.position_embedding});
    for (size_t i = 0; i < bundle.layers.size(); ++i) {
        const std::string prefix = "layer." + std::to_string(i + 1) + ".";
        const LayerWeights& lw = bundle.layers[i];
        dir.push_back({prefix + "attn_norm", &lw.attn_norm_gain});
        dir.push_back({prefix + "wq", &lw.wq});
        dir.push_back({prefix + "wk", &lw.wk});
        dir.push_back({prefix + "wv", &lw.wv});
        dir.push_back({prefix + "wo", &lw.wo});
        dir.push_back({prefix + "mlp_norm", &lw.mlp_norm_gain});
        dir.push_back({prefix + "mlp_up", &lw.mlp_up});
        dir.push_back({prefix + "mlp_up_bias", &lw.mlp_up_bias});
        dir.push_back({prefix + "mlp_down", &lw.mlp_down});
    }
    dir.push_back({"final_norm", &bundle.final_norm_gain});
    dir.push_back({"unembedding", &bundle.unembedding});
    return dir;
}

uint64_t bundle_fingerprint(const ModelBundle& bundle) {
    std::string buf;
    for (const TensorEntry& e : tensor_directory(bundle)) {
        buf.append(e.name);
        buf.push_back('\0');
        append_u32(buf, static_cast<uint32_t>(e.tensor->rows()));
        append_u32(buf, static_cast<uint32_t>(e.tensor->cols()));
        buf.append(reinterpret_cast<const char*>(e.tensor->data().data()), e.tensor->data().size() * sizeof(float));
    }
    return fnv1a64(buf);
}

ModelBundle seeded_random_model(const ModelConfig& config, uint64_t seed) {
    config.validate();
    ModelBundle b;
    b.config = config;
    const int d = config.d_model;
    const int f = config.d_ff;
    NormalSampler sampler(seed);
    constexpr double kInitStd = 0.02;

    b.token_embedding = Matrix(config.vocab_size, d);
    fill_normal(b.token_embedding, sampler, kInitStd);
    b.position_embedding = Matrix(config.max_seq, d);
    fill_normal(b.position_embedding, sampler, kInitStd);
    b.layers.resize(static_cast<size_t>(config.n_layers));
    for (LayerWeights& lw : b.layers) {
        lw.attn_norm_gain = Matrix(1, d);
        fill_ones(lw.attn_norm_gain);
        lw.wq = Matrix(d, d);
        fill_normal(lw.wq, sampler, kInitStd);
        lw.wk = Matrix(d, d);
        fill_normal(lw.wk, sampler, kInitStd);
        lw.wv = Matrix(d, d);
        fill_normal(lw.wv, sampler, kInitStd);
        lw.wo = Matrix(d, d);
        fill_normal(lw.wo, sampler, kInitStd);
        lw.mlp_norm_gain = Matrix(1, d);
        fill_ones(lw.mlp_norm_gain);
        lw.mlp_up = Matrix(d, f);
        fill_normal(lw.mlp_up, sampler, kInitStd);
        lw.mlp_up_bias = Matrix(1, f);
        fill_normal(lw.mlp_up_bias, sampler, kInitStd);
        lw.mlp_down = Matrix(f, d);
        fill_normal(lw.mlp_down, sampler, kInitStd);
    }
    b.final_norm_gain = Matrix(1, d);
    fill_ones(b.final_norm_gain);
    b.unembedding = Matrix(d, config.vocab_size);
    fill_normal(b.unembedding, sampler, kInitStd);
    return b;
}

Batch Batch::from_prompts(const std::vector<std::vector<int>>& prompts, const ModelConfig& cfg) {
    if (prompts.empty()) {
        throw ParameterError("batch needs at least one prompt");
    }
    size_t max_len = 0;
    for (const auto& p : prompts) {
        if (p.empty()) {
            throw ParameterError("prompt must be non-empty");
        }
        for (int id : p) {
            if (id < 0 || id >= cfg.vocab_size) {
                throw ParameterError("token id out of vocabulary range");
            }
            if (id == cfg.pad_id) {
                throw ParameterError("prompts must not contain pad_id; padding is added here");
            }
        }
        max_len = std::max(max_len, p.size());
    }
    if (max_len > static_cast<size_t>(cfg.max_seq)) {
        throw SequenceTooLong("prompt length exceeds max_seq");
    }
    Batch b;
    b.n_samples = static_cast<int>(prompts.size());
    b.seq_len = static_cast<int>(max_len);
    b.token_ids.assign(static_cast<size_t>(b.n_samples) * b.seq_len, cfg.pad_id);
    b.mask.assign(static_cast<size_t>(b.n_samples) * b.seq_len, 0);
    b.position_ids.assign(static_cast<size_t>(b.n_samples) * b.seq_len, 0);
    for (int s = 0; s < b.n_samples; ++s) {
        const auto& p = prompts[static_cast<size_t>(s)];
        const int start = b.seq_len - static_cast<int>(p.size());
        for (size_t i = 0; i < p.size(); ++i) {
            const size_t idx = static_cast<size_t>(s) * b.seq_len + start + i;
            b.token_ids[idx] = p[i];
            b.mask[idx] = 1;
            b.position_ids[idx] = static_cast<int>(i);
        }
    }
    return b;
}

int Batch::first_real(int s) const {
    for (int t = 0; t < seq_len; ++t) {
        if (is_real(s, t)) {
            return t;
        }
    }
    return seq_len;
}

void Batch::validate(const ModelConfig& cfg) const {
    const size_t expected = static_cast<size_t>(n_samples) * seq_len;
    if (n_samples < 1 || seq_len < 1 || token_ids.size() != expected || mask.size() != expected ||
        position_ids.size() != expected) {
        throw DimensionError("batch field sizes do not match n_samples x seq_len");
    }
    for (int s = 0; s < n_samples; ++s) {
        bool seen_real = false;
        int next_pos = 0;
        for (int t = 0; t < seq_len; ++t) {
            if (token(s, t) < 0 || token(s, t) >= cfg.vocab_size) {
                throw ParameterError("batch token id out of vocabulary range");
            }
            if (is_real(s, t)) {
                seen_real = true;
                if (position(s, t) != next_pos++) {
                    throw ParameterError("position ids must count non-pad tokens from 0");
                }
            } else {
                if (seen_real) {
                    throw ParameterError("padding is only allowed on the left");
                }
                if (token(s, t) != cfg.pad_id) {
                    throw ParameterError("masked positions must hold pad_id");
                }
            }
        }
        if (!seen_real) {
            throw ParameterError("batch sample has no non-pad tokens");
        }
    }
}

ForwardResult forward(const ModelBundle& model, const Batch& batch, const ForwardOptions& opts) {
    const ModelConfig& cfg = model.config;
    batch.validate(cfg);
    if (batch.seq_len > cfg.max_seq) {
        throw SequenceTooLong("batch seq_len exceeds max_seq");
    }
    const int n_layers = cfg.n_layers;
    if (opts.patch != nullptr && (opts.patch->layer < 1 || opts.patch->layer > n_layers)) {
        throw LayerIndexError("patch layer " + std::to_string(opts.patch->layer) + " outside 1.." +
                              std::to_string(n_layers));
    }
    if (opts.capture_mlp_layer < 0 || opts.capture_mlp_layer > n_layers) {
        throw LayerIndexError("capture_mlp_layer outside 0..n_layers");
    }
    for (int s : (opts.patch != nullptr ? opts.patch->samples : std::vector<int>{})) {
        if (s < 0 || s >= batch.n_samples) {
            throw DimensionError("patch sample index out of range");
        }
    }

    ForwardResult result;
    result.logits.reserve(static_cast<size_t>(batch.n_samples));
    if (opts.capture_hidden) {
        result.trace = HiddenTrace{};
        result.trace->states.resize(static_cast<size_t>(batch.n_samples));
    }
    if (opts.capture_mlp_layer > 0) {
        result.mlp_activations.resize(static_cast<size_t>(batch.n_samples));
    }

    const int T = batch.seq_len;
    const int d = cfg.d_model;
    for (int s = 0; s < batch.n_samples; ++s) {
        const int start = batch.first_real(s);
        const int n = T - start;
        std::vector<int> tokens(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            tokens[static_cast<size_t>(i)] = batch.token(s, start + i);
        }

        const bool patched = opts.patch != nullptr &&
                             (opts.patch->samples.empty() ||
                              std::find(opts.patch->samples.begin(), opts.patch->samples.end(), s) !=
                                  opts.patch->samples.end());
        ResolvedPatch resolved;
        if (patched) {
            resolved = resolve_patch(*opts.patch, T, start, n, d);
        }

        auto pad_out = [&](const Matrix& m) {
            Matrix full(T, m.cols());
            for (int i = 0; i < n; ++i) {
                std::span<const float> src = m.row(i);
                std::copy(src.begin(), src.end(), full.row(start + i).begin());
            }
            return full;
        };

        Matrix h = embed_tokens(model, tokens, 0);
        if (opts.capture_hidden) {
            result.trace->states[static_cast<size_t>(s)].push_back(pad_out(h));
        }
        for (int layer = 1; layer <= n_layers; ++layer) {
            Matrix mlp_act;
            const bool want_act = layer == opts.capture_mlp_layer;
            h = layer_forward_seq(model.layers[static_cast<size_t>(layer - 1)], cfg.n_heads, h, nullptr,
                                  want_act ? &mlp_act : nullptr);
            if (patched && layer == opts.patch->layer) {
                apply_patch(h, *opts.patch, resolved);
            }
            if (want_act) {
                result.mlp_activations[static_cast<size_t>(s)] = pad_out(mlp_act);
            }
            if (opts.capture_hidden) {
                result.trace->states[static_cast<size_t>(s)].push_back(pad_out(h));
            }
        }
        const Matrix logits = matmul(rms_norm(h, model.final_norm_gain), model.unembedding);
        result.logits.push_back(pad_out(logits));
    }
    return result;
}

std::vector<std::vector<int>> generate(const ModelBundle& model, const std::vector<int>& prompt,
                                       const GenerationParams& params, const PatchSpec* patch) {
    const ModelConfig& cfg = model.config;
    std::vector<int> tokens;
    bool seen_real = false;
    for (int id : prompt) {
        if (id < 0 || id >= cfg.vocab_size) {
            throw ParameterError("prompt token id out of vocabulary range");
        }
        if (id == cfg.pad_id) {
            if (seen_real) {
                throw ParameterError("pad tokens are only allowed as a prompt prefix");
            }
            continue;
        }
        seen_real = true;
        tokens.push_back(id);
    }
    if (tokens.empty()) {
        throw ParameterError("prompt must contain at least one non-pad token");
    }
    if (params.max_new_tokens < 0 || params.n_samples < 1) {
        throw ParameterError("max_new_tokens must be >= 0 and n_samples >= 1");
    }
    if (params.temperature < 0.0f) {
        throw ParameterError("temperature must be non-negative");
    }
    const int n0 = static_cast<int>(tokens.size());
    if (n0 + params.max_new_tokens > cfg.max_seq) {
        throw SequenceTooLong("prompt length + max_new_tokens exceeds max_seq");
    }
    if (patch != nullptr && (patch->layer < 1 || patch->layer > cfg.n_layers)) {
        throw LayerIndexError("patch layer outside 1..n_layers");
    }

    // Prompt pass: one run of the stack, shared by every sample. The patch
    // lands on the prompt's layer output only; keys/values of layers at or
    // below the patched layer stay derived from the raw prompt.
    const int cap = n0 + params.max_new_tokens;
    std::vector<KvCache> prompt_cache(static_cast<size_t>(cfg.n_layers));
    for (KvCache& kv : prompt_cache) {
        kv.k = Matrix(cap, cfg.d_model);
        kv.v = Matrix(cap, cfg.d_model);
        kv.used = 0;
    }
    ResolvedPatch resolved;
    if (patch != nullptr) {
        resolved = resolve_patch(*patch, n0, 0, n0, cfg.d_model);
    }
    Matrix h = embed_tokens(model, tokens, 0);
    for (int layer = 1; layer <= cfg.n_layers; ++layer) {
        h = layer_forward_seq(model.layers[static_cast<size_t>(layer - 1)], cfg.n_heads, h,
                              &prompt_cache[static_cast<size_t>(layer - 1)], nullptr);
        if (patch != nullptr && layer == patch->layer) {
            apply_patch(h, *patch, resolved);
        }
    }
    Matrix last(1, cfg.d_model);
    std::copy(h.row(n0 - 1).begin(), h.row(n0 - 1).end(), last.row(0).begin());
    const Matrix prompt_logits = matmul(rms_norm(last, model.final_norm_gain), model.unembedding);

    std::vector<std::vector<int>> outputs;
    outputs.reserve(static_cast<size_t>(params.n_samples));
    for (int s = 0; s < params.n_samples; ++s) {
        std::mt19937_64 rng(params.seed + static_cast<uint64_t>(s));
        std::vector<KvCache> cache = prompt_cache;
        std::vector<int> out;
        Matrix logits = prompt_logits;
        while (static_cast<int>(out.size()) < params.max_new_tokens) {
            const int next = sample_token(logits.row(0), params.temperature, rng);
            if (next == cfg.eos_id) {
                break;
            }
            out.push_back(next);
            if (static_cast<int>(out.size()) == params.max_new_tokens) {
                break;
            }
            const int pos = n0 + static_cast<int>(out.size()) - 1;
            Matrix row = embed_tokens(model, std::span<const int>(&next, 1), pos);
            for (int layer = 1; layer <= cfg.n_layers; ++layer) {
                row = layer_forward_step(model.layers[static_cast<size_t>(layer - 1)], cfg.n_heads, row,
                                         cache[static_cast<size_t>(layer - 1)]);
            }
            logits = matmul(rms_norm(row, model.final_norm_gain), model.unembedding);
        }
        outputs.push_back(std::move(out));
    }
    return outputs;
}

std::vector<int> tokenize(const std::string& text, const ModelConfig& cfg) {
    if (cfg.pad_id < 256 || cfg.bos_id < 256 || cfg.eos_id < 256) {
        throw ParameterError("byte tokenizer requires special token ids >= 256");
    }
    std::vector<int> out;
    out.reserve(text.size() + 1);
    out.push_back(cfg.bos_id);
    for (unsigned char c : text) {
        out.push_back(static_cast<int>(c));
    }
    return out;
}

std::string detokenize(const std::vector<int>& tokens, const ModelConfig& cfg) {
    (void)cfg;
    std::string out;
    out.reserve(tokens.size());
    for (int id : tokens) {
        if (id >= 0 && id < 256) {
            out.push_back(static_cast<char>(id));
        }
    }
    return out;
}

}  // namespace robedit
