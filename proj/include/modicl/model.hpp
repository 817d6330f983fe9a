#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "modicl/autodiff.hpp"
#include "modicl/dataset.hpp"
#include "modicl/rng.hpp"

namespace modicl {

/// Decoder-only transformer configuration. vocab is the prime p; the context
/// holds n_ctx (x, y, z) triples, i.e. 3*n_ctx tokens.
struct ModelConfig {
    int depth = 2;
    int heads = 4;
    int d_embed = 512;
    int vocab = 29;
    int n_ctx = 32;
    int mlp_widening = 4;
    double rope_theta = 10000.0;
    double ln_eps = 1e-5;

    int n_ctx_tokens() const noexcept { return 3 * n_ctx; }
    int head_dim() const noexcept { return d_embed / heads; }

    void validate() const {
        if (depth < 1) throw std::invalid_argument("model.depth must be >= 1");
        if (heads < 1) throw std::invalid_argument("model.heads must be >= 1");
        if (vocab < 2) throw std::invalid_argument("model.vocab must be >= 2");
        if (n_ctx < 1) throw std::invalid_argument("model.n_ctx must be >= 1");
        if (mlp_widening < 1) throw std::invalid_argument("model.mlp_widening must be >= 1");
        if (d_embed % heads != 0) {
            throw std::invalid_argument("model.d_embed=" + std::to_string(d_embed) +
                                        " must be divisible by heads=" + std::to_string(heads));
        }
        if (head_dim() % 2 != 0) {
            throw std::invalid_argument("model.d_embed/heads must be even for the rotary pairs");
        }
    }

    bool operator==(const ModelConfig&) const = default;
};

template <typename T>
struct NamedParam {
    std::string name;
    Tensor<T>* tensor;
    bool decay_exempt; // LayerNorm gains are excluded from weight decay
};

/// All trainable weights. The readout is the embedding matrix itself (weight
/// tying): logits are computed against embedding rows, so mutating the
/// embedding changes the readout identically.
template <typename T>
struct ParameterSet {
    ModelConfig config;

    Tensor<T> embedding; // [vocab, d_embed]

    struct Block {
        Tensor<T> ln1_gain;
        Tensor<T> wq, wk, wv, wo;  // [d_embed, d_embed], applied as x * W
        Tensor<T> ln2_gain;
        Tensor<T> w_in;            // [d_embed, widening*d_embed]
        Tensor<T> w_out;           // [widening*d_embed, d_embed]
    };
    std::vector<Block> blocks;

    Tensor<T> final_ln_gain;

    std::vector<NamedParam<T>> named() {
        std::vector<NamedParam<T>> out;
        out.push_back({"embedding", &embedding, false});
        for (size_t l = 0; l < blocks.size(); ++l) {
            const std::string prefix = "block" + std::to_string(l) + ".";
            Block& blk = blocks[l];
            out.push_back({prefix + "ln1_gain", &blk.ln1_gain, true});
            out.push_back({prefix + "wq", &blk.wq, false});
            out.push_back({prefix + "wk", &blk.wk, false});
            out.push_back({prefix + "wv", &blk.wv, false});
            out.push_back({prefix + "wo", &blk.wo, false});
            out.push_back({prefix + "ln2_gain", &blk.ln2_gain, true});
            out.push_back({prefix + "w_in", &blk.w_in, false});
            out.push_back({prefix + "w_out", &blk.w_out, false});
        }
        out.push_back({"final_ln_gain", &final_ln_gain, true});
        return out;
    }

    void set_requires_grad(bool on) {
        for (auto& p : named()) p.tensor->set_requires_grad(on);
    }

    void zero_grad() {
        for (auto& p : named()) p.tensor->zero_grad();
    }

    int64_t parameter_count() {
        int64_t n = 0;
        for (auto& p : named()) n += p.tensor->numel();
        return n;
    }

    template <typename U>
    ParameterSet<U> cast() {
        ParameterSet<U> out;
        out.config = config;
        out.blocks.resize(blocks.size());
        auto src = named();
        auto convert = [](const Tensor<T>& t) {
            std::vector<U> v(static_cast<size_t>(t.numel()));
            for (int64_t i = 0; i < t.numel(); ++i) v[static_cast<size_t>(i)] = static_cast<U>(t.data()[i]);
            return Tensor<U>(t.shape(), std::move(v));
        };
        auto dst = out.named();
        for (size_t i = 0; i < src.size(); ++i) *dst[i].tensor = convert(*src[i].tensor);
        return out;
    }

    ParameterSet clone() {
        ParameterSet out;
        out.config = config;
        out.blocks.resize(blocks.size());
        auto src = named();
        auto dst = out.named();
        for (size_t i = 0; i < src.size(); ++i) *dst[i].tensor = src[i].tensor->clone();
        return out;
    }
};

/// Gaussian init: N(0, 0.02^2) for the embedding and every projection, except
/// each MLP output projection which uses variance 0.02^2 / (2*depth).
/// LayerNorm gains start at 1.
template <typename T>
ParameterSet<T> init_params(const ModelConfig& config, uint64_t seed) {
    config.validate();
    ParameterSet<T> params;
    params.config = config;
    Rng rng(seed);
    const double base_std = 0.02;
    const double mlp_out_std = base_std / std::sqrt(2.0 * static_cast<double>(config.depth));
    const int64_t D = config.d_embed;
    const int64_t W = static_cast<int64_t>(config.mlp_widening) * D;

    auto gaussian = [&rng](Shape shape, double stddev) {
        Tensor<T> t(std::move(shape));
        T* p = t.data();
        for (int64_t i = 0; i < t.numel(); ++i) p[i] = static_cast<T>(rng.normal(0.0, stddev));
        return t;
    };
    auto ones = [](Shape shape) {
        Tensor<T> t(std::move(shape));
        T* p = t.data();
        for (int64_t i = 0; i < t.numel(); ++i) p[i] = T(1);
        return t;
    };

    params.embedding = gaussian({config.vocab, D}, base_std);
    params.blocks.resize(static_cast<size_t>(config.depth));
    for (auto& blk : params.blocks) {
        blk.ln1_gain = ones({D});
        blk.wq = gaussian({D, D}, base_std);
        blk.wk = gaussian({D, D}, base_std);
        blk.wv = gaussian({D, D}, base_std);
        blk.wo = gaussian({D, D}, base_std);
        blk.ln2_gain = ones({D});
        blk.w_in = gaussian({D, W}, base_std);
        blk.w_out = gaussian({W, D}, mlp_out_std);
    }
    params.final_ln_gain = ones({D});
    return params;
}

/// Intermediate activations captured during a forward pass, resolved per layer:
/// post-residual block outputs, attention weights, pre-projection per-head
/// context vectors, and post-ReLU MLP hidden states.
template <typename T>
struct ActivationCapture {
    std::vector<Tensor<T>> block_out;   // depth x [B, T, D]
    std::vector<Tensor<T>> attention;   // depth x [B, H, T, T]
    std::vector<Tensor<T>> head_ctx;    // depth x [B, H, T, head_dim]
    std::vector<Tensor<T>> mlp_hidden;  // depth x [B, T, widening*D]
};

/// Full forward pass: pre-LN blocks (LN -> attention -> residual; LN -> MLP ->
/// residual), final LayerNorm, tied readout. Returns logits [B, T, vocab].
template <typename T>
Tensor<T> forward(Tape<T>& tape, ParameterSet<T>& params, const std::vector<int32_t>& tokens,
                  int64_t batch, int64_t seq_len, ActivationCapture<T>* capture = nullptr) {
    const ModelConfig& cfg = params.config;
    if (batch * seq_len != static_cast<int64_t>(tokens.size())) {
        throw std::invalid_argument("forward: token buffer does not match batch x seq_len");
    }
    if (seq_len > cfg.n_ctx_tokens()) {
        throw std::invalid_argument("forward: sequence of " + std::to_string(seq_len) +
                                    " tokens exceeds context of " + std::to_string(cfg.n_ctx_tokens()));
    }
    const T scale_factor = static_cast<T>(1.0 / std::sqrt(static_cast<double>(cfg.head_dim())));

    Tensor<T> x = ops::embed_lookup(tape, params.embedding, tokens, {batch, seq_len});
    for (auto& blk : params.blocks) {
        Tensor<T> normed = ops::layer_norm(tape, x, blk.ln1_gain, static_cast<T>(cfg.ln_eps));
        Tensor<T> q = ops::rope(tape, ops::split_heads(tape, ops::matmul(tape, normed, blk.wq), cfg.heads),
                                static_cast<T>(cfg.rope_theta));
        Tensor<T> k = ops::rope(tape, ops::split_heads(tape, ops::matmul(tape, normed, blk.wk), cfg.heads),
                                static_cast<T>(cfg.rope_theta));
        Tensor<T> v = ops::split_heads(tape, ops::matmul(tape, normed, blk.wv), cfg.heads);

        const int64_t G = batch * cfg.heads;
        Tensor<T> scores = ops::scale(
            tape, ops::bmm_nt(tape, q.reshaped({G, seq_len, cfg.head_dim()}),
                              k.reshaped({G, seq_len, cfg.head_dim()})),
            scale_factor);
        Tensor<T> attn = ops::causal_softmax(tape, scores);
        Tensor<T> ctx = ops::bmm_nn(tape, attn, v.reshaped({G, seq_len, cfg.head_dim()}));
        Tensor<T> merged =
            ops::merge_heads(tape, ctx.reshaped({batch, cfg.heads, seq_len, cfg.head_dim()}));
        x = ops::add(tape, x, ops::matmul(tape, merged, blk.wo));

        Tensor<T> normed2 = ops::layer_norm(tape, x, blk.ln2_gain, static_cast<T>(cfg.ln_eps));
        Tensor<T> hidden = ops::relu(tape, ops::matmul(tape, normed2, blk.w_in));
        x = ops::add(tape, x, ops::matmul(tape, hidden, blk.w_out));

        if (capture != nullptr) {
            capture->attention.push_back(attn.reshaped({batch, cfg.heads, seq_len, seq_len}).detached());
            capture->head_ctx.push_back(ctx.reshaped({batch, cfg.heads, seq_len, cfg.head_dim()}).detached());
            capture->mlp_hidden.push_back(hidden.detached());
            capture->block_out.push_back(x.detached());
        }
    }
    Tensor<T> final_norm = ops::layer_norm(tape, x, params.final_ln_gain, static_cast<T>(cfg.ln_eps));
    return ops::matmul_nt(tape, final_norm, params.embedding);
}

/// Flattened token buffer plus the prediction bookkeeping for a batch: the
/// model predicts each z from the logits row at the preceding y token.
struct BatchTokens {
    std::vector<int32_t> tokens;
    std::vector<int32_t> targets;   // per logits row; z value at query rows
    std::vector<uint8_t> row_mask;  // 1 on query rows (y positions)
    int64_t batch = 0;
    int64_t seq_len = 0;
};

inline BatchTokens flatten_batch(const std::vector<TokenSequence>& sequences) {
    if (sequences.empty()) throw std::invalid_argument("flatten_batch: empty batch");
    const int64_t seq_len = static_cast<int64_t>(sequences[0].tokens.size());
    BatchTokens out;
    out.batch = static_cast<int64_t>(sequences.size());
    out.seq_len = seq_len;
    out.tokens.reserve(static_cast<size_t>(out.batch * seq_len));
    out.targets.assign(static_cast<size_t>(out.batch * seq_len), 0);
    out.row_mask.assign(static_cast<size_t>(out.batch * seq_len), 0);
    for (int64_t b = 0; b < out.batch; ++b) {
        const TokenSequence& s = sequences[static_cast<size_t>(b)];
        if (static_cast<int64_t>(s.tokens.size()) != seq_len) {
            throw std::invalid_argument("flatten_batch: ragged sequence lengths");
        }
        out.tokens.insert(out.tokens.end(), s.tokens.begin(), s.tokens.end());
        for (int32_t zpos : s.target_positions) {
            // Next-token setup: the label at zpos is predicted from row zpos-1.
            out.targets[static_cast<size_t>(b * seq_len + zpos - 1)] = s.tokens[static_cast<size_t>(zpos)];
            out.row_mask[static_cast<size_t>(b * seq_len + zpos - 1)] = 1;
        }
    }
    return out;
}

template <typename T>
struct SequenceLossResult {
    Tensor<T> loss;
    std::vector<std::vector<uint8_t>> per_shot_correct; // [batch][shot]
    double last_shot_accuracy = 0.0;
    double mean_shot_accuracy = 0.0;
};

template <typename T>
void score_shots(const Tensor<T>& logits, const std::vector<TokenSequence>& sequences,
                 SequenceLossResult<T>& result) {
    const int64_t V = logits.dim(logits.ndim() - 1);
    const int64_t seq_len = logits.dim(1);
    const T* pl = logits.data();
    int64_t correct_last = 0, correct_all = 0, total_all = 0;
    result.per_shot_correct.resize(sequences.size());
    for (size_t b = 0; b < sequences.size(); ++b) {
        const TokenSequence& s = sequences[b];
        auto& row = result.per_shot_correct[b];
        row.resize(s.target_positions.size());
        for (size_t j = 0; j < s.target_positions.size(); ++j) {
            const int64_t query_row = static_cast<int64_t>(b) * seq_len + s.target_positions[j] - 1;
            const T* lrow = pl + query_row * V;
            int32_t argmax = 0;
            for (int64_t v = 1; v < V; ++v) {
                if (lrow[v] > lrow[argmax]) argmax = static_cast<int32_t>(v);
            }
            const bool ok = argmax == s.tokens[static_cast<size_t>(s.target_positions[j])];
            row[j] = ok ? 1 : 0;
            correct_all += ok;
            ++total_all;
            if (j + 1 == s.target_positions.size()) correct_last += ok;
        }
    }
    result.last_shot_accuracy = static_cast<double>(correct_last) / static_cast<double>(sequences.size());
    result.mean_shot_accuracy = static_cast<double>(correct_all) / static_cast<double>(total_all);
}

/// Masked cross-entropy over the z labels plus per-shot argmax correctness.
template <typename T>
SequenceLossResult<T> sequence_loss(Tape<T>& tape, ParameterSet<T>& params,
                                    const std::vector<TokenSequence>& sequences) {
    BatchTokens bt = flatten_batch(sequences);
    Tensor<T> logits = forward(tape, params, bt.tokens, bt.batch, bt.seq_len);
    SequenceLossResult<T> result{ops::masked_cross_entropy(tape, logits, bt.targets, bt.row_mask), {}};
    score_shots(logits, sequences, result);
    return result;
}

} // namespace modicl
