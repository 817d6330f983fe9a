#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "modicl/checkpoint.hpp"
#include "modicl/model.hpp"

using namespace modicl;

namespace {

double empirical_std(const Tensor<float>& t) {
    double mean = 0;
    for (int64_t i = 0; i < t.numel(); ++i) mean += t.data()[i];
    mean /= static_cast<double>(t.numel());
    double var = 0;
    for (int64_t i = 0; i < t.numel(); ++i) {
        const double c = t.data()[i] - mean;
        var += c * c;
    }
    return std::sqrt(var / static_cast<double>(t.numel()));
}

ModelConfig tiny_config(int p = 7, int n_ctx = 4) {
    ModelConfig cfg;
    cfg.depth = 2;
    cfg.heads = 2;
    cfg.d_embed = 16;
    cfg.vocab = p;
    cfg.n_ctx = n_ctx;
    return cfg;
}

} // namespace

TEST_CASE("config validation") {
    ModelConfig bad = tiny_config();
    bad.d_embed = 15;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = tiny_config();
    bad.heads = 8; // head_dim = 2 ok; heads=16 -> head_dim 1, odd
    CHECK_NOTHROW(bad.validate());
    bad.heads = 16;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("initialization statistics match the scheme") {
    ModelConfig cfg;
    cfg.depth = 2;
    cfg.heads = 4;
    cfg.d_embed = 512;
    cfg.vocab = 29;
    cfg.n_ctx = 4;
    ParameterSet<float> params = init_params<float>(cfg, 1234);

    CHECK(empirical_std(params.embedding) == doctest::Approx(0.02).epsilon(0.05));
    CHECK(empirical_std(params.blocks[0].wq) == doctest::Approx(0.02).epsilon(0.05));
    const double expect_out = 0.02 / std::sqrt(2.0 * cfg.depth);
    CHECK(empirical_std(params.blocks[0].w_out) == doctest::Approx(expect_out).epsilon(0.05));
    CHECK(empirical_std(params.blocks[1].w_out) == doctest::Approx(expect_out).epsilon(0.05));
    for (int64_t i = 0; i < params.final_ln_gain.numel(); ++i) {
        CHECK(params.final_ln_gain.data()[i] == 1.0f);
    }

    ParameterSet<float> again = init_params<float>(cfg, 1234);
    CHECK(params.embedding.values() == again.embedding.values());
    CHECK(params.blocks[1].w_in.values() == again.blocks[1].w_in.values());
    ParameterSet<float> other = init_params<float>(cfg, 1235);
    CHECK(params.embedding.values() != other.embedding.values());
}

TEST_CASE("rope properties") {
    Tape<double> tape;
    tape.set_recording(false);
    Rng rng(5);
    const int64_t T = 6, hd = 8;

    // position 0 is the identity rotation
    Tensor<double> v({1, 1, T, hd});
    for (int64_t i = 0; i < v.numel(); ++i) v.data()[i] = rng.normal();
    Tensor<double> r = ops::rope(tape, v, 10000.0);
    for (int64_t j = 0; j < hd; ++j) {
        CHECK(r.data()[j] == doctest::Approx(v.data()[j]).epsilon(1e-12));
    }

    // norm preservation at every position
    for (int64_t t = 0; t < T; ++t) {
        double n0 = 0, n1 = 0;
        for (int64_t j = 0; j < hd; ++j) {
            n0 += v.data()[t * hd + j] * v.data()[t * hd + j];
            n1 += r.data()[t * hd + j] * r.data()[t * hd + j];
        }
        CHECK(std::sqrt(n1) == doctest::Approx(std::sqrt(n0)).epsilon(1e-9));
    }

    // attention logits depend only on relative position: dot(rope(q,m), rope(k,n))
    // equals dot(rope(q,m+s), rope(k,n+s))
    Tensor<double> q({1, 1, T, hd}), k({1, 1, T, hd});
    for (int64_t j = 0; j < hd; ++j) {
        const double qj = rng.normal(), kj = rng.normal();
        for (int64_t t = 0; t < T; ++t) {
            q.data()[t * hd + j] = qj; // same head vector replicated at all positions
            k.data()[t * hd + j] = kj;
        }
    }
    Tensor<double> rq = ops::rope(tape, q, 10000.0);
    Tensor<double> rk = ops::rope(tape, k, 10000.0);
    auto dot_at = [&](int64_t m, int64_t n) {
        double acc = 0;
        for (int64_t j = 0; j < hd; ++j) acc += rq.data()[m * hd + j] * rk.data()[n * hd + j];
        return acc;
    };
    const double base = dot_at(3, 1);
    CHECK(dot_at(4, 2) == doctest::Approx(base).epsilon(1e-9));
    CHECK(dot_at(5, 3) == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("forward shape, causality and attention structure") {
    ModelConfig cfg = tiny_config(7, 4);
    ParameterSet<float> params = init_params<float>(cfg, 9);
    std::vector<int32_t> tokens = {1, 2, 3, 4, 5, 6, 0, 1, 2, 3, 4, 5};
    Tape<float> tape;
    tape.set_recording(false);
    ActivationCapture<float> capture;
    Tensor<float> logits = forward(tape, params, tokens, 1, 12, &capture);
    CHECK(logits.shape() == Shape{1, 12, 7});

    // attention rows sum to 1 and are strictly causal
    for (const Tensor<float>& attn : capture.attention) {
        for (int64_t h = 0; h < cfg.heads; ++h) {
            for (int64_t i = 0; i < 12; ++i) {
                double row = 0;
                for (int64_t j = 0; j < 12; ++j) {
                    const float w = attn.data()[((0 * cfg.heads + h) * 12 + i) * 12 + j];
                    if (j > i) CHECK(w == 0.0f);
                    row += w;
                }
                CHECK(std::abs(row - 1.0) < 1e-5);
            }
        }
    }

    // perturbing token t never changes logits before t
    for (size_t t = 0; t < tokens.size(); ++t) {
        std::vector<int32_t> perturbed = tokens;
        perturbed[t] = (perturbed[t] + 3) % 7;
        Tensor<float> logits2 = forward(tape, params, perturbed, 1, 12);
        for (size_t pos = 0; pos < t; ++pos) {
            for (int64_t v = 0; v < 7; ++v) {
                CHECK(logits2.data()[pos * 7 + v] == logits.data()[pos * 7 + v]);
            }
        }
    }

    CHECK_THROWS_AS(forward(tape, params, std::vector<int32_t>{9}, 1, 1), std::invalid_argument);
}

TEST_CASE("weight tying: embedding edits change the readout") {
    ModelConfig cfg = tiny_config(7, 2);
    ParameterSet<float> params = init_params<float>(cfg, 11);
    std::vector<int32_t> tokens = {1, 2, 3, 4, 5, 6};
    Tape<float> tape;
    tape.set_recording(false);
    Tensor<float> before = forward(tape, params, tokens, 1, 6);
    // bump the row of a token that never appears in the input; only the
    // readout path can expose the change
    for (int64_t j = 0; j < cfg.d_embed; ++j) params.embedding.data()[0 * cfg.d_embed + j] += 0.5f;
    Tensor<float> after = forward(tape, params, tokens, 1, 6);
    bool changed = false;
    for (int64_t pos = 0; pos < 6; ++pos) {
        if (after.data()[pos * 7 + 0] != before.data()[pos * 7 + 0]) changed = true;
        for (int64_t v = 1; v < 7; ++v) {
            CHECK(after.data()[pos * 7 + v] == before.data()[pos * 7 + v]);
        }
    }
    CHECK(changed);
}

TEST_CASE("untrained accuracy is near chance and loss near ln p") {
    ModelConfig cfg;
    cfg.depth = 2;
    cfg.heads = 4;
    cfg.d_embed = 64;
    cfg.vocab = 29;
    cfg.n_ctx = 8;
    ParameterSet<float> params = init_params<float>(cfg, 77);
    PrimeField f(29);
    TaskSplit tasks = sample_tasks_rectangular(64, 29, 1);
    InputSplit inputs = split_inputs(0.6, 29, 2);
    auto seqs = make_eval_sequences(SequenceSet::id_train, 64, tasks, inputs, 8, 3);
    Tape<float> tape;
    SequenceLossResult<float> result = sequence_loss(tape, params, seqs);
    CHECK(result.loss.item() == doctest::Approx(std::log(29.0)).epsilon(0.02));
    CHECK(result.mean_shot_accuracy < 0.15);
    CHECK(result.per_shot_correct.size() == 64);
    CHECK(result.per_shot_correct[0].size() == 8);
}

namespace {

// Loss plus the ReLU activation pattern. Central differences are only a valid
// derivative estimate while the network stays on one smooth piece, so the
// checker skips coordinates whose +/-eps evaluations land on different sides
// of any ReLU kink.
struct ProbedLoss {
    double loss;
    std::vector<uint8_t> relu_pattern;
};

ProbedLoss probed_loss(ParameterSet<double>& params, const std::vector<TokenSequence>& seqs) {
    Tape<double> silent;
    silent.set_recording(false);
    BatchTokens bt = flatten_batch(seqs);
    ActivationCapture<double> capture;
    Tensor<double> logits = forward(silent, params, bt.tokens, bt.batch, bt.seq_len, &capture);
    Tensor<double> loss = ops::masked_cross_entropy(silent, logits, bt.targets, bt.row_mask);
    ProbedLoss out{loss.item(), {}};
    for (const Tensor<double>& hidden : capture.mlp_hidden) {
        for (int64_t i = 0; i < hidden.numel(); ++i) {
            out.relu_pattern.push_back(hidden.data()[i] > 0.0);
        }
    }
    return out;
}

} // namespace

TEST_CASE("full-model gradients match finite differences (f64)") {
    ModelConfig cfg = tiny_config(7, 4);
    ParameterSet<double> params = init_params<double>(cfg, 2024);
    params.set_requires_grad(true);

    PrimeField f(7);
    TaskSplit tasks = sample_tasks_rectangular(8, 7, 1);
    InputSplit inputs = split_inputs(0.7, 7, 2);
    auto seqs = make_eval_sequences(SequenceSet::id_train, 2, tasks, inputs, 4, 5);

    Tape<double> tape;
    SequenceLossResult<double> result = sequence_loss(tape, params, seqs);
    tape.backward(result.loss);

    const double eps = 1e-3;
    double max_rel = 0;
    int64_t checked = 0, skipped = 0;
    for (auto& p : params.named()) {
        Tensor<double>& t = *p.tensor;
        // probe a deterministic subset of each tensor to keep the unit test
        // quick; the acceptance suite sweeps every coordinate
        const int64_t stride = std::max<int64_t>(1, t.numel() / 13);
        for (int64_t i = 0; i < t.numel(); i += stride) {
            const double keep = t.data()[i];
            t.data()[i] = keep + eps;
            const ProbedLoss up = probed_loss(params, seqs);
            t.data()[i] = keep - eps;
            const ProbedLoss down = probed_loss(params, seqs);
            t.data()[i] = keep;
            if (up.relu_pattern != down.relu_pattern) {
                ++skipped;
                continue;
            }
            ++checked;
            const double numeric = (up.loss - down.loss) / (2 * eps);
            const double analytic = t.grad()[i];
            const double rel = std::abs(analytic - numeric) /
                               std::max({std::abs(analytic), std::abs(numeric), 1e-3});
            max_rel = std::max(max_rel, rel);
        }
    }
    CHECK(max_rel < 1e-4);
    // the kink-straddling coordinates must stay a small minority
    CHECK(4 * skipped < checked);
}

TEST_CASE("checkpoint round trip is bit exact") {
    ModelConfig cfg = tiny_config(11, 3);
    ParameterSet<float> params = init_params<float>(cfg, 31);
    const std::string path =
        (std::filesystem::temp_directory_path() / "modicl_test_ckpt.bin").string();
    save_checkpoint(path, params, 31, 1234);
    Checkpoint loaded = load_checkpoint(path);
    CHECK(loaded.seed == 31);
    CHECK(loaded.step == 1234);
    CHECK(loaded.params.config == cfg);

    auto a = params.named();
    auto b = loaded.params.named();
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].tensor->values() == b[i].tensor->values());
    }

    // identical forward outputs, bitwise
    std::vector<int32_t> tokens = {1, 2, 3, 4, 5, 6, 7, 8, 9};
    Tape<float> tape;
    tape.set_recording(false);
    Tensor<float> l1 = forward(tape, params, tokens, 1, 9);
    Tensor<float> l2 = forward(tape, loaded.params, tokens, 1, 9);
    CHECK(l1.values() == l2.values());
    std::filesystem::remove(path);

    CHECK_THROWS_AS(load_checkpoint("/nonexistent/nothing.ckpt"), std::runtime_error);
}
