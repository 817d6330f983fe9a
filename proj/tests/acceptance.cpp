// Acceptance suite: one pass/fail line per criterion, exit 0 only if all pass.
//
// Training-backed criteria reuse finished run directories under
// ./acceptance_runs when their config snapshot matches, so a re-run of the
// suite is fast; delete that directory to retrain from scratch.

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "modicl/config.hpp"
#include "modicl/eval.hpp"
#include "modicl/interp.hpp"
#include "modicl/oracles.hpp"
#include "modicl/sweep.hpp"
#include "modicl/trainer.hpp"

using namespace modicl;

namespace {

int g_pass = 0, g_fail = 0;

void report(int index, bool ok, const std::string& what, const std::string& detail) {
    std::printf("[%2d/11] %s %s (%s)\n", index, ok ? "PASS" : "FAIL", what.c_str(), detail.c_str());
    std::fflush(stdout);
    (ok ? g_pass : g_fail) += 1;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

// ---------------------------------------------------------------- criterion 1
void criterion_field_and_log() {
    bool ok = true;
    std::string detail;
    for (uint32_t p : {5u, 7u, 11u, 29u}) {
        PrimeField f(p);
        for (uint32_t a = 0; a < p && ok; ++a) {
            if (a != 0 && f.mul(a, f.inv(a)) != 1) ok = false;
            for (uint32_t b = 0; b < p && ok; ++b) {
                if (f.add(a, b) != f.add(b, a)) ok = false;
                if (f.mul(a, b) != f.mul(b, a)) ok = false;
                for (uint32_t c = 0; c < p; ++c) {
                    if (f.add(f.add(a, b), c) != f.add(a, f.add(b, c)) ||
                        f.mul(f.mul(a, b), c) != f.mul(a, f.mul(b, c)) ||
                        f.mul(a, f.add(b, c)) != f.add(f.mul(a, b), f.mul(a, c))) {
                        ok = false;
                        break;
                    }
                }
            }
        }
        if (!ok) {
            detail = "field axiom failed at p=" + std::to_string(p);
            break;
        }
    }
    if (ok) {
        const std::array<uint32_t, 29> published = {0,  28, 15, 19, 2,  22, 6,  12, 17, 10,
                                                    9,  11, 21, 18, 27, 13, 4,  7,  25, 23,
                                                    24, 3,  26, 20, 8,  16, 5,  1,  14};
        LogTable table(29, 27);
        for (uint32_t n = 0; n < 29; ++n) {
            if (table.log(n) != published[n]) {
                ok = false;
                detail = "log(" + std::to_string(n) + ")=" + std::to_string(table.log(n)) +
                         " expected " + std::to_string(published[n]);
                break;
            }
        }
    }
    if (ok) detail = "axioms exhaustive for p in {5,7,11,29}; all 29 log entries match";
    report(1, ok, "field and log-table exactness", detail);
}

// ---------------------------------------------------------------- criterion 2
void criterion_oracle_soundness() {
    int64_t checks = 0, violations = 0;
    for (uint32_t p : {5u, 7u, 11u}) {
        PrimeField f(p);
        Rng rng(900 + p);
        for (uint32_t a = 0; a < p; ++a) {
            for (uint32_t b = 0; b < p; ++b) {
                for (int k = 1; k <= 4; ++k) {
                    for (int trial = 0; trial < 50; ++trial) {
                        std::vector<InputPair> inputs;
                        for (int i = 0; i < k; ++i) {
                            inputs.push_back({rng.below_u32(p), rng.below_u32(p)});
                        }
                        auto ctx = labeled_context(f, {a, b}, inputs);
                        auto consistent = infer_tasks(f, ctx);
                        for (uint32_t x = 0; x < p; ++x) {
                            for (uint32_t y = 0; y < p; ++y) {
                                const uint32_t truth = f.linear_eval(a, b, x, y);
                                auto rm = ratio_match(f, ctx, x, y);
                                auto mr = modular_regress(f, ctx, x, y);
                                ++checks;
                                if (rm && *rm != truth) ++violations;
                                if (mr && *mr != truth) ++violations;
                                if (rm && (!mr || *mr != *rm)) ++violations;
                                if (consistent.size() == 1 && mr &&
                                    *mr != f.linear_eval(consistent[0].a, consistent[0].b, x, y)) {
                                    ++violations;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    report(2, violations == 0, "oracle soundness, subsumption, inference agreement",
           std::to_string(checks) + " query checks, " + std::to_string(violations) + " violations");
}

// ---------------------------------------------------------------- criterion 3
void criterion_ratio_coverage() {
    bool ok = true;
    std::string detail;
    int64_t examples = 0;
    for (uint32_t p : {5u, 7u, 11u, 29u}) {
        PrimeField f(p);
        for (uint32_t ex = 0; ex < p && ok; ++ex) {
            for (uint32_t ey = 0; ey < p && ok; ++ey) {
                if (ex == 0 && ey == 0) continue;
                std::vector<ContextExample> ctx = {{ex, ey, f.linear_eval(3 % p, 4 % p, ex, ey)}};
                int64_t covered = 0;
                for (uint32_t x = 0; x < p; ++x) {
                    for (uint32_t y = 0; y < p; ++y) {
                        if (ratio_match(f, ctx, x, y)) ++covered;
                    }
                }
                ++examples;
                if (covered != p) {
                    ok = false;
                    detail = "example (" + std::to_string(ex) + "," + std::to_string(ey) + ") at p=" +
                             std::to_string(p) + " covers " + std::to_string(covered);
                }
            }
        }
    }
    if (ok) detail = std::to_string(examples) + " nonzero examples, each covering exactly p queries";
    report(3, ok, "ratio-matching 1-shot coverage", detail);
}

// ---------------------------------------------------------------- criterion 4
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

void criterion_gradients() {
    ModelConfig cfg;
    cfg.depth = 2;
    cfg.heads = 2;
    cfg.d_embed = 16;
    cfg.vocab = 7;
    cfg.n_ctx = 4;
    ParameterSet<double> params = init_params<double>(cfg, 2024);
    params.set_requires_grad(true);
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
        for (int64_t i = 0; i < t.numel(); ++i) {
            const double keep = t.data()[i];
            t.data()[i] = keep + eps;
            const ProbedLoss up = probed_loss(params, seqs);
            t.data()[i] = keep - eps;
            const ProbedLoss down = probed_loss(params, seqs);
            t.data()[i] = keep;
            // central differences are only a derivative estimate on a single
            // smooth piece; skip coordinates that straddle a ReLU kink
            if (up.relu_pattern != down.relu_pattern) {
                ++skipped;
                continue;
            }
            ++checked;
            const double numeric = (up.loss - down.loss) / (2 * eps);
            const double analytic = t.grad()[i];
            max_rel = std::max(max_rel, std::abs(analytic - numeric) /
                                            std::max({std::abs(analytic), std::abs(numeric), 1e-3}));
        }
    }
    const bool ok = max_rel < 1e-4 && checked > 4 * skipped;
    report(4, ok, "full-model gradients vs central finite differences",
           "max rel err " + fmt(max_rel) + " over " + std::to_string(checked) +
               " coordinates (" + std::to_string(skipped) + " kink-straddling skipped)");
}

// ---------------------------------------------------------------- criterion 5
void criterion_schedule_and_optimizer() {
    TrainConfig tc;
    tc.lr = 1.5e-4;
    tc.steps = 200000;
    bool ok = true;
    std::string detail;
    const double w0 = lr_at(0, tc);
    const double wj = lr_at(10000, tc);
    const double wT = lr_at(tc.steps, tc);
    if (std::abs(w0 - 0.01 * tc.lr) > 1e-15 || std::abs(wj - tc.lr) > 1e-15 ||
        std::abs(wT - 0.1 * tc.lr) > 1e-15) {
        ok = false;
        detail = "schedule endpoints " + fmt(w0) + ", " + fmt(wj) + ", " + fmt(wT);
    }

    if (ok) {
        ModelConfig mc;
        mc.depth = 2;
        mc.heads = 2;
        mc.d_embed = 16;
        mc.vocab = 7;
        mc.n_ctx = 4;
        ParameterSet<float> params = init_params<float>(mc, 3);
        params.set_requires_grad(true);
        params.zero_grad();
        int exempt_gains = 0, exempt_other = 0, decayed_gains = 0;
        for (auto& p : params.named()) {
            const bool is_gain = p.name.find("ln") != std::string::npos &&
                                 p.name.find("gain") != std::string::npos;
            if (is_gain && p.decay_exempt) ++exempt_gains;
            if (!is_gain && p.decay_exempt) ++exempt_other;
            if (is_gain && !p.decay_exempt) ++decayed_gains;
        }
        TrainConfig opt_cfg;
        opt_cfg.lr = 0.05;
        opt_cfg.weight_decay = 2.0;
        AdamW<float> opt(params, opt_cfg);
        const float gain_before = params.blocks[0].ln1_gain.data()[0];
        const float weight_before = params.blocks[0].wq.data()[0];
        opt.step(params, opt_cfg.lr);
        const bool gain_fixed = params.blocks[0].ln1_gain.data()[0] == gain_before;
        const bool weight_decayed =
            std::abs(params.blocks[0].wq.data()[0] - weight_before * (1 - 0.05f * 2.0f)) < 1e-7f;
        ok = exempt_other == 0 && decayed_gains == 0 && exempt_gains == 5 && gain_fixed &&
             weight_decayed;
        detail = "lr(0)=0.01*eta, lr(0.05T)=eta, lr(T)=0.1*eta; " + std::to_string(exempt_gains) +
                 " LayerNorm gains exempt, weights decay";
        if (!ok) detail += " [audit failed]";
    }
    report(5, ok, "schedule and optimizer conformance", detail);
}

// --------------------------------------------------- shared training recipes
// Desk-scale analogue settings for the training-backed criteria. The width,
// context length and step budget were chosen by pilot runs; the optimizer
// family, batch balancing and schedule come from the training setup itself.
struct DeskRecipe {
    int d_embed = 128;
    int n_ctx = 16;
    int heads = 4;
    int64_t steps = 12000;
    int batch_size = 80;
    double lr = 1e-3;
    double weight_decay = 2.0;
    int64_t probe_interval = 250;
};

ModelConfig desk_model(const DeskRecipe& r, uint32_t p) {
    ModelConfig mc;
    mc.depth = 2;
    mc.heads = r.heads;
    mc.d_embed = r.d_embed;
    mc.vocab = static_cast<int>(p);
    mc.n_ctx = r.n_ctx;
    return mc;
}

const char* kRunRoot = "acceptance_runs";

// ---------------------------------------------------------------- criterion 6
void criterion_memorization() {
    DeskRecipe recipe;
    recipe.d_embed = 128; // pinned by the criterion
    recipe.batch_size = 64;
    recipe.steps = 20000;
    ModelConfig mc = desk_model(recipe, 11);
    DataConfig dc;
    dc.p = 11;
    dc.n_id = 4;
    dc.alpha = 0.6;
    dc.n_ctx = recipe.n_ctx;
    TrainConfig tc;
    tc.lr = recipe.lr;
    tc.weight_decay = recipe.weight_decay;
    tc.steps = recipe.steps;
    tc.batch_size = recipe.batch_size;
    tc.probe_interval = recipe.probe_interval;
    tc.seed = 1;
    tc.stop_at_train_acc = 0.999;

    const std::string run_dir = std::string(kRunRoot) + "/memorization";
    const nlohmann::json snapshot = run_config_snapshot(mc, dc, tc);
    RunRecord record;
    if (detail::run_is_finished(run_dir, snapshot)) {
        record = load_run_record(run_dir);
    } else {
        record = train(mc, dc, tc, run_dir);
    }
    Checkpoint final = load_checkpoint(record.final_checkpoint_path);
    TaskSplit tasks = sample_tasks_rectangular(dc.n_id, dc.p, dc.task_seed);
    InputSplit inputs = split_inputs(dc.alpha, dc.p, dc.input_seed);
    auto seqs = make_eval_sequences(SequenceSet::id_train, 128, tasks, inputs, dc.n_ctx, 777);
    const double acc = per_shot_metrics(final.params, seqs, "id_train").last_shot_accuracy();
    report(6, acc >= 0.99, "memorization at desk scale (p=11, n_id=4)",
           "last-shot id_train accuracy " + fmt(acc) + " after " +
               std::to_string(record.steps_run) + " steps");
}

// ---------------------------------------------------------------- criterion 7
struct TransitionResult {
    std::vector<PhaseCell> cells;
    bool ok = false;
    std::string detail;
};

TransitionResult run_transition() {
    DeskRecipe recipe;
    ModelConfig mc = desk_model(recipe, 11);
    DataConfig dc;
    dc.p = 11;
    dc.alpha = 0.7;
    dc.n_ctx = recipe.n_ctx;
    TrainConfig tc;
    tc.lr = recipe.lr;
    tc.weight_decay = recipe.weight_decay;
    tc.steps = recipe.steps;
    tc.batch_size = recipe.batch_size;
    tc.probe_interval = recipe.probe_interval;

    SweepConfig sc;
    sc.n_id_values = {4, 16, 40, 80};
    sc.alpha_values = {0.7};
    sc.seeds = {1, 2, 3};
    sc.eval_sequences = 128;

    TransitionResult result;
    result.cells = phase_sweep(mc, dc, tc, sc, std::string(kRunRoot) + "/transition");
    std::ostringstream accs;
    bool ok = true;
    double prev = -1.0;
    for (const PhaseCell& cell : result.cells) {
        if (!cell.ok) {
            ok = false;
            result.detail = "cell n_id=" + std::to_string(cell.n_id) + " failed: " + cell.error;
            result.ok = false;
            return result;
        }
        if (cell.accuracy[3] < prev) ok = false; // monotone non-decreasing in n_id
        prev = cell.accuracy[3];
        accs << " " << cell.n_id << ":" << fmt(cell.accuracy[3]);
    }
    if (result.cells.front().accuracy[3] >= 0.2) ok = false;
    if (result.cells.back().accuracy[3] <= 0.5) ok = false;
    result.ok = ok;
    result.detail = "ood_test last-shot acc by n_id:" + accs.str();
    return result;
}

// ---------------------------------------------------------------- criterion 8
void criterion_untrained_baselines() {
    ModelConfig mc;
    mc.depth = 2;
    mc.heads = 4;
    mc.d_embed = 64;
    mc.vocab = 29;
    mc.n_ctx = 32;
    ParameterSet<float> params = init_params<float>(mc, 12345);
    TaskSplit tasks = sample_tasks_rectangular(512, 29, 1);
    InputSplit inputs = split_inputs(0.6, 29, 2);
    bool ok = true;
    std::string detail;
    const double lnp = std::log(29.0);
    std::ostringstream os;
    for (SequenceSet which : {SequenceSet::id_train, SequenceSet::id_test, SequenceSet::ood_train,
                              SequenceSet::ood_test}) {
        auto seqs = make_eval_sequences(which, 128, tasks, inputs, 32, 31 + static_cast<int>(which));
        ShotMetrics m = per_shot_metrics(params, seqs, to_string(which));
        // per-sequence mean accuracies are the independent unit for the SE
        std::vector<double> per_seq(seqs.size(), 0.0);
        {
            // recompute per-sequence accuracy from per-shot correctness
            Tape<float> tape;
            SequenceLossResult<float> r = sequence_loss(tape, params, seqs);
            for (size_t s = 0; s < seqs.size(); ++s) {
                double acc = 0;
                for (uint8_t c : r.per_shot_correct[s]) acc += c;
                per_seq[s] = acc / static_cast<double>(r.per_shot_correct[s].size());
            }
        }
        double mean = 0;
        for (double v : per_seq) mean += v;
        mean /= static_cast<double>(per_seq.size());
        double var = 0;
        for (double v : per_seq) var += (v - mean) * (v - mean);
        var /= static_cast<double>(per_seq.size() - 1);
        const double se = std::sqrt(var / static_cast<double>(per_seq.size()));
        const double loss = m.mean_shot_loss();
        const bool loss_ok = std::abs(loss - lnp) / lnp <= 0.02;
        const bool acc_ok = std::abs(mean - 1.0 / 29.0) <= 3.0 * se;
        if (!loss_ok || !acc_ok) ok = false;
        os << " " << to_string(which) << ": loss=" << fmt(loss) << " acc=" << fmt(mean)
           << "+-" << fmt(se);
    }
    detail = "ln p = " + fmt(lnp) + ";" + os.str();
    report(8, ok, "untrained baselines on every set", detail);
}

// --------------------------------------------------------------- criterion 10
void criterion_determinism() {
    ModelConfig mc;
    mc.depth = 2;
    mc.heads = 2;
    mc.d_embed = 32;
    mc.vocab = 11;
    mc.n_ctx = 8;
    DataConfig dc;
    dc.p = 11;
    dc.n_id = 8;
    dc.alpha = 0.7;
    dc.n_ctx = 8;
    TrainConfig tc;
    tc.lr = 1e-3;
    tc.steps = 60;
    tc.batch_size = 16;
    tc.probe_interval = 20;
    tc.seed = 7;

    namespace fs = std::filesystem;
    const std::string d1 = std::string(kRunRoot) + "/determinism_a";
    const std::string d2 = std::string(kRunRoot) + "/determinism_b";
    fs::remove_all(d1);
    fs::remove_all(d2);
    train(mc, dc, tc, d1);
    train(mc, dc, tc, d2);
    auto slurp = [](const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    const bool metrics_same = slurp(d1 + "/metrics.csv") == slurp(d2 + "/metrics.csv");

    Checkpoint ckpt = load_checkpoint(d1 + "/final.ckpt");
    TaskSplit tasks = sample_tasks_rectangular(dc.n_id, dc.p, dc.task_seed);
    InputSplit inputs = split_inputs(dc.alpha, dc.p, dc.input_seed);
    auto seqs = make_eval_sequences(SequenceSet::ood_test, 8, tasks, inputs, dc.n_ctx, 5);
    BatchTokens bt = flatten_batch(seqs);
    Tape<float> tape;
    tape.set_recording(false);
    Tensor<float> before = forward(tape, ckpt.params, bt.tokens, bt.batch, bt.seq_len);
    const std::string resaved = std::string(kRunRoot) + "/determinism_resave.ckpt";
    save_checkpoint(resaved, ckpt.params, ckpt.seed, ckpt.step);
    Checkpoint reloaded = load_checkpoint(resaved);
    Tensor<float> after = forward(tape, reloaded.params, bt.tokens, bt.batch, bt.seq_len);
    const bool forward_same = before.values() == after.values();

    report(10, metrics_same && forward_same, "determinism and checkpoint persistence",
           std::string("metrics.csv ") + (metrics_same ? "bit-identical" : "DIFFER") +
               "; reload forward " + (forward_same ? "bit-exact" : "DIFFERS"));
}

// --------------------------------------------------------------- criterion 11
void criterion_corruption_harness() {
    ModelConfig mc;
    mc.depth = 2;
    mc.heads = 2;
    mc.d_embed = 32;
    mc.vocab = 11;
    mc.n_ctx = 8;
    ParameterSet<float> params = init_params<float>(mc, 21);
    TaskSplit tasks = sample_tasks_rectangular(16, 11, 1);
    InputSplit inputs = split_inputs(0.7, 11, 2);
    auto seqs = make_eval_sequences(SequenceSet::ood_test, 48, tasks, inputs, 8, 3);
    ShotMetrics clean = per_shot_metrics(params, seqs, "clean");

    ShotMetrics zero = label_corruption_multi(params, seqs, 0.0, 17);
    bool f0_exact = zero.acc_per_shot == clean.acc_per_shot &&
                    zero.loss_per_shot == clean.loss_per_shot;

    bool causality_exact = true;
    for (int pos = 1; pos <= 8; ++pos) {
        ShotMetrics corrupted = label_corruption_single(params, seqs, pos, 1000 + pos);
        for (int j = 0; j < pos; ++j) {
            if (corrupted.acc_per_shot[static_cast<size_t>(j)] !=
                    clean.acc_per_shot[static_cast<size_t>(j)] ||
                corrupted.loss_per_shot[static_cast<size_t>(j)] !=
                    clean.loss_per_shot[static_cast<size_t>(j)]) {
                causality_exact = false;
            }
        }
    }
    report(11, f0_exact && causality_exact, "label-corruption harness",
           std::string("f=0 ") + (f0_exact ? "reproduces clean metrics exactly" : "DIFFERS") +
               "; shots <= j " + (causality_exact ? "unaffected for every j" : "AFFECTED"));
}

// ---------------------------------------------------------------- criterion 9
void criterion_interpretability(const TransitionResult& transition) {
    if (!transition.ok && transition.cells.empty()) {
        report(9, false, "interpretability statistics", "criterion-7 runs unavailable");
        return;
    }
    const PhaseCell& top = transition.cells.back(); // n_id = 80 cell
    if (!top.ok) {
        report(9, false, "interpretability statistics", "n_id=80 cell failed: " + top.error);
        return;
    }
    Checkpoint ckpt = load_checkpoint(top.best_run_dir + "/best_ood.ckpt");
    PrimeField field(11);
    LogTable logs = LogTable::with_default_base(11);
    DataConfig dc;
    dc.p = 11;
    dc.n_id = top.n_id;
    dc.alpha = top.alpha;
    dc.n_ctx = ckpt.params.config.n_ctx;
    TaskSplit tasks = sample_tasks_rectangular(dc.n_id, dc.p, dc.task_seed);
    InputSplit inputs = split_inputs(dc.alpha, dc.p, dc.input_seed);

    // fixed 4-shot o.o.d. prefix for the scans
    const TaskVector task = tasks.out_of_distribution.front();
    Rng prefix_rng(4242);
    std::vector<InputPair> prefix = draw_input_stream(inputs.train, 4, prefix_rng);

    CosineMatrix cosine = cosine_similarity_matrix(ckpt.params, field, 0, TriplePos::y, task, prefix);
    const double ratio_stat = ratio_class_statistic(cosine);

    auto probe_seqs = make_eval_sequences(SequenceSet::ood_test, 8, tasks, inputs, dc.n_ctx, 99);
    double best_band = 0;
    for (const TokenSequence& seq : probe_seqs) {
        auto maps = attention_maps(ckpt.params, seq);
        const int64_t H = maps[0].dim(0), Tn = maps[0].dim(1);
        for (int64_t h = 0; h < H; ++h) {
            Tensor<float> one({Tn, Tn});
            std::copy(maps[0].data() + h * Tn * Tn, maps[0].data() + (h + 1) * Tn * Tn, one.data());
            best_band = std::max(best_band, attention_band_mass(one));
        }
    }

    EmbeddingPca emb = embedding_pca(ckpt.params, logs, 3);
    SeparationTest parity = log_parity_separation(emb, 31337, 20000);

    const bool ok = ratio_stat > 0.1 && best_band > 0.8 && parity.p_value < 0.01;
    report(9, ok, "interpretability statistics on the generalizing model",
           "ratio-class stat " + fmt(ratio_stat) + " (>0.1), band mass " + fmt(best_band) +
               " (>0.8), parity p " + fmt(parity.p_value) + " (<0.01)");
}

} // namespace

int main() {
    tune_allocator_for_training();
    std::filesystem::create_directories(kRunRoot);
    criterion_field_and_log();
    criterion_oracle_soundness();
    criterion_ratio_coverage();
    criterion_gradients();
    criterion_schedule_and_optimizer();
    criterion_memorization();
    TransitionResult transition = run_transition();
    report(7, transition.ok, "task-diversity transition (qualitative)", transition.detail);
    criterion_untrained_baselines();
    criterion_interpretability(transition);
    criterion_determinism();
    criterion_corruption_harness();
    std::printf("ACCEPTANCE: %d/11 criteria passed\n", g_pass);
    return g_fail == 0 ? 0 : 1;
}
