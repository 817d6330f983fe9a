// modicl: dataset generation, pre-training, evaluation, oracle baselines,
// phase-diagram sweeps and interpretability reports for in-context learning
// of linear modular arithmetic.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "modicl/config.hpp"
#include "modicl/eval.hpp"
#include "modicl/interp.hpp"
#include "modicl/oracles.hpp"
#include "modicl/svg.hpp"
#include "modicl/sweep.hpp"
#include "modicl/trainer.hpp"

namespace fs = std::filesystem;
using namespace modicl;

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_root;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON configuration file");
    cmd->add_option("--set", args.overrides,
                    "Override a config field by dotted path, e.g. --set train.lr=3e-4");
    cmd->add_option("--out", args.out_root,
                    "Output root (default: $MODICL_OUT_ROOT or ./runs)");
}

RunConfig resolve_config(const CommonArgs& args) {
    nlohmann::json doc = nlohmann::json::object();
    if (!args.config_path.empty()) {
        std::ifstream in(args.config_path);
        if (!in) throw std::invalid_argument("config: cannot open " + args.config_path);
        in >> doc;
    }
    for (const std::string& assignment : args.overrides) apply_override(doc, assignment);
    RunConfig cfg = run_config_from_json(doc);
    cfg.validate();
    return cfg;
}

std::string resolve_out_root(const CommonArgs& args) {
    if (!args.out_root.empty()) return args.out_root;
    if (const char* env = std::getenv("MODICL_OUT_ROOT")) return env;
    return "runs";
}

void write_file(const std::string& path, const std::string& content) {
    fs::create_directories(fs::path(path).parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

void write_f32_dump(const std::string& stem, const Tensor<float>& t, nlohmann::json meta) {
    fs::create_directories(fs::path(stem).parent_path());
    std::ofstream bin(stem + ".bin", std::ios::binary);
    bin.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.numel() * sizeof(float)));
    meta["dtype"] = "f32";
    meta["shape"] = t.shape();
    write_file(stem + ".json", meta.dump(2) + "\n");
}

Checkpoint load_checkpoint_for(const RunConfig& cfg, const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.params.config.vocab != static_cast<int>(cfg.data.p) ||
        ckpt.params.config.n_ctx != cfg.data.n_ctx) {
        throw std::runtime_error("checkpoint " + path + " was trained for p=" +
                                 std::to_string(ckpt.params.config.vocab) + ", n_ctx=" +
                                 std::to_string(ckpt.params.config.n_ctx) +
                                 " which does not match the configuration");
    }
    return ckpt;
}

struct EvalSets {
    TaskSplit tasks;
    InputSplit inputs;
};

EvalSets make_sets(const RunConfig& cfg) {
    return {sample_tasks_rectangular(cfg.data.n_id, cfg.data.p, cfg.data.task_seed),
            split_inputs(cfg.data.alpha, cfg.data.p, cfg.data.input_seed)};
}

int cmd_gen_data(const CommonArgs& common) {
    RunConfig cfg = resolve_config(common);
    const std::string dir = resolve_out_root(common) + "/data";
    EvalSets sets = make_sets(cfg);

    write_file(dir + "/task_split.json", task_split_to_json(sets.tasks).dump(2) + "\n");
    write_file(dir + "/input_split.json", input_split_to_json(sets.inputs).dump(2) + "\n");
    {
        std::ostringstream os;
        cfg.log_table().write_csv(os);
        write_file(dir + "/log_table.csv", os.str());
    }
    for (SequenceSet which : {SequenceSet::id_train, SequenceSet::id_test, SequenceSet::ood_train,
                              SequenceSet::ood_test}) {
        std::ostringstream os;
        try {
            auto seqs = make_eval_sequences(which, 8, sets.tasks, sets.inputs, cfg.data.n_ctx,
                                            cfg.eval_seed);
            sequences_to_csv(seqs, os);
        } catch (const std::invalid_argument&) {
            os << "task_a,task_b,tokens\n"; // set empty under this split
        }
        write_file(dir + "/sample_" + std::string(to_string(which)) + ".csv", os.str());
    }
    write_file(dir + "/config.json", run_config_to_json(cfg).dump(2) + "\n");
    std::cout << "gen-data: p=" << cfg.data.p << " tasks_total=" << cfg.data.p * cfg.data.p
              << " n_id=" << sets.tasks.in_distribution.size()
              << " n_ood=" << sets.tasks.out_of_distribution.size()
              << " train_inputs=" << sets.inputs.train.size()
              << " test_inputs=" << sets.inputs.test.size() << " -> " << dir << "\n";
    return 0;
}

void write_metric_curves(const RunRecord& record, const std::string& path) {
    svg::Series train_acc{"train acc (last shot)", {}, {}, "#1f77b4"};
    svg::Series ood_acc{"ood-test acc (last shot)", {}, {}, "#d62728"};
    for (const ProbeRow& row : record.probes) {
        train_acc.x.push_back(static_cast<double>(row.step));
        train_acc.y.push_back(row.train_acc_last);
        ood_acc.x.push_back(static_cast<double>(row.step));
        ood_acc.y.push_back(row.ood_acc_last);
    }
    write_file(path, svg::line_chart({train_acc, ood_acc}, "training curves", "step", "accuracy"));
}

int cmd_train(const CommonArgs& common, const std::string& name) {
    RunConfig cfg = resolve_config(common);
    const std::string run_dir = resolve_out_root(common) + "/" + name;
    std::cout << "train: p=" << cfg.data.p << " n_id=" << cfg.data.n_id << " alpha="
              << cfg.data.alpha << " d=" << cfg.model.depth << " d_embed=" << cfg.model.d_embed
              << " steps=" << cfg.train.steps << " -> " << run_dir << "\n";
    RunRecord record = train(cfg.model, cfg.data, cfg.train, run_dir, [](const ProbeRow& row) {
        std::cout << "  step " << row.step << " lr " << row.lr << " train_loss " << row.train_loss
                  << " train_acc " << row.train_acc_last << " ood_acc " << row.ood_acc_last
                  << "\n";
    });
    write_metric_curves(record, run_dir + "/curves.svg");
    const int64_t stop = select_early_stop(record);
    std::cout << "train: finished " << record.steps_run << " steps; early-stop step "
              << record.probes[static_cast<size_t>(stop)].step << " with ood-test last-shot acc "
              << record.probes[static_cast<size_t>(stop)].ood_acc_last << "\n";
    std::cout << "train: checkpoints " << record.best_checkpoint_path << " , "
              << record.final_checkpoint_path << "\n";
    return 0;
}

int cmd_eval(const CommonArgs& common, const std::string& checkpoint_path) {
    RunConfig cfg = resolve_config(common);
    Checkpoint ckpt = load_checkpoint_for(cfg, checkpoint_path);
    const std::string dir = resolve_out_root(common) + "/eval";
    EvalSets sets = make_sets(cfg);

    PhaseQuadruple quad{0, 0, 0, 0};
    nlohmann::json summary;
    const std::array<SequenceSet, 4> order = {SequenceSet::id_train, SequenceSet::id_test,
                                              SequenceSet::ood_train, SequenceSet::ood_test};
    svg::Series curves[4] = {{"id_train", {}, {}, "#1f77b4"},
                             {"id_test", {}, {}, "#2ca02c"},
                             {"ood_train", {}, {}, "#ff7f0e"},
                             {"ood_test", {}, {}, "#d62728"}};
    for (size_t i = 0; i < order.size(); ++i) {
        auto seqs = make_eval_sequences(order[i], cfg.eval_sequences, sets.tasks, sets.inputs,
                                        cfg.data.n_ctx, cfg.eval_seed + i);
        ShotMetrics m = per_shot_metrics(ckpt.params, seqs, to_string(order[i]));
        quad[i] = m.last_shot_accuracy();
        std::ostringstream os;
        shot_metrics_to_csv(m, os);
        write_file(dir + "/per_shot_" + m.set_id + ".csv", os.str());
        for (size_t j = 0; j < m.acc_per_shot.size(); ++j) {
            curves[i].x.push_back(static_cast<double>(j + 1));
            curves[i].y.push_back(m.acc_per_shot[j]);
        }
        summary[m.set_id] = {{"last_shot_accuracy", m.last_shot_accuracy()},
                             {"last_shot_loss", m.last_shot_loss()},
                             {"mean_shot_accuracy", m.mean_shot_accuracy()}};
        std::cout << "eval " << m.set_id << ": last-shot acc " << m.last_shot_accuracy()
                  << ", loss " << m.last_shot_loss() << "\n";
    }
    const int phase = classify_phase(quad, cfg.phase_threshold);
    summary["phase"] = phase;
    summary["phase_name"] = phase_name(phase);
    summary["checkpoint"] = checkpoint_path;
    summary["step"] = ckpt.step;
    write_file(dir + "/summary.json", summary.dump(2) + "\n");
    write_file(dir + "/accuracy_vs_shots.svg",
               svg::line_chart({curves[0], curves[1], curves[2], curves[3]},
                               "accuracy vs in-context examples", "shot", "accuracy"));
    std::cout << "eval: phase " << phase << " (" << phase_name(phase) << ") -> " << dir << "\n";
    return 0;
}

int cmd_oracle(const CommonArgs& common, int shots, int64_t contexts_per_task) {
    RunConfig cfg = resolve_config(common);
    const std::string dir = resolve_out_root(common) + "/oracle";
    PrimeField field(cfg.data.p);
    const uint32_t p = field.modulus();

    // exhaustive soundness / subsumption / inference-agreement scan
    Rng rng(cfg.eval_seed);
    int64_t checked = 0, violations = 0;
    for (uint32_t a = 0; a < p; ++a) {
        for (uint32_t b = 0; b < p; ++b) {
            for (int64_t trial = 0; trial < contexts_per_task; ++trial) {
                const int k = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(shots)));
                std::vector<InputPair> inputs;
                for (int i = 0; i < k; ++i) inputs.push_back({rng.below_u32(p), rng.below_u32(p)});
                auto ctx = labeled_context(field, {a, b}, inputs);
                auto consistent = infer_tasks(field, ctx);
                for (uint32_t x = 0; x < p; ++x) {
                    for (uint32_t y = 0; y < p; ++y) {
                        const uint32_t truth = field.linear_eval(a, b, x, y);
                        auto rm = ratio_match(field, ctx, x, y);
                        auto mr = modular_regress(field, ctx, x, y);
                        ++checked;
                        if (rm && *rm != truth) ++violations;
                        if (mr && *mr != truth) ++violations;
                        if (rm && (!mr || *mr != *rm)) ++violations;
                        if (consistent.size() == 1 && mr &&
                            *mr != field.linear_eval(consistent[0].a, consistent[0].b, x, y)) {
                            ++violations;
                        }
                    }
                }
            }
        }
    }
    std::cout << "oracle: " << checked << " query checks, " << violations << " violations\n";

    // reference grids for one fixed context
    TaskSplit tasks = sample_tasks_rectangular(cfg.data.n_id, p, cfg.data.task_seed);
    const TaskVector task = tasks.out_of_distribution.empty() ? tasks.in_distribution.front()
                                                              : tasks.out_of_distribution.front();
    InputSplit inputs = split_inputs(cfg.data.alpha, p, cfg.data.input_seed);
    Rng prefix_rng(cfg.eval_seed + 1);
    std::vector<InputPair> prefix = draw_input_stream(inputs.train, shots, prefix_rng);
    auto ctx = labeled_context(field, task, prefix);
    for (OracleAlgorithm algo : {OracleAlgorithm::ratio, OracleAlgorithm::regression}) {
        OracleGrid grid = oracle_grid(field, ctx, task, algo);
        std::ostringstream os;
        oracle_grid_to_csv(grid, os);
        write_file(dir + "/grid_" + std::string(to_string(algo)) + ".csv", os.str());
        std::vector<double> img(static_cast<size_t>(p) * p, 0.0);
        for (size_t i = 0; i < grid.marks.size(); ++i) {
            img[i] = grid.marks[i] == GridMark::correct ? 1.0
                     : grid.marks[i] == GridMark::incorrect ? 0.5
                                                            : 0.0;
        }
        write_file(dir + "/grid_" + std::string(to_string(algo)) + ".svg",
                   svg::heatmap(img, p, p, std::string(to_string(algo)) + " oracle, " +
                                               std::to_string(shots) + "-shot",
                                0.0, 1.0));
    }
    std::cout << "oracle: grids for task (" << task.a << "," << task.b << ") -> " << dir << "\n";
    return violations == 0 ? 0 : 2;
}

int cmd_sweep(const CommonArgs& common) {
    RunConfig cfg = resolve_config(common);
    cfg.validate_sweep();
    const std::string dir = resolve_out_root(common) + "/sweep";
    std::vector<PhaseCell> cells = phase_sweep(cfg.model, cfg.data, cfg.train, cfg.sweep_config(), dir);
    std::ostringstream os;
    phase_cells_to_csv(cells, os);
    write_file(dir + "/phase_diagram.csv", os.str());
    write_file(dir + "/manifest.json", sweep_manifest(cells).dump(2) + "\n");

    const int64_t rows = static_cast<int64_t>(cfg.sweep_alpha.size());
    const int64_t cols = static_cast<int64_t>(cfg.sweep_n_id.size());
    const char* names[4] = {"id_train", "id_test", "ood_train", "ood_test"};
    for (int s = 0; s < 4; ++s) {
        std::vector<double> img(static_cast<size_t>(rows * cols), 0.0);
        for (const PhaseCell& c : cells) {
            int64_t r = 0, col = 0;
            for (int64_t i = 0; i < rows; ++i) {
                if (cfg.sweep_alpha[static_cast<size_t>(i)] == c.alpha) r = i;
            }
            for (int64_t i = 0; i < cols; ++i) {
                if (cfg.sweep_n_id[static_cast<size_t>(i)] == c.n_id) col = i;
            }
            img[static_cast<size_t>(r * cols + col)] = c.accuracy[static_cast<size_t>(s)];
        }
        write_file(dir + "/phase_" + names[s] + ".svg",
                   svg::heatmap(img, rows, cols,
                                std::string("last-shot accuracy, ") + names[s] +
                                    " (rows alpha, cols n_id)",
                                0.0, 1.0));
    }
    int failures = 0;
    for (const PhaseCell& c : cells) {
        std::cout << "cell n_id=" << c.n_id << " alpha=" << c.alpha;
        if (c.ok) {
            std::cout << " phase=" << c.phase << " (" << phase_name(c.phase) << ")"
                      << " ood_test=" << c.accuracy[3] << " seed=" << c.best_seed << "\n";
        } else {
            std::cout << " FAILED: " << c.error << "\n";
            ++failures;
        }
    }
    std::cout << "sweep: " << cells.size() - failures << "/" << cells.size() << " cells -> " << dir
              << "\n";
    return failures == 0 ? 0 : 2;
}

int cmd_interp(const CommonArgs& common, const std::string& checkpoint_path) {
    RunConfig cfg = resolve_config(common);
    cfg.validate_interp();
    Checkpoint ckpt = load_checkpoint_for(cfg, checkpoint_path);
    const std::string dir = resolve_out_root(common) + "/interp";
    PrimeField field(cfg.data.p);
    LogTable logs = cfg.log_table();
    EvalSets sets = make_sets(cfg);
    nlohmann::json summary;
    summary["checkpoint"] = checkpoint_path;

    const TaskVector task = sets.tasks.out_of_distribution.empty()
                                ? sets.tasks.in_distribution.front()
                                : sets.tasks.out_of_distribution.front();
    Rng prefix_rng(cfg.interp_seed);
    std::vector<InputPair> prefix = draw_input_stream(sets.inputs.train, cfg.interp_shots, prefix_rng);
    summary["task"] = {task.a, task.b};
    summary["shots"] = cfg.interp_shots;

    // attention maps and band masses for every layer/head
    auto probe_seq = make_eval_sequences(SequenceSet::ood_test, 1, sets.tasks, sets.inputs,
                                         cfg.data.n_ctx, cfg.interp_seed)[0];
    auto maps = attention_maps(ckpt.params, probe_seq);
    nlohmann::json band = nlohmann::json::array();
    for (size_t layer = 0; layer < maps.size(); ++layer) {
        const int64_t H = maps[layer].dim(0), Tn = maps[layer].dim(1);
        for (int64_t h = 0; h < H; ++h) {
            Tensor<float> one = Tensor<float>({Tn, Tn});
            std::copy(maps[layer].data() + h * Tn * Tn, maps[layer].data() + (h + 1) * Tn * Tn,
                      one.data());
            const double mass = attention_band_mass(one);
            band.push_back({{"layer", layer}, {"head", h}, {"band_mass", mass}});
            std::vector<double> img(one.data(), one.data() + Tn * Tn);
            write_file(dir + "/attention_l" + std::to_string(layer) + "_h" + std::to_string(h) +
                           ".svg",
                       svg::heatmap(img, Tn, Tn,
                                    "attention layer " + std::to_string(layer) + " head " +
                                        std::to_string(h),
                                    0.0, 1.0));
        }
    }
    summary["attention_band_mass"] = band;

    // head feature PCA with discrete-log annotations
    FeatureScan scan = head_feature_scan(ckpt.params, field, logs, cfg.interp_layer, cfg.interp_head,
                                         task, prefix, {TriplePos::x, TriplePos::y});
    write_f32_dump(dir + "/head_features", scan.features,
                   {{"layer", cfg.interp_layer},
                    {"head", cfg.interp_head},
                    {"positions", "x,y"},
                    {"task", {task.a, task.b}}});
    PcaResult head_pca = pca(scan.features, cfg.pca_components);
    {
        std::ostringstream os;
        os << "x,y,log_x,log_y";
        for (int64_t c = 0; c < cfg.pca_components; ++c) os << ",pc" << (c + 1);
        os << "\n";
        std::vector<svg::ScatterPoint> pts;
        for (int64_t r = 0; r < head_pca.projections.dim(0); ++r) {
            os << scan.inputs[static_cast<size_t>(r)][0] << "," << scan.inputs[static_cast<size_t>(r)][1]
               << "," << scan.log_pairs[static_cast<size_t>(r)][0] << ","
               << scan.log_pairs[static_cast<size_t>(r)][1];
            for (int64_t c = 0; c < cfg.pca_components; ++c) {
                os << "," << head_pca.projections.data()[r * cfg.pca_components + c];
            }
            os << "\n";
            if (cfg.pca_components >= 2) {
                pts.push_back({head_pca.projections.data()[r * cfg.pca_components],
                               head_pca.projections.data()[r * cfg.pca_components + 1],
                               "(" + std::to_string(scan.log_pairs[static_cast<size_t>(r)][0]) + "," +
                                   std::to_string(scan.log_pairs[static_cast<size_t>(r)][1]) + ")",
                               "#1f77b4"});
            }
        }
        write_file(dir + "/head_pca.csv", os.str());
        if (!pts.empty()) {
            write_file(dir + "/head_pca.svg",
                       svg::scatter(pts, "head features, top-2 PCs (log-annotated)", "pc1", "pc2"));
        }
    }
    summary["head_pca_variance"] = head_pca.explained_variance_ratio;

    // embedding PCA and the even/odd log separation test
    EmbeddingPca emb = embedding_pca(ckpt.params, logs, std::min<int64_t>(3, cfg.model.d_embed));
    SeparationTest parity = log_parity_separation(emb, cfg.interp_seed);
    {
        std::ostringstream os;
        os << "token,log,pc1,pc2,pc3\n";
        std::vector<svg::ScatterPoint> pts;
        const int64_t k = emb.pca.projections.dim(1);
        for (int64_t n = 0; n < emb.pca.projections.dim(0); ++n) {
            os << n << "," << emb.logs[static_cast<size_t>(n)];
            for (int64_t c = 0; c < 3; ++c) {
                os << "," << (c < k ? emb.pca.projections.data()[n * k + c] : 0.0);
            }
            os << "\n";
            const bool even = emb.logs[static_cast<size_t>(n)] % 2 == 0;
            pts.push_back({emb.pca.projections.data()[n * k], k > 1 ? emb.pca.projections.data()[n * k + 1] : 0.0,
                           std::to_string(emb.logs[static_cast<size_t>(n)]),
                           n == 0 ? "#555555" : (even ? "#1f77b4" : "#d62728")});
        }
        write_file(dir + "/embedding_pca.csv", os.str());
        write_file(dir + "/embedding_pca.svg",
                   svg::scatter(pts, "embedding PCs (blue even log, red odd log)", "pc1", "pc2"));
    }
    summary["embedding_pca_variance"] = emb.pca.explained_variance_ratio;
    summary["log_parity_separation"] = {{"statistic", parity.statistic},
                                        {"p_value", parity.p_value},
                                        {"permutations", parity.permutations}};

    // cosine-similarity structure at the configured layer
    CosineMatrix cosine = cosine_similarity_matrix(ckpt.params, field, cfg.interp_layer,
                                                   TriplePos::y, task, prefix);
    write_f32_dump(dir + "/cosine_y_layer" + std::to_string(cfg.interp_layer), cosine.matrix,
                   {{"layer", cfg.interp_layer}, {"token", "y"}, {"task", {task.a, task.b}}});
    const double ratio_stat = ratio_class_statistic(cosine);
    {
        const int64_t rows = cosine.matrix.dim(0);
        std::vector<double> img(cosine.matrix.data(), cosine.matrix.data() + rows * rows);
        write_file(dir + "/cosine_y_layer" + std::to_string(cfg.interp_layer) + ".svg",
                   svg::heatmap(img, rows, rows,
                                "cosine similarity, layer " + std::to_string(cfg.interp_layer) +
                                    ", y token",
                                -1.0, 1.0));
    }
    summary["cosine_ratio_class_statistic"] = ratio_stat;
    summary["cosine_degenerate_rows"] = cosine.degenerate_rows.size();

    // a few MLP activation grids with spectral stats
    Tensor<float> grids = mlp_activation_grid(ckpt.params, field, cfg.interp_layer, TriplePos::y,
                                              task, prefix);
    const uint32_t p = field.modulus();
    nlohmann::json neurons = nlohmann::json::array();
    for (int64_t u = 0; u < std::min<int64_t>(8, grids.dim(0)); ++u) {
        const float* g = grids.data() + u * p * p;
        const double conc = spectral_concentration(g, p);
        neurons.push_back({{"neuron", u}, {"spectral_concentration", conc}});
        std::vector<double> img(g, g + static_cast<size_t>(p) * p);
        double vmax = 0;
        for (double v : img) vmax = std::max(vmax, v);
        write_file(dir + "/mlp_l" + std::to_string(cfg.interp_layer) + "_n" + std::to_string(u) +
                       ".svg",
                   svg::heatmap(img, p, p, "MLP unit " + std::to_string(u) + " activation",
                                0.0, std::max(vmax, 1e-9)));
    }
    summary["mlp_neurons"] = neurons;

    write_file(dir + "/summary.json", summary.dump(2) + "\n");
    std::cout << "interp: ratio-class stat " << ratio_stat << ", parity separation p="
              << parity.p_value << " -> " << dir << "\n";
    return 0;
}

int cmd_report(const std::string& run_dir) {
    RunRecord record = load_run_record(run_dir);
    const int64_t stop = select_early_stop(record);
    std::cout << "run " << run_dir << ": " << record.probes.size() << " probes, "
              << record.steps_run << " steps\n";
    const ProbeRow& last = record.probes.back();
    const ProbeRow& best = record.probes[static_cast<size_t>(stop)];
    std::cout << "  final:      train_acc=" << last.train_acc_last << " ood_acc=" << last.ood_acc_last
              << " train_loss=" << last.train_loss << "\n";
    std::cout << "  early stop: step " << best.step << " ood_acc=" << best.ood_acc_last << "\n";
    write_metric_curves(record, run_dir + "/curves.svg");
    std::cout << "  curves -> " << run_dir << "/curves.svg\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    tune_allocator_for_training();
    CLI::App app{"in-context learning laboratory for linear modular arithmetic"};
    app.require_subcommand(1);

    CommonArgs gen_args, train_args, eval_args, oracle_args, sweep_args, interp_args;
    std::string train_name = "run";
    std::string eval_ckpt, interp_ckpt, report_dir;
    int oracle_shots = 4;
    int64_t oracle_contexts = 50;

    add_common(app.add_subcommand("gen-data", "write dataset manifests and sample sequences"),
               gen_args);
    CLI::App* train_cmd = app.add_subcommand("train", "pre-train a model");
    add_common(train_cmd, train_args);
    train_cmd->add_option("--name", train_name, "run directory name under the output root");
    CLI::App* eval_cmd = app.add_subcommand("eval", "per-shot metrics of a checkpoint on all four sets");
    add_common(eval_cmd, eval_args);
    eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint to evaluate")->required();
    CLI::App* oracle_cmd = app.add_subcommand("oracle", "oracle soundness scan and reference grids");
    add_common(oracle_cmd, oracle_args);
    oracle_cmd->add_option("--shots", oracle_shots, "max context length for the scan (default 4)");
    oracle_cmd->add_option("--contexts", oracle_contexts, "random contexts per task (default 50)");
    add_common(app.add_subcommand("sweep", "phase-diagram sweep over (n_id, alpha)"), sweep_args);
    CLI::App* interp_cmd = app.add_subcommand("interp", "white-box analyses of a checkpoint");
    add_common(interp_cmd, interp_args);
    interp_cmd->add_option("--checkpoint", interp_ckpt, "checkpoint to analyze")->required();
    CLI::App* report_cmd = app.add_subcommand("report", "summarize a finished run directory");
    report_cmd->add_option("--run", report_dir, "run directory with metrics.csv")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (app.got_subcommand("gen-data")) return cmd_gen_data(gen_args);
        if (app.got_subcommand("train")) return cmd_train(train_args, train_name);
        if (app.got_subcommand("eval")) return cmd_eval(eval_args, eval_ckpt);
        if (app.got_subcommand("oracle")) return cmd_oracle(oracle_args, oracle_shots, oracle_contexts);
        if (app.got_subcommand("sweep")) return cmd_sweep(sweep_args);
        if (app.got_subcommand("interp")) return cmd_interp(interp_args, interp_ckpt);
        if (app.got_subcommand("report")) return cmd_report(report_dir);
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
