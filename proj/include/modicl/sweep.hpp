#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "modicl/eval.hpp"
#include "modicl/trainer.hpp"

namespace modicl {

/// One (n_id, alpha) cell of a phase diagram: the last-shot accuracy
/// quadruple of the best seed's early-stopped checkpoint, plus its phase.
struct PhaseCell {
    int n_id = 0;
    double alpha = 0;
    PhaseQuadruple accuracy{0, 0, 0, 0}; // id_train, id_test, ood_train, ood_test
    int phase = 0;
    bool ok = false;
    std::string error;
    uint64_t best_seed = 0;
    int64_t early_stop_step = 0;
    double early_stop_ood_acc = 0;
    std::string best_run_dir;
};

struct SweepConfig {
    std::vector<int> n_id_values;
    std::vector<double> alpha_values;
    std::vector<uint64_t> seeds = {1, 2, 3};
    int eval_sequences = 128;
    uint64_t eval_seed = 424242;
    double phase_threshold = 0.75;
    bool reuse_finished_runs = true;
};

namespace detail {

inline bool run_is_finished(const std::string& run_dir, const nlohmann::json& wanted_config) {
    namespace fs = std::filesystem;
    if (!fs::exists(run_dir + "/metrics.csv") || !fs::exists(run_dir + "/best_ood.ckpt") ||
        !fs::exists(run_dir + "/config.json")) {
        return false;
    }
    std::ifstream in(run_dir + "/config.json");
    nlohmann::json found;
    try {
        in >> found;
    } catch (...) {
        return false;
    }
    return found == wanted_config;
}

} // namespace detail

/// Trains (or reuses) one run per seed for a cell, early-stops each, keeps the
/// best seed, and evaluates the four-set accuracy quadruple at that
/// checkpoint.
inline PhaseCell run_phase_cell(ModelConfig model_cfg, DataConfig data_cfg, TrainConfig train_cfg,
                                const SweepConfig& sweep_cfg, int n_id, double alpha,
                                const std::string& cell_dir) {
    PhaseCell cell;
    cell.n_id = n_id;
    cell.alpha = alpha;
    data_cfg.n_id = n_id;
    data_cfg.alpha = alpha;
    try {
        double best_acc = -1.0;
        std::string best_dir;
        uint64_t best_seed = 0;
        int64_t best_step = 0;
        for (uint64_t seed : sweep_cfg.seeds) {
            TrainConfig tc = train_cfg;
            tc.seed = seed;
            const std::string run_dir = cell_dir + "/seed" + std::to_string(seed);
            const nlohmann::json snapshot = run_config_snapshot(model_cfg, data_cfg, tc);
            RunRecord record;
            if (sweep_cfg.reuse_finished_runs && detail::run_is_finished(run_dir, snapshot)) {
                record = load_run_record(run_dir);
            } else {
                record = train(model_cfg, data_cfg, tc, run_dir);
            }
            const int64_t stop = select_early_stop(record);
            const double acc = record.probes[static_cast<size_t>(stop)].ood_acc_last;
            if (acc > best_acc) {
                best_acc = acc;
                best_dir = run_dir;
                best_seed = seed;
                best_step = record.probes[static_cast<size_t>(stop)].step;
            }
        }
        cell.best_seed = best_seed;
        cell.best_run_dir = best_dir;
        cell.early_stop_step = best_step;
        cell.early_stop_ood_acc = best_acc;

        Checkpoint best = load_checkpoint(best_dir + "/best_ood.ckpt");
        TaskSplit tasks = sample_tasks_rectangular(data_cfg.n_id, data_cfg.p, data_cfg.task_seed);
        InputSplit inputs = split_inputs(data_cfg.alpha, data_cfg.p, data_cfg.input_seed);
        const std::array<SequenceSet, 4> sets = {SequenceSet::id_train, SequenceSet::id_test,
                                                 SequenceSet::ood_train, SequenceSet::ood_test};
        for (size_t i = 0; i < sets.size(); ++i) {
            auto seqs = make_eval_sequences(sets[i], sweep_cfg.eval_sequences, tasks, inputs,
                                            data_cfg.n_ctx, sweep_cfg.eval_seed + i);
            cell.accuracy[i] = per_shot_metrics(best.params, seqs, to_string(sets[i]))
                                   .last_shot_accuracy();
        }
        cell.phase = classify_phase(cell.accuracy, sweep_cfg.phase_threshold);
        cell.ok = true;
    } catch (const std::exception& e) {
        cell.ok = false;
        cell.error = e.what();
    }
    return cell;
}

/// Full grid sweep. Cell failures are recorded, not fatal.
inline std::vector<PhaseCell> phase_sweep(const ModelConfig& model_cfg, const DataConfig& data_cfg,
                                          const TrainConfig& train_cfg, const SweepConfig& sweep_cfg,
                                          const std::string& out_root) {
    if (sweep_cfg.n_id_values.empty() || sweep_cfg.alpha_values.empty() || sweep_cfg.seeds.empty()) {
        throw std::invalid_argument("phase_sweep: empty grid or seed list");
    }
    std::filesystem::create_directories(out_root);
    std::vector<PhaseCell> cells;
    for (int n_id : sweep_cfg.n_id_values) {
        for (double alpha : sweep_cfg.alpha_values) {
            std::ostringstream dir;
            dir << out_root << "/nid" << n_id << "_alpha" << alpha;
            cells.push_back(run_phase_cell(model_cfg, data_cfg, train_cfg, sweep_cfg, n_id, alpha,
                                           dir.str()));
        }
    }
    return cells;
}

inline void phase_cells_to_csv(const std::vector<PhaseCell>& cells, std::ostream& os) {
    os << "n_id,alpha,acc_id_train,acc_id_test,acc_ood_train,acc_ood_test,phase,ok\n";
    for (const PhaseCell& c : cells) {
        os << c.n_id << "," << c.alpha << "," << c.accuracy[0] << "," << c.accuracy[1] << ","
           << c.accuracy[2] << "," << c.accuracy[3] << "," << c.phase << "," << (c.ok ? 1 : 0)
           << "\n";
    }
}

inline nlohmann::json sweep_manifest(const std::vector<PhaseCell>& cells) {
    nlohmann::json j = nlohmann::json::array();
    for (const PhaseCell& c : cells) {
        j.push_back({{"n_id", c.n_id},
                     {"alpha", c.alpha},
                     {"ok", c.ok},
                     {"error", c.error},
                     {"phase", c.phase},
                     {"phase_name", phase_name(c.phase)},
                     {"accuracy",
                      {{"id_train", c.accuracy[0]},
                       {"id_test", c.accuracy[1]},
                       {"ood_train", c.accuracy[2]},
                       {"ood_test", c.accuracy[3]}}},
                     {"best_seed", c.best_seed},
                     {"early_stop_step", c.early_stop_step},
                     {"early_stop_ood_acc", c.early_stop_ood_acc},
                     {"best_run_dir", c.best_run_dir}});
    }
    return j;
}

} // namespace modicl
