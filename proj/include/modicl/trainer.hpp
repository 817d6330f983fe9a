#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "modicl/checkpoint.hpp"
#include "modicl/dataset.hpp"
#include "modicl/eval.hpp"
#include "modicl/model.hpp"

namespace modicl {

/// Dataset shape for one pre-training run.
struct DataConfig {
    uint32_t p = 29;
    int n_id = 512;
    double alpha = 0.6;
    int n_ctx = 32;
    uint64_t task_seed = 1;
    uint64_t input_seed = 2;

    void validate() const {
        PrimeField field(p);
        const int64_t total = static_cast<int64_t>(p) * p;
        if (n_id < 4 || n_id % 4 != 0) {
            throw std::invalid_argument("data.n_id=" + std::to_string(n_id) +
                                        " must be a positive multiple of 4");
        }
        if (n_id > total) {
            throw std::invalid_argument("data.n_id=" + std::to_string(n_id) + " exceeds p^2=" +
                                        std::to_string(total));
        }
        if (!(alpha > 0.0) || alpha > 1.0) {
            throw std::invalid_argument("data.alpha must lie in (0, 1]");
        }
        if (n_ctx < 1) throw std::invalid_argument("data.n_ctx must be >= 1");
        const int64_t n_train = std::llround(alpha * static_cast<double>(total));
        if (n_ctx > n_train) {
            throw std::invalid_argument("data.n_ctx=" + std::to_string(n_ctx) +
                                        " exceeds the train input set of " + std::to_string(n_train));
        }
    }
};

struct TrainConfig {
    double lr = 1.5e-4;
    double weight_decay = 2.0;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-8;
    int64_t steps = 200000;
    int batch_size = 1024;
    double warmup_fraction = 0.05;
    double warmup_start_factor = 0.01; // warmup begins at 0.01 * lr
    double final_lr_factor = 0.1;      // cosine anneals to 0.1 * lr
    int64_t probe_interval = 1000;
    int probe_sequences = 16;
    uint64_t seed = 0;
    uint64_t probe_seed = 90210; // fixed so probe curves are comparable across runs
    double stop_at_train_acc = 0.0; // optional early exit on probe train accuracy; 0 disables

    void validate() const {
        if (!(lr > 0.0)) throw std::invalid_argument("train.lr must be positive");
        if (weight_decay < 0.0) throw std::invalid_argument("train.weight_decay must be >= 0");
        if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
            throw std::invalid_argument("train.betas must lie in (0, 1)");
        }
        if (!(eps > 0.0)) throw std::invalid_argument("train.eps must be positive");
        if (steps < 1) throw std::invalid_argument("train.steps must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("train.batch_size must be >= 1");
        if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) {
            throw std::invalid_argument("train.warmup_fraction must lie in [0, 1)");
        }
        if (probe_interval < 1) throw std::invalid_argument("train.probe_interval must be >= 1");
        if (probe_sequences < 1) throw std::invalid_argument("train.probe_sequences must be >= 1");
    }
};

/// Linear warmup from warmup_start_factor * lr to lr over the first
/// warmup_fraction of steps, then cosine decay down to final_lr_factor * lr
/// at the last step. Continuous at the junction (both sides equal lr).
inline double lr_at(int64_t step, const TrainConfig& c) {
    if (step < 0 || step > c.steps) {
        throw std::invalid_argument("lr_at: step " + std::to_string(step) + " outside [0, " +
                                    std::to_string(c.steps) + "]");
    }
    const int64_t warmup_steps = std::llround(c.warmup_fraction * static_cast<double>(c.steps));
    if (step < warmup_steps) {
        const double u = static_cast<double>(step) / static_cast<double>(warmup_steps);
        return c.lr * (c.warmup_start_factor + (1.0 - c.warmup_start_factor) * u);
    }
    if (c.steps == warmup_steps) return c.lr;
    constexpr double pi = 3.14159265358979323846;
    const double u = static_cast<double>(step - warmup_steps) /
                     static_cast<double>(c.steps - warmup_steps);
    return c.lr * (c.final_lr_factor + (1.0 - c.final_lr_factor) * 0.5 * (1.0 + std::cos(pi * u)));
}

/// AdamW with decoupled weight decay; LayerNorm gains are exempt from decay.
template <typename T>
class AdamW {
public:
    AdamW(ParameterSet<T>& params, const TrainConfig& cfg) : cfg_(cfg) {
        for (auto& p : params.named()) {
            m_.push_back(Tensor<T>(p.tensor->shape()));
            v_.push_back(Tensor<T>(p.tensor->shape()));
            exempt_.push_back(p.decay_exempt);
        }
    }

    int64_t step_count() const noexcept { return t_; }

    void step(ParameterSet<T>& params, double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        auto named = params.named();
        if (named.size() != m_.size()) {
            throw std::invalid_argument("AdamW::step: parameter set changed shape");
        }
        for (size_t i = 0; i < named.size(); ++i) {
            Tensor<T>& theta = *named[i].tensor;
            const T* g = theta.grad();
            if (g == nullptr) continue;
            T* w = theta.data();
            T* m = m_[i].data();
            T* v = v_[i].data();
            const double decay = exempt_[i] ? 0.0 : cfg_.weight_decay;
            const int64_t n = theta.numel();
            for (int64_t j = 0; j < n; ++j) {
                const double gj = static_cast<double>(g[j]);
                const double mj = cfg_.beta1 * static_cast<double>(m[j]) + (1.0 - cfg_.beta1) * gj;
                const double vj = cfg_.beta2 * static_cast<double>(v[j]) + (1.0 - cfg_.beta2) * gj * gj;
                m[j] = static_cast<T>(mj);
                v[j] = static_cast<T>(vj);
                const double m_hat = mj / bc1;
                const double v_hat = vj / bc2;
                const double update = m_hat / (std::sqrt(v_hat) + cfg_.eps) +
                                      decay * static_cast<double>(w[j]);
                w[j] = static_cast<T>(static_cast<double>(w[j]) - lr * update);
            }
        }
    }

private:
    TrainConfig cfg_;
    std::vector<Tensor<T>> m_, v_;
    std::vector<bool> exempt_;
    int64_t t_ = 0;
};

struct ProbeRow {
    int64_t step = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double train_acc_last = 0.0;
    double train_acc_mean = 0.0;
    double ood_loss = 0.0;     // last-shot loss on the o.o.d. probe set
    double ood_acc_last = 0.0;
    double ood_acc_mean = 0.0;
};

struct RunRecord {
    std::vector<ProbeRow> probes;
    std::string run_dir;
    std::string best_checkpoint_path;
    std::string final_checkpoint_path;
    int64_t steps_run = 0;
};

/// Probe index with the best o.o.d. last-shot accuracy; ties go to the
/// earliest step.
inline int64_t select_early_stop(const RunRecord& record) {
    if (record.probes.empty()) throw std::invalid_argument("select_early_stop: no probes recorded");
    int64_t best = 0;
    for (int64_t i = 1; i < static_cast<int64_t>(record.probes.size()); ++i) {
        if (record.probes[static_cast<size_t>(i)].ood_acc_last >
            record.probes[static_cast<size_t>(best)].ood_acc_last) {
            best = i;
        }
    }
    return best;
}

inline nlohmann::json data_config_to_json(const DataConfig& c) {
    return nlohmann::json{{"p", c.p},           {"n_id", c.n_id},
                          {"alpha", c.alpha},   {"n_ctx", c.n_ctx},
                          {"task_seed", c.task_seed}, {"input_seed", c.input_seed}};
}

inline DataConfig data_config_from_json(const nlohmann::json& j) {
    DataConfig c;
    c.p = j.at("p").get<uint32_t>();
    c.n_id = j.at("n_id").get<int>();
    c.alpha = j.at("alpha").get<double>();
    c.n_ctx = j.at("n_ctx").get<int>();
    c.task_seed = j.at("task_seed").get<uint64_t>();
    c.input_seed = j.at("input_seed").get<uint64_t>();
    return c;
}

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
    return nlohmann::json{{"lr", c.lr},
                          {"weight_decay", c.weight_decay},
                          {"beta1", c.beta1},
                          {"beta2", c.beta2},
                          {"eps", c.eps},
                          {"steps", c.steps},
                          {"batch_size", c.batch_size},
                          {"warmup_fraction", c.warmup_fraction},
                          {"warmup_start_factor", c.warmup_start_factor},
                          {"final_lr_factor", c.final_lr_factor},
                          {"probe_interval", c.probe_interval},
                          {"probe_sequences", c.probe_sequences},
                          {"seed", c.seed},
                          {"probe_seed", c.probe_seed},
                          {"stop_at_train_acc", c.stop_at_train_acc}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.lr = j.at("lr").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.eps = j.at("eps").get<double>();
    c.steps = j.at("steps").get<int64_t>();
    c.batch_size = j.at("batch_size").get<int>();
    c.warmup_fraction = j.at("warmup_fraction").get<double>();
    c.warmup_start_factor = j.at("warmup_start_factor").get<double>();
    c.final_lr_factor = j.at("final_lr_factor").get<double>();
    c.probe_interval = j.at("probe_interval").get<int64_t>();
    c.probe_sequences = j.at("probe_sequences").get<int>();
    c.seed = j.at("seed").get<uint64_t>();
    c.probe_seed = j.at("probe_seed").get<uint64_t>();
    c.stop_at_train_acc = j.at("stop_at_train_acc").get<double>();
    return c;
}

inline nlohmann::json run_config_snapshot(const ModelConfig& mc, const DataConfig& dc,
                                          const TrainConfig& tc) {
    return nlohmann::json{{"model", model_config_to_json(mc)},
                          {"data", data_config_to_json(dc)},
                          {"train", train_config_to_json(tc)}};
}

namespace detail {

inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

inline void write_metrics_csv(const std::string& path, const std::vector<ProbeRow>& probes) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_metrics_csv: cannot open " + path);
    out << "step,lr,train_loss,train_acc_last_shot,ood_loss,ood_acc_last_shot,"
           "train_acc_mean_shot,ood_acc_mean_shot\n";
    for (const ProbeRow& r : probes) {
        out << r.step << "," << fmt_double(r.lr) << "," << fmt_double(r.train_loss) << ","
            << fmt_double(r.train_acc_last) << "," << fmt_double(r.ood_loss) << ","
            << fmt_double(r.ood_acc_last) << "," << fmt_double(r.train_acc_mean) << ","
            << fmt_double(r.ood_acc_mean) << "\n";
    }
}

} // namespace detail

/// AdamW pre-training with balanced shared-input batches, periodic o.o.d.
/// probes, and best/final checkpointing. The run directory ends up with
/// config.json, metrics.csv, best_ood.ckpt and final.ckpt. `on_probe` fires
/// after each recorded probe (progress reporting).
inline RunRecord train(const ModelConfig& model_cfg, const DataConfig& data_cfg,
                       const TrainConfig& train_cfg, const std::string& run_dir,
                       const std::function<void(const ProbeRow&)>& on_probe = {}) {
    tune_allocator_for_training();
    model_cfg.validate();
    data_cfg.validate();
    train_cfg.validate();
    if (model_cfg.vocab != static_cast<int>(data_cfg.p)) {
        throw std::invalid_argument("train: model.vocab must equal data.p");
    }
    if (model_cfg.n_ctx != data_cfg.n_ctx) {
        throw std::invalid_argument("train: model.n_ctx must equal data.n_ctx");
    }
    if (train_cfg.batch_size % data_cfg.n_id != 0) {
        throw std::invalid_argument("train: batch_size=" + std::to_string(train_cfg.batch_size) +
                                    " must be divisible by n_id=" + std::to_string(data_cfg.n_id));
    }

    std::filesystem::create_directories(run_dir);
    {
        std::ofstream cfg_out(run_dir + "/config.json");
        cfg_out << run_config_snapshot(model_cfg, data_cfg, train_cfg).dump(2) << "\n";
    }

    PrimeField field(data_cfg.p);
    TaskSplit tasks = sample_tasks_rectangular(data_cfg.n_id, data_cfg.p, data_cfg.task_seed);
    InputSplit inputs = split_inputs(data_cfg.alpha, data_cfg.p, data_cfg.input_seed);

    const bool have_ood = !tasks.out_of_distribution.empty() && !inputs.test.empty();
    std::vector<TokenSequence> probe_ood;
    if (have_ood) {
        probe_ood = make_eval_sequences(SequenceSet::ood_test, train_cfg.probe_sequences, tasks,
                                        inputs, data_cfg.n_ctx, train_cfg.probe_seed);
    }

    Rng base(train_cfg.seed);
    ParameterSet<float> params = init_params<float>(model_cfg, base.fork(1).next_u64());
    params.set_requires_grad(true);
    AdamW<float> optimizer(params, train_cfg);
    Rng data_rng = base.fork(2);

    RunRecord record;
    record.run_dir = run_dir;
    record.best_checkpoint_path = run_dir + "/best_ood.ckpt";
    record.final_checkpoint_path = run_dir + "/final.ckpt";

    ParameterSet<float> best_params = params.clone();
    int64_t best_step = 0;
    double best_ood_acc = -1.0;

    for (int64_t step = 0; step < train_cfg.steps; ++step) {
        const double lr = lr_at(step, train_cfg);
        Batch batch = sample_training_batch(field, tasks, inputs, train_cfg.batch_size,
                                            data_cfg.n_ctx, data_rng);
        params.zero_grad();
        Tape<float> tape;
        SequenceLossResult<float> result = sequence_loss(tape, params, batch.sequences);
        const double loss = static_cast<double>(result.loss.item());
        if (!std::isfinite(loss)) {
            throw std::runtime_error("train: non-finite loss " + std::to_string(loss) + " at step " +
                                     std::to_string(step) + " (lr=" + std::to_string(lr) + ")");
        }
        tape.backward(result.loss);
        optimizer.step(params, lr);

        const int64_t done = step + 1;
        const bool probe_now = done % train_cfg.probe_interval == 0 || done == train_cfg.steps;
        if (!probe_now) continue;

        ProbeRow row;
        row.step = done;
        row.lr = lr;
        row.train_loss = loss;
        row.train_acc_last = result.last_shot_accuracy;
        row.train_acc_mean = result.mean_shot_accuracy;
        if (have_ood) {
            ShotMetrics ood = per_shot_metrics(params, probe_ood, "ood_test");
            row.ood_loss = ood.last_shot_loss();
            row.ood_acc_last = ood.last_shot_accuracy();
            row.ood_acc_mean = ood.mean_shot_accuracy();
        } else {
            row.ood_loss = row.ood_acc_last = row.ood_acc_mean =
                std::numeric_limits<double>::quiet_NaN();
        }
        record.probes.push_back(row);
        record.steps_run = done;
        if (on_probe) on_probe(row);
        // flushed at every probe so an interrupted run still leaves a curve
        detail::write_metrics_csv(run_dir + "/metrics.csv", record.probes);

        if (have_ood && row.ood_acc_last > best_ood_acc) {
            best_ood_acc = row.ood_acc_last;
            best_step = done;
            best_params = params.clone();
        }
        if (train_cfg.stop_at_train_acc > 0.0 && row.train_acc_last >= train_cfg.stop_at_train_acc) {
            break;
        }
    }

    if (!have_ood || best_ood_acc < 0.0) {
        best_params = params.clone();
        best_step = record.steps_run;
    }
    save_checkpoint(record.best_checkpoint_path, best_params, train_cfg.seed, best_step);
    save_checkpoint(record.final_checkpoint_path, params, train_cfg.seed, record.steps_run);
    detail::write_metrics_csv(run_dir + "/metrics.csv", record.probes);
    return record;
}

/// Rehydrates the RunRecord of a finished run directory from metrics.csv.
inline RunRecord load_run_record(const std::string& run_dir) {
    std::ifstream in(run_dir + "/metrics.csv");
    if (!in) throw std::runtime_error("load_run_record: no metrics.csv under " + run_dir);
    RunRecord record;
    record.run_dir = run_dir;
    record.best_checkpoint_path = run_dir + "/best_ood.ckpt";
    record.final_checkpoint_path = run_dir + "/final.ckpt";
    std::string line;
    std::getline(in, line); // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ProbeRow row;
        std::stringstream ss(line);
        std::string cell;
        auto next = [&]() {
            if (!std::getline(ss, cell, ',')) {
                throw std::runtime_error("load_run_record: malformed metrics row: " + line);
            }
            return cell;
        };
        row.step = std::stoll(next());
        row.lr = std::stod(next());
        row.train_loss = std::stod(next());
        row.train_acc_last = std::stod(next());
        row.ood_loss = std::stod(next());
        row.ood_acc_last = std::stod(next());
        row.train_acc_mean = std::stod(next());
        row.ood_acc_mean = std::stod(next());
        record.probes.push_back(row);
    }
    if (!record.probes.empty()) record.steps_run = record.probes.back().step;
    return record;
}

} // namespace modicl
