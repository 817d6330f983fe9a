#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "modicl/gfp.hpp"
#include "modicl/model.hpp"
#include "modicl/sweep.hpp"
#include "modicl/trainer.hpp"

namespace modicl {

/// Everything one invocation needs, as a single JSON document with dotted-path
/// overrides. Defaults reproduce the reference setup (p = 29, d_embed = 512,
/// B = 1024, 200k steps).
struct RunConfig {
    uint32_t log_base = 0; // 0 = default rule: 27 when p == 29, else smallest primitive root
    ModelConfig model;
    DataConfig data;
    TrainConfig train;

    int eval_sequences = 128;
    uint64_t eval_seed = 424242;
    double phase_threshold = 0.75;

    std::vector<int> sweep_n_id = {4, 16, 64, 256};
    std::vector<double> sweep_alpha = {0.3, 0.6, 0.9};
    std::vector<uint64_t> sweep_seeds = {1, 2, 3};

    int interp_layer = 0;
    int interp_head = 0;
    int interp_shots = 4;
    int64_t pca_components = 2;
    uint64_t interp_seed = 77;

    uint32_t resolved_log_base() const { return log_base != 0 ? log_base : (data.p == 29 ? 27u : 0u); }

    LogTable log_table() const {
        const uint32_t base = resolved_log_base();
        return base != 0 ? LogTable(data.p, base) : LogTable::with_default_base(data.p);
    }

    void validate() const {
        model.validate();
        data.validate();
        train.validate();
        if (model.vocab != static_cast<int>(data.p)) {
            throw std::invalid_argument("model.vocab must equal field.p (got " +
                                        std::to_string(model.vocab) + " vs " +
                                        std::to_string(data.p) + ")");
        }
        if (model.n_ctx != data.n_ctx) {
            throw std::invalid_argument("model.n_ctx must equal data.n_ctx");
        }
        if (train.batch_size % data.n_id != 0) {
            throw std::invalid_argument("train.batch_size=" + std::to_string(train.batch_size) +
                                        " must be divisible by data.n_id=" +
                                        std::to_string(data.n_id));
        }
        if (log_base != 0 && !is_primitive_root(PrimeField(data.p), log_base)) {
            throw std::invalid_argument("field.log_base=" + std::to_string(log_base) +
                                        " is not a primitive root of p=" + std::to_string(data.p));
        }
        if (eval_sequences < 1) throw std::invalid_argument("eval.sequences must be >= 1");
        if (phase_threshold <= 0.0 || phase_threshold > 1.0) {
            throw std::invalid_argument("eval.threshold must lie in (0, 1]");
        }
    }

    void validate_interp() const {
        if (interp_layer < 0 || interp_layer >= model.depth) {
            throw std::invalid_argument("interp.layer outside model depth");
        }
        if (interp_head < 0 || interp_head >= model.heads) {
            throw std::invalid_argument("interp.head outside model heads");
        }
        if (interp_shots < 1 || interp_shots >= data.n_ctx) {
            throw std::invalid_argument("interp.shots must lie in [1, n_ctx)");
        }
        if (pca_components < 1) throw std::invalid_argument("interp.pca_components must be >= 1");
    }

    /// Extra checks for the sweep grid; separate so that single-run commands
    /// are not blocked by an unused sweep section.
    void validate_sweep() const {
        if (sweep_n_id.empty() || sweep_alpha.empty() || sweep_seeds.empty()) {
            throw std::invalid_argument("sweep.n_id, sweep.alpha and sweep.seeds must be non-empty");
        }
        for (int n_id : sweep_n_id) {
            if (n_id < 4 || n_id % 4 != 0 ||
                n_id > static_cast<int64_t>(data.p) * data.p) {
                throw std::invalid_argument("sweep.n_id entry " + std::to_string(n_id) +
                                            " must be a multiple of 4 within [4, p^2]");
            }
            if (train.batch_size % n_id != 0) {
                throw std::invalid_argument("train.batch_size=" + std::to_string(train.batch_size) +
                                            " must be divisible by every sweep.n_id (violates " +
                                            std::to_string(n_id) + ")");
            }
        }
        for (double a : sweep_alpha) {
            if (!(a > 0.0) || a > 1.0) {
                throw std::invalid_argument("sweep.alpha entries must lie in (0, 1]");
            }
        }
    }

    SweepConfig sweep_config() const {
        SweepConfig sc;
        sc.n_id_values = sweep_n_id;
        sc.alpha_values = sweep_alpha;
        sc.seeds = sweep_seeds;
        sc.eval_sequences = eval_sequences;
        sc.eval_seed = eval_seed;
        sc.phase_threshold = phase_threshold;
        return sc;
    }
};

inline nlohmann::json run_config_to_json(const RunConfig& c) {
    return nlohmann::json{
        {"field", {{"p", c.data.p}, {"log_base", c.log_base}}},
        {"model", model_config_to_json(c.model)},
        {"data", data_config_to_json(c.data)},
        {"train", train_config_to_json(c.train)},
        {"eval",
         {{"sequences", c.eval_sequences}, {"seed", c.eval_seed}, {"threshold", c.phase_threshold}}},
        {"sweep", {{"n_id", c.sweep_n_id}, {"alpha", c.sweep_alpha}, {"seeds", c.sweep_seeds}}},
        {"interp",
         {{"layer", c.interp_layer},
          {"head", c.interp_head},
          {"shots", c.interp_shots},
          {"pca_components", c.pca_components},
          {"seed", c.interp_seed}}}};
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig c;
    // every field is optional; absent fields keep their defaults
    nlohmann::json merged = run_config_to_json(c);
    merged.merge_patch(j);
    c.log_base = merged.at("field").at("log_base").get<uint32_t>();
    c.model = model_config_from_json(merged.at("model"));
    c.data = data_config_from_json(merged.at("data"));
    c.data.p = merged.at("field").at("p").get<uint32_t>();
    // the field prime and context length are single-sourced from field/data
    c.model.vocab = static_cast<int>(c.data.p);
    c.model.n_ctx = c.data.n_ctx;
    c.train = train_config_from_json(merged.at("train"));
    c.eval_sequences = merged.at("eval").at("sequences").get<int>();
    c.eval_seed = merged.at("eval").at("seed").get<uint64_t>();
    c.phase_threshold = merged.at("eval").at("threshold").get<double>();
    c.sweep_n_id = merged.at("sweep").at("n_id").get<std::vector<int>>();
    c.sweep_alpha = merged.at("sweep").at("alpha").get<std::vector<double>>();
    c.sweep_seeds = merged.at("sweep").at("seeds").get<std::vector<uint64_t>>();
    c.interp_layer = merged.at("interp").at("layer").get<int>();
    c.interp_head = merged.at("interp").at("head").get<int>();
    c.interp_shots = merged.at("interp").at("shots").get<int>();
    c.pca_components = merged.at("interp").at("pca_components").get<int64_t>();
    c.interp_seed = merged.at("interp").at("seed").get<uint64_t>();
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::invalid_argument("config: " + path + " is not valid JSON: " + e.what());
    }
    return run_config_from_json(j);
}

/// Applies one "dotted.path=value" override onto a config JSON document.
inline void apply_override(nlohmann::json& doc, const std::string& assignment) {
    const size_t eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw std::invalid_argument("override '" + assignment + "' must look like path.to.key=value");
    }
    const std::string path = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);
    nlohmann::json* node = &doc;
    std::stringstream ss(path);
    std::string key;
    std::vector<std::string> keys;
    while (std::getline(ss, key, '.')) keys.push_back(key);
    if (keys.empty()) throw std::invalid_argument("override '" + assignment + "' has an empty path");
    for (size_t i = 0; i + 1 < keys.size(); ++i) node = &(*node)[keys[i]];
    nlohmann::json parsed;
    try {
        parsed = nlohmann::json::parse(value);
    } catch (...) {
        parsed = value; // plain strings need no quotes
    }
    (*node)[keys.back()] = parsed;
}

} // namespace modicl
