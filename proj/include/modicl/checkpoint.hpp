#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "modicl/model.hpp"

namespace modicl {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; big-endian hosts are unsupported");

inline nlohmann::json model_config_to_json(const ModelConfig& cfg) {
    return nlohmann::json{{"depth", cfg.depth},
                          {"heads", cfg.heads},
                          {"d_embed", cfg.d_embed},
                          {"vocab", cfg.vocab},
                          {"n_ctx", cfg.n_ctx},
                          {"mlp_widening", cfg.mlp_widening},
                          {"rope_theta", cfg.rope_theta},
                          {"ln_eps", cfg.ln_eps}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    cfg.depth = j.at("depth").get<int>();
    cfg.heads = j.at("heads").get<int>();
    cfg.d_embed = j.at("d_embed").get<int>();
    cfg.vocab = j.at("vocab").get<int>();
    cfg.n_ctx = j.at("n_ctx").get<int>();
    cfg.mlp_widening = j.at("mlp_widening").get<int>();
    cfg.rope_theta = j.at("rope_theta").get<double>();
    cfg.ln_eps = j.at("ln_eps").get<double>();
    return cfg;
}

/// Portable checkpoint: a JSON header (config, seed, step, tensor manifest)
/// followed by the named tensors as raw little-endian f32 blocks in manifest
/// order. Float payloads round-trip bit-exactly.
inline void save_checkpoint(const std::string& path, ParameterSet<float>& params, uint64_t seed,
                            int64_t step) {
    nlohmann::json header;
    header["format"] = "modicl-checkpoint";
    header["version"] = 1;
    header["config"] = model_config_to_json(params.config);
    header["seed"] = seed;
    header["step"] = step;
    nlohmann::json manifest = nlohmann::json::array();
    auto named = params.named();
    for (auto& p : named) {
        manifest.push_back({{"name", p.name}, {"shape", p.tensor->shape()}});
    }
    header["tensors"] = manifest;
    const std::string header_str = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    const uint64_t header_len = header_str.size();
    out.write("MICL", 4);
    out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (auto& p : named) {
        out.write(reinterpret_cast<const char*>(p.tensor->data()),
                  static_cast<std::streamsize>(p.tensor->numel() * sizeof(float)));
    }
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

struct Checkpoint {
    ParameterSet<float> params;
    uint64_t seed = 0;
    int64_t step = 0;
};

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "MICL") {
        throw std::runtime_error("load_checkpoint: " + path + " is not a checkpoint file");
    }
    uint64_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    std::string header_str(header_len, '\0');
    in.read(header_str.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw std::runtime_error("load_checkpoint: truncated header in " + path);
    const nlohmann::json header = nlohmann::json::parse(header_str);

    Checkpoint ckpt;
    ckpt.params.config = model_config_from_json(header.at("config"));
    ckpt.params.config.validate();
    ckpt.params.blocks.resize(static_cast<size_t>(ckpt.params.config.depth));
    ckpt.seed = header.at("seed").get<uint64_t>();
    ckpt.step = header.at("step").get<int64_t>();

    auto named = ckpt.params.named();
    const auto& manifest = header.at("tensors");
    if (manifest.size() != named.size()) {
        throw std::runtime_error("load_checkpoint: tensor manifest does not match this config");
    }
    for (size_t i = 0; i < named.size(); ++i) {
        const auto& entry = manifest.at(i);
        if (entry.at("name").get<std::string>() != named[i].name) {
            throw std::runtime_error("load_checkpoint: unexpected tensor '" +
                                     entry.at("name").get<std::string>() + "', wanted '" +
                                     named[i].name + "'");
        }
        Shape shape = entry.at("shape").get<Shape>();
        Tensor<float> t(shape);
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(float)));
        if (!in) throw std::runtime_error("load_checkpoint: truncated tensor data in " + path);
        *named[i].tensor = t;
    }
    return ckpt;
}

} // namespace modicl
