#pragma once

#include <array>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "modicl/gfp.hpp"
#include "modicl/rng.hpp"

namespace modicl {

/// Hidden coefficients (a, b) of one task z = a*x + b*y mod p.
struct TaskVector {
    uint32_t a = 0;
    uint32_t b = 0;

    friend bool operator==(const TaskVector& l, const TaskVector& r) {
        return l.a == r.a && l.b == r.b;
    }
};

struct InputPair {
    uint32_t x = 0;
    uint32_t y = 0;

    friend bool operator==(const InputPair& l, const InputPair& r) {
        return l.x == r.x && l.y == r.y;
    }
};

/// Partition of the p^2 task grid into pre-training tasks and held-out tasks.
/// `rectangles` records the groups accepted during sampling so the rectangle
/// structure can be audited afterwards.
struct TaskSplit {
    uint32_t p = 0;
    std::vector<TaskVector> in_distribution;
    std::vector<TaskVector> out_of_distribution;
    std::vector<std::array<TaskVector, 4>> rectangles;
};

/// Partition of the p^2 input pairs into train and test sides.
struct InputSplit {
    uint32_t p = 0;
    double alpha = 0.0;
    std::vector<InputPair> train;
    std::vector<InputPair> test;
};

/// Flattened (x, y, z) triples for one task; the training/eval unit.
/// target_positions holds the index of every z token.
struct TokenSequence {
    std::vector<int32_t> tokens;
    TaskVector task;
    std::vector<int32_t> target_positions;

    int n_ctx() const noexcept { return static_cast<int>(tokens.size() / 3); }
};

struct Batch {
    std::vector<TokenSequence> sequences;
    std::vector<TaskVector> tasks_represented;
    int streams = 0;
};

enum class SequenceSet { id_train, id_test, ood_train, ood_test };

inline const char* to_string(SequenceSet s) {
    switch (s) {
        case SequenceSet::id_train: return "id_train";
        case SequenceSet::id_test: return "id_test";
        case SequenceSet::ood_train: return "ood_train";
        case SequenceSet::ood_test: return "ood_test";
    }
    return "?";
}

/// Samples pre-training tasks in closed rectangles: two distinct a-values and
/// two distinct b-values contribute all four corner tasks at once. Rectangles
/// whose new corners would push the set past n_id are redrawn, so the final
/// set holds exactly n_id tasks built from whole rectangles.
inline TaskSplit sample_tasks_rectangular(int n_id, uint32_t p, uint64_t seed) {
    PrimeField field(p);
    const int64_t total = static_cast<int64_t>(p) * p;
    if (n_id < 4 || n_id % 4 != 0) {
        throw std::invalid_argument("sample_tasks_rectangular: n_id=" + std::to_string(n_id) +
                                    " must be a positive multiple of 4");
    }
    if (n_id > total) {
        throw std::invalid_argument("sample_tasks_rectangular: n_id=" + std::to_string(n_id) +
                                    " exceeds p^2=" + std::to_string(total));
    }
    if (p < 2) throw std::invalid_argument("sample_tasks_rectangular: p too small");

    Rng rng(seed);
    std::vector<uint8_t> member(static_cast<size_t>(total), 0);
    TaskSplit split;
    split.p = p;
    split.in_distribution.reserve(static_cast<size_t>(n_id));

    int count = 0;
    int64_t attempts = 0;
    const int64_t max_attempts = 1000000 + 1000ll * n_id;
    while (count < n_id) {
        if (++attempts > max_attempts) {
            throw std::runtime_error("sample_tasks_rectangular: rectangle sampling did not close "
                                     "the set after " + std::to_string(max_attempts) + " draws");
        }
        uint32_t a1 = rng.below_u32(p);
        uint32_t a2 = rng.below_u32(p);
        while (a2 == a1) a2 = rng.below_u32(p);
        uint32_t b1 = rng.below_u32(p);
        uint32_t b2 = rng.below_u32(p);
        while (b2 == b1) b2 = rng.below_u32(p);

        const std::array<TaskVector, 4> corners{
            TaskVector{a1, b1}, TaskVector{a1, b2}, TaskVector{a2, b1}, TaskVector{a2, b2}};
        int fresh = 0;
        for (const TaskVector& t : corners) {
            if (!member[t.a * p + t.b]) ++fresh;
        }
        if (fresh == 0 || count + fresh > n_id) continue;
        for (const TaskVector& t : corners) {
            if (!member[t.a * p + t.b]) {
                member[t.a * p + t.b] = 1;
                split.in_distribution.push_back(t);
                ++count;
            }
        }
        split.rectangles.push_back(corners);
    }

    split.out_of_distribution.reserve(static_cast<size_t>(total - n_id));
    for (uint32_t a = 0; a < p; ++a) {
        for (uint32_t b = 0; b < p; ++b) {
            if (!member[a * p + b]) split.out_of_distribution.push_back({a, b});
        }
    }
    return split;
}

/// Uniform random train/test split of the p^2 input pairs with
/// |train| = round(alpha * p^2).
inline InputSplit split_inputs(double alpha, uint32_t p, uint64_t seed) {
    PrimeField field(p);
    if (!(alpha > 0.0) || alpha > 1.0) {
        throw std::invalid_argument("split_inputs: alpha=" + std::to_string(alpha) +
                                    " outside (0, 1]");
    }
    const int64_t total = static_cast<int64_t>(p) * p;
    const int64_t n_train = std::llround(alpha * static_cast<double>(total));

    std::vector<uint32_t> order(static_cast<size_t>(total));
    for (int64_t i = 0; i < total; ++i) order[static_cast<size_t>(i)] = static_cast<uint32_t>(i);
    Rng rng(seed);
    rng.shuffle(order);

    std::vector<uint8_t> is_train(static_cast<size_t>(total), 0);
    for (int64_t i = 0; i < n_train; ++i) is_train[order[static_cast<size_t>(i)]] = 1;

    InputSplit split;
    split.p = p;
    split.alpha = alpha;
    split.train.reserve(static_cast<size_t>(n_train));
    split.test.reserve(static_cast<size_t>(total - n_train));
    for (uint32_t x = 0; x < p; ++x) {
        for (uint32_t y = 0; y < p; ++y) {
            (is_train[x * p + y] ? split.train : split.test).push_back({x, y});
        }
    }
    return split;
}

/// Interleaves the inputs with labels computed by field arithmetic.
inline TokenSequence build_sequence(const PrimeField& field, const TaskVector& task,
                                    const std::vector<InputPair>& inputs) {
    const uint32_t p = field.modulus();
    if (task.a >= p || task.b >= p) {
        throw std::invalid_argument("build_sequence: task outside [0,p)^2");
    }
    TokenSequence seq;
    seq.task = task;
    seq.tokens.reserve(inputs.size() * 3);
    seq.target_positions.reserve(inputs.size());
    for (const InputPair& in : inputs) {
        if (in.x >= p || in.y >= p) {
            throw std::invalid_argument("build_sequence: input (" + std::to_string(in.x) + "," +
                                        std::to_string(in.y) + ") outside [0,p)^2");
        }
        seq.tokens.push_back(static_cast<int32_t>(in.x));
        seq.tokens.push_back(static_cast<int32_t>(in.y));
        seq.tokens.push_back(static_cast<int32_t>(field.linear_eval(task.a, task.b, in.x, in.y)));
        seq.target_positions.push_back(static_cast<int32_t>(seq.tokens.size()) - 1);
    }
    return seq;
}

/// One sequence per (stream, task) pair, grouped by stream then task, so every
/// task appears batch_size/|tasks| times and tasks within a stream share the
/// exact input positions.
inline Batch build_balanced_batch(const PrimeField& field, const std::vector<TaskVector>& tasks,
                                  const std::vector<std::vector<InputPair>>& input_streams,
                                  int batch_size) {
    if (tasks.empty()) throw std::invalid_argument("build_balanced_batch: no tasks");
    if (batch_size % static_cast<int>(tasks.size()) != 0) {
        throw std::invalid_argument("build_balanced_batch: batch_size=" + std::to_string(batch_size) +
                                    " not divisible by " + std::to_string(tasks.size()) + " tasks");
    }
    const int streams = batch_size / static_cast<int>(tasks.size());
    if (static_cast<int>(input_streams.size()) != streams) {
        throw std::invalid_argument("build_balanced_batch: expected " + std::to_string(streams) +
                                    " input streams, got " + std::to_string(input_streams.size()));
    }
    Batch batch;
    batch.tasks_represented = tasks;
    batch.streams = streams;
    batch.sequences.reserve(static_cast<size_t>(batch_size));
    for (int s = 0; s < streams; ++s) {
        for (const TaskVector& t : tasks) {
            batch.sequences.push_back(build_sequence(field, t, input_streams[s]));
        }
    }
    return batch;
}

/// n_ctx distinct input pairs drawn from `pool` (without replacement).
inline std::vector<InputPair> draw_input_stream(const std::vector<InputPair>& pool, int n_ctx,
                                                Rng& rng) {
    if (n_ctx > static_cast<int>(pool.size())) {
        throw std::invalid_argument("draw_input_stream: n_ctx=" + std::to_string(n_ctx) +
                                    " exceeds input-set size " + std::to_string(pool.size()));
    }
    std::vector<uint32_t> idx = rng.sample_distinct(static_cast<uint32_t>(pool.size()),
                                                    static_cast<uint32_t>(n_ctx));
    std::vector<InputPair> stream(static_cast<size_t>(n_ctx));
    for (int i = 0; i < n_ctx; ++i) stream[static_cast<size_t>(i)] = pool[idx[static_cast<size_t>(i)]];
    return stream;
}

/// One pre-training batch: fresh input streams, all in-distribution tasks.
inline Batch sample_training_batch(const PrimeField& field, const TaskSplit& tasks,
                                   const InputSplit& inputs, int batch_size, int n_ctx, Rng& rng) {
    const int n_tasks = static_cast<int>(tasks.in_distribution.size());
    if (n_tasks == 0) throw std::invalid_argument("sample_training_batch: empty task set");
    if (batch_size % n_tasks != 0) {
        throw std::invalid_argument("sample_training_batch: batch_size=" + std::to_string(batch_size) +
                                    " not divisible by n_id=" + std::to_string(n_tasks));
    }
    const int streams = batch_size / n_tasks;
    std::vector<std::vector<InputPair>> input_streams;
    input_streams.reserve(static_cast<size_t>(streams));
    for (int s = 0; s < streams; ++s) input_streams.push_back(draw_input_stream(inputs.train, n_ctx, rng));
    return build_balanced_batch(field, tasks.in_distribution, input_streams, batch_size);
}

/// Evaluation sequences for one of the four sets. Tasks come from the
/// designated task side and every input in a sequence comes from the
/// designated input side (drawn without replacement within a sequence).
inline std::vector<TokenSequence> make_eval_sequences(SequenceSet which, int count,
                                                      const TaskSplit& tasks,
                                                      const InputSplit& inputs, int n_ctx,
                                                      uint64_t seed) {
    if (tasks.p != inputs.p) {
        throw std::invalid_argument("make_eval_sequences: task/input splits disagree on p");
    }
    PrimeField field(tasks.p);
    const bool id_side = which == SequenceSet::id_train || which == SequenceSet::id_test;
    const bool train_side = which == SequenceSet::id_train || which == SequenceSet::ood_train;
    const std::vector<TaskVector>& task_pool = id_side ? tasks.in_distribution : tasks.out_of_distribution;
    const std::vector<InputPair>& input_pool = train_side ? inputs.train : inputs.test;
    if (task_pool.empty()) {
        throw std::invalid_argument(std::string("make_eval_sequences: task set for ") +
                                    to_string(which) + " is empty");
    }
    if (input_pool.empty()) {
        throw std::invalid_argument(std::string("make_eval_sequences: input set for ") +
                                    to_string(which) + " is empty");
    }
    if (n_ctx > static_cast<int>(input_pool.size())) {
        throw std::invalid_argument("make_eval_sequences: n_ctx=" + std::to_string(n_ctx) +
                                    " exceeds designated input-set size " +
                                    std::to_string(input_pool.size()));
    }
    Rng rng(seed);
    std::vector<TokenSequence> out;
    out.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        const TaskVector task = task_pool[rng.below(task_pool.size())];
        out.push_back(build_sequence(field, task, draw_input_stream(input_pool, n_ctx, rng)));
    }
    return out;
}

inline void sequences_to_csv(const std::vector<TokenSequence>& seqs, std::ostream& os) {
    os << "task_a,task_b,tokens\n";
    for (const TokenSequence& s : seqs) {
        os << s.task.a << "," << s.task.b << ",";
        for (size_t i = 0; i < s.tokens.size(); ++i) {
            if (i) os << " ";
            os << s.tokens[i];
        }
        os << "\n";
    }
}

inline nlohmann::json task_split_to_json(const TaskSplit& split) {
    nlohmann::json j;
    j["p"] = split.p;
    j["n_id"] = split.in_distribution.size();
    auto pack = [](const std::vector<TaskVector>& v) {
        nlohmann::json arr = nlohmann::json::array();
        for (const TaskVector& t : v) arr.push_back({t.a, t.b});
        return arr;
    };
    j["in_distribution"] = pack(split.in_distribution);
    j["out_of_distribution"] = pack(split.out_of_distribution);
    return j;
}

inline TaskSplit task_split_from_json(const nlohmann::json& j) {
    TaskSplit split;
    split.p = j.at("p").get<uint32_t>();
    for (const auto& t : j.at("in_distribution")) {
        split.in_distribution.push_back({t.at(0).get<uint32_t>(), t.at(1).get<uint32_t>()});
    }
    for (const auto& t : j.at("out_of_distribution")) {
        split.out_of_distribution.push_back({t.at(0).get<uint32_t>(), t.at(1).get<uint32_t>()});
    }
    return split;
}

inline nlohmann::json input_split_to_json(const InputSplit& split) {
    nlohmann::json j;
    j["p"] = split.p;
    j["alpha"] = split.alpha;
    auto pack = [](const std::vector<InputPair>& v) {
        nlohmann::json arr = nlohmann::json::array();
        for (const InputPair& q : v) arr.push_back({q.x, q.y});
        return arr;
    };
    j["train"] = pack(split.train);
    j["test"] = pack(split.test);
    return j;
}

inline InputSplit input_split_from_json(const nlohmann::json& j) {
    InputSplit split;
    split.p = j.at("p").get<uint32_t>();
    split.alpha = j.at("alpha").get<double>();
    for (const auto& q : j.at("train")) {
        split.train.push_back({q.at(0).get<uint32_t>(), q.at(1).get<uint32_t>()});
    }
    for (const auto& q : j.at("test")) {
        split.test.push_back({q.at(0).get<uint32_t>(), q.at(1).get<uint32_t>()});
    }
    return split;
}

} // namespace modicl
