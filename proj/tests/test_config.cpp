#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>

#include "modicl/config.hpp"

using namespace modicl;

namespace {

bool throws_mentioning(const std::function<void()>& fn, const std::string& needle) {
    try {
        fn();
    } catch (const std::invalid_argument& e) {
        return std::string(e.what()).find(needle) != std::string::npos;
    }
    return false;
}

} // namespace

TEST_CASE("defaults reproduce the reference setup and validate") {
    RunConfig cfg;
    CHECK(cfg.data.p == 29);
    CHECK(cfg.model.d_embed == 512);
    CHECK(cfg.model.heads == 4);
    CHECK(cfg.data.n_ctx == 32);
    CHECK(cfg.train.lr == doctest::Approx(1.5e-4));
    CHECK(cfg.train.weight_decay == doctest::Approx(2.0));
    CHECK(cfg.train.beta1 == doctest::Approx(0.9));
    CHECK(cfg.train.beta2 == doctest::Approx(0.98));
    CHECK(cfg.train.steps == 200000);
    CHECK(cfg.train.batch_size == 1024);
    CHECK(cfg.train.probe_interval == 1000);
    CHECK(cfg.train.probe_sequences == 16);
    CHECK(cfg.phase_threshold == doctest::Approx(0.75));
    CHECK(cfg.resolved_log_base() == 27);
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("json round trip and merge-patch semantics") {
    RunConfig cfg;
    cfg.data.p = 11;
    cfg.model.vocab = 11;
    cfg.data.n_id = 16;
    cfg.train.lr = 3e-4;
    nlohmann::json j = run_config_to_json(cfg);
    RunConfig back = run_config_from_json(j);
    CHECK(back.data.p == 11);
    CHECK(back.data.n_id == 16);
    CHECK(back.train.lr == doctest::Approx(3e-4));
    CHECK(back.model.vocab == 11); // single-sourced from field.p

    // partial documents keep defaults elsewhere
    RunConfig partial = run_config_from_json(nlohmann::json::parse(R"({"field":{"p":7}})"));
    CHECK(partial.data.p == 7);
    CHECK(partial.model.vocab == 7);
    CHECK(partial.model.d_embed == 512);
}

TEST_CASE("dotted-path overrides") {
    nlohmann::json doc = nlohmann::json::object();
    apply_override(doc, "train.lr=0.001");
    apply_override(doc, "field.p=11");
    apply_override(doc, "data.n_ctx=8");
    apply_override(doc, "sweep.n_id=[4,8]");
    RunConfig cfg = run_config_from_json(doc);
    CHECK(cfg.train.lr == doctest::Approx(0.001));
    CHECK(cfg.data.p == 11);
    CHECK(cfg.model.n_ctx == 8); // follows data.n_ctx
    CHECK(cfg.sweep_n_id == std::vector<int>{4, 8});

    CHECK_THROWS_AS(apply_override(doc, "no-equals-sign"), std::invalid_argument);
}

TEST_CASE("validation names the offending field") {
    CHECK(throws_mentioning(
        [] {
            RunConfig cfg;
            cfg.data.p = 12; // not prime
            cfg.model.vocab = 12;
            cfg.validate();
        },
        "not prime"));
    CHECK(throws_mentioning(
        [] {
            RunConfig cfg;
            cfg.data.n_id = 7;
            cfg.validate();
        },
        "n_id"));
    CHECK(throws_mentioning(
        [] {
            RunConfig cfg;
            cfg.data.alpha = 0.0;
            cfg.validate();
        },
        "alpha"));
    CHECK(throws_mentioning(
        [] {
            RunConfig cfg;
            cfg.train.batch_size = 1000; // not divisible by 512
            cfg.validate();
        },
        "batch_size"));
    CHECK(throws_mentioning(
        [] {
            RunConfig cfg;
            cfg.model.d_embed = 510; // not divisible by 4 heads... 510/4
            cfg.validate();
        },
        "d_embed"));
    CHECK(throws_mentioning(
        [] {
            RunConfig cfg;
            cfg.log_base = 28; // not a primitive root of 29
            cfg.validate();
        },
        "log_base"));
    CHECK(throws_mentioning(
        [] {
            RunConfig cfg;
            cfg.data.n_ctx = 600; // exceeds round(0.6 * 841)
            cfg.model.n_ctx = 600;
            cfg.validate();
        },
        "n_ctx"));
    CHECK(throws_mentioning(
        [] {
            RunConfig cfg;
            cfg.sweep_n_id = {3};
            cfg.validate_sweep();
        },
        "sweep.n_id"));
    CHECK(throws_mentioning(
        [] {
            RunConfig cfg;
            cfg.interp_layer = 9;
            cfg.validate_interp();
        },
        "interp.layer"));
}

TEST_CASE("log table accessor follows the base rule") {
    RunConfig cfg;
    CHECK(cfg.log_table().base() == 27);
    cfg.data.p = 11;
    cfg.model.vocab = 11;
    CHECK(cfg.log_table().base() == smallest_primitive_root(11));
    cfg.log_base = 7; // 7 is a primitive root of 11
    CHECK(cfg.log_table().base() == 7);
}
