#include "calens/config.hpp"
#include "calens/errors.hpp"
#include "test_util.hpp"

#include "doctest.h"

using namespace calens;

TEST_CASE("empty config gives every default") {
    for (const char* text : {"", "  \n", "{}"}) {
        const RunConfig c = parse_config(text);
        CHECK(c.hyper.a_bar == 0.5);
        CHECK(c.hyper.alpha_a == 10.0);
        CHECK(c.hyper.beta_a == 1.0);
        CHECK(c.hyper.K_max == 30);
        CHECK(c.hyper.J_max == 20);
        CHECK(!c.hyper.theta.has_value());
        CHECK(c.run.iters == 30000);
        CHECK(c.run.burnin == 25000);
        CHECK(c.sweep.empty());
        CHECK(expand_sweep(c).size() == 1);
    }
}

TEST_CASE("invalid values name the key") {
    try {
        (void)parse_config(R"({"alpha_gamma": -1})");
        FAIL("negative gamma prior accepted");
    } catch (const ArgumentError& e) {
        CHECK(std::string(e.what()).find("alpha_gamma") != std::string::npos);
    }
    CHECK_THROWS_AS((void)parse_config(R"({"beta_gamma": -2})"), ArgumentError);
    CHECK_THROWS_AS((void)parse_config(R"({"a_bar": -0.1})"), ArgumentError);
    CHECK_THROWS_AS((void)parse_config(R"({"K_max": 1.5})"), ArgumentError);
    CHECK_THROWS_AS((void)parse_config(R"({"alpha_a": "ten"})"), ArgumentError);
    CHECK_THROWS_AS((void)parse_config(R"({"run": {"burnin": 10, "iters": 5}})"), ArgumentError);
    CHECK_THROWS_AS((void)parse_config("{not json"), ParseError);
    CHECK_THROWS_AS((void)parse_config("[1, 2]"), ArgumentError);
}

TEST_CASE("unknown keys are rejected") {
    try {
        (void)parse_config(R"({"alpha_gama": 2})");
        FAIL("typo accepted");
    } catch (const ArgumentError& e) {
        CHECK(std::string(e.what()).find("alpha_gama") != std::string::npos);
    }
    CHECK_THROWS_AS((void)parse_config(R"({"run": {"iterations": 5}})"), ArgumentError);
    CHECK_THROWS_AS((void)parse_config(R"({"sweep": [{"bogus": 1}]})"), ArgumentError);
}

TEST_CASE("sensitivity sweep expands to one config per entry") {
    const RunConfig c = parse_config(R"({
        "a_bar": 0,
        "run": {"iters": 15000, "burnin": 10000, "thin": 1},
        "sweep": [{"alpha_a": 3, "beta_a": 0.1}, {"alpha_a": 4, "beta_a": 1}, {"alpha_a": 10, "beta_a": 1}]
    })");
    const auto runs = expand_sweep(c);
    REQUIRE(runs.size() == 3);
    CHECK(runs[0].hyper.alpha_a == 3.0);
    CHECK(runs[0].hyper.beta_a == 0.1);
    CHECK(runs[2].hyper.alpha_a == 10.0);
    for (const auto& r : runs) {
        CHECK(r.hyper.a_bar == 0.0);
        CHECK(r.run.iters == 15000);
        CHECK(r.run.burnin == 10000);
    }
    CHECK(config_hash(runs[0].hyper) != config_hash(runs[1].hyper));
}

TEST_CASE("defaults round trip through JSON and the hash is stable") {
    RunConfig c;
    c.hyper.theta = 0.25;
    c.run.thin = 3;
    const RunConfig back = parse_config(to_json(c).dump());
    CHECK(back.hyper.theta == 0.25);
    CHECK(back.run.thin == 3);
    CHECK(config_hash(back.hyper) == config_hash(c.hyper));
    CHECK(to_json(parse_config("").hyper)["theta"] == "auto");
    // FNV-1a 64 reference values.
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("config files load from disk") {
    testing::TempDir tmp;
    testing::write_file(tmp / "c.json", R"({"alpha_a": 4, "beta_a": 1})");
    CHECK(load_config(tmp / "c.json").hyper.alpha_a == 4.0);
    testing::write_file(tmp / "empty.json", "");
    CHECK(load_config(tmp / "empty.json").hyper.a_bar == 0.5);
    CHECK_THROWS_AS((void)load_config(tmp / "missing.json"), ArgumentError);
}
