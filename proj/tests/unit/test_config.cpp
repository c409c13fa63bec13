#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>

#include "splat4d/config.hpp"

using namespace splat4d;

TEST_CASE("defaults survive an empty config and carry the mask thresholds")
{
    const SessionConfig c = parse_config("");
    CHECK(c.mapping.delta_u == 3.5);
    CHECK(c.mapping.delta_ru == 0.2);
    CHECK(c.mapping.lambda_dssim == 0.2);
    CHECK(c.mapping.enable_ir);
    CHECK(c.mapping.enable_aow);
    CHECK(c.mapping.enable_rum);
    CHECK(c.mapping.exposure.max_samples == 16);
    CHECK(c.tracking.max_iterations == 50);
    CHECK(c.session.keyframe_stride == 2);
}

TEST_CASE("values parse into every field kind")
{
    const char* text = R"(
# tuned run
[mapping]
lr_center = 5e-4
lambda_dssim = 0.35     ; trailing comment
enable_ir = false
mask_prompts = 12
max_gaussians = 5000
background = 0.1 0.2 0.3

[exposure]
max_samples = 8

[tracking]
damping = 1e-3

[session]
keyframe_stride = 5
seed_opacity = 0.45
)";
    const SessionConfig c = parse_config(text);
    CHECK(c.mapping.lr_center == 5e-4);
    CHECK(c.mapping.lambda_dssim == 0.35);
    CHECK_FALSE(c.mapping.enable_ir);
    CHECK(c.mapping.mask_prompts == 12);
    CHECK(c.mapping.max_gaussians == 5000);
    CHECK(c.mapping.background == Vec3(0.1, 0.2, 0.3));
    CHECK(c.mapping.exposure.max_samples == 8);
    CHECK(c.tracking.damping == 1e-3);
    CHECK(c.session.keyframe_stride == 5);
    CHECK(c.session.seed_opacity == 0.45);
    // untouched keys keep defaults
    CHECK(c.mapping.delta_u == 3.5);

    // last assignment wins
    const SessionConfig twice =
        parse_config("[mapping]\ndelta_u = 1.0\ndelta_u = 2.0\n");
    CHECK(twice.mapping.delta_u == 2.0);
}

TEST_CASE("unknown or malformed input is rejected")
{
    CHECK_THROWS_AS(parse_config("[mapping]\nlearning_rate = 0.1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[misc]\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("delta_u = 3.5\n"), ConfigError);  // no section
    CHECK_THROWS_AS(parse_config("[mapping]\ndelta_u\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[mapping]\ndelta_u = soup\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[mapping]\nmask_prompts = 2.5\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[mapping]\nenable_ir = maybe\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[mapping]\nbackground = 1 2\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[mapping\ndelta_u = 1\n"), ConfigError);
    // tracking keys do not leak into other sections
    CHECK_THROWS_AS(parse_config("[mapping]\ndamping = 1e-3\n"), ConfigError);
}

TEST_CASE("serialized text round-trips exactly")
{
    SessionConfig c;
    c.mapping.lr_center = 7.25e-4;
    c.mapping.enable_rum = false;
    c.mapping.background = Vec3(0.25, 0.5, 0.125);
    c.tracking.pose_tolerance = 3e-7;
    c.session.dynamic_iterations = 123;

    const SessionConfig back = parse_config(config_to_text(c));
    CHECK(back.mapping.lr_center == c.mapping.lr_center);
    CHECK(back.mapping.enable_rum == c.mapping.enable_rum);
    CHECK(back.mapping.background == c.mapping.background);
    CHECK(back.tracking.pose_tolerance == c.tracking.pose_tolerance);
    CHECK(back.session.dynamic_iterations == c.session.dynamic_iterations);
    CHECK(config_to_text(back) == config_to_text(c));
}

TEST_CASE("files load and missing paths are reported")
{
    const std::string path = "test_config_tmp.ini";
    {
        std::ofstream out(path);
        out << "[session]\nscaffold_nodes = 48\n";
    }
    const SessionConfig c = load_config(path);
    CHECK(c.session.scaffold_nodes == 48);
    std::remove(path.c_str());

    CHECK_THROWS_AS(load_config("does_not_exist.ini"), ConfigError);
}
