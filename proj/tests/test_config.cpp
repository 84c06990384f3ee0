#include <catch2/catch_amalgamated.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "alt/config.hpp"

using alt::Config;
using alt::ConfigError;

TEST_CASE("defaults validate") {
    Config c;
    REQUIRE_NOTHROW(c.validate());
    REQUIRE(c.feat_dim == 64);
    REQUIRE(c.window_len == 8);
    REQUIRE(c.window_overlap == 4);
    REQUIRE(c.learning_rate == 5e-4);
}

TEST_CASE("set parses typed values") {
    Config c;
    c.set("feat_dim", "32");
    c.set("learning_rate", "0.001");
    c.set("decoder_enabled", "false");
    c.set("frame_intervals", "1,2");
    c.set("synth_motions", "cv,bounce");
    REQUIRE(c.feat_dim == 32);
    REQUIRE(c.learning_rate == 0.001);
    REQUIRE_FALSE(c.decoder_enabled);
    REQUIRE(c.frame_intervals == std::vector<int>{1, 2});
    REQUIRE(c.synth_motions == std::vector<std::string>{"cv", "bounce"});
}

TEST_CASE("unknown key and malformed values rejected") {
    Config c;
    REQUIRE_THROWS_AS(c.set("no_such_key", "1"), ConfigError);
    REQUIRE_THROWS_AS(c.set("feat_dim", "abc"), ConfigError);
    REQUIRE_THROWS_AS(c.set("learning_rate", "fast"), ConfigError);
    REQUIRE_THROWS_AS(c.set("decoder_enabled", "maybe"), ConfigError);
}

TEST_CASE("validate rejects inconsistent settings") {
    Config c;
    c.token_dim = 32;  // must equal feat_dim
    REQUIRE_THROWS_AS(c.validate(), ConfigError);

    Config c2;
    c2.heads = 5;  // must divide feat_dim
    REQUIRE_THROWS_AS(c2.validate(), ConfigError);

    Config c3;
    c3.window_overlap = 8;  // must be < window_len
    REQUIRE_THROWS_AS(c3.validate(), ConfigError);

    Config c4;
    c4.integration = "sum";
    REQUIRE_THROWS_AS(c4.validate(), ConfigError);

    Config c5;
    c5.num_learnable_tokens = 40;  // exceeds text_max_len with mapped tokens
    REQUIRE_THROWS_AS(c5.validate(), ConfigError);
}

TEST_CASE("to_text round-trips through load_file") {
    Config c;
    c.set("feat_dim", "16");
    c.set("seed", "99");
    c.set("integration", "map_only");
    c.set("frame_intervals", "2,3");
    std::string path = (std::filesystem::temp_directory_path() / "alt_cfg_rt.cfg").string();
    {
        std::ofstream out(path);
        out << c.to_text();
    }
    Config d;
    d.load_file(path);
    REQUIRE(d.to_text() == c.to_text());
    REQUIRE(d.feat_dim == 16);
    REQUIRE(d.seed == 99);
    REQUIRE(d.integration == "map_only");
    REQUIRE(d.frame_intervals == std::vector<int>{2, 3});
    std::remove(path.c_str());
}

TEST_CASE("load_file ignores comments, rejects junk lines") {
    std::string path = (std::filesystem::temp_directory_path() / "alt_cfg_c.cfg").string();
    {
        std::ofstream out(path);
        out << "# a comment\n  feat_dim = 32  # trailing\n\nheads=4\n";
    }
    Config c;
    c.load_file(path);
    REQUIRE(c.feat_dim == 32);
    {
        std::ofstream out(path);
        out << "feat_dim 32\n";
    }
    Config d;
    REQUIRE_THROWS_AS(d.load_file(path), ConfigError);
    std::remove(path.c_str());
}
