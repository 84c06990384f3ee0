#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <vector>

#include "alt/probe.hpp"

using namespace alt;

namespace {

Config micro_config() {
    Config c;
    c.feat_dim = 8;
    c.token_dim = 8;
    c.heads = 4;
    c.num_learnable_tokens = 2;
    c.num_mapped_tokens = 2;
    c.mapping_hidden = 16;
    c.self_layers = 1;
    c.cross_layers = 1;
    c.text_layers = 1;
    c.text_max_len = 8;
    c.input_h = 32;
    c.input_w = 32;
    c.seed = 19;
    return c;
}

Tensor<double> rand_grid(int gh, int gw, int d, uint64_t seed) {
    Rng rng(seed);
    Tensor<double> g({gh, gw, d});
    for (auto& v : g.data) v = rng.normal();
    return g;
}

Tensor<double> rand_frame(int h, int w, uint64_t seed) {
    Rng rng(seed);
    Tensor<double> f({h, w, 3});
    for (auto& v : f.data) v = rng.uniform(0.0, 1.0);
    return f;
}

// Exhaustive argmax oracle with the documented rules: bilinear query sample,
// cosine against every cell, zero norms excluded, lowest row-major index wins
// ties. Written independently of the library's loop structure.
std::array<double, 2> oracle_match(const Tensor<double>& src, const Tensor<double>& tgt,
                                   double px, double py, double stride) {
    int gh = tgt.dim(0), gw = tgt.dim(1), d = tgt.dim(2);
    std::vector<double> q = alt::detail::bilinear_feat(src, pix_to_feat(px, stride),
                                                       pix_to_feat(py, stride));
    double qn = 0;
    for (double v : q) qn += v * v;
    qn = std::sqrt(qn);
    double best = -1e300;
    int best_idx = 0;
    for (int idx = 0; idx < gh * gw; ++idx) {
        int cy = idx / gw, cx = idx % gw;
        double dot = 0, tn = 0;
        for (int c = 0; c < d; ++c) {
            dot += q[static_cast<size_t>(c)] * tgt.at(cy, cx, c);
            tn += tgt.at(cy, cx, c) * tgt.at(cy, cx, c);
        }
        tn = std::sqrt(tn);
        if (qn == 0 || tn == 0) continue;
        double sim = dot / (qn * tn);
        if (sim > best) {
            best = sim;
            best_idx = idx;
        }
    }
    return {feat_to_pix(best_idx % gw, stride), feat_to_pix(best_idx / gw, stride)};
}

}  // namespace

TEST_CASE("pixel and feature coordinates are inverse maps") {
    for (double stride : {2.0, 4.0, 8.0})
        for (double p : {0.0, 1.5, 9.5, 30.0}) {
            CHECK(feat_to_pix(pix_to_feat(p, stride), stride) == Catch::Approx(p).margin(1e-12));
            CHECK(pix_to_feat(feat_to_pix(p, stride), stride) == Catch::Approx(p).margin(1e-12));
        }
    // cell c's center sits at pixel (c + 0.5) * stride - 0.5
    CHECK(feat_to_pix(0, 4) == 1.5);
    CHECK(feat_to_pix(2, 4) == 9.5);
}

TEST_CASE("identical grids self-match at cell centers") {
    Tensor<double> g = rand_grid(6, 7, 8, 40);
    std::vector<std::array<double, 2>> pts;
    for (int cy : {0, 2, 5})
        for (int cx : {1, 3, 6}) pts.push_back({feat_to_pix(cx, 4), feat_to_pix(cy, 4)});
    auto out = nearest_correspondence(g, g, pts, 4);
    REQUIRE(out.size() == pts.size());
    for (size_t i = 0; i < pts.size(); ++i) {
        CHECK(out[i][0] == Catch::Approx(pts[i][0]).margin(1e-12));
        CHECK(out[i][1] == Catch::Approx(pts[i][1]).margin(1e-12));
    }
}

TEST_CASE("translated grid shifts correspondences by the translation") {
    Tensor<double> src = rand_grid(6, 8, 8, 41);
    // target cell (y, x) holds source cell (y, x-1): content moved one cell right
    Tensor<double> tgt({6, 8, 8});
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 8; ++x)
            for (int c = 0; c < 8; ++c)
                tgt.at(y, x, c) = src.at(y, x == 0 ? 0 : x - 1, c);
    std::vector<std::array<double, 2>> pts;
    for (int cy : {1, 3, 4})
        for (int cx : {1, 2, 5}) pts.push_back({feat_to_pix(cx, 4), feat_to_pix(cy, 4)});
    auto out = nearest_correspondence(src, tgt, pts, 4);
    for (size_t i = 0; i < pts.size(); ++i) {
        CHECK(out[i][0] == Catch::Approx(pts[i][0] + 4.0).margin(1e-12));
        CHECK(out[i][1] == Catch::Approx(pts[i][1]).margin(1e-12));
    }
}

TEST_CASE("matches agree with the exhaustive oracle on random grids") {
    Rng rng(42);
    for (int rep = 0; rep < 8; ++rep) {
        int gh = 3 + static_cast<int>(rng.index(5));
        int gw = 3 + static_cast<int>(rng.index(5));
        int d = 2 + static_cast<int>(rng.index(6));
        Tensor<double> src = rand_grid(gh, gw, d, 100 + rep);
        Tensor<double> tgt = rand_grid(gh, gw, d, 200 + rep);
        std::vector<std::array<double, 2>> pts;
        for (int k = 0; k < 6; ++k)
            pts.push_back({rng.uniform(0.0, gw * 4.0 - 1.0), rng.uniform(0.0, gh * 4.0 - 1.0)});
        auto out = nearest_correspondence(src, tgt, pts, 4);
        for (size_t i = 0; i < pts.size(); ++i) {
            auto exp = oracle_match(src, tgt, pts[i][0], pts[i][1], 4);
            CHECK(out[i][0] == exp[0]);
            CHECK(out[i][1] == exp[1]);
        }
    }
}

TEST_CASE("constant grid resolves ties to the first cell") {
    Tensor<double> g({4, 5, 3});
    for (auto& v : g.data) v = 0.7;
    auto out = nearest_correspondence(g, g, {{9.5, 9.5}}, 4);
    CHECK(out[0][0] == feat_to_pix(0, 4));
    CHECK(out[0][1] == feat_to_pix(0, 4));
}

TEST_CASE("duplicate best cells resolve to the lowest row-major index") {
    Tensor<double> src = rand_grid(5, 5, 4, 43);
    Tensor<double> tgt({5, 5, 4});
    for (auto& v : tgt.data) v = 0.0;
    // plant the query vector at cells (3, 4) and (1, 2); row-major favors (1, 2)
    for (int c = 0; c < 4; ++c) {
        double qv = src.at(2, 2, c);
        tgt.at(3, 4, c) = qv;
        tgt.at(1, 2, c) = qv;
        tgt.at(0, 0, c) = -qv;  // anti-aligned, not a tie candidate
    }
    auto out = nearest_correspondence(src, tgt, {{feat_to_pix(2, 4), feat_to_pix(2, 4)}}, 4);
    CHECK(out[0][0] == feat_to_pix(2, 4));
    CHECK(out[0][1] == feat_to_pix(1, 4));
}

TEST_CASE("zero-norm cells are excluded from matching") {
    Tensor<double> src = rand_grid(4, 4, 3, 44);
    Tensor<double> tgt({4, 4, 3});
    for (auto& v : tgt.data) v = 0.0;
    for (int c = 0; c < 3; ++c) tgt.at(2, 3, c) = src.at(1, 1, c);
    // every other target cell is zero-norm; only (2, 3) is a legal match
    auto out = nearest_correspondence(src, tgt, {{feat_to_pix(1, 4), feat_to_pix(1, 4)}}, 4);
    CHECK(out[0][0] == feat_to_pix(3, 4));
    CHECK(out[0][1] == feat_to_pix(2, 4));

    SECTION("zero-norm query matches nothing and falls back to cell zero") {
        Tensor<double> zsrc({4, 4, 3});
        for (auto& v : zsrc.data) v = 0.0;
        auto o = nearest_correspondence(zsrc, tgt, {{feat_to_pix(1, 4), feat_to_pix(1, 4)}}, 4);
        CHECK(o[0][0] == feat_to_pix(0, 4));
        CHECK(o[0][1] == feat_to_pix(0, 4));
    }
}

TEST_CASE("pck counts errors at or below alpha times the longest bbox side") {
    std::vector<std::array<double, 2>> gt = {{10, 10}, {50, 20}};
    SECTION("perfect prediction") {
        CHECK(pck_bbox(gt, gt, 100, 50, 0.1).value() == 1.0);
    }
    SECTION("nine pixels inside a 100x50 box at alpha 0.1 counts") {
        std::vector<std::array<double, 2>> pred = {{19, 10}, {50, 20}};
        CHECK(pck_bbox(pred, gt, 100, 50, 0.1).value() == 1.0);
    }
    SECTION("threshold is inclusive, beyond it misses") {
        std::vector<std::array<double, 2>> pred = {{20, 10}, {50, 31}};
        // errors 10 (== 0.1 * 100, counts) and 11 (misses)
        CHECK(pck_bbox(pred, gt, 100, 50, 0.1).value() == 0.5);
    }
    SECTION("normalizer is max of width and height") {
        std::vector<std::array<double, 2>> pred = {{10, 19}, {50, 20}};
        // error 9 against bbox 50x100: threshold still 10
        CHECK(pck_bbox(pred, gt, 50, 100, 0.1).value() == 1.0);
    }
    SECTION("empty point list is absent") {
        CHECK(!pck_bbox({}, {}, 100, 50, 0.1).has_value());
    }
    SECTION("degenerate bbox and mismatched lists are rejected") {
        CHECK_THROWS_AS(pck_bbox(gt, gt, 0, 50, 0.1), InputError);
        CHECK_THROWS_AS(pck_bbox(gt, {{1, 2}}, 100, 50, 0.1), InputError);
    }
}

TEST_CASE("pck on a mixed ten-point case matches hand enumeration") {
    Rng rng(45);
    std::vector<std::array<double, 2>> gt, pred;
    double thr = 0.1 * 120.0;
    int expect_hits = 0;
    for (int i = 0; i < 10; ++i) {
        double gx = rng.uniform(0.0, 100.0), gy = rng.uniform(0.0, 60.0);
        double err = rng.uniform(0.0, 24.0);
        double ang = rng.uniform(0.0, 6.28318);
        gt.push_back({gx, gy});
        pred.push_back({gx + err * std::cos(ang), gy + err * std::sin(ang)});
        double dx = pred.back()[0] - gx, dy = pred.back()[1] - gy;
        if (std::sqrt(dx * dx + dy * dy) <= thr) ++expect_hits;
    }
    REQUIRE(expect_hits > 0);
    REQUIRE(expect_hits < 10);
    CHECK(pck_bbox(pred, gt, 120, 80, 0.1).value() ==
          static_cast<double>(expect_hits) / 10.0);
}

TEST_CASE("probe harness reports both conditioning modes") {
    Config cfg = micro_config();
    cfg.validate();
    Model<double> m(cfg);
    Tensor<double> src = rand_frame(32, 32, 50);
    Tensor<double> tgt = rand_frame(32, 32, 51);
    Tensor<double> unrelated = rand_frame(32, 32, 52);
    std::vector<std::array<double, 2>> pts = {{5.5, 9.5}, {13.5, 17.5}, {21.5, 25.5}};

    ProbeReport rep = run_probe(m, src, tgt, unrelated, pts, pts);
    REQUIRE(rep.pred_matched.size() == pts.size());
    REQUIRE(rep.pred_mismatched.size() == pts.size());
    REQUIRE(rep.pck_matched.has_value());
    REQUIRE(rep.pck_mismatched.has_value());
    CHECK(rep.pck_matched.value() >= 0.0);
    CHECK(rep.pck_matched.value() <= 1.0);
    CHECK(rep.pck_mismatched.value() >= 0.0);
    CHECK(rep.pck_mismatched.value() <= 1.0);

    std::string text = rep.to_text();
    CHECK(text.find("matched\tmismatched") != std::string::npos);
    CHECK(text.find("pck_matched = ") != std::string::npos);
    CHECK(text.find("pck_mismatched = ") != std::string::npos);

    // conditioning mechanism: with the decoder on, changing the conditioning
    // image changes the target features
    Tensor<double> fa = probe_features(m, tgt, src);
    Tensor<double> fb = probe_features(m, tgt, unrelated);
    double md = 0;
    for (size_t i = 0; i < fa.data.size(); ++i)
        md = std::max(md, std::abs(fa.data[i] - fb.data[i]));
    CHECK(md > 0.0);
}

TEST_CASE("self-correspondence yields perfect pck through the harness") {
    Config cfg = micro_config();
    cfg.validate();
    Model<double> m(cfg);
    Tensor<double> src = rand_frame(32, 32, 53);
    Tensor<double> unrelated = rand_frame(32, 32, 54);
    // cell centers of the 8x8 grid at stride 4
    std::vector<std::array<double, 2>> pts;
    for (int cy : {1, 3, 6})
        for (int cx : {2, 4, 7}) pts.push_back({feat_to_pix(cx, 4), feat_to_pix(cy, 4)});
    ProbeReport rep = run_probe(m, src, src, unrelated, pts, pts);
    CHECK(rep.pck_matched.value() == 1.0);
}
