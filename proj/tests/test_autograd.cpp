#include <catch2/catch_amalgamated.hpp>

#include "alt/graph.hpp"
#include "alt/random.hpp"
#include "gradcheck.hpp"

using alt::Graph;
using alt::Tensor;
using alt::Value;
using alt::concat_cols;
using alt::concat_rows;
using alttest::GradCheck;
using alttest::rand_tensor;

namespace {
alt::Rng rng(42);
}

TEST_CASE("forward values: basic ops") {
    Graph<double> g;
    auto a = g.input(Tensor<double>::from({1, 3}, {1, -2, 3}));
    auto b = g.input(Tensor<double>::from({1, 3}, {0.5, 4, -1}));
    REQUIRE(g.value(add(a, b)).data == std::vector<double>{1.5, 2, 2});
    REQUIRE(g.value(sub(a, b)).data == std::vector<double>{0.5, -6, 4});
    REQUIRE(g.value(mul(a, b)).data == std::vector<double>{0.5, -8, -3});
    REQUIRE(g.value(affine(a, 2.0, 1.0)).data == std::vector<double>{3, -3, 7});
    REQUIRE(g.value(relu(a)).data == std::vector<double>{1, 0, 3});
    REQUIRE(g.value(sum_all(a)).data[0] == 2.0);
    REQUIRE(g.value(mean_all(b)).data[0] == Catch::Approx(3.5 / 3));
}

TEST_CASE("relu maps zero to zero") {
    Graph<double> g;
    auto a = g.input(Tensor<double>::from({1, 3}, {0.0, -0.0, -5.0}));
    auto y = g.value(relu(a));
    REQUIRE(y.data[0] == 0.0);
    REQUIRE(y.data[1] == 0.0);
    REQUIRE(y.data[2] == 0.0);
}

TEST_CASE("matmul matches manual product") {
    Graph<double> g;
    auto a = g.input(Tensor<double>::from({2, 3}, {1, 2, 3, 4, 5, 6}));
    auto b = g.input(Tensor<double>::from({3, 2}, {7, 8, 9, 10, 11, 12}));
    auto y = g.value(matmul(a, b));
    REQUIRE(y.at(0, 0) == 58);
    REQUIRE(y.at(0, 1) == 64);
    REQUIRE(y.at(1, 0) == 139);
    REQUIRE(y.at(1, 1) == 154);
}

TEST_CASE("softmax rows sum to one and are shift invariant") {
    Graph<double> g;
    auto a = g.input(Tensor<double>::from({2, 3}, {1, 2, 3, 1001, 1002, 1003}));
    auto y = g.value(softmax_rows(a));
    for (int i = 0; i < 2; ++i) {
        double s = y.at(i, 0) + y.at(i, 1) + y.at(i, 2);
        REQUIRE(s == Catch::Approx(1.0).epsilon(1e-12));
    }
    REQUIRE(y.at(0, 2) == Catch::Approx(y.at(1, 2)).epsilon(1e-12));
}

TEST_CASE("layernorm normalizes rows") {
    Graph<double> g;
    auto x = g.input(rand_tensor({4, 8}, rng, -3, 3));
    auto gamma = g.input(Tensor<double>::full({1, 8}, 1.0));
    auto beta = g.input(Tensor<double>({1, 8}));
    auto y = g.value(layernorm_rows(x, gamma, beta));
    for (int i = 0; i < 4; ++i) {
        double mu = 0, var = 0;
        for (int j = 0; j < 8; ++j) mu += y.at(i, j);
        mu /= 8;
        for (int j = 0; j < 8; ++j) var += (y.at(i, j) - mu) * (y.at(i, j) - mu);
        var /= 8;
        REQUIRE(mu == Catch::Approx(0.0).margin(1e-12));
        REQUIRE(var == Catch::Approx(1.0).epsilon(1e-4));
    }
}

TEST_CASE("conv2d matches direct convolution") {
    int B = 2, H = 5, W = 4, Cin = 3, Cout = 2, k = 3, stride = 2, pad = 1;
    Tensor<double> x = rand_tensor({B, H, W, Cin}, rng);
    Tensor<double> w = rand_tensor({k * k * Cin, Cout}, rng);
    Tensor<double> b = rand_tensor({1, Cout}, rng);
    Graph<double> g;
    auto y = g.value(conv2d(g.input(x), g.input(w), g.input(b), k, k, stride, pad));
    int Ho = (H + 2 * pad - k) / stride + 1, Wo = (W + 2 * pad - k) / stride + 1;
    REQUIRE(y.dim(0) == B);
    REQUIRE(y.dim(1) == Ho);
    REQUIRE(y.dim(2) == Wo);
    REQUIRE(y.dim(3) == Cout);
    for (int bb = 0; bb < B; ++bb)
        for (int oy = 0; oy < Ho; ++oy)
            for (int ox = 0; ox < Wo; ++ox)
                for (int c = 0; c < Cout; ++c) {
                    double s = b.at(0, c);
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            int iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                            if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                            for (int ci = 0; ci < Cin; ++ci)
                                s += x.at(bb, iy, ix, ci) * w.at((ky * k + kx) * Cin + ci, c);
                        }
                    REQUIRE(y.at(bb, oy, ox, c) == Catch::Approx(s).margin(1e-12));
                }
}

TEST_CASE("avg_pool2 with ceil semantics averages partial windows") {
    // 3x3 single channel: bottom row and right column form partial windows.
    Graph<double> g;
    Tensor<double> x = Tensor<double>::from({3, 3, 1}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    auto y = g.value(avg_pool2(g.input(x)));
    REQUIRE(y.dim(0) == 2);
    REQUIRE(y.dim(1) == 2);
    REQUIRE(y.at(0, 0, 0) == Catch::Approx((1 + 2 + 4 + 5) / 4.0));
    REQUIRE(y.at(0, 1, 0) == Catch::Approx((3 + 6) / 2.0));
    REQUIRE(y.at(1, 0, 0) == Catch::Approx((7 + 8) / 2.0));
    REQUIRE(y.at(1, 1, 0) == Catch::Approx(9.0));
}

TEST_CASE("bilinear sample is exact at integer coordinates and clamps at borders") {
    Graph<double> g;
    Tensor<double> grid = rand_tensor({3, 4, 2}, rng);
    Tensor<double> coords = Tensor<double>::from({3, 2}, {2, 1, -5, 0, 9, 9});
    auto y = g.value(bilinear_sample(g.input(grid), g.input(coords)));
    REQUIRE(y.at(0, 0) == Catch::Approx(grid.at(1, 2, 0)).margin(1e-14));
    REQUIRE(y.at(0, 1) == Catch::Approx(grid.at(1, 2, 1)).margin(1e-14));
    REQUIRE(y.at(1, 0) == Catch::Approx(grid.at(0, 0, 0)).margin(1e-14));
    REQUIRE(y.at(2, 0) == Catch::Approx(grid.at(2, 3, 0)).margin(1e-14));
}

TEST_CASE("bilinear sample interpolates linearly between cells") {
    Graph<double> g;
    Tensor<double> grid = Tensor<double>::from({1, 2, 1}, {10.0, 20.0});
    Tensor<double> coords = Tensor<double>::from({1, 2}, {0.25, 0.0});
    auto y = g.value(bilinear_sample(g.input(grid), g.input(coords)));
    REQUIRE(y.at(0, 0) == Catch::Approx(12.5));
}

TEST_CASE("corr_patch gives unit center score for matching feature") {
    // Grid with a distinctive feature at (2, 2); query equals that feature.
    int H = 5, W = 5, C = 4, r = 1;
    Tensor<double> grid({H, W, C});
    alt::Rng lr(7);
    for (auto& v : grid.data) v = lr.uniform(0.1, 1.0);
    Tensor<double> q({1, C});
    for (int c = 0; c < C; ++c) q.at(0, c) = grid.at(2, 2, c);
    Tensor<double> centers = Tensor<double>::from({1, 2}, {2.0, 2.0});
    Graph<double> g;
    auto y = g.value(corr_patch(g.input(grid), g.input(centers), g.input(q), r));
    REQUIRE(y.dim(1) == 9);
    REQUIRE(y.at(0, 4) == Catch::Approx(1.0).epsilon(1e-12));  // center offset (0,0)
    for (int o = 0; o < 9; ++o) {
        REQUIRE(y.at(0, o) <= 1.0 + 1e-12);
        REQUIRE(y.at(0, o) >= -1.0 - 1e-12);
    }
}

TEST_CASE("corr_patch offsets are raveled row-major dy then dx") {
    // Constant-direction grid: feature = [x, y]; query = [1, 0] picks out
    // columns with larger x.
    int H = 7, W = 7, C = 2, r = 1;
    Tensor<double> grid({H, W, C});
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            grid.at(y, x, 0) = x;
            grid.at(y, x, 1) = y;
        }
    Tensor<double> q = Tensor<double>::from({1, 2}, {1.0, 0.0});
    Tensor<double> centers = Tensor<double>::from({1, 2}, {3.0, 3.0});
    Graph<double> g;
    auto y = g.value(corr_patch(g.input(grid), g.input(centers), g.input(q), r));
    // offset index 0 is (dy=-1, dx=-1); index 2 is (dy=-1, dx=+1)
    double c0 = y.at(0, 0), c2 = y.at(0, 2);
    double e0 = 2.0 / std::hypot(2.0, 2.0), e2 = 4.0 / std::hypot(4.0, 2.0);
    REQUIRE(c0 == Catch::Approx(e0).epsilon(1e-12));
    REQUIRE(c2 == Catch::Approx(e2).epsilon(1e-12));
}

TEST_CASE("gradients flow through frozen parameters but are not computed for them") {
    alt::Param<double> w;
    w.value = Tensor<double>::from({2, 2}, {1, 2, 3, 4});
    w.grad = Tensor<double>({2, 2});
    w.frozen = true;
    Graph<double> g;
    auto x = g.leaf(Tensor<double>::from({1, 2}, {0.5, -0.5}));
    auto wp = g.param(w);
    auto loss = sum_all(matmul(x, wp));
    g.backward(loss);
    // d/dx of sum(x W) = row sums of W^T = [w00+w01, w10+w11]
    REQUIRE(g.grad(x).at(0, 0) == 3.0);
    REQUIRE(g.grad(x).at(0, 1) == 7.0);
    REQUIRE(w.grad.max_abs() == 0.0);
    REQUIRE_THROWS_AS(g.grad(wp), alt::InputError);
}

TEST_CASE("trainable parameters accumulate into bound grad across graphs") {
    alt::Param<double> w;
    w.value = Tensor<double>::from({1, 2}, {2.0, 3.0});
    w.grad = Tensor<double>({1, 2});
    for (int rep = 0; rep < 2; ++rep) {
        Graph<double> g;
        auto wp = g.param(w);
        g.backward(sum_all(wp));
    }
    REQUIRE(w.grad.at(0, 0) == 2.0);
    REQUIRE(w.grad.at(0, 1) == 2.0);
}

TEST_CASE("backward only touches nodes reachable from the root") {
    Graph<double> g;
    auto a = g.leaf(Tensor<double>::from({1, 1}, {2.0}));
    auto b = g.leaf(Tensor<double>::from({1, 1}, {5.0}));
    auto dead = mul(b, b);  // not part of the loss
    (void)dead;
    auto loss = mul(a, a);
    g.backward(loss);
    REQUIRE(g.grad(a).data[0] == 4.0);
    REQUIRE_THROWS_AS(g.grad(b), alt::InputError);
}

// --- gradient checks -------------------------------------------------------

TEST_CASE("gradcheck: elementwise and reductions") {
    GradCheck gc;
    SECTION("add/mul/affine composite") {
        bool ok = gc.run({rand_tensor({3, 4}, rng), rand_tensor({3, 4}, rng)},
                         [](Graph<double>& g, const std::vector<Value<double>>& in) {
                             auto y = mul(add(in[0], in[1]), affine(in[0], 0.7, -0.2));
                             return mean_all(y);
                         });
        INFO(gc.worst);
        REQUIRE(ok);
    }
    SECTION("sub and sum") {
        bool ok = gc.run({rand_tensor({2, 5}, rng), rand_tensor({2, 5}, rng)},
                         [](Graph<double>& g, const std::vector<Value<double>>& in) {
                             return sum_all(mul(sub(in[0], in[1]), sub(in[0], in[1])));
                         });
        INFO(gc.worst);
        REQUIRE(ok);
    }
    SECTION("mean_rows/broadcast_rows") {
        bool ok = gc.run({rand_tensor({4, 3}, rng), rand_tensor({1, 3}, rng)},
                         [](Graph<double>& g, const std::vector<Value<double>>& in) {
                             auto m = mean_rows(in[0]);
                             auto b = broadcast_rows(in[1], 4);
                             return sum_all(mul(broadcast_rows(m, 4), b));
                         });
        INFO(gc.worst);
        REQUIRE(ok);
    }
}

TEST_CASE("gradcheck: activations") {
    GradCheck gc;
    SECTION("relu away from kink") {
        Tensor<double> x = rand_tensor({3, 5}, rng);
        for (auto& v : x.data)
            if (std::abs(v) < 0.05) v = 0.3;
        bool ok = gc.run({x}, [](Graph<double>& g, const std::vector<Value<double>>& in) {
            return sum_all(relu(in[0]));
        });
        INFO(gc.worst);
        REQUIRE(ok);
    }
    SECTION("sigmoid") {
        bool ok = gc.run({rand_tensor({2, 4}, rng, -2, 2)},
                         [](Graph<double>& g, const std::vector<Value<double>>& in) {
                             return mean_all(sigmoid(in[0]));
                         });
        INFO(gc.worst);
        REQUIRE(ok);
    }
}

TEST_CASE("gradcheck: matmul / transpose / add_row") {
    GradCheck gc;
    Tensor<double> a = rand_tensor({3, 4}, rng), b = rand_tensor({4, 2}, rng), r = rand_tensor({1, 2}, rng);
    bool ok = gc.run({a, b, r}, [](Graph<double>& g, const std::vector<Value<double>>& in) {
        auto y = add_row(matmul(in[0], in[1]), in[2]);
        auto z = matmul(transpose2d(y), y);
        return mean_all(z);
    });
    INFO(gc.worst);
    REQUIRE(ok);
}

TEST_CASE("gradcheck: softmax and layernorm") {
    GradCheck gc;
    SECTION("softmax_rows") {
        bool ok = gc.run({rand_tensor({3, 5}, rng, -2, 2), rand_tensor({3, 5}, rng)},
                         [](Graph<double>& g, const std::vector<Value<double>>& in) {
                             return sum_all(mul(softmax_rows(in[0]), in[1]));
                         });
        INFO(gc.worst);
        REQUIRE(ok);
    }
    SECTION("layernorm_rows") {
        bool ok = gc.run({rand_tensor({4, 6}, rng, -2, 2), rand_tensor({1, 6}, rng, 0.5, 1.5),
                          rand_tensor({1, 6}, rng), rand_tensor({4, 6}, rng)},
                         [](Graph<double>& g, const std::vector<Value<double>>& in) {
                             return sum_all(mul(layernorm_rows(in[0], in[1], in[2]), in[3]));
                         });
        INFO(gc.worst);
        REQUIRE(ok);
    }
}

TEST_CASE("gradcheck: shape surgery") {
    GradCheck gc;
    SECTION("slices and concats") {
        bool ok = gc.run({rand_tensor({4, 6}, rng), rand_tensor({4, 2}, rng)},
                         [](Graph<double>& g, const std::vector<Value<double>>& in) {
                             auto s1 = slice_cols(in[0], 1, 4);
                             auto s2 = slice_rows(in[0], 0, 2);
                             auto c = concat_cols<double>({s1, in[1]});
                             auto rsum = sum_all(c);
                             auto r2 = concat_rows<double>({s2, slice_rows(in[0], 2, 4)});
                             return add(rsum, sum_all(mul(r2, r2)));
                         });
        INFO(gc.worst);
        REQUIRE(ok);
    }
    SECTION("reshape and frame_slice") {
        bool ok = gc.run({rand_tensor({2, 2, 3, 2}, rng)},
                         [](Graph<double>& g, const std::vector<Value<double>>& in) {
                             auto f = frame_slice(in[0], 1);
                             auto flat = reshape(f, {6, 2});
                             return mean_all(mul(flat, flat));
                         });
        INFO(gc.worst);
        REQUIRE(ok);
    }
}

TEST_CASE("gradcheck: conv2d") {
    GradCheck gc;
    SECTION("stride 1") {
        bool ok = gc.run(
            {rand_tensor({1, 4, 5, 2}, rng), rand_tensor({9 * 2, 3}, rng, -0.5, 0.5), rand_tensor({1, 3}, rng)},
            [](Graph<double>& g, const std::vector<Value<double>>& in) {
                auto y = conv2d(in[0], in[1], in[2], 3, 3, 1, 1);
                return mean_all(mul(y, y));
            });
        INFO(gc.worst);
        REQUIRE(ok);
    }
    SECTION("stride 2, batch 2") {
        bool ok = gc.run(
            {rand_tensor({2, 5, 4, 2}, rng), rand_tensor({9 * 2, 2}, rng, -0.5, 0.5), rand_tensor({1, 2}, rng)},
            [](Graph<double>& g, const std::vector<Value<double>>& in) {
                auto y = conv2d(in[0], in[1], in[2], 3, 3, 2, 1);
                return sum_all(mul(y, y));
            });
        INFO(gc.worst);
        REQUIRE(ok);
    }
}

TEST_CASE("gradcheck: avg_pool2") {
    GradCheck gc;
    bool ok = gc.run({rand_tensor({5, 3, 2}, rng)}, [](Graph<double>& g, const std::vector<Value<double>>& in) {
        auto y = avg_pool2(in[0]);
        return sum_all(mul(y, y));
    });
    INFO(gc.worst);
    REQUIRE(ok);
}

TEST_CASE("gradcheck: bilinear_sample wrt grid and coords") {
    GradCheck gc;
    Tensor<double> grid = rand_tensor({4, 5, 3}, rng);
    // Fractional interior coords away from integer lattice kinks.
    Tensor<double> coords = Tensor<double>::from({3, 2}, {1.37, 2.21, 0.55, 0.45, 3.25, 1.75});
    bool ok = gc.run({grid, coords}, [](Graph<double>& g, const std::vector<Value<double>>& in) {
        auto y = bilinear_sample(in[0], in[1]);
        return sum_all(mul(y, y));
    });
    INFO(gc.worst);
    REQUIRE(ok);
}

TEST_CASE("gradcheck: corr_patch wrt grid, centers, qfeat") {
    GradCheck gc;
    Tensor<double> grid = rand_tensor({6, 7, 4}, rng, 0.2, 1.0);
    Tensor<double> centers = Tensor<double>::from({2, 2}, {2.3, 2.6, 3.4, 1.7});
    Tensor<double> q = rand_tensor({2, 4}, rng, 0.2, 1.0);
    Tensor<double> wmix = rand_tensor({2, 9}, rng);
    bool ok = gc.run({grid, centers, q, wmix}, [](Graph<double>& g, const std::vector<Value<double>>& in) {
        auto y = corr_patch(in[0], in[1], in[2], 1);
        return sum_all(mul(y, in[3]));
    });
    INFO(gc.worst);
    REQUIRE(ok);
}

TEST_CASE("gradcheck: losses") {
    GradCheck gc;
    SECTION("l1_weighted_mean away from kink") {
        Tensor<double> pred = Tensor<double>::from({3, 2}, {1.5, 2.5, -0.75, 4.0, 3.25, -1.5});
        Tensor<double> gt = Tensor<double>::from({3, 2}, {1.0, 3.0, 0.0, 3.0, 3.0, -1.0});
        Tensor<double> w = Tensor<double>::from({3}, {1.0, 0.2, 0.0});
        bool ok = gc.run({pred}, [gt, w](Graph<double>& g, const std::vector<Value<double>>& in) {
            return l1_weighted_mean(in[0], gt, w);
        });
        INFO(gc.worst);
        REQUIRE(ok);
    }
    SECTION("bce_logits_weighted_mean") {
        Tensor<double> logits = rand_tensor({4, 2}, rng, -3, 3);
        Tensor<double> targets = Tensor<double>::from({4, 2}, {1, 0, 1, 1, 0, 0, 1, 0});
        Tensor<double> w = Tensor<double>::from({4, 2}, {1, 1, 0.2, 1, 0, 1, 1, 0.2});
        bool ok = gc.run({logits}, [targets, w](Graph<double>& g, const std::vector<Value<double>>& in) {
            return bce_logits_weighted_mean(in[0], targets, w);
        });
        INFO(gc.worst);
        REQUIRE(ok);
    }
    SECTION("bce is stable at extreme logits") {
        Graph<double> g;
        Tensor<double> logits = Tensor<double>::from({1, 2}, {500.0, -500.0});
        Tensor<double> t = Tensor<double>::from({1, 2}, {1.0, 0.0});
        Tensor<double> w = Tensor<double>::full({1, 2}, 1.0);
        auto loss = bce_logits_weighted_mean(g.leaf(logits), t, w);
        REQUIRE(g.value(loss).data[0] == Catch::Approx(0.0).margin(1e-12));
        g.backward(loss);
        REQUIRE(g.value(loss).all_finite());
    }
    SECTION("zero total weight yields zero loss and zero grad") {
        Graph<double> g;
        auto p = g.leaf(Tensor<double>::from({2, 2}, {1, 2, 3, 4}));
        Tensor<double> gt({2, 2});
        Tensor<double> w({2});
        auto loss = l1_weighted_mean(p, gt, w);
        REQUIRE(g.value(loss).data[0] == 0.0);
        g.backward(loss);
        REQUIRE(g.grad(p).max_abs() == 0.0);
    }
}

TEST_CASE("gradcheck: attention-shaped composite") {
    // A miniature attention readout: scores = x q^T / sqrt(d), pooled = softmax(scores)^T x.
    GradCheck gc;
    Tensor<double> x = rand_tensor({5, 4}, rng);
    Tensor<double> q = rand_tensor({1, 4}, rng);
    bool ok = gc.run({x, q}, [](Graph<double>& g, const std::vector<Value<double>>& in) {
        auto scores = scale(matmul(in[0], transpose2d(in[1])), 1.0 / 2.0);  // (5 x 1)
        auto alpha = softmax_rows(transpose2d(scores));                     // (1 x 5)
        auto pooled = matmul(alpha, in[0]);                                 // (1 x 4)
        return sum_all(mul(pooled, pooled));
    });
    INFO(gc.worst);
    REQUIRE(ok);
}
