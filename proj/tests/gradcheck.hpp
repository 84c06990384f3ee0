#pragma once

// Central-difference gradient checking in double precision.
//
// The builder is invoked with a fresh graph and one tracked leaf per input
// tensor and must return a scalar root. Analytic gradients from one backward
// pass are compared against (f(x+h) - f(x-h)) / 2h elementwise.

#include <functional>
#include <string>
#include <vector>

#include "alt/graph.hpp"
#include "alt/random.hpp"

namespace alttest {

using alt::Graph;
using alt::Tensor;
using alt::Value;

using BuildFn = std::function<Value<double>(Graph<double>&, const std::vector<Value<double>>&)>;

struct GradCheck {
    double tol = 1e-4;
    double h = 1e-5;
    int max_entries_per_input = 0;  // 0 = all entries
    uint64_t seed = 17;

    double max_rel_err = 0.0;
    std::string worst;

    double eval(const std::vector<Tensor<double>>& inputs, const BuildFn& build) const {
        Graph<double> g;
        std::vector<Value<double>> leaves;
        leaves.reserve(inputs.size());
        for (const auto& t : inputs) leaves.push_back(g.input(t));
        Value<double> root = build(g, leaves);
        return g.value(root).data[0];
    }

    bool run(std::vector<Tensor<double>> inputs, const BuildFn& build) {
        Graph<double> g;
        std::vector<Value<double>> leaves;
        leaves.reserve(inputs.size());
        for (const auto& t : inputs) leaves.push_back(g.leaf(t));
        Value<double> root = build(g, leaves);
        g.backward(root);
        std::vector<Tensor<double>> analytic;
        for (auto v : leaves) analytic.push_back(g.grad(v));

        max_rel_err = 0.0;
        worst.clear();
        alt::Rng rng(seed);
        for (size_t k = 0; k < inputs.size(); ++k) {
            size_t n = inputs[k].numel();
            std::vector<size_t> idx;
            if (max_entries_per_input > 0 && n > static_cast<size_t>(max_entries_per_input)) {
                for (int t = 0; t < max_entries_per_input; ++t) idx.push_back(rng.index(n));
            } else {
                for (size_t i = 0; i < n; ++i) idx.push_back(i);
            }
            for (size_t i : idx) {
                double keep = inputs[k].data[i];
                inputs[k].data[i] = keep + h;
                double fp = eval(inputs, build);
                inputs[k].data[i] = keep - h;
                double fm = eval(inputs, build);
                inputs[k].data[i] = keep;
                double fd = (fp - fm) / (2 * h);
                double an = analytic[k].data[i];
                double rel = std::abs(an - fd) / std::max({1.0, std::abs(an), std::abs(fd)});
                if (rel > max_rel_err) {
                    max_rel_err = rel;
                    worst = "input " + std::to_string(k) + " entry " + std::to_string(i) + ": analytic " +
                            std::to_string(an) + " vs fd " + std::to_string(fd);
                }
            }
        }
        return max_rel_err <= tol;
    }
};

inline Tensor<double> rand_tensor(std::vector<int> shape, alt::Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(std::move(shape));
    for (auto& x : t.data) x = rng.uniform(lo, hi);
    return t;
}

}  // namespace alttest
