#pragma once

#include <cstdint>
#include <cstring>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "alt/random.hpp"
#include "alt/tensor.hpp"
#include "alt/util.hpp"

namespace alt {

// A named trainable (or frozen) tensor plus its gradient accumulator and
// AdamW moment buffers.
template <class S>
struct Param {
    Tensor<S> value;
    Tensor<S> grad;
    Tensor<S> m;  // first moment
    Tensor<S> v;  // second moment
    bool frozen = false;

    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), S(0)); }
};

namespace init {

template <class S>
using Fn = std::function<void(Tensor<S>&, Rng&)>;

template <class S>
Fn<S> zeros() {
    return [](Tensor<S>& t, Rng&) { std::fill(t.data.begin(), t.data.end(), S(0)); };
}

template <class S>
Fn<S> normal(double std) {
    return [std](Tensor<S>& t, Rng& rng) { rng.fill_normal(t, 0.0, std); };
}

// He-style scaling for linear/conv weights: std = sqrt(2 / fan_in).
template <class S>
Fn<S> kaiming(int fan_in) {
    return normal<S>(std::sqrt(2.0 / std::max(1, fan_in)));
}

template <class S>
Fn<S> ones() {
    return [](Tensor<S>& t, Rng&) { std::fill(t.data.begin(), t.data.end(), S(1)); };
}

}  // namespace init

// Ordered collection of named parameters. Ordering is the map's lexicographic
// order, which makes checksums, serialization and the optimizer sweep
// deterministic and independent of construction order.
template <class S>
class ParamStore {
  public:
    uint64_t seed = 0;

    ParamStore() = default;
    explicit ParamStore(uint64_t s) : seed(s) {}

    Param<S>& def(const std::string& name, std::vector<int> shape, const init::Fn<S>& f,
                  bool frozen = false) {
        auto it = params_.find(name);
        if (it != params_.end()) {
            if (it->second.value.shape != shape)
                throw ConfigError("param redefined with different shape: " + name);
            return it->second;
        }
        Param<S> p;
        p.value = Tensor<S>(shape);
        p.grad = Tensor<S>(shape);
        p.m = Tensor<S>(shape);
        p.v = Tensor<S>(shape);
        p.frozen = frozen;
        Rng rng(seed_for(seed, name));
        f(p.value, rng);
        return params_.emplace(name, std::move(p)).first->second;
    }

    Param<S>& get(const std::string& name) {
        auto it = params_.find(name);
        if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
        return it->second;
    }
    const Param<S>& get(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
        return it->second;
    }
    bool has(const std::string& name) const { return params_.count(name) != 0; }

    std::map<std::string, Param<S>>& all() { return params_; }
    const std::map<std::string, Param<S>>& all() const { return params_; }

    void zero_grads() {
        for (auto& [n, p] : params_) p.zero_grad();
    }

    size_t count_values() const {
        size_t n = 0;
        for (auto& [name, p] : params_) n += p.value.numel();
        return n;
    }

    // Checksum over the raw bytes of all parameter values whose name starts
    // with `prefix`. Stable across runs; used by the freeze contract tests.
    uint64_t checksum(const std::string& prefix = "") const {
        uint64_t h = 0xcbf29ce484222325ull;
        for (const auto& [name, p] : params_) {
            if (name.rfind(prefix, 0) != 0) continue;
            h = fnv1a64(name, h);
            h = fnv1a64(p.value.data.data(), p.value.data.size() * sizeof(S), h);
        }
        return h;
    }

  private:
    std::map<std::string, Param<S>> params_;
};

}  // namespace alt
