#pragma once

// Small neural building blocks over graph Values. Each module registers its
// parameters in a ParamStore under a name prefix at construction and fetches
// them per forward call, so one set of parameters serves any number of graphs.

#include <string>
#include <vector>

#include "alt/graph.hpp"
#include "alt/params.hpp"

namespace alt {

template <class S>
struct Linear {
    ParamStore<S>* ps = nullptr;
    std::string w, b;

    Linear() = default;
    Linear(ParamStore<S>& store, const std::string& name, int in, int out, bool frozen = false)
        : ps(&store), w(name + ".w"), b(name + ".b") {
        store.def(w, {in, out}, init::kaiming<S>(in), frozen);
        store.def(b, {1, out}, init::zeros<S>(), frozen);
    }
    Value<S> operator()(Graph<S>& g, Value<S> x) const {
        return add_row(matmul(x, g.param(ps->get(w))), g.param(ps->get(b)));
    }
};

template <class S>
struct LayerNorm {
    ParamStore<S>* ps = nullptr;
    std::string gamma, beta;

    LayerNorm() = default;
    LayerNorm(ParamStore<S>& store, const std::string& name, int dim, bool frozen = false)
        : ps(&store), gamma(name + ".g"), beta(name + ".b") {
        store.def(gamma, {1, dim}, init::ones<S>(), frozen);
        store.def(beta, {1, dim}, init::zeros<S>(), frozen);
    }
    Value<S> operator()(Graph<S>& g, Value<S> x) const {
        return layernorm_rows(x, g.param(ps->get(gamma)), g.param(ps->get(beta)));
    }
};

// Multi-head attention: query rows attend over key/value rows.
template <class S>
struct MultiHeadAttention {
    ParamStore<S>* ps = nullptr;
    Linear<S> wq, wk, wv, wo;
    int dim = 0, heads = 1;

    MultiHeadAttention() = default;
    MultiHeadAttention(ParamStore<S>& store, const std::string& name, int d, int h, bool frozen = false)
        : ps(&store),
          wq(store, name + ".q", d, d, frozen),
          wk(store, name + ".k", d, d, frozen),
          wv(store, name + ".v", d, d, frozen),
          wo(store, name + ".o", d, d, frozen),
          dim(d),
          heads(h) {
        if (d % h != 0) throw ConfigError("attention: heads must divide dim");
    }

    Value<S> operator()(Graph<S>& g, Value<S> q_in, Value<S> kv_in) const {
        int dh = dim / heads;
        Value<S> q = wq(g, q_in), k = wk(g, kv_in), v = wv(g, kv_in);
        std::vector<Value<S>> outs;
        outs.reserve(heads);
        for (int h = 0; h < heads; ++h) {
            Value<S> qh = slice_cols(q, h * dh, (h + 1) * dh);
            Value<S> kh = slice_cols(k, h * dh, (h + 1) * dh);
            Value<S> vh = slice_cols(v, h * dh, (h + 1) * dh);
            Value<S> att = softmax_rows(scale(matmul(qh, transpose2d(kh)), 1.0 / std::sqrt(double(dh))));
            outs.push_back(matmul(att, vh));
        }
        return wo(g, heads == 1 ? outs[0] : concat_cols(outs));
    }
};

// Pre-norm transformer block: x += MHA(LN(x), kv); x += FFN(LN(x)).
// For self-attention the key/value source is the normalized x itself; a
// cross block receives an external kv and uses it unnormalized.
template <class S>
struct TransformerBlock {
    LayerNorm<S> ln1, ln2;
    MultiHeadAttention<S> attn;
    Linear<S> ff1, ff2;

    TransformerBlock() = default;
    TransformerBlock(ParamStore<S>& store, const std::string& name, int d, int h, bool frozen = false)
        : ln1(store, name + ".ln1", d, frozen),
          ln2(store, name + ".ln2", d, frozen),
          attn(store, name + ".attn", d, h, frozen),
          ff1(store, name + ".ff1", d, 4 * d, frozen),
          ff2(store, name + ".ff2", 4 * d, d, frozen) {}

    Value<S> attn_half(Graph<S>& g, Value<S> x) const {
        Value<S> n = ln1(g, x);
        return add(x, attn(g, n, n));
    }
    Value<S> attn_half_cross(Graph<S>& g, Value<S> x, Value<S> kv) const {
        return add(x, attn(g, ln1(g, x), kv));
    }
    Value<S> ffn_half(Graph<S>& g, Value<S> x) const {
        return add(x, ff2(g, relu(ff1(g, ln2(g, x)))));
    }
    Value<S> operator()(Graph<S>& g, Value<S> x) const { return ffn_half(g, attn_half(g, x)); }
    Value<S> cross(Graph<S>& g, Value<S> x, Value<S> kv) const {
        return ffn_half(g, attn_half_cross(g, x, kv));
    }
};

// Single-query attention pooling: score_i = (q . x_i)/sqrt(d), output the
// softmax-weighted sum of the rows themselves (no value projection, so a
// one-cell grid pools to exactly that cell).
template <class S>
struct AttentionPool {
    ParamStore<S>* ps = nullptr;
    std::string q;
    int dim = 0;

    AttentionPool() = default;
    AttentionPool(ParamStore<S>& store, const std::string& name, int d, bool frozen = false)
        : ps(&store), q(name + ".q"), dim(d) {
        store.def(q, {1, d}, init::normal<S>(0.02), frozen);
    }
    // rows: M x d -> 1 x d
    Value<S> operator()(Graph<S>& g, Value<S> rows) const {
        const Tensor<S>& t = g.value(rows);
        if (t.ndim() != 2 || t.dim(0) < 1) throw InputError("attention_pool: empty input");
        Value<S> scores = scale(matmul(rows, transpose2d(g.param(ps->get(q)))), 1.0 / std::sqrt(double(dim)));
        Value<S> alpha = softmax_rows(transpose2d(scores));  // 1 x M
        return matmul(alpha, rows);
    }
};

// Plain MLP with rectifier activations between layers (none after the last).
template <class S>
struct Mlp {
    std::vector<Linear<S>> layers;

    Mlp() = default;
    Mlp(ParamStore<S>& store, const std::string& name, const std::vector<int>& dims, bool frozen = false) {
        for (size_t i = 0; i + 1 < dims.size(); ++i)
            layers.emplace_back(store, name + ".l" + std::to_string(i), dims[i], dims[i + 1], frozen);
    }
    Value<S> operator()(Graph<S>& g, Value<S> x) const {
        for (size_t i = 0; i < layers.size(); ++i) {
            x = layers[i](g, x);
            if (i + 1 < layers.size()) x = relu(x);
        }
        return x;
    }
};

}  // namespace alt
