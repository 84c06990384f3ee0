#pragma once

// Reverse-mode autodiff on dense tensors. Define-by-run: every op computes
// its value eagerly and appends a node with a backward closure to the owning
// Graph (tape). backward(root) sweeps the tape in reverse creation order,
// which is a valid topological order because ops only consume existing nodes.
//
// Gradients are only computed along paths that need them: a node needs a
// gradient iff it is a non-frozen parameter leaf, an explicitly tracked
// input, or has a parent that needs one. Backward closures check the target
// before accumulating, so frozen parameters cost nothing.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <utility>
#include <vector>

#include "alt/params.hpp"
#include "alt/tensor.hpp"
#include "alt/util.hpp"

namespace alt {

template <class S>
using EMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class S>
Eigen::Map<EMat<S>> emap(Tensor<S>& t, int rows, int cols) {
    return Eigen::Map<EMat<S>>(t.data.data(), rows, cols);
}
template <class S>
Eigen::Map<const EMat<S>> emap(const Tensor<S>& t, int rows, int cols) {
    return Eigen::Map<const EMat<S>>(t.data.data(), rows, cols);
}

template <class S>
class Graph;

template <class S>
struct Value {
    Graph<S>* G = nullptr;
    int i = -1;

    bool ok() const { return G != nullptr && i >= 0; }
    const Tensor<S>& t() const { return G->value(*this); }
    const std::vector<int>& shape() const { return t().shape; }
};

template <class S>
class Graph {
  public:
    struct Node {
        Tensor<S> val;
        Tensor<S> grad;  // allocated during backward for reachable nodes
        std::vector<int> parents;
        bool needs_grad = false;
        Param<S>* bound = nullptr;
        std::function<void()> back;
    };

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    size_t size() const { return nodes_.size(); }

    Value<S> input(Tensor<S> t) { return make(std::move(t), {}, false, nullptr); }

    // Gradient-tracked input (for gradient checks w.r.t. activations).
    Value<S> leaf(Tensor<S> t) { return make(std::move(t), {}, true, nullptr); }

    // Parameter leaf. Frozen parameters join the graph (values flow through
    // them) but no gradient is computed for them.
    Value<S> param(Param<S>& p) {
        Value<S> v = make(p.value, {}, !p.frozen, nullptr);
        nodes_[v.i].bound = p.frozen ? nullptr : &p;
        return v;
    }

    const Tensor<S>& value(Value<S> v) const { return nodes_[v.i].val; }
    const Tensor<S>& grad(Value<S> v) const {
        const Node& n = nodes_[v.i];
        if (n.grad.data.empty()) throw InputError("graph: no gradient at node (run backward first)");
        return n.grad;
    }

    Node& node(int i) { return nodes_[i]; }

    // True when node i takes part in the current backward pass.
    bool wants(int i) const { return nodes_[i].needs_grad && !nodes_[i].grad.data.empty(); }
    Tensor<S>& g(int i) { return nodes_[i].grad; }
    const Tensor<S>& v(int i) const { return nodes_[i].val; }

    Value<S> make(Tensor<S> out, std::vector<int> parents, bool needs, std::function<void()> back) {
        Node n;
        n.val = std::move(out);
        n.parents = std::move(parents);
        n.needs_grad = needs;
        n.back = std::move(back);
        nodes_.push_back(std::move(n));
        return Value<S>{this, static_cast<int>(nodes_.size()) - 1};
    }

    bool any_needs(std::initializer_list<int> idx) const {
        for (int i : idx)
            if (nodes_[i].needs_grad) return true;
        return false;
    }

    void backward(Value<S> root) {
        if (root.G != this) throw InputError("graph: backward on foreign value");
        if (nodes_[root.i].val.numel() != 1) throw InputError("graph: backward root must be scalar");

        // Mark nodes reachable from the root through parent edges.
        std::vector<char> reach(nodes_.size(), 0);
        std::vector<int> stack{root.i};
        reach[root.i] = 1;
        while (!stack.empty()) {
            int i = stack.back();
            stack.pop_back();
            for (int p : nodes_[i].parents) {
                if (!reach[p]) {
                    reach[p] = 1;
                    stack.push_back(p);
                }
            }
        }
        for (size_t i = 0; i < nodes_.size(); ++i) {
            Node& n = nodes_[i];
            if (reach[i] && n.needs_grad)
                n.grad = Tensor<S>(n.val.shape);
            else
                n.grad = Tensor<S>();
        }
        if (!nodes_[root.i].needs_grad)
            throw InputError("graph: root does not depend on any tracked value");
        nodes_[root.i].grad.data[0] = S(1);

        for (int i = root.i; i >= 0; --i) {
            Node& n = nodes_[i];
            if (!reach[i] || !n.needs_grad) continue;
            if (n.back) n.back();
            if (n.bound) {
                Tensor<S>& pg = n.bound->grad;
                for (size_t k = 0; k < pg.data.size(); ++k) pg.data[k] += n.grad.data[k];
            }
        }
    }

    void clear() { nodes_.clear(); }

  private:
    std::deque<Node> nodes_;
};

namespace detail {
template <class S>
void check_same_graph(Value<S> a, Value<S> b) {
    if (a.G != b.G) throw InputError("graph: operands from different graphs");
}
}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <class S>
Value<S> add(Value<S> a, Value<S> b) {
    detail::check_same_graph(a, b);
    Graph<S>* G = a.G;
    const Tensor<S>&ta = G->v(a.i), &tb = G->v(b.i);
    if (!ta.same_shape(tb)) throw InputError("add: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    Tensor<S> out = ta;
    for (size_t k = 0; k < out.data.size(); ++k) out.data[k] += tb.data[k];
    bool ng = G->any_needs({a.i, b.i});
    int ia = a.i, ib = b.i;
    auto res = G->make(std::move(out), {ia, ib}, ng, nullptr);
    int io = res.i;
    G->node(io).back = [G, io, ia, ib] {
        const Tensor<S>& gy = G->g(io);
        for (int p : {ia, ib}) {
            if (!G->wants(p)) continue;
            Tensor<S>& gp = G->g(p);
            for (size_t k = 0; k < gp.data.size(); ++k) gp.data[k] += gy.data[k];
        }
    };
    return res;
}

template <class S>
Value<S> sub(Value<S> a, Value<S> b) {
    detail::check_same_graph(a, b);
    Graph<S>* G = a.G;
    const Tensor<S>&ta = G->v(a.i), &tb = G->v(b.i);
    if (!ta.same_shape(tb)) throw InputError("sub: shape mismatch");
    Tensor<S> out = ta;
    for (size_t k = 0; k < out.data.size(); ++k) out.data[k] -= tb.data[k];
    bool ng = G->any_needs({a.i, b.i});
    int ia = a.i, ib = b.i;
    auto res = G->make(std::move(out), {ia, ib}, ng, nullptr);
    int io = res.i;
    G->node(io).back = [G, io, ia, ib] {
        const Tensor<S>& gy = G->g(io);
        if (G->wants(ia)) {
            Tensor<S>& gp = G->g(ia);
            for (size_t k = 0; k < gp.data.size(); ++k) gp.data[k] += gy.data[k];
        }
        if (G->wants(ib)) {
            Tensor<S>& gp = G->g(ib);
            for (size_t k = 0; k < gp.data.size(); ++k) gp.data[k] -= gy.data[k];
        }
    };
    return res;
}

template <class S>
Value<S> mul(Value<S> a, Value<S> b) {
    detail::check_same_graph(a, b);
    Graph<S>* G = a.G;
    const Tensor<S>&ta = G->v(a.i), &tb = G->v(b.i);
    if (!ta.same_shape(tb)) throw InputError("mul: shape mismatch");
    Tensor<S> out = ta;
    for (size_t k = 0; k < out.data.size(); ++k) out.data[k] *= tb.data[k];
    bool ng = G->any_needs({a.i, b.i});
    int ia = a.i, ib = b.i;
    auto res = G->make(std::move(out), {ia, ib}, ng, nullptr);
    int io = res.i;
    G->node(io).back = [G, io, ia, ib] {
        const Tensor<S>& gy = G->g(io);
        if (G->wants(ia)) {
            Tensor<S>& gp = G->g(ia);
            const Tensor<S>& vb = G->v(ib);
            for (size_t k = 0; k < gp.data.size(); ++k) gp.data[k] += gy.data[k] * vb.data[k];
        }
        if (G->wants(ib)) {
            Tensor<S>& gp = G->g(ib);
            const Tensor<S>& va = G->v(ia);
            for (size_t k = 0; k < gp.data.size(); ++k) gp.data[k] += gy.data[k] * va.data[k];
        }
    };
    return res;
}

// out = k*a + c
template <class S>
Value<S> affine(Value<S> a, double k, double c = 0.0) {
    Graph<S>* G = a.G;
    Tensor<S> out = G->v(a.i);
    for (auto& x : out.data) x = static_cast<S>(k * x + c);
    bool ng = G->any_needs({a.i});
    int ia = a.i;
    auto res = G->make(std::move(out), {ia}, ng, nullptr);
    int io = res.i;
    G->node(io).back = [G, io, ia, k] {
        if (!G->wants(ia)) return;
        const Tensor<S>& gy = G->g(io);
        Tensor<S>& gp = G->g(ia);
        for (size_t i = 0; i < gp.data.size(); ++i) gp.data[i] += static_cast<S>(k) * gy.data[i];
    };
    return res;
}

template <class S>
Value<S> scale(Value<S> a, double k) {
    return affine(a, k, 0.0);
}

template <class S>
Value<S> relu(Value<S> a) {
    Graph<S>* G = a.G;
    Tensor<S> out = G->v(a.i);
    for (auto& x : out.data) x = x > S(0) ? x : S(0);
    bool ng = G->any_needs({a.i});
    int ia = a.i;
    auto res = G->make(std::move(out), {ia}, ng, nullptr);
    int io = res.i;
    G->node(io).back = [G, io, ia] {
        if (!G->wants(ia)) return;
        const Tensor<S>&gy = G->g(io), &y = G->v(io);
        Tensor<S>& gp = G->g(ia);
        for (size_t i = 0; i < gp.data.size(); ++i)
            if (y.data[i] > S(0)) gp.data[i] += gy.data[i];
    };
    return res;
}

template <class S>
Value<S> sigmoid(Value<S> a) {
    Graph<S>* G = a.G;
    Tensor<S> out = G->v(a.i);
    for (auto& x : out.data) x = static_cast<S>(1.0 / (1.0 + std::exp(-static_cast<double>(x))));
    bool ng = G->any_needs({a.i});
    int ia = a.i;
    auto res = G->make(std::move(out), {ia}, ng, nullptr);
    int io = res.i;
    G->node(io).back = [G, io, ia] {
        if (!G->wants(ia)) return;
        const Tensor<S>&gy = G->g(io), &y = G->v(io);
        Tensor<S>& gp = G->g(ia);
        for (size_t i = 0; i < gp.data.size(); ++i)
            gp.data[i] += gy.data[i] * y.data[i] * (S(1) - y.data[i]);
    };
    return res;
}

// ---------------------------------------------------------------------------
// shape surgery
// ---------------------------------------------------------------------------

template <class S>
Value<S> reshape(Value<S> a, std::vector<int> sh) {
    Graph<S>* G = a.G;
    Tensor<S> out = G->v(a.i).reshaped(sh);
    bool ng = G->any_needs({a.i});
    int ia = a.i;
    auto res = G->make(std::move(out), {ia}, ng, nullptr);
    int io = res.i;
    G->node(io).back = [G, io, ia] {
        if (!G->wants(ia)) return;
        const Tensor<S>& gy = G->g(io);
        Tensor<S>& gp = G->g(ia);
        for (size_t i = 0; i < gp.data.size(); ++i) gp.data[i] += gy.data[i];
    };
    return res;
}

template <class S>
Value<S> transpose2d(Value<S> a) {
    Graph<S>* G = a.G;
    const Tensor<S>& ta = G->v(a.i);
    if (ta.ndim() != 2) throw InputError("transpose2d: expects 2-d");
    int M = ta.dim(0), N = ta.dim(1);
    Tensor<S> out({N, M});
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < N; ++j) out.at(j, i) = ta.at(i, j);
    bool ng = G->any_needs({a.i});
    int ia = a.i;
    auto res = G->make(std::move(out), {ia}, ng, nullptr);
    int io = res.i;
    G->node(io).back = [G, io, ia, M, N] {
        if (!G->wants(ia)) return;
        const Tensor<S>& gy = G->g(io);
        Tensor<S>& gp = G->g(ia);
        for (int i = 0; i < M; ++i)
            for (int j = 0; j < N; ++j) gp.at(i, j) += gy.at(j, i);
    };
    return res;
}

template <class S>
Value<S> slice_rows(Value<S> a, int r0, int r1) {
    Graph<S>* G = a.G;
    const Tensor<S>& ta = G->v(a.i);
    if (ta.ndim() != 2) throw InputError("slice_rows: expects 2-d");
    int N = ta.dim(1);
    if (r0 < 0 || r1 > ta.dim(0) || r0 >= r1) throw InputError("slice_rows: bad range");
    Tensor<S> out({r1 - r0, N});
    std::copy(ta.data.begin() + static_cast<size_t>(r0) * N, ta.data.begin() + static_cast<size_t>(r1) * N,
              out.data.begin());
    bool ng = G->any_needs({a.i});
    int ia = a.i;
    auto res = G->make(std::move(out), {ia}, ng, nullptr);
    int io = res.i;
    G->node(io).back = [G, io, ia, r0, N] {
        if (!G->wants(ia)) return;
        const Tensor<S>& gy = G->g(io);
        Tensor<S>& gp = G->g(ia);
        size_t off = static_cast<size_t>(r0) * N;
        for (size_t i = 0; i < gy.data.size(); ++i) gp.data[off + i] += gy.data[i];
    };
    return res;
}

template <class S>
Value<S> slice_cols(Value<S> a, int c0, int c1) {
    Graph<S>* G = a.G;
    const Tensor<S>& ta = G->v(a.i);
    if (ta.ndim() != 2) throw InputError("slice_cols: expects 2-d");
    int M = ta.dim(0), N = ta.dim(1);
    if (c0 < 0 || c1 > N || c0 >= c1) throw InputError("slice_cols: bad range");
    int W = c1 - c0;
    Tensor<S> out({M, W});
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < W; ++j) out.at(i, j) = ta.at(i, c0 + j);
    bool ng = G->any_needs({a.i});
    int ia = a.i;
    auto res = G->make(std::move(out), {ia}, ng, nullptr);
    int io = res.i;
    G->node(io).back = [G, io, ia, M, W, c0] {
        if (!G->wants(ia)) return;
        const Tensor<S>& gy = G->g(io);
        Tensor<S>& gp = G->g(ia);
        for (int i = 0; i < M; ++i)
            for (int j = 0; j < W; ++j) gp.at(i, c0 + j) += gy.at(i, j);
    };
    return res;
}

template <class S>
Value<S> concat_cols(const std::vector<Value<S>>& xs) {
    if (xs.empty()) throw InputError("concat_cols: empty list");
    Graph<S>* G = xs[0].G;
    int M = G->v(xs[0].i).dim(0), N = 0;
    std::vector<int> parents;
    for (auto v : xs) {
        detail::check_same_graph(xs[0], v);
        const Tensor<S>& t = G->v(v.i);
        if (t.ndim() != 2 || t.dim(0) != M) throw InputError("concat_cols: row mismatch");
        N += t.dim(1);
        parents.push_back(v.i);
    }
    Tensor<S> out({M, N});
    int off = 0;
    for (auto v : xs) {
        const Tensor<S>& t = G->v(v.i);
        int w = t.dim(1);
        for (int i = 0; i < M; ++i)
            for (int j = 0; j < w; ++j) out.at(i, off + j) = t.at(i, j);
        off += w;
    }
    bool ng = false;
    for (int p : parents) ng = ng || G->node(p).needs_grad;
    auto res = G->make(std::move(out), parents, ng, nullptr);
    int io = res.i;
    std::vector<int> ps = res.G->node(io).parents;
    G->node(io).back = [G, io, ps, M] {
        const Tensor<S>& gy = G->g(io);
        int off = 0;
        for (int p : ps) {
            int w = G->v(p).dim(1);
            if (G->wants(p)) {
                Tensor<S>& gp = G->g(p);
                for (int i = 0; i < M; ++i)
                    for (int j = 0; j < w; ++j) gp.at(i, j) += gy.at(i, off + j);
            }
            off += w;
        }
    };
    return res;
}

template <class S>
Value<S> concat_rows(const std::vector<Value<S>>& xs) {
    if (xs.empty()) throw InputError("concat_rows: empty list");
    Graph<S>* G = xs[0].G;
    int N = G->v(xs[0].i).dim(1), M = 0;
    std::vector<int> parents;
    for (auto v : xs) {
        detail::check_same_graph(xs[0], v);
        const Tensor<S>& t = G->v(v.i);
        if (t.ndim() != 2 || t.dim(1) != N) throw InputError("concat_rows: column mismatch");
        M += t.dim(0);
        parents.push_back(v.i);
    }
    Tensor<S> out({M, N});
    size_t off = 0;
    for (auto v : xs) {
        const Tensor<S>& t = G->v(v.i);
        std::copy(t.data.begin(), t.data.end(), out.data.begin() + off);
        off += t.data.size();
    }
    bool ng = false;
    for (int p : parents) ng = ng || G->node(p).needs_grad;
    auto res = G->make(std::move(out), parents, ng, nullptr);
    int io = res.i;
    std::vector<int> ps = res.G->node(io).parents;
    G->node(io).back = [G, io, ps] {
        const Tensor<S>& gy = G->g(io);
        size_t off = 0;
        for (int p : ps) {
            size_t n = G->v(p).data.size();
            if (G->wants(p)) {
                Tensor<S>& gp = G->g(p);
                for (size_t i = 0; i < n; ++i) gp.data[i] += gy.data[off + i];
            }
            off += n;
        }
    };
    return res;
}

// Slice frame b out of a B x H x W x C batch.
template <class S>
Value<S> frame_slice(Value<S> a, int b) {
    Graph<S>* G = a.G;
    const Tensor<S>& ta = G->v(a.i);
    if (ta.ndim() != 4) throw InputError("frame_slice: expects 4-d");
    int B = ta.dim(0);
    if (b < 0 || b >= B) throw InputError("frame_slice: index out of range");
    size_t block = ta.numel() / B;
    Tensor<S> out({ta.dim(1), ta.dim(2), ta.dim(3)});
    std::copy(ta.data.begin() + b * block, ta.data.begin() + (b + 1) * block, out.data.begin());
    bool ng = G->any_needs({a.i});
    int ia = a.i;
    auto res = G->make(std::move(out), {ia}, ng, nullptr);
    int io = res.i;
    G->node(io).back = [G, io, ia, b, block] {
        if (!G->wants(ia)) return;
        const Tensor<S>& gy = G->g(io);
        Tensor<S>& gp = G->g(ia);
        size_t off = b * block;
        for (size_t i = 0; i < block; ++i) gp.data[off + i] += gy.data[i];
    };
    return res;
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

template <class S>
Value<S> matmul(Value<S> a, Value<S> b) {
    detail::check_same_graph(a, b);
    Graph<S>* G = a.G;
    const Tensor<S>&ta = G->v(a.i), &tb = G->v(b.i);
    if (ta.ndim() != 2 || tb.ndim() != 2 || ta.dim(1) != tb.dim(0))
        throw InputError("matmul: shape mismatch " + ta.shape_str() + " x " + tb.shape_str());
    int M = ta.dim(0), K = ta.dim(1), N = tb.dim(1);
    Tensor<S> out({M, N});
    emap(out, M, N).noalias() = emap(ta, M, K) * emap(tb, K, N);
    bool ng = G->any_needs({a.i, b.i});
    int ia = a.i, ib = b.i;
    auto res = G->make(std::move(out), {ia, ib}, ng, nullptr);
    int io = res.i;
    G->node(io).back = [G, io, ia, ib, M, K, N] {
        const Tensor<S>& gy = G->g(io);
        auto gY = emap(gy, M, N);
        if (G->wants(ia)) emap(G->g(ia), M, K).noalias() += gY * emap(G->v(ib), K, N).transpose();
        if (G->wants(ib)) emap(G->g(ib), K, N).noalias() += emap(G->v(ia), M, K).transpose() * gY;
    };
    return res;
}

// mat (M x N) + row (1 x N), broadcast over rows
template <class S>
Value<S> add_row(Value<S> a, Value<S> r) {
    detail::check_same_graph(a, r);
    Graph<S>* G = a.G;
    const Tensor<S>&ta = G->v(a.i), &tr = G->v(r.i);
    if (ta.ndim() != 2 || tr.ndim() != 2 || tr.dim(0) != 1 || tr.dim(1) != ta.dim(1))
        throw InputError("add_row: shape mismatch");
    int M = ta.dim(0), N = ta.dim(1);
    Tensor<S> out = ta;
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < N; ++j) out.at(i, j) += tr.at(0, j);
    bool ng = G->any_needs({a.i, r.i});
    int ia = a.i, ir = r.i;
    auto res = G->make(std::move(out), {ia, ir}, ng, nullptr);
    int io = res.i;
    G->node(io).back = [G, io, ia, ir, M, N] {
        const Tensor<S>& gy = G->g(io);
        if (G->wants(ia)) {
            Tensor<S>& gp = G->g(ia);
            for (size_t i = 0; i < gp.data.size(); ++i) gp.data[i] += gy.data[i];
        }
        if (G->wants(ir)) {
            Tensor<S>& gp = G->g(ir);
            for (int i = 0; i < M; ++i)
                for (int j = 0; j < N; ++j) gp.at(0, j) += gy.at(i, j);
        }
    };
    return res;
}

template <class S>
Value<S> broadcast_rows(Value<S> r, int M) {
    Graph<S>* G = r.G;
    const Tensor<S>& tr = G->v(r.i);
    if (tr.ndim() != 2 || tr.dim(0) != 1) throw InputError("broadcast_rows: expects 1 x N");
    int N = tr.dim(1);
    Tensor<S> out({M, N});
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < N; ++j) out.at(i, j) = tr.at(0, j);
    bool ng = G->any_needs({r.i});
    int ir = r.i;
    auto res = G->make(std::move(out), {ir}, ng, nullptr);
    int io = res.i;
    G->node(io).back = [G, io, ir, M, N] {
        if (!G->wants(ir)) return;
        const Tensor<S>& gy = G->g(io);
        Tensor<S>& gp = G->g(ir);
        for (int i = 0; i < M; ++i)
            for (int j = 0; j < N; ++j) gp.at(0, j) += gy.at(i, j);
    };
    return res;
}

template <class S>
Value<S> mean_rows(Value<S> a) {
    Graph<S>* G = a.G;
    const Tensor<S>& ta = G->v(a.i);
    if (ta.ndim() != 2) throw InputError("mean_rows: expects 2-d");
    int M = ta.dim(0), N = ta.dim(1);
    Tensor<S> out({1, N});
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < N; ++j) out.at(0, j) += ta.at(i, j);
    for (int j = 0; j < N; ++j) out.at(0, j) /= static_cast<S>(M);
    bool ng = G->any_needs({a.i});
    int ia = a.i;
    auto res = G->make(std::move(out), {ia}, ng, nullptr);
    int io = res.i;
    G->node(io).back = [G, io, ia, M, N] {
        if (!G->wants(ia)) return;
        const Tensor<S>& gy = G->g(io);
        Tensor<S>& gp = G->g(ia);
        for (int i = 0; i < M; ++i)
            for (int j = 0; j < N; ++j) gp.at(i, j) += gy.at(0, j) / static_cast<S>(M);
    };
    return res;
}

template <class S>
Value<S> sum_all(Value<S> a) {
    Graph<S>* G = a.G;
    const Tensor<S>& ta = G->v(a.i);
    Tensor<S> out({1, 1});
    for (const S& x : ta.data) out.data[0] += x;
    bool ng = G->any_needs({a.i});
    int ia = a.i;
    auto res = G->make(std::move(out), {ia}, ng, nullptr);
    int io = res.i;
    G->node(io).back = [G, io, ia] {
        if (!G->wants(ia)) return;
        S gy = G->g(io).data[0];
        Tensor<S>& gp = G->g(ia);
        for (auto& x : gp.data) x += gy;
    };
    return res;
}

template <class S>
Value<S> mean_all(Value<S> a) {
    size_t n = a.G->v(a.i).numel();
    return scale(sum_all(a), 1.0 / static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// normalization / attention primitives
// ---------------------------------------------------------------------------

template <class S>
Value<S> softmax_rows(Value<S> a) {
    Graph<S>* G = a.G;
    const Tensor<S>& ta = G->v(a.i);
    if (ta.ndim() != 2) throw InputError("softmax_rows: expects 2-d");
    int M = ta.dim(0), N = ta.dim(1);
    Tensor<S> out({M, N});
    for (int i = 0; i < M; ++i) {
        S mx = ta.at(i, 0);
        for (int j = 1; j < N; ++j) mx = std::max(mx, ta.at(i, j));
        double z = 0;
        for (int j = 0; j < N; ++j) {
            double e = std::exp(static_cast<double>(ta.at(i, j) - mx));
            out.at(i, j) = static_cast<S>(e);
            z += e;
        }
        for (int j = 0; j < N; ++j) out.at(i, j) = static_cast<S>(out.at(i, j) / z);
    }
    bool ng = G->any_needs({a.i});
    int ia = a.i;
    auto res = G->make(std::move(out), {ia}, ng, nullptr);
    int io = res.i;
    G->node(io).back = [G, io, ia, M, N] {
        if (!G->wants(ia)) return;
        const Tensor<S>&gy = G->g(io), &y = G->v(io);
        Tensor<S>& gp = G->g(ia);
        for (int i = 0; i < M; ++i) {
            double s = 0;
            for (int j = 0; j < N; ++j) s += static_cast<double>(gy.at(i, j)) * y.at(i, j);
            for (int j = 0; j < N; ++j)
                gp.at(i, j) += static_cast<S>(y.at(i, j) * (static_cast<double>(gy.at(i, j)) - s));
        }
    };
    return res;
}

// Per-row layer normalization with affine parameters gamma, beta (1 x N).
template <class S>
Value<S> layernorm_rows(Value<S> x, Value<S> gamma, Value<S> beta, double eps = 1e-5) {
    detail::check_same_graph(x, gamma);
    detail::check_same_graph(x, beta);
    Graph<S>* G = x.G;
    const Tensor<S>&tx = G->v(x.i), &tg = G->v(gamma.i), &tb = G->v(beta.i);
    if (tx.ndim() != 2) throw InputError("layernorm_rows: expects 2-d");
    int M = tx.dim(0), N = tx.dim(1);
    if (tg.dim(0) != 1 || tg.dim(1) != N || tb.dim(0) != 1 || tb.dim(1) != N)
        throw InputError("layernorm_rows: bad gamma/beta shape");
    Tensor<S> out({M, N});
    Tensor<S> xhat({M, N});
    std::vector<S> inv_std(M);
    for (int i = 0; i < M; ++i) {
        double mu = 0;
        for (int j = 0; j < N; ++j) mu += tx.at(i, j);
        mu /= N;
        double var = 0;
        for (int j = 0; j < N; ++j) {
            double d = tx.at(i, j) - mu;
            var += d * d;
        }
        var /= N;
        double is = 1.0 / std::sqrt(var + eps);
        inv_std[i] = static_cast<S>(is);
        for (int j = 0; j < N; ++j) {
            double xh = (tx.at(i, j) - mu) * is;
            xhat.at(i, j) = static_cast<S>(xh);
            out.at(i, j) = static_cast<S>(xh * tg.at(0, j) + tb.at(0, j));
        }
    }
    bool ng = G->any_needs({x.i, gamma.i, beta.i});
    int ix = x.i, ig = gamma.i, ib = beta.i;
    auto res = G->make(std::move(out), {ix, ig, ib}, ng, nullptr);
    int io = res.i;
    G->node(io).back = [G, io, ix, ig, ib, M, N, xh = std::move(xhat), is = std::move(inv_std)] {
        const Tensor<S>& gy = G->g(io);
        const Tensor<S>& tg = G->v(ig);
        if (G->wants(ib)) {
            Tensor<S>& gb = G->g(ib);
            for (int i = 0; i < M; ++i)
                for (int j = 0; j < N; ++j) gb.at(0, j) += gy.at(i, j);
        }
        if (G->wants(ig)) {
            Tensor<S>& gg = G->g(ig);
            for (int i = 0; i < M; ++i)
                for (int j = 0; j < N; ++j) gg.at(0, j) += gy.at(i, j) * xh.at(i, j);
        }
        if (G->wants(ix)) {
            Tensor<S>& gx = G->g(ix);
            for (int i = 0; i < M; ++i) {
                double m1 = 0, m2 = 0;
                for (int j = 0; j < N; ++j) {
                    double dxh = static_cast<double>(gy.at(i, j)) * tg.at(0, j);
                    m1 += dxh;
                    m2 += dxh * xh.at(i, j);
                }
                m1 /= N;
                m2 /= N;
                for (int j = 0; j < N; ++j) {
                    double dxh = static_cast<double>(gy.at(i, j)) * tg.at(0, j);
                    gx.at(i, j) += static_cast<S>((dxh - m1 - xh.at(i, j) * m2) * is[i]);
                }
            }
        }
    };
    return res;
}

// ---------------------------------------------------------------------------
// convolution / pooling
// ---------------------------------------------------------------------------

// x: B x H x W x Cin, w: (kh*kw*Cin) x Cout with row index ((ky*kw)+kx)*Cin+ci,
// b: 1 x Cout. Output B x Ho x Wo x Cout with Ho = floor((H+2p-kh)/s)+1.
template <class S>
Value<S> conv2d(Value<S> x, Value<S> w, Value<S> bias, int kh, int kw, int stride, int pad) {
    detail::check_same_graph(x, w);
    detail::check_same_graph(x, bias);
    Graph<S>* G = x.G;
    const Tensor<S>&tx = G->v(x.i), &tw = G->v(w.i), &tb = G->v(bias.i);
    if (tx.ndim() != 4) throw InputError("conv2d: input must be B x H x W x C");
    int B = tx.dim(0), H = tx.dim(1), W = tx.dim(2), Cin = tx.dim(3);
    if (tw.ndim() != 2 || tw.dim(0) != kh * kw * Cin)
        throw ConfigError("conv2d: weight shape mismatch (" + tw.shape_str() + " for kernel " +
                          std::to_string(kh) + "x" + std::to_string(kw) + "x" + std::to_string(Cin) + ")");
    int Cout = tw.dim(1);
    if (tb.dim(1) != Cout) throw ConfigError("conv2d: bias shape mismatch");
    int Ho = (H + 2 * pad - kh) / stride + 1;
    int Wo = (W + 2 * pad - kw) / stride + 1;
    if (Ho <= 0 || Wo <= 0) throw ConfigError("conv2d: empty output");

    const int R = B * Ho * Wo, Kc = kh * kw * Cin;
    Tensor<S> col({R, Kc});
    size_t r = 0;
    for (int b = 0; b < B; ++b)
        for (int oy = 0; oy < Ho; ++oy)
            for (int ox = 0; ox < Wo; ++ox, ++r) {
                S* dst = &col.data[r * Kc];
                for (int ky = 0; ky < kh; ++ky) {
                    int iy = oy * stride - pad + ky;
                    for (int kx = 0; kx < kw; ++kx) {
                        int ix = ox * stride - pad + kx;
                        S* cell = dst + (ky * kw + kx) * Cin;
                        if (iy < 0 || iy >= H || ix < 0 || ix >= W) {
                            std::fill(cell, cell + Cin, S(0));
                        } else {
                            const S* src = &tx.data[((static_cast<size_t>(b) * H + iy) * W + ix) * Cin];
                            std::copy(src, src + Cin, cell);
                        }
                    }
                }
            }

    Tensor<S> out({B, Ho, Wo, Cout});
    emap(out, R, Cout).noalias() = emap(col, R, Kc) * emap(tw, Kc, Cout);
    for (int rr = 0; rr < R; ++rr)
        for (int c = 0; c < Cout; ++c) out.data[static_cast<size_t>(rr) * Cout + c] += tb.at(0, c);

    bool ng = G->any_needs({x.i, w.i, bias.i});
    int ix = x.i, iw = w.i, ib = bias.i;
    auto res = G->make(std::move(out), {ix, iw, ib}, ng, nullptr);
    int io = res.i;
    G->node(io).back = [G, io, ix, iw, ib, B, H, W, Cin, Cout, Ho, Wo, kh, kw, stride, pad, R, Kc,
                        colv = std::move(col)] {
        const Tensor<S>& gy = G->g(io);
        auto gY = emap(gy, R, Cout);
        if (G->wants(ib)) {
            Tensor<S>& gb = G->g(ib);
            for (int rr = 0; rr < R; ++rr)
                for (int c = 0; c < Cout; ++c) gb.at(0, c) += gy.data[static_cast<size_t>(rr) * Cout + c];
        }
        if (G->wants(iw)) emap(G->g(iw), Kc, Cout).noalias() += emap(colv, R, Kc).transpose() * gY;
        if (G->wants(ix)) {
            Tensor<S> dcol({R, Kc});
            emap(dcol, R, Kc).noalias() = gY * emap(G->v(iw), Kc, Cout).transpose();
            Tensor<S>& gx = G->g(ix);
            size_t r = 0;
            for (int b = 0; b < B; ++b)
                for (int oy = 0; oy < Ho; ++oy)
                    for (int ox = 0; ox < Wo; ++ox, ++r) {
                        const S* src = &dcol.data[r * Kc];
                        for (int ky = 0; ky < kh; ++ky) {
                            int iy = oy * stride - pad + ky;
                            if (iy < 0 || iy >= H) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                int ixx = ox * stride - pad + kx;
                                if (ixx < 0 || ixx >= W) continue;
                                S* dst = &gx.data[((static_cast<size_t>(b) * H + iy) * W + ixx) * Cin];
                                const S* cell = src + (ky * kw + kx) * Cin;
                                for (int c = 0; c < Cin; ++c) dst[c] += cell[c];
                            }
                        }
                    }
        }
    };
    return res;
}

// 2x2 average pooling with ceil semantics; partial windows average over the
// cells actually covered.
template <class S>
Value<S> avg_pool2(Value<S> x) {
    Graph<S>* G = x.G;
    const Tensor<S>& tx = G->v(x.i);
    if (tx.ndim() != 3) throw InputError("avg_pool2: expects H x W x C");
    int H = tx.dim(0), W = tx.dim(1), C = tx.dim(2);
    int Ho = (H + 1) / 2, Wo = (W + 1) / 2;
    Tensor<S> out({Ho, Wo, C});
    for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
            int y1 = std::min(2 * oy + 2, H), x1 = std::min(2 * ox + 2, W);
            int cnt = (y1 - 2 * oy) * (x1 - 2 * ox);
            for (int c = 0; c < C; ++c) {
                double s = 0;
                for (int iy = 2 * oy; iy < y1; ++iy)
                    for (int ix = 2 * ox; ix < x1; ++ix) s += tx.at(iy, ix, c);
                out.at(oy, ox, c) = static_cast<S>(s / cnt);
            }
        }
    bool ng = G->any_needs({x.i});
    int ix = x.i;
    auto res = G->make(std::move(out), {ix}, ng, nullptr);
    int io = res.i;
    G->node(io).back = [G, io, ix, H, W, C, Ho, Wo] {
        if (!G->wants(ix)) return;
        const Tensor<S>& gy = G->g(io);
        Tensor<S>& gx = G->g(ix);
        for (int oy = 0; oy < Ho; ++oy)
            for (int ox = 0; ox < Wo; ++ox) {
                int y1 = std::min(2 * oy + 2, H), x1 = std::min(2 * ox + 2, W);
                S cnt = static_cast<S>((y1 - 2 * oy) * (x1 - 2 * ox));
                for (int c = 0; c < C; ++c) {
                    S g = gy.at(oy, ox, c) / cnt;
                    for (int iy = 2 * oy; iy < y1; ++iy)
                        for (int ix2 = 2 * ox; ix2 < x1; ++ix2) gx.at(iy, ix2, c) += g;
                }
            }
    };
    return res;
}

// ---------------------------------------------------------------------------
// sampling / correlation
// ---------------------------------------------------------------------------

namespace detail {

// Bilinear weights for a clamped continuous coordinate. Returns corner
// indices, fractional weights, and whether the coordinate sits strictly
// inside (so the derivative w.r.t. the coordinate is nonzero).
struct BilinAxis {
    int i0, i1;
    double w;       // fraction toward i1
    bool interior;  // clamp inactive
};

inline BilinAxis bilin_axis(double x, int n) {
    BilinAxis a;
    double xc = std::min(std::max(x, 0.0), static_cast<double>(n - 1));
    a.interior = (x > 0.0 && x < static_cast<double>(n - 1));
    a.i0 = std::min(static_cast<int>(std::floor(xc)), std::max(n - 2, 0));
    a.i1 = std::min(a.i0 + 1, n - 1);
    a.w = xc - a.i0;
    return a;
}

}  // namespace detail

// grid: H x W x C, coords: M x 2 as (x, y) in grid units. Coordinates are
// clamped to the grid border before sampling; the clamp contributes zero
// derivative outside the border.
template <class S>
Value<S> bilinear_sample(Value<S> grid, Value<S> coords) {
    detail::check_same_graph(grid, coords);
    Graph<S>* G = grid.G;
    const Tensor<S>&tg = G->v(grid.i), &tc = G->v(coords.i);
    if (tg.ndim() != 3) throw InputError("bilinear_sample: grid must be H x W x C");
    if (tc.ndim() != 2 || tc.dim(1) != 2) throw InputError("bilinear_sample: coords must be M x 2");
    int H = tg.dim(0), W = tg.dim(1), C = tg.dim(2), M = tc.dim(0);
    Tensor<S> out({M, C});
    for (int m = 0; m < M; ++m) {
        auto ax = detail::bilin_axis(tc.at(m, 0), W);
        auto ay = detail::bilin_axis(tc.at(m, 1), H);
        for (int c = 0; c < C; ++c) {
            double v00 = tg.at(ay.i0, ax.i0, c), v01 = tg.at(ay.i0, ax.i1, c);
            double v10 = tg.at(ay.i1, ax.i0, c), v11 = tg.at(ay.i1, ax.i1, c);
            out.at(m, c) = static_cast<S>((1 - ay.w) * ((1 - ax.w) * v00 + ax.w * v01) +
                                          ay.w * ((1 - ax.w) * v10 + ax.w * v11));
        }
    }
    bool ng = G->any_needs({grid.i, coords.i});
    int ig = grid.i, ic = coords.i;
    auto res = G->make(std::move(out), {ig, ic}, ng, nullptr);
    int io = res.i;
    G->node(io).back = [G, io, ig, ic, H, W, C, M] {
        const Tensor<S>& gy = G->g(io);
        const Tensor<S>&tg = G->v(ig), &tc = G->v(ic);
        bool wg = G->wants(ig), wc = G->wants(ic);
        for (int m = 0; m < M; ++m) {
            auto ax = detail::bilin_axis(tc.at(m, 0), W);
            auto ay = detail::bilin_axis(tc.at(m, 1), H);
            double dx = 0, dy = 0;
            for (int c = 0; c < C; ++c) {
                double gyc = gy.at(m, c);
                if (wg) {
                    Tensor<S>& gg = G->g(ig);
                    gg.at(ay.i0, ax.i0, c) += static_cast<S>(gyc * (1 - ay.w) * (1 - ax.w));
                    gg.at(ay.i0, ax.i1, c) += static_cast<S>(gyc * (1 - ay.w) * ax.w);
                    gg.at(ay.i1, ax.i0, c) += static_cast<S>(gyc * ay.w * (1 - ax.w));
                    gg.at(ay.i1, ax.i1, c) += static_cast<S>(gyc * ay.w * ax.w);
                }
                if (wc) {
                    double v00 = tg.at(ay.i0, ax.i0, c), v01 = tg.at(ay.i0, ax.i1, c);
                    double v10 = tg.at(ay.i1, ax.i0, c), v11 = tg.at(ay.i1, ax.i1, c);
                    dx += gyc * ((1 - ay.w) * (v01 - v00) + ay.w * (v11 - v10));
                    dy += gyc * ((1 - ax.w) * (v10 - v00) + ax.w * (v11 - v01));
                }
            }
            if (wc) {
                Tensor<S>& gc = G->g(ic);
                if (ax.interior) gc.at(m, 0) += static_cast<S>(dx);
                if (ay.interior) gc.at(m, 1) += static_cast<S>(dy);
            }
        }
    };
    return res;
}

// Local correlation patch: for each row m and each offset (dy, dx) in the
// (2r+1)^2 square, bilinearly sample the grid at centers[m] + offset and
// output the cosine similarity with qfeat[m]. Offsets are raveled row-major
// over dy then dx. Norms are floored at `norm_floor` so degenerate features
// stay finite and differentiable.
template <class S>
Value<S> corr_patch(Value<S> grid, Value<S> centers, Value<S> qfeat, int r,
                    double norm_floor = 1e-6) {
    detail::check_same_graph(grid, centers);
    detail::check_same_graph(grid, qfeat);
    Graph<S>* G = grid.G;
    const Tensor<S>&tg = G->v(grid.i), &tc = G->v(centers.i), &tq = G->v(qfeat.i);
    if (tg.ndim() != 3) throw InputError("corr_patch: grid must be H x W x C");
    int H = tg.dim(0), W = tg.dim(1), C = tg.dim(2);
    int M = tc.dim(0), D = 2 * r + 1, O = D * D;
    if (tq.dim(0) != M || tq.dim(1) != C) throw InputError("corr_patch: qfeat must be M x C");

    Tensor<S> out({M, O});
    std::vector<double> vbuf(C);
    for (int m = 0; m < M; ++m) {
        double nu = 0;
        for (int c = 0; c < C; ++c) nu += static_cast<double>(tq.at(m, c)) * tq.at(m, c);
        double au = std::max(std::sqrt(nu), norm_floor);
        for (int o = 0; o < O; ++o) {
            int dy = o / D - r, dx = o % D - r;
            auto ax = detail::bilin_axis(static_cast<double>(tc.at(m, 0)) + dx, W);
            auto ay = detail::bilin_axis(static_cast<double>(tc.at(m, 1)) + dy, H);
            double dot = 0, nv = 0;
            for (int c = 0; c < C; ++c) {
                double v = (1 - ay.w) * ((1 - ax.w) * tg.at(ay.i0, ax.i0, c) + ax.w * tg.at(ay.i0, ax.i1, c)) +
                           ay.w * ((1 - ax.w) * tg.at(ay.i1, ax.i0, c) + ax.w * tg.at(ay.i1, ax.i1, c));
                vbuf[c] = v;
                dot += v * tq.at(m, c);
                nv += v * v;
            }
            double av = std::max(std::sqrt(nv), norm_floor);
            out.at(m, o) = static_cast<S>(dot / (au * av));
        }
    }

    bool ng = G->any_needs({grid.i, centers.i, qfeat.i});
    int ig = grid.i, ic = centers.i, iq = qfeat.i;
    auto res = G->make(std::move(out), {ig, ic, iq}, ng, nullptr);
    int io = res.i;
    G->node(io).back = [G, io, ig, ic, iq, H, W, C, M, D, O, r, norm_floor] {
        const Tensor<S>& gy = G->g(io);
        const Tensor<S>&tg = G->v(ig), &tc = G->v(ic), &tq = G->v(iq);
        bool wgrid = G->wants(ig), wcent = G->wants(ic), wq = G->wants(iq);
        std::vector<double> vbuf(C), dvbuf(C);
        for (int m = 0; m < M; ++m) {
            double nu = 0;
            for (int c = 0; c < C; ++c) nu += static_cast<double>(tq.at(m, c)) * tq.at(m, c);
            double nrm_u = std::sqrt(nu);
            double au = std::max(nrm_u, norm_floor);
            for (int o = 0; o < O; ++o) {
                double gys = gy.at(m, o);
                if (gys == 0) continue;
                int dy = o / D - r, dx = o % D - r;
                auto ax = detail::bilin_axis(static_cast<double>(tc.at(m, 0)) + dx, W);
                auto ay = detail::bilin_axis(static_cast<double>(tc.at(m, 1)) + dy, H);
                double dot = 0, nv = 0;
                for (int c = 0; c < C; ++c) {
                    double v = (1 - ay.w) * ((1 - ax.w) * tg.at(ay.i0, ax.i0, c) + ax.w * tg.at(ay.i0, ax.i1, c)) +
                               ay.w * ((1 - ax.w) * tg.at(ay.i1, ax.i0, c) + ax.w * tg.at(ay.i1, ax.i1, c));
                    vbuf[c] = v;
                    dot += v * tq.at(m, c);
                    nv += v * v;
                }
                double nrm_v = std::sqrt(nv);
                double av = std::max(nrm_v, norm_floor);
                double s = dot / (au * av);
                if (wq) {
                    Tensor<S>& gq = G->g(iq);
                    for (int c = 0; c < C; ++c) {
                        double d = vbuf[c] / (au * av);
                        if (nrm_u > norm_floor) d -= s * tq.at(m, c) / (au * au);
                        gq.at(m, c) += static_cast<S>(gys * d);
                    }
                }
                if (wgrid || wcent) {
                    for (int c = 0; c < C; ++c) {
                        double d = tq.at(m, c) / (au * av);
                        if (nrm_v > norm_floor) d -= s * vbuf[c] / (av * av);
                        dvbuf[c] = gys * d;
                    }
                    if (wgrid) {
                        Tensor<S>& gg = G->g(ig);
                        for (int c = 0; c < C; ++c) {
                            double d = dvbuf[c];
                            gg.at(ay.i0, ax.i0, c) += static_cast<S>(d * (1 - ay.w) * (1 - ax.w));
                            gg.at(ay.i0, ax.i1, c) += static_cast<S>(d * (1 - ay.w) * ax.w);
                            gg.at(ay.i1, ax.i0, c) += static_cast<S>(d * ay.w * (1 - ax.w));
                            gg.at(ay.i1, ax.i1, c) += static_cast<S>(d * ay.w * ax.w);
                        }
                    }
                    if (wcent) {
                        double gx = 0, gyy = 0;
                        for (int c = 0; c < C; ++c) {
                            double v00 = tg.at(ay.i0, ax.i0, c), v01 = tg.at(ay.i0, ax.i1, c);
                            double v10 = tg.at(ay.i1, ax.i0, c), v11 = tg.at(ay.i1, ax.i1, c);
                            gx += dvbuf[c] * ((1 - ay.w) * (v01 - v00) + ay.w * (v11 - v10));
                            gyy += dvbuf[c] * ((1 - ax.w) * (v10 - v00) + ax.w * (v11 - v01));
                        }
                        Tensor<S>& gc = G->g(ic);
                        if (ax.interior) gc.at(m, 0) += static_cast<S>(gx);
                        if (ay.interior) gc.at(m, 1) += static_cast<S>(gyy);
                    }
                }
            }
        }
    };
    return res;
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

// Weighted mean of per-row L1 distances: sum_m w_m * (|dx| + |dy|) / sum_m w_m.
// gt and weights are constants. Returns 0 when all weights vanish.
template <class S>
Value<S> l1_weighted_mean(Value<S> pred, const Tensor<S>& gt, const Tensor<S>& w) {
    Graph<S>* G = pred.G;
    const Tensor<S>& tp = G->v(pred.i);
    if (tp.ndim() != 2 || tp.dim(1) != 2) throw InputError("l1_weighted_mean: pred must be M x 2");
    int M = tp.dim(0);
    if (!gt.same_shape(tp) || w.numel() != static_cast<size_t>(M))
        throw InputError("l1_weighted_mean: shape mismatch");
    double wsum = 0;
    for (int m = 0; m < M; ++m) wsum += w.data[m];
    Tensor<S> out({1, 1});
    if (wsum > 0) {
        double s = 0;
        for (int m = 0; m < M; ++m)
            s += w.data[m] * (std::abs(static_cast<double>(tp.at(m, 0) - gt.at(m, 0))) +
                              std::abs(static_cast<double>(tp.at(m, 1) - gt.at(m, 1))));
        out.data[0] = static_cast<S>(s / wsum);
    }
    bool ng = G->any_needs({pred.i});
    int ip = pred.i;
    auto res = G->make(std::move(out), {ip}, ng, nullptr);
    int io = res.i;
    G->node(io).back = [G, io, ip, M, wsum, gt, w] {
        if (!G->wants(ip) || wsum <= 0) return;
        double gy = G->g(io).data[0];
        const Tensor<S>& tp = G->v(ip);
        Tensor<S>& gp = G->g(ip);
        for (int m = 0; m < M; ++m)
            for (int k = 0; k < 2; ++k) {
                double d = tp.at(m, k) - gt.at(m, k);
                double sg = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
                gp.at(m, k) += static_cast<S>(gy * w.data[m] * sg / wsum);
            }
    };
    return res;
}

// Numerically stable weighted-mean binary cross entropy on logits:
// sum w * [max(l,0) - l*t + log(1+exp(-|l|))] / sum w.
template <class S>
Value<S> bce_logits_weighted_mean(Value<S> logits, const Tensor<S>& targets, const Tensor<S>& w) {
    Graph<S>* G = logits.G;
    const Tensor<S>& tl = G->v(logits.i);
    if (!targets.same_shape(tl) || !w.same_shape(tl))
        throw InputError("bce_logits_weighted_mean: shape mismatch");
    double wsum = 0;
    for (const S& x : w.data) wsum += x;
    Tensor<S> out({1, 1});
    if (wsum > 0) {
        double s = 0;
        for (size_t i = 0; i < tl.data.size(); ++i) {
            double l = tl.data[i], t = targets.data[i];
            s += w.data[i] * (std::max(l, 0.0) - l * t + std::log1p(std::exp(-std::abs(l))));
        }
        out.data[0] = static_cast<S>(s / wsum);
    }
    bool ng = G->any_needs({logits.i});
    int il = logits.i;
    auto res = G->make(std::move(out), {il}, ng, nullptr);
    int io = res.i;
    G->node(io).back = [G, io, il, wsum, targets, w] {
        if (!G->wants(il) || wsum <= 0) return;
        double gy = G->g(io).data[0];
        const Tensor<S>& tl = G->v(il);
        Tensor<S>& gp = G->g(il);
        for (size_t i = 0; i < tl.data.size(); ++i) {
            double sig = 1.0 / (1.0 + std::exp(-static_cast<double>(tl.data[i])));
            gp.data[i] += static_cast<S>(gy * w.data[i] * (sig - targets.data[i]) / wsum);
        }
    };
    return res;
}

template <class S>
Value<S> operator+(Value<S> a, Value<S> b) {
    return add(a, b);
}
template <class S>
Value<S> operator-(Value<S> a, Value<S> b) {
    return sub(a, b);
}
template <class S>
Value<S> operator*(Value<S> a, Value<S> b) {
    return mul(a, b);
}

}  // namespace alt
