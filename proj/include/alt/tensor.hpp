#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "alt/util.hpp"

namespace alt {

// Dense row-major n-d tensor with value semantics. Shapes are small vectors
// of ints; data is contiguous. All layouts in this library are channel-last
// (e.g. frames are H x W x 3, feature grids H' x W' x d).
template <class S>
struct Tensor {
    std::vector<int> shape;
    std::vector<S> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> sh) : shape(std::move(sh)), data(count(shape), S(0)) {}

    static size_t count(const std::vector<int>& sh) {
        size_t n = 1;
        for (int d : sh) {
            if (d < 0) throw InputError("tensor: negative dimension");
            n *= static_cast<size_t>(d);
        }
        return n;
    }

    static Tensor zeros(std::vector<int> sh) { return Tensor(std::move(sh)); }

    static Tensor full(std::vector<int> sh, S v) {
        Tensor t(std::move(sh));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    static Tensor from(std::vector<int> sh, std::vector<S> v) {
        if (count(sh) != v.size()) throw InputError("tensor: data size does not match shape");
        Tensor t;
        t.shape = std::move(sh);
        t.data = std::move(v);
        return t;
    }

    size_t numel() const { return data.size(); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    S& operator[](size_t i) { return data[i]; }
    const S& operator[](size_t i) const { return data[i]; }

    // 2-d / 3-d / 4-d accessors; row-major.
    S& at(int i, int j) { return data[static_cast<size_t>(i) * shape[1] + j]; }
    const S& at(int i, int j) const { return data[static_cast<size_t>(i) * shape[1] + j]; }
    S& at(int i, int j, int k) {
        return data[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
    }
    const S& at(int i, int j, int k) const {
        return data[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
    }
    S& at(int i, int j, int k, int l) {
        return data[((static_cast<size_t>(i) * shape[1] + j) * shape[2] + k) * shape[3] + l];
    }
    const S& at(int i, int j, int k, int l) const {
        return data[((static_cast<size_t>(i) * shape[1] + j) * shape[2] + k) * shape[3] + l];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    Tensor reshaped(std::vector<int> sh) const {
        if (count(sh) != numel()) throw InputError("reshape: element count mismatch");
        Tensor t;
        t.shape = std::move(sh);
        t.data = data;
        return t;
    }

    bool all_finite() const {
        for (const S& v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    S max_abs() const {
        S m = 0;
        for (const S& v : data) m = std::max(m, static_cast<S>(std::abs(static_cast<double>(v))));
        return m;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << "[";
        for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
        os << "]";
        return os.str();
    }
};

template <class To, class From>
Tensor<To> cast_tensor(const Tensor<From>& a) {
    Tensor<To> t;
    t.shape = a.shape;
    t.data.resize(a.data.size());
    for (size_t i = 0; i < a.data.size(); ++i) t.data[i] = static_cast<To>(a.data[i]);
    return t;
}

template <class S>
S max_abs_diff(const Tensor<S>& a, const Tensor<S>& b) {
    if (!a.same_shape(b)) throw InputError("max_abs_diff: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    S m = 0;
    for (size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, static_cast<S>(std::abs(static_cast<double>(a.data[i] - b.data[i]))));
    return m;
}

}  // namespace alt
