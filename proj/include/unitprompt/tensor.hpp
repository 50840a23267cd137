#pragma once

#include <cstddef>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "common.hpp"
#include "rng.hpp"

namespace unitprompt {

// Dense row-major tensor. Rank is 1 or 2; every model quantity is a matrix
// and per-example graphs never carry a batch axis.
template <typename S>
struct Tensor {
    std::vector<int> shape;
    std::vector<S> v;
    std::vector<S> g;
    bool trainable = false;
    bool needs_grad = false;
    std::string name;
    const void* producer = nullptr;

    size_t numel() const {
        size_t n = 1;
        for (int d : shape) n *= static_cast<size_t>(d);
        return n;
    }
    int rank() const { return static_cast<int>(shape.size()); }
    int rows() const { return shape.at(0); }
    int cols() const { return rank() == 2 ? shape[1] : 1; }

    void ensure_grad() {
        if (g.size() != v.size()) g.assign(v.size(), S(0));
    }
    void zero_grad() {
        if (!g.empty()) g.assign(g.size(), S(0));
    }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
};

template <typename S>
using TensorPtr = std::shared_ptr<Tensor<S>>;

template <typename S>
TensorPtr<S> make_tensor(std::vector<int> shape, std::vector<S> values, bool trainable = false,
                         std::string name = "") {
    auto t = std::make_shared<Tensor<S>>();
    size_t n = 1;
    for (int d : shape) {
        require(d > 0, format_msg("make_tensor: non-positive dimension in shape for '", name, "'"));
        n *= static_cast<size_t>(d);
    }
    require(shape.size() == 1 || shape.size() == 2,
            format_msg("make_tensor: rank must be 1 or 2, got ", shape.size()));
    require(values.size() == n, format_msg("make_tensor: ", values.size(), " values for shape of ",
                                           n, " elements ('", name, "')"));
    t->shape = std::move(shape);
    t->v = std::move(values);
    t->trainable = trainable;
    t->needs_grad = trainable;
    t->name = std::move(name);
    return t;
}

template <typename S>
TensorPtr<S> make_zeros(std::vector<int> shape, bool trainable = false, std::string name = "") {
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    return make_tensor<S>(std::move(shape), std::vector<S>(n, S(0)), trainable, std::move(name));
}

template <typename S>
TensorPtr<S> make_normal(std::vector<int> shape, Rng& rng, double stddev, bool trainable = false,
                         std::string name = "") {
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    std::vector<S> vals(n);
    for (size_t i = 0; i < n; ++i) vals[i] = static_cast<S>(rng.normal(0.0, stddev));
    return make_tensor<S>(std::move(shape), std::move(vals), trainable, std::move(name));
}

template <typename S>
bool same_shape(const Tensor<S>& a, const Tensor<S>& b) {
    return a.shape == b.shape;
}

}  // namespace unitprompt
