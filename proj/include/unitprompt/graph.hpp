#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "tensor.hpp"

namespace unitprompt {
namespace detail {

// C += op(A) * op(B) where the _nn/_nt/_tn/_tt suffix says which operands are
// stored transposed. Logical product is [m x k] * [k x n]. The loop orders
// keep the innermost stride 1.
template <typename S>
void mm_nn(const S* a, const S* b, S* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        S* ci = c + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            S aip = a[static_cast<size_t>(i) * k + p];
            const S* bp = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
}

template <typename S>
void mm_nt(const S* a, const S* b, S* c, int m, int k, int n) {
    // b stored [n x k]
    for (int i = 0; i < m; ++i) {
        const S* ai = a + static_cast<size_t>(i) * k;
        S* ci = c + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const S* bj = b + static_cast<size_t>(j) * k;
            S acc = S(0);
            for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
            ci[j] += acc;
        }
    }
}

template <typename S>
void mm_tn(const S* a, const S* b, S* c, int m, int k, int n) {
    // a stored [k x m]
    for (int p = 0; p < k; ++p) {
        const S* ap = a + static_cast<size_t>(p) * m;
        const S* bp = b + static_cast<size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            S api = ap[i];
            S* ci = c + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) ci[j] += api * bp[j];
        }
    }
}

template <typename S>
void mm_tt(const S* a, const S* b, S* c, int m, int k, int n) {
    // a stored [k x m], b stored [n x k]
    for (int i = 0; i < m; ++i) {
        S* ci = c + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const S* bj = b + static_cast<size_t>(j) * k;
            S acc = S(0);
            for (int p = 0; p < k; ++p) acc += a[static_cast<size_t>(p) * m + i] * bj[p];
            ci[j] += acc;
        }
    }
}

template <typename S>
void mm_dispatch(const S* a, const S* b, S* c, int m, int k, int n, bool ta, bool tb) {
    if (!ta && !tb) mm_nn(a, b, c, m, k, n);
    else if (!ta && tb) mm_nt(a, b, c, m, k, n);
    else if (ta && !tb) mm_tn(a, b, c, m, k, n);
    else mm_tt(a, b, c, m, k, n);
}

template <typename S>
S gelu_value(S x) {
    return S(0.5) * x * (S(1) + std::erf(x * S(0.70710678118654752440)));
}

template <typename S>
S gelu_slope(S x) {
    S cdf = S(0.5) * (S(1) + std::erf(x * S(0.70710678118654752440)));
    S pdf = std::exp(S(-0.5) * x * x) * S(0.39894228040143267794);
    return cdf + x * pdf;
}

}  // namespace detail

// Records the reverse pass while computing forward values eagerly. One graph
// per training example; gradients accumulate into leaf tensors so a fresh
// graph per example still sums over a batch.
template <typename S>
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // out = op(a) * op(b); trans_a / trans_b transpose the stored operand.
    TensorPtr<S> matmul(const TensorPtr<S>& a, const TensorPtr<S>& b, bool trans_a = false,
                        bool trans_b = false) {
        check_rank2(a, "matmul");
        check_rank2(b, "matmul");
        int m = trans_a ? a->shape[1] : a->shape[0];
        int ka = trans_a ? a->shape[0] : a->shape[1];
        int kb = trans_b ? b->shape[1] : b->shape[0];
        int n = trans_b ? b->shape[0] : b->shape[1];
        require(ka == kb, format_msg("matmul: inner dimensions ", ka, " vs ", kb, " (", a->shape_str(),
                                     trans_a ? "^T" : "", " * ", b->shape_str(), trans_b ? "^T" : "", ")"));
        auto out = node({m, n}, a->needs_grad || b->needs_grad);
        detail::mm_dispatch(a->v.data(), b->v.data(), out->v.data(), m, ka, n, trans_a, trans_b);
        if (out->needs_grad) {
            tape_.push_back([a, b, out, m, k = ka, n, trans_a, trans_b]() {
                const S* dc = out->g.data();
                if (a->needs_grad) {
                    a->ensure_grad();
                    // dA = dC * op(B)^T, transposed into a's storage when trans_a.
                    if (!trans_a) {
                        detail::mm_dispatch(dc, b->v.data(), a->g.data(), m, n, k, false, !trans_b);
                    } else if (!trans_b) {
                        detail::mm_nt(b->v.data(), dc, a->g.data(), k, n, m);
                    } else {
                        detail::mm_tt(b->v.data(), dc, a->g.data(), k, n, m);
                    }
                }
                if (b->needs_grad) {
                    b->ensure_grad();
                    // dB = op(A)^T * dC, transposed into b's storage when trans_b.
                    if (!trans_b) {
                        detail::mm_dispatch(a->v.data(), dc, b->g.data(), k, m, n, !trans_a, false);
                    } else if (!trans_a) {
                        detail::mm_tn(dc, a->v.data(), b->g.data(), n, m, k);
                    } else {
                        detail::mm_tt(dc, a->v.data(), b->g.data(), n, m, k);
                    }
                }
            });
        }
        return out;
    }

    TensorPtr<S> add(const TensorPtr<S>& a, const TensorPtr<S>& b) {
        require(same_shape(*a, *b), format_msg("add: shape mismatch ", a->shape_str(), " vs ", b->shape_str()));
        auto out = node(a->shape, a->needs_grad || b->needs_grad);
        for (size_t i = 0; i < out->v.size(); ++i) out->v[i] = a->v[i] + b->v[i];
        if (out->needs_grad) {
            tape_.push_back([a, b, out]() {
                if (a->needs_grad) {
                    a->ensure_grad();
                    for (size_t i = 0; i < out->g.size(); ++i) a->g[i] += out->g[i];
                }
                if (b->needs_grad) {
                    b->ensure_grad();
                    for (size_t i = 0; i < out->g.size(); ++i) b->g[i] += out->g[i];
                }
            });
        }
        return out;
    }

    TensorPtr<S> multiply(const TensorPtr<S>& a, const TensorPtr<S>& b) {
        require(same_shape(*a, *b),
                format_msg("multiply: shape mismatch ", a->shape_str(), " vs ", b->shape_str()));
        auto out = node(a->shape, a->needs_grad || b->needs_grad);
        for (size_t i = 0; i < out->v.size(); ++i) out->v[i] = a->v[i] * b->v[i];
        if (out->needs_grad) {
            tape_.push_back([a, b, out]() {
                if (a->needs_grad) {
                    a->ensure_grad();
                    for (size_t i = 0; i < out->g.size(); ++i) a->g[i] += out->g[i] * b->v[i];
                }
                if (b->needs_grad) {
                    b->ensure_grad();
                    for (size_t i = 0; i < out->g.size(); ++i) b->g[i] += out->g[i] * a->v[i];
                }
            });
        }
        return out;
    }

    TensorPtr<S> scale(const TensorPtr<S>& a, S c) {
        auto out = node(a->shape, a->needs_grad);
        for (size_t i = 0; i < out->v.size(); ++i) out->v[i] = a->v[i] * c;
        if (out->needs_grad) {
            tape_.push_back([a, out, c]() {
                a->ensure_grad();
                for (size_t i = 0; i < out->g.size(); ++i) a->g[i] += out->g[i] * c;
            });
        }
        return out;
    }

    TensorPtr<S> concat_rows(const TensorPtr<S>& a, const TensorPtr<S>& b) {
        check_rank2(a, "concat_rows");
        check_rank2(b, "concat_rows");
        require(a->shape[1] == b->shape[1], format_msg("concat_rows: column mismatch ", a->shape_str(),
                                                       " vs ", b->shape_str()));
        int ra = a->shape[0], rb = b->shape[0], c = a->shape[1];
        auto out = node({ra + rb, c}, a->needs_grad || b->needs_grad);
        std::copy(a->v.begin(), a->v.end(), out->v.begin());
        std::copy(b->v.begin(), b->v.end(), out->v.begin() + a->v.size());
        if (out->needs_grad) {
            tape_.push_back([a, b, out]() {
                if (a->needs_grad) {
                    a->ensure_grad();
                    for (size_t i = 0; i < a->g.size(); ++i) a->g[i] += out->g[i];
                }
                if (b->needs_grad) {
                    b->ensure_grad();
                    size_t off = a->v.size();
                    for (size_t i = 0; i < b->g.size(); ++i) b->g[i] += out->g[off + i];
                }
            });
        }
        return out;
    }

    // Rows [begin, end) of a.
    TensorPtr<S> slice_rows(const TensorPtr<S>& a, int begin, int end) {
        check_rank2(a, "slice_rows");
        require(0 <= begin && begin < end && end <= a->shape[0],
                format_msg("slice_rows: range [", begin, ", ", end, ") out of bounds for ", a->shape_str()));
        int c = a->shape[1];
        auto out = node({end - begin, c}, a->needs_grad);
        std::copy(a->v.begin() + static_cast<size_t>(begin) * c,
                  a->v.begin() + static_cast<size_t>(end) * c, out->v.begin());
        if (out->needs_grad) {
            tape_.push_back([a, out, begin, c]() {
                a->ensure_grad();
                size_t off = static_cast<size_t>(begin) * c;
                for (size_t i = 0; i < out->g.size(); ++i) a->g[off + i] += out->g[i];
            });
        }
        return out;
    }

    // Row-wise softmax over the last axis. mask, when given, is added to the
    // inputs first; entries of -1e9 silence a position without branching.
    TensorPtr<S> softmax_rows(const TensorPtr<S>& a, const std::vector<S>* mask = nullptr) {
        check_rank2(a, "softmax_rows");
        if (mask)
            require(mask->size() == a->v.size(),
                    format_msg("softmax_rows: mask size ", mask->size(), " vs tensor ", a->shape_str()));
        int r = a->shape[0], c = a->shape[1];
        auto out = node(a->shape, a->needs_grad);
        for (int i = 0; i < r; ++i) {
            const S* xi = a->v.data() + static_cast<size_t>(i) * c;
            const S* mi = mask ? mask->data() + static_cast<size_t>(i) * c : nullptr;
            S* yi = out->v.data() + static_cast<size_t>(i) * c;
            S mx = xi[0] + (mi ? mi[0] : S(0));
            for (int j = 1; j < c; ++j) {
                S z = xi[j] + (mi ? mi[j] : S(0));
                if (z > mx) mx = z;
            }
            S sum = S(0);
            for (int j = 0; j < c; ++j) {
                S z = std::exp(xi[j] + (mi ? mi[j] : S(0)) - mx);
                yi[j] = z;
                sum += z;
            }
            S inv = S(1) / sum;
            for (int j = 0; j < c; ++j) yi[j] *= inv;
        }
        if (out->needs_grad) {
            tape_.push_back([a, out, r, c]() {
                a->ensure_grad();
                for (int i = 0; i < r; ++i) {
                    const S* yi = out->v.data() + static_cast<size_t>(i) * c;
                    const S* dyi = out->g.data() + static_cast<size_t>(i) * c;
                    S* dxi = a->g.data() + static_cast<size_t>(i) * c;
                    S dot = S(0);
                    for (int j = 0; j < c; ++j) dot += dyi[j] * yi[j];
                    for (int j = 0; j < c; ++j) dxi[j] += yi[j] * (dyi[j] - dot);
                }
            });
        }
        return out;
    }

    // Per-row normalization with learned gain and bias vectors of length cols.
    TensorPtr<S> layer_norm(const TensorPtr<S>& x, const TensorPtr<S>& gain, const TensorPtr<S>& bias,
                            S eps = S(1e-5)) {
        check_rank2(x, "layer_norm");
        require(gain->rank() == 1 && gain->shape[0] == x->shape[1],
                format_msg("layer_norm: gain shape ", gain->shape_str(), " vs input ", x->shape_str()));
        require(bias->rank() == 1 && bias->shape[0] == x->shape[1],
                format_msg("layer_norm: bias shape ", bias->shape_str(), " vs input ", x->shape_str()));
        int r = x->shape[0], c = x->shape[1];
        auto out = node(x->shape, x->needs_grad || gain->needs_grad || bias->needs_grad);
        auto xhat = std::make_shared<std::vector<S>>(x->v.size());
        auto inv_sd = std::make_shared<std::vector<S>>(r);
        for (int i = 0; i < r; ++i) {
            const S* xi = x->v.data() + static_cast<size_t>(i) * c;
            S* hi = xhat->data() + static_cast<size_t>(i) * c;
            S* yi = out->v.data() + static_cast<size_t>(i) * c;
            S mean = S(0);
            for (int j = 0; j < c; ++j) mean += xi[j];
            mean /= S(c);
            S var = S(0);
            for (int j = 0; j < c; ++j) {
                S d = xi[j] - mean;
                var += d * d;
            }
            var /= S(c);
            S inv = S(1) / std::sqrt(var + eps);
            (*inv_sd)[i] = inv;
            for (int j = 0; j < c; ++j) {
                hi[j] = (xi[j] - mean) * inv;
                yi[j] = gain->v[j] * hi[j] + bias->v[j];
            }
        }
        if (out->needs_grad) {
            tape_.push_back([x, gain, bias, out, xhat, inv_sd, r, c]() {
                for (int i = 0; i < r; ++i) {
                    const S* hi = xhat->data() + static_cast<size_t>(i) * c;
                    const S* dyi = out->g.data() + static_cast<size_t>(i) * c;
                    if (gain->needs_grad) {
                        gain->ensure_grad();
                        for (int j = 0; j < c; ++j) gain->g[j] += dyi[j] * hi[j];
                    }
                    if (bias->needs_grad) {
                        bias->ensure_grad();
                        for (int j = 0; j < c; ++j) bias->g[j] += dyi[j];
                    }
                    if (x->needs_grad) {
                        x->ensure_grad();
                        S* dxi = x->g.data() + static_cast<size_t>(i) * c;
                        S sum_dg = S(0), sum_dgh = S(0);
                        for (int j = 0; j < c; ++j) {
                            S dg = dyi[j] * gain->v[j];
                            sum_dg += dg;
                            sum_dgh += dg * hi[j];
                        }
                        S inv = (*inv_sd)[i];
                        for (int j = 0; j < c; ++j) {
                            S dg = dyi[j] * gain->v[j];
                            dxi[j] += inv * (dg - sum_dg / S(c) - hi[j] * sum_dgh / S(c));
                        }
                    }
                }
            });
        }
        return out;
    }

    // Gathers table rows by id; output is [ids.size() x d].
    TensorPtr<S> embedding(const TensorPtr<S>& table, const std::vector<int>& ids) {
        check_rank2(table, "embedding");
        require(!ids.empty(), "embedding: empty id list");
        int v = table->shape[0], d = table->shape[1];
        for (size_t t = 0; t < ids.size(); ++t)
            require(0 <= ids[t] && ids[t] < v,
                    format_msg("embedding: id ", ids[t], " at position ", t, " outside table ",
                               table->shape_str()));
        auto out = node({static_cast<int>(ids.size()), d}, table->needs_grad);
        for (size_t t = 0; t < ids.size(); ++t)
            std::copy(table->v.begin() + static_cast<size_t>(ids[t]) * d,
                      table->v.begin() + static_cast<size_t>(ids[t] + 1) * d,
                      out->v.begin() + t * d);
        if (out->needs_grad) {
            tape_.push_back([table, out, ids, d]() {
                table->ensure_grad();
                for (size_t t = 0; t < ids.size(); ++t) {
                    const S* go = out->g.data() + t * d;
                    S* gt = table->g.data() + static_cast<size_t>(ids[t]) * d;
                    for (int j = 0; j < d; ++j) gt[j] += go[j];
                }
            });
        }
        return out;
    }

    TensorPtr<S> gelu(const TensorPtr<S>& a) {
        auto out = node(a->shape, a->needs_grad);
        for (size_t i = 0; i < out->v.size(); ++i) out->v[i] = detail::gelu_value(a->v[i]);
        if (out->needs_grad) {
            tape_.push_back([a, out]() {
                a->ensure_grad();
                for (size_t i = 0; i < out->g.size(); ++i)
                    a->g[i] += out->g[i] * detail::gelu_slope(a->v[i]);
            });
        }
        return out;
    }

    // Mean cross-entropy of logits rows against integer targets, restricted to
    // rows where mask is nonzero. Returns a scalar-shaped [1] tensor.
    TensorPtr<S> cross_entropy(const TensorPtr<S>& logits, const std::vector<int>& targets,
                               const std::vector<char>& mask) {
        check_rank2(logits, "cross_entropy");
        int r = logits->shape[0], c = logits->shape[1];
        require(static_cast<int>(targets.size()) == r,
                format_msg("cross_entropy: ", targets.size(), " targets for ", r, " rows"));
        require(static_cast<int>(mask.size()) == r,
                format_msg("cross_entropy: ", mask.size(), " mask entries for ", r, " rows"));
        int active = 0;
        for (int i = 0; i < r; ++i) {
            if (!mask[i]) continue;
            require(0 <= targets[i] && targets[i] < c,
                    format_msg("cross_entropy: target ", targets[i], " at row ", i, " outside ", c,
                               " classes"));
            ++active;
        }
        require(active > 0, "cross_entropy: mask selects no positions");
        auto probs = std::make_shared<std::vector<S>>(logits->v.size(), S(0));
        S loss = S(0);
        for (int i = 0; i < r; ++i) {
            if (!mask[i]) continue;
            const S* xi = logits->v.data() + static_cast<size_t>(i) * c;
            S* pi = probs->data() + static_cast<size_t>(i) * c;
            S mx = xi[0];
            for (int j = 1; j < c; ++j)
                if (xi[j] > mx) mx = xi[j];
            S sum = S(0);
            for (int j = 0; j < c; ++j) {
                pi[j] = std::exp(xi[j] - mx);
                sum += pi[j];
            }
            S inv = S(1) / sum;
            for (int j = 0; j < c; ++j) pi[j] *= inv;
            loss -= std::log(pi[targets[i]]);
        }
        auto out = node({1}, logits->needs_grad);
        out->v[0] = loss / S(active);
        if (out->needs_grad) {
            tape_.push_back([logits, out, probs, targets, mask, r, c, active]() {
                logits->ensure_grad();
                S w = out->g[0] / S(active);
                for (int i = 0; i < r; ++i) {
                    if (!mask[i]) continue;
                    const S* pi = probs->data() + static_cast<size_t>(i) * c;
                    S* gi = logits->g.data() + static_cast<size_t>(i) * c;
                    for (int j = 0; j < c; ++j) gi[j] += w * pi[j];
                    gi[targets[i]] -= w;
                }
            });
        }
        return out;
    }

    // Sum of all elements, as a [1] tensor.
    TensorPtr<S> sum(const TensorPtr<S>& a) {
        auto out = node({1}, a->needs_grad);
        S acc = S(0);
        for (S x : a->v) acc += x;
        out->v[0] = acc;
        if (out->needs_grad) {
            tape_.push_back([a, out]() {
                a->ensure_grad();
                for (size_t i = 0; i < a->g.size(); ++i) a->g[i] += out->g[0];
            });
        }
        return out;
    }

    // Runs the recorded tape in reverse from a scalar produced by this graph.
    // A second call on the same graph is an error by contract.
    void backward(const TensorPtr<S>& loss) {
        require(loss->producer == this, "backward: tensor was not produced by this graph");
        require(loss->numel() == 1, format_msg("backward: output must be scalar, got ", loss->shape_str()));
        if (ran_backward_) throw std::logic_error("backward: already ran on this graph");
        ran_backward_ = true;
        if (!loss->needs_grad) return;
        loss->ensure_grad();
        loss->g[0] += S(1);
        for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)();
    }

    size_t tape_size() const { return tape_.size(); }

private:
    TensorPtr<S> node(std::vector<int> shape, bool needs) {
        auto t = std::make_shared<Tensor<S>>();
        size_t n = 1;
        for (int d : shape) n *= static_cast<size_t>(d);
        t->shape = std::move(shape);
        t->v.assign(n, S(0));
        t->needs_grad = needs;
        t->producer = this;
        if (needs) t->ensure_grad();
        return t;
    }

    static void check_rank2(const TensorPtr<S>& t, const char* op) {
        require(t->rank() == 2, format_msg(op, ": expected rank-2 tensor, got ", t->shape_str()));
    }

    std::vector<std::function<void()>> tape_;
    bool ran_backward_ = false;
};

}  // namespace unitprompt
