#pragma once

#include <map>
#include <string>
#include <vector>

#include "graph.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace unitprompt {

struct ULMConfig {
    int L = 4;
    int d = 64;
    int h = 4;
    int d_ff = 256;
    int v_units = 100;
    int t_max = 256;

    int vocab() const { return vocab_size(v_units); }
    int d_head() const { return d / h; }

    void validate() const {
        require(L > 0 && d > 0 && h > 0 && d_ff > 0 && v_units > 0 && t_max > 0,
                "ULMConfig: all dimensions must be positive");
        require(d % h == 0, format_msg("ULMConfig: head count ", h, " does not divide d=", d));
    }
};

// The unit language model: a named-tensor bundle plus its config. Parameter
// order is the manifest order used for initialization draws, optimizer
// iteration, checksums, and checkpoints.
template <typename S>
struct ULM {
    ULMConfig config;
    std::vector<std::pair<std::string, TensorPtr<S>>> named;
    std::vector<TensorPtr<S>> selectors;  // h constant [d x d_head] column pickers

    const TensorPtr<S>& p(const std::string& name) const {
        for (const auto& [n, t] : named)
            if (n == name) return t;
        throw std::invalid_argument(format_msg("ULM: no parameter named '", name, "'"));
    }

    std::vector<TensorPtr<S>> param_list() const {
        std::vector<TensorPtr<S>> out;
        out.reserve(named.size());
        for (const auto& [n, t] : named) out.push_back(t);
        return out;
    }

    size_t param_count() const {
        size_t n = 0;
        for (const auto& [name, t] : named) n += t->numel();
        return n;
    }

    void set_trainable(bool trainable) {
        for (auto& [name, t] : named) {
            t->trainable = trainable;
            t->needs_grad = trainable;
            if (!trainable) t->g.clear();
        }
    }

    bool frozen() const {
        for (const auto& [name, t] : named)
            if (t->trainable) return false;
        return true;
    }
};

namespace detail {

template <typename S>
void build_selectors(ULM<S>& m) {
    int d = m.config.d, dh = m.config.d_head();
    m.selectors.clear();
    for (int head = 0; head < m.config.h; ++head) {
        std::vector<S> sel(static_cast<size_t>(d) * dh, S(0));
        for (int c = 0; c < dh; ++c) sel[static_cast<size_t>(head * dh + c) * dh + c] = S(1);
        m.selectors.push_back(
            make_tensor<S>({d, dh}, std::move(sel), false, format_msg("selector.", head)));
    }
}

}  // namespace detail

// Closed-form total parameter count for a config, matching the manifest.
inline size_t ulm_param_count(const ULMConfig& cfg) {
    size_t d = cfg.d;
    size_t per_layer = 4 * d * d + 2 * d * static_cast<size_t>(cfg.d_ff) + 4 * d;
    return static_cast<size_t>(cfg.vocab()) * d + static_cast<size_t>(cfg.t_max) * d +
           static_cast<size_t>(cfg.L) * per_layer + 2 * d;
}

// Weight matrices and embeddings are drawn from normal(0, 0.02) in manifest
// order from one seeded stream; norm gains start at one and biases at zero,
// the usual trainable-identity initialization.
template <typename S>
ULM<S> ulm_init(const ULMConfig& config, uint64_t seed) {
    config.validate();
    ULM<S> m;
    m.config = config;
    Rng rng(seed);
    int d = config.d;

    auto normal = [&](const std::string& name, std::vector<int> shape) {
        m.named.emplace_back(name, make_normal<S>(std::move(shape), rng, 0.02, true, name));
    };
    auto ones = [&](const std::string& name) {
        m.named.emplace_back(name, make_tensor<S>({d}, std::vector<S>(d, S(1)), true, name));
    };
    auto zeros = [&](const std::string& name) {
        m.named.emplace_back(name, make_tensor<S>({d}, std::vector<S>(d, S(0)), true, name));
    };

    normal("embed", {config.vocab(), d});
    normal("pos", {config.t_max, d});
    for (int i = 0; i < config.L; ++i) {
        std::string pre = format_msg("layer", i, ".");
        ones(pre + "ln1.gain");
        zeros(pre + "ln1.bias");
        normal(pre + "attn.wq", {d, d});
        normal(pre + "attn.wk", {d, d});
        normal(pre + "attn.wv", {d, d});
        normal(pre + "attn.wo", {d, d});
        ones(pre + "ln2.gain");
        zeros(pre + "ln2.bias");
        normal(pre + "ffn.w1", {d, config.d_ff});
        normal(pre + "ffn.w2", {config.d_ff, d});
    }
    ones("final.gain");
    zeros("final.bias");

    detail::build_selectors(m);
    return m;
}

template <typename S>
std::vector<S> causal_mask(int s) {
    std::vector<S> mask(static_cast<size_t>(s) * s, S(0));
    for (int i = 0; i < s; ++i)
        for (int j = i + 1; j < s; ++j) mask[static_cast<size_t>(i) * s + j] = S(-1e9);
    return mask;
}

}  // namespace unitprompt
