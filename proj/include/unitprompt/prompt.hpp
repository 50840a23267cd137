#pragma once

#include <string>
#include <vector>

#include "graph.hpp"
#include "ulm.hpp"

namespace unitprompt {

enum class PromptMode { input, deep };

inline std::string prompt_mode_name(PromptMode m) { return m == PromptMode::input ? "input" : "deep"; }

inline PromptMode prompt_mode_from(const std::string& s) {
    if (s == "input") return PromptMode::input;
    if (s == "deep") return PromptMode::deep;
    throw std::invalid_argument(format_msg("unknown prompt mode '", s, "'"));
}

// Trainable prompt parameters. Input mode carries the embedding-space prompts
// only; deep mode adds per-layer key and value prompts that replace the first
// l attention rows in every block.
template <typename S>
struct PromptSet {
    PromptMode mode = PromptMode::input;
    int l = 0;
    TensorPtr<S> input_prompts;               // [l x d]
    std::vector<TensorPtr<S>> key_prompts;    // deep mode: L tensors [l x d]
    std::vector<TensorPtr<S>> value_prompts;  // deep mode: L tensors [l x d]

    std::vector<TensorPtr<S>> param_list() const {
        std::vector<TensorPtr<S>> out;
        out.push_back(input_prompts);
        for (size_t i = 0; i < key_prompts.size(); ++i) {
            out.push_back(key_prompts[i]);
            out.push_back(value_prompts[i]);
        }
        return out;
    }

    size_t param_count() const {
        size_t n = 0;
        for (const auto& t : param_list()) n += t->numel();
        return n;
    }
};

// input mode: l*d; deep mode: l*d*(1 + 2L). l = 0 is the degenerate no-prompt
// case worth 0 either way.
inline long long count_trainable_params(PromptMode mode, int l, int d, int L) {
    require(l >= 0 && d > 0 && L > 0, "count_trainable_params: arguments must be positive");
    if (l == 0) return 0;
    long long base = static_cast<long long>(l) * d;
    return mode == PromptMode::input ? base : base * (1 + 2LL * L);
}

template <typename S>
PromptSet<S> prompt_init(PromptMode mode, int l, const ULMConfig& config, uint64_t seed) {
    config.validate();
    require(1 <= l && l <= config.t_max - 1,
            format_msg("prompt_init: l=", l, " outside [1, ", config.t_max - 1, "]"));
    PromptSet<S> p;
    p.mode = mode;
    p.l = l;
    Rng rng(seed);
    p.input_prompts = make_normal<S>({l, config.d}, rng, 0.02, true, "prompt.input");
    if (mode == PromptMode::deep) {
        for (int i = 0; i < config.L; ++i) {
            p.key_prompts.push_back(
                make_normal<S>({l, config.d}, rng, 0.02, true, format_msg("prompt.key.", i)));
            p.value_prompts.push_back(
                make_normal<S>({l, config.d}, rng, 0.02, true, format_msg("prompt.value.", i)));
        }
    }
    return p;
}

// Prepends the embedding-space prompts: rows 0..l-1 are p^I, the rest are the
// embedded input unchanged.
template <typename S>
TensorPtr<S> apply_input_prompts(Graph<S>& g, const TensorPtr<S>& embeddings,
                                 const PromptSet<S>& prompts) {
    require(embeddings->rank() == 2 && embeddings->shape[1] == prompts.input_prompts->shape[1],
            format_msg("apply_input_prompts: width ", embeddings->shape_str(), " vs prompts ",
                       prompts.input_prompts->shape_str()));
    return g.concat_rows(prompts.input_prompts, embeddings);
}

// K and V for one block with the first l rows of x replaced by the prompt
// rows before projection: K = Concat(p^K, x_{l+1:S})W^K, likewise V. Passing
// null prompts gives the plain projections (the l = 0 degenerate case).
template <typename S>
std::pair<TensorPtr<S>, TensorPtr<S>> apply_deep_prompts(Graph<S>& g, const TensorPtr<S>& x,
                                                         const TensorPtr<S>& p_k,
                                                         const TensorPtr<S>& p_v,
                                                         const TensorPtr<S>& w_k,
                                                         const TensorPtr<S>& w_v) {
    if (!p_k && !p_v) return {g.matmul(x, w_k), g.matmul(x, w_v)};
    require(p_k && p_v, "apply_deep_prompts: key and value prompts must both be present");
    require(same_shape(*p_k, *p_v), "apply_deep_prompts: key/value prompt shape mismatch");
    int l = p_k->shape[0], s = x->shape[0];
    require(l <= s, format_msg("apply_deep_prompts: l=", l, " exceeds sequence length ", s));
    TensorPtr<S> k_src, v_src;
    if (l == s) {
        k_src = p_k;
        v_src = p_v;
    } else {
        auto content = g.slice_rows(x, l, s);
        k_src = g.concat_rows(p_k, content);
        v_src = g.concat_rows(p_v, content);
    }
    return {g.matmul(k_src, w_k), g.matmul(v_src, w_v)};
}

}  // namespace unitprompt
