#pragma once

#include <cmath>

#include "prompt.hpp"
#include "ulm.hpp"

namespace unitprompt {

namespace detail {

template <typename S>
TensorPtr<S> decoder_block(Graph<S>& g, const ULM<S>& m, int layer, const TensorPtr<S>& x,
                           const std::vector<S>& mask, const PromptSet<S>* deep_prompts) {
    const ULMConfig& cfg = m.config;
    std::string pre = format_msg("layer", layer, ".");
    auto a = g.layer_norm(x, m.p(pre + "ln1.gain"), m.p(pre + "ln1.bias"));

    auto q_full = g.matmul(a, m.p(pre + "attn.wq"));
    auto [k_full, v_full] = apply_deep_prompts(
        g, a, deep_prompts ? deep_prompts->key_prompts[layer] : nullptr,
        deep_prompts ? deep_prompts->value_prompts[layer] : nullptr, m.p(pre + "attn.wk"),
        m.p(pre + "attn.wv"));

    S inv_sqrt = S(1) / std::sqrt(S(cfg.d_head()));
    TensorPtr<S> merged;
    for (int head = 0; head < cfg.h; ++head) {
        const auto& sel = m.selectors[head];
        auto qh = g.matmul(q_full, sel);
        auto kh = g.matmul(k_full, sel);
        auto vh = g.matmul(v_full, sel);
        auto scores = g.scale(g.matmul(qh, kh, false, true), inv_sqrt);
        auto attn = g.softmax_rows(scores, &mask);
        auto oh = g.matmul(g.matmul(attn, vh), sel, false, true);
        merged = merged ? g.add(merged, oh) : oh;
    }
    auto x1 = g.add(x, g.matmul(merged, m.p(pre + "attn.wo")));

    auto b = g.layer_norm(x1, m.p(pre + "ln2.gain"), m.p(pre + "ln2.bias"));
    auto ff = g.matmul(g.gelu(g.matmul(b, m.p(pre + "ffn.w1"))), m.p(pre + "ffn.w2"));
    return g.add(x1, ff);
}

}  // namespace detail

// Full-sequence forward returning next-token logits [S x V], with S = l + T
// when prompts are present. Pre-norm blocks, learned absolute positional
// embeddings, tied input/output embedding.
template <typename S>
TensorPtr<S> ulm_forward(Graph<S>& g, const ULM<S>& m, const UnitSequence& units,
                         const PromptSet<S>* prompts = nullptr) {
    const ULMConfig& cfg = m.config;
    require(!units.empty(), "ulm_forward: empty unit sequence");
    for (size_t t = 0; t < units.size(); ++t)
        require(0 <= units[t] && units[t] < cfg.vocab(),
                format_msg("ulm_forward: unit ", units[t], " at position ", t, " outside vocabulary ",
                           cfg.vocab()));
    int l = prompts ? prompts->l : 0;
    int s_total = l + static_cast<int>(units.size());
    require(s_total <= cfg.t_max,
            format_msg("ulm_forward: sequence length ", s_total, " exceeds T_max ", cfg.t_max));

    auto x = g.embedding(m.p("embed"), units);
    if (prompts) x = apply_input_prompts(g, x, *prompts);
    x = g.add(x, g.slice_rows(m.p("pos"), 0, s_total));

    auto mask = causal_mask<S>(s_total);
    bool deep = prompts && prompts->mode == PromptMode::deep;
    for (int layer = 0; layer < cfg.L; ++layer)
        x = detail::decoder_block(g, m, layer, x, mask, deep ? prompts : nullptr);

    auto final = g.layer_norm(x, m.p("final.gain"), m.p("final.bias"));
    return g.matmul(final, m.p("embed"), false, true);
}

}  // namespace unitprompt
