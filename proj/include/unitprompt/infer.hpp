#pragma once

#include <cmath>
#include <vector>

#include "graph.hpp"
#include "prompt.hpp"
#include "ulm.hpp"

namespace unitprompt {

namespace detail {

// y += x * W for a single row x, W row-major [rows x cols].
template <typename S>
void row_matvec(const S* x, const TensorPtr<S>& w, S* y) {
    size_t rows = w->rows(), cols = w->cols();
    for (size_t j = 0; j < cols; ++j) y[j] = S(0);
    for (size_t i = 0; i < rows; ++i) {
        S xi = x[i];
        const S* wr = w->v.data() + i * cols;
        for (size_t j = 0; j < cols; ++j) y[j] += xi * wr[j];
    }
}

template <typename S>
void layer_norm_row_inplace(std::vector<S>& x, const TensorPtr<S>& gain, const TensorPtr<S>& bias,
                            S eps) {
    size_t d = x.size();
    S mean = S(0);
    for (S v : x) mean += v;
    mean /= S(d);
    S var = S(0);
    for (S v : x) var += (v - mean) * (v - mean);
    var /= S(d);
    S inv_sd = S(1) / std::sqrt(var + eps);
    for (size_t i = 0; i < d; ++i) x[i] = (x[i] - mean) * inv_sd * gain->v[i] + bias->v[i];
}

}  // namespace detail

// Incremental decoder with per-layer key/value caches. Matches the graph
// forward pass up to floating-point summation order, at a fraction of its
// cost, and never touches gradients.
//
// Prompt handling mirrors the training-time geometry: input-mode prompt rows
// are fed through the blocks as ordinary content rows carrying the learned
// embeddings, while deep-mode prompts are materialized directly as the first
// l cached key/value rows of every layer and the first content unit starts at
// position l.
template <typename S>
class Inference {
public:
    explicit Inference(const ULM<S>& model, const PromptSet<S>* prompts = nullptr)
        : m_(model), k_cache_(model.config.L), v_cache_(model.config.L) {
        const auto& cfg = m_.config;
        if (prompts != nullptr) {
            require(prompts->l >= 1, "Inference: prompt set has no rows");
            require(prompts->mode != PromptMode::deep ||
                        int(prompts->key_prompts.size()) == cfg.L,
                    "Inference: deep prompt set does not match model depth");
        }
        if (prompts != nullptr && prompts->mode == PromptMode::deep) {
            int l = prompts->l;
            std::vector<S> row(size_t(cfg.d));
            for (int layer = 0; layer < cfg.L; ++layer) {
                const auto& wk = m_.p(layer_name(layer, "attn.wk"));
                const auto& wv = m_.p(layer_name(layer, "attn.wv"));
                for (int t = 0; t < l; ++t) {
                    const S* pk = prompts->key_prompts[size_t(layer)]->v.data() + size_t(t) * cfg.d;
                    const S* pv =
                        prompts->value_prompts[size_t(layer)]->v.data() + size_t(t) * cfg.d;
                    detail::row_matvec(pk, wk, row.data());
                    append_row(k_cache_[size_t(layer)], row);
                    detail::row_matvec(pv, wv, row.data());
                    append_row(v_cache_[size_t(layer)], row);
                }
            }
            cached_ = l;
            pos_ = l;
        } else if (prompts != nullptr) {
            for (int t = 0; t < prompts->l; ++t) {
                std::vector<S> e(prompts->input_prompts->v.begin() + long(t) * cfg.d,
                                 prompts->input_prompts->v.begin() + long(t + 1) * cfg.d);
                feed_embedding(e);
            }
        }
    }

    int position() const { return pos_; }

    // Feeds one unit and returns the next-token logits row [vocab].
    std::vector<S> feed_unit(int unit) {
        const auto& cfg = m_.config;
        require(unit >= 0 && unit < cfg.vocab(),
                format_msg("Inference: unit id ", unit, " outside vocabulary ", cfg.vocab()));
        const auto& embed = m_.p("embed");
        std::vector<S> e(embed->v.begin() + long(unit) * cfg.d,
                         embed->v.begin() + long(unit + 1) * cfg.d);
        return feed_embedding(e);
    }

    bool full() const { return pos_ >= m_.config.t_max; }

private:
    static std::string layer_name(int layer, const char* leaf) {
        return format_msg("layer", layer, ".", leaf);
    }

    static void append_row(std::vector<S>& cache, const std::vector<S>& row) {
        cache.insert(cache.end(), row.begin(), row.end());
    }

    std::vector<S> feed_embedding(std::vector<S> x) {
        const auto& cfg = m_.config;
        require(pos_ < cfg.t_max,
                format_msg("Inference: context is full at ", cfg.t_max, " positions"));
        const auto& pos_table = m_.p("pos");
        for (int i = 0; i < cfg.d; ++i) x[size_t(i)] += pos_table->v[size_t(pos_) * cfg.d + i];

        int dh = cfg.d_head();
        std::vector<S> a(size_t(cfg.d)), q(size_t(cfg.d)), proj(size_t(cfg.d));
        std::vector<S> merged(size_t(cfg.d));
        for (int layer = 0; layer < cfg.L; ++layer) {
            a = x;
            detail::layer_norm_row_inplace(a, m_.p(layer_name(layer, "ln1.gain")),
                                           m_.p(layer_name(layer, "ln1.bias")), S(1e-5));
            detail::row_matvec(a.data(), m_.p(layer_name(layer, "attn.wq")), q.data());
            detail::row_matvec(a.data(), m_.p(layer_name(layer, "attn.wk")), proj.data());
            append_row(k_cache_[size_t(layer)], proj);
            detail::row_matvec(a.data(), m_.p(layer_name(layer, "attn.wv")), proj.data());
            append_row(v_cache_[size_t(layer)], proj);

            int T = cached_ + 1;
            const S* kc = k_cache_[size_t(layer)].data();
            const S* vc = v_cache_[size_t(layer)].data();
            S inv_scale = S(1) / std::sqrt(S(dh));
            std::vector<S> scores(static_cast<size_t>(T), S(0));
            for (int h = 0; h < cfg.h; ++h) {
                int off = h * dh;
                S mx = S(0);
                for (int t = 0; t < T; ++t) {
                    S s = S(0);
                    const S* kt = kc + size_t(t) * cfg.d + off;
                    for (int i = 0; i < dh; ++i) s += q[size_t(off + i)] * kt[i];
                    scores[size_t(t)] = s * inv_scale;
                    if (t == 0 || scores[size_t(t)] > mx) mx = scores[size_t(t)];
                }
                S z = S(0);
                for (int t = 0; t < T; ++t) {
                    scores[size_t(t)] = std::exp(scores[size_t(t)] - mx);
                    z += scores[size_t(t)];
                }
                for (int i = 0; i < dh; ++i) {
                    S acc = S(0);
                    for (int t = 0; t < T; ++t)
                        acc += scores[size_t(t)] * vc[size_t(t) * cfg.d + off + i];
                    merged[size_t(off + i)] = acc / z;
                }
            }
            detail::row_matvec(merged.data(), m_.p(layer_name(layer, "attn.wo")), proj.data());
            for (int i = 0; i < cfg.d; ++i) x[size_t(i)] += proj[size_t(i)];

            a = x;
            detail::layer_norm_row_inplace(a, m_.p(layer_name(layer, "ln2.gain")),
                                           m_.p(layer_name(layer, "ln2.bias")), S(1e-5));
            std::vector<S> hidden(size_t(cfg.d_ff));
            detail::row_matvec(a.data(), m_.p(layer_name(layer, "ffn.w1")), hidden.data());
            for (auto& v : hidden) v = detail::gelu_value(v);
            detail::row_matvec(hidden.data(), m_.p(layer_name(layer, "ffn.w2")), proj.data());
            for (int i = 0; i < cfg.d; ++i) x[size_t(i)] += proj[size_t(i)];
        }

        cached_ += 1;
        pos_ += 1;

        detail::layer_norm_row_inplace(x, m_.p("final.gain"), m_.p("final.bias"), S(1e-5));
        const auto& embed = m_.p("embed");
        std::vector<S> logits(size_t(cfg.vocab()));
        for (int v = 0; v < cfg.vocab(); ++v) {
            S acc = S(0);
            const S* er = embed->v.data() + size_t(v) * cfg.d;
            for (int i = 0; i < cfg.d; ++i) acc += x[size_t(i)] * er[i];
            logits[size_t(v)] = acc;
        }
        return logits;
    }

    const ULM<S>& m_;
    std::vector<std::vector<S>> k_cache_, v_cache_;
    int cached_ = 0;  // rows present in each layer cache
    int pos_ = 0;     // absolute position of the next fed row
};

struct GenConfig {
    int max_new_units = 64;
};

// Greedy decoding: feed the prompt rows, the input units, and the separator,
// then emit argmax units until EOS, the unit budget, or a full context. Ties
// resolve to the lowest unit id. The returned sequence excludes EOS.
template <typename S>
UnitSequence generate_units(const ULM<S>& model, const PromptSet<S>* prompts,
                            const UnitSequence& input, const GenConfig& gen) {
    require(gen.max_new_units >= 1, "generate_units: max_new_units must be >= 1");
    SpecialTokens st = special_tokens(model.config.v_units);
    Inference<S> inf(model, prompts);
    std::vector<S> logits;
    for (int u : input) logits = inf.feed_unit(u);
    logits = inf.feed_unit(st.sep);

    UnitSequence out;
    for (int step = 0; step < gen.max_new_units; ++step) {
        int best = 0;
        for (size_t v = 1; v < logits.size(); ++v)
            if (logits[v] > logits[size_t(best)]) best = int(v);
        if (best == st.eos) break;
        out.push_back(best);
        if (inf.full()) break;
        logits = inf.feed_unit(best);
    }
    return out;
}

}  // namespace unitprompt
