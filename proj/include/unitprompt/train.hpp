#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "eval.hpp"
#include "forward.hpp"
#include "infer.hpp"
#include "prompt.hpp"
#include "rng.hpp"
#include "tasks.hpp"
#include "verbalizer.hpp"

namespace unitprompt {

enum class TrainMode { prompt_tune, finetune_lm };

struct TrainConfig {
    TrainMode mode = TrainMode::prompt_tune;
    int steps = 600;
    int batch = 8;
    double lr = 5e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 1.0;
    int patience = 5;  // epochs without validation improvement
    uint64_t seed = 1;

    void validate() const {
        require(steps >= 1 && batch >= 1, "TrainConfig: steps and batch must be positive");
        require(lr > 0.0, "TrainConfig: learning rate must be positive");
        require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
                "TrainConfig: moment coefficients must be in [0, 1)");
        require(clip_norm > 0.0, "TrainConfig: clip norm must be positive");
        require(patience >= 1, "TrainConfig: patience must be positive");
    }
};

// Adaptive-moment optimizer with global-norm gradient clipping. Moments are
// kept in double regardless of the parameter scalar so long runs accumulate
// identically across build types.
template <typename S>
class Adam {
public:
    Adam(std::vector<TensorPtr<S>> params, const TrainConfig& cfg) : params_(std::move(params)), cfg_(cfg) {
        require(!params_.empty(), "Adam: no parameters");
        for (const auto& p : params_) {
            require(p->trainable, format_msg("Adam: parameter '", p->name, "' is not trainable"));
            m_.emplace_back(p->numel(), 0.0);
            v_.emplace_back(p->numel(), 0.0);
        }
    }

    // Applies one update from the gradients currently stored on the
    // parameters, then leaves the gradients untouched (callers zero them).
    void step() {
        double sq_norm = 0.0;
        for (const auto& p : params_) {
            require(p->g.size() == p->v.size(),
                    format_msg("Adam: parameter '", p->name, "' has no gradient"));
            for (S g : p->g) sq_norm += double(g) * double(g);
        }
        double norm = std::sqrt(sq_norm);
        require(std::isfinite(norm), "Adam: non-finite gradient norm");
        double scale = norm > cfg_.clip_norm ? cfg_.clip_norm / norm : 1.0;

        t_ += 1;
        double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
        double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
        for (size_t i = 0; i < params_.size(); ++i) {
            auto& p = *params_[i];
            for (size_t j = 0; j < p.v.size(); ++j) {
                double g = double(p.g[j]) * scale;
                m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * g;
                v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * g * g;
                double update = (m_[i][j] / bc1) / (std::sqrt(v_[i][j] / bc2) + cfg_.eps);
                p.v[j] = S(double(p.v[j]) - cfg_.lr * update);
            }
        }
    }

    int64_t steps_taken() const { return t_; }

private:
    std::vector<TensorPtr<S>> params_;
    TrainConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    int64_t t_ = 0;
};

struct TrainingSequence {
    UnitSequence tokens;       // u_x ++ SEP ++ v(y) ++ EOS
    std::vector<char> mask;    // over predictions tokens[1..]; true on the answer region
};

// Assembles the conditional-generation training sequence. The loss mask
// covers exactly the |y| + 1 answer predictions (the encoded labels and EOS).
inline TrainingSequence make_training_sequence(const LabeledExample& ex, const Verbalizer& verb,
                                               int v_units, int budget) {
    SpecialTokens st = special_tokens(v_units);
    TrainingSequence ts;
    ts.tokens = ex.input_units;
    ts.tokens.push_back(st.sep);
    UnitSequence answer = encode_labels(verb, ex.labels);
    ts.tokens.insert(ts.tokens.end(), answer.begin(), answer.end());
    require(int(ts.tokens.size()) <= budget,
            format_msg("make_training_sequence: example '", ex.id, "' needs ", ts.tokens.size(),
                       " positions but the context budget is ", budget));
    size_t answer_begin = ex.input_units.size() + 1;
    ts.mask.assign(ts.tokens.size() - 1, false);
    for (size_t t = 0; t + 1 < ts.tokens.size(); ++t) ts.mask[t] = (t + 1 >= answer_begin);
    return ts;
}

namespace detail {

// Cross-entropy of one example on the tape: prompt rows contribute no loss
// and input-region predictions are masked out.
template <typename S>
TensorPtr<S> example_loss(Graph<S>& g, const ULM<S>& m, const PromptSet<S>* prompts,
                          const TrainingSequence& ts) {
    int l = prompts != nullptr ? prompts->l : 0;
    UnitSequence inputs(ts.tokens.begin(), ts.tokens.end() - 1);
    auto logits = ulm_forward(g, m, inputs, prompts);
    std::vector<int> targets(size_t(l) + inputs.size(), 0);
    std::vector<char> mask(size_t(l) + inputs.size(), 0);
    for (size_t t = 0; t < inputs.size(); ++t) {
        targets[size_t(l) + t] = ts.tokens[t + 1];
        mask[size_t(l) + t] = ts.mask[t];
    }
    return g.cross_entropy(logits, targets, mask);
}

}  // namespace detail

struct EpochRecord {
    int epoch = 0;
    int step = 0;  // optimizer steps completed at the end of this epoch
    double valid_primary = 0.0;
};

struct TrainReport {
    std::vector<double> step_loss;       // mean batch loss per optimizer step
    std::vector<EpochRecord> epochs;     // per-epoch validation trace
    double best_valid = 0.0;
    int best_epoch = -1;
    int steps_run = 0;
};

// Greedy-decodes a split and scores it. The generation budget is the longest
// reference in the split plus slack, clamped by the remaining context.
template <typename S>
EvalResult evaluate_model(const ULM<S>& m, const PromptSet<S>* prompts, const Verbalizer& verb,
                          const Dataset& data, const std::vector<LabeledExample>& split) {
    require(!split.empty(), "evaluate_model: empty split");
    int longest = 0;
    for (const auto& ex : split) longest = std::max(longest, int(ex.labels.size()));
    GenConfig gen{longest + 8};
    std::vector<std::vector<std::string>> preds;
    preds.reserve(split.size());
    for (const auto& ex : split) {
        UnitSequence u_y = generate_units(m, prompts, ex.input_units, gen);
        preds.push_back(decode_units(verb, u_y).labels);
    }
    return evaluate(data.kind, split, preds);
}

namespace detail {

template <typename S>
std::vector<std::vector<S>> snapshot_values(const std::vector<TensorPtr<S>>& params) {
    std::vector<std::vector<S>> snap;
    snap.reserve(params.size());
    for (const auto& p : params) snap.push_back(p->v);
    return snap;
}

template <typename S>
void restore_values(const std::vector<TensorPtr<S>>& params,
                    const std::vector<std::vector<S>>& snap) {
    for (size_t i = 0; i < params.size(); ++i) params[i]->v = snap[i];
}

// Shared epoch loop for prompt tuning and LM fine-tuning. Gradients from the
// per-example tapes accumulate on the trainable leaves; each optimizer step
// consumes the mean gradient of one batch.
template <typename S>
TrainReport run_training(ULM<S>& model, PromptSet<S>* prompts,
                         const std::vector<TensorPtr<S>>& params, const Dataset& data,
                         const Verbalizer& verb, const TrainConfig& cfg) {
    cfg.validate();
    require(!data.train.empty() && !data.valid.empty(),
            "run_training: train and valid splits must be non-empty");

    int l = prompts != nullptr ? prompts->l : 0;
    int budget = model.config.t_max - l;
    std::vector<TrainingSequence> train_seqs;
    train_seqs.reserve(data.train.size());
    for (const auto& ex : data.train)
        train_seqs.push_back(make_training_sequence(ex, verb, model.config.v_units, budget));

    Adam<S> opt(params, cfg);
    Rng rng = Rng(cfg.seed).fork(0x7A);
    std::vector<size_t> order(train_seqs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    TrainReport report;
    auto best_params = snapshot_values(params);
    int stale_epochs = 0;
    int step = 0, epoch = 0;
    size_t cursor = order.size();

    while (step < cfg.steps) {
        int steps_this_epoch =
            std::min(cfg.steps - step, int((train_seqs.size() + cfg.batch - 1) / cfg.batch));
        for (int e = 0; e < steps_this_epoch; ++e) {
            for (const auto& p : params) p->zero_grad();
            double batch_loss = 0.0;
            for (int b = 0; b < cfg.batch; ++b) {
                if (cursor == order.size()) {
                    rng.shuffle(order);
                    cursor = 0;
                }
                Graph<S> g;
                auto loss = example_loss(g, model, prompts, train_seqs[order[cursor++]]);
                g.backward(loss);
                batch_loss += double(loss->v[0]);
            }
            batch_loss /= double(cfg.batch);
            if (!std::isfinite(batch_loss))
                throw std::runtime_error(
                    format_msg("run_training: non-finite loss at step ", step));
            for (const auto& p : params)
                for (auto& gv : p->g) gv = S(double(gv) / double(cfg.batch));
            opt.step();
            report.step_loss.push_back(batch_loss);
            ++step;
        }
        for (const auto& p : params) p->zero_grad();

        double valid = evaluate_model(model, prompts, verb, data, data.valid).primary();
        report.epochs.push_back({epoch, step, valid});
        // Ties go to the later epoch (more-trained parameters at equal
        // validation score) but do not reset the patience counter.
        if (report.best_epoch < 0 || valid > report.best_valid) {
            report.best_valid = valid;
            report.best_epoch = epoch;
            best_params = snapshot_values(params);
            stale_epochs = 0;
        } else {
            if (valid == report.best_valid) {
                report.best_epoch = epoch;
                best_params = snapshot_values(params);
            }
            stale_epochs += 1;
            if (stale_epochs >= cfg.patience) break;
        }
        ++epoch;
    }

    restore_values(params, best_params);
    report.steps_run = step;
    return report;
}

}  // namespace detail

// Eq.-style prompt tuning: gradient descent on the prompt set alone, with the
// language model held frozen throughout.
template <typename S>
TrainReport prompt_tune(ULM<S>& model, PromptSet<S>& prompts, const Dataset& data,
                        const Verbalizer& verb, const TrainConfig& cfg) {
    require(cfg.mode == TrainMode::prompt_tune, "prompt_tune: config mode mismatch");
    require(model.frozen(), "prompt_tune: the language model must be frozen");
    return detail::run_training(model, &prompts, prompts.param_list(), data, verb, cfg);
}

// Baseline that updates every language-model parameter instead of prompts.
template <typename S>
TrainReport finetune_lm(ULM<S>& model, const Dataset& data, const Verbalizer& verb,
                        const TrainConfig& cfg) {
    require(cfg.mode == TrainMode::finetune_lm, "finetune_lm: config mode mismatch");
    model.set_trainable(true);
    auto report = detail::run_training(model, static_cast<PromptSet<S>*>(nullptr),
                                       model.param_list(), data, verb, cfg);
    model.set_trainable(false);
    return report;
}

struct PretrainConfig {
    int steps = 500;
    int batch = 8;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 1.0;
    uint64_t seed = 9;
    double valid_fraction = 0.1;
};

struct PretrainReport {
    std::vector<double> step_loss;
    double valid_loss = 0.0;          // mean next-token cross-entropy, EOS included
    double valid_loss_no_eos = 0.0;   // same, restricted to unit targets
    double unigram_baseline = 0.0;    // smoothed unigram cross-entropy on validation
    int steps_run = 0;
};

namespace detail {

template <typename S>
TensorPtr<S> corpus_loss(Graph<S>& g, const ULM<S>& m, const UnitSequence& seq, bool skip_eos) {
    SpecialTokens st = special_tokens(m.config.v_units);
    UnitSequence tokens = seq;
    tokens.push_back(st.eos);
    UnitSequence inputs(tokens.begin(), tokens.end() - 1);
    auto logits = ulm_forward(g, m, inputs);
    std::vector<int> targets(inputs.size());
    std::vector<char> mask(inputs.size(), 1);
    for (size_t t = 0; t < inputs.size(); ++t) {
        targets[t] = tokens[t + 1];
        if (skip_eos && targets[t] == st.eos) mask[t] = false;
    }
    return g.cross_entropy(logits, targets, mask);
}

}  // namespace detail

// Next-unit pre-training over the synthetic corpus. The tail of the corpus is
// carved off as a validation set; the model comes out frozen.
template <typename S>
PretrainReport pretrain_ulm(ULM<S>& model, const std::vector<UnitSequence>& corpus,
                            const PretrainConfig& cfg) {
    require(cfg.steps >= 1 && cfg.batch >= 1, "pretrain_ulm: steps and batch must be positive");
    require(cfg.valid_fraction > 0.0 && cfg.valid_fraction < 0.5,
            "pretrain_ulm: valid fraction out of range");
    size_t n_valid = std::max<size_t>(1, size_t(double(corpus.size()) * cfg.valid_fraction));
    require(corpus.size() > n_valid, "pretrain_ulm: corpus too small for a validation carve");
    std::vector<UnitSequence> train(corpus.begin(), corpus.end() - long(n_valid));
    std::vector<UnitSequence> valid(corpus.end() - long(n_valid), corpus.end());

    model.set_trainable(true);
    TrainConfig opt_cfg;
    opt_cfg.lr = cfg.lr;
    opt_cfg.beta1 = cfg.beta1;
    opt_cfg.beta2 = cfg.beta2;
    opt_cfg.eps = cfg.eps;
    opt_cfg.clip_norm = cfg.clip_norm;
    auto params = model.param_list();
    Adam<S> opt(params, opt_cfg);
    Rng rng = Rng(cfg.seed).fork(0x77);
    std::vector<size_t> order(train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    size_t cursor = order.size();

    PretrainReport report;
    for (int step = 0; step < cfg.steps; ++step) {
        for (const auto& p : params) p->zero_grad();
        double batch_loss = 0.0;
        for (int b = 0; b < cfg.batch; ++b) {
            if (cursor == order.size()) {
                rng.shuffle(order);
                cursor = 0;
            }
            Graph<S> g;
            auto loss = detail::corpus_loss(g, model, train[order[cursor++]], false);
            g.backward(loss);
            batch_loss += double(loss->v[0]);
        }
        batch_loss /= double(cfg.batch);
        if (!std::isfinite(batch_loss))
            throw std::runtime_error(format_msg("pretrain_ulm: non-finite loss at step ", step));
        for (const auto& p : params)
            for (auto& gv : p->g) gv = S(double(gv) / double(cfg.batch));
        opt.step();
        report.step_loss.push_back(batch_loss);
    }
    for (const auto& p : params) p->zero_grad();
    model.set_trainable(false);
    report.steps_run = cfg.steps;

    double total = 0.0, total_no_eos = 0.0;
    for (const auto& seq : valid) {
        Graph<S> g;
        total += double(detail::corpus_loss(g, model, seq, false)->v[0]);
        Graph<S> g2;
        total_no_eos += double(detail::corpus_loss(g2, model, seq, true)->v[0]);
    }
    report.valid_loss = total / double(valid.size());
    report.valid_loss_no_eos = total_no_eos / double(valid.size());

    // Add-one smoothed unigram model fit on training targets.
    SpecialTokens st = special_tokens(model.config.v_units);
    std::vector<int64_t> counts(size_t(model.config.vocab()), 1);
    int64_t total_count = model.config.vocab();
    for (const auto& seq : train) {
        for (size_t t = 1; t < seq.size(); ++t) counts[size_t(seq[t])] += 1;
        counts[size_t(st.eos)] += 1;
        total_count += int64_t(seq.size());
    }
    double nll = 0.0;
    int64_t n_targets = 0;
    for (const auto& seq : valid) {
        for (size_t t = 1; t < seq.size(); ++t)
            nll -= std::log(double(counts[size_t(seq[t])]) / double(total_count));
        nll -= std::log(double(counts[size_t(st.eos)]) / double(total_count));
        n_targets += int64_t(seq.size());
    }
    report.unigram_baseline = nll / double(n_targets);
    return report;
}

}  // namespace unitprompt
