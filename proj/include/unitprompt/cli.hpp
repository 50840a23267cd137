#pragma once

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "checkpoint.hpp"
#include "config.hpp"
#include "datafile.hpp"
#include "eval.hpp"
#include "infer.hpp"
#include "prompt.hpp"
#include "quantizer.hpp"
#include "tasks.hpp"
#include "train.hpp"
#include "ulm.hpp"
#include "verbalizer.hpp"

namespace unitprompt {

// Relative paths resolve under $UNITPROMPT_RESULTS when set, so a whole run
// can be redirected without touching any command line.
inline std::string resolve_path(const std::string& path) {
    namespace fs = std::filesystem;
    if (path.empty() || fs::path(path).is_absolute()) return path;
    const char* root = std::getenv("UNITPROMPT_RESULTS");
    if (root == nullptr || *root == '\0') return path;
    return (fs::path(root) / path).string();
}

inline ExperimentConfig load_experiment(const std::string& config_path) {
    KeyValueConfig kv;
    if (!config_path.empty()) kv.parse_text(detail::read_text(resolve_path(config_path)));
    ExperimentConfig e = resolve_experiment(kv);
    kv.reject_unknown_keys();
    return e;
}

namespace detail {

inline void require_ulm_matches(const ULMConfig& a, const ULMConfig& b) {
    require(a.L == b.L && a.d == b.d && a.h == b.h && a.d_ff == b.d_ff &&
                a.v_units == b.v_units && a.t_max == b.t_max,
            "checkpoint model geometry disagrees with the ulm.* config block");
}

inline Verbalizer load_verbalizer(const std::string& path, int v_units) {
    return verbalizer_from_text(read_text(resolve_path(path)), v_units);
}

template <typename S>
std::vector<std::vector<std::string>> collect_predictions(const ULM<S>& m,
                                                          const PromptSet<S>* prompts,
                                                          const Verbalizer& verb,
                                                          const std::vector<LabeledExample>& split) {
    int longest = 0;
    for (const auto& ex : split) longest = std::max(longest, int(ex.labels.size()));
    GenConfig gen{longest + 8};
    std::vector<std::vector<std::string>> preds;
    preds.reserve(split.size());
    for (const auto& ex : split)
        preds.push_back(decode_units(verb, generate_units(m, prompts, ex.input_units, gen)).labels);
    return preds;
}

inline void append_unique_row(CsvTable& t, const std::vector<std::string>& row) {
    if (std::find(t.rows.begin(), t.rows.end(), row) == t.rows.end()) t.rows.push_back(row);
}

}  // namespace detail

inline int cmd_gen_data(const std::string& config_path, const std::string& out_dir) {
    ExperimentConfig e = load_experiment(config_path);
    Dataset ds = e.make_dataset();
    save_dataset(resolve_path(out_dir), ds);
    std::cout << "wrote " << task_kind_name(ds.kind) << " dataset (" << ds.train.size() << "/"
              << ds.valid.size() << "/" << ds.test.size() << " examples) to " << out_dir << "\n";
    return 0;
}

inline int cmd_pretrain(const std::string& config_path, const std::string& out_ckpt,
                        const std::string& history_path) {
    ExperimentConfig e = load_experiment(config_path);
    auto corpus = gen_unit_corpus(e.grammar_seed, e.corpus_size, e.ulm.v_units);
    ULM<float> m = ulm_init<float>(e.ulm, e.ulm_seed);
    PretrainReport report = pretrain_ulm(m, corpus, e.pretrain);
    save_checkpoint(resolve_path(out_ckpt), checkpoint_of(m));
    if (!history_path.empty()) {
        CsvTable t;
        t.header = {"step", "metric", "value"};
        for (size_t i = 0; i < report.step_loss.size(); ++i)
            t.rows.push_back({std::to_string(i + 1), "train_loss",
                              detail::format_double(report.step_loss[i])});
        t.rows.push_back({std::to_string(report.steps_run), "valid_loss",
                          detail::format_double(report.valid_loss)});
        t.rows.push_back({std::to_string(report.steps_run), "valid_loss_no_eos",
                          detail::format_double(report.valid_loss_no_eos)});
        t.rows.push_back({std::to_string(report.steps_run), "unigram_baseline",
                          detail::format_double(report.unigram_baseline)});
        save_csv(resolve_path(history_path), t);
    }
    std::cout << "pretrained " << report.steps_run << " steps, valid loss " << report.valid_loss
              << " (unigram baseline " << report.unigram_baseline << ")\n";
    return 0;
}

inline int cmd_quantize(const std::string& features_path, const std::string& codebook_in,
                        const std::string& codebook_out, const std::string& units_out, int k,
                        int max_iters, uint64_t seed) {
    require(!codebook_in.empty() || !codebook_out.empty() || !units_out.empty(),
            "quantize: nothing to do, pass --codebook-out and/or --units-out");
    auto records = load_features(resolve_path(features_path));
    Codebook cb;
    if (!codebook_in.empty()) {
        cb = codebook_from_checkpoint(load_checkpoint(resolve_path(codebook_in)));
    } else {
        FeatureSeq pooled;
        for (const auto& r : records) pooled.insert(pooled.end(), r.features.begin(), r.features.end());
        cb = kmeans_fit(pooled, k, max_iters, seed);
    }
    if (!codebook_out.empty()) save_checkpoint(resolve_path(codebook_out), checkpoint_of(cb));
    if (!units_out.empty()) {
        std::vector<std::string> ids;
        std::vector<UnitSequence> units;
        for (const auto& r : records) {
            ids.push_back(r.id);
            units.push_back(deduplicate(quantize(r.features, cb)));
        }
        save_units(resolve_path(units_out), ids, units);
    }
    std::cout << "quantized " << records.size() << " records with k=" << cb.k << "\n";
    return 0;
}

inline int cmd_build_verbalizer(const std::string& dataset_dir, const std::string& out_path,
                                int v_units, bool random_assignment, uint64_t seed) {
    Dataset ds = load_dataset(resolve_path(dataset_dir));
    std::vector<UnitSequence> inputs;
    std::vector<std::vector<std::string>> labels;
    for (const auto& ex : ds.train) {
        inputs.push_back(ex.input_units);
        labels.push_back(ex.labels);
    }
    int n = int(ds.class_set.size());
    Verbalizer v = random_assignment ? build_random_verbalizer(inputs, labels, n, v_units, seed)
                                     : build_verbalizer(inputs, labels, n, v_units);
    detail::atomic_write_text(resolve_path(out_path), verbalizer_to_text(v));
    std::cout << "verbalizer over " << n << " labels written to " << out_path << "\n";
    return 0;
}

inline int cmd_tune(const std::string& config_path, const std::string& ulm_ckpt,
                    const std::string& dataset_dir, const std::string& verbalizer_path,
                    const std::string& out_ckpt, const std::string& history_path) {
    ExperimentConfig e = load_experiment(config_path);
    ULM<float> m = ulm_from_checkpoint(load_checkpoint(resolve_path(ulm_ckpt)));
    detail::require_ulm_matches(m.config, e.ulm);
    Dataset ds = load_dataset(resolve_path(dataset_dir));
    require(ds.kind == e.task, format_msg("tune: dataset is ", task_kind_name(ds.kind),
                                          " but config says ", task_kind_name(e.task)));
    Verbalizer verb = detail::load_verbalizer(verbalizer_path, m.config.v_units);

    TrainReport report;
    if (e.method == "finetune_lm") {
        report = finetune_lm(m, ds, verb, e.tune);
        save_checkpoint(resolve_path(out_ckpt), checkpoint_of(m));
    } else {
        PromptSet<float> p = prompt_init<float>(e.prompt_mode(), e.prompt_l, m.config, e.prompt_seed);
        report = prompt_tune(m, p, ds, verb, e.tune);
        save_checkpoint(resolve_path(out_ckpt), checkpoint_of(p));
    }
    if (!history_path.empty()) save_history(resolve_path(history_path), report);
    std::cout << e.method << " tuning ran " << report.steps_run << " steps, best valid "
              << report.best_valid << " at epoch " << report.best_epoch << "\n";
    return 0;
}

inline int cmd_eval(const std::string& config_path, const std::string& ulm_ckpt,
                    const std::string& tuned_ckpt, const std::string& dataset_dir,
                    const std::string& verbalizer_path, const std::string& split,
                    const std::string& metrics_path) {
    namespace fs = std::filesystem;
    ExperimentConfig e = load_experiment(config_path);
    Dataset ds = load_dataset(resolve_path(dataset_dir));
    Verbalizer verb = detail::load_verbalizer(verbalizer_path, e.ulm.v_units);

    ULM<float> m;
    PromptSet<float> prompts;
    const PromptSet<float>* pp = nullptr;
    std::string mode_label;
    long long params = 0;
    if (e.method == "finetune_lm") {
        m = ulm_from_checkpoint(load_checkpoint(resolve_path(tuned_ckpt)));
        mode_label = "finetune_lm";
        params = static_cast<long long>(m.param_count());
    } else {
        m = ulm_from_checkpoint(load_checkpoint(resolve_path(ulm_ckpt)));
        prompts = prompts_from_checkpoint(load_checkpoint(resolve_path(tuned_ckpt)));
        pp = &prompts;
        mode_label = prompt_mode_name(prompts.mode);
        params = count_trainable_params(prompts.mode, prompts.l, m.config.d, m.config.L);
    }
    detail::require_ulm_matches(m.config, e.ulm);

    const auto& exs = ds.split(split);
    auto preds = detail::collect_predictions(m, pp, verb, exs);
    EvalResult r = evaluate(ds.kind, exs, preds);

    std::string out = resolve_path(metrics_path);
    CsvTable t = fs::exists(out) ? load_csv(out) : metrics_table();
    require(t.header == metrics_table().header,
            format_msg("eval: '", metrics_path, "' is not a metrics table"));
    CsvTable fresh = metrics_table();
    int l = pp != nullptr ? prompts.l : 0;
    for (const auto& [name, value] : r.metrics)
        append_metric(fresh, task_kind_name(ds.kind), mode_label, l, params, e.tune.seed, name,
                      value);
    if (ds.kind == TaskKind::seq_gen)
        for (const auto& row : length_bucket_report(exs, preds, e.buckets))
            append_metric(fresh, task_kind_name(ds.kind), mode_label, l, params, e.tune.seed,
                          format_msg("cer_", row.lo, "_", row.hi), row.cer);
    for (const auto& row : fresh.rows) detail::append_unique_row(t, row);
    save_csv(out, t);

    std::cout << split << " n=" << r.n_examples;
    for (const auto& [name, value] : r.metrics) std::cout << " " << name << "=" << value;
    std::cout << "\n";
    return 0;
}

inline int cmd_generate(const std::string& ulm_ckpt, const std::string& prompt_ckpt,
                        const std::string& verbalizer_path, const std::string& units_text,
                        int max_new) {
    ULM<float> m = ulm_from_checkpoint(load_checkpoint(resolve_path(ulm_ckpt)));
    PromptSet<float> prompts;
    const PromptSet<float>* pp = nullptr;
    if (!prompt_ckpt.empty()) {
        prompts = prompts_from_checkpoint(load_checkpoint(resolve_path(prompt_ckpt)));
        pp = &prompts;
    }
    Verbalizer verb = detail::load_verbalizer(verbalizer_path, m.config.v_units);
    UnitSequence u_x;
    for (const auto& part : split_string(units_text, ','))
        if (!part.empty()) u_x.push_back(std::stoi(part));
    require(!u_x.empty(), "generate: --units must hold a comma-separated unit list");

    UnitSequence u_y = generate_units(m, pp, u_x, GenConfig{max_new});
    DecodeResult dec = decode_units(verb, u_y);
    std::cout << join_strings(dec.labels, " ") << "\n";
    if (dec.invalid_tokens > 0)
        std::cerr << dec.invalid_tokens << " generated units had no label\n";
    return 0;
}

namespace detail {

struct MetricKey {
    std::string task, mode;
    long long l = 0, params = 0;
    bool operator<(const MetricKey& o) const {
        return std::tie(task, mode, l, params) < std::tie(o.task, o.mode, o.l, o.params);
    }
};

inline std::vector<std::vector<std::string>> gather_metric_rows(const std::string& results_dir) {
    namespace fs = std::filesystem;
    std::string dir = resolve_path(results_dir);
    require(fs::is_directory(dir), format_msg("report: '", results_dir, "' is not a directory"));
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".csv")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    std::vector<std::vector<std::string>> rows;
    const auto expect = metrics_table().header;
    for (const auto& f : files) {
        CsvTable t = load_csv(f.string());
        if (t.header != expect) continue;
        for (const auto& row : t.rows)
            if (std::find(rows.begin(), rows.end(), row) == rows.end()) rows.push_back(row);
    }
    return rows;
}

}  // namespace detail

inline int cmd_report(const std::string& results_dir, const std::string& out_dir) {
    auto rows = detail::gather_metric_rows(results_dir);
    require(!rows.empty(), format_msg("report: no metrics rows under '", results_dir, "'"));

    // columns: task, mode, l, params, seed, metric, value
    std::map<detail::MetricKey, std::vector<double>> acc;
    std::map<std::pair<detail::MetricKey, std::pair<int, int>>, std::vector<double>> bucket_cer;
    for (const auto& row : rows) {
        detail::MetricKey key{row[0], row[1], std::stoll(row[2]), std::stoll(row[3])};
        const std::string& metric = row[5];
        double value = std::stod(row[6]);
        if (metric == "accuracy") acc[key].push_back(value);
        auto parts = split_string(metric, '_');
        if (parts.size() == 3 && parts[0] == "cer")
            bucket_cer[{key, {std::stoi(parts[1]), std::stoi(parts[2])}}].push_back(value);
    }

    auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / double(v.size());
    };

    CsvTable by_length;
    by_length.header = {"task", "mode", "l", "params", "n_seeds", "mean_accuracy"};
    for (const auto& [k, vals] : acc)
        by_length.rows.push_back({k.task, k.mode, std::to_string(k.l), std::to_string(k.params),
                                  std::to_string(vals.size()),
                                  detail::format_double(mean(vals))});

    CsvTable by_params;
    by_params.header = {"task", "mode", "params", "l", "n_seeds", "mean_accuracy"};
    std::vector<std::pair<std::tuple<std::string, long long, std::string>, detail::MetricKey>> order;
    for (const auto& [k, vals] : acc) order.push_back({{k.task, k.params, k.mode}, k});
    std::sort(order.begin(), order.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [_, k] : order)
        by_params.rows.push_back({k.task, k.mode, std::to_string(k.params), std::to_string(k.l),
                                  std::to_string(acc[k].size()),
                                  detail::format_double(mean(acc[k]))});

    CsvTable by_bucket;
    by_bucket.header = {"task", "mode", "l", "bucket_lo", "bucket_hi", "n_seeds", "mean_cer"};
    for (const auto& [kb, vals] : bucket_cer)
        by_bucket.rows.push_back({kb.first.task, kb.first.mode, std::to_string(kb.first.l),
                                  std::to_string(kb.second.first), std::to_string(kb.second.second),
                                  std::to_string(vals.size()), detail::format_double(mean(vals))});

    std::filesystem::create_directories(resolve_path(out_dir));
    save_csv(resolve_path(out_dir) + "/accuracy_vs_length.csv", by_length);
    save_csv(resolve_path(out_dir) + "/accuracy_vs_params.csv", by_params);
    save_csv(resolve_path(out_dir) + "/cer_vs_bucket.csv", by_bucket);
    std::cout << "report tables written to " << out_dir << " (" << by_length.rows.size()
              << " accuracy rows, " << by_bucket.rows.size() << " bucket rows)\n";
    return 0;
}

}  // namespace unitprompt
