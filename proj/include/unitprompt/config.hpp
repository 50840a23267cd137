#pragma once

#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "common.hpp"
#include "prompt.hpp"
#include "tasks.hpp"
#include "train.hpp"
#include "ulm.hpp"

namespace unitprompt {

// Flat dotted-key configuration. Files hold one `key = value` pair per line;
// '#' starts a comment. Every key has a default, unknown keys are rejected,
// and the full effective configuration can be dumped back out in a fixed
// order.
class KeyValueConfig {
public:
    KeyValueConfig() = default;

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    void parse_line(const std::string& line) {
        std::string body = line.substr(0, line.find('#'));
        auto first = body.find_first_not_of(" \t\r");
        if (first == std::string::npos) return;
        auto eq = body.find('=');
        require(eq != std::string::npos, format_msg("config: line '", line, "' has no '='"));
        set(trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
    }

    void parse_text(const std::string& text) {
        std::istringstream in(text);
        std::string line;
        while (std::getline(in, line)) parse_line(line);
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback) {
        touched_.insert(key);
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    int64_t get_int(const std::string& key, int64_t fallback) {
        touched_.insert(key);
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            size_t used = 0;
            int64_t v = std::stoll(it->second, &used);
            require(used == it->second.size(), "trailing characters");
            return v;
        } catch (const std::exception&) {
            throw std::invalid_argument(
                format_msg("config: key '", key, "' has non-integer value '", it->second, "'"));
        }
    }

    double get_double(const std::string& key, double fallback) {
        touched_.insert(key);
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            size_t used = 0;
            double v = std::stod(it->second, &used);
            require(used == it->second.size(), "trailing characters");
            return v;
        } catch (const std::exception&) {
            throw std::invalid_argument(
                format_msg("config: key '", key, "' has non-numeric value '", it->second, "'"));
        }
    }

    // Call after reading everything: any key never consumed is a typo.
    void reject_unknown_keys() const {
        for (const auto& [k, v] : values_)
            require(touched_.count(k) > 0, format_msg("config: unknown key '", k, "'"));
    }

private:
    static std::string trim(const std::string& s) {
        auto b = s.find_first_not_of(" \t\r");
        auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    }

    std::map<std::string, std::string> values_;
    std::set<std::string> touched_;
};

// Everything one experiment stage needs, resolved from a KeyValueConfig.
struct ExperimentConfig {
    TaskKind task = TaskKind::cls_multi;
    uint64_t data_seed = 101;
    uint64_t grammar_seed = 7;
    SplitSizes sizes;
    int n_classes = 12;
    std::vector<std::pair<int, int>> buckets = {{5, 10}, {20, 30}, {50, 80}};

    ULMConfig ulm;
    uint64_t ulm_seed = 40;
    int corpus_size = 800;
    PretrainConfig pretrain;

    std::string method = "deep";  // input | deep | finetune_lm
    int prompt_l = 3;
    uint64_t prompt_seed = 501;
    TrainConfig tune;

    PromptMode prompt_mode() const {
        require(method != "finetune_lm", "ExperimentConfig: FT-LM runs have no prompt mode");
        return prompt_mode_from(method);
    }

    Dataset make_dataset() const {
        switch (task) {
            case TaskKind::cls_single:
                return gen_cls_single(data_seed, n_classes, sizes, grammar_seed, ulm.v_units);
            case TaskKind::cls_multi:
                return gen_cls_multi(data_seed, 3, sizes, grammar_seed, ulm.v_units);
            case TaskKind::seq_gen:
                return gen_seq_gen(data_seed, int(seq_alphabet().size()), buckets, sizes,
                                   ulm.v_units);
            case TaskKind::slot_gen:
                return gen_slot_gen(data_seed, sizes, ulm.v_units);
        }
        throw std::logic_error("make_dataset: unreachable");
    }
};

namespace detail {

inline std::vector<std::pair<int, int>> parse_buckets(const std::string& text) {
    std::vector<std::pair<int, int>> buckets;
    for (const auto& part : split_string(text, ',')) {
        auto bounds = split_string(part, '-');
        require(bounds.size() == 2, format_msg("config: bad bucket '", part, "'"));
        buckets.emplace_back(std::stoi(bounds[0]), std::stoi(bounds[1]));
    }
    return buckets;
}

inline std::string buckets_to_string(const std::vector<std::pair<int, int>>& buckets) {
    std::vector<std::string> parts;
    for (auto [lo, hi] : buckets) parts.push_back(format_msg(lo, "-", hi));
    return join_strings(parts, ",");
}

}  // namespace detail

inline ExperimentConfig resolve_experiment(KeyValueConfig& kv) {
    ExperimentConfig e;
    e.task = task_kind_from(kv.get_string("task.kind", task_kind_name(e.task)));
    e.data_seed = uint64_t(kv.get_int("data.seed", int64_t(e.data_seed)));
    e.grammar_seed = uint64_t(kv.get_int("data.grammar_seed", int64_t(e.grammar_seed)));
    e.sizes.train = int(kv.get_int("data.train", e.sizes.train));
    e.sizes.valid = int(kv.get_int("data.valid", e.sizes.valid));
    e.sizes.test = int(kv.get_int("data.test", e.sizes.test));
    e.n_classes = int(kv.get_int("data.n_classes", e.n_classes));
    e.buckets = detail::parse_buckets(
        kv.get_string("data.buckets", detail::buckets_to_string(e.buckets)));

    e.ulm.L = int(kv.get_int("ulm.L", e.ulm.L));
    e.ulm.d = int(kv.get_int("ulm.d", e.ulm.d));
    e.ulm.h = int(kv.get_int("ulm.h", e.ulm.h));
    e.ulm.d_ff = int(kv.get_int("ulm.d_ff", e.ulm.d_ff));
    e.ulm.v_units = int(kv.get_int("ulm.v_units", e.ulm.v_units));
    e.ulm.t_max = int(kv.get_int("ulm.t_max", e.ulm.t_max));
    e.ulm_seed = uint64_t(kv.get_int("ulm.seed", int64_t(e.ulm_seed)));

    e.corpus_size = int(kv.get_int("pretrain.corpus_size", e.corpus_size));
    e.pretrain.steps = int(kv.get_int("pretrain.steps", e.pretrain.steps));
    e.pretrain.batch = int(kv.get_int("pretrain.batch", e.pretrain.batch));
    e.pretrain.lr = kv.get_double("pretrain.lr", e.pretrain.lr);
    e.pretrain.clip_norm = kv.get_double("pretrain.clip_norm", e.pretrain.clip_norm);
    e.pretrain.seed = uint64_t(kv.get_int("pretrain.seed", int64_t(e.pretrain.seed)));

    e.method = kv.get_string("tune.method", e.method);
    require(e.method == "input" || e.method == "deep" || e.method == "finetune_lm",
            format_msg("config: tune.method '", e.method, "' must be input, deep, or finetune_lm"));
    e.prompt_l = int(kv.get_int("prompt.l", e.prompt_l));
    e.prompt_seed = uint64_t(kv.get_int("prompt.seed", int64_t(e.prompt_seed)));

    e.tune.mode = e.method == "finetune_lm" ? TrainMode::finetune_lm : TrainMode::prompt_tune;
    e.tune.steps = int(kv.get_int("tune.steps", e.tune.steps));
    e.tune.batch = int(kv.get_int("tune.batch", e.tune.batch));
    e.tune.lr = kv.get_double("tune.lr", e.method == "finetune_lm" ? 1e-4 : e.tune.lr);
    e.tune.clip_norm = kv.get_double("tune.clip_norm", e.tune.clip_norm);
    e.tune.patience = int(kv.get_int("tune.patience", e.tune.patience));
    e.tune.seed = uint64_t(kv.get_int("tune.seed", int64_t(e.tune.seed)));
    return e;
}

inline std::string dump_experiment(const ExperimentConfig& e) {
    std::ostringstream out;
    out << "task.kind = " << task_kind_name(e.task) << "\n";
    out << "data.seed = " << e.data_seed << "\n";
    out << "data.grammar_seed = " << e.grammar_seed << "\n";
    out << "data.train = " << e.sizes.train << "\n";
    out << "data.valid = " << e.sizes.valid << "\n";
    out << "data.test = " << e.sizes.test << "\n";
    out << "data.n_classes = " << e.n_classes << "\n";
    out << "data.buckets = " << detail::buckets_to_string(e.buckets) << "\n";
    out << "ulm.L = " << e.ulm.L << "\n";
    out << "ulm.d = " << e.ulm.d << "\n";
    out << "ulm.h = " << e.ulm.h << "\n";
    out << "ulm.d_ff = " << e.ulm.d_ff << "\n";
    out << "ulm.v_units = " << e.ulm.v_units << "\n";
    out << "ulm.t_max = " << e.ulm.t_max << "\n";
    out << "ulm.seed = " << e.ulm_seed << "\n";
    out << "pretrain.corpus_size = " << e.corpus_size << "\n";
    out << "pretrain.steps = " << e.pretrain.steps << "\n";
    out << "pretrain.batch = " << e.pretrain.batch << "\n";
    out << "pretrain.lr = " << e.pretrain.lr << "\n";
    out << "pretrain.clip_norm = " << e.pretrain.clip_norm << "\n";
    out << "pretrain.seed = " << e.pretrain.seed << "\n";
    out << "tune.method = " << e.method << "\n";
    out << "prompt.l = " << e.prompt_l << "\n";
    out << "prompt.seed = " << e.prompt_seed << "\n";
    out << "tune.steps = " << e.tune.steps << "\n";
    out << "tune.batch = " << e.tune.batch << "\n";
    out << "tune.lr = " << e.tune.lr << "\n";
    out << "tune.clip_norm = " << e.tune.clip_norm << "\n";
    out << "tune.patience = " << e.tune.patience << "\n";
    out << "tune.seed = " << e.tune.seed << "\n";
    return out.str();
}

}  // namespace unitprompt
