#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "common.hpp"
#include "rng.hpp"

namespace unitprompt {

// One-to-one mapping between task labels and unit ids, built by aligning the
// frequency ranks of units and classes in the training data.
struct Verbalizer {
    std::map<std::string, int> label_to_unit;
    std::map<int, std::string> unit_to_label;
    // label[i] is mapped to unit[i]; kept in rank order for serialization.
    std::vector<std::pair<std::string, int>> rank_order;
    int eos_id = -1;
};

struct DecodeResult {
    std::vector<std::string> labels;
    int invalid_tokens = 0;
    bool saw_eos = false;
};

namespace detail {

inline std::vector<int> units_by_frequency(const std::vector<UnitSequence>& inputs) {
    std::map<int, long long> counts;
    for (const auto& seq : inputs)
        for (int u : seq) ++counts[u];
    std::vector<std::pair<int, long long>> items(counts.begin(), counts.end());
    std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::vector<int> out;
    out.reserve(items.size());
    for (const auto& [u, c] : items) out.push_back(u);
    return out;
}

inline std::vector<std::string> classes_by_frequency(
    const std::vector<std::vector<std::string>>& labels) {
    std::map<std::string, long long> counts;
    for (const auto& seq : labels)
        for (const auto& c : seq) ++counts[c];
    std::vector<std::pair<std::string, long long>> items(counts.begin(), counts.end());
    std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::vector<std::string> out;
    out.reserve(items.size());
    for (const auto& [c, n] : items) out.push_back(c);
    return out;
}

}  // namespace detail

// Aligns the N most frequent units with the N most frequent classes, both in
// descending count order. Ties break to the lower unit id and the
// lexicographically smaller label. Inputs are expected in deduplicated form,
// the same form the language model consumes.
inline Verbalizer build_verbalizer(const std::vector<UnitSequence>& train_inputs,
                                   const std::vector<std::vector<std::string>>& train_labels, int n,
                                   int v_units) {
    require(n >= 1, format_msg("build_verbalizer: N must be positive, got ", n));
    require(n <= v_units, format_msg("build_verbalizer: N=", n, " exceeds V_units=", v_units));
    require(train_inputs.size() == train_labels.size(),
            format_msg("build_verbalizer: ", train_inputs.size(), " inputs vs ", train_labels.size(),
                       " label rows"));
    for (const auto& seq : train_inputs)
        for (int u : seq)
            require(0 <= u && u < v_units,
                    format_msg("build_verbalizer: unit ", u, " outside [0, ", v_units, ")"));

    auto units = detail::units_by_frequency(train_inputs);
    auto classes = detail::classes_by_frequency(train_labels);
    require(static_cast<int>(units.size()) >= n,
            format_msg("build_verbalizer: only ", units.size(), " distinct units for N=", n));
    require(static_cast<int>(classes.size()) == n,
            format_msg("build_verbalizer: ", classes.size(), " distinct classes, expected exactly ", n));

    Verbalizer v;
    v.eos_id = special_tokens(v_units).eos;
    for (int i = 0; i < n; ++i) {
        v.label_to_unit[classes[i]] = units[i];
        v.unit_to_label[units[i]] = classes[i];
        v.rank_order.emplace_back(classes[i], units[i]);
    }
    return v;
}

// Ablation variant: classes keep their frequency rank but units are assigned
// by a seeded shuffle of the top-N frequent units.
inline Verbalizer build_random_verbalizer(const std::vector<UnitSequence>& train_inputs,
                                          const std::vector<std::vector<std::string>>& train_labels,
                                          int n, int v_units, uint64_t seed) {
    Verbalizer v = build_verbalizer(train_inputs, train_labels, n, v_units);
    std::vector<int> units;
    units.reserve(v.rank_order.size());
    for (const auto& [c, u] : v.rank_order) units.push_back(u);
    Rng rng(seed);
    rng.shuffle(units);
    Verbalizer out;
    out.eos_id = v.eos_id;
    for (size_t i = 0; i < v.rank_order.size(); ++i) {
        const std::string& c = v.rank_order[i].first;
        out.label_to_unit[c] = units[i];
        out.unit_to_label[units[i]] = c;
        out.rank_order.emplace_back(c, units[i]);
    }
    return out;
}

// Elementwise v(y) with EOS appended; length |y| + 1.
inline UnitSequence encode_labels(const Verbalizer& v, const std::vector<std::string>& y) {
    UnitSequence out;
    out.reserve(y.size() + 1);
    for (const auto& label : y) {
        auto it = v.label_to_unit.find(label);
        if (it == v.label_to_unit.end())
            throw std::invalid_argument(format_msg("encode_labels: unknown label '", label, "'"));
        out.push_back(it->second);
    }
    out.push_back(v.eos_id);
    return out;
}

// Inverse mapping over generated units. Stops at the first EOS; units outside
// the verbalizer image are counted as diagnostics and skipped, since model
// output is untrusted.
inline DecodeResult decode_units(const Verbalizer& v, const UnitSequence& u_y) {
    DecodeResult r;
    for (int u : u_y) {
        if (u == v.eos_id) {
            r.saw_eos = true;
            break;
        }
        auto it = v.unit_to_label.find(u);
        if (it == v.unit_to_label.end()) {
            ++r.invalid_tokens;
            continue;
        }
        r.labels.push_back(it->second);
    }
    return r;
}

inline std::string verbalizer_to_text(const Verbalizer& v) {
    std::string out;
    for (const auto& [label, unit] : v.rank_order)
        out += label + "\t" + std::to_string(unit) + "\n";
    return out;
}

inline Verbalizer verbalizer_from_text(const std::string& text, int v_units) {
    Verbalizer v;
    v.eos_id = special_tokens(v_units).eos;
    for (const std::string& line : split_string(text, '\n')) {
        if (line.empty()) continue;
        auto parts = split_string(line, '\t');
        require(parts.size() == 2, format_msg("verbalizer_from_text: malformed line '", line, "'"));
        int unit = std::stoi(parts[1]);
        require(0 <= unit && unit < v_units,
                format_msg("verbalizer_from_text: unit ", unit, " outside [0, ", v_units, ")"));
        require(!v.label_to_unit.count(parts[0]),
                format_msg("verbalizer_from_text: duplicate label '", parts[0], "'"));
        require(!v.unit_to_label.count(unit),
                format_msg("verbalizer_from_text: duplicate unit ", unit));
        v.label_to_unit[parts[0]] = unit;
        v.unit_to_label[unit] = parts[0];
        v.rank_order.emplace_back(parts[0], unit);
    }
    return v;
}

}  // namespace unitprompt
