#pragma once

#include <algorithm>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "common.hpp"
#include "tasks.hpp"

namespace unitprompt {

// Levenshtein distance with unit insert/delete/substitute costs, two-row DP.
template <typename T>
int edit_distance(const std::vector<T>& a, const std::vector<T>& b) {
    size_t n = a.size(), m = b.size();
    std::vector<int> prev(m + 1), cur(m + 1);
    for (size_t j = 0; j <= m; ++j) prev[j] = int(j);
    for (size_t i = 1; i <= n; ++i) {
        cur[0] = int(i);
        for (size_t j = 1; j <= m; ++j) {
            int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        prev.swap(cur);
    }
    return prev[m];
}

struct EvalResult {
    TaskKind kind = TaskKind::cls_single;
    int n_examples = 0;
    std::map<std::string, double> metrics;

    double metric(const std::string& name) const {
        auto it = metrics.find(name);
        require(it != metrics.end(), format_msg("EvalResult: no metric '", name, "'"));
        return it->second;
    }

    // Scalar used for model selection; always higher-is-better.
    double primary() const {
        if (kind == TaskKind::cls_single || kind == TaskKind::cls_multi)
            return metric("accuracy");
        return 100.0 - metric("cer");
    }
};

namespace detail {

inline bool is_tag(const std::string& tok) { return tok.size() > 1 && tok.front() == '<'; }

// Characters of a label sequence with any slot tags removed.
inline std::vector<std::string> strip_tags(const std::vector<std::string>& labels) {
    std::vector<std::string> chars;
    for (const auto& tok : labels)
        if (!is_tag(tok)) chars.push_back(tok);
    return chars;
}

inline std::vector<std::string> to_words(const std::vector<std::string>& chars) {
    std::vector<std::string> words;
    std::string cur;
    for (const auto& c : chars) {
        if (c == " ") {
            if (!cur.empty()) words.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) words.push_back(cur);
    return words;
}

// (type, value) pairs from a tagged sequence. Generated output is untrusted:
// an unmatched or nested tag closes nothing and simply never yields a pair.
inline std::vector<std::pair<std::string, std::string>> slot_pairs(
    const std::vector<std::string>& labels) {
    std::vector<std::pair<std::string, std::string>> pairs;
    std::string open, value;
    for (const auto& tok : labels) {
        if (!is_tag(tok)) {
            if (!open.empty()) value += tok;
            continue;
        }
        if (tok[1] != '/') {
            open = tok.substr(1, tok.size() - 2);
            value.clear();
        } else if (!open.empty() && tok.substr(2, tok.size() - 3) == open) {
            pairs.emplace_back(open, value);
            open.clear();
        } else {
            open.clear();
        }
    }
    return pairs;
}

}  // namespace detail

// Corpus-level metrics for one split. Classification accuracy is exact match
// of the full label sequence; recognition reports corpus CER and WER as
// 100 * total edit distance / total reference length; the slot task reports
// F1 over (slot-type, value) pairs plus CER on the tag-stripped characters.
inline EvalResult evaluate(TaskKind kind, const std::vector<LabeledExample>& refs,
                           const std::vector<std::vector<std::string>>& preds) {
    require(refs.size() == preds.size(),
            format_msg("evaluate: ", refs.size(), " references but ", preds.size(),
                       " predictions"));
    require(!refs.empty(), "evaluate: empty split");

    EvalResult r;
    r.kind = kind;
    r.n_examples = int(refs.size());

    if (kind == TaskKind::cls_single || kind == TaskKind::cls_multi) {
        int hits = 0;
        for (size_t i = 0; i < refs.size(); ++i)
            hits += (preds[i] == refs[i].labels) ? 1 : 0;
        r.metrics["accuracy"] = 100.0 * double(hits) / double(refs.size());
        return r;
    }

    int64_t char_edits = 0, char_total = 0, word_edits = 0, word_total = 0;
    int64_t pair_hits = 0, pair_pred = 0, pair_ref = 0;
    for (size_t i = 0; i < refs.size(); ++i) {
        auto ref_chars = detail::strip_tags(refs[i].labels);
        auto pred_chars = detail::strip_tags(preds[i]);
        char_edits += edit_distance(ref_chars, pred_chars);
        char_total += int64_t(ref_chars.size());
        auto ref_words = detail::to_words(ref_chars);
        auto pred_words = detail::to_words(pred_chars);
        word_edits += edit_distance(ref_words, pred_words);
        word_total += int64_t(ref_words.size());

        if (kind == TaskKind::slot_gen) {
            auto rp = detail::slot_pairs(refs[i].labels);
            auto pp = detail::slot_pairs(preds[i]);
            pair_ref += int64_t(rp.size());
            pair_pred += int64_t(pp.size());
            std::multiset<std::pair<std::string, std::string>> bag(rp.begin(), rp.end());
            for (const auto& p : pp) {
                auto it = bag.find(p);
                if (it != bag.end()) {
                    bag.erase(it);
                    ++pair_hits;
                }
            }
        }
    }
    require(char_total > 0, "evaluate: references have no characters");
    r.metrics["cer"] = 100.0 * double(char_edits) / double(char_total);
    r.metrics["wer"] = word_total > 0 ? 100.0 * double(word_edits) / double(word_total) : 0.0;
    if (kind == TaskKind::slot_gen) {
        double precision = pair_pred > 0 ? double(pair_hits) / double(pair_pred) : 0.0;
        double recall = pair_ref > 0 ? double(pair_hits) / double(pair_ref) : 0.0;
        r.metrics["slot_f1"] = (precision + recall) > 0.0
                                   ? 100.0 * 2.0 * precision * recall / (precision + recall)
                                   : 0.0;
    }
    return r;
}

struct BucketRow {
    int lo = 0, hi = 0;
    int n = 0;
    double cer = 0.0;
};

// Per-label-length-bucket CER. Buckets with no examples are omitted with a
// warning on stderr.
inline std::vector<BucketRow> length_bucket_report(
    const std::vector<LabeledExample>& refs, const std::vector<std::vector<std::string>>& preds,
    const std::vector<std::pair<int, int>>& buckets) {
    require(refs.size() == preds.size(),
            format_msg("length_bucket_report: ", refs.size(), " references but ", preds.size(),
                       " predictions"));
    std::vector<BucketRow> rows;
    for (auto [lo, hi] : buckets) {
        int64_t edits = 0, total = 0;
        int n = 0;
        for (size_t i = 0; i < refs.size(); ++i) {
            int len = int(refs[i].labels.size());
            if (len < lo || len > hi) continue;
            auto ref_chars = detail::strip_tags(refs[i].labels);
            auto pred_chars = detail::strip_tags(preds[i]);
            edits += edit_distance(ref_chars, pred_chars);
            total += int64_t(ref_chars.size());
            ++n;
        }
        if (n == 0) {
            std::cerr << "warning: length bucket [" << lo << ", " << hi
                      << "] has no examples, row omitted\n";
            continue;
        }
        rows.push_back({lo, hi, n, 100.0 * double(edits) / double(total)});
    }
    return rows;
}

}  // namespace unitprompt
