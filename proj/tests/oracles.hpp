#pragma once

// Reference implementations and randomized suite drivers used by the unit
// tests and the acceptance binary. Each reference is written independently of
// the library code path it checks, in the most literal formulation available.

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "unitprompt/eval.hpp"
#include "unitprompt/quantizer.hpp"
#include "unitprompt/rng.hpp"
#include "unitprompt/verbalizer.hpp"

namespace oracles {

struct SuiteResult {
    long long cases = 0;
    long long failures = 0;
    bool ok() const { return cases > 0 && failures == 0; }
};

// Literal run-collapse: emit the head of each maximal run, skip to its end.
inline std::vector<int> dedup_reference(const std::vector<int>& in) {
    std::vector<int> out;
    size_t i = 0;
    while (i < in.size()) {
        out.push_back(in[i]);
        size_t j = i;
        while (j < in.size() && in[j] == in[i]) ++j;
        i = j;
    }
    return out;
}

inline SuiteResult run_dedup_suite(long long trials, uint64_t seed) {
    using namespace unitprompt;
    SuiteResult r;
    auto check_one = [&](const UnitSequence& s) {
        ++r.cases;
        UnitSequence got = deduplicate(s);
        if (got != dedup_reference(s)) ++r.failures;
        if (deduplicate(got) != got) ++r.failures;
        for (size_t i = 1; i < got.size(); ++i)
            if (got[i] == got[i - 1]) ++r.failures;
        // Subsequence check: got must embed into s in order.
        size_t si = 0;
        for (int u : got) {
            while (si < s.size() && s[si] != u) ++si;
            if (si == s.size()) {
                ++r.failures;
                break;
            }
            ++si;
        }
    };
    check_one({71, 11, 11, 63, 63, 63});
    check_one({5});
    check_one({1, 1, 2, 1, 1});
    check_one({});
    Rng rng(seed);
    while (r.cases < trials) {
        int len = int(rng.uniform_int(0, 40));
        int alphabet = int(rng.uniform_int(1, 5));
        UnitSequence s(len);
        for (int& u : s) u = int(rng.uniform_int(0, alphabet - 1));
        check_one(s);
    }
    return r;
}

inline SuiteResult run_quantize_suite(long long trials, uint64_t seed) {
    using namespace unitprompt;
    SuiteResult r;
    auto check_one = [&](const FeatureSeq& frames, const Codebook& cb) {
        ++r.cases;
        UnitSequence got = quantize(frames, cb);
        if (got.size() != frames.size()) {
            ++r.failures;
            return;
        }
        for (size_t t = 0; t < frames.size(); ++t) {
            std::vector<double> dist(cb.k);
            for (int c = 0; c < cb.k; ++c) {
                double acc = 0.0;
                for (int j = 0; j < cb.d_f; ++j) {
                    double diff = double(frames[t][j]) - double(cb.centroid(c)[j]);
                    acc += diff * diff;
                }
                dist[c] = acc;
            }
            int expect = int(std::min_element(dist.begin(), dist.end()) - dist.begin());
            if (got[t] != expect) ++r.failures;
        }
    };
    {
        // Engineered exact tie: frame midway between centroids 2 and 5.
        Codebook cb;
        cb.k = 6;
        cb.d_f = 2;
        cb.centroids = {9, 9, 9, -9, 1, 0, -9, 9, -9, -9, 3, 0};
        check_one({{2, 0}}, cb);
    }
    Rng rng(seed);
    while (r.cases < trials) {
        Codebook cb;
        cb.k = int(rng.uniform_int(1, 8));
        cb.d_f = int(rng.uniform_int(1, 4));
        cb.centroids.resize(size_t(cb.k) * cb.d_f);
        for (auto& c : cb.centroids) c = float(rng.uniform(-2, 2));
        int n = int(rng.uniform_int(1, 30));
        FeatureSeq frames(n, FeatureFrame(cb.d_f));
        for (auto& f : frames) {
            if (rng.uniform() < 0.15) {
                // Snap onto a centroid for exact-hit cases.
                int c = int(rng.uniform_int(0, cb.k - 1));
                std::copy(cb.centroid(c), cb.centroid(c) + cb.d_f, f.begin());
            } else {
                for (auto& x : f) x = float(rng.uniform(-2, 2));
            }
        }
        check_one(frames, cb);
    }
    return r;
}

inline SuiteResult run_verbalizer_suite(long long trials, uint64_t seed) {
    using namespace unitprompt;
    SuiteResult r;
    Rng rng(seed);
    int v_units = 40;
    while (r.cases < trials) {
        ++r.cases;
        int n_class = int(rng.uniform_int(1, 12));
        std::vector<std::string> classes;
        for (int c = 0; c < n_class; ++c) classes.push_back(format_msg("c", char('a' + c)));
        int n_examples = int(rng.uniform_int(n_class, 30));
        std::vector<UnitSequence> inputs(n_examples);
        std::vector<std::vector<std::string>> labels(n_examples);
        for (int e = 0; e < n_examples; ++e) {
            int ulen = int(rng.uniform_int(1, 10));
            for (int t = 0; t < ulen; ++t)
                inputs[e].push_back(int(rng.uniform_int(0, v_units - 1)));
            int ylen = int(rng.uniform_int(1, 4));
            for (int t = 0; t < ylen; ++t)
                labels[e].push_back(classes[size_t(rng.uniform_int(0, n_class - 1))]);
        }
        // Force coverage: every class appears, and at least n_class distinct units.
        for (int c = 0; c < n_class; ++c) {
            labels[c % n_examples].push_back(classes[c]);
            inputs[c % n_examples].push_back(c);
        }

        Verbalizer v = build_verbalizer(inputs, labels, n_class, v_units);

        // Brute-force frequency ranking.
        std::map<int, long long> ucount;
        for (const auto& s : inputs)
            for (int u : s) ++ucount[u];
        std::map<std::string, long long> ccount;
        for (const auto& y : labels)
            for (const auto& c : y) ++ccount[c];
        std::vector<std::pair<long long, int>> urank;
        for (const auto& [u, n] : ucount) urank.push_back({-n, u});
        std::sort(urank.begin(), urank.end());
        std::vector<std::pair<long long, std::string>> crank;
        for (const auto& [c, n] : ccount) crank.push_back({-n, c});
        std::sort(crank.begin(), crank.end());

        bool ok = int(v.rank_order.size()) == n_class;
        for (int i = 0; ok && i < n_class; ++i)
            ok = v.rank_order[i].first == crank[i].second && v.rank_order[i].second == urank[i].second;
        // Bijection round-trip on a random label sequence.
        std::vector<std::string> y;
        int ylen = int(rng.uniform_int(0, 6));
        for (int t = 0; t < ylen; ++t) y.push_back(classes[size_t(rng.uniform_int(0, n_class - 1))]);
        UnitSequence enc = encode_labels(v, y);
        ok = ok && int(enc.size()) == ylen + 1 && enc.back() == special_tokens(v_units).eos;
        DecodeResult dec = decode_units(v, enc);
        ok = ok && dec.labels == y && dec.saw_eos && dec.invalid_tokens == 0;
        // Serialization round-trip.
        Verbalizer v2 = verbalizer_from_text(verbalizer_to_text(v), v_units);
        ok = ok && v2.label_to_unit == v.label_to_unit && v2.rank_order == v.rank_order;
        if (!ok) ++r.failures;
    }
    return r;
}

// Exhaustive-recursion Levenshtein: tries every edit at every position, no
// memoization. Only viable for short sequences, which is exactly what makes
// it independent of the DP implementation.
inline int edit_distance_reference_at(const std::vector<std::string>& a,
                                      const std::vector<std::string>& b, size_t i, size_t j) {
    if (i == a.size()) return int(b.size() - j);
    if (j == b.size()) return int(a.size() - i);
    int sub = edit_distance_reference_at(a, b, i + 1, j + 1) + (a[i] == b[j] ? 0 : 1);
    int del = edit_distance_reference_at(a, b, i + 1, j) + 1;
    int ins = edit_distance_reference_at(a, b, i, j + 1) + 1;
    return std::min({sub, del, ins});
}

inline int edit_distance_reference(const std::vector<std::string>& a,
                                   const std::vector<std::string>& b) {
    return edit_distance_reference_at(a, b, 0, 0);
}

inline std::vector<std::string> string_tokens(const std::string& s) {
    std::vector<std::string> out;
    for (char c : s) out.push_back(std::string(1, c));
    return out;
}

inline SuiteResult run_edit_distance_suite(long long trials, uint64_t seed) {
    using namespace unitprompt;
    SuiteResult r;
    auto check_pair = [&](const std::vector<std::string>& a, const std::vector<std::string>& b,
                          int expected) {
        ++r.cases;
        int got = edit_distance(a, b);
        if (got != expected) ++r.failures;
        if (edit_distance(b, a) != got) ++r.failures;          // symmetry
        if (edit_distance(a, a) != 0) ++r.failures;            // identity
    };
    check_pair(string_tokens("kitten"), string_tokens("sitting"), 3);
    check_pair(string_tokens(""), string_tokens(""), 0);
    check_pair(string_tokens("abc"), string_tokens(""), 3);
    check_pair(string_tokens("flaw"), string_tokens("lawn"), 2);

    Rng rng = Rng(seed).fork(0xED);
    const std::string alphabet = "abc";
    auto random_string = [&](int max_len) {
        std::string s;
        int len = int(rng.uniform_int(0, max_len));
        for (int i = 0; i < len; ++i)
            s.push_back(alphabet[size_t(rng.uniform_int(0, int(alphabet.size()) - 1))]);
        return s;
    };
    for (long long t = 0; t + 4 < trials; ++t) {
        auto a = string_tokens(random_string(7));
        auto b = string_tokens(random_string(7));
        check_pair(a, b, edit_distance_reference(a, b));
        // Triangle inequality against a third short sequence.
        auto c = string_tokens(random_string(7));
        if (edit_distance(a, c) > edit_distance(a, b) + edit_distance(b, c)) ++r.failures;
    }
    return r;
}

}  // namespace oracles
