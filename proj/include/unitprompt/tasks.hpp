#pragma once

#include <algorithm>
#include <array>
#include <string>
#include <vector>

#include "common.hpp"
#include "quantizer.hpp"
#include "rng.hpp"

namespace unitprompt {

enum class TaskKind { cls_single, cls_multi, seq_gen, slot_gen };

inline std::string task_kind_name(TaskKind k) {
    switch (k) {
        case TaskKind::cls_single: return "cls_single";
        case TaskKind::cls_multi: return "cls_multi";
        case TaskKind::seq_gen: return "seq_gen";
        case TaskKind::slot_gen: return "slot_gen";
    }
    throw std::logic_error("task_kind_name: unreachable");
}

inline TaskKind task_kind_from(const std::string& s) {
    if (s == "cls_single") return TaskKind::cls_single;
    if (s == "cls_multi") return TaskKind::cls_multi;
    if (s == "seq_gen") return TaskKind::seq_gen;
    if (s == "slot_gen") return TaskKind::slot_gen;
    throw std::invalid_argument(format_msg("unknown task kind '", s, "'"));
}

struct LabeledExample {
    std::string id;
    UnitSequence input_units;  // deduplicated form
    std::vector<std::string> labels;

    bool operator==(const LabeledExample&) const = default;
};

struct Dataset {
    TaskKind kind = TaskKind::cls_single;
    std::vector<std::string> class_set;
    std::vector<LabeledExample> train, valid, test;

    const std::vector<LabeledExample>& split(const std::string& name) const {
        if (name == "train") return train;
        if (name == "valid") return valid;
        if (name == "test") return test;
        throw std::invalid_argument(format_msg("unknown split '", name, "'"));
    }

    bool operator==(const Dataset&) const = default;
};

struct SplitSizes {
    int train = 480;
    int valid = 96;
    int test = 160;
};

// First-order Markov grammar over the unit inventory. Units are partitioned
// into 10 groups by a seeded shuffle; every unit transitions uniformly to the
// members of the next group, so walks never repeat a unit adjacently and the
// conditional entropy is known in closed form from the transition matrix.
struct MarkovGrammar {
    int v_units = 0;
    std::vector<std::vector<int>> groups;
    std::vector<int> group_of;
    std::vector<std::vector<double>> trans;

    static constexpr int n_groups = 10;

    static MarkovGrammar make(int v_units, uint64_t seed) {
        require(v_units >= 2 * n_groups,
                format_msg("MarkovGrammar: need at least ", 2 * n_groups, " units, got ", v_units));
        MarkovGrammar g;
        g.v_units = v_units;
        std::vector<int> perm(v_units);
        for (int i = 0; i < v_units; ++i) perm[i] = i;
        Rng rng(seed);
        rng.shuffle(perm);
        g.groups.assign(n_groups, {});
        g.group_of.assign(v_units, -1);
        for (int i = 0; i < v_units; ++i) {
            g.groups[i % n_groups].push_back(perm[i]);
            g.group_of[perm[i]] = i % n_groups;
        }
        g.trans.assign(v_units, std::vector<double>(v_units, 0.0));
        for (int u = 0; u < v_units; ++u) {
            const auto& next = g.groups[(g.group_of[u] + 1) % n_groups];
            for (int w : next) g.trans[u][w] = 1.0 / double(next.size());
        }
        return g;
    }

    // 60/40 split of each group: walks for task backgrounds draw from the
    // first pool, class motifs from the second, so motif units never collide
    // with background units.
    std::vector<int> background_pool() const {
        std::vector<int> out;
        for (const auto& grp : groups) {
            size_t take = std::max<size_t>(1, grp.size() * 6 / 10);
            for (size_t i = 0; i < take; ++i) out.push_back(grp[i]);
        }
        return out;
    }

    std::vector<int> motif_pool() const {
        std::vector<int> out;
        for (const auto& grp : groups) {
            size_t take = std::max<size_t>(1, grp.size() * 6 / 10);
            for (size_t i = take; i < grp.size(); ++i) out.push_back(grp[i]);
        }
        return out;
    }

    UnitSequence sample(Rng& rng, int len) const {
        require(len >= 1, "MarkovGrammar::sample: non-positive length");
        UnitSequence seq;
        seq.push_back(int(rng.uniform_int(0, v_units - 1)));
        while (int(seq.size()) < len) {
            const auto& next = groups[(group_of[seq.back()] + 1) % n_groups];
            seq.push_back(next[size_t(rng.uniform_int(0, int(next.size()) - 1))]);
        }
        return seq;
    }

    UnitSequence sample_restricted(Rng& rng, int len, const std::vector<char>& allowed) const {
        require(int(allowed.size()) == v_units, "sample_restricted: allowed mask size mismatch");
        std::vector<int> start;
        for (int u = 0; u < v_units; ++u)
            if (allowed[u]) start.push_back(u);
        require(!start.empty(), "sample_restricted: no allowed units");
        UnitSequence seq;
        seq.push_back(start[size_t(rng.uniform_int(0, int(start.size()) - 1))]);
        while (int(seq.size()) < len) {
            std::vector<int> next;
            for (int w : groups[(group_of[seq.back()] + 1) % n_groups])
                if (allowed[w]) next.push_back(w);
            require(!next.empty(), "sample_restricted: dead end, group has no allowed units");
            seq.push_back(next[size_t(rng.uniform_int(0, int(next.size()) - 1))]);
        }
        return seq;
    }

    // H(U_t | U_{t-1}) under the stationary distribution, by power iteration.
    double conditional_entropy() const {
        std::vector<double> pi(v_units, 1.0 / v_units), nxt(v_units);
        for (int iter = 0; iter < 2000; ++iter) {
            std::fill(nxt.begin(), nxt.end(), 0.0);
            for (int u = 0; u < v_units; ++u)
                for (int w = 0; w < v_units; ++w)
                    if (trans[u][w] > 0) nxt[w] += pi[u] * trans[u][w];
            double delta = 0;
            for (int u = 0; u < v_units; ++u) delta += std::abs(nxt[u] - pi[u]);
            pi.swap(nxt);
            if (delta < 1e-13) break;
        }
        double h = 0;
        for (int u = 0; u < v_units; ++u) {
            double row_h = 0;
            for (int w = 0; w < v_units; ++w)
                if (trans[u][w] > 0) row_h -= trans[u][w] * std::log(trans[u][w]);
            h += pi[u] * row_h;
        }
        return h;
    }
};

// Pre-training corpus: grammar walks with lengths in [32, 128]. The grammar
// itself is derived from the same seed, so the transition matrix behind a
// corpus is recoverable via corpus_grammar.
inline MarkovGrammar corpus_grammar(uint64_t seed, int v_units) {
    return MarkovGrammar::make(v_units, seed);
}

inline std::vector<UnitSequence> gen_unit_corpus(uint64_t seed, int size, int v_units) {
    require(size >= 1, "gen_unit_corpus: size must be >= 1");
    MarkovGrammar grammar = corpus_grammar(seed, v_units);
    Rng rng = Rng(seed).fork(0xC0);
    std::vector<UnitSequence> corpus;
    corpus.reserve(size);
    for (int i = 0; i < size; ++i)
        corpus.push_back(grammar.sample(rng, int(rng.uniform_int(32, 128))));
    return corpus;
}

namespace detail {

inline std::vector<char> pool_mask(const std::vector<int>& pool, int v_units) {
    std::vector<char> mask(v_units, 0);
    for (int u : pool) mask[u] = 1;
    return mask;
}

inline void assign_ids(std::vector<LabeledExample>& split, const std::string& prefix) {
    for (size_t i = 0; i < split.size(); ++i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%05zu", i);
        split[i].id = prefix + "-" + buf;
    }
}

inline UnitSequence insert_motifs(const UnitSequence& background,
                                  const std::vector<UnitSequence>& motifs, Rng& rng) {
    // Motifs keep their caller order (the label's canonical slot order); only
    // the insertion points are random. Cut points sorted ascending; motif k
    // goes after background[0..cut_k).
    std::vector<int> cuts(motifs.size());
    for (auto& c : cuts) c = int(rng.uniform_int(0, int(background.size())));
    std::sort(cuts.begin(), cuts.end());
    UnitSequence out;
    size_t bg = 0;
    for (size_t k = 0; k < motifs.size(); ++k) {
        while (bg < size_t(cuts[k])) out.push_back(background[bg++]);
        out.insert(out.end(), motifs[k].begin(), motifs[k].end());
    }
    while (bg < background.size()) out.push_back(background[bg++]);
    return out;
}

}  // namespace detail

inline const std::vector<std::string>& cls_single_classes() {
    static const std::vector<std::string> classes = {"yes",  "no",  "up",   "down",    "left",
                                                     "right", "on",  "off",  "stop",    "go",
                                                     "silence", "unknown"};
    return classes;
}

// Keyword-spotting shape: one label per example, each class marked by a
// motif hidden at a random position inside a grammar walk. A motif is three
// class-specific units arranged as [a b c a b]: no adjacent repeats, and the
// partial repetition keeps the marker prominent against the background.
inline Dataset gen_cls_single(uint64_t seed, int n_classes, const SplitSizes& sizes,
                              uint64_t grammar_seed = 7, int v_units = 100) {
    require(n_classes >= 2, "gen_cls_single: need at least 2 classes");
    require(n_classes <= int(cls_single_classes().size()),
            format_msg("gen_cls_single: at most ", cls_single_classes().size(), " classes supported"));
    MarkovGrammar grammar = MarkovGrammar::make(v_units, grammar_seed);
    auto motif_units = grammar.motif_pool();
    require(int(motif_units.size()) >= 3 * n_classes,
            format_msg("gen_cls_single: motif pool ", motif_units.size(), " too small for ",
                       n_classes, " classes"));
    auto bg_mask = detail::pool_mask(grammar.background_pool(), v_units);

    Dataset ds;
    ds.kind = TaskKind::cls_single;
    ds.class_set.assign(cls_single_classes().begin(), cls_single_classes().begin() + n_classes);

    Rng rng = Rng(seed).fork(0xC5);
    auto gen_split = [&](int count, const std::string& name) {
        std::vector<LabeledExample> split(count);
        for (int i = 0; i < count; ++i) {
            int cls = i % n_classes;
            UnitSequence motif = {motif_units[3 * cls], motif_units[3 * cls + 1],
                                  motif_units[3 * cls + 2], motif_units[3 * cls],
                                  motif_units[3 * cls + 1]};
            UnitSequence bg = grammar.sample_restricted(rng, int(rng.uniform_int(4, 8)), bg_mask);
            split[i].input_units = detail::insert_motifs(bg, {motif}, rng);
            split[i].labels = {ds.class_set[cls]};
        }
        rng.shuffle(split);
        detail::assign_ids(split, name);
        return split;
    };
    ds.train = gen_split(sizes.train, "train");
    ds.valid = gen_split(sizes.valid, "valid");
    ds.test = gen_split(sizes.test, "test");
    return ds;
}

struct IntentTriple {
    std::string action, object, location;
};

// The 8 compatible (action, object) pairs crossed with 3 locations: 24
// intents. Devices can be switched but not scaled, heat scaled but not
// switched.
inline std::vector<IntentTriple> cls_multi_triples() {
    const std::vector<std::pair<std::string, std::string>> pairs = {
        {"activate", "lights"}, {"deactivate", "lights"}, {"activate", "lamp"},
        {"deactivate", "lamp"}, {"activate", "music"},    {"deactivate", "music"},
        {"increase", "heat"},   {"decrease", "heat"},
    };
    const std::vector<std::string> locations = {"kitchen", "bedroom", "washroom"};
    std::vector<IntentTriple> triples;
    for (const auto& [a, o] : pairs)
        for (const auto& loc : locations) triples.push_back({a, o, loc});
    return triples;
}

// Intent-classification shape: labels are (action, object, location) in fixed
// canonical order; each slot value has its own motif and the three motifs
// appear in slot order at random positions.
inline Dataset gen_cls_multi(uint64_t seed, int slots, const SplitSizes& sizes,
                             uint64_t grammar_seed = 7, int v_units = 100) {
    require(slots == 3, "gen_cls_multi: the intent task is defined for exactly 3 slots");
    MarkovGrammar grammar = MarkovGrammar::make(v_units, grammar_seed);
    auto triples = cls_multi_triples();

    std::vector<std::string> values;
    for (const auto& t : triples)
        for (const auto& v : {t.action, t.object, t.location})
            if (std::find(values.begin(), values.end(), v) == values.end()) values.push_back(v);
    std::sort(values.begin(), values.end());

    auto motif_units = grammar.motif_pool();
    require(motif_units.size() >= 3 * values.size(),
            format_msg("gen_cls_multi: motif pool too small for ", values.size(), " values"));
    auto motif_of = [&](const std::string& value) {
        size_t idx =
            size_t(std::find(values.begin(), values.end(), value) - values.begin());
        return UnitSequence{motif_units[3 * idx], motif_units[3 * idx + 1],
                            motif_units[3 * idx + 2], motif_units[3 * idx],
                            motif_units[3 * idx + 1]};
    };
    auto bg_mask = detail::pool_mask(grammar.background_pool(), v_units);

    Dataset ds;
    ds.kind = TaskKind::cls_multi;
    ds.class_set = values;

    Rng rng = Rng(seed).fork(0xC6);
    auto gen_split = [&](int count, const std::string& name) {
        std::vector<LabeledExample> split(count);
        for (int i = 0; i < count; ++i) {
            const IntentTriple& t = triples[i % triples.size()];
            UnitSequence bg = grammar.sample_restricted(rng, int(rng.uniform_int(4, 7)), bg_mask);
            split[i].input_units = detail::insert_motifs(
                bg, {motif_of(t.action), motif_of(t.object), motif_of(t.location)}, rng);
            split[i].labels = {t.action, t.object, t.location};
        }
        rng.shuffle(split);
        detail::assign_ids(split, name);
        return split;
    };
    ds.train = gen_split(sizes.train, "train");
    ds.valid = gen_split(sizes.valid, "valid");
    ds.test = gen_split(sizes.test, "test");
    return ds;
}

inline const std::vector<std::string>& seq_alphabet() {
    static const std::vector<std::string> chars = [] {
        std::vector<std::string> c;
        for (char ch = 'a'; ch <= 'z'; ++ch) c.push_back(std::string(1, ch));
        c.push_back(" ");
        c.push_back("'");
        c.push_back(".");
        return c;
    }();
    return chars;
}

namespace detail {

// Character index -> two-unit motif (i, 50 + i). The halves live in disjoint
// unit ranges, so concatenated motifs never create adjacent duplicates and
// survive deduplication as-is.
inline void append_char_units(UnitSequence& units, int char_index) {
    units.push_back(char_index);
    units.push_back(50 + char_index);
}

inline int char_index_of(char c) {
    if ('a' <= c && c <= 'z') return c - 'a';
    if (c == ' ') return 26;
    if (c == '\'') return 27;
    return 28;  // '.'
}

inline UnitSequence text_to_units(const std::string& text) {
    UnitSequence units;
    units.reserve(2 * text.size());
    for (char c : text) append_char_units(units, char_index_of(c));
    return units;
}

// Word-shaped random text of exactly `len` characters ending without
// constraints; spaces separate 2-7 letter words, with occasional apostrophes.
inline std::string random_text(Rng& rng, int len) {
    std::string text;
    while (int(text.size()) < len) {
        if (!text.empty()) text.push_back(' ');
        int wlen = int(rng.uniform_int(2, 7));
        for (int i = 0; i < wlen; ++i) {
            if (i > 0 && i + 1 < wlen && rng.uniform() < 0.03) text.push_back('\'');
            else text.push_back(char('a' + rng.uniform_int(0, 25)));
        }
        if (rng.uniform() < 0.08) text.push_back('.');
    }
    text.resize(len);
    return text;
}

}  // namespace detail

// Recognition shape: the input is the concatenation of per-character motifs
// and the label is the character sequence, so the mapping is exactly
// invertible. Examples are stratified across label-length buckets.
inline Dataset gen_seq_gen(uint64_t seed, int alphabet,
                           const std::vector<std::pair<int, int>>& length_buckets,
                           const SplitSizes& sizes, int v_units = 100) {
    require(alphabet == int(seq_alphabet().size()),
            format_msg("gen_seq_gen: alphabet must be ", seq_alphabet().size()));
    require(!length_buckets.empty(), "gen_seq_gen: no length buckets");
    for (auto [lo, hi] : length_buckets)
        require(1 <= lo && lo <= hi, format_msg("gen_seq_gen: bad bucket [", lo, ", ", hi, "]"));
    require(v_units >= 50 + alphabet, format_msg("gen_seq_gen: needs v_units >= ", 50 + alphabet));
    require(sizes.train >= alphabet,
            "gen_seq_gen: train split too small to cover every character class");

    Dataset ds;
    ds.kind = TaskKind::seq_gen;
    ds.class_set = seq_alphabet();

    Rng rng = Rng(seed).fork(0xC7);
    auto gen_split = [&](int count, const std::string& name, bool force_coverage) {
        std::vector<LabeledExample> split(count);
        for (int i = 0; i < count; ++i) {
            auto [lo, hi] = length_buckets[i % length_buckets.size()];
            std::string text = detail::random_text(rng, int(rng.uniform_int(lo, hi)));
            if (force_coverage && i < alphabet) {
                // Guarantee every character class occurs in training data.
                size_t at = std::min(text.size() - 1, text.size() / 2);
                text[at] = ds.class_set[i][0];
            }
            split[i].input_units = detail::text_to_units(text);
            for (char c : text) split[i].labels.push_back(std::string(1, c));
        }
        rng.shuffle(split);
        detail::assign_ids(split, name);
        return split;
    };
    ds.train = gen_split(sizes.train, "train", true);
    ds.valid = gen_split(sizes.valid, "valid", false);
    ds.test = gen_split(sizes.test, "test", false);
    return ds;
}

inline const std::vector<std::string>& slot_types() {
    static const std::vector<std::string> types = {"when", "where", "who", "what"};
    return types;
}

namespace detail {

inline const std::vector<std::vector<std::string>>& slot_lexicons() {
    static const std::vector<std::vector<std::string>> lex = {
        {"today", "tonight", "monday", "friday", "noon", "never"},
        {"kitchen", "bedroom", "paris", "office", "garden", "home"},
        {"alex", "sam", "maria", "doctor", "mother", "band"},
        {"music", "lights", "alarm", "movie", "dinner", "news"},
    };
    return lex;
}

inline const std::vector<std::string>& filler_words() {
    static const std::vector<std::string> words = {"play", "set",  "turn", "call",   "find", "start",
                                                   "stop", "the",  "my",   "quiz",   "for",  "at",
                                                   "jovbreak", "on", "don't", "please", "now",  "xylog"};
    return words;
}

}  // namespace detail

// Slot-filling shape: spoken text rendered as character motifs; labels are
// the characters with slot-type open/close tags wrapped around lexicon words.
inline Dataset gen_slot_gen(uint64_t seed, const SplitSizes& sizes, int v_units = 100) {
    require(v_units >= 79, "gen_slot_gen: needs v_units >= 79");
    Dataset ds;
    ds.kind = TaskKind::slot_gen;
    ds.class_set = seq_alphabet();
    for (const auto& t : slot_types()) {
        ds.class_set.push_back("<" + t + ">");
        ds.class_set.push_back("</" + t + ">");
    }

    struct Word {
        std::string text;
        int slot_type;  // -1 for filler
    };
    std::vector<Word> all_words;
    for (size_t t = 0; t < slot_types().size(); ++t)
        for (const auto& w : detail::slot_lexicons()[t]) all_words.push_back({w, int(t)});
    for (const auto& w : detail::filler_words()) all_words.push_back({w, -1});
    require(sizes.train >= int(all_words.size()),
            "gen_slot_gen: train split too small to cover every word and tag class");

    Rng rng = Rng(seed).fork(0xC8);
    auto gen_split = [&](int count, const std::string& name, bool force_coverage) {
        std::vector<LabeledExample> split(count);
        for (int i = 0; i < count; ++i) {
            int n_words = int(rng.uniform_int(3, 6));
            std::vector<Word> words;
            for (int w = 0; w < n_words; ++w) {
                if (rng.uniform() < 0.45) {
                    int t = int(rng.uniform_int(0, int(slot_types().size()) - 1));
                    const auto& lex = detail::slot_lexicons()[t];
                    words.push_back({lex[size_t(rng.uniform_int(0, int(lex.size()) - 1))], t});
                } else {
                    const auto& fill = detail::filler_words();
                    words.push_back({fill[size_t(rng.uniform_int(0, int(fill.size()) - 1))], -1});
                }
            }
            if (force_coverage && i < int(all_words.size())) words[0] = all_words[i];

            std::string text;
            std::vector<std::string> labels;
            for (size_t w = 0; w < words.size(); ++w) {
                if (w) {
                    text += " ";
                    labels.push_back(" ");
                }
                if (words[w].slot_type >= 0) labels.push_back("<" + slot_types()[words[w].slot_type] + ">");
                for (char c : words[w].text) labels.push_back(std::string(1, c));
                if (words[w].slot_type >= 0)
                    labels.push_back("</" + slot_types()[words[w].slot_type] + ">");
                text += words[w].text;
            }
            text += ".";
            labels.push_back(".");

            split[i].input_units = detail::text_to_units(text);
            split[i].labels = std::move(labels);
        }
        rng.shuffle(split);
        detail::assign_ids(split, name);
        return split;
    };
    ds.train = gen_split(sizes.train, "train", true);
    ds.valid = gen_split(sizes.valid, "valid", false);
    ds.test = gen_split(sizes.test, "test", false);
    return ds;
}

}  // namespace unitprompt
