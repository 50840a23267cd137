#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "unitprompt/verbalizer.hpp"

using namespace unitprompt;

namespace {

// Intent-style corpus where unit/class frequency ranks are arranged by hand:
// unit 4 and class "active" are most frequent, then 40/"lights", 27/"bedroom".
std::pair<std::vector<UnitSequence>, std::vector<std::vector<std::string>>> intent_corpus() {
    std::vector<UnitSequence> inputs = {
        {4, 40, 27}, {4, 40, 2}, {4, 9, 27}, {4, 40, 4}, {40, 4, 27},
    };
    std::vector<std::vector<std::string>> labels = {
        {"active", "lights", "bedroom"},
        {"active", "lights"},
        {"active", "bedroom", "lights"},
        {"active", "lights", "active"},
        {"active", "lights", "bedroom"},
    };
    return {inputs, labels};
}

}  // namespace

TEST_CASE("verbalizer frequency alignment matches brute-force counting on 1000+ cases") {
    auto r = oracles::run_verbalizer_suite(1200, 503);
    CHECK(r.cases >= 1000);
    CHECK(r.failures == 0);
}

TEST_CASE("verbalizer aligns frequency ranks on the intent-style corpus") {
    auto [inputs, labels] = intent_corpus();
    Verbalizer v = build_verbalizer(inputs, labels, 3, 100);
    CHECK(v.label_to_unit.at("active") == 4);
    CHECK(v.label_to_unit.at("lights") == 40);
    CHECK(v.label_to_unit.at("bedroom") == 27);

    UnitSequence enc = encode_labels(v, {"active", "lights", "bedroom"});
    CHECK(enc == UnitSequence{4, 40, 27, special_tokens(100).eos});
    DecodeResult dec = decode_units(v, enc);
    CHECK(dec.labels == std::vector<std::string>{"active", "lights", "bedroom"});
    CHECK(dec.saw_eos);
}

TEST_CASE("single-class corpus maps to the most frequent unit") {
    std::vector<UnitSequence> inputs = {{9, 7, 7}, {7, 1}};
    std::vector<std::vector<std::string>> labels = {{"yes"}, {"yes"}};
    Verbalizer v = build_verbalizer(inputs, labels, 1, 100);
    CHECK(v.label_to_unit.at("yes") == 7);
}

TEST_CASE("unit frequency ties break to the lower unit id") {
    std::vector<UnitSequence> inputs = {{9, 3}, {9, 3}, {5}};
    std::vector<std::vector<std::string>> labels = {{"a"}, {"a"}, {"b"}};
    // Units 3 and 9 tie at count 2; ranks 1 and 2 must be 3 then 9.
    Verbalizer v = build_verbalizer(inputs, labels, 2, 100);
    CHECK(v.label_to_unit.at("a") == 3);
    CHECK(v.label_to_unit.at("b") == 9);
}

TEST_CASE("class frequency ties break lexicographically") {
    std::vector<UnitSequence> inputs = {{1}, {2}, {3}};
    std::vector<std::vector<std::string>> labels = {{"zebra"}, {"apple"}, {"zebra", "apple"}};
    Verbalizer v = build_verbalizer(inputs, labels, 2, 100);
    CHECK(v.rank_order[0].first == "apple");
    CHECK(v.rank_order[1].first == "zebra");
}

TEST_CASE("encode and decode edge cases") {
    auto [inputs, labels] = intent_corpus();
    Verbalizer v = build_verbalizer(inputs, labels, 3, 100);
    int eos = special_tokens(100).eos;

    CHECK(encode_labels(v, {}) == UnitSequence{eos});
    CHECK(decode_units(v, {eos}).labels.empty());
    CHECK_THROWS_WITH(encode_labels(v, {"volume"}), Catch::Matchers::ContainsSubstring("volume"));

    DecodeResult dec = decode_units(v, {4, 99, eos});
    CHECK(dec.labels == std::vector<std::string>{"active"});
    CHECK(dec.invalid_tokens == 1);

    DecodeResult no_eos = decode_units(v, {4, 40});
    CHECK_FALSE(no_eos.saw_eos);
    CHECK(no_eos.labels.size() == 2);
}

TEST_CASE("verbalizer build validation") {
    auto [inputs, labels] = intent_corpus();
    CHECK_THROWS_AS(build_verbalizer(inputs, labels, 4, 100), std::invalid_argument);
    CHECK_THROWS_AS(build_verbalizer(inputs, labels, 2, 100), std::invalid_argument);
    CHECK_THROWS_AS(build_verbalizer(inputs, labels, 3, 2), std::invalid_argument);
    std::vector<UnitSequence> bad = {{200}};
    CHECK_THROWS_AS(build_verbalizer(bad, {{"x"}}, 1, 100), std::invalid_argument);
}

TEST_CASE("serialization is rank-ordered and round-trips") {
    auto [inputs, labels] = intent_corpus();
    Verbalizer v = build_verbalizer(inputs, labels, 3, 100);
    std::string text = verbalizer_to_text(v);
    CHECK(text == "active\t4\nlights\t40\nbedroom\t27\n");
    Verbalizer v2 = verbalizer_from_text(text, 100);
    CHECK(v2.label_to_unit == v.label_to_unit);
    CHECK(v2.unit_to_label == v.unit_to_label);
}

TEST_CASE("random verbalizer is a seeded bijection over the same units") {
    auto [inputs, labels] = intent_corpus();
    Verbalizer freq = build_verbalizer(inputs, labels, 3, 100);
    Verbalizer rnd = build_random_verbalizer(inputs, labels, 3, 100, 11);
    std::set<int> freq_units, rnd_units;
    for (auto& [c, u] : freq.rank_order) freq_units.insert(u);
    for (auto& [c, u] : rnd.rank_order) rnd_units.insert(u);
    CHECK(freq_units == rnd_units);
    CHECK(rnd.label_to_unit.size() == 3);
    CHECK(rnd.unit_to_label.size() == 3);
    Verbalizer rnd2 = build_random_verbalizer(inputs, labels, 3, 100, 11);
    CHECK(rnd.label_to_unit == rnd2.label_to_unit);
    for (auto y : {std::vector<std::string>{"bedroom", "active"}, std::vector<std::string>{}})
        CHECK(decode_units(rnd, encode_labels(rnd, y)).labels == y);
}
