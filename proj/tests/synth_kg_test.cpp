#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <chrono>

#include "kgr/synth.hpp"
#include "test_support.hpp"

using namespace kgr;

namespace {

SynthSpec small_spec(std::uint64_t seed = 7) {
    SynthSpec spec = default_acceptance_spec();
    spec.entity_count = 200;
    spec.base_density = 0.8;
    spec.seed = seed;
    return spec;
}

bool rules_contain(const std::vector<RuleInstance>& rules, const RulePattern& pattern) {
    for (const auto& r : rules) {
        if (r.pattern == pattern) return true;
    }
    return false;
}

}  // namespace

TEST_CASE("full-closure symmetric relation mirrors every edge") {
    SynthSpec spec;
    spec.entity_count = 50;
    spec.relation_count = 2;
    spec.base_density = 1.0;
    spec.noise_rate = 0.0;
    spec.seed = 3;
    spec.planted = {{RulePattern{RuleKind::symmetric, {0, 0, 0}}, 1.0}};
    const auto out = generate(spec);
    for (const Triplet& t : out.graph.observed()) {
        if (t.relation != 0) continue;
        CHECK(out.graph.contains(Triplet{t.tail, t.relation, t.head}, Scope::observed));
    }
}

TEST_CASE("noise-free output labels everything true and holds nothing out") {
    SynthSpec spec = small_spec();
    spec.noise_rate = 0.0;
    const auto out = generate(spec);
    CHECK(out.graph.candidates().empty());
    for (const auto& [t, label] : out.ground_truth) CHECK(label == 1);
}

TEST_CASE("mining a noise-free planted graph recovers every planted pattern") {
    SynthSpec spec = small_spec();
    spec.noise_rate = 0.0;
    const auto out = generate(spec);
    const auto mined = mine_rules(out.graph, 0.3, 3);
    for (const auto& planted : out.planted) {
        CAPTURE(rule_kind_name(planted.pattern.kind));
        CHECK(rules_contain(mined, planted.pattern));
    }
}

TEST_CASE("planted supporting rules mine at no worse than rate minus five points") {
    SynthSpec spec = small_spec(19);
    spec.noise_rate = 0.0;
    const auto out = generate(spec);
    const auto mined = mine_rules(out.graph, 0.0, 1);
    for (const auto& planted : out.planted) {
        if (!is_supporting(planted.pattern.kind)) continue;
        bool found = false;
        for (const auto& r : mined) {
            if (r.pattern == planted.pattern) {
                CHECK(r.empirical_precision >= planted.empirical_precision - 0.05);
                found = true;
            }
        }
        CHECK(found);
    }
}

TEST_CASE("no true triplet violates a planted negating rule") {
    const auto out = generate(small_spec(23));
    // groundings measured against the full true world, held-out bodies included
    TripletSet true_candidates;
    for (const Triplet& t : out.graph.candidates()) {
        if (out.ground_truth.at(t) == 1) true_candidates.insert(t);
    }
    for (const auto& planted : out.planted) {
        if (is_supporting(planted.pattern.kind)) continue;
        RuleInstance rule;
        rule.pattern = planted.pattern;
        auto check_clean = [&](const Triplet& t) {
            if (t.relation != rule.pattern.head_relation()) return;
            CHECK(count_groundings(out.graph, rule, t, true_candidates) == 0);
        };
        for (const Triplet& t : out.graph.observed()) check_clean(t);
        for (const Triplet& t : true_candidates) check_clean(t);
    }
}

TEST_CASE("noise violates the planted negating rules at their configured shares") {
    const auto out = generate(small_spec(29));
    TripletSet true_candidates;
    std::size_t noise_count = 0;
    for (const Triplet& t : out.graph.candidates()) {
        if (out.ground_truth.at(t) == 1) {
            true_candidates.insert(t);
        } else {
            ++noise_count;
        }
    }
    REQUIRE(noise_count > 0);
    for (const auto& planted : out.planted) {
        if (is_supporting(planted.pattern.kind)) continue;
        RuleInstance rule;
        rule.pattern = planted.pattern;
        std::size_t violations = 0;
        for (const Triplet& t : out.graph.candidates()) {
            if (out.ground_truth.at(t) == 1) continue;
            if (t.relation != rule.pattern.head_relation()) continue;
            if (count_groundings(out.graph, rule, t, true_candidates) > 0) ++violations;
        }
        const double share =
            static_cast<double>(violations) / static_cast<double>(noise_count);
        CHECK(share >= planted.empirical_precision - 0.05);
    }
}

TEST_CASE("labels cover exactly the generated triplet set") {
    const auto out = generate(small_spec(31));
    CHECK(out.ground_truth.size() ==
          out.graph.observed().size() + out.graph.candidates().size());
    for (const Triplet& t : out.graph.observed()) {
        REQUIRE(out.ground_truth.count(t) == 1);
        CHECK(out.ground_truth.at(t) == 1);
    }
    for (const Triplet& t : out.graph.candidates()) CHECK(out.ground_truth.count(t) == 1);
}

TEST_CASE("candidate set is label-balanced") {
    const auto out = generate(small_spec(37));
    std::size_t pos = 0, neg = 0;
    for (const Triplet& t : out.graph.candidates()) {
        (out.ground_truth.at(t) == 1 ? pos : neg)++;
    }
    CHECK(pos == neg);
}

TEST_CASE("default acceptance spec") {
    const auto spec = default_acceptance_spec();
    CHECK(spec.entity_count == 1000);
    CHECK(spec.relation_count == 20);
    CHECK(spec.noise_rate == 0.10);
    std::size_t per_kind[4] = {0, 0, 0, 0};
    for (const auto& p : spec.planted) per_kind[static_cast<int>(p.pattern.kind)]++;
    for (int k = 0; k < 4; ++k) CHECK(per_kind[k] == 2);

    SUBCASE("generates inside the time ceiling and reproducibly") {
        const auto start = std::chrono::steady_clock::now();
        const auto a = generate(spec);
        const auto elapsed = std::chrono::duration<double>(
            std::chrono::steady_clock::now() - start).count();
        CHECK(elapsed < 60.0);

        const auto b = generate(spec);
        CHECK(a.graph.observed() == b.graph.observed());
        CHECK(a.graph.candidates() == b.graph.candidates());

        // graph-level sanity on the artifact the acceptance suite trains on
        CHECK(a.graph.observed().size() > 10000);
        CHECK(a.graph.candidates().size() > 2000);
        for (const Triplet& t : a.graph.candidates()) {
            CHECK_FALSE(a.graph.contains(t, Scope::observed));
        }
    }
}

TEST_CASE("infeasible specs name their violated constraint") {
    SUBCASE("relation bound twice") {
        SynthSpec spec;
        spec.entity_count = 20;
        spec.relation_count = 3;
        spec.planted = {{RulePattern{RuleKind::symmetric, {0, 0, 0}}, 1.0},
                        {RulePattern{RuleKind::conflict, {0, 1, 0}}, 0.5}};
        CHECK_THROWS_WITH_AS(generate(spec), doctest::Contains("more than one planted rule"),
                             ValidationError);
    }
    SUBCASE("conflict head equal to body") {
        SynthSpec spec;
        spec.entity_count = 20;
        spec.relation_count = 2;
        spec.planted = {{RulePattern{RuleKind::conflict, {1, 1, 0}}, 0.5}};
        CHECK_THROWS_WITH_AS(generate(spec), doctest::Contains("equals its body"),
                             ValidationError);
    }
    SUBCASE("density it cannot place") {
        SynthSpec spec;
        spec.entity_count = 3;
        spec.relation_count = 1;
        spec.base_density = 100.0;  // 300 distinct x!=z edges cannot exist on 3 entities
        CHECK_THROWS_AS(generate(spec), ValidationError);
    }
    SUBCASE("noise rate forcing an oversized holdout") {
        SynthSpec spec;
        spec.entity_count = 60;
        spec.relation_count = 1;
        spec.base_density = 0.5;
        spec.noise_rate = 0.45;
        CHECK_THROWS_WITH_AS(generate(spec), doctest::Contains("more than half"),
                             ValidationError);
    }
}
