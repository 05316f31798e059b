#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "kgr/eval.hpp"
#include "kgr/rng.hpp"
#include "test_support.hpp"

using namespace kgr;
using testsup::make_graph;
using testsup::random_graph;

namespace {

// Deterministic pseudo-random scorer, independent of any model.
double hash_score(const Triplet& t) {
    std::uint64_t x = TripletHash{}(t);
    return static_cast<double>(x % 10007) / 10007.0;
}

// Exhaustive ranking oracle: materializes the whole candidate list, sorts it,
// and averages the positions the target's tie group occupies.
double oracle_rank(const KnowledgeGraph& g, const TripletSet& known, const Triplet& target,
                   bool mask_tail, const Scorer& scorer) {
    std::vector<std::pair<double, EntityId>> list;
    for (EntityId e = 0; e < g.entity_count(); ++e) {
        Triplet c = target;
        if (mask_tail) {
            c.tail = e;
        } else {
            c.head = e;
        }
        if (c == target) continue;
        if (known.contains(c)) continue;
        list.emplace_back(scorer(c), e);
    }
    list.emplace_back(scorer(target), g.entity_count());  // sentinel id for the target
    std::sort(list.begin(), list.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    const double target_score = scorer(target);
    double position_sum = 0.0;
    double tied = 0.0;
    for (std::size_t i = 0; i < list.size(); ++i) {
        if (list[i].first == target_score) {
            position_sum += static_cast<double>(i + 1);
            tied += 1.0;
        }
    }
    return position_sum / tied;
}

}  // namespace

TEST_CASE("poison generation") {
    SUBCASE("poisons are unique and unseen") {
        const auto g = random_graph(100, 4, 300, 5, 50);
        const auto poisons = generate_poisons(g, 10, 3);
        CHECK(poisons.size() == 10);
        TripletSet seen;
        for (const Triplet& t : poisons) {
            CHECK_FALSE(g.contains(t, Scope::either));
            CHECK(seen.insert(t).second);
        }
    }
    SUBCASE("complete graph leaves no room") {
        const auto g = make_graph({{"a", "r", "a"}, {"a", "r", "b"}, {"b", "r", "a"},
                                   {"b", "r", "b"}});
        CHECK_THROWS_AS(generate_poisons(g, 1, 0), ComputeError);
    }
    SUBCASE("generation is deterministic") {
        const auto g = random_graph(50, 3, 200, 7);
        CHECK(generate_poisons(g, 25, 9) == generate_poisons(g, 25, 9));
    }
}

TEST_CASE("ptd classification") {
    SUBCASE("ground-truth indicator scores perfectly") {
        const auto g = random_graph(40, 3, 150, 11, 60);
        EvalSplit split;
        for (std::size_t i = 0; i < g.candidates().size(); ++i) {
            if (i % 2 == 0) {
                split.positives.push_back(g.candidates()[i]);
            } else {
                split.negatives.push_back(g.candidates()[i]);
            }
        }
        TripletSet positive_set(split.positives.begin(), split.positives.end());
        const auto report = evaluate_ptd(
            split, [&](const Triplet& t) { return positive_set.contains(t) ? 1.0 : 0.0; }, 0.5);
        CHECK(report.precision == 1.0);
        CHECK(report.recall == 1.0);
        CHECK(report.f_score == 1.0);
    }
    SUBCASE("constant-true scorer has full recall and base-rate precision") {
        EvalSplit split;
        for (EntityId i = 0; i < 30; ++i) split.positives.push_back({i, 0, i + 1});
        for (EntityId i = 0; i < 70; ++i) split.negatives.push_back({i + 1, 1, i});
        const auto report = evaluate_ptd(split, [](const Triplet&) { return 1.0; }, 0.5);
        CHECK(report.recall == 1.0);
        CHECK(report.precision == doctest::Approx(0.3));
    }
    SUBCASE("random split matches an independent confusion matrix") {
        Rng rng(13);
        EvalSplit split;
        for (int i = 0; i < 100; ++i) {
            const Triplet t{static_cast<EntityId>(uniform_below(rng, 50)),
                            static_cast<RelationId>(uniform_below(rng, 3)),
                            static_cast<EntityId>(uniform_below(rng, 50))};
            if (coin(rng)) {
                split.positives.push_back(t);
            } else {
                split.negatives.push_back(t);
            }
        }
        const double threshold = 0.6;
        const auto report = evaluate_ptd(split, hash_score, threshold);

        std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
        for (const Triplet& t : split.positives) (hash_score(t) >= threshold ? tp : fn)++;
        for (const Triplet& t : split.negatives) (hash_score(t) >= threshold ? fp : tn)++;
        CHECK(report.counts.tp == tp);
        CHECK(report.counts.fp == fp);
        CHECK(report.counts.fn == fn);
        CHECK(report.counts.tn == tn);
        const double p = tp + fp ? double(tp) / double(tp + fp) : 0.0;
        const double r = tp + fn ? double(tp) / double(tp + fn) : 0.0;
        CHECK(report.precision == doctest::Approx(p));
        CHECK(report.recall == doctest::Approx(r));
        const double f = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
        CHECK(report.f_score == doctest::Approx(f));
    }
    SUBCASE("empty split is an error") {
        CHECK_THROWS_AS(evaluate_ptd(EvalSplit{}, hash_score, 0.5), ValidationError);
    }
}

TEST_CASE("mtp ranking") {
    SUBCASE("a scorer that puts the target first is a perfect ranker") {
        const auto g = random_graph(25, 3, 100, 17);
        std::vector<Triplet> test(g.observed().begin(), g.observed().begin() + 10);
        TripletSet test_set(test.begin(), test.end());
        const auto report = evaluate_mtp(
            g, test, [&](const Triplet& t) { return test_set.contains(t) ? 1.0 : 0.0; });
        CHECK(report.mr == 1.0);
        CHECK(report.mrr == 1.0);
        CHECK(report.hits_at.at(1) == 1.0);
    }
    SUBCASE("constant scorer lands at the tie-averaged midpoint, exactly") {
        const auto g = random_graph(20, 2, 60, 19);
        std::vector<Triplet> test(g.observed().begin(), g.observed().begin() + 5);
        const auto report = evaluate_mtp(g, test, [](const Triplet&) { return 0.25; });

        TripletSet known;
        for (const Triplet& t : g.observed()) known.insert(t);
        for (const Triplet& t : test) known.insert(t);
        double expected_mr = 0.0;
        for (const Triplet& target : test) {
            for (int dir = 0; dir < 2; ++dir) {
                std::uint64_t filtered_list = 1;  // the target itself
                for (EntityId e = 0; e < g.entity_count(); ++e) {
                    Triplet c = target;
                    if (dir == 0) {
                        c.tail = e;
                    } else {
                        c.head = e;
                    }
                    if (c == target) continue;
                    if (known.contains(c)) continue;
                    ++filtered_list;
                }
                expected_mr += (static_cast<double>(filtered_list) + 1.0) / 2.0;
            }
        }
        expected_mr /= static_cast<double>(2 * test.size());
        CHECK(report.mr == expected_mr);
    }
    SUBCASE("matches the exhaustive sort-everything oracle on random graphs") {
        for (std::uint64_t seed = 0; seed < 8; ++seed) {
            const auto g = random_graph(5 + seed * 3, 3, 40 + seed * 10, 100 + seed);
            const std::size_t n_test = std::min<std::size_t>(6, g.observed().size());
            std::vector<Triplet> test(g.observed().begin(), g.observed().begin() + n_test);
            TripletSet known;
            for (const Triplet& t : g.observed()) known.insert(t);
            for (const Triplet& t : test) known.insert(t);

            const auto report = evaluate_mtp(g, test, hash_score);
            double mr = 0.0, mrr = 0.0, h1 = 0.0, h3 = 0.0, h10 = 0.0;
            for (const Triplet& target : test) {
                for (int dir = 0; dir < 2; ++dir) {
                    const double rank = oracle_rank(g, known, target, dir == 0, hash_score);
                    mr += rank;
                    mrr += 1.0 / rank;
                    h1 += rank <= 1.0;
                    h3 += rank <= 3.0;
                    h10 += rank <= 10.0;
                }
            }
            const double n = static_cast<double>(2 * test.size());
            CHECK(report.mr == mr / n);
            CHECK(report.mrr == doctest::Approx(mrr / n).epsilon(1e-14));
            CHECK(report.hits_at.at(1) == h1 / n);
            CHECK(report.hits_at.at(3) == h3 / n);
            CHECK(report.hits_at.at(10) == h10 / n);
        }
    }
    SUBCASE("adding an observed corruption never worsens the filtered rank") {
        Rng rng(23);
        for (int trial = 0; trial < 10; ++trial) {
            const auto g = random_graph(15, 2, 50, 200 + trial);
            const Triplet target = g.observed()[0];
            std::vector<Triplet> test = {target};

            const auto before = evaluate_mtp(g, test, hash_score);

            // materialize a previously-unknown tail corruption as observed
            Triplet corruption = target;
            bool found = false;
            for (EntityId e = 0; e < g.entity_count() && !found; ++e) {
                corruption.tail = e;
                if (corruption != target && !g.contains(corruption, Scope::either)) found = true;
            }
            REQUIRE(found);
            Vocab ents, rels;
            for (std::uint32_t e = 0; e < g.entity_count(); ++e) ents.intern(g.entities().name(e));
            for (std::uint32_t r = 0; r < g.relation_count(); ++r) {
                rels.intern(g.relations().name(r));
            }
            auto observed = g.observed();
            observed.push_back(corruption);
            const auto mutated = KnowledgeGraph::from_triplets(std::move(ents), std::move(rels),
                                                               std::move(observed), {});
            const auto after = evaluate_mtp(mutated, test, hash_score);
            CHECK(after.mr <= before.mr);
        }
    }
    SUBCASE("metric bounds and hits monotonicity") {
        const auto g = random_graph(30, 3, 120, 29);
        std::vector<Triplet> test(g.observed().begin(), g.observed().begin() + 8);
        const auto r = evaluate_mtp(g, test, hash_score);
        CHECK(r.mr >= 1.0);
        CHECK(r.mrr > 0.0);
        CHECK(r.mrr <= 1.0);
        CHECK(r.hits_at.at(1) <= r.hits_at.at(3));
        CHECK(r.hits_at.at(3) <= r.hits_at.at(10));
    }
    SUBCASE("unknown ids are rejected") {
        const auto g = random_graph(10, 2, 30, 31);
        std::vector<Triplet> test = {Triplet{200, 0, 1}};
        CHECK_THROWS_AS(evaluate_mtp(g, test, hash_score), DomainError);
    }
    SUBCASE("empty test set is an error") {
        const auto g = random_graph(10, 2, 30, 37);
        CHECK_THROWS_AS(evaluate_mtp(g, {}, hash_score), ValidationError);
    }
}

TEST_CASE("audit sample") {
    namespace fs = std::filesystem;
    const auto g = random_graph(60, 4, 200, 41);
    const auto poisons = generate_poisons(g, 50, 13);
    const fs::path dir = fs::temp_directory_path() / "kgr_eval_test";
    fs::create_directories(dir);

    auto read_lines = [](const fs::path& p) {
        std::ifstream in(p);
        std::vector<std::string> lines;
        std::string line;
        while (std::getline(in, line)) lines.push_back(line);
        return lines;
    };

    SUBCASE("same seed, same sample") {
        label_audit_sample(poisons, g, 20, 5, dir / "a.tsv");
        label_audit_sample(poisons, g, 20, 5, dir / "b.tsv");
        CHECK(read_lines(dir / "a.tsv") == read_lines(dir / "b.tsv"));
        CHECK(read_lines(dir / "a.tsv").size() == 20);
    }
    SUBCASE("sampling everything writes the whole set once") {
        label_audit_sample(poisons, g, poisons.size(), 5, dir / "all.tsv");
        auto lines = read_lines(dir / "all.tsv");
        CHECK(lines.size() == poisons.size());
        std::sort(lines.begin(), lines.end());
        CHECK(std::adjacent_find(lines.begin(), lines.end()) == lines.end());
    }
    SUBCASE("oversampling is rejected") {
        CHECK_THROWS_AS(label_audit_sample(poisons, g, poisons.size() + 1, 5, dir / "x.tsv"),
                        ValidationError);
    }
    fs::remove_all(dir);
}
