#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "kgr/embedding.hpp"
#include "kgr/rng.hpp"
#include "test_support.hpp"

using namespace kgr;
using testsup::make_graph;
using testsup::random_graph;
using testsup::rel_err;

namespace {

// Independent scalar-loop score computation, written no cleverer than a
// calculator session.
double oracle_raw_score(const EmbeddingModel& m, const Triplet& t) {
    const auto h = m.entity_vector(t.head);
    const auto r = m.relation_vector(t.relation);
    const auto tl = m.entity_vector(t.tail);
    const int d = m.dim();
    if (m.kind() == ScoreKind::transe) {
        double sq = 0.0;
        for (int k = 0; k < d; ++k) {
            sq += (h[k] + r[k] - tl[k]) * (h[k] + r[k] - tl[k]);
        }
        return m.gamma() - std::sqrt(sq);
    }
    if (m.kind() == ScoreKind::distmult) {
        double z = 0.0;
        for (int k = 0; k < d; ++k) z += h[k] * r[k] * tl[k];
        return z;
    }
    // complex: multiply out (h_re + i h_im)(r_re + i r_im)(t_re - i t_im)
    double z = 0.0;
    for (int k = 0; k < d; ++k) {
        const double prod_re = h[k] * r[k] - h[d + k] * r[d + k];
        const double prod_im = h[k] * r[d + k] + h[d + k] * r[k];
        z += prod_re * tl[k] + prod_im * tl[d + k];
    }
    return z;
}

EmbeddingModel small_model(const KnowledgeGraph& g, ScoreKind kind, std::uint64_t seed,
                           int dim = 4) {
    return EmbeddingModel::init(g, kind, dim, 1.0, seed);
}

const ScoreKind kAllKinds[] = {ScoreKind::transe, ScoreKind::distmult, ScoreKind::complex};

}  // namespace

TEST_CASE("init is deterministic and bounded") {
    const auto g = random_graph(8, 2, 30, 1);
    for (ScoreKind kind : kAllKinds) {
        const auto a = EmbeddingModel::init(g, kind, 30, 1.0, 42);
        const auto b = EmbeddingModel::init(g, kind, 30, 1.0, 42);
        const double bound = 6.0 / std::sqrt(30.0);
        for (EntityId e = 0; e < g.entity_count(); ++e) {
            const auto va = a.entity_vector(e);
            const auto vb = b.entity_vector(e);
            for (std::size_t k = 0; k < va.size(); ++k) {
                CHECK(va[k] == vb[k]);
                CHECK(std::abs(va[k]) <= bound);
            }
        }
        CHECK(a.dim() == 30);
        CHECK(a.gamma() == 1.0);
    }
}

TEST_CASE("transe score at zero distance is the sigmoid of gamma") {
    const auto g = make_graph({{"a", "r", "b"}});
    auto m = EmbeddingModel::init(g, ScoreKind::transe, 4, 1.0, 3);
    auto h = m.entity_vector(0);
    auto r = m.relation_vector(0);
    auto t = m.entity_vector(1);
    for (int k = 0; k < 4; ++k) t[k] = h[k] + r[k];
    CHECK(m.score(Triplet{0, 0, 1}) == doctest::Approx(0.7310585786).epsilon(1e-9));
}

TEST_CASE("distmult is symmetric in head and tail") {
    const auto g = random_graph(6, 2, 20, 5);
    const auto m = small_model(g, ScoreKind::distmult, 9);
    for (EntityId h = 0; h < 6; ++h) {
        for (EntityId t = 0; t < 6; ++t) {
            CHECK(m.score(Triplet{h, 0, t}) == doctest::Approx(m.score(Triplet{t, 0, h})));
        }
    }
}

TEST_CASE("scores match the scalar-loop oracle for every kind") {
    const auto g = random_graph(10, 3, 40, 8);
    Rng rng(21);
    for (ScoreKind kind : kAllKinds) {
        const auto m = small_model(g, kind, 31, 6);
        for (int probe = 0; probe < 50; ++probe) {
            const Triplet t{static_cast<EntityId>(uniform_below(rng, 10)),
                            static_cast<RelationId>(uniform_below(rng, 3)),
                            static_cast<EntityId>(uniform_below(rng, 10))};
            CHECK(m.raw_score(t) == doctest::Approx(oracle_raw_score(m, t)).epsilon(1e-12));
        }
    }
}

TEST_CASE("bernoulli complement is exact") {
    const auto g = random_graph(8, 2, 30, 2);
    for (ScoreKind kind : kAllKinds) {
        const auto m = small_model(g, kind, 77);
        for (const Triplet& t : g.observed()) {
            CHECK(m.probability(t, 1) + m.probability(t, 0) == 1.0);
        }
    }
}

TEST_CASE("analytic gradients match central finite differences") {
    const double eps = 1e-5;
    Rng rng(1234);
    for (ScoreKind kind : kAllKinds) {
        for (int config = 0; config < 100; ++config) {
            const auto g = random_graph(5, 2, 12, 9000 + config);
            auto m = small_model(g, kind, 100 + config, 3);
            const Triplet t{static_cast<EntityId>(uniform_below(rng, 5)),
                            static_cast<RelationId>(uniform_below(rng, 2)),
                            static_cast<EntityId>(uniform_below(rng, 5))};
            const int truth = coin(rng) ? 1 : 0;

            const std::size_t width = static_cast<std::size_t>(m.row_width());
            std::vector<double> ge(g.entity_count() * width, 0.0);
            std::vector<double> gr(g.relation_count() * width, 0.0);
            add_nll_gradient(m, t, truth, 1.0, ge, gr);

            auto check_param = [&](bool entity, std::uint32_t row, std::size_t k,
                                   double analytic) {
                auto vec = entity ? m.entity_vector(row) : m.relation_vector(row);
                const double saved = vec[k];
                vec[k] = saved + eps;
                const double up = nll(m, t, truth);
                vec[k] = saved - eps;
                const double down = nll(m, t, truth);
                vec[k] = saved;
                const double fd = (up - down) / (2 * eps);
                CHECK(rel_err(analytic, fd) < 1e-4);
            };
            for (std::size_t k = 0; k < width; ++k) {
                check_param(true, t.head, k, ge[t.head * width + k]);
                check_param(true, t.tail, k, ge[t.tail * width + k]);
                check_param(false, t.relation, k, gr[t.relation * width + k]);
            }
        }
    }
}

TEST_CASE("single positive fit raises its score") {
    const auto g = make_graph({{"a", "r", "b"}});
    for (ScoreKind kind : kAllKinds) {
        auto m = EmbeddingModel::init(g, kind, 4, 1.0, 5);
        const double before = m.score(g.observed()[0]);
        TrainConfig cfg;
        cfg.learning_rate = 0.1;
        cfg.epochs = 200;
        cfg.negatives_per_positive = 0;  // two entities leave no corruption room
        cfg.seed = 7;
        train(m, g, g.observed(), {}, cfg);
        CHECK(m.score(g.observed()[0]) > before);
        CHECK(m.all_finite());
    }
}

TEST_CASE("full-batch descent at small lr is almost never uphill") {
    const auto g = random_graph(8, 2, 10, 6);
    for (ScoreKind kind : kAllKinds) {
        auto m = small_model(g, kind, 11);
        TrainConfig cfg;
        cfg.learning_rate = 1e-3;
        cfg.epochs = 1;
        cfg.negatives_per_positive = 0;  // fixed objective
        cfg.batch_size = 1 << 20;        // full batch
        cfg.seed = 3;
        int uphill = 0;
        const int steps = 100;
        double loss = dataset_nll(m, g.observed(), {});
        for (int s = 0; s < steps; ++s) {
            train(m, g, g.observed(), {}, cfg);
            const double next = dataset_nll(m, g.observed(), {});
            if (next > loss + 1e-12) ++uphill;
            loss = next;
        }
        CHECK(uphill <= steps / 20);
    }
}

TEST_CASE("training is deterministic under a fixed seed") {
    const auto g = random_graph(12, 3, 60, 17, 10);
    TrainConfig cfg;
    cfg.learning_rate = 0.05;
    cfg.epochs = 5;
    cfg.negatives_per_positive = 3;
    cfg.batch_size = 16;
    cfg.seed = 99;
    for (ScoreKind kind : kAllKinds) {
        auto a = small_model(g, kind, 1);
        auto b = small_model(g, kind, 1);
        train(a, g, g.observed(), g.candidates(), cfg);
        train(b, g, g.observed(), g.candidates(), cfg);
        for (EntityId e = 0; e < g.entity_count(); ++e) {
            const auto va = a.entity_vector(e);
            const auto vb = b.entity_vector(e);
            for (std::size_t k = 0; k < va.size(); ++k) CHECK(va[k] == vb[k]);
        }
    }
}

TEST_CASE("transe score is invariant under a common entity translation") {
    const auto g = random_graph(10, 2, 40, 23);
    auto m = small_model(g, ScoreKind::transe, 13, 5);
    std::vector<double> scores;
    for (const Triplet& t : g.observed()) scores.push_back(m.score(t));
    for (EntityId e = 0; e < g.entity_count(); ++e) {
        auto v = m.entity_vector(e);
        for (std::size_t k = 0; k < v.size(); ++k) v[k] += 0.73;
    }
    for (std::size_t i = 0; i < g.observed().size(); ++i) {
        CHECK(std::abs(m.score(g.observed()[i]) - scores[i]) <= 1e-12);
    }
}

TEST_CASE("negative sampling") {
    SUBCASE("saturated graph cannot produce corruptions") {
        const auto g = make_graph({{"a", "r", "a"}, {"a", "r", "b"}, {"b", "r", "a"},
                                   {"b", "r", "b"}});
        CHECK_THROWS_AS(sample_negatives(g, g.observed()[0], 1, 0), ComputeError);
    }
    SUBCASE("samples avoid the observed set") {
        const auto g = random_graph(30, 2, 40, 31);
        const auto negs = sample_negatives(g, g.observed()[0], 5, 12);
        CHECK(negs.size() == 5);
        for (const Triplet& t : negs) CHECK_FALSE(g.contains(t, Scope::observed));
    }
    SUBCASE("head and tail corruption are balanced") {
        const auto g = random_graph(50, 2, 30, 41);
        const Triplet tau = g.observed()[0];
        std::size_t head_changed = 0;
        std::size_t total = 0;
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            for (const Triplet& t : sample_negatives(g, tau, 100, seed)) {
                if (t.head != tau.head) ++head_changed;
                ++total;
            }
        }
        const double ratio = static_cast<double>(head_changed) / static_cast<double>(total);
        CHECK(ratio == doctest::Approx(0.5).epsilon(0.04));
    }
}

TEST_CASE("checkpoint round-trip preserves scores and id maps") {
    namespace fs = std::filesystem;
    const auto g = random_graph(9, 3, 35, 53);
    const fs::path dir = fs::temp_directory_path() / "kgr_emb_test";
    fs::create_directories(dir);
    for (ScoreKind kind : kAllKinds) {
        const auto m = small_model(g, kind, 8);
        m.save(dir / "model.bin", g);
        const auto loaded = EmbeddingModel::load(dir / "model.bin", g);
        CHECK(loaded.kind() == m.kind());
        CHECK(loaded.dim() == m.dim());
        CHECK(loaded.gamma() == m.gamma());
        for (const Triplet& t : g.observed()) CHECK(loaded.score(t) == m.score(t));
    }
    SUBCASE("mismatched graph is rejected") {
        const auto m = small_model(g, ScoreKind::transe, 8);
        m.save(dir / "model.bin", g);
        const auto other = random_graph(10, 3, 35, 54);
        CHECK_THROWS_AS(EmbeddingModel::load(dir / "model.bin", other), ValidationError);
    }
    fs::remove_all(dir);
}
