#include "kgr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include "kgr/rng.hpp"

namespace kgr {

namespace {

std::uint64_t pack(std::uint32_t a, std::uint32_t b) {
    return (static_cast<std::uint64_t>(a) << 32) | b;
}

struct Builder {
    const SynthSpec& spec;
    Rng rng;
    TripletSet true_set;
    std::vector<Triplet> true_list;
    // Per planted negating rule: the entity pairs its violations may use.
    std::vector<std::vector<std::uint64_t>> violation_pairs;
    // True triplets that stay rule-supported when held out: closure halves of
    // symmetric pairs and materialized transitive heads.
    std::vector<Triplet> holdout_pool;

    explicit Builder(const SynthSpec& s) : spec(s), rng(s.seed) {}

    EntityId random_entity() {
        return static_cast<EntityId>(uniform_below(rng, spec.entity_count));
    }

    bool add_true(const Triplet& t) {
        if (!true_set.insert(t).second) return false;
        true_list.push_back(t);
        return true;
    }

    // Random x != z edge of `rel`, deduplicated, with an attempt cap.
    void fill_random_edges(RelationId rel, std::size_t budget, const char* constraint,
                           const std::unordered_set<std::uint64_t>* forbidden_pairs = nullptr,
                           std::vector<std::uint64_t>* pairs_out = nullptr) {
        std::size_t added = 0;
        std::size_t attempts = 0;
        const std::size_t cap = 100 * budget + 1000;
        while (added < budget) {
            if (++attempts > cap) {
                throw ValidationError(std::string("infeasible spec: ") + constraint);
            }
            const EntityId x = random_entity();
            const EntityId z = random_entity();
            if (x == z) continue;
            if (forbidden_pairs && forbidden_pairs->contains(pack(x, z))) continue;
            if (!add_true(Triplet{x, rel, z})) continue;
            if (pairs_out) pairs_out->push_back(pack(x, z));
            ++added;
        }
    }
};

void validate_spec(const SynthSpec& spec) {
    if (spec.entity_count < 3) throw ValidationError("infeasible spec: entity_count below 3");
    if (spec.relation_count < 1) {
        throw ValidationError("infeasible spec: relation_count below 1");
    }
    if (spec.base_density <= 0.0) {
        throw ValidationError("infeasible spec: base_density must be positive");
    }
    if (spec.noise_rate < 0.0 || spec.noise_rate >= 1.0) {
        throw ValidationError("infeasible spec: noise_rate outside [0,1)");
    }

    std::vector<int> bound(spec.relation_count, -1);
    double negating_rate_sum = 0.0;
    for (std::size_t i = 0; i < spec.planted.size(); ++i) {
        const PlantedRule& rule = spec.planted[i];
        const RulePattern& p = rule.pattern;
        if (rule.rate < 0.0 || rule.rate > 1.0) {
            throw ValidationError("infeasible spec: planted rule rate outside [0,1]");
        }
        if (!is_supporting(p.kind)) negating_rate_sum += rule.rate;
        for (int a = 0; a < p.arity(); ++a) {
            if (p.rel[a] >= spec.relation_count) {
                throw ValidationError("infeasible spec: planted rule binds unknown relation");
            }
        }
        if (p.kind == RuleKind::conflict && p.rel[0] == p.rel[1]) {
            throw ValidationError(
                "infeasible spec: conflict rule head relation equals its body relation");
        }
        if ((p.kind == RuleKind::block || p.kind == RuleKind::transitive) &&
            (p.rel[2] == p.rel[0] || p.rel[2] == p.rel[1])) {
            throw ValidationError(
                "infeasible spec: path rule head relation equals a body relation");
        }
        // Exclusive relation roles keep constraint enforcement local: once a
        // rule's relations are generated, nothing later can touch them.
        for (int a = 0; a < p.arity(); ++a) {
            const RelationId r = p.rel[a];
            const bool same_rule_reuse = bound[r] == static_cast<int>(i);
            const bool body_pair = (p.kind == RuleKind::transitive || p.kind == RuleKind::block) &&
                                   a == 1 && p.rel[0] == p.rel[1];
            if (bound[r] >= 0 && !(same_rule_reuse && body_pair)) {
                throw ValidationError("infeasible spec: relation bound by more than one planted "
                                      "rule position");
            }
            bound[r] = static_cast<int>(i);
        }
    }
    if (negating_rate_sum > 1.0 + 1e-12) {
        throw ValidationError("infeasible spec: negating rule rates sum above 1");
    }
}

}  // namespace

SynthOutput generate(const SynthSpec& spec) {
    validate_spec(spec);

    Builder b(spec);
    const auto budget = static_cast<std::size_t>(
        std::llround(spec.base_density * static_cast<double>(spec.entity_count)));
    if (budget == 0) throw ValidationError("infeasible spec: per-relation edge budget is zero");

    b.violation_pairs.resize(spec.planted.size());
    std::vector<std::uint64_t> realized_support(spec.planted.size(), 0);

    for (std::size_t i = 0; i < spec.planted.size(); ++i) {
        const PlantedRule& rule = spec.planted[i];
        const RulePattern& p = rule.pattern;
        switch (p.kind) {
            case RuleKind::symmetric: {
                // Symmetric relations carry extra mass: their closure halves
                // seed the holdout pool, and held-out triplets must stay a
                // minority of every relation or weight learning sees more
                // uncertain heads than observed ones.
                const std::size_t sym_budget = budget * 5 / 2;
                std::size_t added = 0;
                std::size_t attempts = 0;
                const std::size_t cap = 100 * sym_budget + 1000;
                while (added < sym_budget) {
                    if (++attempts > cap) {
                        throw ValidationError(
                            "infeasible spec: symmetric relation budget unreachable");
                    }
                    const EntityId x = b.random_entity();
                    const EntityId z = b.random_entity();
                    if (x == z) continue;
                    if (!b.add_true(Triplet{x, p.rel[0], z})) continue;
                    ++added;
                    if (uniform_unit(b.rng) < rule.rate) {
                        if (b.add_true(Triplet{z, p.rel[0], x})) {
                            ++added;
                            b.holdout_pool.push_back(Triplet{z, p.rel[0], x});
                        }
                    }
                }
                realized_support[i] = added;
                break;
            }
            case RuleKind::transitive:
            case RuleKind::block: {
                // Path-rule bodies carry extra mass: transitive paths feed the
                // holdout pool, block paths feed the violation pool.
                const std::size_t body_budget =
                    p.kind == RuleKind::transitive ? 2 * budget : budget + budget / 2;
                std::vector<std::uint64_t> body_a_pairs;
                b.fill_random_edges(p.rel[0], body_budget,
                                    "path rule first body budget unreachable", nullptr,
                                    &body_a_pairs);
                b.fill_random_edges(p.rel[1], body_budget,
                                    "path rule second body budget unreachable");

                // Distinct two-hop endpoints through the freshly generated
                // bodies. Both relations are exclusive to this rule, so the
                // path set is final.
                std::unordered_map<EntityId, std::vector<EntityId>> second_hop;
                for (const Triplet& t : b.true_list) {
                    if (t.relation == p.rel[1]) second_hop[t.head].push_back(t.tail);
                }
                std::unordered_set<std::uint64_t> endpoint_set;
                std::vector<std::uint64_t> endpoints;
                for (std::uint64_t key : body_a_pairs) {
                    const auto x = static_cast<EntityId>(key >> 32);
                    const auto y = static_cast<EntityId>(key & 0xffffffffull);
                    auto it = second_hop.find(y);
                    if (it == second_hop.end()) continue;
                    for (EntityId z : it->second) {
                        if (x == z) continue;
                        if (endpoint_set.insert(pack(x, z)).second) {
                            endpoints.push_back(pack(x, z));
                        }
                    }
                }

                realized_support[i] = endpoints.size();
                if (p.kind == RuleKind::transitive) {
                    for (std::uint64_t key : endpoints) {
                        if (uniform_unit(b.rng) >= rule.rate) continue;
                        const Triplet head{static_cast<EntityId>(key >> 32), p.rel[2],
                                           static_cast<EntityId>(key & 0xffffffffull)};
                        if (b.add_true(head)) b.holdout_pool.push_back(head);
                    }
                } else {
                    b.fill_random_edges(p.rel[2], budget,
                                        "block rule head budget unreachable off the path set",
                                        &endpoint_set);
                    b.violation_pairs[i] = std::move(endpoints);
                }
                break;
            }
            case RuleKind::conflict: {
                std::vector<std::uint64_t> body_pairs;
                b.fill_random_edges(p.rel[0], budget, "conflict body budget unreachable", nullptr,
                                    &body_pairs);
                std::unordered_set<std::uint64_t> body_pair_set(body_pairs.begin(),
                                                                body_pairs.end());
                b.fill_random_edges(p.rel[1], budget,
                                    "conflict head budget unreachable off the body pairs",
                                    &body_pair_set);
                realized_support[i] = body_pairs.size();
                b.violation_pairs[i] = std::move(body_pairs);
                break;
            }
        }
    }

    // Filler edges on every unbound relation.
    {
        std::vector<bool> bound(spec.relation_count, false);
        for (const PlantedRule& rule : spec.planted) {
            for (int a = 0; a < rule.pattern.arity(); ++a) bound[rule.pattern.rel[a]] = true;
        }
        for (RelationId r = 0; r < spec.relation_count; ++r) {
            if (!bound[r]) b.fill_random_edges(r, budget, "filler budget unreachable");
        }
    }

    // Noise, violating each planted negating rule at its configured rate.
    const std::size_t n_true = b.true_list.size();
    const auto n_noise = static_cast<std::size_t>(std::llround(
        spec.noise_rate / (1.0 - spec.noise_rate) * static_cast<double>(n_true)));
    std::vector<Triplet> noise;
    TripletSet noise_set;
    auto add_noise = [&](const Triplet& t) {
        if (b.true_set.contains(t)) return false;
        if (!noise_set.insert(t).second) return false;
        noise.push_back(t);
        return true;
    };
    for (std::size_t i = 0; i < spec.planted.size(); ++i) {
        const PlantedRule& rule = spec.planted[i];
        if (is_supporting(rule.pattern.kind)) continue;
        const auto quota = static_cast<std::size_t>(
            std::llround(rule.rate * static_cast<double>(n_noise)));
        const auto& pairs = b.violation_pairs[i];
        if (quota > 0 && pairs.empty()) {
            throw ValidationError("infeasible spec: negating rule has no violable pairs");
        }
        std::size_t added = 0;
        std::size_t attempts = 0;
        const std::size_t cap = 200 * quota + 1000;
        const RelationId head_rel = rule.pattern.head_relation();
        while (added < quota) {
            if (++attempts > cap) {
                throw ValidationError(
                    "infeasible spec: not enough distinct violations for a negating rule");
            }
            const std::uint64_t key = pairs[uniform_below(b.rng, pairs.size())];
            const Triplet t{static_cast<EntityId>(key >> 32), head_rel,
                            static_cast<EntityId>(key & 0xffffffffull)};
            if (add_noise(t)) ++added;
        }
    }
    {
        std::size_t attempts = 0;
        const std::size_t cap = 200 * n_noise + 1000;
        while (noise.size() < n_noise) {
            if (++attempts > cap) {
                throw ValidationError("infeasible spec: uniform noise budget unreachable");
            }
            const Triplet t{b.random_entity(),
                            static_cast<RelationId>(uniform_below(b.rng, spec.relation_count)),
                            b.random_entity()};
            add_noise(t);
        }
    }

    // Hold out as many true triplets as there are noise triplets, preferring
    // the pool of triplets that remain rule-supported once held out; the
    // remainder, if any, is drawn uniformly.
    const std::size_t n_hold = std::min(noise.size(), n_true);
    if (n_hold * 2 > n_true) {
        throw ValidationError(
            "infeasible spec: noise rate would hold out more than half of the true triplets");
    }
    TripletSet held;
    {
        std::vector<std::size_t> pool_order(b.holdout_pool.size());
        for (std::size_t i = 0; i < pool_order.size(); ++i) pool_order[i] = i;
        shuffle_inplace(b.rng, pool_order);
        for (std::size_t i = 0; i < pool_order.size() && held.size() < n_hold; ++i) {
            held.insert(b.holdout_pool[pool_order[i]]);
        }
        if (held.size() < n_hold) {
            std::vector<std::size_t> order(n_true);
            for (std::size_t i = 0; i < n_true; ++i) order[i] = i;
            shuffle_inplace(b.rng, order);
            for (std::size_t i = 0; i < n_true && held.size() < n_hold; ++i) {
                held.insert(b.true_list[order[i]]);
            }
        }
    }

    std::vector<Triplet> observed;
    std::vector<Triplet> candidates;
    observed.reserve(n_true - n_hold);
    candidates.reserve(n_hold + noise.size());
    for (const Triplet& t : b.true_list) {
        if (held.contains(t)) {
            candidates.push_back(t);
        } else {
            observed.push_back(t);
        }
    }
    for (const Triplet& t : noise) candidates.push_back(t);

    Vocab entities;
    for (std::size_t e = 0; e < spec.entity_count; ++e) entities.intern("e" + std::to_string(e));
    Vocab relations;
    for (std::size_t r = 0; r < spec.relation_count; ++r) {
        relations.intern("r" + std::to_string(r));
    }

    SynthOutput out{KnowledgeGraph::from_triplets(std::move(entities), std::move(relations),
                                                  std::move(observed), std::move(candidates)),
                    {},
                    {}};
    for (const Triplet& t : b.true_list) out.ground_truth[t] = 1;
    for (const Triplet& t : noise) out.ground_truth[t] = 0;

    for (std::size_t i = 0; i < spec.planted.size(); ++i) {
        RuleInstance inst;
        inst.pattern = spec.planted[i].pattern;
        inst.weight = 0.0;
        inst.empirical_precision = spec.planted[i].rate;
        inst.support = realized_support[i];
        out.planted.push_back(inst);
    }
    return out;
}

SynthSpec default_acceptance_spec() {
    SynthSpec spec;
    spec.entity_count = 1000;
    spec.relation_count = 20;
    spec.base_density = 0.6;
    spec.noise_rate = 0.10;
    spec.seed = 20200807;
    spec.planted = {
        {RulePattern{RuleKind::symmetric, {0, 0, 0}}, 0.95},
        {RulePattern{RuleKind::symmetric, {1, 0, 0}}, 0.95},
        {RulePattern{RuleKind::transitive, {2, 3, 4}}, 0.95},
        {RulePattern{RuleKind::transitive, {5, 6, 7}}, 0.95},
        {RulePattern{RuleKind::block, {8, 9, 10}}, 0.30},
        {RulePattern{RuleKind::block, {11, 12, 13}}, 0.30},
        {RulePattern{RuleKind::conflict, {14, 15, 0}}, 0.175},
        {RulePattern{RuleKind::conflict, {16, 17, 0}}, 0.175},
    };
    return spec;
}

void save_labels(const SynthOutput& out, const std::filesystem::path& path) {
    std::ofstream file(path, std::ios::trunc);
    if (!file) throw ComputeError("cannot write labels file: " + path.string());
    auto write = [&](const Triplet& t) {
        file << out.graph.format(t) << '\t' << out.ground_truth.at(t) << '\n';
    };
    for (const Triplet& t : out.graph.observed()) write(t);
    for (const Triplet& t : out.graph.candidates()) write(t);
}

}  // namespace kgr
