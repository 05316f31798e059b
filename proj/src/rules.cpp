#include "kgr/rules.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "kgr/format.hpp"

namespace kgr {

namespace {

std::uint64_t pack(std::uint32_t a, std::uint32_t b) {
    return (static_cast<std::uint64_t>(a) << 32) | b;
}

bool present_either(const KnowledgeGraph& g, const Triplet& t) {
    return g.contains(t, Scope::either);
}

}  // namespace

const char* rule_kind_name(RuleKind k) {
    switch (k) {
        case RuleKind::transitive: return "transitive";
        case RuleKind::symmetric: return "symmetric";
        case RuleKind::block: return "block";
        case RuleKind::conflict: return "conflict";
    }
    return "?";
}

RuleKind rule_kind_from_name(std::string_view name) {
    if (name == "transitive") return RuleKind::transitive;
    if (name == "symmetric") return RuleKind::symmetric;
    if (name == "block") return RuleKind::block;
    if (name == "conflict") return RuleKind::conflict;
    throw ParseError("unknown rule kind '" + std::string(name) + "'");
}

double stable_sigmoid(double x) {
    const double z = std::clamp(x, -30.0, 30.0);
    return 1.0 / (1.0 + std::exp(-z));
}

GroundingView::GroundingView(const KnowledgeGraph& g, const TripletSet& extra_true) : g_(&g) {
    std::vector<Triplet> fresh;
    fresh.reserve(extra_true.size());
    for (const Triplet& t : extra_true) {
        if (!g.contains(t, Scope::observed)) {
            if (extra_.insert(t).second) fresh.push_back(t);
        }
    }
    std::sort(fresh.begin(), fresh.end());
    extra_index_ = AdjacencyIndex::build(fresh);
}

bool GroundingView::edge_true(const Triplet& t) const {
    return g_->contains(t, Scope::observed) || extra_.contains(t);
}

std::uint64_t GroundingView::path_count(EntityId head, RelationId r_i, RelationId r_j,
                                        EntityId tail, const Triplet& exclude) const {
    std::uint64_t count = 0;
    auto check_middle = [&](EntityId y) {
        const Triplet body1{head, r_i, y};
        if (body1 == exclude) return;
        const Triplet body2{y, r_j, tail};
        if (body2 == exclude) return;
        if (edge_true(body2)) ++count;
    };
    for (EntityId y : g_->observed_index().tails(head, r_i)) check_middle(y);
    for (EntityId y : extra_index_.tails(head, r_i)) check_middle(y);
    return count;
}

std::uint64_t count_groundings(const GroundingView& view, const RuleInstance& rule,
                               const Triplet& tau) {
    const RulePattern& p = rule.pattern;
    if (p.head_relation() != tau.relation) {
        throw DomainError("rule head relation does not match triplet relation");
    }
    switch (p.kind) {
        case RuleKind::symmetric: {
            const Triplet body{tau.tail, p.rel[0], tau.head};
            if (body == tau) return 0;
            return view.edge_true(body) ? 1 : 0;
        }
        case RuleKind::conflict: {
            const Triplet body{tau.head, p.rel[0], tau.tail};
            if (body == tau) return 0;
            return view.edge_true(body) ? 1 : 0;
        }
        case RuleKind::transitive:
        case RuleKind::block:
            return view.path_count(tau.head, p.rel[0], p.rel[1], tau.tail, tau);
    }
    return 0;
}

std::uint64_t count_groundings(const KnowledgeGraph& g, const RuleInstance& rule,
                               const Triplet& tau, const TripletSet& extra_true) {
    return count_groundings(GroundingView(g, extra_true), rule, tau);
}

double rule_score(std::span<const RuleInstance> rules, const Triplet& tau,
                  const KnowledgeGraph& g, const TripletSet& extra_true) {
    const GroundingView view(g, extra_true);
    double f = 0.0;
    for (const RuleInstance& rule : rules) {
        if (rule.pattern.head_relation() != tau.relation) continue;
        const auto n = count_groundings(view, rule, tau);
        if (n == 0) continue;
        f += rule.polarity() * rule.weight * static_cast<double>(n);
    }
    return f;
}

double rule_probability(std::span<const RuleInstance> rules, const Triplet& tau,
                        const KnowledgeGraph& g, const TripletSet& extra_true) {
    return stable_sigmoid(rule_score(rules, tau, g, extra_true));
}

// ---------------------------------------------------------------------------
// Mining
// ---------------------------------------------------------------------------

std::vector<RuleInstance> mine_rules(const KnowledgeGraph& g, double beta,
                                     std::uint64_t min_support) {
    if (beta < 0.0 || beta > 1.0) throw ValidationError("beta must be in [0,1]");
    if (min_support == 0) throw ValidationError("min_support must be positive");

    const auto relation_count = static_cast<RelationId>(g.relation_count());
    std::vector<RuleInstance> mined;

    // Symmetric: generated set is the reversal of every observed edge of r.
    // Self-loops generate themselves and are skipped.
    {
        std::vector<std::uint64_t> support(relation_count, 0);
        std::vector<std::uint64_t> hits(relation_count, 0);
        for (const Triplet& t : g.observed()) {
            if (t.head == t.tail) continue;
            ++support[t.relation];
            if (g.contains(Triplet{t.tail, t.relation, t.head}, Scope::observed)) {
                ++hits[t.relation];
            }
        }
        for (RelationId r = 0; r < relation_count; ++r) {
            if (support[r] < min_support) continue;
            const double p = static_cast<double>(hits[r]) / static_cast<double>(support[r]);
            if (p < beta) continue;
            RuleInstance rule;
            rule.pattern = RulePattern{RuleKind::symmetric, {r, 0, 0}};
            rule.empirical_precision = p;
            rule.support = support[r];
            mined.push_back(rule);
        }
    }

    // Two-hop paths shared by transitive and block mining: for every body
    // relation pair (r_i, r_j), the distinct endpoint pairs (x, z) reachable
    // through some middle entity.
    {
        std::unordered_map<std::uint64_t, std::unordered_set<std::uint64_t>> endpoints;
        for (const Triplet& first : g.observed()) {
            for (const auto& [r_j, z] : g.observed_index().out_edges(first.tail)) {
                endpoints[pack(first.relation, r_j)].insert(pack(first.head, z));
            }
        }

        std::vector<std::uint64_t> coincident(relation_count);
        for (const auto& [body_key, pairs] : endpoints) {
            if (pairs.size() < min_support) continue;
            std::fill(coincident.begin(), coincident.end(), 0);
            for (std::uint64_t pair_key : pairs) {
                const auto x = static_cast<EntityId>(pair_key >> 32);
                const auto z = static_cast<EntityId>(pair_key & 0xffffffffull);
                for (RelationId r_k : g.observed_index().relations(x, z)) ++coincident[r_k];
            }
            const auto r_i = static_cast<RelationId>(body_key >> 32);
            const auto r_j = static_cast<RelationId>(body_key & 0xffffffffull);
            const auto denied = static_cast<double>(pairs.size());
            for (RelationId r_k = 0; r_k < relation_count; ++r_k) {
                if (coincident[r_k] == 0) {
                    // Never contradicted by an observed triplet: negation
                    // precision 1 - |D ∩ T| / |D| is exactly 1.
                    RuleInstance rule;
                    rule.pattern = RulePattern{RuleKind::block, {r_i, r_j, r_k}};
                    rule.empirical_precision = 1.0;
                    rule.support = pairs.size();
                    mined.push_back(rule);
                } else {
                    const double p = static_cast<double>(coincident[r_k]) / denied;
                    if (p < beta) continue;
                    RuleInstance rule;
                    rule.pattern = RulePattern{RuleKind::transitive, {r_i, r_j, r_k}};
                    rule.empirical_precision = p;
                    rule.support = pairs.size();
                    mined.push_back(rule);
                }
            }
        }
    }

    // Conflict: r_i denies r_j on the same entity pair.
    {
        std::vector<std::uint64_t> edge_count(relation_count, 0);
        std::vector<std::uint64_t> cooccur(static_cast<std::size_t>(relation_count) *
                                               relation_count,
                                           0);
        for (const Triplet& t : g.observed()) {
            ++edge_count[t.relation];
            for (RelationId other : g.observed_index().relations(t.head, t.tail)) {
                if (other == t.relation) continue;
                ++cooccur[static_cast<std::size_t>(t.relation) * relation_count + other];
            }
        }
        for (RelationId r_i = 0; r_i < relation_count; ++r_i) {
            if (edge_count[r_i] < min_support) continue;
            for (RelationId r_j = 0; r_j < relation_count; ++r_j) {
                if (r_j == r_i) continue;
                if (cooccur[static_cast<std::size_t>(r_i) * relation_count + r_j] != 0) continue;
                RuleInstance rule;
                rule.pattern = RulePattern{RuleKind::conflict, {r_i, r_j, 0}};
                rule.empirical_precision = 1.0;
                rule.support = edge_count[r_i];
                mined.push_back(rule);
            }
        }
    }

    std::sort(mined.begin(), mined.end(), [](const RuleInstance& a, const RuleInstance& b) {
        return a.pattern < b.pattern;
    });
    return mined;
}

// ---------------------------------------------------------------------------
// Markov blankets and conditionals
// ---------------------------------------------------------------------------

namespace {

// A grounding is materialized when every atom other than the target exists
// as an observed or candidate triplet.
void collect_blanket(const RuleInstance& rule, const Triplet& tau, const KnowledgeGraph& g,
                     TripletSet& out) {
    const RulePattern& p = rule.pattern;
    auto add = [&](const Triplet& t) {
        if (t != tau) out.insert(t);
    };
    auto merged_tails = [&](EntityId head, RelationId rel, auto&& fn) {
        for (EntityId y : g.observed_index().tails(head, rel)) fn(y);
        for (EntityId y : g.candidate_index().tails(head, rel)) fn(y);
    };
    auto merged_heads = [&](EntityId tail, RelationId rel, auto&& fn) {
        for (EntityId x : g.observed_index().heads(tail, rel)) fn(x);
        for (EntityId x : g.candidate_index().heads(tail, rel)) fn(x);
    };

    switch (p.kind) {
        case RuleKind::symmetric: {
            const Triplet mirror{tau.tail, p.rel[0], tau.head};
            // tau as head (mirror is the body) and tau as body (mirror is the
            // head) produce the same co-member.
            if (tau.relation == p.rel[0] && mirror != tau && present_either(g, mirror)) {
                add(mirror);
            }
            break;
        }
        case RuleKind::conflict: {
            if (tau.relation == p.rel[1]) {  // tau as head
                const Triplet body{tau.head, p.rel[0], tau.tail};
                if (present_either(g, body)) add(body);
            }
            if (tau.relation == p.rel[0]) {  // tau as body
                const Triplet head{tau.head, p.rel[1], tau.tail};
                if (present_either(g, head)) add(head);
            }
            break;
        }
        case RuleKind::transitive:
        case RuleKind::block: {
            if (tau.relation == p.rel[2]) {  // tau as head
                merged_tails(tau.head, p.rel[0], [&](EntityId y) {
                    const Triplet body1{tau.head, p.rel[0], y};
                    const Triplet body2{y, p.rel[1], tau.tail};
                    if (body1 == tau || body2 == tau) return;
                    if (present_either(g, body2)) {
                        add(body1);
                        add(body2);
                    }
                });
            }
            if (tau.relation == p.rel[0]) {  // tau as first body
                merged_tails(tau.tail, p.rel[1], [&](EntityId z) {
                    const Triplet body2{tau.tail, p.rel[1], z};
                    const Triplet head{tau.head, p.rel[2], z};
                    if (body2 == tau || head == tau) return;
                    if (present_either(g, head)) {
                        add(body2);
                        add(head);
                    }
                });
            }
            if (tau.relation == p.rel[1]) {  // tau as second body
                merged_heads(tau.head, p.rel[0], [&](EntityId x) {
                    const Triplet body1{x, p.rel[0], tau.head};
                    const Triplet head{x, p.rel[2], tau.tail};
                    if (body1 == tau || head == tau) return;
                    if (present_either(g, head)) {
                        add(body1);
                        add(head);
                    }
                });
            }
            break;
        }
    }
}

}  // namespace

MarkovBlanket markov_blanket(std::span<const RuleInstance> rules, const Triplet& tau,
                             const KnowledgeGraph& g) {
    g.check_ids(tau);
    TripletSet members;
    for (const RuleInstance& rule : rules) collect_blanket(rule, tau, g, members);
    MarkovBlanket mb;
    mb.target = tau;
    mb.blanket.assign(members.begin(), members.end());
    std::sort(mb.blanket.begin(), mb.blanket.end());
    return mb;
}

double conditional_rule_probability(std::span<const RuleInstance> rules, const Triplet& tau,
                                    const BlanketTruth& blanket_truth,
                                    const KnowledgeGraph& g) {
    auto atom_true = [&](const Triplet& t) -> bool {
        if (!present_either(g, t)) return false;
        auto it = blanket_truth.find(t);
        if (it == blanket_truth.end()) {
            throw DomainError("blanket member has no truth assignment: " + g.format(t, ' '));
        }
        return it->second != 0;
    };
    auto merged_tails = [&](EntityId head, RelationId rel, auto&& fn) {
        for (EntityId y : g.observed_index().tails(head, rel)) fn(y);
        for (EntityId y : g.candidate_index().tails(head, rel)) fn(y);
    };

    double f = 0.0;
    for (const RuleInstance& rule : rules) {
        const RulePattern& p = rule.pattern;
        if (p.head_relation() != tau.relation) continue;
        std::uint64_t n = 0;
        switch (p.kind) {
            case RuleKind::symmetric: {
                const Triplet body{tau.tail, p.rel[0], tau.head};
                if (body != tau && atom_true(body)) n = 1;
                break;
            }
            case RuleKind::conflict: {
                const Triplet body{tau.head, p.rel[0], tau.tail};
                if (body != tau && atom_true(body)) n = 1;
                break;
            }
            case RuleKind::transitive:
            case RuleKind::block: {
                merged_tails(tau.head, p.rel[0], [&](EntityId y) {
                    const Triplet body1{tau.head, p.rel[0], y};
                    const Triplet body2{y, p.rel[1], tau.tail};
                    if (body1 == tau || body2 == tau) return;
                    if (atom_true(body1) && atom_true(body2)) ++n;
                });
                break;
            }
        }
        if (n == 0) continue;
        f += rule.polarity() * rule.weight * static_cast<double>(n);
    }
    return stable_sigmoid(f);
}

// ---------------------------------------------------------------------------
// RuleMatcher
// ---------------------------------------------------------------------------

RuleMatcher::RuleMatcher(std::span<const RuleInstance> rules, std::size_t relation_count)
    : rules_(rules), by_head_relation_(relation_count) {
    for (std::uint32_t i = 0; i < rules.size(); ++i) {
        const RelationId head = rules[i].pattern.head_relation();
        if (head >= relation_count) throw DomainError("rule head relation out of range");
        by_head_relation_[head].push_back(i);
    }
}

std::span<const std::uint32_t> RuleMatcher::rules_for(RelationId head_relation) const {
    if (head_relation >= by_head_relation_.size()) return {};
    return by_head_relation_[head_relation];
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> RuleMatcher::features(
    const GroundingView& view, const Triplet& tau) const {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
    const auto bucket = rules_for(tau.relation);
    if (bucket.empty()) return out;

    bool need_paths = false;
    for (std::uint32_t idx : bucket) {
        const RuleKind k = rules_[idx].pattern.kind;
        if (k == RuleKind::transitive || k == RuleKind::block) {
            need_paths = true;
            break;
        }
    }

    // One pass over the head's out-edges collects every two-hop path type
    // between tau.head and tau.tail; all transitive/block rules then read
    // their counts from the map.
    std::unordered_map<std::uint64_t, std::uint32_t> path_counts;
    if (need_paths) {
        view.for_each_out_edge(tau.head, [&](RelationId r_i, EntityId y) {
            if (r_i == tau.relation && y == tau.tail) return;  // body1 == tau
            view.for_each_pair_relation(y, tau.tail, [&](RelationId r_j) {
                if (y == tau.head && r_j == tau.relation) return;  // body2 == tau
                ++path_counts[pack(r_i, r_j)];
            });
        });
    }

    for (std::uint32_t idx : bucket) {
        const RulePattern& p = rules_[idx].pattern;
        std::uint32_t n = 0;
        switch (p.kind) {
            case RuleKind::symmetric: {
                const Triplet body{tau.tail, p.rel[0], tau.head};
                if (body != tau && view.edge_true(body)) n = 1;
                break;
            }
            case RuleKind::conflict: {
                if (view.edge_true(Triplet{tau.head, p.rel[0], tau.tail})) n = 1;
                break;
            }
            case RuleKind::transitive:
            case RuleKind::block: {
                auto it = path_counts.find(pack(p.rel[0], p.rel[1]));
                if (it != path_counts.end()) n = it->second;
                break;
            }
        }
        if (n > 0) out.emplace_back(idx, n);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Rules file
// ---------------------------------------------------------------------------

void save_rules(std::span<const RuleInstance> rules, const KnowledgeGraph& g,
                const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ComputeError("cannot write rules file: " + path.string());
    for (const RuleInstance& rule : rules) {
        const RulePattern& p = rule.pattern;
        out << rule_kind_name(p.kind) << '\t';
        for (int i = 0; i < p.arity(); ++i) {
            if (i > 0) out << ',';
            out << g.relations().name(p.rel[i]);
        }
        out << '\t' << (rule.polarity() > 0 ? "+1" : "-1") << '\t'
            << format_double(rule.weight) << '\t' << format_double(rule.empirical_precision)
            << '\t' << rule.support << '\n';
    }
}

std::vector<RuleInstance> load_rules(const std::filesystem::path& path,
                                     const KnowledgeGraph& g) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open rules file: " + path.string());

    std::vector<RuleInstance> rules;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const std::string context = path.string() + ":" + std::to_string(lineno);

        const auto fields = split(line, '\t');
        if (fields.size() != 6) throw ParseError(context + ": expected 6 tab-separated fields");

        RuleInstance rule;
        rule.pattern.kind = rule_kind_from_name(fields[0]);
        const auto rel_names = split(fields[1], ',');
        if (static_cast<int>(rel_names.size()) != rule.pattern.arity()) {
            throw ParseError(context + ": wrong relation count for rule kind");
        }
        for (std::size_t i = 0; i < rel_names.size(); ++i) {
            const auto id = g.relations().find(rel_names[i]);
            if (!id) {
                throw ValidationError(context + ": unknown relation '" +
                                      std::string(rel_names[i]) + "'");
            }
            rule.pattern.rel[i] = *id;
        }
        const int polarity = fields[2] == "+1" ? +1 : fields[2] == "-1" ? -1 : 0;
        if (polarity == 0) throw ParseError(context + ": polarity must be +1 or -1");
        if (polarity != rule.polarity()) {
            throw ValidationError(context + ": polarity does not match rule kind");
        }
        rule.weight = parse_double(fields[3], context);
        if (!std::isfinite(rule.weight)) throw ValidationError(context + ": non-finite weight");
        rule.empirical_precision = parse_double(fields[4], context);
        rule.support = parse_u64(fields[5], context);
        if (rule.pattern.kind == RuleKind::conflict && rule.pattern.rel[0] == rule.pattern.rel[1]) {
            throw ValidationError(context + ": conflict rule relations must differ");
        }
        rules.push_back(rule);
    }
    return rules;
}

}  // namespace kgr
