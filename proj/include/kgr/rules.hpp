#pragma once

// Rule mining and grounding over the four fixed patterns:
//
//   transitive  r_i(x,y) ∧ r_j(y,z) ⇒  r_k(x,z)   supporting
//   symmetric   r(x,y)              ⇒  r(y,x)     supporting
//   block       r_i(x,y) ∧ r_j(y,z) ⇒ ¬r_k(x,z)   negating
//   conflict    r_i(x,y)            ⇒ ¬r_j(x,y)   negating
//
// A rule never grounds against the triplet it is scoring: the target is not
// part of its own Markov blanket, so a body atom equal to the target does
// not count.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <unordered_map>
#include <vector>

#include "kgr/kg.hpp"

namespace kgr {

enum class RuleKind : std::uint8_t { transitive, symmetric, block, conflict };

inline bool is_supporting(RuleKind k) {
    return k == RuleKind::transitive || k == RuleKind::symmetric;
}
const char* rule_kind_name(RuleKind k);
RuleKind rule_kind_from_name(std::string_view name);

struct RulePattern {
    RuleKind kind = RuleKind::symmetric;
    // transitive/block: rel[0], rel[1] body, rel[2] head.
    // symmetric: rel[0]. conflict: rel[0] body, rel[1] head.
    std::array<RelationId, 3> rel{0, 0, 0};

    int arity() const {
        switch (kind) {
            case RuleKind::transitive:
            case RuleKind::block: return 3;
            case RuleKind::conflict: return 2;
            case RuleKind::symmetric: return 1;
        }
        return 0;
    }

    // Relation of the triplet the rule supports or negates.
    RelationId head_relation() const {
        switch (kind) {
            case RuleKind::transitive:
            case RuleKind::block: return rel[2];
            case RuleKind::conflict: return rel[1];
            case RuleKind::symmetric: return rel[0];
        }
        return rel[0];
    }

    friend bool operator==(const RulePattern&, const RulePattern&) = default;
    friend auto operator<=>(const RulePattern&, const RulePattern&) = default;
};

struct RuleInstance {
    RulePattern pattern;
    double weight = 0.0;
    double empirical_precision = 0.0;
    // Size of the generated set (supporting) or denied set (negating) at
    // mining time.
    std::uint64_t support = 0;

    int polarity() const { return is_supporting(pattern.kind) ? +1 : -1; }
};

struct Grounding {
    std::vector<Triplet> body_triplets;
    Triplet head_triplet;
};

struct MarkovBlanket {
    Triplet target;
    std::vector<Triplet> blanket;  // sorted, unique, never contains target
};

// Sigmoid with the exponent clamped to ±30: stable for |x| up to 1e4 and
// strictly inside (0,1).
double stable_sigmoid(double x);

// Edge truth over observed ∪ extra_true, with merged adjacency. extra_true
// is indexed once at construction; edges already observed are not duplicated.
class GroundingView {
  public:
    GroundingView(const KnowledgeGraph& g, const TripletSet& extra_true);

    const KnowledgeGraph& graph() const { return *g_; }
    bool edge_true(const Triplet& t) const;

    // Distinct middle entities y with (head, r_i, y) and (y, r_j, tail) true,
    // skipping body atoms equal to `exclude`.
    std::uint64_t path_count(EntityId head, RelationId r_i, RelationId r_j, EntityId tail,
                             const Triplet& exclude) const;

    // Out-edges of `head` in both sources; calls fn(relation, tail).
    template <typename Fn>
    void for_each_out_edge(EntityId head, Fn&& fn) const {
        for (const auto& [rel, tail] : g_->observed_index().out_edges(head)) fn(rel, tail);
        for (const auto& [rel, tail] : extra_index_.out_edges(head)) fn(rel, tail);
    }

    // Relations on the (head, tail) pair in both sources; calls fn(relation).
    template <typename Fn>
    void for_each_pair_relation(EntityId head, EntityId tail, Fn&& fn) const {
        for (RelationId r : g_->observed_index().relations(head, tail)) fn(r);
        for (RelationId r : extra_index_.relations(head, tail)) fn(r);
    }

  private:
    const KnowledgeGraph* g_;
    TripletSet extra_;
    AdjacencyIndex extra_index_;
};

// All symmetric/transitive instances with empirical precision ≥ beta and all
// block/conflict instances whose denied set never intersects the observed
// set, each with support ≥ min_support. Weights start at 0. Output is
// canonically sorted, independent of input order.
std::vector<RuleInstance> mine_rules(const KnowledgeGraph& g, double beta,
                                     std::uint64_t min_support);

// N(l, tau, T ∪ extra_true): the number of true groundings whose head is tau.
// Throws DomainError if tau's relation does not match the rule head.
std::uint64_t count_groundings(const GroundingView& view, const RuleInstance& rule,
                               const Triplet& tau);
std::uint64_t count_groundings(const KnowledgeGraph& g, const RuleInstance& rule,
                               const Triplet& tau, const TripletSet& extra_true);

// f(tau, T) = Σ_l I_l · w_l · N(l, tau, ·) over rules applicable to tau.
double rule_score(std::span<const RuleInstance> rules, const Triplet& tau,
                  const KnowledgeGraph& g, const TripletSet& extra_true);

// P_rule(tau) = 1 / (e^{-f} + 1).
double rule_probability(std::span<const RuleInstance> rules, const Triplet& tau,
                        const KnowledgeGraph& g, const TripletSet& extra_true);

// Triplets sharing a grounding with tau under any rule (head or body
// position), present in observed ∪ candidates.
MarkovBlanket markov_blanket(std::span<const RuleInstance> rules, const Triplet& tau,
                             const KnowledgeGraph& g);

using BlanketTruth = std::unordered_map<Triplet, int, TripletHash>;

// P_rule(V_tau = 1 | V_MB) with body-atom truth taken from blanket_truth.
// Every blanket member must be assigned; a missing entry is a contract error.
double conditional_rule_probability(std::span<const RuleInstance> rules, const Triplet& tau,
                                    const BlanketTruth& blanket_truth,
                                    const KnowledgeGraph& g);

// Sparse per-triplet grounding counts for the EM loop: rules are bucketed by
// head relation once, then each triplet is matched with a single pass over
// the out-edges of its head.
class RuleMatcher {
  public:
    RuleMatcher(std::span<const RuleInstance> rules, std::size_t relation_count);

    // (rule index, grounding count), ascending rule index, counts > 0 only.
    std::vector<std::pair<std::uint32_t, std::uint32_t>> features(const GroundingView& view,
                                                                  const Triplet& tau) const;

    std::span<const std::uint32_t> rules_for(RelationId head_relation) const;

  private:
    std::span<const RuleInstance> rules_;
    std::vector<std::vector<std::uint32_t>> by_head_relation_;
};

// Rules file: `kind<TAB>relations,comma,separated<TAB>polarity<TAB>weight
// <TAB>precision<TAB>support` per line.
void save_rules(std::span<const RuleInstance> rules, const KnowledgeGraph& g,
                const std::filesystem::path& path);
std::vector<RuleInstance> load_rules(const std::filesystem::path& path,
                                     const KnowledgeGraph& g);

}  // namespace kgr
