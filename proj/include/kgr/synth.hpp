#pragma once

// Deterministic synthetic knowledge graph with planted rule structure. True
// triplets respect every planted negating constraint; injected noise violates
// them at configured rates, which gives the acceptance harness exact labels.

#include <cstdint>
#include <filesystem>
#include <unordered_map>
#include <vector>

#include "kgr/kg.hpp"
#include "kgr/rules.hpp"

namespace kgr {

struct PlantedRule {
    RulePattern pattern;
    // supporting: probability a generated body instantiation is closed under
    // the rule. negating: fraction of noise triplets generated as violations.
    double rate = 1.0;
};

struct SynthSpec {
    std::size_t entity_count = 0;
    std::size_t relation_count = 0;
    std::vector<PlantedRule> planted;
    double base_density = 1.0;  // true edges per entity per relation
    double noise_rate = 0.0;    // fraction of emitted triplets that are noise
    std::uint64_t seed = 0;
};

struct SynthOutput {
    KnowledgeGraph graph;  // observed = training truth, candidates = holdout ∪ noise
    std::unordered_map<Triplet, int, TripletHash> ground_truth;
    std::vector<RuleInstance> planted;
};

// Throws ValidationError naming the violated constraint when the spec is
// infeasible. As many true triplets are held out into the candidate set as
// noise triplets are injected, so the candidate set is label-balanced.
SynthOutput generate(const SynthSpec& spec);

// 1,000 entities, 20 relations, ~20k edges, two planted rules per pattern
// kind, 10% noise, fixed seed.
SynthSpec default_acceptance_spec();

// `head<TAB>relation<TAB>tail<TAB>label` for every generated triplet.
void save_labels(const SynthOutput& out, const std::filesystem::path& path);

}  // namespace kgr
