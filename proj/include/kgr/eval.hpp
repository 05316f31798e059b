#pragma once

// Poisoned-triplet generation and the two evaluation protocols:
// classification of poisons vs held-out true triplets, and filtered ranking
// for missing-triplet prediction.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "kgr/kg.hpp"

namespace kgr {

struct EvalSplit {
    std::vector<Triplet> positives;  // held-out true
    std::vector<Triplet> negatives;  // generated false
    std::string name;
};

struct EvalCounts {
    std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
};

struct EvalReport {
    std::string task;  // "ptd" or "mtp"
    double precision = 0.0;
    double recall = 0.0;
    double f_score = 0.0;
    double mr = 0.0;
    double mrr = 0.0;
    std::map<int, double> hits_at;
    EvalCounts counts;
    double threshold = 0.0;
    std::uint64_t query_count = 0;

    nlohmann::json to_json() const;
};

using Scorer = std::function<double(const Triplet&)>;

// n unique triplets drawn uniformly from the graph vocabularies, rejected
// against everything already in the graph. Deterministic under seed; throws
// ComputeError after 100·n failed attempts.
std::vector<Triplet> generate_poisons(const KnowledgeGraph& g, std::size_t n,
                                      std::uint64_t seed);

// Classification with positive class "true triplet": predicted true when
// score >= threshold.
EvalReport evaluate_ptd(const EvalSplit& split, const Scorer& scorer, double threshold);

// Filtered ranking: for every test triplet both the head- and tail-masked
// queries are scored over all entities; corruptions present in observed ∪
// test are removed (except the target); rank is mean-of-ties,
// 1 + #strictly-better + #equal / 2.
EvalReport evaluate_mtp(const KnowledgeGraph& g, std::span<const Triplet> test,
                        const Scorer& scorer, std::span<const int> hits_ks = {},
                        int threads = 1);

// Writes k sampled poisons as `head<TAB>relation<TAB>tail` strings for a
// manual audit pass.
void label_audit_sample(std::span<const Triplet> poisons, const KnowledgeGraph& g,
                        std::size_t k, std::uint64_t seed,
                        const std::filesystem::path& out_path);

}  // namespace kgr
