#include "kgr/eval.hpp"

#include <algorithm>
#include <fstream>

#include "kgr/parallel.hpp"
#include "kgr/rng.hpp"

namespace kgr {

nlohmann::json EvalReport::to_json() const {
    nlohmann::json j;
    j["task"] = task;
    if (task == "ptd") {
        j["metrics"] = {{"precision", precision}, {"recall", recall}, {"f_score", f_score}};
        j["counts"] = {{"tp", counts.tp}, {"fp", counts.fp}, {"tn", counts.tn},
                       {"fn", counts.fn}};
        j["threshold"] = threshold;
    } else {
        nlohmann::json hits = nlohmann::json::object();
        for (const auto& [k, v] : hits_at) hits["hits_at_" + std::to_string(k)] = v;
        j["metrics"] = {{"mr", mr}, {"mrr", mrr}, {"hits", hits}};
        j["tie_convention"] = "mean-of-ties";
    }
    j["query_count"] = query_count;
    return j;
}

std::vector<Triplet> generate_poisons(const KnowledgeGraph& g, std::size_t n,
                                      std::uint64_t seed) {
    if (n < 1) throw ValidationError("poison count must be >= 1");
    Rng rng(seed);
    std::vector<Triplet> out;
    out.reserve(n);
    TripletSet seen;
    std::uint64_t attempts = 0;
    const std::uint64_t max_attempts = 100 * static_cast<std::uint64_t>(n);
    while (out.size() < n) {
        if (++attempts > max_attempts) {
            throw ComputeError("poison generation exhausted after " +
                               std::to_string(max_attempts) + " attempts");
        }
        const Triplet t{static_cast<EntityId>(uniform_below(rng, g.entity_count())),
                        static_cast<RelationId>(uniform_below(rng, g.relation_count())),
                        static_cast<EntityId>(uniform_below(rng, g.entity_count()))};
        if (g.contains(t, Scope::either)) continue;
        if (!seen.insert(t).second) continue;
        out.push_back(t);
    }
    return out;
}

EvalReport evaluate_ptd(const EvalSplit& split, const Scorer& scorer, double threshold) {
    if (split.positives.empty() && split.negatives.empty()) {
        throw ValidationError("evaluation split is empty");
    }
    EvalReport report;
    report.task = "ptd";
    report.threshold = threshold;
    for (const Triplet& t : split.positives) {
        if (scorer(t) >= threshold) {
            ++report.counts.tp;
        } else {
            ++report.counts.fn;
        }
    }
    for (const Triplet& t : split.negatives) {
        if (scorer(t) >= threshold) {
            ++report.counts.fp;
        } else {
            ++report.counts.tn;
        }
    }
    const double tp = static_cast<double>(report.counts.tp);
    const double fp = static_cast<double>(report.counts.fp);
    const double fn = static_cast<double>(report.counts.fn);
    report.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    report.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    report.f_score = report.precision + report.recall > 0
                         ? 2.0 * report.precision * report.recall /
                               (report.precision + report.recall)
                         : 0.0;
    report.query_count = split.positives.size() + split.negatives.size();
    return report;
}

EvalReport evaluate_mtp(const KnowledgeGraph& g, std::span<const Triplet> test,
                        const Scorer& scorer, std::span<const int> hits_ks, int threads) {
    if (test.empty()) throw ValidationError("test set is empty");
    for (const Triplet& t : test) g.check_ids(t);

    static constexpr int kDefaultKs[] = {1, 3, 10};
    std::vector<int> ks(hits_ks.begin(), hits_ks.end());
    if (ks.empty()) ks.assign(std::begin(kDefaultKs), std::end(kDefaultKs));
    std::sort(ks.begin(), ks.end());

    TripletSet known;
    known.reserve(g.observed().size() + test.size());
    for (const Triplet& t : g.observed()) known.insert(t);
    for (const Triplet& t : test) known.insert(t);

    const std::size_t query_count = 2 * test.size();
    std::vector<double> ranks(query_count, 0.0);

    parallel_for(test.size(), threads, [&](std::size_t i) {
        const Triplet& target = test[i];
        // tail-masked query, then head-masked query
        for (int dir = 0; dir < 2; ++dir) {
            const double target_score = scorer(target);
            std::uint64_t better = 0;
            std::uint64_t equal = 0;
            for (EntityId e = 0; e < g.entity_count(); ++e) {
                Triplet c = target;
                if (dir == 0) {
                    c.tail = e;
                } else {
                    c.head = e;
                }
                if (c == target) continue;
                if (known.contains(c)) continue;  // filtered setting
                const double s = scorer(c);
                if (s > target_score) {
                    ++better;
                } else if (s == target_score) {
                    ++equal;
                }
            }
            ranks[2 * i + dir] =
                1.0 + static_cast<double>(better) + static_cast<double>(equal) / 2.0;
        }
    });

    EvalReport report;
    report.task = "mtp";
    report.query_count = query_count;
    double sum_rank = 0.0;
    double sum_inv = 0.0;
    std::map<int, double> hit_counts;
    for (int k : ks) hit_counts[k] = 0.0;
    for (double rank : ranks) {
        sum_rank += rank;
        sum_inv += 1.0 / rank;
        for (int k : ks) {
            if (rank <= static_cast<double>(k)) hit_counts[k] += 1.0;
        }
    }
    const double denom = static_cast<double>(query_count);
    report.mr = sum_rank / denom;
    report.mrr = sum_inv / denom;
    for (int k : ks) report.hits_at[k] = hit_counts[k] / denom;
    return report;
}

void label_audit_sample(std::span<const Triplet> poisons, const KnowledgeGraph& g,
                        std::size_t k, std::uint64_t seed,
                        const std::filesystem::path& out_path) {
    if (k > poisons.size()) throw ValidationError("audit sample larger than poison set");
    std::vector<std::size_t> order(poisons.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    shuffle_inplace(rng, order);
    order.resize(k);
    std::sort(order.begin(), order.end());

    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw ComputeError("cannot write audit file: " + out_path.string());
    for (std::size_t idx : order) out << g.format(poisons[idx]) << '\n';
}

}  // namespace kgr
