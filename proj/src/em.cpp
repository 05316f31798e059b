#include "kgr/em.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "kgr/parallel.hpp"
#include "kgr/rng.hpp"

namespace kgr {

namespace {

void validate(const EmConfig& cfg) {
    if (cfg.delta <= 0.0 || cfg.delta >= 1.0) throw ValidationError("delta must be in (0,1)");
    if (cfg.rounds < 0) throw ValidationError("rounds must be >= 0");
    if (cfg.mix_lambda < 0.0) throw ValidationError("mix_lambda must be >= 0");
    if (cfg.retrain_epochs < 1) throw ValidationError("retrain_epochs must be positive");
    if (cfg.weights.learning_rate <= 0.0) {
        throw ValidationError("weight learning_rate must be positive");
    }
    if (cfg.weights.epochs < 1) throw ValidationError("weight epochs must be positive");
}

double log_sigmoid(double f) { return std::log(stable_sigmoid(f)); }

}  // namespace

double PseudoLikelihoodProblem::objective(std::span<const RuleInstance> rules) const {
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < offsets.size(); ++i) {
        double f = 0.0;
        for (std::size_t k = offsets[i]; k < offsets[i + 1]; ++k) {
            const RuleInstance& rule = rules[rule_index[k]];
            f += rule.polarity() * rule.weight * static_cast<double>(count[k]);
        }
        const double t = targets[i];
        total += t * log_sigmoid(f) + (1.0 - t) * log_sigmoid(-f);
    }
    return total;
}

std::vector<double> PseudoLikelihoodProblem::gradient(std::span<const RuleInstance> rules) const {
    std::vector<double> grad(rules.size(), 0.0);
    for (std::size_t i = 0; i + 1 < offsets.size(); ++i) {
        double f = 0.0;
        for (std::size_t k = offsets[i]; k < offsets[i + 1]; ++k) {
            const RuleInstance& rule = rules[rule_index[k]];
            f += rule.polarity() * rule.weight * static_cast<double>(count[k]);
        }
        const double residual = targets[i] - stable_sigmoid(f);
        for (std::size_t k = offsets[i]; k < offsets[i + 1]; ++k) {
            const RuleInstance& rule = rules[rule_index[k]];
            grad[rule_index[k]] += residual * rule.polarity() * static_cast<double>(count[k]);
        }
    }
    return grad;
}

PseudoLikelihoodProblem build_mstep_problem(const KnowledgeGraph& g,
                                            std::span<const RuleInstance> rules,
                                            const RefinementState& state, int threads) {
    const GroundingView view(g, state.distilled_true);
    const RuleMatcher matcher(rules, g.relation_count());

    const auto& observed = g.observed();
    const auto& candidates = g.candidates();
    const std::size_t total = observed.size() + candidates.size();

    using Feats = std::vector<std::pair<std::uint32_t, std::uint32_t>>;
    std::vector<Feats> feats(total);
    parallel_for(total, threads, [&](std::size_t i) {
        const Triplet& tau = i < observed.size() ? observed[i] : candidates[i - observed.size()];
        feats[i] = matcher.features(view, tau);
    });

    PseudoLikelihoodProblem problem;
    problem.offsets.push_back(0);
    for (std::size_t i = 0; i < total; ++i) {
        if (feats[i].empty()) continue;  // no gradient contribution
        const double target = i < observed.size() ? 1.0 : state.q[i - observed.size()];
        problem.targets.push_back(target);
        for (const auto& [rule_idx, n] : feats[i]) {
            problem.rule_index.push_back(rule_idx);
            problem.count.push_back(n);
        }
        problem.offsets.push_back(problem.rule_index.size());
    }
    return problem;
}

void e_step(RefinementState& state, EmbeddingModel& model,
            std::span<const RuleInstance> rules, const KnowledgeGraph& g, const EmConfig& cfg,
            int threads) {
    validate(cfg);
    const auto& candidates = g.candidates();
    if (candidates.empty()) {
        std::cerr << "warning: e-step skipped, candidate set is empty\n";
        return;
    }
    if (state.q.size() != candidates.size()) {
        throw DomainError("refinement state does not match candidate set");
    }

    // Unverified blanket candidates stand in as true when the current
    // embedding predicts them true.
    TripletSet predicted_true;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (model.score(candidates[i]) > 0.5) predicted_true.insert(candidates[i]);
    }

    const GroundingView view(g, predicted_true);
    const RuleMatcher matcher(rules, g.relation_count());
    state.conditional.assign(candidates.size(), 0.5);
    parallel_for(candidates.size(), threads, [&](std::size_t i) {
        double f = 0.0;
        for (const auto& [rule_idx, n] : matcher.features(view, candidates[i])) {
            const RuleInstance& rule = rules[rule_idx];
            f += rule.polarity() * rule.weight * static_cast<double>(n);
        }
        state.conditional[i] = stable_sigmoid(f);
    });

    state.distilled_true.clear();
    state.distilled_false.clear();
    std::vector<Triplet> positives(g.observed().begin(), g.observed().end());
    std::vector<Triplet> negatives;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (state.conditional[i] >= cfg.delta) {
            state.distilled_true.insert(candidates[i]);
            positives.push_back(candidates[i]);
        } else {
            state.distilled_false.insert(candidates[i]);
            negatives.push_back(candidates[i]);
        }
    }

    TrainConfig retrain = cfg.train;
    retrain.epochs = cfg.retrain_epochs;
    retrain.seed = derive_seed(cfg.train.seed, 0x1000 + static_cast<std::uint64_t>(state.round));
    train(model, g, positives, negatives, retrain);

    parallel_for(candidates.size(), threads,
                 [&](std::size_t i) { state.q[i] = model.score(candidates[i]); });
    state.round += 1;
}

MStepResult m_step(RefinementState& state, const EmbeddingModel& model,
                   std::vector<RuleInstance>& rules, const KnowledgeGraph& g,
                   const EmConfig& cfg, int threads) {
    (void)model;
    validate(cfg);
    if (state.q.size() != g.candidates().size()) {
        throw DomainError("refinement state does not match candidate set");
    }

    const PseudoLikelihoodProblem problem = build_mstep_problem(g, rules, state, threads);

    MStepResult result;
    result.objective_before = problem.objective(rules);
    for (int epoch = 0; epoch < cfg.weights.epochs; ++epoch) {
        const std::vector<double> grad = problem.gradient(rules);
        for (std::size_t l = 0; l < rules.size(); ++l) {
            rules[l].weight += cfg.weights.learning_rate * grad[l];
            if (!std::isfinite(rules[l].weight) || std::abs(rules[l].weight) > 1e3) {
                throw ComputeError(std::string("rule weight diverged: ") +
                                   rule_kind_name(rules[l].pattern.kind) + " rule over relation " +
                                   g.relations().name(rules[l].pattern.head_relation()) +
                                   " at epoch " + std::to_string(epoch));
            }
        }
    }
    result.objective_after = problem.objective(rules);
    return result;
}

RefinementResult run_refinement(const KnowledgeGraph& g, std::vector<RuleInstance> rules,
                                const EmConfig& cfg, int threads) {
    validate(cfg);

    RefinementResult out;
    out.model = EmbeddingModel::init(g, cfg.score_kind, cfg.dim, cfg.gamma,
                                     derive_seed(cfg.train.seed, 0xe0));
    train(out.model, g, g.observed(), {}, cfg.train);

    const auto& candidates = g.candidates();
    out.state.q.resize(candidates.size());
    out.state.conditional.assign(candidates.size(), 0.5);
    parallel_for(candidates.size(), threads,
                 [&](std::size_t i) { out.state.q[i] = out.model.score(candidates[i]); });

    // Weight learning runs first in each round: the warm-start posterior is
    // an informative target, while an E-step under all-zero weights would
    // distill every candidate as true and train the embedding toward it
    // before the rules ever see an honest signal.
    for (int round = 0; round < cfg.rounds; ++round) {
        const MStepResult m = m_step(out.state, out.model, rules, g, cfg, threads);
        e_step(out.state, out.model, rules, g, cfg, threads);

        RoundStats stats;
        stats.round = round + 1;
        stats.distilled_true = out.state.distilled_true.size();
        stats.distilled_false = out.state.distilled_false.size();
        stats.pseudo_likelihood = m.objective_after;
        double sum_q = 0.0;
        double sum_gap = 0.0;
        for (std::size_t i = 0; i < out.state.q.size(); ++i) {
            sum_q += out.state.q[i];
            sum_gap += std::abs(out.state.q[i] - out.state.conditional[i]);
        }
        const double denom = out.state.q.empty() ? 1.0 : static_cast<double>(out.state.q.size());
        stats.mean_q = sum_q / denom;
        stats.mean_abs_q_minus_cond = sum_gap / denom;
        out.state.history.push_back(stats);
    }

    out.rules = std::move(rules);
    return out;
}

const char* score_mode_name(ScoreMode m) {
    return m == ScoreMode::q_only ? "biogrer" : "biogrer-star";
}

ScoreMode score_mode_from_name(std::string_view name) {
    if (name == "biogrer" || name == "q-only") return ScoreMode::q_only;
    if (name == "biogrer-star" || name == "q-plus-lambda-p") return ScoreMode::q_plus_lambda_p;
    throw ParseError("unknown score mode '" + std::string(name) + "'");
}

double final_score(const EmbeddingModel& model, std::span<const RuleInstance> rules,
                   const RuleMatcher& matcher, const GroundingView& view, const Triplet& tau,
                   ScoreMode mode, double mix_lambda) {
    const double q = model.score(tau);
    if (mode == ScoreMode::q_only) return q;
    double f = 0.0;
    for (const auto& [rule_idx, n] : matcher.features(view, tau)) {
        const RuleInstance& rule = rules[rule_idx];
        f += rule.polarity() * rule.weight * static_cast<double>(n);
    }
    return q + mix_lambda * stable_sigmoid(f);
}

double final_score(const RefinementState& state, const EmbeddingModel& model,
                   std::span<const RuleInstance> rules, const KnowledgeGraph& g,
                   const Triplet& tau, ScoreMode mode, double mix_lambda) {
    if (mode == ScoreMode::q_only) return model.score(tau);
    return model.score(tau) +
           mix_lambda * rule_probability(rules, tau, g, state.distilled_true);
}

double classification_threshold(ScoreMode mode, double mix_lambda) {
    return mode == ScoreMode::q_only ? 0.5 : (1.0 + mix_lambda) / 2.0;
}

}  // namespace kgr
