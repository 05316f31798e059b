#pragma once

// Variational EM loop: the E-step distills rule inferences into embedding
// training labels, the M-step learns rule weights against embedding targets,
// and the final scorer combines the two posteriors.

#include <cstdint>
#include <span>
#include <vector>

#include "kgr/embedding.hpp"
#include "kgr/kg.hpp"
#include "kgr/rules.hpp"

namespace kgr {

struct WeightLearnConfig {
    double learning_rate = 1e-3;
    int epochs = 200;
};

struct EmConfig {
    ScoreKind score_kind = ScoreKind::transe;
    int dim = 30;
    double gamma = 1.0;
    double delta = 0.5;   // distillation threshold, >= is distilled true
    int rounds = 3;
    double mix_lambda = 1.0;
    TrainConfig train;        // warm start on observed triplets
    int retrain_epochs = 15;  // per-E-step continuation epochs
    WeightLearnConfig weights;
};

struct RoundStats {
    int round = 0;
    std::size_t distilled_true = 0;
    std::size_t distilled_false = 0;
    double pseudo_likelihood = 0.0;      // M-step objective after the update
    double mean_q = 0.0;
    double mean_abs_q_minus_cond = 0.0;  // diagnostic surrogate for the KL gap
};

// Mean-field posterior over the candidate set, parallel to g.candidates().
struct RefinementState {
    std::vector<double> q;            // Q(V_tau = 1) per candidate
    std::vector<double> conditional;  // last E-step P_rule(V_tau = 1 | V_MB)
    TripletSet distilled_true;
    TripletSet distilled_false;
    int round = 0;
    std::vector<RoundStats> history;
};

// Frozen M-step problem: per-sample targets and sparse grounding counts.
// The objective is Σ t·log σ(f) + (1-t)·log(1-σ(f)) with f linear in the
// rule weights, so gradient ascent on it is exact and cheap to re-evaluate.
struct PseudoLikelihoodProblem {
    std::vector<double> targets;
    std::vector<std::size_t> offsets;  // targets.size() + 1 entries
    std::vector<std::uint32_t> rule_index;
    std::vector<std::uint32_t> count;

    double objective(std::span<const RuleInstance> rules) const;
    std::vector<double> gradient(std::span<const RuleInstance> rules) const;
};

PseudoLikelihoodProblem build_mstep_problem(const KnowledgeGraph& g,
                                            std::span<const RuleInstance> rules,
                                            const RefinementState& state, int threads = 1);

// Distills every candidate through its conditional rule probability
// (unverified blanket candidates stand in as true when the embedding scores
// them above 0.5), retrains the embedding on the distilled labels, and
// refreshes q from the retrained model. No-op with a warning when M is empty.
void e_step(RefinementState& state, EmbeddingModel& model,
            std::span<const RuleInstance> rules, const KnowledgeGraph& g, const EmConfig& cfg,
            int threads = 1);

struct MStepResult {
    double objective_before = 0.0;
    double objective_after = 0.0;
};

// Gradient ascent on the pseudo-likelihood: targets are 1 for observed
// triplets and q(tau) for candidates; E-step distillations fill candidate
// blanket slots. Throws ComputeError when any |w| exceeds 1e3.
MStepResult m_step(RefinementState& state, const EmbeddingModel& model,
                   std::vector<RuleInstance>& rules, const KnowledgeGraph& g,
                   const EmConfig& cfg, int threads = 1);

struct RefinementResult {
    RefinementState state;
    EmbeddingModel model;
    std::vector<RuleInstance> rules;
};

// Warm-starts the embedding on observed triplets, then alternates E and M
// steps for cfg.rounds rounds. rounds = 0 is the embedding-only baseline.
RefinementResult run_refinement(const KnowledgeGraph& g, std::vector<RuleInstance> rules,
                                const EmConfig& cfg, int threads = 1);

enum class ScoreMode { q_only, q_plus_lambda_p };

const char* score_mode_name(ScoreMode m);
ScoreMode score_mode_from_name(std::string_view name);

// q_only: score(model, tau). q_plus_lambda_p: score + lambda * P_rule(tau)
// with distilled-true candidates counted as true groundings.
double final_score(const RefinementState& state, const EmbeddingModel& model,
                   std::span<const RuleInstance> rules, const KnowledgeGraph& g,
                   const Triplet& tau, ScoreMode mode, double mix_lambda);
// Same, against a prebuilt view/matcher for batch scoring.
double final_score(const EmbeddingModel& model, std::span<const RuleInstance> rules,
                   const RuleMatcher& matcher, const GroundingView& view, const Triplet& tau,
                   ScoreMode mode, double mix_lambda);

// Midpoint of the score range: 0.5 for q_only, (1 + lambda) / 2 otherwise.
double classification_threshold(ScoreMode mode, double mix_lambda);

}  // namespace kgr
