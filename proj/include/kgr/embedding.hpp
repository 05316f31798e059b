#pragma once

// Entity/relation embeddings with pluggable score functions and SGD training
// on the Bernoulli likelihood of triplet truth values.
//
//   transe    σ(γ - ‖x_h + x_r - x_t‖₂)
//   distmult  σ(Σ_k h_k r_k t_k)
//   complex   σ(Re⟨x_h, x_r, conj(x_t)⟩), d complex coords stored as 2d reals

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "kgr/kg.hpp"

namespace kgr {

enum class ScoreKind : std::uint8_t { transe, distmult, complex };

const char* score_kind_name(ScoreKind k);
ScoreKind score_kind_from_name(std::string_view name);

struct TrainConfig {
    double learning_rate = 0.1;
    int epochs = 60;
    // 0 disables corruption sampling. Ratios above 1 drag the calibrated
    // probability of true triplets well under 0.5 on desk-scale graphs.
    int negatives_per_positive = 1;
    int batch_size = 128;
    std::uint64_t seed = 0;
};

class EmbeddingModel {
  public:
    EmbeddingModel() = default;

    // Uniform init in [-6/√d, +6/√d], reproducible from the seed.
    static EmbeddingModel init(const KnowledgeGraph& g, ScoreKind kind, int dim, double gamma,
                               std::uint64_t seed);

    ScoreKind kind() const { return kind_; }
    int dim() const { return dim_; }
    double gamma() const { return gamma_; }
    std::size_t entity_count() const { return entity_count_; }
    std::size_t relation_count() const { return relation_count_; }
    // d reals per row, or 2d for complex (real parts then imaginary parts).
    int row_width() const;

    std::span<const double> entity_vector(EntityId e) const;
    std::span<const double> relation_vector(RelationId r) const;
    std::span<double> entity_vector(EntityId e);
    std::span<double> relation_vector(RelationId r);

    // Pre-sigmoid score z.
    double raw_score(const Triplet& t) const;
    // Probability the triplet is true: σ(z) in (0,1).
    double score(const Triplet& t) const;
    // Ber(truth | score): score if truth = 1, else 1 - score.
    double probability(const Triplet& t, int truth) const;

    bool all_finite() const;

    void save(const std::filesystem::path& path, const KnowledgeGraph& g) const;
    // Loads and checks the stored id maps against the graph's.
    static EmbeddingModel load(const std::filesystem::path& path, const KnowledgeGraph& g);

  private:
    ScoreKind kind_ = ScoreKind::transe;
    int dim_ = 0;
    double gamma_ = 1.0;
    std::size_t entity_count_ = 0;
    std::size_t relation_count_ = 0;
    std::vector<double> entity_data_;
    std::vector<double> relation_data_;
};

// -log Ber(truth | score(t)).
double nll(const EmbeddingModel& m, const Triplet& t, int truth);

// Adds scale * ∂nll/∂params into the dense gradient buffers (same layout as
// the model matrices). Returns ∂nll/∂z for divergence checks.
double add_nll_gradient(const EmbeddingModel& m, const Triplet& t, int truth, double scale,
                        std::span<double> grad_entities, std::span<double> grad_relations);

// k corruptions of tau with head or tail replaced uniformly, rejecting
// anything observed or in `also_reject`. Throws ComputeError after 100k
// failed attempts.
std::vector<Triplet> sample_negatives(const KnowledgeGraph& g, const Triplet& tau, int k,
                                      std::uint64_t seed, const TripletSet* also_reject = nullptr);

// Mini-batch SGD on -Σ log Ber: positives as truth 1, explicit negatives and
// per-epoch sampled corruptions as truth 0. Deterministic under cfg.seed.
// Throws ComputeError on a non-finite gradient, naming triplet and epoch.
void train(EmbeddingModel& model, const KnowledgeGraph& g, std::span<const Triplet> positives,
           std::span<const Triplet> explicit_negatives, const TrainConfig& cfg);

// Total loss of the fixed part of the objective (no sampled corruptions).
double dataset_nll(const EmbeddingModel& m, std::span<const Triplet> positives,
                   std::span<const Triplet> explicit_negatives);

}  // namespace kgr
