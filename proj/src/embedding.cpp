#include "kgr/embedding.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "kgr/rng.hpp"
#include "kgr/rules.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace kgr {

const char* score_kind_name(ScoreKind k) {
    switch (k) {
        case ScoreKind::transe: return "transe";
        case ScoreKind::distmult: return "distmult";
        case ScoreKind::complex: return "complex";
    }
    return "?";
}

ScoreKind score_kind_from_name(std::string_view name) {
    if (name == "transe") return ScoreKind::transe;
    if (name == "distmult") return ScoreKind::distmult;
    if (name == "complex") return ScoreKind::complex;
    throw ParseError("unknown score kind '" + std::string(name) + "'");
}

int EmbeddingModel::row_width() const { return kind_ == ScoreKind::complex ? 2 * dim_ : dim_; }

EmbeddingModel EmbeddingModel::init(const KnowledgeGraph& g, ScoreKind kind, int dim,
                                    double gamma, std::uint64_t seed) {
    if (dim < 1) throw ValidationError("embedding dim must be >= 1");
    EmbeddingModel m;
    m.kind_ = kind;
    m.dim_ = dim;
    m.gamma_ = gamma;
    m.entity_count_ = g.entity_count();
    m.relation_count_ = g.relation_count();
    const std::size_t width = static_cast<std::size_t>(m.row_width());
    m.entity_data_.resize(m.entity_count_ * width);
    m.relation_data_.resize(m.relation_count_ * width);

    const double bound = 6.0 / std::sqrt(static_cast<double>(dim));
    Rng rng(seed);
    for (double& v : m.entity_data_) v = uniform_real(rng, -bound, bound);
    for (double& v : m.relation_data_) v = uniform_real(rng, -bound, bound);
    return m;
}

std::span<const double> EmbeddingModel::entity_vector(EntityId e) const {
    const std::size_t width = static_cast<std::size_t>(row_width());
    return {entity_data_.data() + e * width, width};
}

std::span<const double> EmbeddingModel::relation_vector(RelationId r) const {
    const std::size_t width = static_cast<std::size_t>(row_width());
    return {relation_data_.data() + r * width, width};
}

std::span<double> EmbeddingModel::entity_vector(EntityId e) {
    const std::size_t width = static_cast<std::size_t>(row_width());
    return {entity_data_.data() + e * width, width};
}

std::span<double> EmbeddingModel::relation_vector(RelationId r) {
    const std::size_t width = static_cast<std::size_t>(row_width());
    return {relation_data_.data() + r * width, width};
}

double EmbeddingModel::raw_score(const Triplet& t) const {
    const auto h = entity_vector(t.head);
    const auto r = relation_vector(t.relation);
    const auto tl = entity_vector(t.tail);
    const int d = dim_;

    switch (kind_) {
        case ScoreKind::transe: {
            double sq = 0.0;
            for (int k = 0; k < d; ++k) {
                const double v = h[k] + r[k] - tl[k];
                sq += v * v;
            }
            return gamma_ - std::sqrt(sq);
        }
        case ScoreKind::distmult: {
            double z = 0.0;
            for (int k = 0; k < d; ++k) z += h[k] * r[k] * tl[k];
            return z;
        }
        case ScoreKind::complex: {
            double z = 0.0;
            for (int k = 0; k < d; ++k) {
                const double a = h[k], b = h[d + k];
                const double c = r[k], e = r[d + k];
                const double f = tl[k], w = tl[d + k];
                // Re[(a+bi)(c+ei)(f-wi)]
                z += (a * c - b * e) * f + (a * e + b * c) * w;
            }
            return z;
        }
    }
    return 0.0;
}

double EmbeddingModel::score(const Triplet& t) const { return stable_sigmoid(raw_score(t)); }

double EmbeddingModel::probability(const Triplet& t, int truth) const {
    const double s = score(t);
    return truth != 0 ? s : 1.0 - s;
}

namespace {

// Unclamped but overflow-free forms for the training objective; keeping the
// loss in logit space leaves it finite and differentiable at any |z|.
double exact_sigmoid(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

bool EmbeddingModel::all_finite() const {
    auto ok = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    return ok(entity_data_) && ok(relation_data_);
}

double nll(const EmbeddingModel& m, const Triplet& t, int truth) {
    const double z = m.raw_score(t);
    return truth != 0 ? softplus(-z) : softplus(z);
}

double add_nll_gradient(const EmbeddingModel& m, const Triplet& t, int truth, double scale,
                        std::span<double> grad_entities, std::span<double> grad_relations) {
    const int d = m.dim();
    const std::size_t width = static_cast<std::size_t>(m.row_width());
    const auto h = m.entity_vector(t.head);
    const auto r = m.relation_vector(t.relation);
    const auto tl = m.entity_vector(t.tail);
    double* gh = grad_entities.data() + t.head * width;
    double* gr = grad_relations.data() + t.relation * width;
    double* gt = grad_entities.data() + t.tail * width;

    // d(-log Ber)/dz = σ(z) - truth for both truth values.
    const double dz = (exact_sigmoid(m.raw_score(t)) - (truth != 0 ? 1.0 : 0.0)) * scale;

    switch (m.kind()) {
        case ScoreKind::transe: {
            double sq = 0.0;
            for (int k = 0; k < d; ++k) {
                const double v = h[k] + r[k] - tl[k];
                sq += v * v;
            }
            const double norm = std::sqrt(sq);
            if (norm < 1e-12) break;  // gradient of the norm is undefined at 0
            const double c = -dz / norm;
            for (int k = 0; k < d; ++k) {
                const double v = h[k] + r[k] - tl[k];
                gh[k] += c * v;
                gr[k] += c * v;
                gt[k] -= c * v;
            }
            break;
        }
        case ScoreKind::distmult: {
            for (int k = 0; k < d; ++k) {
                gh[k] += dz * r[k] * tl[k];
                gr[k] += dz * h[k] * tl[k];
                gt[k] += dz * h[k] * r[k];
            }
            break;
        }
        case ScoreKind::complex: {
            for (int k = 0; k < d; ++k) {
                const double a = h[k], b = h[d + k];
                const double c = r[k], e = r[d + k];
                const double f = tl[k], w = tl[d + k];
                gh[k] += dz * (c * f + e * w);
                gh[d + k] += dz * (c * w - e * f);
                gr[k] += dz * (a * f + b * w);
                gr[d + k] += dz * (a * w - b * f);
                gt[k] += dz * (a * c - b * e);
                gt[d + k] += dz * (a * e + b * c);
            }
            break;
        }
    }
    return dz;
}

std::vector<Triplet> sample_negatives(const KnowledgeGraph& g, const Triplet& tau, int k,
                                      std::uint64_t seed, const TripletSet* also_reject) {
    if (k < 1) throw ValidationError("negative sample count must be >= 1");
    g.check_ids(tau);
    Rng rng(seed);
    std::vector<Triplet> out;
    out.reserve(static_cast<std::size_t>(k));
    std::uint64_t attempts = 0;
    const std::uint64_t max_attempts = 100000;
    while (out.size() < static_cast<std::size_t>(k)) {
        if (++attempts > max_attempts) {
            throw ComputeError("negative sampling exhausted after " +
                               std::to_string(max_attempts) + " attempts");
        }
        Triplet c = tau;
        const auto e = static_cast<EntityId>(uniform_below(rng, g.entity_count()));
        if (coin(rng)) {
            c.head = e;
        } else {
            c.tail = e;
        }
        if (c == tau) continue;
        if (g.contains(c, Scope::observed)) continue;
        if (also_reject && also_reject->contains(c)) continue;
        out.push_back(c);
    }
    return out;
}

namespace {

struct Example {
    Triplet triplet;
    std::int8_t truth;
    bool corruptible;  // positives spawn sampled corruptions
};

}  // namespace

void train(EmbeddingModel& model, const KnowledgeGraph& g, std::span<const Triplet> positives,
           std::span<const Triplet> explicit_negatives, const TrainConfig& cfg) {
    if (cfg.learning_rate <= 0.0) throw ValidationError("learning_rate must be positive");
    if (cfg.epochs < 1) throw ValidationError("epochs must be positive");
    if (cfg.batch_size < 1) throw ValidationError("batch_size must be positive");
    if (cfg.negatives_per_positive < 0) {
        throw ValidationError("negatives_per_positive must be >= 0");
    }

    TripletSet reject;
    reject.reserve(positives.size());
    for (const Triplet& t : positives) reject.insert(t);

    std::vector<Example> examples;
    examples.reserve(positives.size() + explicit_negatives.size());
    for (const Triplet& t : positives) examples.push_back({t, 1, true});
    for (const Triplet& t : explicit_negatives) examples.push_back({t, 0, false});
    if (examples.empty()) return;

    const std::size_t width = static_cast<std::size_t>(model.row_width());
    std::vector<double> grad_entities(model.entity_count() * width);
    std::vector<double> grad_relations(model.relation_count() * width);
    std::vector<Triplet> touched;  // rows with pending gradient
    std::vector<std::size_t> order(examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    Rng rng(derive_seed(cfg.seed, 0x7261696e));

    // Linear decay to a tenth of the initial rate; a constant step keeps the
    // rows jittering at a radius comparable to the margin and never settles.
    double step = cfg.learning_rate;

    auto apply_batch = [&](int epoch) {
        for (const Triplet& t : touched) {
            double* gh = grad_entities.data() + t.head * width;
            double* gr = grad_relations.data() + t.relation * width;
            double* gt = grad_entities.data() + t.tail * width;
            auto h = model.entity_vector(t.head);
            auto r = model.relation_vector(t.relation);
            auto tl = model.entity_vector(t.tail);
            for (std::size_t k = 0; k < width; ++k) {
                if (!std::isfinite(gh[k]) || !std::isfinite(gr[k]) || !std::isfinite(gt[k])) {
                    throw ComputeError("non-finite gradient at epoch " + std::to_string(epoch) +
                                       " for triplet " + g.format(t, ' '));
                }
                h[k] -= step * gh[k];
                r[k] -= step * gr[k];
                tl[k] -= step * gt[k];
                gh[k] = 0.0;
                gr[k] = 0.0;
                gt[k] = 0.0;
            }
        }
        touched.clear();
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.epochs > 1) {
            const double t = static_cast<double>(epoch) / static_cast<double>(cfg.epochs - 1);
            step = cfg.learning_rate * (1.0 - 0.9 * t);
        }
        shuffle_inplace(rng, order);
        int in_batch = 0;
        for (std::size_t pos = 0; pos < order.size(); ++pos) {
            const Example& ex = examples[order[pos]];
            add_nll_gradient(model, ex.triplet, ex.truth, 1.0, grad_entities, grad_relations);
            touched.push_back(ex.triplet);
            if (ex.corruptible) {
                for (int k = 0; k < cfg.negatives_per_positive; ++k) {
                    Triplet c = ex.triplet;
                    std::uint64_t attempts = 0;
                    while (true) {
                        if (++attempts > 100000) {
                            throw ComputeError("corruption sampling exhausted at epoch " +
                                               std::to_string(epoch));
                        }
                        c = ex.triplet;
                        const auto e = static_cast<EntityId>(uniform_below(rng, g.entity_count()));
                        if (coin(rng)) {
                            c.head = e;
                        } else {
                            c.tail = e;
                        }
                        if (c == ex.triplet) continue;
                        if (g.contains(c, Scope::observed)) continue;
                        if (reject.contains(c)) continue;
                        break;
                    }
                    add_nll_gradient(model, c, 0, 1.0, grad_entities, grad_relations);
                    touched.push_back(c);
                }
            }
            if (++in_batch == cfg.batch_size) {
                apply_batch(epoch);
                in_batch = 0;
            }
        }
        if (in_batch > 0) apply_batch(epoch);
    }
}

double dataset_nll(const EmbeddingModel& m, std::span<const Triplet> positives,
                   std::span<const Triplet> explicit_negatives) {
    double total = 0.0;
    for (const Triplet& t : positives) total += nll(m, t, 1);
    for (const Triplet& t : explicit_negatives) total += nll(m, t, 0);
    return total;
}

// ---------------------------------------------------------------------------
// Checkpoint
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'K', 'G', 'R', 'E', 'M', 'B', '0', '1'};

void write_u64(std::ofstream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_f64(std::ofstream& out, double v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_string(std::ofstream& out, const std::string& s) {
    write_u64(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint64_t read_u64(std::ifstream& in, const std::string& path) {
    std::uint64_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) {
        throw ParseError("truncated checkpoint: " + path);
    }
    return v;
}

double read_f64(std::ifstream& in, const std::string& path) {
    double v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) {
        throw ParseError("truncated checkpoint: " + path);
    }
    return v;
}

std::string read_string(std::ifstream& in, const std::string& path) {
    const auto n = read_u64(in, path);
    std::string s(n, '\0');
    if (!in.read(s.data(), static_cast<std::streamsize>(n))) {
        throw ParseError("truncated checkpoint: " + path);
    }
    return s;
}

}  // namespace

void EmbeddingModel::save(const std::filesystem::path& path, const KnowledgeGraph& g) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ComputeError("cannot write checkpoint: " + path.string());
    out.write(kMagic, sizeof(kMagic));
    write_u64(out, static_cast<std::uint64_t>(kind_));
    write_u64(out, static_cast<std::uint64_t>(dim_));
    write_f64(out, gamma_);
    write_u64(out, entity_count_);
    write_u64(out, relation_count_);
    out.write(reinterpret_cast<const char*>(entity_data_.data()),
              static_cast<std::streamsize>(entity_data_.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(relation_data_.data()),
              static_cast<std::streamsize>(relation_data_.size() * sizeof(double)));
    for (std::uint32_t e = 0; e < entity_count_; ++e) write_string(out, g.entities().name(e));
    for (std::uint32_t r = 0; r < relation_count_; ++r) write_string(out, g.relations().name(r));
    if (!out) throw ComputeError("write failed: " + path.string());
}

EmbeddingModel EmbeddingModel::load(const std::filesystem::path& path, const KnowledgeGraph& g) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open checkpoint: " + path.string());
    char magic[8];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw ParseError("bad checkpoint header: " + path.string());
    }
    EmbeddingModel m;
    m.kind_ = static_cast<ScoreKind>(read_u64(in, path.string()));
    m.dim_ = static_cast<int>(read_u64(in, path.string()));
    m.gamma_ = read_f64(in, path.string());
    m.entity_count_ = read_u64(in, path.string());
    m.relation_count_ = read_u64(in, path.string());
    if (m.dim_ < 1) throw ParseError("bad checkpoint dim: " + path.string());
    if (m.entity_count_ != g.entity_count() || m.relation_count_ != g.relation_count()) {
        throw ValidationError("checkpoint size does not match graph: " + path.string());
    }
    const std::size_t width = static_cast<std::size_t>(m.row_width());
    m.entity_data_.resize(m.entity_count_ * width);
    m.relation_data_.resize(m.relation_count_ * width);
    if (!in.read(reinterpret_cast<char*>(m.entity_data_.data()),
                 static_cast<std::streamsize>(m.entity_data_.size() * sizeof(double))) ||
        !in.read(reinterpret_cast<char*>(m.relation_data_.data()),
                 static_cast<std::streamsize>(m.relation_data_.size() * sizeof(double)))) {
        throw ParseError("truncated checkpoint: " + path.string());
    }
    for (std::uint32_t e = 0; e < m.entity_count_; ++e) {
        if (read_string(in, path.string()) != g.entities().name(e)) {
            throw ValidationError("checkpoint entity ids do not match graph: " + path.string());
        }
    }
    for (std::uint32_t r = 0; r < m.relation_count_; ++r) {
        if (read_string(in, path.string()) != g.relations().name(r)) {
            throw ValidationError("checkpoint relation ids do not match graph: " + path.string());
        }
    }
    return m;
}

}  // namespace kgr
