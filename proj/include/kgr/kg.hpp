#pragma once

// In-memory triple store with dense string-interned ids, an
// observed/candidate partition, and the adjacency indexes used by rule
// grounding, training and evaluation. Immutable after construction.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "kgr/errors.hpp"

namespace kgr {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

struct Triplet {
    EntityId head = 0;
    RelationId relation = 0;
    EntityId tail = 0;

    friend bool operator==(const Triplet&, const Triplet&) = default;
    friend auto operator<=>(const Triplet&, const Triplet&) = default;
};

struct TripletHash {
    std::size_t operator()(const Triplet& t) const noexcept {
        std::uint64_t x = (static_cast<std::uint64_t>(t.head) << 40) ^
                          (static_cast<std::uint64_t>(t.relation) << 20) ^
                          static_cast<std::uint64_t>(t.tail);
        x ^= x >> 33;
        x *= 0xff51afd7ed558ccdull;
        x ^= x >> 33;
        x *= 0xc4ceb9fe1a85ec53ull;
        x ^= x >> 33;
        return static_cast<std::size_t>(x);
    }
};

using TripletSet = std::unordered_set<Triplet, TripletHash>;

enum class Scope { observed, candidates, either };

// String interning with dense contiguous ids, first occurrence wins.
class Vocab {
  public:
    std::uint32_t intern(std::string_view name);
    std::optional<std::uint32_t> find(std::string_view name) const;
    const std::string& name(std::uint32_t id) const;
    std::size_t size() const { return names_.size(); }

  private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::uint32_t> ids_;
};

// Adjacency over one edge set. Neighbor lists are sorted ascending so every
// traversal order is reproducible.
class AdjacencyIndex {
  public:
    AdjacencyIndex() = default;
    static AdjacencyIndex build(std::span<const Triplet> edges);

    std::span<const EntityId> tails(EntityId head, RelationId rel) const;
    std::span<const EntityId> heads(EntityId tail, RelationId rel) const;
    std::span<const RelationId> relations(EntityId head, EntityId tail) const;
    // All (relation, tail) pairs leaving `head`, sorted.
    std::span<const std::pair<RelationId, EntityId>> out_edges(EntityId head) const;

  private:
    std::unordered_map<std::uint64_t, std::vector<EntityId>> out_;
    std::unordered_map<std::uint64_t, std::vector<EntityId>> in_;
    std::unordered_map<std::uint64_t, std::vector<RelationId>> pair_;
    std::unordered_map<EntityId, std::vector<std::pair<RelationId, EntityId>>> by_head_;
};

// The graph G = (E, R, T, M): observed triplets are assumed true, candidate
// triplets are the uncertain set whose truth the refinement estimates.
// A triplet present in both inputs is kept in observed only.
class KnowledgeGraph {
  public:
    static KnowledgeGraph from_triplets(Vocab entities, Vocab relations,
                                        std::vector<Triplet> observed,
                                        std::vector<Triplet> candidates);

    std::size_t entity_count() const { return entities_.size(); }
    std::size_t relation_count() const { return relations_.size(); }
    const Vocab& entities() const { return entities_; }
    const Vocab& relations() const { return relations_; }

    // Deduplicated, in deterministic first-occurrence order.
    const std::vector<Triplet>& observed() const { return observed_; }
    const std::vector<Triplet>& candidates() const { return candidates_; }

    bool contains(const Triplet& t, Scope scope) const;

    // Tails t with (head, rel, t) observed, ascending id.
    std::span<const EntityId> neighbors_out(EntityId head, RelationId rel) const;
    // Heads h with (h, rel, tail) observed, ascending id.
    std::span<const EntityId> neighbors_in(EntityId tail, RelationId rel) const;

    const AdjacencyIndex& observed_index() const { return observed_index_; }
    const AdjacencyIndex& candidate_index() const { return candidate_index_; }

    // Count of input triplets that appeared in both files.
    std::size_t cross_set_duplicates() const { return cross_set_duplicates_; }

    void check_ids(const Triplet& t) const;
    void check_entity(EntityId e) const;
    void check_relation(RelationId r) const;

    std::string format(const Triplet& t, char sep = '\t') const;

  private:
    Vocab entities_;
    Vocab relations_;
    std::vector<Triplet> observed_;
    std::vector<Triplet> candidates_;
    TripletSet observed_set_;
    TripletSet candidate_set_;
    AdjacencyIndex observed_index_;
    AdjacencyIndex candidate_index_;
    std::size_t cross_set_duplicates_ = 0;
};

// Triple file: UTF-8, one `head<TAB>relation<TAB>tail` per line, `#` comments.
KnowledgeGraph load_graph(const std::filesystem::path& observed_path,
                          const std::optional<std::filesystem::path>& candidates_path = {});

// Writes triplets back in stored order, so load(save(g)) reproduces ids.
void save_triplets(const KnowledgeGraph& g, std::span<const Triplet> triplets,
                   const std::filesystem::path& path);
void save_graph(const KnowledgeGraph& g, const std::filesystem::path& observed_path,
                const std::optional<std::filesystem::path>& candidates_path = {});

// ID map export: `id<TAB>string` per line.
void save_id_map(const Vocab& vocab, const std::filesystem::path& path);

}  // namespace kgr
