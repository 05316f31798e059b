#include "kgr/kg.hpp"

#include <algorithm>
#include <fstream>

namespace kgr {

namespace {

std::uint64_t pack(std::uint32_t a, std::uint32_t b) {
    return (static_cast<std::uint64_t>(a) << 32) | b;
}

}  // namespace

std::uint32_t Vocab::intern(std::string_view name) {
    auto it = ids_.find(std::string(name));
    if (it != ids_.end()) return it->second;
    const auto id = static_cast<std::uint32_t>(names_.size());
    names_.emplace_back(name);
    ids_.emplace(names_.back(), id);
    return id;
}

std::optional<std::uint32_t> Vocab::find(std::string_view name) const {
    auto it = ids_.find(std::string(name));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
}

const std::string& Vocab::name(std::uint32_t id) const {
    if (id >= names_.size()) throw DomainError("vocab id out of range: " + std::to_string(id));
    return names_[id];
}

AdjacencyIndex AdjacencyIndex::build(std::span<const Triplet> edges) {
    AdjacencyIndex idx;
    for (const Triplet& t : edges) {
        idx.out_[pack(t.head, t.relation)].push_back(t.tail);
        idx.in_[pack(t.tail, t.relation)].push_back(t.head);
        idx.pair_[pack(t.head, t.tail)].push_back(t.relation);
        idx.by_head_[t.head].emplace_back(t.relation, t.tail);
    }
    for (auto& [k, v] : idx.out_) std::sort(v.begin(), v.end());
    for (auto& [k, v] : idx.in_) std::sort(v.begin(), v.end());
    for (auto& [k, v] : idx.pair_) std::sort(v.begin(), v.end());
    for (auto& [k, v] : idx.by_head_) std::sort(v.begin(), v.end());
    return idx;
}

std::span<const EntityId> AdjacencyIndex::tails(EntityId head, RelationId rel) const {
    auto it = out_.find(pack(head, rel));
    if (it == out_.end()) return {};
    return it->second;
}

std::span<const EntityId> AdjacencyIndex::heads(EntityId tail, RelationId rel) const {
    auto it = in_.find(pack(tail, rel));
    if (it == in_.end()) return {};
    return it->second;
}

std::span<const RelationId> AdjacencyIndex::relations(EntityId head, EntityId tail) const {
    auto it = pair_.find(pack(head, tail));
    if (it == pair_.end()) return {};
    return it->second;
}

std::span<const std::pair<RelationId, EntityId>> AdjacencyIndex::out_edges(EntityId head) const {
    auto it = by_head_.find(head);
    if (it == by_head_.end()) return {};
    return it->second;
}

KnowledgeGraph KnowledgeGraph::from_triplets(Vocab entities, Vocab relations,
                                             std::vector<Triplet> observed,
                                             std::vector<Triplet> candidates) {
    KnowledgeGraph g;
    g.entities_ = std::move(entities);
    g.relations_ = std::move(relations);

    for (const Triplet& t : observed) {
        if (t.head >= g.entity_count() || t.tail >= g.entity_count() ||
            t.relation >= g.relation_count()) {
            throw DomainError("observed triplet references id outside vocab range");
        }
        if (g.observed_set_.insert(t).second) g.observed_.push_back(t);
    }
    if (g.observed_.empty()) throw ValidationError("observed triplet set is empty");

    for (const Triplet& t : candidates) {
        if (t.head >= g.entity_count() || t.tail >= g.entity_count() ||
            t.relation >= g.relation_count()) {
            throw DomainError("candidate triplet references id outside vocab range");
        }
        if (g.observed_set_.contains(t)) {
            ++g.cross_set_duplicates_;
            continue;
        }
        if (g.candidate_set_.insert(t).second) g.candidates_.push_back(t);
    }

    g.observed_index_ = AdjacencyIndex::build(g.observed_);
    g.candidate_index_ = AdjacencyIndex::build(g.candidates_);
    return g;
}

bool KnowledgeGraph::contains(const Triplet& t, Scope scope) const {
    check_ids(t);
    switch (scope) {
        case Scope::observed: return observed_set_.contains(t);
        case Scope::candidates: return candidate_set_.contains(t);
        case Scope::either: return observed_set_.contains(t) || candidate_set_.contains(t);
    }
    return false;
}

std::span<const EntityId> KnowledgeGraph::neighbors_out(EntityId head, RelationId rel) const {
    check_entity(head);
    check_relation(rel);
    return observed_index_.tails(head, rel);
}

std::span<const EntityId> KnowledgeGraph::neighbors_in(EntityId tail, RelationId rel) const {
    check_entity(tail);
    check_relation(rel);
    return observed_index_.heads(tail, rel);
}

void KnowledgeGraph::check_ids(const Triplet& t) const {
    check_entity(t.head);
    check_relation(t.relation);
    check_entity(t.tail);
}

void KnowledgeGraph::check_entity(EntityId e) const {
    if (e >= entity_count())
        throw DomainError("entity id out of range: " + std::to_string(e));
}

void KnowledgeGraph::check_relation(RelationId r) const {
    if (r >= relation_count())
        throw DomainError("relation id out of range: " + std::to_string(r));
}

std::string KnowledgeGraph::format(const Triplet& t, char sep) const {
    std::string s = entities_.name(t.head);
    s += sep;
    s += relations_.name(t.relation);
    s += sep;
    s += entities_.name(t.tail);
    return s;
}

namespace {

struct ParsedFile {
    std::vector<Triplet> triplets;
};

ParsedFile parse_triple_file(const std::filesystem::path& path, Vocab& entities, Vocab& relations) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open triple file: " + path.string());

    ParsedFile out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;

        const auto tab1 = line.find('\t');
        const auto tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
        const auto tab3 = tab2 == std::string::npos ? std::string::npos : line.find('\t', tab2 + 1);
        if (tab1 == std::string::npos || tab2 == std::string::npos || tab3 != std::string::npos) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) +
                             ": expected 3 tab-separated fields");
        }
        const std::string_view view(line);
        const auto head = view.substr(0, tab1);
        const auto rel = view.substr(tab1 + 1, tab2 - tab1 - 1);
        const auto tail = view.substr(tab2 + 1);
        if (head.empty() || rel.empty() || tail.empty()) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": empty field");
        }
        out.triplets.push_back(Triplet{entities.intern(head), relations.intern(rel),
                                       entities.intern(tail)});
    }
    return out;
}

}  // namespace

KnowledgeGraph load_graph(const std::filesystem::path& observed_path,
                          const std::optional<std::filesystem::path>& candidates_path) {
    Vocab entities;
    Vocab relations;
    ParsedFile observed = parse_triple_file(observed_path, entities, relations);
    ParsedFile candidates;
    if (candidates_path) candidates = parse_triple_file(*candidates_path, entities, relations);
    return KnowledgeGraph::from_triplets(std::move(entities), std::move(relations),
                                         std::move(observed.triplets),
                                         std::move(candidates.triplets));
}

void save_triplets(const KnowledgeGraph& g, std::span<const Triplet> triplets,
                   const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ComputeError("cannot write file: " + path.string());
    for (const Triplet& t : triplets) out << g.format(t) << '\n';
}

void save_graph(const KnowledgeGraph& g, const std::filesystem::path& observed_path,
                const std::optional<std::filesystem::path>& candidates_path) {
    save_triplets(g, g.observed(), observed_path);
    if (candidates_path) save_triplets(g, g.candidates(), *candidates_path);
}

void save_id_map(const Vocab& vocab, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ComputeError("cannot write file: " + path.string());
    for (std::uint32_t id = 0; id < vocab.size(); ++id) {
        out << id << '\t' << vocab.name(id) << '\n';
    }
}

}  // namespace kgr
