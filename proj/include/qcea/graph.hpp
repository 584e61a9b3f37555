#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qcea/common.hpp"

namespace qcea {

using EntityId = std::int64_t;

enum class Side { TCM, WM };

inline const char* side_name(Side s) { return s == Side::TCM ? "TCM" : "WM"; }

// Alignment direction: 0 = TCM->WM, 1 = WM->TCM.
enum class Direction : int { TcmToWm = 0, WmToTcm = 1 };

inline int dir_index(Direction d) { return static_cast<int>(d); }
inline Side source_side(Direction d) { return d == Direction::TcmToWm ? Side::TCM : Side::WM; }
inline Side target_side(Direction d) { return d == Direction::TcmToWm ? Side::WM : Side::TCM; }
inline Direction reverse(Direction d) {
    return d == Direction::TcmToWm ? Direction::WmToTcm : Direction::TcmToWm;
}

struct Entity {
    EntityId id = 0;
    Side side = Side::TCM;
    std::string type_tag;
    std::string name;
    std::string description;  // name + definition; seeds query instances
};

// One side's knowledge graph. Edges are undirected, stored once per pair.
class Graph {
public:
    Side side = Side::TCM;
    std::vector<Entity> entities;
    std::vector<std::pair<EntityId, EntityId>> edges;

    void validate() const {
        std::set<EntityId> ids;
        for (const auto& e : entities) {
            require(e.side == side, errkind::validation,
                    "entity " + std::to_string(e.id) + " side differs from graph side");
            require(ids.insert(e.id).second, errkind::validation,
                    "duplicate entity id " + std::to_string(e.id) + " on side " + side_name(side));
            require(!e.type_tag.empty(), errkind::validation,
                    "entity " + std::to_string(e.id) + " has empty type_tag");
            require(!e.description.empty(), errkind::validation,
                    "entity " + std::to_string(e.id) + " has empty description");
        }
        std::set<std::pair<EntityId, EntityId>> seen;
        for (const auto& [a, b] : edges) {
            require(a != b, errkind::validation,
                    "self-edge at entity " + std::to_string(a));
            require(ids.count(a) != 0, errkind::validation,
                    "edge (" + std::to_string(a) + "," + std::to_string(b) +
                        ") has dangling endpoint " + std::to_string(a));
            require(ids.count(b) != 0, errkind::validation,
                    "edge (" + std::to_string(a) + "," + std::to_string(b) +
                        ") has dangling endpoint " + std::to_string(b));
            auto key = std::minmax(a, b);
            require(seen.insert(key).second, errkind::validation,
                    "duplicate edge (" + std::to_string(a) + "," + std::to_string(b) + ")");
        }
    }

    std::size_t size() const { return entities.size(); }

    // Index of an entity id within `entities`; built lazily by freeze().
    int index_of(EntityId id) const {
        auto it = index_.find(id);
        require(it != index_.end(), errkind::unknown_id,
                std::string("no entity ") + std::to_string(id) + " on side " + side_name(side));
        return it->second;
    }

    bool contains(EntityId id) const { return index_.find(id) != index_.end(); }

    const Entity& entity(EntityId id) const { return entities[static_cast<std::size_t>(index_of(id))]; }

    // Validates and builds the id index plus per-entity neighbor lists
    // (sorted, deduplicated). Call once after construction.
    void freeze() {
        validate();
        index_.clear();
        index_.reserve(entities.size());
        for (std::size_t i = 0; i < entities.size(); ++i)
            index_.emplace(entities[i].id, static_cast<int>(i));
        neighbors_.assign(entities.size(), {});
        for (const auto& [a, b] : edges) {
            neighbors_[static_cast<std::size_t>(index_of(a))].push_back(b);
            neighbors_[static_cast<std::size_t>(index_of(b))].push_back(a);
        }
        for (auto& nb : neighbors_) std::sort(nb.begin(), nb.end());
    }

    const std::vector<EntityId>& neighbors(EntityId id) const {
        return neighbors_[static_cast<std::size_t>(index_of(id))];
    }

private:
    std::unordered_map<EntityId, int> index_;
    std::vector<std::vector<EntityId>> neighbors_;
};

// Anchor correspondences (tcm_id, wm_id) with positive pools for both
// directions. Pools are sorted; the reversed pool set is by construction the
// pool set built from the reversed correspondence set.
class AnchorSet {
public:
    std::vector<std::pair<EntityId, EntityId>> pairs;

    void freeze() {
        std::set<std::pair<EntityId, EntityId>> seen;
        for (const auto& p : pairs)
            require(seen.insert(p).second, errkind::validation,
                    "duplicate anchor pair (" + std::to_string(p.first) + "," +
                        std::to_string(p.second) + ")");
        pool_[0].clear();
        pool_[1].clear();
        for (const auto& [t, w] : pairs) {
            pool_[0][t].push_back(w);
            pool_[1][w].push_back(t);
        }
        for (auto& m : pool_)
            for (auto& [id, v] : m) std::sort(v.begin(), v.end());
    }

    // P_s(v): counterparts of v in the opposite graph. Empty for unanchored v.
    const std::vector<EntityId>& pool(EntityId v, Direction s) const {
        static const std::vector<EntityId> empty;
        const auto& m = pool_[dir_index(s)];
        auto it = m.find(v);
        return it == m.end() ? empty : it->second;
    }

    std::size_t size() const { return pairs.size(); }

private:
    std::map<EntityId, std::vector<EntityId>> pool_[2];
};

// positive_pool with the side precondition checked against the source graph.
inline const std::vector<EntityId>& positive_pool(const AnchorSet& anchors, const Graph& src_graph,
                                                  EntityId v, Direction s) {
    require(src_graph.side == source_side(s), errkind::direction_mismatch,
            std::string("graph side ") + side_name(src_graph.side) +
                " is not the source side of direction " + std::to_string(dir_index(s)));
    require(src_graph.contains(v), errkind::direction_mismatch,
            "entity " + std::to_string(v) + " is not on the source side under direction " +
                std::to_string(dir_index(s)));
    return anchors.pool(v, s);
}

// Dataset-supplied type compatibility: source type_tag -> allowed target tags.
class CompatTable {
public:
    void add(const std::string& src, const std::string& tgt) { allowed_[src].insert(tgt); }

    bool knows(const std::string& src) const { return allowed_.count(src) != 0; }

    const std::set<std::string>& targets_of(const std::string& src) const {
        auto it = allowed_.find(src);
        require(it != allowed_.end(), errkind::validation, "unknown type_tag '" + src + "'");
        return it->second;
    }

    const std::map<std::string, std::set<std::string>>& rows() const { return allowed_; }

private:
    std::map<std::string, std::set<std::string>> allowed_;
};

enum class RetrievalMode { Full, TypeConstrained };

// Candidate ids in ascending order. TypeConstrained keeps target entities
// whose type_tag is compatible with the query's type.
inline std::vector<EntityId> restrict_candidates(const Graph& target, const std::string& query_type,
                                                 RetrievalMode mode, const CompatTable& compat) {
    std::vector<EntityId> out;
    out.reserve(target.size());
    if (mode == RetrievalMode::Full) {
        for (const auto& e : target.entities) out.push_back(e.id);
    } else {
        const auto& ok = compat.targets_of(query_type);
        for (const auto& e : target.entities)
            if (ok.count(e.type_tag) != 0) out.push_back(e.id);
    }
    std::sort(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// Symmetric-normalized adjacency D^{-1/2}(A+I)D^{-1/2}, CSR. Row order equals
// the graph's entity order.
// ---------------------------------------------------------------------------
struct NormalizedAdjacency {
    int n = 0;
    std::vector<int> row_ptr;   // size n+1
    std::vector<int> col;       // column indices, ascending within a row
    std::vector<double> value;

    // Y = A_hat * X, deterministic accumulation order (ascending column).
    Eigen::MatrixXd multiply(const Eigen::MatrixXd& x) const {
        require(x.rows() == n, errkind::dimension_mismatch,
                "adjacency multiply: " + std::to_string(x.rows()) + " rows vs n=" + std::to_string(n));
        Eigen::MatrixXd y = Eigen::MatrixXd::Zero(x.rows(), x.cols());
        for (int i = 0; i < n; ++i)
            for (int k = row_ptr[static_cast<std::size_t>(i)]; k < row_ptr[static_cast<std::size_t>(i) + 1]; ++k)
                y.row(i) += value[static_cast<std::size_t>(k)] * x.row(col[static_cast<std::size_t>(k)]);
        return y;
    }

    Eigen::MatrixXd dense() const {
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
        for (int i = 0; i < n; ++i)
            for (int k = row_ptr[static_cast<std::size_t>(i)]; k < row_ptr[static_cast<std::size_t>(i) + 1]; ++k)
                a(i, col[static_cast<std::size_t>(k)]) = value[static_cast<std::size_t>(k)];
        return a;
    }
};

inline NormalizedAdjacency build_adjacency(const Graph& graph) {
    graph.validate();
    const int n = static_cast<int>(graph.size());
    std::unordered_map<EntityId, int> index;
    index.reserve(graph.size());
    for (int i = 0; i < n; ++i) index.emplace(graph.entities[static_cast<std::size_t>(i)].id, i);

    std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) adj[static_cast<std::size_t>(i)].push_back(i);  // self-loop
    for (const auto& [a, b] : graph.edges) {
        const int ia = index.at(a);
        const int ib = index.at(b);
        adj[static_cast<std::size_t>(ia)].push_back(ib);
        adj[static_cast<std::size_t>(ib)].push_back(ia);
    }

    std::vector<double> inv_sqrt_deg(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        inv_sqrt_deg[static_cast<std::size_t>(i)] =
            1.0 / std::sqrt(static_cast<double>(adj[static_cast<std::size_t>(i)].size()));

    NormalizedAdjacency out;
    out.n = n;
    out.row_ptr.assign(static_cast<std::size_t>(n) + 1, 0);
    for (int i = 0; i < n; ++i) {
        auto& row = adj[static_cast<std::size_t>(i)];
        std::sort(row.begin(), row.end());
        out.row_ptr[static_cast<std::size_t>(i) + 1] =
            out.row_ptr[static_cast<std::size_t>(i)] + static_cast<int>(row.size());
        for (int j : row) {
            out.col.push_back(j);
            out.value.push_back(inv_sqrt_deg[static_cast<std::size_t>(i)] *
                                inv_sqrt_deg[static_cast<std::size_t>(j)]);
        }
    }
    return out;
}

}  // namespace qcea
