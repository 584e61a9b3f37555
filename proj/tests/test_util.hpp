#pragma once

// Shared fixture builders for the test suites. Oracles stay inside the test
// files that own them.

#include <string>
#include <vector>

#include "qcea/bundle.hpp"
#include "qcea/graph.hpp"

namespace qcea::test {

inline Entity ent(EntityId id, Side side, const std::string& tag, const std::string& name = "") {
    Entity e;
    e.id = id;
    e.side = side;
    e.type_tag = tag;
    e.name = name.empty() ? (std::string(side == Side::TCM ? "t" : "w") + std::to_string(id)) : name;
    e.description = e.name + " description";
    return e;
}

// A hand-built bundle: `n` entities per side, given anchors/edges, one query
// instance per anchored entity per direction, random-ish embeddings.
struct ManualBundle {
    int n_per_side = 4;
    int d_q = 5, d_T = 5, d_W = 5;
    std::vector<std::pair<EntityId, EntityId>> anchors;
    std::vector<std::pair<EntityId, EntityId>> tcm_edges;
    std::vector<std::pair<EntityId, EntityId>> wm_edges;
    std::vector<std::string> tcm_tags;  // per entity; default "symptom"
    std::vector<std::string> wm_tags;
    std::uint64_t seed = 1234;

    DatasetBundle build() const {
        DatasetBundle b;
        b.tcm.side = Side::TCM;
        b.wm.side = Side::WM;
        for (int i = 0; i < n_per_side; ++i) {
            b.tcm.entities.push_back(ent(i, Side::TCM,
                                         i < static_cast<int>(tcm_tags.size()) ? tcm_tags[static_cast<std::size_t>(i)]
                                                                               : "symptom"));
            b.wm.entities.push_back(ent(i, Side::WM,
                                        i < static_cast<int>(wm_tags.size()) ? wm_tags[static_cast<std::size_t>(i)]
                                                                             : "symptom"));
        }
        b.tcm.edges = tcm_edges;
        b.wm.edges = wm_edges;
        b.anchors.pairs = anchors;
        std::set<std::string> tags;
        for (const auto& e : b.tcm.entities) tags.insert(e.type_tag);
        for (const auto& e : b.wm.entities) tags.insert(e.type_tag);
        for (const auto& t : tags)
            for (const auto& u : tags) b.compat.add(t, u);

        Rng rng = substream(seed, "manual-bundle");
        auto fill = [&](EmbeddingTable& t, int dim, const std::vector<Entity>& ents) {
            t.dim = dim;
            for (const auto& e : ents) {
                Eigen::VectorXd v(dim);
                for (int i = 0; i < dim; ++i) v[i] = normal(rng);
                t.add(e.id, v);
            }
        };
        fill(b.tcm_emb, d_T, b.tcm.entities);
        fill(b.wm_emb, d_W, b.wm.entities);

        b.query_emb.dim = d_q;
        std::int64_t next = 0;
        AnchorSet tmp;
        tmp.pairs = anchors;
        tmp.freeze();
        for (int di = 0; di < 2; ++di) {
            const auto& ents = di == 0 ? b.tcm.entities : b.wm.entities;
            for (const auto& e : ents) {
                if (tmp.pool(e.id, static_cast<Direction>(di)).empty()) continue;
                QueryInstance q;
                q.instance_id = next++;
                q.entity_id = e.id;
                q.s = static_cast<Direction>(di);
                q.description = "query for " + e.name;
                b.queries.push_back(q);
                Eigen::VectorXd v(d_q);
                for (int i = 0; i < d_q; ++i) v[i] = normal(rng);
                b.query_emb.add(q.instance_id, v);
            }
        }
        b.splits.label.assign(anchors.size(), Split::Train);
        b.freeze();
        return b;
    }
};

}  // namespace qcea::test
