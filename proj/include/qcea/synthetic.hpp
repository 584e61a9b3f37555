#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/QR>

#include "qcea/bundle.hpp"
#include "qcea/common.hpp"
#include "qcea/graph.hpp"

namespace qcea {

// Planted-structure benchmark: every anchored correspondence shares a latent
// vector; entity/query embeddings are noisy linear views of latents; graph
// edges connect entities with nearby latents. Context-split sources own one
// latent per description, each matching a different target.
struct SyntheticSpec {
    int n_tcm = 20;
    int n_wm = 20;
    int anchored_concepts = 10;
    double many_to_many_fraction = 0.0;   // of non-context concepts
    double context_split_fraction = 0.0;  // of concepts
    int context_descriptions = 2;         // descriptions (and targets) per context source
    int latent_dim = 8;
    int d_q = 16;
    int d_T = 16;
    int d_W = 16;
    double sigma = 0.0;
    int edges_per_entity = 2;
    std::vector<std::string> tcm_types{"symptom", "herb"};
    std::vector<std::string> wm_types{"symptom", "molecule"};
    std::array<double, 3> split_ratios{0.6, 0.2, 0.2};

    int context_sources() const {
        return static_cast<int>(std::llround(context_split_fraction * anchored_concepts));
    }
};

namespace detail {

inline Eigen::VectorXd unit_gaussian(Rng& rng, int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = normal(rng);
    double nrm = v.norm();
    if (nrm == 0.0) {
        v.setZero();
        v[0] = 1.0;
        nrm = 1.0;
    }
    return v / nrm;
}

inline Eigen::MatrixXd orthonormal_map(Rng& rng, int rows, int cols) {
    Eigen::MatrixXd g(rows, cols);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) g(i, j) = normal(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
    // Pin column signs so the map is a deterministic function of the samples.
    for (int j = 0; j < cols; ++j)
        if (q(0, j) < 0) q.col(j) = -q.col(j);
    return q;
}

inline Eigen::VectorXd noisy_view(const Eigen::VectorXd& latent, double sigma, Rng& rng) {
    if (sigma == 0.0) return latent;
    return latent + sigma * unit_gaussian(rng, static_cast<int>(latent.size()));
}

}  // namespace detail

inline DatasetBundle generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
    require(spec.anchored_concepts >= 1, errkind::spec_error, "need at least one anchored concept");
    require(spec.latent_dim >= 1, errkind::spec_error, "latent_dim must be positive");
    require(spec.latent_dim <= std::min({spec.d_q, spec.d_T, spec.d_W}), errkind::spec_error,
            "latent_dim exceeds an embedding dimension");
    require(spec.sigma >= 0.0, errkind::spec_error, "sigma must be non-negative");
    require(spec.context_descriptions >= 2, errkind::spec_error,
            "context sources need at least 2 descriptions");
    require(!spec.tcm_types.empty() && !spec.wm_types.empty(), errkind::spec_error,
            "type tag lists must be non-empty");
    require(spec.tcm_types.size() == spec.wm_types.size(), errkind::spec_error,
            "type families must pair TCM and WM tags one-to-one");

    const int n_ctx = spec.context_sources();
    const int n_regular = spec.anchored_concepts - n_ctx;
    require(n_regular >= 0, errkind::spec_error, "more context sources than concepts");
    const int n_m2m = static_cast<int>(std::llround(spec.many_to_many_fraction * n_regular));

    Rng rng_lat = substream(seed, "latents");
    Rng rng_noise = substream(seed, "noise");
    Rng rng_maps = substream(seed, "maps");
    Rng rng_misc = substream(seed, "misc");

    const int L = spec.latent_dim;
    const bool shared_map = spec.d_q == spec.d_T && spec.d_T == spec.d_W;
    Eigen::MatrixXd map_q = detail::orthonormal_map(rng_maps, spec.d_q, L);
    Eigen::MatrixXd map_t = shared_map ? map_q : detail::orthonormal_map(rng_maps, spec.d_T, L);
    Eigen::MatrixXd map_w = shared_map ? map_q : detail::orthonormal_map(rng_maps, spec.d_W, L);

    DatasetBundle b;
    b.tcm.side = Side::TCM;
    b.wm.side = Side::WM;
    b.query_emb.dim = spec.d_q;
    b.tcm_emb.dim = spec.d_T;
    b.wm_emb.dim = spec.d_W;

    const std::size_t families = spec.tcm_types.size();
    for (std::size_t f = 0; f < families; ++f) {
        b.compat.add(spec.tcm_types[f], spec.wm_types[f]);
        b.compat.add(spec.wm_types[f], spec.tcm_types[f]);
    }

    // Latent bookkeeping per entity, used for embeddings, query instances and
    // edge construction.
    std::vector<Eigen::VectorXd> tcm_latent, wm_latent;
    EntityId next_tcm = 0, next_wm = 0;

    auto add_entity = [&](Side side, const std::string& tag, const Eigen::VectorXd& latent,
                          const std::string& what) -> EntityId {
        Graph& g = b.graph(side);
        EntityId id = side == Side::TCM ? next_tcm++ : next_wm++;
        Entity e;
        e.id = id;
        e.side = side;
        e.type_tag = tag;
        e.name = std::string(side == Side::TCM ? "t" : "w") + std::to_string(id);
        e.description = e.name + " " + tag + " " + what;
        g.entities.push_back(std::move(e));
        (side == Side::TCM ? tcm_latent : wm_latent).push_back(latent);
        return id;
    };

    struct PendingQuery {
        EntityId entity;
        Direction s;
        Eigen::VectorXd latent;
        EntityId hint;
        std::string text;
    };
    std::vector<PendingQuery> pending;

    // Context-split sources: one TCM entity, m latents, m WM targets;
    // the source's own embedding sits on the normalized latent mixture.
    for (int c = 0; c < n_ctx; ++c) {
        const std::size_t fam = static_cast<std::size_t>(c) % families;
        std::vector<Eigen::VectorXd> lats;
        for (int j = 0; j < spec.context_descriptions; ++j)
            lats.push_back(detail::unit_gaussian(rng_lat, L));
        Eigen::VectorXd mix = Eigen::VectorXd::Zero(L);
        for (const auto& l : lats) mix += l;
        mix.normalize();
        EntityId v = add_entity(Side::TCM, spec.tcm_types[fam], mix,
                                "context source " + std::to_string(c));
        for (int j = 0; j < spec.context_descriptions; ++j) {
            EntityId u = add_entity(Side::WM, spec.wm_types[fam], lats[static_cast<std::size_t>(j)],
                                    "context target " + std::to_string(c) + "." + std::to_string(j));
            b.anchors.pairs.emplace_back(v, u);
            pending.push_back({v, Direction::TcmToWm, lats[static_cast<std::size_t>(j)], u,
                               "sense " + std::to_string(j) + " of context source " + std::to_string(c)});
            pending.push_back({u, Direction::WmToTcm, lats[static_cast<std::size_t>(j)], -1,
                               "context target " + std::to_string(c) + "." + std::to_string(j)});
        }
    }

    // Regular concepts: one latent, one entity per side; a fraction gets an
    // extra view on one side (many-to-many, asymmetric).
    for (int c = 0; c < n_regular; ++c) {
        const std::size_t fam = static_cast<std::size_t>(c) % families;
        Eigen::VectorXd lat = detail::unit_gaussian(rng_lat, L);
        EntityId v = add_entity(Side::TCM, spec.tcm_types[fam], lat, "concept " + std::to_string(c));
        EntityId u = add_entity(Side::WM, spec.wm_types[fam], lat, "concept " + std::to_string(c));
        b.anchors.pairs.emplace_back(v, u);
        std::vector<EntityId> tcm_members{v}, wm_members{u};
        if (c < n_m2m) {
            if (c % 2 == 0) {
                EntityId u2 = add_entity(Side::WM, spec.wm_types[fam], lat,
                                         "concept " + std::to_string(c) + " extra view");
                b.anchors.pairs.emplace_back(v, u2);
                wm_members.push_back(u2);
            } else {
                EntityId v2 = add_entity(Side::TCM, spec.tcm_types[fam], lat,
                                         "concept " + std::to_string(c) + " extra view");
                b.anchors.pairs.emplace_back(v2, u);
                tcm_members.push_back(v2);
            }
        }
        for (EntityId t : tcm_members)
            pending.push_back({t, Direction::TcmToWm, lat, -1, "concept " + std::to_string(c)});
        for (EntityId w : wm_members)
            pending.push_back({w, Direction::WmToTcm, lat, -1, "concept " + std::to_string(c)});
    }

    require(next_tcm <= spec.n_tcm, errkind::spec_error,
            "anchored TCM entities (" + std::to_string(next_tcm) + ") exceed n_tcm (" +
                std::to_string(spec.n_tcm) + ")");
    require(next_wm <= spec.n_wm, errkind::spec_error,
            "anchored WM entities (" + std::to_string(next_wm) + ") exceed n_wm (" +
                std::to_string(spec.n_wm) + ")");

    // Unanchored distractors fill the remaining budget.
    while (next_tcm < spec.n_tcm) {
        std::size_t fam = static_cast<std::size_t>(uniform_below(rng_misc, families));
        add_entity(Side::TCM, spec.tcm_types[fam], detail::unit_gaussian(rng_lat, L), "distractor");
    }
    while (next_wm < spec.n_wm) {
        std::size_t fam = static_cast<std::size_t>(uniform_below(rng_misc, families));
        add_entity(Side::WM, spec.wm_types[fam], detail::unit_gaussian(rng_lat, L), "distractor");
    }

    // Embeddings: noisy views mapped into each family's space.
    for (std::size_t i = 0; i < b.tcm.entities.size(); ++i)
        b.tcm_emb.add(b.tcm.entities[i].id,
                      map_t * detail::noisy_view(tcm_latent[i], spec.sigma, rng_noise));
    for (std::size_t i = 0; i < b.wm.entities.size(); ++i)
        b.wm_emb.add(b.wm.entities[i].id,
                     map_w * detail::noisy_view(wm_latent[i], spec.sigma, rng_noise));

    std::int64_t next_instance = 0;
    for (const auto& pq : pending) {
        QueryInstance q;
        q.instance_id = next_instance++;
        q.entity_id = pq.entity;
        q.s = pq.s;
        q.description = pq.text;
        q.hint_target = pq.hint;
        b.queries.push_back(std::move(q));
        b.query_emb.add(b.queries.back().instance_id,
                        map_q * detail::noisy_view(pq.latent, spec.sigma, rng_noise));
    }

    // Edges: each entity links to its nearest neighbors in latent space.
    auto build_edges = [&](Graph& g, const std::vector<Eigen::VectorXd>& lats) {
        const int n = static_cast<int>(g.entities.size());
        std::set<std::pair<EntityId, EntityId>> edge_set;
        for (int i = 0; i < n; ++i) {
            std::vector<std::pair<double, int>> scored;
            scored.reserve(static_cast<std::size_t>(n) - 1);
            for (int j = 0; j < n; ++j)
                if (j != i)
                    scored.emplace_back(-lats[static_cast<std::size_t>(i)].dot(lats[static_cast<std::size_t>(j)]), j);
            const int k = std::min<int>(spec.edges_per_entity, n - 1);
            std::partial_sort(scored.begin(), scored.begin() + k, scored.end());
            for (int e = 0; e < k; ++e) {
                EntityId a = g.entities[static_cast<std::size_t>(i)].id;
                EntityId c = g.entities[static_cast<std::size_t>(scored[static_cast<std::size_t>(e)].second)].id;
                edge_set.insert(std::minmax(a, c));
            }
        }
        for (const auto& e : edge_set) g.edges.push_back(e);
    };
    if (b.tcm.entities.size() > 1) build_edges(b.tcm, tcm_latent);
    if (b.wm.entities.size() > 1) build_edges(b.wm, wm_latent);

    b.splits = split_anchors(b.anchors, spec.split_ratios, seed);
    b.freeze();
    return b;
}

}  // namespace qcea
