#include <catch_amalgamated.hpp>

#include "qcea/graph.hpp"
#include "test_util.hpp"

using namespace qcea;
using qcea::test::ent;

namespace {

Graph make_graph(Side side, int n, std::vector<std::pair<EntityId, EntityId>> edges,
                 const std::string& tag = "symptom") {
    Graph g;
    g.side = side;
    for (int i = 0; i < n; ++i) g.entities.push_back(ent(i, side, tag));
    g.edges = std::move(edges);
    g.freeze();
    return g;
}

// Dense straight-line D^{-1/2}(A+I)D^{-1/2}, independent of the CSR path.
Eigen::MatrixXd dense_normalized(int n, const std::vector<std::pair<EntityId, EntityId>>& edges) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
    for (const auto& [u, v] : edges) {
        a(static_cast<int>(u), static_cast<int>(v)) = 1.0;
        a(static_cast<int>(v), static_cast<int>(u)) = 1.0;
    }
    Eigen::VectorXd dinv(n);
    for (int i = 0; i < n; ++i) dinv[i] = 1.0 / std::sqrt(a.row(i).sum());
    Eigen::MatrixXd out(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) out(i, j) = dinv[i] * a(i, j) * dinv[j];
    return out;
}

}  // namespace

TEST_CASE("adjacency of a single node is [[1]]") {
    auto adj = build_adjacency(make_graph(Side::TCM, 1, {}));
    REQUIRE(adj.n == 1);
    REQUIRE(adj.dense()(0, 0) == Catch::Approx(1.0));
}

TEST_CASE("adjacency of one edge gives all entries 0.5") {
    auto adj = build_adjacency(make_graph(Side::TCM, 2, {{0, 1}}));
    Eigen::MatrixXd d = adj.dense();
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) REQUIRE(d(i, j) == Catch::Approx(0.5).margin(1e-15));
}

TEST_CASE("path graph matches the dense oracle") {
    const std::vector<std::pair<EntityId, EntityId>> edges{{0, 1}, {1, 2}};
    auto adj = build_adjacency(make_graph(Side::WM, 3, edges));
    Eigen::MatrixXd expect = dense_normalized(3, edges);
    REQUIRE((adj.dense() - expect).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("adjacency is symmetric with positive finite row sums") {
    Rng rng = substream(77, "adj-prop");
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 2 + static_cast<int>(uniform_below(rng, 12));
        std::set<std::pair<EntityId, EntityId>> eset;
        const int m = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(2 * n)));
        for (int e = 0; e < m; ++e) {
            auto a = static_cast<EntityId>(uniform_below(rng, static_cast<std::uint64_t>(n)));
            auto b = static_cast<EntityId>(uniform_below(rng, static_cast<std::uint64_t>(n)));
            if (a == b) continue;
            eset.insert(std::minmax(a, b));
        }
        auto adj = build_adjacency(
            make_graph(Side::TCM, n, {eset.begin(), eset.end()}));
        Eigen::MatrixXd d = adj.dense();
        REQUIRE((d - d.transpose()).cwiseAbs().maxCoeff() < 1e-12);
        for (int i = 0; i < n; ++i) {
            REQUIRE(std::isfinite(d.row(i).sum()));
            REQUIRE(d.row(i).sum() > 0.0);
        }
    }
}

TEST_CASE("graph validation rejects bad edges") {
    Graph g;
    g.side = Side::TCM;
    g.entities = {ent(0, Side::TCM, "symptom"), ent(1, Side::TCM, "symptom")};

    SECTION("dangling endpoint names the edge") {
        g.edges = {{0, 7}};
        try {
            build_adjacency(g);
            FAIL("expected validation error");
        } catch (const Error& e) {
            REQUIRE(e.kind() == errkind::validation);
            REQUIRE(std::string(e.what()).find("(0,7)") != std::string::npos);
        }
    }
    SECTION("self edge") {
        g.edges = {{1, 1}};
        REQUIRE_THROWS_AS(build_adjacency(g), Error);
    }
    SECTION("duplicate edge") {
        g.edges = {{0, 1}, {1, 0}};
        REQUIRE_THROWS_AS(build_adjacency(g), Error);
    }
}

TEST_CASE("positive pools read anchors directly and reversed") {
    AnchorSet anchors;
    anchors.pairs = {{5, 11}, {5, 12}};
    anchors.freeze();
    REQUIRE(anchors.pool(5, Direction::TcmToWm) == std::vector<EntityId>{11, 12});
    REQUIRE(anchors.pool(11, Direction::WmToTcm) == std::vector<EntityId>{5});
    REQUIRE(anchors.pool(12, Direction::WmToTcm) == std::vector<EntityId>{5});
    REQUIRE(anchors.pool(99, Direction::TcmToWm).empty());
}

TEST_CASE("pools of 50 random pairs are cross-consistent for every pair") {
    Rng rng = substream(5, "pool-prop");
    std::set<std::pair<EntityId, EntityId>> pairs;
    while (pairs.size() < 50)
        pairs.insert({static_cast<EntityId>(uniform_below(rng, 30)),
                      static_cast<EntityId>(uniform_below(rng, 30))});
    AnchorSet anchors;
    anchors.pairs.assign(pairs.begin(), pairs.end());
    anchors.freeze();
    for (const auto& [v, u] : anchors.pairs) {
        const auto& fwd = anchors.pool(v, Direction::TcmToWm);
        const auto& rev = anchors.pool(u, Direction::WmToTcm);
        REQUIRE(std::binary_search(fwd.begin(), fwd.end(), u));
        REQUIRE(std::binary_search(rev.begin(), rev.end(), v));
    }
    // And nothing extra: every pool member corresponds to a real pair.
    for (const auto& [v, u] : anchors.pairs)
        for (EntityId w : anchors.pool(v, Direction::TcmToWm))
            REQUIRE(pairs.count({v, w}) == 1);
}

TEST_CASE("positive_pool rejects a wrong-side entity") {
    Graph tcm = make_graph(Side::TCM, 3, {});
    AnchorSet anchors;
    anchors.pairs = {{0, 1}};
    anchors.freeze();
    REQUIRE_NOTHROW(positive_pool(anchors, tcm, 0, Direction::TcmToWm));
    try {
        positive_pool(anchors, tcm, 0, Direction::WmToTcm);  // tcm graph is not the WM source
        FAIL("expected direction mismatch");
    } catch (const Error& e) {
        REQUIRE(e.kind() == errkind::direction_mismatch);
    }
    try {
        positive_pool(anchors, tcm, 9, Direction::TcmToWm);  // unknown on the source side
        FAIL("expected direction mismatch");
    } catch (const Error& e) {
        REQUIRE(e.kind() == errkind::direction_mismatch);
    }
}

TEST_CASE("candidate restriction") {
    Graph wm;
    wm.side = Side::WM;
    wm.entities = {ent(0, Side::WM, "symptom"), ent(1, Side::WM, "molecule"),
                   ent(2, Side::WM, "symptom")};
    wm.freeze();
    CompatTable compat;
    compat.add("symptom", "symptom");
    compat.add("herb", "molecule");

    SECTION("full mode returns everything") {
        REQUIRE(restrict_candidates(wm, "symptom", RetrievalMode::Full, compat) ==
                std::vector<EntityId>{0, 1, 2});
    }
    SECTION("type mode keeps compatible tags") {
        REQUIRE(restrict_candidates(wm, "symptom", RetrievalMode::TypeConstrained, compat) ==
                std::vector<EntityId>{0, 2});
        REQUIRE(restrict_candidates(wm, "herb", RetrievalMode::TypeConstrained, compat) ==
                std::vector<EntityId>{1});
    }
    SECTION("unknown type tag is a validation error") {
        REQUIRE_THROWS_AS(restrict_candidates(wm, "nonsense", RetrievalMode::TypeConstrained, compat),
                          Error);
    }
}

TEST_CASE("type-constrained candidates are a subset of full, for every query in a bundle") {
    test::ManualBundle mb;
    mb.n_per_side = 8;
    mb.anchors = {{0, 1}, {1, 0}, {2, 3}, {3, 2}};
    mb.tcm_tags = {"symptom", "herb", "symptom", "herb", "symptom", "herb", "symptom", "herb"};
    mb.wm_tags = {"symptom", "molecule", "symptom", "molecule", "symptom", "molecule", "symptom",
                  "molecule"};
    DatasetBundle b = mb.build();
    for (const auto& q : b.queries) {
        const Graph& tgt = b.graph(target_side(q.s));
        const std::string& tag = b.graph(source_side(q.s)).entity(q.entity_id).type_tag;
        auto full = restrict_candidates(tgt, tag, RetrievalMode::Full, b.compat);
        auto typed = restrict_candidates(tgt, tag, RetrievalMode::TypeConstrained, b.compat);
        for (EntityId c : typed) REQUIRE(std::binary_search(full.begin(), full.end(), c));
    }
}
