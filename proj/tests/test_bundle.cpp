#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "qcea/bundle.hpp"
#include "qcea/preset.hpp"
#include "qcea/synthetic.hpp"
#include "test_util.hpp"

using namespace qcea;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("qcea_test_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

DatasetBundle minimal_bundle() {
    test::ManualBundle mb;
    mb.n_per_side = 2;
    mb.anchors = {{0, 0}};
    return mb.build();
}

}  // namespace

TEST_CASE("minimal fixture round-trips through the file formats") {
    DatasetBundle b = minimal_bundle();
    REQUIRE(b.anchors.size() == 1);
    const fs::path dir = temp_dir("minimal");
    save_bundle(b, dir);
    DatasetBundle loaded = load_bundle(dir);
    REQUIRE(loaded.query_emb.dim == b.query_emb.dim);
    REQUIRE(loaded.anchors.size() == 1);
    REQUIRE(loaded == b);
}

TEST_CASE("a missing embedding row is reported with the offending id") {
    DatasetBundle b = minimal_bundle();
    const fs::path dir = temp_dir("missing_row");
    save_bundle(b, dir);
    // Strip WM entity 1's row and reload.
    EmbeddingTable wm;
    wm.dim = b.wm_emb.dim;
    wm.add(0, b.wm_emb.row(0));
    save_embeddings_binary(wm, dir / "wm.emb");
    try {
        load_bundle(dir);
        FAIL("expected missing-row error");
    } catch (const Error& e) {
        REQUIRE(e.kind() == errkind::missing_row);
        REQUIRE(std::string(e.what()).find("1") != std::string::npos);
    }
}

TEST_CASE("embedding text format round-trips doubles exactly") {
    EmbeddingTable t;
    t.dim = 3;
    Rng rng = substream(3, "embtxt");
    for (int i = 0; i < 5; ++i) {
        Eigen::VectorXd v(3);
        for (int j = 0; j < 3; ++j) v[j] = normal(rng) * std::pow(10.0, static_cast<double>(i) - 2);
        t.add(i, v);
    }
    const fs::path dir = temp_dir("embtxt");
    save_embeddings_text(t, dir / "x.emb.txt");
    EmbeddingTable back = load_embeddings_text(dir / "x.emb.txt");
    REQUIRE(back == t);
}

TEST_CASE("generated bundles survive save/load bitwise") {
    DatasetBundle b = generate_synthetic(preset_tiny().spec, 42);
    const fs::path dir = temp_dir("roundtrip");
    save_bundle(b, dir);
    DatasetBundle loaded = load_bundle(dir);
    REQUIRE(loaded == b);
    // Loading is idempotent.
    save_bundle(loaded, dir);
    REQUIRE(load_bundle(dir) == b);
}

TEST_CASE("split_anchors partitions 10 pairs as 6/2/2") {
    AnchorSet anchors;
    for (EntityId i = 0; i < 10; ++i) anchors.pairs.emplace_back(i, i);
    anchors.freeze();
    SplitAssignment s = split_anchors(anchors, {0.6, 0.2, 0.2}, 1);
    int counts[3] = {0, 0, 0};
    for (Split l : s.label) counts[static_cast<int>(l)] += 1;
    REQUIRE(counts[0] == 6);
    REQUIRE(counts[1] == 2);
    REQUIRE(counts[2] == 2);
    REQUIRE(s.label.size() == 10);  // every pair labeled exactly once
}

TEST_CASE("split_anchors is deterministic per seed and differs across seeds") {
    AnchorSet anchors;
    for (EntityId i = 0; i < 40; ++i) anchors.pairs.emplace_back(i, i);
    anchors.freeze();
    REQUIRE(split_anchors(anchors, {0.6, 0.2, 0.2}, 9) == split_anchors(anchors, {0.6, 0.2, 0.2}, 9));
    bool any_diff = false;
    auto base = split_anchors(anchors, {0.6, 0.2, 0.2}, 9);
    for (std::uint64_t s = 10; s < 15 && !any_diff; ++s)
        any_diff = !(split_anchors(anchors, {0.6, 0.2, 0.2}, s) == base);
    REQUIRE(any_diff);
}

TEST_CASE("an entity with five counterparts lands in multiple splits under some seed") {
    AnchorSet anchors;
    for (EntityId u = 0; u < 5; ++u) anchors.pairs.emplace_back(0, u);  // entity 0, five targets
    for (EntityId i = 1; i < 10; ++i) anchors.pairs.emplace_back(i, 100 + i);
    anchors.freeze();
    bool spread = false;
    for (std::uint64_t seed = 0; seed < 20 && !spread; ++seed) {
        SplitAssignment s = split_anchors(anchors, {0.6, 0.2, 0.2}, seed);
        std::set<Split> seen;
        for (std::size_t i = 0; i < anchors.pairs.size(); ++i)
            if (anchors.pairs[i].first == 0) seen.insert(s.label[i]);
        spread = seen.size() > 1;
    }
    REQUIRE(spread);
}

TEST_CASE("split_anchors needs at least 3 pairs and sane ratios") {
    AnchorSet anchors;
    anchors.pairs = {{0, 0}, {1, 1}};
    anchors.freeze();
    try {
        split_anchors(anchors, {0.6, 0.2, 0.2}, 0);
        FAIL("expected insufficient-data");
    } catch (const Error& e) {
        REQUIRE(e.kind() == errkind::insufficient_data);
    }
    anchors.pairs.emplace_back(2, 2);
    anchors.freeze();
    REQUIRE_THROWS_AS(split_anchors(anchors, {0.5, 0.2, 0.2}, 0), Error);
}

TEST_CASE("noiseless planted matching is solvable by raw nearest neighbor") {
    SyntheticSpec spec = preset_tiny().spec;  // sigma = 0, no context splits
    DatasetBundle b = generate_synthetic(spec, 3);
    for (const auto& [t, w] : b.anchors.pairs) {
        const Eigen::VectorXd& x = b.tcm_emb.row(t);
        EntityId best = -1;
        double best_d = 1e300;
        for (std::int64_t cand : b.wm_emb.ids()) {
            const double d = (b.wm_emb.row(cand) - x).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = cand;
            }
        }
        REQUIRE(best == w);
    }
}

TEST_CASE("context-split sources own exactly one hinted instance per description") {
    SyntheticSpec spec = preset_context().spec;
    spec.n_tcm = 60;
    spec.n_wm = 80;
    spec.anchored_concepts = 30;  // 10 context sources
    DatasetBundle b = generate_synthetic(spec, 5);
    const int k = spec.context_sources();
    REQUIRE(k == 10);
    std::map<EntityId, int> hinted_per_entity;
    for (const auto& q : b.queries)
        if (q.hinted()) hinted_per_entity[q.entity_id] += 1;
    REQUIRE(hinted_per_entity.size() == static_cast<std::size_t>(k));
    int total = 0;
    for (const auto& [v, c] : hinted_per_entity) {
        REQUIRE(c == spec.context_descriptions);
        total += c;
        // Hints point at distinct targets matching the anchor pool.
        std::set<EntityId> hints;
        for (const auto& q : b.queries)
            if (q.entity_id == v && q.hinted()) hints.insert(q.hint_target);
        const auto& pool = b.anchors.pool(v, Direction::TcmToWm);
        REQUIRE(hints.size() == static_cast<std::size_t>(spec.context_descriptions));
        REQUIRE(std::vector<EntityId>(hints.begin(), hints.end()) == pool);
    }
    REQUIRE(total == 2 * k);
}

TEST_CASE("generated bundles pass the validator and infeasible specs are rejected") {
    for (std::uint64_t seed : {1, 2, 3}) {
        DatasetBundle b = generate_synthetic(preset_small().spec, seed);
        REQUIRE_NOTHROW(b.validate());
        REQUIRE(b.tcm.size() == 200);
        REQUIRE(b.wm.size() == 200);
    }
    SyntheticSpec bad = preset_tiny().spec;
    bad.n_tcm = 4;  // fewer entities than anchored concepts
    try {
        generate_synthetic(bad, 0);
        FAIL("expected spec error");
    } catch (const Error& e) {
        REQUIRE(e.kind() == errkind::spec_error);
    }
}

TEST_CASE("generation is deterministic per seed") {
    REQUIRE(generate_synthetic(preset_tiny().spec, 8) == generate_synthetic(preset_tiny().spec, 8));
}
