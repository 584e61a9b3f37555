#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "qcea/common.hpp"
#include "qcea/graph.hpp"

namespace qcea {

// Dense embedding rows keyed by entity id or query-instance id.
// Rows are kept sorted by id; `row(id)` is the lookup used everywhere.
class EmbeddingTable {
public:
    int dim = 0;

    void add(std::int64_t id, const Eigen::VectorXd& v) {
        require(v.size() == dim, errkind::dimension_mismatch,
                "embedding row " + std::to_string(id) + " has length " + std::to_string(v.size()) +
                    ", table dim is " + std::to_string(dim));
        for (Eigen::Index i = 0; i < v.size(); ++i)
            require(std::isfinite(v[i]), errkind::validation,
                    "embedding row " + std::to_string(id) + " has non-finite component");
        require(index_.emplace(id, static_cast<int>(ids_.size())).second, errkind::validation,
                "duplicate embedding row " + std::to_string(id));
        ids_.push_back(id);
        rows_.push_back(v);
    }

    bool has(std::int64_t id) const { return index_.count(id) != 0; }

    const Eigen::VectorXd& row(std::int64_t id) const {
        auto it = index_.find(id);
        require(it != index_.end(), errkind::missing_row,
                "no embedding row for id " + std::to_string(id));
        return rows_[static_cast<std::size_t>(it->second)];
    }

    std::size_t size() const { return ids_.size(); }
    const std::vector<std::int64_t>& ids() const { return ids_; }

    void sort_by_id() {
        std::vector<int> order(ids_.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        std::sort(order.begin(), order.end(),
                  [&](int a, int b) { return ids_[static_cast<std::size_t>(a)] < ids_[static_cast<std::size_t>(b)]; });
        std::vector<std::int64_t> ids;
        std::vector<Eigen::VectorXd> rows;
        ids.reserve(ids_.size());
        rows.reserve(rows_.size());
        for (int i : order) {
            ids.push_back(ids_[static_cast<std::size_t>(i)]);
            rows.push_back(rows_[static_cast<std::size_t>(i)]);
        }
        ids_ = std::move(ids);
        rows_ = std::move(rows);
        index_.clear();
        for (std::size_t i = 0; i < ids_.size(); ++i) index_.emplace(ids_[i], static_cast<int>(i));
    }

    bool operator==(const EmbeddingTable& o) const {
        if (dim != o.dim || ids_ != o.ids_) return false;
        for (std::size_t i = 0; i < rows_.size(); ++i)
            if (rows_[i] != o.rows_[i]) return false;
        return true;
    }

private:
    std::vector<std::int64_t> ids_;
    std::vector<Eigen::VectorXd> rows_;
    std::unordered_map<std::int64_t, int> index_;
};

// A description-level query: one entity may own several instances, and an
// instance may carry a hint naming the target its description was written
// about (context-split construction).
struct QueryInstance {
    std::int64_t instance_id = 0;
    EntityId entity_id = 0;
    Direction s = Direction::TcmToWm;
    std::string description;
    EntityId hint_target = -1;  // <0 means unhinted

    bool hinted() const { return hint_target >= 0; }

    bool operator==(const QueryInstance& o) const {
        return instance_id == o.instance_id && entity_id == o.entity_id && s == o.s &&
               description == o.description && hint_target == o.hint_target;
    }
};

enum class Split : int { Train = 0, Val = 1, Test = 2 };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        default: return "test";
    }
}

inline Split split_from_name(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    fail(errkind::validation, "unknown split label '" + s + "'");
}

// Pair-level split labels, aligned with AnchorSet::pairs.
struct SplitAssignment {
    std::vector<Split> label;

    bool operator==(const SplitAssignment& o) const { return label == o.label; }
};

// 60/20/20 (or caller-specified) partition of anchor pairs, deterministic per
// seed. Counts are floor(ratio*N) with the remainder assigned to test.
inline SplitAssignment split_anchors(const AnchorSet& anchors, const std::array<double, 3>& ratios,
                                     std::uint64_t seed) {
    const std::size_t n = anchors.size();
    require(n >= 3, errkind::insufficient_data,
            "need at least 3 anchor pairs to split, got " + std::to_string(n));
    double sum = ratios[0] + ratios[1] + ratios[2];
    require(std::abs(sum - 1.0) < 1e-9, errkind::invalid_argument,
            "split ratios must sum to 1");
    for (double r : ratios)
        require(r >= 0.0, errkind::invalid_argument, "split ratios must be non-negative");

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng = substream(seed, "split");
    shuffle_inplace(order, rng);

    const std::size_t n_train = static_cast<std::size_t>(ratios[0] * static_cast<double>(n));
    const std::size_t n_val = static_cast<std::size_t>(ratios[1] * static_cast<double>(n));

    SplitAssignment out;
    out.label.assign(n, Split::Test);
    for (std::size_t i = 0; i < n; ++i) {
        if (i < n_train)
            out.label[order[i]] = Split::Train;
        else if (i < n_train + n_val)
            out.label[order[i]] = Split::Val;
    }
    return out;
}

// ---------------------------------------------------------------------------
// DatasetBundle: everything one experiment consumes.
// ---------------------------------------------------------------------------
class DatasetBundle {
public:
    Graph tcm, wm;
    AnchorSet anchors;
    CompatTable compat;
    EmbeddingTable query_emb, tcm_emb, wm_emb;
    std::vector<QueryInstance> queries;
    SplitAssignment splits;

    const Graph& graph(Side s) const { return s == Side::TCM ? tcm : wm; }
    Graph& graph(Side s) { return s == Side::TCM ? tcm : wm; }
    const EmbeddingTable& entity_emb(Side s) const { return s == Side::TCM ? tcm_emb : wm_emb; }

    // Counterparts of v under s, restricted to pairs labeled `split`;
    // nullopt split means the global pool.
    std::vector<EntityId> pool_of(EntityId v, Direction s, std::optional<Split> split) const {
        if (!split) return anchors.pool(v, s);
        std::vector<EntityId> out;
        for (std::size_t i = 0; i < anchors.pairs.size(); ++i) {
            if (splits.label[i] != *split) continue;
            const auto& [t, w] = anchors.pairs[i];
            if (s == Direction::TcmToWm && t == v) out.push_back(w);
            if (s == Direction::WmToTcm && w == v) out.push_back(t);
        }
        std::sort(out.begin(), out.end());
        return out;
    }

    std::vector<std::pair<EntityId, EntityId>> pairs_of(Split split) const {
        std::vector<std::pair<EntityId, EntityId>> out;
        for (std::size_t i = 0; i < anchors.pairs.size(); ++i)
            if (splits.label[i] == split) out.push_back(anchors.pairs[i]);
        return out;
    }

    // Query instances of one entity under one direction, in instance-id order.
    std::vector<const QueryInstance*> instances_of(EntityId v, Direction s) const {
        std::vector<const QueryInstance*> out;
        for (const auto& q : queries)
            if (q.entity_id == v && q.s == s) out.push_back(&q);
        std::sort(out.begin(), out.end(),
                  [](const QueryInstance* a, const QueryInstance* b) { return a->instance_id < b->instance_id; });
        return out;
    }

    const QueryInstance& instance(std::int64_t instance_id) const {
        auto it = instance_index_.find(instance_id);
        require(it != instance_index_.end(), errkind::unknown_id,
                "no query instance " + std::to_string(instance_id));
        return queries[static_cast<std::size_t>(it->second)];
    }

    void freeze() {
        tcm.freeze();
        wm.freeze();
        anchors.freeze();
        instance_index_.clear();
        for (std::size_t i = 0; i < queries.size(); ++i)
            instance_index_.emplace(queries[i].instance_id, static_cast<int>(i));
        validate();
    }

    void validate() const {
        require(tcm.side == Side::TCM && wm.side == Side::WM, errkind::validation,
                "bundle graph sides are mislabeled");
        for (const auto& [t, w] : anchors.pairs) {
            require(tcm.contains(t), errkind::unknown_id,
                    "anchor references unknown TCM entity " + std::to_string(t));
            require(wm.contains(w), errkind::unknown_id,
                    "anchor references unknown WM entity " + std::to_string(w));
        }
        for (Side side : {Side::TCM, Side::WM}) {
            const auto& g = graph(side);
            const auto& emb = entity_emb(side);
            for (const auto& e : g.entities)
                require(emb.has(e.id), errkind::missing_row,
                        std::string("entity ") + std::to_string(e.id) + " on side " + side_name(side) +
                            " has no embedding row");
            for (std::int64_t id : emb.ids())
                require(g.contains(id), errkind::unknown_id,
                        std::string("embedding row ") + std::to_string(id) + " on side " + side_name(side) +
                            " references no entity");
        }
        std::set<std::int64_t> instance_ids;
        for (const auto& q : queries) {
            require(instance_ids.insert(q.instance_id).second, errkind::validation,
                    "duplicate query instance id " + std::to_string(q.instance_id));
            const Graph& src = graph(source_side(q.s));
            require(src.contains(q.entity_id), errkind::unknown_id,
                    "query instance " + std::to_string(q.instance_id) + " references entity " +
                        std::to_string(q.entity_id) + " missing from the source side");
            require(!q.description.empty(), errkind::validation,
                    "query instance " + std::to_string(q.instance_id) + " has empty description");
            require(query_emb.has(q.instance_id), errkind::missing_row,
                    "query instance " + std::to_string(q.instance_id) + " has no embedding row");
            if (q.hinted())
                require(graph(target_side(q.s)).contains(q.hint_target), errkind::unknown_id,
                        "query instance " + std::to_string(q.instance_id) + " hints unknown target " +
                            std::to_string(q.hint_target));
        }
        for (std::int64_t id : query_emb.ids())
            require(instance_ids.count(id) != 0, errkind::unknown_id,
                    "query embedding row " + std::to_string(id) + " references no query instance");
        if (!splits.label.empty())
            require(splits.label.size() == anchors.pairs.size(), errkind::validation,
                    "split assignment size differs from anchor count");
    }

    bool operator==(const DatasetBundle& o) const {
        auto graph_eq = [](const Graph& a, const Graph& b) {
            if (a.side != b.side || a.entities.size() != b.entities.size() || a.edges != b.edges)
                return false;
            for (std::size_t i = 0; i < a.entities.size(); ++i) {
                const auto& x = a.entities[i];
                const auto& y = b.entities[i];
                if (x.id != y.id || x.type_tag != y.type_tag || x.name != y.name ||
                    x.description != y.description)
                    return false;
            }
            return true;
        };
        return graph_eq(tcm, o.tcm) && graph_eq(wm, o.wm) && anchors.pairs == o.anchors.pairs &&
               compat.rows() == o.compat.rows() && query_emb == o.query_emb &&
               tcm_emb == o.tcm_emb && wm_emb == o.wm_emb && queries == o.queries &&
               splits == o.splits;
    }

private:
    std::unordered_map<std::int64_t, int> instance_index_;
};

// ---------------------------------------------------------------------------
// File formats.
//   <side>.graph.txt : "side TCM" header, E/L lines
//   anchors.tsv      : tcm_id \t wm_id
//   compat.tsv       : src_type \t tgt_type
//   queries.tsv      : instance_id \t entity_id \t direction \t description [\t hint]
//   *.emb            : magic, u32 dim, u64 count, (i64 id, f64*dim) records
//   *.emb.txt        : "dim <d>" header, "<id>\t<c0> <c1> ..." rows
//   splits.tsv       : tcm_id \t wm_id \t {train|val|test}
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find('\t', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline std::int64_t parse_int(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        std::int64_t v = std::stoll(s, &used);
        require(used == s.size(), errkind::validation, "trailing characters in " + what + " '" + s + "'");
        return v;
    } catch (const Error&) {
        throw;
    } catch (const std::exception&) {
        fail(errkind::validation, "cannot parse " + what + " from '" + s + "'");
    }
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::ifstream open_in(const std::filesystem::path& p, std::ios::openmode mode = std::ios::in) {
    std::ifstream f(p, mode);
    require(f.good(), errkind::io, "cannot open " + p.string());
    return f;
}

inline std::ofstream open_out(const std::filesystem::path& p, std::ios::openmode mode = std::ios::out) {
    std::ofstream f(p, mode);
    require(f.good(), errkind::io, "cannot write " + p.string());
    return f;
}

}  // namespace detail

inline Graph load_graph(const std::filesystem::path& path) {
    auto f = detail::open_in(path);
    Graph g;
    std::string line;
    require(static_cast<bool>(std::getline(f, line)), errkind::io, "empty graph file " + path.string());
    {
        std::istringstream head(line);
        std::string kw, side;
        head >> kw >> side;
        require(kw == "side" && (side == "TCM" || side == "WM"), errkind::validation,
                "bad graph header '" + line + "' in " + path.string());
        g.side = side == "TCM" ? Side::TCM : Side::WM;
    }
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        if (line[0] == 'E') {
            // E <id> <type_tag> <name>\t<description>
            std::size_t tab = line.find('\t');
            require(tab != std::string::npos, errkind::validation,
                    "entity line without description tab: '" + line + "'");
            std::istringstream head(line.substr(0, tab));
            std::string kw, tag;
            std::int64_t id = 0;
            head >> kw >> id >> tag;
            std::string name;
            std::getline(head >> std::ws, name);
            Entity e;
            e.id = id;
            e.side = g.side;
            e.type_tag = tag;
            e.name = name;
            e.description = line.substr(tab + 1);
            g.entities.push_back(std::move(e));
        } else if (line[0] == 'L') {
            std::istringstream body(line);
            std::string kw;
            std::int64_t a = 0, b = 0;
            body >> kw >> a >> b;
            g.edges.emplace_back(a, b);
        } else {
            fail(errkind::validation, "unknown graph line '" + line + "' in " + path.string());
        }
    }
    g.freeze();
    return g;
}

inline void save_graph(const Graph& g, const std::filesystem::path& path) {
    auto f = detail::open_out(path);
    f << "side " << side_name(g.side) << "\n";
    for (const auto& e : g.entities)
        f << "E " << e.id << ' ' << e.type_tag << ' ' << e.name << '\t' << e.description << "\n";
    for (const auto& [a, b] : g.edges) f << "L " << a << ' ' << b << "\n";
}

inline EmbeddingTable load_embeddings_binary(const std::filesystem::path& path) {
    auto f = detail::open_in(path, std::ios::in | std::ios::binary);
    char magic[8];
    f.read(magic, 8);
    require(f.good() && std::memcmp(magic, "QCEAEMB1", 8) == 0, errkind::io,
            "bad embedding magic in " + path.string());
    std::uint32_t dim = 0;
    std::uint64_t count = 0;
    f.read(reinterpret_cast<char*>(&dim), sizeof dim);
    f.read(reinterpret_cast<char*>(&count), sizeof count);
    require(f.good() && dim > 0, errkind::io, "bad embedding header in " + path.string());
    EmbeddingTable t;
    t.dim = static_cast<int>(dim);
    Eigen::VectorXd v(static_cast<Eigen::Index>(dim));
    for (std::uint64_t i = 0; i < count; ++i) {
        std::int64_t id = 0;
        f.read(reinterpret_cast<char*>(&id), sizeof id);
        f.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(sizeof(double) * dim));
        require(f.good(), errkind::io, "truncated embedding file " + path.string());
        t.add(id, v);
    }
    return t;
}

inline void save_embeddings_binary(const EmbeddingTable& t, const std::filesystem::path& path) {
    auto f = detail::open_out(path, std::ios::out | std::ios::binary);
    f.write("QCEAEMB1", 8);
    const std::uint32_t dim = static_cast<std::uint32_t>(t.dim);
    const std::uint64_t count = t.size();
    f.write(reinterpret_cast<const char*>(&dim), sizeof dim);
    f.write(reinterpret_cast<const char*>(&count), sizeof count);
    for (std::int64_t id : t.ids()) {
        f.write(reinterpret_cast<const char*>(&id), sizeof id);
        const Eigen::VectorXd& v = t.row(id);
        f.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(t.dim)));
    }
}

inline EmbeddingTable load_embeddings_text(const std::filesystem::path& path) {
    auto f = detail::open_in(path);
    std::string line;
    require(static_cast<bool>(std::getline(f, line)), errkind::io, "empty embedding file " + path.string());
    std::istringstream head(line);
    std::string kw;
    int dim = 0;
    head >> kw >> dim;
    require(kw == "dim" && dim > 0, errkind::validation, "bad embedding header '" + line + "'");
    EmbeddingTable t;
    t.dim = dim;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        auto fields = detail::split_tabs(line);
        require(fields.size() == 2, errkind::validation, "bad embedding row '" + line + "'");
        std::int64_t id = detail::parse_int(fields[0], "embedding id");
        std::istringstream comps(fields[1]);
        Eigen::VectorXd v(dim);
        for (int i = 0; i < dim; ++i)
            require(static_cast<bool>(comps >> v[i]), errkind::dimension_mismatch,
                    "embedding row " + std::to_string(id) + " shorter than dim " + std::to_string(dim));
        double extra;
        require(!(comps >> extra), errkind::dimension_mismatch,
                "embedding row " + std::to_string(id) + " longer than dim " + std::to_string(dim));
        t.add(id, v);
    }
    return t;
}

inline void save_embeddings_text(const EmbeddingTable& t, const std::filesystem::path& path) {
    auto f = detail::open_out(path);
    f << "dim " << t.dim << "\n";
    for (std::int64_t id : t.ids()) {
        const Eigen::VectorXd& v = t.row(id);
        f << id << '\t';
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            if (i) f << ' ';
            f << detail::format_double(v[i]);
        }
        f << "\n";
    }
}

struct BundlePaths {
    std::filesystem::path dir;
    std::filesystem::path tcm_graph() const { return dir / "tcm.graph.txt"; }
    std::filesystem::path wm_graph() const { return dir / "wm.graph.txt"; }
    std::filesystem::path anchors() const { return dir / "anchors.tsv"; }
    std::filesystem::path compat() const { return dir / "compat.tsv"; }
    std::filesystem::path queries() const { return dir / "queries.tsv"; }
    std::filesystem::path query_emb() const { return dir / "query.emb"; }
    std::filesystem::path tcm_emb() const { return dir / "tcm.emb"; }
    std::filesystem::path wm_emb() const { return dir / "wm.emb"; }
    std::filesystem::path splits() const { return dir / "splits.tsv"; }
};

inline DatasetBundle load_bundle(const std::filesystem::path& dir) {
    BundlePaths p{dir};
    DatasetBundle b;
    b.tcm = load_graph(p.tcm_graph());
    b.wm = load_graph(p.wm_graph());

    {
        auto f = detail::open_in(p.anchors());
        std::string line;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            auto fields = detail::split_tabs(line);
            require(fields.size() == 2, errkind::validation, "bad anchor line '" + line + "'");
            b.anchors.pairs.emplace_back(detail::parse_int(fields[0], "tcm anchor id"),
                                         detail::parse_int(fields[1], "wm anchor id"));
        }
    }
    {
        auto f = detail::open_in(p.compat());
        std::string line;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            auto fields = detail::split_tabs(line);
            require(fields.size() == 2, errkind::validation, "bad compat line '" + line + "'");
            b.compat.add(fields[0], fields[1]);
        }
    }
    {
        auto f = detail::open_in(p.queries());
        std::string line;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            auto fields = detail::split_tabs(line);
            require(fields.size() == 4 || fields.size() == 5, errkind::validation,
                    "bad query line '" + line + "'");
            QueryInstance q;
            q.instance_id = detail::parse_int(fields[0], "query instance id");
            q.entity_id = detail::parse_int(fields[1], "query entity id");
            std::int64_t s = detail::parse_int(fields[2], "query direction");
            require(s == 0 || s == 1, errkind::validation,
                    "query direction must be 0 or 1, got " + fields[2]);
            q.s = static_cast<Direction>(s);
            q.description = fields[3];
            if (fields.size() == 5) q.hint_target = detail::parse_int(fields[4], "query hint");
            b.queries.push_back(std::move(q));
        }
    }
    b.query_emb = load_embeddings_binary(p.query_emb());
    b.tcm_emb = load_embeddings_binary(p.tcm_emb());
    b.wm_emb = load_embeddings_binary(p.wm_emb());

    if (std::filesystem::exists(p.splits())) {
        std::map<std::pair<EntityId, EntityId>, Split> by_pair;
        auto f = detail::open_in(p.splits());
        std::string line;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            auto fields = detail::split_tabs(line);
            require(fields.size() == 3, errkind::validation, "bad split line '" + line + "'");
            by_pair[{detail::parse_int(fields[0], "split tcm id"),
                     detail::parse_int(fields[1], "split wm id")}] = split_from_name(fields[2]);
        }
        require(by_pair.size() == b.anchors.pairs.size(), errkind::validation,
                "split file does not cover the anchor set exactly");
        for (const auto& pr : b.anchors.pairs) {
            auto it = by_pair.find(pr);
            require(it != by_pair.end(), errkind::validation,
                    "anchor pair (" + std::to_string(pr.first) + "," + std::to_string(pr.second) +
                        ") missing from split file");
            b.splits.label.push_back(it->second);
        }
    }

    b.freeze();
    return b;
}

inline void save_bundle(const DatasetBundle& b, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    BundlePaths p{dir};
    save_graph(b.tcm, p.tcm_graph());
    save_graph(b.wm, p.wm_graph());
    {
        auto f = detail::open_out(p.anchors());
        for (const auto& [t, w] : b.anchors.pairs) f << t << '\t' << w << "\n";
    }
    {
        auto f = detail::open_out(p.compat());
        for (const auto& [src, tgts] : b.compat.rows())
            for (const auto& t : tgts) f << src << '\t' << t << "\n";
    }
    {
        auto f = detail::open_out(p.queries());
        for (const auto& q : b.queries) {
            f << q.instance_id << '\t' << q.entity_id << '\t' << dir_index(q.s) << '\t' << q.description;
            if (q.hinted()) f << '\t' << q.hint_target;
            f << "\n";
        }
    }
    save_embeddings_binary(b.query_emb, p.query_emb());
    save_embeddings_binary(b.tcm_emb, p.tcm_emb());
    save_embeddings_binary(b.wm_emb, p.wm_emb());
    if (!b.splits.label.empty()) {
        auto f = detail::open_out(p.splits());
        for (std::size_t i = 0; i < b.anchors.pairs.size(); ++i)
            f << b.anchors.pairs[i].first << '\t' << b.anchors.pairs[i].second << '\t'
              << split_name(b.splits.label[i]) << "\n";
    }
}

}  // namespace qcea
