#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qcea/bundle.hpp"
#include "qcea/common.hpp"
#include "qcea/graph.hpp"

namespace qcea {

enum class Activation : int { ReLU = 0, Identity = 1 };

struct ModelConfig {
    int d = 256;  // shared alignment dimension
    int d_q = 0;
    int d_T = 0;
    int d_W = 0;
    int gcn_layers = 2;
    int rank_s = 16;
    int rank_o = 128;
    int rank_i = 128;
    Activation activation = Activation::ReLU;

    static ModelConfig for_bundle(const DatasetBundle& b, int d, int rank_s, int rank_o, int rank_i,
                                  int gcn_layers = 2) {
        ModelConfig c;
        c.d = d;
        c.d_q = b.query_emb.dim;
        c.d_T = b.tcm_emb.dim;
        c.d_W = b.wm_emb.dim;
        c.gcn_layers = gcn_layers;
        c.rank_s = rank_s;
        c.rank_o = rank_o;
        c.rank_i = rank_i;
        return c;
    }
};

struct TensorRef {
    std::string name;
    Eigen::MatrixXd* value;
};

struct TensorConstRef {
    std::string name;
    const Eigen::MatrixXd* value;
};

// All trainable tensors of the ranking model. `alpha` (the gate logit) is kept
// as a 1x1 tensor so every parameter flows through the same optimizer,
// clipping, checkpoint and finite-difference machinery.
struct ModelParams {
    ModelConfig cfg;

    Eigen::MatrixXd W_q;                       // d x d_q
    std::array<Eigen::MatrixXd, 2> P_dir;      // d x d, indexed by direction
    Eigen::MatrixXd W_tcm;                     // d x d_T
    Eigen::MatrixXd W_wm;                      // d x d_W
    std::vector<Eigen::MatrixXd> gcn;          // per layer, d x d
    Eigen::MatrixXd U_s;                       // 2 x R_s
    Eigen::MatrixXd U_o;                       // d x R_o
    Eigen::MatrixXd U_i;                       // d x R_i
    std::vector<Eigen::MatrixXd> core;         // R_s slices, R_o x R_i
    Eigen::MatrixXd R_res;                     // d x d
    Eigen::MatrixXd alpha_t;                   // 1 x 1 gate logit

    double alpha() const { return alpha_t(0, 0); }

    const Eigen::MatrixXd& input_proj(Side s) const { return s == Side::TCM ? W_tcm : W_wm; }

    std::vector<TensorRef> tensors() {
        std::vector<TensorRef> out;
        out.push_back({"W_q", &W_q});
        out.push_back({"P_0", &P_dir[0]});
        out.push_back({"P_1", &P_dir[1]});
        out.push_back({"W_TCM", &W_tcm});
        out.push_back({"W_WM", &W_wm});
        for (std::size_t l = 0; l < gcn.size(); ++l)
            out.push_back({"gcn_" + std::to_string(l), &gcn[l]});
        out.push_back({"U_s", &U_s});
        out.push_back({"U_o", &U_o});
        out.push_back({"U_i", &U_i});
        for (std::size_t r = 0; r < core.size(); ++r)
            out.push_back({"core_" + std::to_string(r), &core[r]});
        out.push_back({"R_res", &R_res});
        out.push_back({"alpha", &alpha_t});
        return out;
    }

    std::vector<TensorConstRef> tensors() const {
        auto refs = const_cast<ModelParams*>(this)->tensors();
        std::vector<TensorConstRef> out;
        out.reserve(refs.size());
        for (auto& r : refs) out.push_back({r.name, r.value});
        return out;
    }

    std::int64_t total_size() const {
        std::int64_t n = 0;
        for (const auto& t : tensors()) n += t.value->size();
        return n;
    }

    double sum_squares() const {
        double s = 0.0;
        for (const auto& t : tensors()) s += t.value->squaredNorm();
        return s;
    }

    void check_finite(const char* when) const {
        for (const auto& t : tensors())
            require(t.value->allFinite(), errkind::numeric_failure,
                    std::string("non-finite entries in ") + t.name + " " + when);
    }
};

// Shape-matched gradient slots, one tensor per parameter tensor.
struct GradientSet {
    ModelParams slots;

    static GradientSet zeros_like(const ModelParams& p) {
        GradientSet g;
        g.slots = p;
        for (auto& t : g.slots.tensors()) t.value->setZero();
        return g;
    }
};

namespace detail {

inline void glorot_fill(Eigen::MatrixXd& m, Rng& rng) {
    const double bound =
        std::sqrt(6.0 / (static_cast<double>(m.rows()) + static_cast<double>(m.cols())));
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = uniform_real(rng, -bound, bound);
}

}  // namespace detail

// Glorot-style scaled-uniform init for every matrix; alpha = 0 (gate 0.5).
inline ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
    require(cfg.d > 0 && cfg.d_q > 0 && cfg.d_T > 0 && cfg.d_W > 0, errkind::invalid_argument,
            "model dimensions must be positive");
    require(cfg.gcn_layers >= 1 && cfg.rank_s >= 1 && cfg.rank_o >= 1 && cfg.rank_i >= 1,
            errkind::invalid_argument, "layer count and ranks must be positive");
    ModelParams p;
    p.cfg = cfg;
    p.W_q.resize(cfg.d, cfg.d_q);
    p.P_dir[0].resize(cfg.d, cfg.d);
    p.P_dir[1].resize(cfg.d, cfg.d);
    p.W_tcm.resize(cfg.d, cfg.d_T);
    p.W_wm.resize(cfg.d, cfg.d_W);
    p.gcn.assign(static_cast<std::size_t>(cfg.gcn_layers), Eigen::MatrixXd(cfg.d, cfg.d));
    p.U_s.resize(2, cfg.rank_s);
    p.U_o.resize(cfg.d, cfg.rank_o);
    p.U_i.resize(cfg.d, cfg.rank_i);
    p.core.assign(static_cast<std::size_t>(cfg.rank_s), Eigen::MatrixXd(cfg.rank_o, cfg.rank_i));
    p.R_res.resize(cfg.d, cfg.d);
    p.alpha_t.resize(1, 1);

    Rng rng = substream(seed, "init");
    for (auto& t : p.tensors()) {
        if (t.name == "alpha")
            t.value->setZero();
        else
            detail::glorot_fill(*t.value, rng);
    }
    return p;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Eigen::VectorXd l2_normalize(const Eigen::VectorXd& v) {
    const double n = v.norm();
    require(n > 1e-12, errkind::degenerate_norm,
            "vector collapsed to zero before normalization");
    return v / n;
}

// q_v = Norm(P_s W_q z_v)
inline Eigen::VectorXd encode_query(const ModelParams& p, const Eigen::VectorXd& z, Direction s) {
    require(z.size() == p.cfg.d_q, errkind::dimension_mismatch,
            "query embedding has length " + std::to_string(z.size()) + ", expected " +
                std::to_string(p.cfg.d_q));
    require(z.allFinite(), errkind::validation, "query embedding has non-finite components");
    return l2_normalize(p.P_dir[static_cast<std::size_t>(dir_index(s))] * (p.W_q * z));
}

// One side's fixed inputs for graph encoding: normalized adjacency plus the
// raw embedding matrix in graph entity order.
struct SideInputs {
    Side side = Side::TCM;
    NormalizedAdjacency adj;
    Eigen::MatrixXd x;  // n x d_side
    std::vector<EntityId> ids;

    int row_of(EntityId id) const {
        auto it = index.find(id);
        require(it != index.end(), errkind::unknown_id,
                "entity " + std::to_string(id) + " not present in side inputs");
        return it->second;
    }

    std::unordered_map<EntityId, int> index;
};

inline SideInputs build_side_inputs(const DatasetBundle& b, Side side) {
    const Graph& g = b.graph(side);
    const EmbeddingTable& emb = b.entity_emb(side);
    SideInputs s;
    s.side = side;
    s.adj = build_adjacency(g);
    s.x.resize(static_cast<Eigen::Index>(g.size()), emb.dim);
    s.ids.reserve(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const EntityId id = g.entities[i].id;
        s.ids.push_back(id);
        s.index.emplace(id, static_cast<int>(i));
        s.x.row(static_cast<Eigen::Index>(i)) = emb.row(id).transpose();
    }
    return s;
}

inline double activate(double z, Activation a) {
    return a == Activation::ReLU ? (z > 0.0 ? z : 0.0) : z;
}

// Graph-aware entity matrix (Eqs. 5-7): row-normalized input projection, then
// gcn_layers of A_hat * H * theta_l with activation between layers (shared
// theta across sides, none after the last layer).
inline Eigen::MatrixXd encode_entities(const ModelParams& p, const SideInputs& in) {
    const Eigen::MatrixXd& w = p.input_proj(in.side);
    require(in.x.cols() == w.cols(), errkind::dimension_mismatch,
            "side embedding dim mismatch for " + std::string(side_name(in.side)));
    Eigen::MatrixXd h = in.x * w.transpose();
    for (Eigen::Index r = 0; r < h.rows(); ++r) {
        const double n = h.row(r).norm();
        require(n > 1e-12, errkind::degenerate_norm,
                "entity " + std::to_string(in.ids[static_cast<std::size_t>(r)]) +
                    " projected to zero");
        h.row(r) /= n;
    }
    const int layers = static_cast<int>(p.gcn.size());
    for (int l = 0; l < layers; ++l) {
        Eigen::MatrixXd z = in.adj.multiply(h) * p.gcn[static_cast<std::size_t>(l)];
        if (l + 1 < layers && p.cfg.activation == Activation::ReLU) z = z.cwiseMax(0.0);
        h = std::move(z);
    }
    return h;
}

inline Eigen::MatrixXd encode_entities(const ModelParams& p, const DatasetBundle& b, Side side) {
    return encode_entities(p, build_side_inputs(b, side));
}

// Direction-conditioned core mix: C_s = sum_r U_s[s,r] G_r.
inline Eigen::MatrixXd core_mix(const ModelParams& p, Direction s) {
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(p.cfg.rank_o, p.cfg.rank_i);
    for (int r = 0; r < p.cfg.rank_s; ++r)
        c += p.U_s(dir_index(s), r) * p.core[static_cast<std::size_t>(r)];
    return c;
}

// Materialized W^(s) = U_o (sum_r U_s[s,r] G_r) U_i^T (Eqs. 10-11).
inline Eigen::MatrixXd tucker_matrix(const ModelParams& p, Direction s) {
    return p.U_o * core_mix(p, s) * p.U_i.transpose();
}

struct TuckerParts {
    Eigen::VectorXd h_tucker;
    Eigen::VectorXd h_res;
    Eigen::VectorXd blended;  // pre-normalization
    double gate = 0.5;        // sigma(alpha), weight of the residual branch
};

// Sum-form Tucker branch (Eq. 9), residual branch (Eq. 12) and gated blend
// (Eq. 13) before normalization.
inline TuckerParts tucker_parts(const ModelParams& p, const Eigen::VectorXd& g, Direction s) {
    require(g.size() == p.cfg.d, errkind::dimension_mismatch,
            "target embedding has length " + std::to_string(g.size()) + ", expected " +
                std::to_string(p.cfg.d));
    TuckerParts out;
    const Eigen::VectorXd a = p.U_i.transpose() * g;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(p.cfg.rank_o);
    for (int r = 0; r < p.cfg.rank_s; ++r)
        b += p.U_s(dir_index(s), r) * (p.core[static_cast<std::size_t>(r)] * a);
    out.h_tucker = p.U_o * b;
    out.h_res = p.R_res * g;
    out.gate = sigmoid(p.alpha());
    out.blended = (1.0 - out.gate) * out.h_tucker + out.gate * out.h_res;
    return out;
}

inline Eigen::VectorXd tucker_project(const ModelParams& p, const Eigen::VectorXd& g, Direction s) {
    return l2_normalize(tucker_parts(p, g, s).blended);
}

// Eq. 14; cosine similarity for unit inputs.
inline double score(const Eigen::VectorXd& q, const Eigen::VectorXd& h) { return q.dot(h); }

// ---------------------------------------------------------------------------
// Checkpoint envelope, shared with the baselines: versioned binary holding a
// method tag, integer config fields and named tensors. Bit-exact round-trip.
// ---------------------------------------------------------------------------

struct CheckpointEnvelope {
    std::string method;
    std::vector<std::pair<std::string, std::int64_t>> ints;
    std::vector<std::pair<std::string, Eigen::MatrixXd>> tensors;

    std::int64_t int_field(const std::string& name) const {
        for (const auto& [k, v] : ints)
            if (k == name) return v;
        fail(errkind::io, "checkpoint missing int field '" + name + "'");
    }

    const Eigen::MatrixXd& tensor(const std::string& name) const {
        for (const auto& [k, v] : tensors)
            if (k == name) return v;
        fail(errkind::io, "checkpoint missing tensor '" + name + "'");
    }
};

namespace detail {

inline void write_string(std::ofstream& f, const std::string& s) {
    const std::uint32_t n = static_cast<std::uint32_t>(s.size());
    f.write(reinterpret_cast<const char*>(&n), sizeof n);
    f.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::ifstream& f) {
    std::uint32_t n = 0;
    f.read(reinterpret_cast<char*>(&n), sizeof n);
    require(f.good() && n < (1u << 20), errkind::io, "corrupt checkpoint string");
    std::string s(n, '\0');
    f.read(s.data(), n);
    require(f.good(), errkind::io, "truncated checkpoint string");
    return s;
}

}  // namespace detail

inline void save_envelope(const CheckpointEnvelope& env, const std::filesystem::path& path) {
    auto f = detail::open_out(path, std::ios::out | std::ios::binary);
    f.write("QCEACKP1", 8);
    const std::uint32_t version = 1;
    f.write(reinterpret_cast<const char*>(&version), sizeof version);
    detail::write_string(f, env.method);
    const std::uint32_t ni = static_cast<std::uint32_t>(env.ints.size());
    f.write(reinterpret_cast<const char*>(&ni), sizeof ni);
    for (const auto& [k, v] : env.ints) {
        detail::write_string(f, k);
        f.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
    const std::uint32_t nt = static_cast<std::uint32_t>(env.tensors.size());
    f.write(reinterpret_cast<const char*>(&nt), sizeof nt);
    for (const auto& [k, m] : env.tensors) {
        detail::write_string(f, k);
        const std::int64_t rows = m.rows(), cols = m.cols();
        f.write(reinterpret_cast<const char*>(&rows), sizeof rows);
        f.write(reinterpret_cast<const char*>(&cols), sizeof cols);
        f.write(reinterpret_cast<const char*>(m.data()),
                static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
    }
}

inline CheckpointEnvelope load_envelope(const std::filesystem::path& path) {
    auto f = detail::open_in(path, std::ios::in | std::ios::binary);
    char magic[8];
    f.read(magic, 8);
    require(f.good() && std::memcmp(magic, "QCEACKP1", 8) == 0, errkind::io,
            "bad checkpoint magic in " + path.string());
    std::uint32_t version = 0;
    f.read(reinterpret_cast<char*>(&version), sizeof version);
    require(version == 1, errkind::io, "unsupported checkpoint version");
    CheckpointEnvelope env;
    env.method = detail::read_string(f);
    std::uint32_t ni = 0;
    f.read(reinterpret_cast<char*>(&ni), sizeof ni);
    for (std::uint32_t i = 0; i < ni; ++i) {
        std::string k = detail::read_string(f);
        std::int64_t v = 0;
        f.read(reinterpret_cast<char*>(&v), sizeof v);
        env.ints.emplace_back(std::move(k), v);
    }
    std::uint32_t nt = 0;
    f.read(reinterpret_cast<char*>(&nt), sizeof nt);
    for (std::uint32_t i = 0; i < nt; ++i) {
        std::string k = detail::read_string(f);
        std::int64_t rows = 0, cols = 0;
        f.read(reinterpret_cast<char*>(&rows), sizeof rows);
        f.read(reinterpret_cast<char*>(&cols), sizeof cols);
        require(f.good() && rows >= 0 && cols >= 0, errkind::io, "corrupt checkpoint tensor header");
        Eigen::MatrixXd m(rows, cols);
        f.read(reinterpret_cast<char*>(m.data()),
               static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
        require(f.good(), errkind::io, "truncated checkpoint tensor " + k);
        env.tensors.emplace_back(std::move(k), std::move(m));
    }
    return env;
}

inline CheckpointEnvelope to_envelope(const ModelParams& p) {
    CheckpointEnvelope env;
    env.method = "qcea";
    env.ints = {{"d", p.cfg.d},
                {"d_q", p.cfg.d_q},
                {"d_T", p.cfg.d_T},
                {"d_W", p.cfg.d_W},
                {"gcn_layers", p.cfg.gcn_layers},
                {"rank_s", p.cfg.rank_s},
                {"rank_o", p.cfg.rank_o},
                {"rank_i", p.cfg.rank_i},
                {"activation", static_cast<int>(p.cfg.activation)}};
    for (const auto& t : p.tensors()) env.tensors.emplace_back(t.name, *t.value);
    return env;
}

inline ModelParams params_from_envelope(const CheckpointEnvelope& env) {
    require(env.method == "qcea", errkind::io,
            "checkpoint method is '" + env.method + "', expected 'qcea'");
    ModelConfig cfg;
    cfg.d = static_cast<int>(env.int_field("d"));
    cfg.d_q = static_cast<int>(env.int_field("d_q"));
    cfg.d_T = static_cast<int>(env.int_field("d_T"));
    cfg.d_W = static_cast<int>(env.int_field("d_W"));
    cfg.gcn_layers = static_cast<int>(env.int_field("gcn_layers"));
    cfg.rank_s = static_cast<int>(env.int_field("rank_s"));
    cfg.rank_o = static_cast<int>(env.int_field("rank_o"));
    cfg.rank_i = static_cast<int>(env.int_field("rank_i"));
    cfg.activation = static_cast<Activation>(env.int_field("activation"));
    ModelParams p = init_params(cfg, 0);
    for (auto& t : p.tensors()) {
        const Eigen::MatrixXd& m = env.tensor(t.name);
        require(m.rows() == t.value->rows() && m.cols() == t.value->cols(), errkind::io,
                "checkpoint tensor " + t.name + " has wrong shape");
        *t.value = m;
    }
    return p;
}

inline void save_checkpoint(const ModelParams& p, const std::filesystem::path& path) {
    save_envelope(to_envelope(p), path);
}

inline ModelParams load_checkpoint(const std::filesystem::path& path) {
    return params_from_envelope(load_envelope(path));
}

}  // namespace qcea
