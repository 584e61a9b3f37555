#pragma once

#include <algorithm>
#include <memory>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "qcea/bundle.hpp"
#include "qcea/common.hpp"
#include "qcea/evaluation.hpp"
#include "qcea/model.hpp"
#include "qcea/objective.hpp"
#include "qcea/optimizer.hpp"
#include "qcea/training.hpp"

namespace qcea {

// Source-side inputs for the trainable baselines: description-level query
// embeddings (as the model uses) or the entity embedding (static matching).
enum class SourceInput : int { Query = 0, Entity = 1 };

inline const char* source_input_name(SourceInput s) {
    return s == SourceInput::Query ? "query" : "entity";
}

// ---------------------------------------------------------------------------
// Procrustes: orthogonal map between the two embedding spaces, fit on train
// anchors; nearest-neighbor scoring by cosine after mapping.
// ---------------------------------------------------------------------------

struct ProcrustesModel {
    int d_prime = 0;
    bool has_pca = false;
    Eigen::MatrixXd pca_t;  // d_T x d'
    Eigen::MatrixXd pca_w;  // d_W x d'
    Eigen::MatrixXd W;      // d' x d', maps TCM-projected vectors into WM space
    std::vector<std::string> warnings;

    Eigen::VectorXd project(Side side, const Eigen::VectorXd& x) const {
        if (!has_pca) return x;
        return (side == Side::TCM ? pca_t : pca_w).transpose() * x;
    }

    // Map a projected source vector across systems.
    Eigen::VectorXd map(Direction s, const Eigen::VectorXd& xp) const {
        return s == Direction::TcmToWm ? Eigen::VectorXd(W * xp) : Eigen::VectorXd(W.transpose() * xp);
    }
};

namespace detail {

// Uncentered PCA: top right singular vectors of the stacked embedding rows.
inline Eigen::MatrixXd pca_components(const EmbeddingTable& emb, int d_prime) {
    Eigen::MatrixXd data(static_cast<Eigen::Index>(emb.size()), emb.dim);
    Eigen::Index r = 0;
    for (std::int64_t id : emb.ids()) data.row(r++) = emb.row(id).transpose();
    Eigen::BDCSVD<Eigen::MatrixXd> svd(data, Eigen::ComputeThinV);
    return svd.matrixV().leftCols(d_prime);
}

}  // namespace detail

inline ProcrustesModel fit_procrustes(const DatasetBundle& bundle, Split split = Split::Train) {
    const auto pairs = bundle.pairs_of(split);
    require(!pairs.empty(), errkind::insufficient_data, "no anchor pairs to fit Procrustes on");

    ProcrustesModel m;
    m.d_prime = std::min(bundle.tcm_emb.dim, bundle.wm_emb.dim);
    m.has_pca = bundle.tcm_emb.dim != bundle.wm_emb.dim;
    if (m.has_pca) {
        m.pca_t = detail::pca_components(bundle.tcm_emb, m.d_prime);
        m.pca_w = detail::pca_components(bundle.wm_emb, m.d_prime);
    }
    if (static_cast<int>(pairs.size()) < m.d_prime)
        m.warnings.push_back("only " + std::to_string(pairs.size()) + " anchors for dimension " +
                             std::to_string(m.d_prime));

    Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(m.d_prime, m.d_prime);
    for (const auto& [t, w] : pairs) {
        const Eigen::VectorXd x = m.project(Side::TCM, bundle.tcm_emb.row(t));
        const Eigen::VectorXd y = m.project(Side::WM, bundle.wm_emb.row(w));
        cross += y * x.transpose();
    }
    Eigen::BDCSVD<Eigen::MatrixXd> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const double tol = 1e-12 * svd.singularValues().maxCoeff();
    if (svd.singularValues().minCoeff() <= tol)
        m.warnings.push_back("rank-deficient anchor cross-covariance; solution not unique");
    m.W = svd.matrixU() * svd.matrixV().transpose();
    return m;
}

class ProcrustesScorer : public Scorer {
public:
    ProcrustesScorer(const DatasetBundle& bundle, ProcrustesModel model) : model_(std::move(model)) {
        for (int di = 0; di < 2; ++di) {
            const Side tgt = target_side(static_cast<Direction>(di));
            const EmbeddingTable& emb = bundle.entity_emb(tgt);
            Eigen::MatrixXd h(model_.d_prime, static_cast<Eigen::Index>(emb.size()));
            int col = 0;
            for (std::int64_t id : emb.ids()) {
                Eigen::VectorXd y = model_.project(tgt, emb.row(id));
                const double n = y.norm();
                h.col(col) = n > 0.0 ? Eigen::VectorXd(y / n) : y;
                index_[di].emplace(id, col);
                ++col;
            }
            h_[di] = std::move(h);
        }
    }

    std::string name() const override { return "procrustes"; }

    Eigen::VectorXd score_query(const DatasetBundle& bundle, const QueryInstance& q,
                                const std::vector<EntityId>& candidates) const override {
        const Side src = source_side(q.s);
        Eigen::VectorXd xp = model_.project(src, bundle.entity_emb(src).row(q.entity_id));
        Eigen::VectorXd mapped = model_.map(q.s, xp);
        const double n = mapped.norm();
        if (n > 0.0) mapped /= n;
        const int di = dir_index(q.s);
        Eigen::VectorXd out(static_cast<Eigen::Index>(candidates.size()));
        for (std::size_t i = 0; i < candidates.size(); ++i)
            out[static_cast<Eigen::Index>(i)] = mapped.dot(h_[di].col(index_[di].at(candidates[i])));
        return out;
    }

    const ProcrustesModel& model() const { return model_; }

private:
    ProcrustesModel model_;
    Eigen::MatrixXd h_[2];
    std::unordered_map<EntityId, int> index_[2];
};

// ---------------------------------------------------------------------------
// Text bi-encoder: one linear projection per input family into a shared
// space, cosine scoring. No graph, no direction conditioning.
// ---------------------------------------------------------------------------

struct BiEncoderConfig {
    int d = 64;
    int d_q = 0;
    int d_T = 0;
    int d_W = 0;
    SourceInput source_input = SourceInput::Query;
};

struct BiEncoderParams {
    BiEncoderConfig cfg;
    Eigen::MatrixXd W_query;  // d x d_q, only in query mode
    Eigen::MatrixXd W_t;      // d x d_T
    Eigen::MatrixXd W_w;      // d x d_W

    std::vector<TensorRef> tensors() {
        std::vector<TensorRef> out;
        if (cfg.source_input == SourceInput::Query) out.push_back({"W_query", &W_query});
        out.push_back({"W_t", &W_t});
        out.push_back({"W_w", &W_w});
        return out;
    }
    std::vector<TensorConstRef> tensors() const {
        auto refs = const_cast<BiEncoderParams*>(this)->tensors();
        std::vector<TensorConstRef> out;
        for (auto& r : refs) out.push_back({r.name, r.value});
        return out;
    }
    double sum_squares() const {
        double s = 0.0;
        for (const auto& t : tensors()) s += t.value->squaredNorm();
        return s;
    }

    const Eigen::MatrixXd& side_proj(Side s) const { return s == Side::TCM ? W_t : W_w; }

    // Raw source feature of a query instance under the configured input mode.
    Eigen::VectorXd source_raw(const DatasetBundle& b, const QueryInstance& q) const {
        if (cfg.source_input == SourceInput::Query) return b.query_emb.row(q.instance_id);
        return b.entity_emb(source_side(q.s)).row(q.entity_id);
    }

    const Eigen::MatrixXd& source_proj(Direction s) const {
        if (cfg.source_input == SourceInput::Query) return W_query;
        return side_proj(source_side(s));
    }
};

inline BiEncoderParams init_biencoder(const BiEncoderConfig& cfg, std::uint64_t seed) {
    BiEncoderParams p;
    p.cfg = cfg;
    if (cfg.source_input == SourceInput::Query) p.W_query.resize(cfg.d, cfg.d_q);
    p.W_t.resize(cfg.d, cfg.d_T);
    p.W_w.resize(cfg.d, cfg.d_W);
    Rng rng = substream(seed, "init-biencoder");
    for (auto& t : p.tensors()) detail::glorot_fill(*t.value, rng);
    return p;
}

class BiEncoderScorer : public Scorer {
public:
    BiEncoderScorer(const DatasetBundle& bundle, BiEncoderParams params) : params_(std::move(params)) {
        for (int di = 0; di < 2; ++di) {
            const Side tgt = target_side(static_cast<Direction>(di));
            const EmbeddingTable& emb = bundle.entity_emb(tgt);
            Eigen::MatrixXd h(params_.cfg.d, static_cast<Eigen::Index>(emb.size()));
            int col = 0;
            for (std::int64_t id : emb.ids()) {
                h.col(col) = l2_normalize(params_.side_proj(tgt) * emb.row(id));
                index_[di].emplace(id, col);
                ++col;
            }
            h_[di] = std::move(h);
        }
    }

    std::string name() const override { return "biencoder"; }

    Eigen::VectorXd score_query(const DatasetBundle& bundle, const QueryInstance& q,
                                const std::vector<EntityId>& candidates) const override {
        const Eigen::VectorXd qv =
            l2_normalize(params_.source_proj(q.s) * params_.source_raw(bundle, q));
        const int di = dir_index(q.s);
        Eigen::VectorXd out(static_cast<Eigen::Index>(candidates.size()));
        for (std::size_t i = 0; i < candidates.size(); ++i)
            out[static_cast<Eigen::Index>(i)] = qv.dot(h_[di].col(index_[di].at(candidates[i])));
        return out;
    }

    const BiEncoderParams& params() const { return params_; }

private:
    BiEncoderParams params_;
    Eigen::MatrixXd h_[2];
    std::unordered_map<EntityId, int> index_[2];
};

// ---------------------------------------------------------------------------
// MLP matcher: projected source and target features, two ReLU hidden layers of
// width d over their concatenation, scalar score. The first layer is stored as
// the two halves acting on the source and target parts.
// ---------------------------------------------------------------------------

struct MlpConfig {
    int d = 64;
    int d_q = 0;
    int d_T = 0;
    int d_W = 0;
    SourceInput source_input = SourceInput::Query;
};

struct MlpParams {
    MlpConfig cfg;
    Eigen::MatrixXd W_in_q;  // d x d_q, only in query mode
    Eigen::MatrixXd W_in_t;  // d x d_T
    Eigen::MatrixXd W_in_w;  // d x d_W
    Eigen::MatrixXd W1a, W1b;  // d x d halves of the first layer
    Eigen::MatrixXd b1;        // d x 1
    Eigen::MatrixXd W2;        // d x d
    Eigen::MatrixXd b2;        // d x 1
    Eigen::MatrixXd w3;        // 1 x d
    Eigen::MatrixXd b3;        // 1 x 1

    std::vector<TensorRef> tensors() {
        std::vector<TensorRef> out;
        if (cfg.source_input == SourceInput::Query) out.push_back({"W_in_q", &W_in_q});
        out.push_back({"W_in_t", &W_in_t});
        out.push_back({"W_in_w", &W_in_w});
        out.push_back({"W1a", &W1a});
        out.push_back({"W1b", &W1b});
        out.push_back({"b1", &b1});
        out.push_back({"W2", &W2});
        out.push_back({"b2", &b2});
        out.push_back({"w3", &w3});
        out.push_back({"b3", &b3});
        return out;
    }
    std::vector<TensorConstRef> tensors() const {
        auto refs = const_cast<MlpParams*>(this)->tensors();
        std::vector<TensorConstRef> out;
        for (auto& r : refs) out.push_back({r.name, r.value});
        return out;
    }
    double sum_squares() const {
        double s = 0.0;
        for (const auto& t : tensors()) s += t.value->squaredNorm();
        return s;
    }

    Eigen::VectorXd source_raw(const DatasetBundle& b, const QueryInstance& q) const {
        if (cfg.source_input == SourceInput::Query) return b.query_emb.row(q.instance_id);
        return b.entity_emb(source_side(q.s)).row(q.entity_id);
    }
    const Eigen::MatrixXd& source_proj(Direction s) const {
        if (cfg.source_input == SourceInput::Query) return W_in_q;
        return source_side(s) == Side::TCM ? W_in_t : W_in_w;
    }
    const Eigen::MatrixXd& target_proj(Direction s) const {
        return target_side(s) == Side::TCM ? W_in_t : W_in_w;
    }

    // Score one projected source/target pair.
    double score_pair(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
        Eigen::VectorXd h1 = (W1a * a + W1b * b + b1.col(0)).cwiseMax(0.0);
        Eigen::VectorXd h2 = (W2 * h1 + b2.col(0)).cwiseMax(0.0);
        return (w3 * h2)(0, 0) + b3(0, 0);
    }
};

inline MlpParams init_mlp(const MlpConfig& cfg, std::uint64_t seed) {
    MlpParams p;
    p.cfg = cfg;
    if (cfg.source_input == SourceInput::Query) p.W_in_q.resize(cfg.d, cfg.d_q);
    p.W_in_t.resize(cfg.d, cfg.d_T);
    p.W_in_w.resize(cfg.d, cfg.d_W);
    p.W1a.resize(cfg.d, cfg.d);
    p.W1b.resize(cfg.d, cfg.d);
    p.b1 = Eigen::MatrixXd::Zero(cfg.d, 1);
    p.W2.resize(cfg.d, cfg.d);
    p.b2 = Eigen::MatrixXd::Zero(cfg.d, 1);
    p.w3.resize(1, cfg.d);
    p.b3 = Eigen::MatrixXd::Zero(1, 1);
    Rng rng = substream(seed, "init-mlp");
    for (auto& t : p.tensors())
        if (t.name[0] != 'b') detail::glorot_fill(*t.value, rng);
    return p;
}

class MlpScorer : public Scorer {
public:
    MlpScorer(const DatasetBundle& bundle, MlpParams params) : params_(std::move(params)) {
        for (int di = 0; di < 2; ++di) {
            const Side tgt = target_side(static_cast<Direction>(di));
            const EmbeddingTable& emb = bundle.entity_emb(tgt);
            Eigen::MatrixXd b(params_.cfg.d, static_cast<Eigen::Index>(emb.size()));
            int col = 0;
            for (std::int64_t id : emb.ids()) {
                b.col(col) = params_.target_proj(static_cast<Direction>(di)) * emb.row(id);
                index_[di].emplace(id, col);
                ++col;
            }
            b_[di] = std::move(b);
        }
    }

    std::string name() const override { return "mlp"; }

    Eigen::VectorXd score_query(const DatasetBundle& bundle, const QueryInstance& q,
                                const std::vector<EntityId>& candidates) const override {
        const Eigen::VectorXd a = params_.source_proj(q.s) * params_.source_raw(bundle, q);
        const Eigen::VectorXd pre_a = params_.W1a * a + params_.b1.col(0);
        const int di = dir_index(q.s);
        Eigen::VectorXd out(static_cast<Eigen::Index>(candidates.size()));
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            const Eigen::VectorXd h1 =
                (pre_a + params_.W1b * b_[di].col(index_[di].at(candidates[i]))).cwiseMax(0.0);
            const Eigen::VectorXd h2 = (params_.W2 * h1 + params_.b2.col(0)).cwiseMax(0.0);
            out[static_cast<Eigen::Index>(i)] = (params_.w3 * h2)(0, 0) + params_.b3(0, 0);
        }
        return out;
    }

    const MlpParams& params() const { return params_; }

private:
    MlpParams params_;
    Eigen::MatrixXd b_[2];  // projected target features per direction
    std::unordered_map<EntityId, int> index_[2];
};

// ---------------------------------------------------------------------------
// Shared trainable-baseline step: mp loss over one batch per direction,
// analytic gradients, Eq. 18 weighting. Only the scoring differs from the
// main model.
// ---------------------------------------------------------------------------

inline std::pair<double, BiEncoderParams> biencoder_forward_backward(
    const BiEncoderParams& params, const DatasetBundle& bundle,
    const std::vector<TrainBatch>& batches, const LossConfig& loss_cfg) {
    BiEncoderParams grads = params;
    for (auto& t : grads.tensors()) t.value->setZero();

    double loss_dir[2] = {0.0, 0.0};

    for (const TrainBatch& batch : batches) {
        require(!batch.items.empty(), errkind::invalid_argument, "empty training batch");
        const int di = dir_index(batch.s);
        const Side tgt = target_side(batch.s);
        const EmbeddingTable& temb = bundle.entity_emb(tgt);
        const Eigen::MatrixXd& w_tgt = params.side_proj(tgt);
        const Eigen::MatrixXd& w_src = params.source_proj(batch.s);
        const double dir_weight = di == 1 ? loss_cfg.lambda_dir : 1.0 - loss_cfg.lambda_dir;
        const double scale = dir_weight / static_cast<double>(batch.items.size());

        std::set<EntityId> tset;
        for (const auto& it : batch.items) {
            tset.insert(it.positives.begin(), it.positives.end());
            tset.insert(it.negatives.begin(), it.negatives.end());
        }
        std::vector<EntityId> targets(tset.begin(), tset.end());
        std::unordered_map<EntityId, int> col;
        const int m = static_cast<int>(targets.size());
        Eigen::MatrixXd traw(temb.dim, m);
        for (int j = 0; j < m; ++j) {
            col.emplace(targets[static_cast<std::size_t>(j)], j);
            traw.col(j) = temb.row(targets[static_cast<std::size_t>(j)]);
        }
        Eigen::MatrixXd c = w_tgt * traw;
        Eigen::VectorXd cnorm(m);
        Eigen::MatrixXd hn(params.cfg.d, m);
        for (int j = 0; j < m; ++j) {
            cnorm[j] = c.col(j).norm();
            require(cnorm[j] > 1e-12, errkind::degenerate_norm, "target projected to zero");
            hn.col(j) = c.col(j) / cnorm[j];
        }

        Eigen::MatrixXd d_hn = Eigen::MatrixXd::Zero(params.cfg.d, m);
        double loss_sum = 0.0;
        for (const auto& item : batch.items) {
            const QueryInstance& qi = bundle.instance(item.instance_id);
            const Eigen::VectorXd raw = params.source_raw(bundle, qi);
            const Eigen::VectorXd p = w_src * raw;
            const double pn = p.norm();
            require(pn > 1e-12, errkind::degenerate_norm, "query projected to zero");
            const Eigen::VectorXd qv = p / pn;

            std::vector<int> cols;
            for (EntityId u : item.positives) cols.push_back(col.at(u));
            for (EntityId u : item.negatives) cols.push_back(col.at(u));
            const int n_pos = static_cast<int>(item.positives.size());
            Eigen::VectorXd logits(static_cast<Eigen::Index>(cols.size()));
            for (std::size_t j = 0; j < cols.size(); ++j)
                logits[static_cast<Eigen::Index>(j)] = qv.dot(hn.col(cols[j]));
            loss_sum += mp_loss(
                std::span<const double>(logits.data(), static_cast<std::size_t>(n_pos)),
                std::span<const double>(logits.data() + n_pos, cols.size() - static_cast<std::size_t>(n_pos)),
                loss_cfg.tau);

            const double mx = logits.maxCoeff() / loss_cfg.tau;
            Eigen::VectorXd w(logits.size());
            for (Eigen::Index j = 0; j < logits.size(); ++j)
                w[j] = std::exp(logits[j] / loss_cfg.tau - mx);
            const double s_pos = w.head(n_pos).sum();
            const double s_all = w.sum();

            Eigen::VectorXd dq = Eigen::VectorXd::Zero(params.cfg.d);
            for (Eigen::Index j = 0; j < logits.size(); ++j) {
                const double dl =
                    scale / loss_cfg.tau * (w[j] / s_all - (j < n_pos ? w[j] / s_pos : 0.0));
                dq += dl * hn.col(cols[static_cast<std::size_t>(j)]);
                d_hn.col(cols[static_cast<std::size_t>(j)]) += dl * qv;
            }
            const Eigen::VectorXd dp = (dq - qv * qv.dot(dq)) / pn;
            Eigen::MatrixXd& g_src = params.cfg.source_input == SourceInput::Query
                                         ? grads.W_query
                                         : (source_side(batch.s) == Side::TCM ? grads.W_t : grads.W_w);
            g_src += dp * raw.transpose();
        }
        loss_dir[di] = loss_sum / static_cast<double>(batch.items.size());

        Eigen::MatrixXd dc(params.cfg.d, m);
        for (int j = 0; j < m; ++j) {
            const Eigen::VectorXd dh = d_hn.col(j);
            dc.col(j) = (dh - hn.col(j) * hn.col(j).dot(dh)) / cnorm[j];
        }
        Eigen::MatrixXd& g_tgt = tgt == Side::TCM ? grads.W_t : grads.W_w;
        g_tgt += dc * traw.transpose();
    }

    if (loss_cfg.lambda_reg != 0.0) {
        auto prefs = params.tensors();
        auto grefs = grads.tensors();
        for (std::size_t i = 0; i < prefs.size(); ++i)
            *grefs[i].value += 2.0 * loss_cfg.lambda_reg * *prefs[i].value;
    }
    const double total =
        total_loss(loss_dir[0], loss_dir[1], params.sum_squares(), loss_cfg.lambda_dir,
                   loss_cfg.lambda_reg);
    return {total, std::move(grads)};
}

inline std::pair<double, MlpParams> mlp_forward_backward(const MlpParams& params,
                                                         const DatasetBundle& bundle,
                                                         const std::vector<TrainBatch>& batches,
                                                         const LossConfig& loss_cfg) {
    MlpParams grads = params;
    for (auto& t : grads.tensors()) t.value->setZero();

    double loss_dir[2] = {0.0, 0.0};
    const int d = params.cfg.d;

    for (const TrainBatch& batch : batches) {
        require(!batch.items.empty(), errkind::invalid_argument, "empty training batch");
        const int di = dir_index(batch.s);
        const Side tgt = target_side(batch.s);
        const EmbeddingTable& temb = bundle.entity_emb(tgt);
        const Eigen::MatrixXd& w_tgt = params.target_proj(batch.s);
        const Eigen::MatrixXd& w_src = params.source_proj(batch.s);
        const double dir_weight = di == 1 ? loss_cfg.lambda_dir : 1.0 - loss_cfg.lambda_dir;
        const double scale = dir_weight / static_cast<double>(batch.items.size());

        std::set<EntityId> tset;
        for (const auto& it : batch.items) {
            tset.insert(it.positives.begin(), it.positives.end());
            tset.insert(it.negatives.begin(), it.negatives.end());
        }
        std::vector<EntityId> targets(tset.begin(), tset.end());
        std::unordered_map<EntityId, int> col;
        const int m = static_cast<int>(targets.size());
        Eigen::MatrixXd traw(temb.dim, m);
        for (int j = 0; j < m; ++j) {
            col.emplace(targets[static_cast<std::size_t>(j)], j);
            traw.col(j) = temb.row(targets[static_cast<std::size_t>(j)]);
        }
        const Eigen::MatrixXd bproj = w_tgt * traw;             // d x m
        const Eigen::MatrixXd w1b_b = params.W1b * bproj;       // d x m
        Eigen::MatrixXd d_bproj = Eigen::MatrixXd::Zero(d, m);

        double loss_sum = 0.0;
        for (const auto& item : batch.items) {
            const QueryInstance& qi = bundle.instance(item.instance_id);
            const Eigen::VectorXd raw = params.source_raw(bundle, qi);
            const Eigen::VectorXd a = w_src * raw;
            const Eigen::VectorXd w1a_a = params.W1a * a + params.b1.col(0);

            std::vector<int> cols;
            for (EntityId u : item.positives) cols.push_back(col.at(u));
            for (EntityId u : item.negatives) cols.push_back(col.at(u));
            const int n_pos = static_cast<int>(item.positives.size());
            const int nc = static_cast<int>(cols.size());

            Eigen::MatrixXd h1(d, nc), h2(d, nc);
            Eigen::VectorXd logits(nc);
            for (int j = 0; j < nc; ++j) {
                h1.col(j) = (w1a_a + w1b_b.col(cols[static_cast<std::size_t>(j)])).cwiseMax(0.0);
                h2.col(j) = (params.W2 * h1.col(j) + params.b2.col(0)).cwiseMax(0.0);
                logits[j] = (params.w3 * h2.col(j))(0, 0) + params.b3(0, 0);
            }
            loss_sum += mp_loss(
                std::span<const double>(logits.data(), static_cast<std::size_t>(n_pos)),
                std::span<const double>(logits.data() + n_pos, static_cast<std::size_t>(nc - n_pos)),
                loss_cfg.tau);

            const double mx = logits.maxCoeff() / loss_cfg.tau;
            Eigen::VectorXd w(nc);
            for (int j = 0; j < nc; ++j) w[j] = std::exp(logits[j] / loss_cfg.tau - mx);
            const double s_pos = w.head(n_pos).sum();
            const double s_all = w.sum();

            Eigen::VectorXd da = Eigen::VectorXd::Zero(d);
            for (int j = 0; j < nc; ++j) {
                const double dl =
                    scale / loss_cfg.tau * (w[j] / s_all - (j < n_pos ? w[j] / s_pos : 0.0));
                if (dl == 0.0) continue;
                // scalar -> h2 -> h1 -> (a, b) backward for this pair
                grads.w3 += dl * h2.col(j).transpose();
                grads.b3(0, 0) += dl;
                Eigen::VectorXd dh2 = dl * params.w3.transpose();
                Eigen::VectorXd dz2 =
                    dh2.cwiseProduct((h2.col(j).array() > 0.0).cast<double>().matrix());
                grads.W2 += dz2 * h1.col(j).transpose();
                grads.b2.col(0) += dz2;
                Eigen::VectorXd dh1 = params.W2.transpose() * dz2;
                Eigen::VectorXd dz1 =
                    dh1.cwiseProduct((h1.col(j).array() > 0.0).cast<double>().matrix());
                grads.W1a += dz1 * a.transpose();
                grads.W1b += dz1 * bproj.col(cols[static_cast<std::size_t>(j)]).transpose();
                grads.b1.col(0) += dz1;
                da += params.W1a.transpose() * dz1;
                d_bproj.col(cols[static_cast<std::size_t>(j)]) += params.W1b.transpose() * dz1;
            }
            Eigen::MatrixXd& g_src = params.cfg.source_input == SourceInput::Query
                                         ? grads.W_in_q
                                         : (source_side(batch.s) == Side::TCM ? grads.W_in_t
                                                                              : grads.W_in_w);
            g_src += da * raw.transpose();
        }
        loss_dir[di] = loss_sum / static_cast<double>(batch.items.size());

        Eigen::MatrixXd& g_tgt = tgt == Side::TCM ? grads.W_in_t : grads.W_in_w;
        g_tgt += d_bproj * traw.transpose();
    }

    if (loss_cfg.lambda_reg != 0.0) {
        auto prefs = params.tensors();
        auto grefs = grads.tensors();
        for (std::size_t i = 0; i < prefs.size(); ++i)
            *grefs[i].value += 2.0 * loss_cfg.lambda_reg * *prefs[i].value;
    }
    const double total = total_loss(loss_dir[0], loss_dir[1], params.sum_squares(),
                                    loss_cfg.lambda_dir, loss_cfg.lambda_reg);
    return {total, std::move(grads)};
}

// ---------------------------------------------------------------------------
// Baseline training: same sampling, loss and loop as the model.
// ---------------------------------------------------------------------------

struct BiEncoderTrainResult {
    BiEncoderParams best;
    TrainResult info;
};

inline BiEncoderTrainResult train_biencoder(const DatasetBundle& bundle, int d, SourceInput mode,
                                            const TrainConfig& tcfg) {
    BiEncoderConfig cfg;
    cfg.d = d;
    cfg.d_q = bundle.query_emb.dim;
    cfg.d_T = bundle.tcm_emb.dim;
    cfg.d_W = bundle.wm_emb.dim;
    cfg.source_input = mode;
    BiEncoderParams params = init_biencoder(cfg, tcfg.seed);
    BiEncoderParams best = params;
    AdamState adam = AdamState::for_params(params, tcfg.lr);
    const LossConfig loss_cfg = tcfg.loss();

    TrainHooks hooks;
    hooks.step = [&](const TrainBatch& b0, const TrainBatch& b1) {
        auto [loss, grads] = biencoder_forward_backward(params, bundle, {b0, b1}, loss_cfg);
        adam_step(params, grads, adam, tcfg.clip_norm);
        return loss;
    };
    hooks.validate = [&]() {
        BiEncoderScorer scorer(bundle, params);
        return validation_metric(evaluate(scorer, bundle, Split::Val, {tcfg.val_mode}, {10}),
                                 tcfg.val_mode);
    };
    hooks.snapshot_best = [&]() { best = params; };
    hooks.set_lr = [&](double lr) { adam.lr = lr; };

    BiEncoderTrainResult out;
    out.info = run_training(bundle, tcfg, hooks);
    out.best = std::move(best);
    return out;
}

struct MlpTrainResult {
    MlpParams best;
    TrainResult info;
};

inline MlpTrainResult train_mlp(const DatasetBundle& bundle, int d, SourceInput mode,
                                const TrainConfig& tcfg) {
    MlpConfig cfg;
    cfg.d = d;
    cfg.d_q = bundle.query_emb.dim;
    cfg.d_T = bundle.tcm_emb.dim;
    cfg.d_W = bundle.wm_emb.dim;
    cfg.source_input = mode;
    MlpParams params = init_mlp(cfg, tcfg.seed);
    MlpParams best = params;
    AdamState adam = AdamState::for_params(params, tcfg.lr);
    const LossConfig loss_cfg = tcfg.loss();

    TrainHooks hooks;
    hooks.step = [&](const TrainBatch& b0, const TrainBatch& b1) {
        auto [loss, grads] = mlp_forward_backward(params, bundle, {b0, b1}, loss_cfg);
        adam_step(params, grads, adam, tcfg.clip_norm);
        return loss;
    };
    hooks.validate = [&]() {
        MlpScorer scorer(bundle, params);
        return validation_metric(evaluate(scorer, bundle, Split::Val, {tcfg.val_mode}, {10}),
                                 tcfg.val_mode);
    };
    hooks.snapshot_best = [&]() { best = params; };
    hooks.set_lr = [&](double lr) { adam.lr = lr; };

    MlpTrainResult out;
    out.info = run_training(bundle, tcfg, hooks);
    out.best = std::move(best);
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoint envelopes and the method-dispatched scorer factory.
// ---------------------------------------------------------------------------

inline CheckpointEnvelope to_envelope(const BiEncoderParams& p) {
    CheckpointEnvelope env;
    env.method = "biencoder";
    env.ints = {{"d", p.cfg.d},
                {"d_q", p.cfg.d_q},
                {"d_T", p.cfg.d_T},
                {"d_W", p.cfg.d_W},
                {"source_input", static_cast<int>(p.cfg.source_input)}};
    for (const auto& t : p.tensors()) env.tensors.emplace_back(t.name, *t.value);
    return env;
}

inline BiEncoderParams biencoder_from_envelope(const CheckpointEnvelope& env) {
    BiEncoderConfig cfg;
    cfg.d = static_cast<int>(env.int_field("d"));
    cfg.d_q = static_cast<int>(env.int_field("d_q"));
    cfg.d_T = static_cast<int>(env.int_field("d_T"));
    cfg.d_W = static_cast<int>(env.int_field("d_W"));
    cfg.source_input = static_cast<SourceInput>(env.int_field("source_input"));
    BiEncoderParams p = init_biencoder(cfg, 0);
    for (auto& t : p.tensors()) *t.value = env.tensor(t.name);
    return p;
}

inline CheckpointEnvelope to_envelope(const MlpParams& p) {
    CheckpointEnvelope env;
    env.method = "mlp";
    env.ints = {{"d", p.cfg.d},
                {"d_q", p.cfg.d_q},
                {"d_T", p.cfg.d_T},
                {"d_W", p.cfg.d_W},
                {"source_input", static_cast<int>(p.cfg.source_input)}};
    for (const auto& t : p.tensors()) env.tensors.emplace_back(t.name, *t.value);
    return env;
}

inline MlpParams mlp_from_envelope(const CheckpointEnvelope& env) {
    MlpConfig cfg;
    cfg.d = static_cast<int>(env.int_field("d"));
    cfg.d_q = static_cast<int>(env.int_field("d_q"));
    cfg.d_T = static_cast<int>(env.int_field("d_T"));
    cfg.d_W = static_cast<int>(env.int_field("d_W"));
    cfg.source_input = static_cast<SourceInput>(env.int_field("source_input"));
    MlpParams p = init_mlp(cfg, 0);
    for (auto& t : p.tensors()) *t.value = env.tensor(t.name);
    return p;
}

inline CheckpointEnvelope to_envelope(const ProcrustesModel& m) {
    CheckpointEnvelope env;
    env.method = "procrustes";
    env.ints = {{"d_prime", m.d_prime}, {"has_pca", m.has_pca ? 1 : 0}};
    env.tensors.emplace_back("W", m.W);
    if (m.has_pca) {
        env.tensors.emplace_back("pca_t", m.pca_t);
        env.tensors.emplace_back("pca_w", m.pca_w);
    }
    return env;
}

inline ProcrustesModel procrustes_from_envelope(const CheckpointEnvelope& env) {
    ProcrustesModel m;
    m.d_prime = static_cast<int>(env.int_field("d_prime"));
    m.has_pca = env.int_field("has_pca") != 0;
    m.W = env.tensor("W");
    if (m.has_pca) {
        m.pca_t = env.tensor("pca_t");
        m.pca_w = env.tensor("pca_w");
    }
    return m;
}

inline std::unique_ptr<Scorer> scorer_from_checkpoint(const DatasetBundle& bundle,
                                                      const std::filesystem::path& path) {
    CheckpointEnvelope env = load_envelope(path);
    if (env.method == "qcea")
        return std::make_unique<QceaScorer>(bundle, params_from_envelope(env));
    if (env.method == "procrustes")
        return std::make_unique<ProcrustesScorer>(bundle, procrustes_from_envelope(env));
    if (env.method == "biencoder")
        return std::make_unique<BiEncoderScorer>(bundle, biencoder_from_envelope(env));
    if (env.method == "mlp")
        return std::make_unique<MlpScorer>(bundle, mlp_from_envelope(env));
    fail(errkind::io, "unknown checkpoint method '" + env.method + "'");
}

}  // namespace qcea
