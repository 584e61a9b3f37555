#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "qcea/bundle.hpp"
#include "qcea/common.hpp"
#include "qcea/model.hpp"
#include "qcea/objective.hpp"

namespace qcea {

// Fixed per-bundle inputs for both graph sides.
struct EncodeContext {
    std::array<SideInputs, 2> side;  // [0]=TCM, [1]=WM

    const SideInputs& of(Side s) const { return side[s == Side::TCM ? 0 : 1]; }

    static EncodeContext build(const DatasetBundle& b) {
        EncodeContext ctx;
        ctx.side[0] = build_side_inputs(b, Side::TCM);
        ctx.side[1] = build_side_inputs(b, Side::WM);
        return ctx;
    }
};

// Everything the backward pass replays: GCN activations per side, Tucker
// intermediates per referenced target, and the query-path intermediates per
// batch item.
struct ForwardRecord {
    struct SideRec {
        bool used = false;
        Eigen::VectorXd cnorm;            // pre-normalization input row norms
        std::vector<Eigen::MatrixXd> h;   // h[0]=normalized inputs ... h[L]
        std::vector<Eigen::MatrixXd> z;   // pre-activation per layer
    };

    struct QueryRec {
        std::int64_t instance_id = 0;
        Eigen::VectorXd zin;
        Eigen::VectorXd zhat;
        double pnorm = 0.0;
        Eigen::VectorXd q;
        std::vector<int> cols;  // local target columns, positives first
        int n_pos = 0;
        Eigen::VectorXd logits;
        double loss = 0.0;
    };

    struct DirRec {
        bool used = false;
        Direction s = Direction::TcmToWm;
        std::vector<EntityId> targets;  // sorted unique referenced targets
        std::unordered_map<EntityId, int> target_col;
        Eigen::MatrixXd gsel;   // d x m target rows of the graph encoder
        Eigen::MatrixXd a;      // R_i x m
        Eigen::MatrixXd b;      // R_o x m
        Eigen::MatrixXd t;      // d x m tucker branch
        Eigen::MatrixXd rv;     // d x m residual branch
        Eigen::MatrixXd blend;  // d x m pre-normalization
        Eigen::VectorXd mnorm;  // m
        Eigen::MatrixXd hn;     // d x m normalized target representations
        std::vector<QueryRec> queries;
        double mean_loss = 0.0;
    };

    std::array<SideRec, 2> side;  // [0]=TCM, [1]=WM
    std::array<DirRec, 2> dir;
    double gate = 0.5;
    double loss_tcm2wm = 0.0;
    double loss_wm2tcm = 0.0;
    double total = 0.0;
};

namespace detail {

inline int side_slot(Side s) { return s == Side::TCM ? 0 : 1; }

inline void gcn_forward(const ModelParams& p, const SideInputs& in, ForwardRecord::SideRec& rec) {
    const Eigen::MatrixXd& w = p.input_proj(in.side);
    Eigen::MatrixXd c = in.x * w.transpose();
    rec.cnorm.resize(c.rows());
    for (Eigen::Index r = 0; r < c.rows(); ++r) {
        const double n = c.row(r).norm();
        require(n > 1e-12, errkind::degenerate_norm,
                "entity " + std::to_string(in.ids[static_cast<std::size_t>(r)]) +
                    " projected to zero");
        rec.cnorm[r] = n;
        c.row(r) /= n;
    }
    const int layers = static_cast<int>(p.gcn.size());
    rec.h.clear();
    rec.z.clear();
    rec.h.push_back(std::move(c));
    for (int l = 0; l < layers; ++l) {
        Eigen::MatrixXd z = in.adj.multiply(rec.h.back()) * p.gcn[static_cast<std::size_t>(l)];
        rec.z.push_back(z);
        if (l + 1 < layers && p.cfg.activation == Activation::ReLU) z = z.cwiseMax(0.0);
        rec.h.push_back(std::move(z));
    }
    rec.used = true;
}

}  // namespace detail

// Forward pass over one batch per direction, recording every intermediate the
// backward pass needs. Batches may cover one or both directions.
inline ForwardRecord forward_batches(const ModelParams& params, const EncodeContext& ctx,
                                     const DatasetBundle& bundle,
                                     const std::vector<TrainBatch>& batches,
                                     const LossConfig& loss_cfg) {
    ForwardRecord rec;
    rec.gate = sigmoid(params.alpha());

    for (const TrainBatch& batch : batches) {
        require(!batch.items.empty(), errkind::invalid_argument, "empty training batch");
        const int di = dir_index(batch.s);
        ForwardRecord::DirRec& dr = rec.dir[static_cast<std::size_t>(di)];
        require(!dr.used, errkind::invalid_argument, "two batches share one direction");
        dr.used = true;
        dr.s = batch.s;

        const Side tgt = target_side(batch.s);
        ForwardRecord::SideRec& sr = rec.side[static_cast<std::size_t>(detail::side_slot(tgt))];
        if (!sr.used) detail::gcn_forward(params, ctx.of(tgt), sr);
        const Eigen::MatrixXd& g_all = sr.h.back();
        const SideInputs& tin = ctx.of(tgt);

        std::set<EntityId> target_set;
        for (const auto& item : batch.items) {
            target_set.insert(item.positives.begin(), item.positives.end());
            target_set.insert(item.negatives.begin(), item.negatives.end());
        }
        dr.targets.assign(target_set.begin(), target_set.end());
        for (std::size_t i = 0; i < dr.targets.size(); ++i)
            dr.target_col.emplace(dr.targets[i], static_cast<int>(i));

        const int m = static_cast<int>(dr.targets.size());
        const int d = params.cfg.d;
        dr.gsel.resize(d, m);
        for (int j = 0; j < m; ++j)
            dr.gsel.col(j) = g_all.row(tin.row_of(dr.targets[static_cast<std::size_t>(j)])).transpose();

        dr.a = params.U_i.transpose() * dr.gsel;
        Eigen::MatrixXd cmix = core_mix(params, batch.s);
        dr.b = cmix * dr.a;
        dr.t = params.U_o * dr.b;
        dr.rv = params.R_res * dr.gsel;
        dr.blend = (1.0 - rec.gate) * dr.t + rec.gate * dr.rv;
        dr.mnorm.resize(m);
        dr.hn.resize(d, m);
        for (int j = 0; j < m; ++j) {
            const double n = dr.blend.col(j).norm();
            require(n > 1e-12, errkind::degenerate_norm,
                    "target " + std::to_string(dr.targets[static_cast<std::size_t>(j)]) +
                        " blended to zero");
            dr.mnorm[j] = n;
            dr.hn.col(j) = dr.blend.col(j) / n;
        }

        const Eigen::MatrixXd& p_s = params.P_dir[static_cast<std::size_t>(di)];
        double loss_sum = 0.0;
        dr.queries.reserve(batch.items.size());
        for (const auto& item : batch.items) {
            ForwardRecord::QueryRec qr;
            qr.instance_id = item.instance_id;
            qr.zin = bundle.query_emb.row(item.instance_id);
            qr.zhat = params.W_q * qr.zin;
            Eigen::VectorXd p = p_s * qr.zhat;
            qr.pnorm = p.norm();
            require(qr.pnorm > 1e-12, errkind::degenerate_norm,
                    "query " + std::to_string(item.instance_id) + " projected to zero");
            qr.q = p / qr.pnorm;

            qr.n_pos = static_cast<int>(item.positives.size());
            qr.cols.reserve(item.positives.size() + item.negatives.size());
            for (EntityId u : item.positives) qr.cols.push_back(dr.target_col.at(u));
            for (EntityId u : item.negatives) qr.cols.push_back(dr.target_col.at(u));
            qr.logits.resize(static_cast<Eigen::Index>(qr.cols.size()));
            for (std::size_t j = 0; j < qr.cols.size(); ++j)
                qr.logits[static_cast<Eigen::Index>(j)] = qr.q.dot(dr.hn.col(qr.cols[j]));

            qr.loss = mp_loss(std::span<const double>(qr.logits.data(), static_cast<std::size_t>(qr.n_pos)),
                              std::span<const double>(qr.logits.data() + qr.n_pos,
                                                      qr.cols.size() - static_cast<std::size_t>(qr.n_pos)),
                              loss_cfg.tau);
            loss_sum += qr.loss;
            dr.queries.push_back(std::move(qr));
        }
        dr.mean_loss = loss_sum / static_cast<double>(batch.items.size());
        if (batch.s == Direction::TcmToWm)
            rec.loss_tcm2wm = dr.mean_loss;
        else
            rec.loss_wm2tcm = dr.mean_loss;
    }

    rec.total = total_loss(rec.loss_tcm2wm, rec.loss_wm2tcm, params, loss_cfg.lambda_dir,
                           loss_cfg.lambda_reg);
    return rec;
}

// Analytic gradients of the recorded loss w.r.t. every parameter tensor.
// Accumulation order is fixed (directions 0 then 1, queries and targets in
// record order) for bit-reproducibility.
inline GradientSet backward(const ModelParams& params, const EncodeContext& ctx,
                            const ForwardRecord& rec, const LossConfig& loss_cfg) {
    GradientSet grads = GradientSet::zeros_like(params);
    ModelParams& g = grads.slots;

    const int layers = static_cast<int>(params.gcn.size());
    std::array<Eigen::MatrixXd, 2> d_gcn_out;  // per side, n x d

    for (int di = 0; di < 2; ++di) {
        const ForwardRecord::DirRec& dr = rec.dir[static_cast<std::size_t>(di)];
        if (!dr.used) continue;
        const double dir_weight = di == 1 ? loss_cfg.lambda_dir : 1.0 - loss_cfg.lambda_dir;
        const double scale = dir_weight / static_cast<double>(dr.queries.size());
        const Side tgt = target_side(dr.s);
        const int slot = detail::side_slot(tgt);
        const int m = static_cast<int>(dr.targets.size());
        const int d = params.cfg.d;

        Eigen::MatrixXd d_hn = Eigen::MatrixXd::Zero(d, m);
        const Eigen::MatrixXd& p_s = params.P_dir[static_cast<std::size_t>(di)];

        for (const auto& qr : dr.queries) {
            // Softmax pieces of the mp loss, recomputed from stored logits.
            const Eigen::Index n_all = qr.logits.size();
            double mx = qr.logits.maxCoeff() / loss_cfg.tau;
            Eigen::VectorXd w(n_all);
            for (Eigen::Index j = 0; j < n_all; ++j)
                w[j] = std::exp(qr.logits[j] / loss_cfg.tau - mx);
            const double s_pos = w.head(qr.n_pos).sum();
            const double s_all = w.sum();

            Eigen::VectorXd dq = Eigen::VectorXd::Zero(d);
            for (Eigen::Index j = 0; j < n_all; ++j) {
                const double d_logit =
                    scale / loss_cfg.tau * (w[j] / s_all - (j < qr.n_pos ? w[j] / s_pos : 0.0));
                const int col = qr.cols[static_cast<std::size_t>(j)];
                dq += d_logit * dr.hn.col(col);
                d_hn.col(col) += d_logit * qr.q;
            }

            // q = p / |p|
            Eigen::VectorXd dp = (dq - qr.q * qr.q.dot(dq)) / qr.pnorm;
            g.P_dir[static_cast<std::size_t>(di)] += dp * qr.zhat.transpose();
            Eigen::VectorXd dzhat = p_s.transpose() * dp;
            g.W_q += dzhat * qr.zin.transpose();
        }

        // Target-side backward: normalization, gate, residual and Tucker.
        Eigen::MatrixXd d_blend(d, m);
        for (int j = 0; j < m; ++j) {
            const Eigen::VectorXd dh = d_hn.col(j);
            d_blend.col(j) = (dh - dr.hn.col(j) * dr.hn.col(j).dot(dh)) / dr.mnorm[j];
        }
        double d_alpha = 0.0;
        for (int j = 0; j < m; ++j)
            d_alpha += (dr.rv.col(j) - dr.t.col(j)).dot(d_blend.col(j));
        g.alpha_t(0, 0) += d_alpha * rec.gate * (1.0 - rec.gate);

        Eigen::MatrixXd dt = (1.0 - rec.gate) * d_blend;
        Eigen::MatrixXd drv = rec.gate * d_blend;

        Eigen::MatrixXd d_gsel = Eigen::MatrixXd::Zero(d, m);
        g.R_res += drv * dr.gsel.transpose();
        d_gsel += params.R_res.transpose() * drv;

        g.U_o += dt * dr.b.transpose();
        Eigen::MatrixXd db = params.U_o.transpose() * dt;          // R_o x m
        Eigen::MatrixXd dcmix = db * dr.a.transpose();             // R_o x R_i
        Eigen::MatrixXd cmix = core_mix(params, dr.s);
        Eigen::MatrixXd da = cmix.transpose() * db;                // R_i x m
        g.U_i += dr.gsel * da.transpose();
        d_gsel += params.U_i * da;

        for (int r = 0; r < params.cfg.rank_s; ++r) {
            g.core[static_cast<std::size_t>(r)] += params.U_s(di, r) * dcmix;
            g.U_s(di, r) += params.core[static_cast<std::size_t>(r)].cwiseProduct(dcmix).sum();
        }

        // Scatter target gradients into the side's encoder-output slots.
        const SideInputs& tin = ctx.of(tgt);
        Eigen::MatrixXd& dgo = d_gcn_out[static_cast<std::size_t>(slot)];
        if (dgo.size() == 0) dgo = Eigen::MatrixXd::Zero(tin.x.rows(), d);
        for (int j = 0; j < m; ++j)
            dgo.row(tin.row_of(dr.targets[static_cast<std::size_t>(j)])) += d_gsel.col(j).transpose();
    }

    // GCN and input-projection backward per side.
    for (int slot = 0; slot < 2; ++slot) {
        const ForwardRecord::SideRec& sr = rec.side[static_cast<std::size_t>(slot)];
        if (!sr.used || d_gcn_out[static_cast<std::size_t>(slot)].size() == 0) continue;
        const Side side = slot == 0 ? Side::TCM : Side::WM;
        const SideInputs& in = ctx.of(side);

        Eigen::MatrixXd dh = d_gcn_out[static_cast<std::size_t>(slot)];
        for (int l = layers - 1; l >= 0; --l) {
            Eigen::MatrixXd dz = std::move(dh);
            if (l + 1 < layers && params.cfg.activation == Activation::ReLU)
                dz = dz.cwiseProduct(
                    (sr.z[static_cast<std::size_t>(l)].array() > 0.0).cast<double>().matrix());
            const Eigen::MatrixXd mprop = in.adj.multiply(sr.h[static_cast<std::size_t>(l)]);
            g.gcn[static_cast<std::size_t>(l)] += mprop.transpose() * dz;
            Eigen::MatrixXd dm = dz * params.gcn[static_cast<std::size_t>(l)].transpose();
            dh = in.adj.multiply(dm);
        }
        // Row-wise normalization of the projected inputs.
        const Eigen::MatrixXd& xt = sr.h.front();
        Eigen::MatrixXd dc(dh.rows(), dh.cols());
        for (Eigen::Index r = 0; r < dh.rows(); ++r) {
            const double dot = dh.row(r).dot(xt.row(r));
            dc.row(r) = (dh.row(r) - dot * xt.row(r)) / sr.cnorm[r];
        }
        if (side == Side::TCM)
            g.W_tcm += dc.transpose() * in.x;
        else
            g.W_wm += dc.transpose() * in.x;
    }

    // l2 regularization reaches every parameter entry.
    if (loss_cfg.lambda_reg != 0.0) {
        auto prefs = params.tensors();
        auto grefs = g.tensors();
        for (std::size_t i = 0; i < prefs.size(); ++i)
            *grefs[i].value += 2.0 * loss_cfg.lambda_reg * *prefs[i].value;
    }

    for (const auto& t : g.tensors())
        require(t.value->allFinite(), errkind::numeric_failure,
                "non-finite gradient in tensor " + t.name);
    return grads;
}

inline double batch_loss(const ModelParams& params, const EncodeContext& ctx,
                         const DatasetBundle& bundle, const std::vector<TrainBatch>& batches,
                         const LossConfig& loss_cfg) {
    return forward_batches(params, ctx, bundle, batches, loss_cfg).total;
}

// ---------------------------------------------------------------------------
// Central finite-difference verification of the analytic gradients.
// ---------------------------------------------------------------------------

struct FdReport {
    struct TensorEntry {
        std::string tensor;
        double max_rel_err = 0.0;
        Eigen::Index row = 0, col = 0;
        double analytic = 0.0;
        double numeric = 0.0;
    };
    std::vector<TensorEntry> tensors;
    double max_rel_err = 0.0;
    double tolerance = 0.0;

    bool pass() const { return max_rel_err < tolerance; }

    std::vector<std::string> offenders() const {
        std::vector<std::string> out;
        for (const auto& t : tensors)
            if (t.max_rel_err >= tolerance)
                out.push_back(t.tensor + "(" + std::to_string(t.row) + "," + std::to_string(t.col) +
                              ") analytic=" + std::to_string(t.analytic) +
                              " numeric=" + std::to_string(t.numeric));
        return out;
    }
};

inline FdReport fd_check_against(ModelParams& params, const GradientSet& analytic,
                                 const EncodeContext& ctx, const DatasetBundle& bundle,
                                 const std::vector<TrainBatch>& batches, const LossConfig& loss_cfg,
                                 double step_size, double tolerance) {
    require(step_size > 0.0, errkind::invalid_argument, "finite-difference step must be positive");
    require(params.total_size() <= 10000, errkind::invalid_argument,
            "model too large for exhaustive finite differences (" +
                std::to_string(params.total_size()) + " > 10000 parameters)");

    FdReport report;
    report.tolerance = tolerance;
    auto prefs = params.tensors();
    auto grefs = const_cast<GradientSet&>(analytic).slots.tensors();
    for (std::size_t ti = 0; ti < prefs.size(); ++ti) {
        Eigen::MatrixXd& tensor = *prefs[ti].value;
        const Eigen::MatrixXd& grad = *grefs[ti].value;
        FdReport::TensorEntry entry;
        entry.tensor = prefs[ti].name;
        for (Eigen::Index c = 0; c < tensor.cols(); ++c) {
            for (Eigen::Index r = 0; r < tensor.rows(); ++r) {
                const double saved = tensor(r, c);
                tensor(r, c) = saved + step_size;
                const double lp = batch_loss(params, ctx, bundle, batches, loss_cfg);
                tensor(r, c) = saved - step_size;
                const double lm = batch_loss(params, ctx, bundle, batches, loss_cfg);
                tensor(r, c) = saved;
                const double numeric = (lp - lm) / (2.0 * step_size);
                const double analytic_v = grad(r, c);
                const double rel = std::abs(analytic_v - numeric) /
                                   std::max({1e-6, std::abs(analytic_v), std::abs(numeric)});
                if (rel > entry.max_rel_err) {
                    entry.max_rel_err = rel;
                    entry.row = r;
                    entry.col = c;
                    entry.analytic = analytic_v;
                    entry.numeric = numeric;
                }
            }
        }
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        report.tensors.push_back(std::move(entry));
    }
    return report;
}

inline FdReport fd_check(ModelParams& params, const EncodeContext& ctx, const DatasetBundle& bundle,
                         const std::vector<TrainBatch>& batches, const LossConfig& loss_cfg,
                         double step_size, double tolerance) {
    const ForwardRecord rec = forward_batches(params, ctx, bundle, batches, loss_cfg);
    const GradientSet analytic = backward(params, ctx, rec, loss_cfg);
    return fd_check_against(params, analytic, ctx, bundle, batches, loss_cfg, step_size, tolerance);
}

}  // namespace qcea
