#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "qcea/bundle.hpp"
#include "qcea/common.hpp"
#include "qcea/model.hpp"

namespace qcea {

// Anything that can score target candidates for a query instance. All methods
// (the ranking model and every baseline) plug into the same protocol.
class Scorer {
public:
    virtual ~Scorer() = default;
    virtual std::string name() const = 0;
    virtual Eigen::VectorXd score_query(const DatasetBundle& bundle, const QueryInstance& q,
                                        const std::vector<EntityId>& candidates) const = 0;
};

// Scores with the trained model: q^T h over precomputed target representations.
class QceaScorer : public Scorer {
public:
    QceaScorer(const DatasetBundle& bundle, ModelParams params) : params_(std::move(params)) {
        for (int di = 0; di < 2; ++di) {
            const Side tgt = target_side(static_cast<Direction>(di));
            SideInputs in = build_side_inputs(bundle, tgt);
            const Eigen::MatrixXd g = encode_entities(params_, in);
            Eigen::MatrixXd h(params_.cfg.d, g.rows());
            for (Eigen::Index r = 0; r < g.rows(); ++r)
                h.col(r) = tucker_project(params_, g.row(r).transpose(), static_cast<Direction>(di));
            h_[di] = std::move(h);
            index_[di] = std::move(in.index);
        }
    }

    std::string name() const override { return "qcea"; }

    Eigen::VectorXd score_query(const DatasetBundle& bundle, const QueryInstance& q,
                                const std::vector<EntityId>& candidates) const override {
        const Eigen::VectorXd qv = encode_query(params_, bundle.query_emb.row(q.instance_id), q.s);
        const int di = dir_index(q.s);
        Eigen::VectorXd out(static_cast<Eigen::Index>(candidates.size()));
        for (std::size_t i = 0; i < candidates.size(); ++i)
            out[static_cast<Eigen::Index>(i)] = qv.dot(h_[di].col(index_[di].at(candidates[i])));
        return out;
    }

    const ModelParams& params() const { return params_; }

private:
    ModelParams params_;
    Eigen::MatrixXd h_[2];
    std::unordered_map<EntityId, int> index_[2];
};

// Per-query ranked candidates with the grouped ground-truth set attached.
struct RankedPrediction {
    std::int64_t instance_id = 0;
    EntityId entity = 0;
    Direction s = Direction::TcmToWm;
    RetrievalMode mode = RetrievalMode::Full;
    std::vector<EntityId> ranked;  // descending score, ties by ascending id
    std::vector<double> scores;
    std::vector<EntityId> gt;      // sorted
    bool gt_in_candidates = false;

    bool is_gt(EntityId id) const { return std::binary_search(gt.begin(), gt.end(), id); }
};

// Split-restricted positive pools indexed once per evaluation pass.
struct PoolIndex {
    std::array<std::unordered_map<EntityId, std::vector<EntityId>>, 2> pool;

    PoolIndex(const DatasetBundle& bundle, std::optional<Split> split) {
        for (std::size_t i = 0; i < bundle.anchors.pairs.size(); ++i) {
            if (split && bundle.splits.label[i] != *split) continue;
            const auto& [t, w] = bundle.anchors.pairs[i];
            pool[0][t].push_back(w);
            pool[1][w].push_back(t);
        }
        for (auto& m : pool)
            for (auto& [id, v] : m) std::sort(v.begin(), v.end());
    }

    const std::vector<EntityId>& of(EntityId v, Direction s) const {
        static const std::vector<EntityId> empty;
        auto it = pool[static_cast<std::size_t>(dir_index(s))].find(v);
        return it == pool[static_cast<std::size_t>(dir_index(s))].end() ? empty : it->second;
    }
};

// Score-and-sort over the mode's candidate set with an explicit ground-truth
// set (sorted), treated jointly. `filtered` removes other-split counterparts
// from the candidates.
inline RankedPrediction rank_query_with_gt(const Scorer& scorer, const DatasetBundle& bundle,
                                           const QueryInstance& q, RetrievalMode mode,
                                           std::vector<EntityId> gt, bool filtered = false) {
    const Graph& src = bundle.graph(source_side(q.s));
    const Graph& tgt = bundle.graph(target_side(q.s));
    const std::string& qtype = src.entity(q.entity_id).type_tag;
    std::vector<EntityId> candidates = restrict_candidates(tgt, qtype, mode, bundle.compat);

    RankedPrediction pred;
    pred.instance_id = q.instance_id;
    pred.entity = q.entity_id;
    pred.s = q.s;
    pred.mode = mode;
    pred.gt = std::move(gt);

    if (filtered) {
        const std::vector<EntityId>& global = bundle.anchors.pool(q.entity_id, q.s);
        std::set<EntityId> drop(global.begin(), global.end());
        for (EntityId g : pred.gt) drop.erase(g);
        candidates.erase(std::remove_if(candidates.begin(), candidates.end(),
                                        [&](EntityId c) { return drop.count(c) != 0; }),
                         candidates.end());
    }

    const Eigen::VectorXd scores = scorer.score_query(bundle, q, candidates);
    std::vector<std::size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double sa = scores[static_cast<Eigen::Index>(a)];
        const double sb = scores[static_cast<Eigen::Index>(b)];
        if (sa != sb) return sa > sb;
        return candidates[a] < candidates[b];
    });
    pred.ranked.reserve(order.size());
    pred.scores.reserve(order.size());
    for (std::size_t i : order) {
        pred.ranked.push_back(candidates[i]);
        pred.scores.push_back(scores[static_cast<Eigen::Index>(i)]);
    }
    for (EntityId id : pred.ranked)
        if (pred.is_gt(id)) {
            pred.gt_in_candidates = true;
            break;
        }
    return pred;
}

// Ground truth taken from the entity's `gt_split` pool (global when nullopt).
inline RankedPrediction rank_query(const Scorer& scorer, const DatasetBundle& bundle,
                                   const QueryInstance& q, RetrievalMode mode,
                                   std::optional<Split> gt_split, bool filtered = false) {
    return rank_query_with_gt(scorer, bundle, q, mode, bundle.pool_of(q.entity_id, q.s, gt_split),
                              filtered);
}

inline int hit_at_k(const RankedPrediction& pred, int k) {
    require(k >= 1, errkind::invalid_argument, "k must be >= 1");
    const std::size_t top = std::min<std::size_t>(static_cast<std::size_t>(k), pred.ranked.size());
    for (std::size_t i = 0; i < top; ++i)
        if (pred.is_gt(pred.ranked[i])) return 1;
    return 0;
}

inline double recall_at_k(const RankedPrediction& pred, int k) {
    require(k >= 1, errkind::invalid_argument, "k must be >= 1");
    require(!pred.gt.empty(), errkind::invalid_argument,
            "recall undefined for empty ground-truth set");
    const std::size_t top = std::min<std::size_t>(static_cast<std::size_t>(k), pred.ranked.size());
    std::size_t found = 0;
    for (std::size_t i = 0; i < top; ++i)
        if (pred.is_gt(pred.ranked[i])) ++found;
    return static_cast<double>(found) / static_cast<double>(pred.gt.size());
}

// Reciprocal rank of the best-ranked ground-truth candidate; 0 when no ground
// truth survives the candidate set (the caller tracks coverage).
inline double mrr(const RankedPrediction& pred) {
    require(!pred.gt.empty(), errkind::invalid_argument, "mrr undefined for empty ground-truth set");
    for (std::size_t i = 0; i < pred.ranked.size(); ++i)
        if (pred.is_gt(pred.ranked[i])) return 1.0 / static_cast<double>(i + 1);
    return 0.0;
}

// ---------------------------------------------------------------------------
// Stratified report.
// ---------------------------------------------------------------------------

inline const char* mode_name(RetrievalMode m) {
    return m == RetrievalMode::Full ? "full" : "type";
}

struct MetricReport {
    struct Row {
        long n = 0;
        long gt_excluded = 0;  // queries whose ground truth fell outside the candidates
        std::map<int, double> hit;
        std::map<int, double> recall;
        double mrr = 0.0;
    };

    static const std::vector<std::string>& strata() {
        static const std::vector<std::string> s{"overall", "tcm2wm", "wm2tcm", "gt1", "gtmany"};
        return s;
    }

    std::vector<int> k_list;
    // mode name -> stratum -> averaged row
    std::map<std::string, std::map<std::string, Row>> rows;

    std::string render_tsv() const {
        std::ostringstream out;
        out << "mode\tstratum\tn";
        for (int k : k_list) out << "\thit@" << k;
        for (int k : k_list) out << "\trecall@" << k;
        out << "\tmrr\tgt_excluded\n";
        char buf[32];
        auto fmt = [&](double v) {
            std::snprintf(buf, sizeof buf, "%.6f", v);
            return std::string(buf);
        };
        for (const auto& [mode, strata_rows] : rows) {
            for (const auto& stratum : strata()) {
                auto it = strata_rows.find(stratum);
                if (it == strata_rows.end()) continue;
                const Row& r = it->second;
                out << mode << '\t' << stratum << '\t' << r.n;
                for (int k : k_list) out << '\t' << fmt(r.hit.at(k));
                for (int k : k_list) out << '\t' << fmt(r.recall.at(k));
                out << '\t' << fmt(r.mrr) << '\t' << r.gt_excluded << "\n";
            }
        }
        return out.str();
    }

    std::string render_jsonl() const {
        std::ostringstream out;
        char buf[32];
        auto fmt = [&](double v) {
            std::snprintf(buf, sizeof buf, "%.6f", v);
            return std::string(buf);
        };
        for (const auto& [mode, strata_rows] : rows) {
            for (const auto& stratum : strata()) {
                auto it = strata_rows.find(stratum);
                if (it == strata_rows.end()) continue;
                const Row& r = it->second;
                out << "{\"mode\":\"" << mode << "\",\"stratum\":\"" << stratum << "\",\"n\":" << r.n;
                for (int k : k_list) out << ",\"hit@" << k << "\":" << fmt(r.hit.at(k));
                for (int k : k_list) out << ",\"recall@" << k << "\":" << fmt(r.recall.at(k));
                out << ",\"mrr\":" << fmt(r.mrr) << ",\"gt_excluded\":" << r.gt_excluded << "}\n";
            }
        }
        return out.str();
    }

    double value(RetrievalMode mode, const std::string& stratum, const std::string& metric) const {
        const Row& r = rows.at(mode_name(mode)).at(stratum);
        if (metric == "mrr") return r.mrr;
        if (metric.rfind("hit@", 0) == 0) return r.hit.at(std::stoi(metric.substr(4)));
        if (metric.rfind("recall@", 0) == 0) return r.recall.at(std::stoi(metric.substr(7)));
        fail(errkind::invalid_argument, "unknown metric '" + metric + "'");
    }
};

// Queries of `split`: every instance whose entity has a non-empty pool there.
inline std::vector<const QueryInstance*> eligible_queries(const DatasetBundle& bundle,
                                                          const PoolIndex& pools) {
    std::vector<const QueryInstance*> out;
    for (const auto& q : bundle.queries)
        if (!pools.of(q.entity_id, q.s).empty()) out.push_back(&q);
    return out;
}

inline std::vector<const QueryInstance*> eligible_queries(const DatasetBundle& bundle,
                                                          std::optional<Split> split) {
    return eligible_queries(bundle, PoolIndex(bundle, split));
}

// Grouped multi-positive evaluation: macro-average per query within each
// stratum, for every requested mode. Scoring may fan out over `threads`;
// reduction order is fixed regardless.
inline MetricReport evaluate(const Scorer& scorer, const DatasetBundle& bundle,
                             std::optional<Split> split, const std::vector<RetrievalMode>& modes,
                             const std::vector<int>& k_list, bool filtered = false,
                             int threads = 1) {
    require(!k_list.empty(), errkind::invalid_argument, "k list must be non-empty");
    MetricReport report;
    report.k_list = k_list;

    const PoolIndex pools(bundle, split);
    const std::vector<const QueryInstance*> queries = eligible_queries(bundle, pools);

    for (RetrievalMode mode : modes) {
        struct PerQuery {
            Direction s;
            bool multi = false;
            bool excluded = false;
            std::vector<double> hit;
            std::vector<double> recall;
            double rr = 0.0;
        };
        std::vector<PerQuery> results(queries.size());

        auto run_range = [&](std::size_t lo, std::size_t hi) {
            for (std::size_t i = lo; i < hi; ++i) {
                const QueryInstance& q = *queries[i];
                RankedPrediction pred =
                    rank_query_with_gt(scorer, bundle, q, mode, pools.of(q.entity_id, q.s), filtered);
                PerQuery& r = results[i];
                r.s = q.s;
                r.multi = pred.gt.size() > 1;
                r.excluded = !pred.gt_in_candidates;
                r.hit.reserve(k_list.size());
                r.recall.reserve(k_list.size());
                for (int k : k_list) {
                    r.hit.push_back(hit_at_k(pred, k));
                    r.recall.push_back(recall_at_k(pred, k));
                }
                r.rr = mrr(pred);
            }
        };
        if (threads <= 1 || queries.size() < 2) {
            run_range(0, queries.size());
        } else {
            const std::size_t nt = std::min<std::size_t>(static_cast<std::size_t>(threads), queries.size());
            std::vector<std::thread> pool;
            const std::size_t chunk = (queries.size() + nt - 1) / nt;
            for (std::size_t t = 0; t < nt; ++t) {
                const std::size_t lo = t * chunk;
                const std::size_t hi = std::min(queries.size(), lo + chunk);
                if (lo >= hi) break;
                pool.emplace_back(run_range, lo, hi);
            }
            for (auto& th : pool) th.join();
        }

        std::map<std::string, MetricReport::Row> strata_rows;
        for (const auto& name : MetricReport::strata()) {
            MetricReport::Row row;
            for (int k : k_list) {
                row.hit[k] = 0.0;
                row.recall[k] = 0.0;
            }
            strata_rows[name] = row;
        }
        auto add_to = [&](const std::string& name, const PerQuery& r) {
            MetricReport::Row& row = strata_rows[name];
            row.n += 1;
            if (r.excluded) row.gt_excluded += 1;
            for (std::size_t ki = 0; ki < k_list.size(); ++ki) {
                row.hit[k_list[ki]] += r.hit[ki];
                row.recall[k_list[ki]] += r.recall[ki];
            }
            row.mrr += r.rr;
        };
        for (const PerQuery& r : results) {
            add_to("overall", r);
            add_to(r.s == Direction::TcmToWm ? "tcm2wm" : "wm2tcm", r);
            add_to(r.multi ? "gtmany" : "gt1", r);
        }
        for (auto& [name, row] : strata_rows) {
            if (row.n == 0) continue;
            for (int k : k_list) {
                row.hit[k] /= static_cast<double>(row.n);
                row.recall[k] /= static_cast<double>(row.n);
            }
            row.mrr /= static_cast<double>(row.n);
        }
        report.rows[mode_name(mode)] = std::move(strata_rows);
    }
    return report;
}

}  // namespace qcea
