#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "qcea/bundle.hpp"
#include "qcea/common.hpp"
#include "qcea/evaluation.hpp"

namespace qcea {

// One generated cross-system question. Single-hop gold is the source's anchor
// counterparts; two-hop gold is the union of their intra-graph neighbors.
struct Question {
    std::int64_t id = 0;
    std::string category;
    EntityId source = 0;
    Direction s = Direction::TcmToWm;
    int hops = 1;
    std::string type_family;
    std::vector<EntityId> gold;  // sorted
};

enum class SettingKind { Oracle, Predicted, TopX, DropX, NoAlign };

struct AlignmentSetting {
    SettingKind kind = SettingKind::Oracle;
    int top_x = 0;
    double drop_ratio = 0.0;
    std::uint64_t drop_seed = 0;

    static AlignmentSetting oracle() { return {SettingKind::Oracle, 0, 0.0, 0}; }
    static AlignmentSetting predicted() { return {SettingKind::Predicted, 0, 0.0, 0}; }
    static AlignmentSetting top_x_of(int x) { return {SettingKind::TopX, x, 0.0, 0}; }
    static AlignmentSetting drop_x(double ratio, std::uint64_t seed) {
        return {SettingKind::DropX, 0, ratio, seed};
    }
    static AlignmentSetting no_align() { return {SettingKind::NoAlign, 0, 0.0, 0}; }

    std::string label() const {
        char buf[48];
        switch (kind) {
            case SettingKind::Oracle: return "oracle";
            case SettingKind::Predicted: return "predicted";
            case SettingKind::TopX:
                std::snprintf(buf, sizeof buf, "topx=%d", top_x);
                return buf;
            case SettingKind::DropX:
                std::snprintf(buf, sizeof buf, "dropx=%.2f", drop_ratio);
                return buf;
            default: return "noalign";
        }
    }
};

struct RagTrace {
    std::int64_t question_id = 0;
    std::string setting;
    std::vector<EntityId> first_hop;  // retrieval order
    std::vector<EntityId> evidence;   // sorted, deduplicated
    bool cross_hit = false;
    double recall = 0.0;
};

struct QuestionSet {
    std::vector<Question> questions;
    std::vector<std::string> categories;  // fixed order
    std::vector<std::string> warnings;
};

// Categories: direction x hop depth x source type family. Presets carry two
// families per side; fewer eligible sources than requested reduces counts
// with a warning.
inline QuestionSet generate_questions(const DatasetBundle& bundle, int per_category,
                                      std::uint64_t seed) {
    require(per_category >= 1, errkind::invalid_argument, "per_category must be positive");
    QuestionSet out;
    std::int64_t next_id = 0;

    for (int di = 0; di < 2; ++di) {
        const Direction s = static_cast<Direction>(di);
        const Graph& src_graph = bundle.graph(source_side(s));
        const Graph& tgt_graph = bundle.graph(target_side(s));

        std::set<std::string> family_set;
        for (const auto& e : src_graph.entities)
            if (!bundle.anchors.pool(e.id, s).empty()) family_set.insert(e.type_tag);
        std::vector<std::string> families(family_set.begin(), family_set.end());
        if (families.size() > 2) {
            out.warnings.push_back("direction " + std::to_string(di) + " has " +
                                   std::to_string(families.size()) +
                                   " source type families; using the first two");
            families.resize(2);
        }
        if (families.size() < 2)
            out.warnings.push_back("direction " + std::to_string(di) +
                                   " has fewer than two source type families");

        for (int hops = 1; hops <= 2; ++hops) {
            for (std::size_t fi = 0; fi < families.size(); ++fi) {
                const std::string& family = families[fi];
                const std::string category = std::string(di == 0 ? "tcm2wm" : "wm2tcm") + "-" +
                                             std::to_string(hops) + "hop-" + family;
                out.categories.push_back(category);

                std::vector<std::pair<EntityId, std::vector<EntityId>>> eligible;
                for (const auto& e : src_graph.entities) {
                    if (e.type_tag != family) continue;
                    const auto& pool = bundle.anchors.pool(e.id, s);
                    if (pool.empty()) continue;
                    std::vector<EntityId> gold;
                    if (hops == 1) {
                        gold = pool;
                    } else {
                        std::set<EntityId> g;
                        for (EntityId c : pool) {
                            const auto& nb = tgt_graph.neighbors(c);
                            g.insert(nb.begin(), nb.end());
                        }
                        gold.assign(g.begin(), g.end());
                    }
                    if (gold.empty()) continue;  // unreachable under Oracle
                    eligible.emplace_back(e.id, std::move(gold));
                }

                if (static_cast<int>(eligible.size()) < per_category)
                    out.warnings.push_back("category " + category + " reduced to " +
                                           std::to_string(eligible.size()) + " questions");
                Rng rng = substream(seed, "questions", hash_str(category));
                std::vector<std::size_t> idx(eligible.size());
                for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
                idx = sample_without_replacement(std::move(idx),
                                                 static_cast<std::size_t>(per_category), rng);
                std::sort(idx.begin(), idx.end());
                for (std::size_t i : idx) {
                    Question q;
                    q.id = next_id++;
                    q.category = category;
                    q.source = eligible[i].first;
                    q.s = s;
                    q.hops = hops;
                    q.type_family = family;
                    q.gold = eligible[i].second;
                    out.questions.push_back(std::move(q));
                }
            }
        }
    }
    return out;
}

// Ranked cross-system candidate lists per (source entity, direction), taken
// from one scorer under one retrieval mode. The query instance of an entity is
// its lowest-id instance for that direction.
struct PredictionIndex {
    std::map<std::pair<EntityId, int>, std::vector<EntityId>> ranked;

    const std::vector<EntityId>& of(EntityId source, Direction s) const {
        static const std::vector<EntityId> empty;
        auto it = ranked.find({source, dir_index(s)});
        return it == ranked.end() ? empty : it->second;
    }
};

inline PredictionIndex build_predictions(const Scorer& scorer, const DatasetBundle& bundle,
                                         const std::vector<Question>& questions,
                                         RetrievalMode mode) {
    PredictionIndex out;
    for (const Question& q : questions) {
        const auto key = std::make_pair(q.source, dir_index(q.s));
        if (out.ranked.count(key) != 0) continue;
        const auto instances = bundle.instances_of(q.source, q.s);
        require(!instances.empty(), errkind::validation,
                "question source " + std::to_string(q.source) + " has no query instance");
        RankedPrediction pred =
            rank_query_with_gt(scorer, bundle, *instances.front(), mode, {});
        out.ranked.emplace(key, std::move(pred.ranked));
    }
    return out;
}

// First hop through the setting's cross-system candidates (capped at k), then
// optional expansion over all intra-graph neighbors of the survivors. DropX
// removes floor(ratio*n) of the capped list via a per-(question,seed)
// permutation prefix, so removal sets nest across ratios under one seed.
inline RagTrace retrieve(const Question& q, const AlignmentSetting& setting,
                         const DatasetBundle& bundle, const PredictionIndex& predictions, int k) {
    require(k >= 1, errkind::invalid_argument, "retrieval cap k must be positive");
    RagTrace trace;
    trace.question_id = q.id;
    trace.setting = setting.label();

    std::vector<EntityId> first;
    switch (setting.kind) {
        case SettingKind::NoAlign:
            break;
        case SettingKind::Oracle:
            first = bundle.anchors.pool(q.source, q.s);
            break;
        case SettingKind::Predicted:
            first = predictions.of(q.source, q.s);
            break;
        case SettingKind::TopX: {
            first = predictions.of(q.source, q.s);
            if (static_cast<int>(first.size()) > setting.top_x) first.resize(setting.top_x);
            break;
        }
        case SettingKind::DropX: {
            first = predictions.of(q.source, q.s);
            if (static_cast<int>(first.size()) > k) first.resize(static_cast<std::size_t>(k));
            const std::size_t n = first.size();
            const std::size_t drop =
                static_cast<std::size_t>(setting.drop_ratio * static_cast<double>(n));
            if (drop > 0) {
                std::vector<std::size_t> perm(n);
                for (std::size_t i = 0; i < n; ++i) perm[i] = i;
                Rng rng = substream(setting.drop_seed, "dropx", static_cast<std::uint64_t>(q.id));
                shuffle_inplace(perm, rng);
                std::vector<bool> removed(n, false);
                for (std::size_t i = 0; i < drop; ++i) removed[perm[i]] = true;
                std::vector<EntityId> kept;
                for (std::size_t i = 0; i < n; ++i)
                    if (!removed[i]) kept.push_back(first[i]);
                first = std::move(kept);
            }
            break;
        }
    }
    if (static_cast<int>(first.size()) > k) first.resize(static_cast<std::size_t>(k));
    trace.first_hop = first;

    if (q.hops == 1) {
        trace.evidence = first;
        std::sort(trace.evidence.begin(), trace.evidence.end());
    } else {
        const Graph& tgt_graph = bundle.graph(target_side(q.s));
        std::set<EntityId> ev;
        for (EntityId c : first) {
            const auto& nb = tgt_graph.neighbors(c);
            ev.insert(nb.begin(), nb.end());
        }
        trace.evidence.assign(ev.begin(), ev.end());
    }

    // Cross-system hit: the first hop reached a counterpart that leads to gold.
    const auto& pool = bundle.anchors.pool(q.source, q.s);
    const Graph& tgt_graph = bundle.graph(target_side(q.s));
    for (EntityId c : first) {
        if (!std::binary_search(pool.begin(), pool.end(), c)) continue;
        if (q.hops == 1) {
            trace.cross_hit = true;
            break;
        }
        for (EntityId nb : tgt_graph.neighbors(c))
            if (std::binary_search(q.gold.begin(), q.gold.end(), nb)) {
                trace.cross_hit = true;
                break;
            }
        if (trace.cross_hit) break;
    }

    std::size_t found = 0;
    for (EntityId g : q.gold)
        if (std::binary_search(trace.evidence.begin(), trace.evidence.end(), g)) ++found;
    trace.recall = q.gold.empty() ? 0.0 : static_cast<double>(found) / static_cast<double>(q.gold.size());
    return trace;
}

// ---------------------------------------------------------------------------
// Metrics: evidence recall@K and cross-system hit rate per setting x category,
// with an overall macro over categories.
// ---------------------------------------------------------------------------

struct RagReport {
    struct Row {
        long n = 0;
        double recall = 0.0;
        double hit_rate = 0.0;
    };
    int k = 0;
    // setting label -> category -> row; category "overall" is the macro mean.
    std::map<std::string, std::map<std::string, Row>> rows;

    std::string render_tsv() const {
        std::ostringstream out;
        out << "setting\tcategory\tn\tevidence_recall@" << k << "\tcross_system_hit_rate\n";
        char buf[32];
        auto fmt = [&](double v) {
            std::snprintf(buf, sizeof buf, "%.6f", v);
            return std::string(buf);
        };
        for (const auto& [setting, cats] : rows)
            for (const auto& [cat, r] : cats)
                out << setting << '\t' << cat << '\t' << r.n << '\t' << fmt(r.recall) << '\t'
                    << fmt(r.hit_rate) << "\n";
        return out.str();
    }
};

inline RagReport rag_metrics(const std::vector<Question>& questions,
                             const std::map<std::string, std::vector<RagTrace>>& traces_by_setting,
                             int k) {
    require(!questions.empty(), errkind::invalid_argument, "no questions to score");
    std::unordered_map<std::int64_t, const Question*> by_id;
    for (const auto& q : questions) by_id.emplace(q.id, &q);

    RagReport report;
    report.k = k;
    for (const auto& [setting, traces] : traces_by_setting) {
        require(!traces.empty(), errkind::invalid_argument,
                "no traces for setting '" + setting + "'");
        std::map<std::string, RagReport::Row> acc;
        for (const RagTrace& t : traces) {
            const Question* q = by_id.at(t.question_id);
            RagReport::Row& r = acc[q->category];
            r.n += 1;
            r.recall += t.recall;
            r.hit_rate += t.cross_hit ? 1.0 : 0.0;
        }
        RagReport::Row overall;
        for (auto& [cat, r] : acc) {
            r.recall /= static_cast<double>(r.n);
            r.hit_rate /= static_cast<double>(r.n);
            overall.n += r.n;
            overall.recall += r.recall;
            overall.hit_rate += r.hit_rate;
        }
        const double nc = static_cast<double>(acc.size());
        overall.recall /= nc;
        overall.hit_rate /= nc;
        acc["overall"] = overall;
        report.rows[setting] = std::move(acc);
    }
    return report;
}

inline std::vector<RagTrace> run_setting(const std::vector<Question>& questions,
                                         const AlignmentSetting& setting,
                                         const DatasetBundle& bundle,
                                         const PredictionIndex& predictions, int k) {
    std::vector<RagTrace> out;
    out.reserve(questions.size());
    for (const Question& q : questions) out.push_back(retrieve(q, setting, bundle, predictions, k));
    return out;
}

// Comparative sweep: Oracle / Predicted / NoAlign plus TopX over x_values and
// DropX over ratios, the latter averaged over `drop_seeds` removal seeds.
struct SweepRow {
    std::string setting;
    double recall = 0.0;
    double hit_rate = 0.0;
};

inline std::vector<SweepRow> sweep_settings(const std::vector<Question>& questions,
                                            const DatasetBundle& bundle,
                                            const PredictionIndex& predictions, int k,
                                            const std::vector<int>& x_values,
                                            const std::vector<double>& drop_ratios,
                                            std::uint64_t seed, int drop_seeds = 5) {
    require(drop_seeds >= 1, errkind::invalid_argument, "need at least one removal seed");
    std::vector<SweepRow> rows;
    auto overall = [&](const AlignmentSetting& s) {
        std::map<std::string, std::vector<RagTrace>> t{
            {s.label(), run_setting(questions, s, bundle, predictions, k)}};
        const auto& row = rag_metrics(questions, t, k).rows.at(s.label()).at("overall");
        return std::make_pair(row.recall, row.hit_rate);
    };

    for (const AlignmentSetting& s :
         {AlignmentSetting::oracle(), AlignmentSetting::predicted(), AlignmentSetting::no_align()}) {
        auto [rec, hit] = overall(s);
        rows.push_back({s.label(), rec, hit});
    }
    for (int x : x_values) {
        auto [rec, hit] = overall(AlignmentSetting::top_x_of(x));
        rows.push_back({AlignmentSetting::top_x_of(x).label(), rec, hit});
    }
    for (double ratio : drop_ratios) {
        double rec = 0.0, hit = 0.0;
        for (int t = 0; t < drop_seeds; ++t) {
            auto [r, h] = overall(AlignmentSetting::drop_x(ratio, splitmix64(seed + static_cast<std::uint64_t>(t))));
            rec += r;
            hit += h;
        }
        rows.push_back({AlignmentSetting::drop_x(ratio, 0).label(),
                        rec / static_cast<double>(drop_seeds), hit / static_cast<double>(drop_seeds)});
    }
    return rows;
}

}  // namespace qcea
