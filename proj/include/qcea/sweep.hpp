#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qcea/bundle.hpp"
#include "qcea/common.hpp"
#include "qcea/evaluation.hpp"
#include "qcea/training.hpp"

namespace qcea {

struct RatioResult {
    double ratio = 1.0;
    bool skipped = false;
    MetricReport report;
};

// Restrict supervision to a prefix of a seeded shuffle of the train pairs
// (prefixes nest across ratios), leaving val/test untouched. Dropped pairs
// vanish from the anchor view entirely: they are unobserved correspondences.
inline DatasetBundle subsample_train(const DatasetBundle& bundle, double ratio,
                                     std::uint64_t seed) {
    require(ratio > 0.0 && ratio <= 1.0, errkind::invalid_argument,
            "seed ratio must lie in (0, 1]");
    std::vector<std::size_t> train_idx;
    for (std::size_t i = 0; i < bundle.anchors.pairs.size(); ++i)
        if (bundle.splits.label[i] == Split::Train) train_idx.push_back(i);
    Rng rng = substream(seed, "ratio-subsample");
    shuffle_inplace(train_idx, rng);
    const std::size_t keep =
        static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(train_idx.size())));
    std::vector<bool> kept(bundle.anchors.pairs.size(), true);
    for (std::size_t i = keep; i < train_idx.size(); ++i) kept[train_idx[i]] = false;

    DatasetBundle out = bundle;
    out.anchors.pairs.clear();
    out.splits.label.clear();
    for (std::size_t i = 0; i < bundle.anchors.pairs.size(); ++i) {
        if (!kept[i]) continue;
        out.anchors.pairs.push_back(bundle.anchors.pairs[i]);
        out.splits.label.push_back(bundle.splits.label[i]);
    }
    out.freeze();
    return out;
}

// §seed-ratio sweep: per ratio, retrain from scratch on the subsampled
// supervision and evaluate the test split. Deterministic per seed.
inline std::vector<RatioResult> seed_ratio_sweep(const DatasetBundle& bundle,
                                                 const std::vector<double>& ratios,
                                                 const ModelConfig& mcfg, const TrainConfig& tcfg,
                                                 std::uint64_t seed,
                                                 const std::vector<RetrievalMode>& modes,
                                                 const std::vector<int>& k_list) {
    std::vector<RatioResult> out;
    for (double ratio : ratios) {
        RatioResult rr;
        rr.ratio = ratio;
        DatasetBundle sub = subsample_train(bundle, ratio, seed);
        if (sub.pairs_of(Split::Train).empty()) {
            rr.skipped = true;
            out.push_back(std::move(rr));
            continue;
        }
        TrainConfig cfg = tcfg;
        cfg.seed = seed;
        QceaTrainResult trained = train_qcea(sub, mcfg, cfg);
        QceaScorer scorer(sub, trained.best);
        rr.report = evaluate(scorer, sub, Split::Test, modes, k_list);
        out.push_back(std::move(rr));
    }
    return out;
}

}  // namespace qcea
