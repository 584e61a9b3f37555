#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "qcea/common.hpp"
#include "qcea/graph.hpp"
#include "qcea/model.hpp"

namespace qcea {

// One query of a contrastive batch: the anchor pair driving it supplies the
// forced ground-truth positive.
struct BatchItem {
    std::int64_t instance_id = 0;
    EntityId entity = 0;
    EntityId forced_target = 0;
    std::vector<EntityId> positives;  // forced target first
    std::vector<EntityId> negatives;  // disjoint from the global pool
};

struct TrainBatch {
    Direction s = Direction::TcmToWm;
    std::vector<BatchItem> items;
    // Queries whose feasible negative space was smaller than the requested K.
    int clamped_negative_queries = 0;
};

struct LossConfig {
    double tau = 0.1;
    double lambda_dir = 0.5;
    double lambda_reg = 0.0;
};

// Multi-positive contrastive loss (Eq. 17), log-sum-exp stable.
inline double mp_loss(std::span<const double> pos_logits, std::span<const double> neg_logits,
                      double tau) {
    require(tau > 0.0, errkind::invalid_argument, "temperature must be positive");
    require(!pos_logits.empty(), errkind::invalid_argument,
            "mp_loss needs at least one positive logit");
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : pos_logits) mx = std::max(mx, v / tau);
    for (double v : neg_logits) mx = std::max(mx, v / tau);
    double sum_pos = 0.0, sum_all = 0.0;
    for (double v : pos_logits) sum_pos += std::exp(v / tau - mx);
    sum_all = sum_pos;
    for (double v : neg_logits) sum_all += std::exp(v / tau - mx);
    return std::log(sum_all) - std::log(sum_pos);
}

// Eq. 18: lambda_dir weights the WM->TCM term, plus l2 regularization over
// every parameter entry.
inline double total_loss(double loss_tcm2wm, double loss_wm2tcm, double param_sum_squares,
                         double lambda_dir, double lambda_reg) {
    return lambda_dir * loss_wm2tcm + (1.0 - lambda_dir) * loss_tcm2wm +
           lambda_reg * param_sum_squares;
}

inline double total_loss(double loss_tcm2wm, double loss_wm2tcm, const ModelParams& params,
                         double lambda_dir, double lambda_reg) {
    return total_loss(loss_tcm2wm, loss_wm2tcm, params.sum_squares(), lambda_dir, lambda_reg);
}

}  // namespace qcea
