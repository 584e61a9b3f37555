#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qcea/common.hpp"
#include "qcea/model.hpp"

namespace qcea {

struct AdamState;
inline CheckpointEnvelope adam_to_envelope(const AdamState& s);
inline AdamState adam_from_envelope(const CheckpointEnvelope& env);

// Global-norm gradient clipping: scales every tensor by clip_norm/|g| when
// |g| exceeds clip_norm, preserving direction. Returns the applied scale.
template <typename ParamsLike>
inline double clip_global_norm(ParamsLike& grads, double clip_norm) {
    require(clip_norm > 0.0, errkind::invalid_argument, "clip norm must be positive");
    double sq = 0.0;
    for (const auto& t : grads.tensors()) {
        require(t.value->allFinite(), errkind::numeric_failure,
                "non-finite gradient in tensor " + t.name);
        sq += t.value->squaredNorm();
    }
    const double norm = std::sqrt(sq);
    if (norm <= clip_norm || norm == 0.0) return 1.0;
    const double scale = clip_norm / norm;
    for (auto& t : grads.tensors()) *t.value *= scale;
    return scale;
}

// Bias-corrected Adam over a named tensor pack. Moments are stored aligned
// with the pack's tensor order.
struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step = 0;
    std::vector<Eigen::MatrixXd> m;
    std::vector<Eigen::MatrixXd> v;

    template <typename ParamsLike>
    static AdamState for_params(ParamsLike& params, double lr) {
        AdamState s;
        s.lr = lr;
        for (const auto& t : params.tensors()) {
            s.m.push_back(Eigen::MatrixXd::Zero(t.value->rows(), t.value->cols()));
            s.v.push_back(Eigen::MatrixXd::Zero(t.value->rows(), t.value->cols()));
        }
        return s;
    }
};

// Optimizer state rides the same checkpoint envelope as the parameters, so a
// training run can be persisted alongside its model.
inline CheckpointEnvelope adam_to_envelope(const AdamState& s) {
    CheckpointEnvelope env;
    env.method = "adam-state";
    env.ints = {{"step", s.step}, {"tensors", static_cast<std::int64_t>(s.m.size())}};
    Eigen::MatrixXd hyper(4, 1);
    hyper << s.lr, s.beta1, s.beta2, s.eps;
    env.tensors.emplace_back("hyper", hyper);
    for (std::size_t i = 0; i < s.m.size(); ++i) {
        env.tensors.emplace_back("m_" + std::to_string(i), s.m[i]);
        env.tensors.emplace_back("v_" + std::to_string(i), s.v[i]);
    }
    return env;
}

inline AdamState adam_from_envelope(const CheckpointEnvelope& env) {
    require(env.method == "adam-state", errkind::io,
            "checkpoint method is '" + env.method + "', expected 'adam-state'");
    AdamState s;
    s.step = env.int_field("step");
    const Eigen::MatrixXd& hyper = env.tensor("hyper");
    s.lr = hyper(0, 0);
    s.beta1 = hyper(1, 0);
    s.beta2 = hyper(2, 0);
    s.eps = hyper(3, 0);
    const auto n = static_cast<std::size_t>(env.int_field("tensors"));
    for (std::size_t i = 0; i < n; ++i) {
        s.m.push_back(env.tensor("m_" + std::to_string(i)));
        s.v.push_back(env.tensor("v_" + std::to_string(i)));
    }
    return s;
}

// One optimizer step: clip (global norm), update moments, apply bias-corrected
// update. `grads` is consumed (clipped in place).
template <typename ParamsLike, typename GradsLike>
inline void adam_step(ParamsLike& params, GradsLike& grads, AdamState& state, double clip_norm) {
    auto prefs = params.tensors();
    auto grefs = grads.tensors();
    require(prefs.size() == grefs.size() && prefs.size() == state.m.size(),
            errkind::invalid_argument, "optimizer state does not match parameter pack");
    for (std::size_t i = 0; i < prefs.size(); ++i)
        require(prefs[i].value->rows() == grefs[i].value->rows() &&
                    prefs[i].value->cols() == grefs[i].value->cols(),
                errkind::dimension_mismatch, "gradient shape mismatch for " + prefs[i].name);

    clip_global_norm(grads, clip_norm);

    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < prefs.size(); ++i) {
        const Eigen::MatrixXd& g = *grefs[i].value;
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g.cwiseProduct(g);
        const Eigen::MatrixXd m_hat = state.m[i] / bc1;
        const Eigen::MatrixXd v_hat = state.v[i] / bc2;
        *prefs[i].value -=
            state.lr * m_hat.cwiseQuotient(v_hat.cwiseSqrt() + Eigen::MatrixXd::Constant(
                                                                   v_hat.rows(), v_hat.cols(), state.eps));
        require(prefs[i].value->allFinite(), errkind::numeric_failure,
                "non-finite update in tensor " + prefs[i].name);
    }
}

}  // namespace qcea
