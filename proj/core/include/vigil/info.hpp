#pragma once

#include <cstdint>
#include <span>

#include <Eigen/Core>

#include "vigil/oom.hpp"

namespace vigil {

/// Query-switching cost structure.  The cost of the first chosen query is
/// charged against the model's initial query.
struct CostModel {
    Eigen::MatrixXd cost;  // C(prev, next)
    double alpha = 0.0;
    int initial_query = 0;

    double step_cost(int prev, int next) const { return cost(prev, next); }
};

/// Binary entropy in bits; clamps inputs within 1e-12 of [0, 1] and throws
/// DomainError beyond that.
double binary_entropy(double p);

/// binary_entropy of the filtered lookahead safety probability.
double history_entropy(const FilterState& f, const SafetyPredictor& sp);

/// Per-trajectory quantities feeding the Monte-Carlo objective and its
/// gradient estimators.  score_prefix row t holds the cumulative policy
/// score sum_{i<=t} grad log pi(sigma_i | history_i), flattened over the
/// policy parameters.
struct ObjectiveSample {
    Eigen::VectorXd step_entropy;  // bits, length K+1
    Eigen::VectorXd step_cost;     // length K+1
    Eigen::MatrixXd score_prefix;  // (K+1) x dim(theta)
    std::int64_t trajectory_id = 0;
};

/// Monte-Carlo estimate of the horizon objective:
/// (1/K) sum_t mean_v entropy[t] + alpha * sum_t mean_v cost[t], t = 0..K.
double objective_estimate(std::span<const ObjectiveSample> samples, const CostModel& cm,
                          int horizon);

/// Score-function estimate of the entropy-term gradient at step t, weighting
/// the length-t prefix score of each sampled history by its entropy.  When
/// `weights` is non-empty it replaces the uniform 1/V averaging (used by
/// exhaustive-enumeration oracles); it must sum to 1.
Eigen::VectorXd estimate_entropy_gradient(std::span<const ObjectiveSample> samples, int t,
                                          std::span<const double> weights = {});

/// Same estimator shape for the expected query-cost term at step t.
Eigen::VectorXd estimate_cost_gradient(std::span<const ObjectiveSample> samples, int t,
                                       const CostModel& cm,
                                       std::span<const double> weights = {});

}  // namespace vigil
