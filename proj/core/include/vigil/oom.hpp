#pragma once

#include <span>
#include <vector>

#include "vigil/model.hpp"

namespace vigil {

/// Per-(observation, query) propagation operators A[o|q] with
/// A[o|q](i, j) = T(i, j) * E(o | j, q): move mass from state j to state i
/// while accounting for having observed o at j under query q.
/// Summing the operators over o recovers T.
struct ObservableOperatorSet {
    std::vector<SparseMat> operators;            // index q * num_obs + o
    SparseMat transition;                        // T
    std::vector<Eigen::VectorXd> emission_diag;  // index q * num_obs + o, length N
    int num_obs = 0;
    int num_queries = 0;
    std::uint64_t model_tag = 0;

    const SparseMat& op(int obs, int query) const {
        return operators[static_cast<std::size_t>(query * num_obs + obs)];
    }
    const Eigen::VectorXd& diag(int obs, int query) const {
        return emission_diag[static_cast<std::size_t>(query * num_obs + obs)];
    }
};

ObservableOperatorSet build_operators(const ProductHmm& p);

/// Scaled forward-filter state: the normalized posterior over product states
/// given the (query, observation) history, plus the accumulated natural-log
/// likelihood of that history.
struct FilterState {
    Eigen::VectorXd posterior;
    double log_likelihood = 0.0;
    int step = 0;
    std::uint64_t model_tag = 0;
};

/// Throws ZeroLikelihood when the first observation is impossible.
FilterState filter_init(const ProductHmm& p, int query0, int obs0);

/// One filtering step; throws ZeroLikelihood on an impossible observation.
FilterState filter_step(const FilterState& f, const ObservableOperatorSet& ops, int query, int obs);

/// log P(o_{0:t} | sigma_{0:t}) through the scaled filter.  Returns -inf for
/// zero-probability sequences instead of throwing.
double sequence_log_prob(const ProductHmm& p, const ObservableOperatorSet& ops,
                         std::span<const int> queries, std::span<const int> observations);

/// Precomputed row vector v_k with v_k[z] = P(no failure within k steps of
/// now | current state z).  v_0 is the safe-state indicator.
struct SafetyPredictor {
    int lookahead = 0;
    Eigen::VectorXd safe_row;
    std::uint64_t model_tag = 0;
};

SafetyPredictor build_safety_predictor(const ProductHmm& p, int lookahead);

/// P(no failure within the lookahead window | observed history) = v_k . posterior.
/// Throws ModelMismatch when the state and predictor come from different models.
double safety_probability(const FilterState& f, const SafetyPredictor& sp);

/// Same quantity conditioned on the exact current state (simulation-only baseline).
double oracle_safety(int z, const SafetyPredictor& sp);

}  // namespace vigil
