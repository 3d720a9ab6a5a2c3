#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vigil/trainer.hpp"

namespace vigil {

/// Mean squared error between predicted failure probabilities and realized
/// binary outcomes.  `p_unsafe[t]` predicts outcome 1.
double brier_score(std::span<const double> p_unsafe, std::span<const std::uint8_t> outcomes);

/// Fraction of the random-to-oracle Brier gap recovered by the trained
/// policy.  Throws DegenerateGap unless b_random > b_oracle.
double gap_closure(double b_random, double b_trained, double b_oracle);

struct PolicyEvalRow {
    std::string policy;  // "trained", "random", "oracle"
    int lookahead = 0;
    double brier = 0.0;
    double brier_ci = 0.0;  // 95% half-width, normal approximation
    double cost = 0.0;
    double cost_ci = 0.0;
};

struct AccuracyTraceRow {
    int t = 0;
    std::string policy;
    double mean_abs_error = 0.0;
};

struct TrajectoryDumpRow {
    int traj = 0;
    int t = 0;
    double p_unsafe = 0.0;
    int outcome = 0;
    int query = -1;  // -1: oracle (no query)
    int obs = -1;
    double cost = 0.0;
};

struct EvalReport {
    std::vector<PolicyEvalRow> rows;                    // policy x lookahead
    std::vector<std::pair<int, double>> gap_closures;   // (lookahead, value), all-policies runs
    std::vector<AccuracyTraceRow> accuracy;
    std::vector<TrajectoryDumpRow> trajectories;        // only when dump requested
    int n_traj = 0;
    int horizon = 0;
    double alpha = 0.0;
    std::uint64_t seed = 0;
};

struct EvalOptions {
    bool run_random = true;
    bool run_oracle = true;
    bool dump_trajectories = false;
    bool prune = false;
    std::optional<double> alpha_override;
};

/// Monte-Carlo evaluation of the trained checkpoint (optional) against the
/// uniform-random and oracle baselines, at one or more lookaheads.  Each
/// policy consumes the same episode-seed stream; the oracle reads true
/// states, predicts from the exact-state safety row, and pays no query cost.
EvalReport evaluate(const Scenario& sc, const std::optional<PolicyParams>& trained,
                    std::vector<int> lookaheads, int n_traj, std::uint64_t seed,
                    const EvalOptions& opts = {});

/// One enumerated history with its exact probability under the policy.
struct SequenceProb {
    std::vector<int> queries;
    std::vector<int> observations;
    double prob = 0.0;
};

/// Exhaustively enumerates P_theta(y) over all (query, observation)
/// sequences of length `steps`, computing each likelihood by independent
/// summation over state paths (no operator recursion), for use as the
/// verification oracle.  Throws TooLarge when |O|^steps * |Sigma|^steps
/// exceeds one million.
std::vector<SequenceProb> brute_force_sequence_probs(const ProductHmm& p,
                                                     const PolicyParams& params, int steps);

/// Path-sum likelihood P(o_{0:t} | sigma_{0:t}) over all state paths.
double path_likelihood(const ProductHmm& p, std::span<const int> queries,
                       std::span<const int> observations);

/// Path-sum conditional safety P(no failure within `lookahead` of the last
/// step | history); the independent check of the operator-based predictor.
double path_safety_probability(const ProductHmm& p, std::span<const int> queries,
                               std::span<const int> observations, int lookahead);

/// Exact horizon objective of a policy on a small model, assembled entirely
/// from history enumeration and path sums:
/// (1/K) sum_t H(W_t | Y_{0:t}) + alpha sum_t E[C(Sigma_{t-1}, Sigma_t)].
double exact_objective(const ProductHmm& p, const PolicyParams& params, const CostModel& cm,
                       int horizon, int lookahead);

void write_report_csv(const EvalReport& report, const std::string& path);
void write_trajectories_csv(const EvalReport& report, const std::string& path);
void write_accuracy_csv(const EvalReport& report, const std::string& path);

}  // namespace vigil
