#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <ostream>

#include "vigil/info.hpp"
#include "vigil/model.hpp"
#include "vigil/policy.hpp"

namespace vigil {

enum class Optimizer { sgd, adam };

struct TrainConfig {
    double learning_rate = 1e-2;
    int batch_size = 64;
    int iterations = 1000;
    int horizon = 1;    // K
    int lookahead = 0;  // k
    double alpha = 0.0;
    std::uint64_t seed = 0;
    Optimizer optimizer = Optimizer::sgd;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double clip_norm = 5.0;
    bool baseline_on = false;
    bool full_episode_score = false;
    int eval_every = 0;  // 0: checkpoint only at the end
    int workers = 1;

    void validate() const;
};

/// Everything derived from a scenario that sampling and prediction need.
struct ModelBundle {
    ProductHmm product;
    ObservableOperatorSet ops;
    SafetyPredictor predictor;
    CostModel cost;
    int horizon = 1;
    int lookahead = 0;
};

struct BundleOptions {
    std::optional<int> lookahead_override;
    std::optional<double> alpha_override;
    bool prune = false;
};

ModelBundle make_bundle(const Scenario& sc, const BundleOptions& opts = {});

/// Ground truth and filtered predictions of one sampled episode.  States run
/// to K + k so the realized lookahead outcome exists for every step.
struct TrajectoryRecord {
    std::vector<int> states;              // z_0 .. z_{K+k}
    std::vector<int> queries;             // sigma_0 .. sigma_K
    std::vector<int> observations;        // o_0 .. o_K
    Eigen::VectorXd p_safe;               // filtered P(no failure in window | history)
    std::vector<std::uint8_t> outcome;    // realized failure-in-window indicator
    Eigen::VectorXd step_cost;
    std::uint64_t episode_seed = 0;
};

struct EpisodeSample {
    TrajectoryRecord record;
    Eigen::VectorXd entropy;  // bits per step
    std::unique_ptr<GradientBuffer> tape;  // present when scores were requested
};

/// Samples one episode of the policy-induced process.  The filter sees only
/// (query, observation); true states are recorded for outcome realization
/// and the oracle baseline.  One seeded stream drives every draw, in fixed
/// order, so a seed fully determines the episode.
EpisodeSample sample_trajectory(const ModelBundle& bundle, const PolicyParams& params,
                                std::uint64_t episode_seed, bool with_scores);

/// Expands an episode into the estimator-facing sample (cumulative prefix
/// scores are materialized here; training itself uses the tape directly).
ObjectiveSample make_objective_sample(const EpisodeSample& ep, std::int64_t trajectory_id);

/// Deterministic sibling of sample_trajectory: filters a fixed history and
/// scores the policy's (forced) choices along it.  Enumeration oracles feed
/// every possible history through this with exact probability weights.
ObjectiveSample replay_history(const ModelBundle& bundle, const PolicyParams& params,
                               std::span<const int> queries, std::span<const int> observations,
                               std::int64_t trajectory_id);

struct OptimizerState {
    Eigen::VectorXd first_moment;
    Eigen::VectorXd second_moment;
    std::int64_t step = 0;
};

struct StepDiagnostics {
    double objective = 0.0;
    double entropy_term = 0.0;
    double cost_term = 0.0;
    double grad_norm = 0.0;  // pre-clip
    bool clip_applied = false;
};

/// One policy-gradient update from a sampled batch: assembles the entropy and
/// cost gradient estimates over t = 0..K, clips by global norm, and applies
/// the configured optimizer.  Throws NonFiniteGradient when the estimate
/// contains NaN/inf.
StepDiagnostics gradient_step(PolicyParams& params, std::span<const EpisodeSample> batch,
                              const TrainConfig& cfg, OptimizerState& opt);

struct TrainHooks {
    std::ostream* log = nullptr;       // iter,entropy_term,cost_term,objective,grad_norm,clip_applied
    std::ostream* eval_log = nullptr;  // held-out estimates at eval_every
    std::function<void(const PolicyParams&, int iteration)> checkpoint;
};

struct TrainResult {
    PolicyParams params;
    int iterations_run = 0;
};

TrainResult train(const ModelBundle& bundle, PolicyParams initial, const TrainConfig& cfg,
                  const TrainHooks& hooks = {});

/// Index-ordered parallel map: results are identical for any worker count.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

/// %.12g formatting used by every CSV writer.
std::string g12(double v);

}  // namespace vigil
