#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "vigil/oom.hpp"
#include "vigil/rng.hpp"

namespace vigil {

enum class PolicyVariant { recurrent, tabular, uniform };

std::string to_string(PolicyVariant v);
PolicyVariant policy_variant_from_string(const std::string& s);

struct PolicyConfig {
    PolicyVariant variant = PolicyVariant::recurrent;
    int num_obs = 0;
    int num_queries = 0;
    int hidden = 32;       // recurrent cell width
    int window = 2;        // tabular history window (in (obs, query) pairs)
    std::uint64_t seed = 0;
    double init_scale = 0.08;
};

/// Flat-vector parameter layout of the gated recurrent policy.
struct RecurrentLayout {
    int hidden = 0, input = 0, actions = 0;
    int w_off = 0, u_off = 0, b_off = 0, wout_off = 0, bout_off = 0, total = 0;
    static RecurrentLayout make(int hidden, int num_obs, int num_queries);
};

/// Stochastic query policy parameters.  Construction draws the recurrent
/// weights uniformly from [-init_scale, init_scale] using the config seed and
/// zeroes the output bias so the initial policy is near-uniform; the tabular
/// logit table starts at zero (exactly uniform).
class PolicyParams {
public:
    static PolicyParams init(const PolicyConfig& cfg);

    const PolicyConfig& config() const { return cfg_; }
    PolicyVariant variant() const { return cfg_.variant; }
    int dim() const { return static_cast<int>(theta_.size()); }
    const Eigen::VectorXd& flat() const { return theta_; }
    void set_flat(const Eigen::VectorXd& theta);

    const RecurrentLayout& layout() const { return layout_; }
    int table_rows() const { return table_rows_; }

    /// Row index of a tabular history window (oldest pair first).
    int table_row(std::span<const std::pair<int, int>> window) const;

private:
    PolicyConfig cfg_;
    RecurrentLayout layout_;
    int table_rows_ = 0;
    Eigen::VectorXd theta_;
};

/// Per-episode policy memory.  The reset state is all-zeros (recurrent) or an
/// empty window (tabular); the step-0 action distribution conditions on it.
struct EncoderState {
    Eigen::VectorXd hidden;
    Eigen::VectorXd cell;
    std::vector<std::pair<int, int>> window;  // (obs, query), oldest first
    int step = 0;
};

EncoderState reset_encoder(const PolicyParams& params);

/// Softmax action distribution at the current encoder state.
Eigen::VectorXd action_distribution(const PolicyParams& params, const EncoderState& enc);

/// Deterministically folds (o_t, sigma_t) into the policy memory.
EncoderState advance(const PolicyParams& params, const EncoderState& enc, int obs, int query);

/// Inverse-CDF draw in declared action order; returns (action, log pi(action)).
std::pair<int, double> sample_action(const PolicyParams& params, const EncoderState& enc, Rng& rng);

/// Episode tape for score-function gradients.  Wraps the encoder updates of
/// one episode, caching the activations needed to backpropagate log-policy
/// gradients through time.
class GradientBuffer {
public:
    explicit GradientBuffer(const PolicyParams& params);

    /// Records the action chosen at `enc` (call once per step, in order).
    void record_choice(const EncoderState& enc, int chosen);

    /// Same update as vigil::advance, additionally caching activations.
    EncoderState advance(const EncoderState& enc, int obs, int query);

    int num_choices() const { return static_cast<int>(choices_.size()); }
    int dim() const { return params_->dim(); }

    /// grad_theta log pi(sigma_t | history up to t).
    Eigen::VectorXd step_score(int t) const;

    /// sum_t weights[t] * step_score(t), computed in one backward pass.
    Eigen::VectorXd weighted_score(std::span<const double> weights) const;

private:
    struct CellTape {
        int obs, query;
        Eigen::VectorXd gate_in, gate_forget, gate_out, gate_cand;
        Eigen::VectorXd c_prev, h_prev, tanh_c;
    };
    struct ChoiceTape {
        int chosen;
        int table_row;            // tabular
        int cells_before;         // recurrent: depth of the conditioning state
        Eigen::VectorXd hidden;   // recurrent: state the choice conditioned on
        Eigen::VectorXd probs;
    };

    const PolicyParams* params_;
    std::vector<CellTape> cells_;
    std::vector<ChoiceTape> choices_;
};

/// Simulation-only baseline: lookahead safety conditioned on the true
/// product state, bypassing sensors at zero query cost.
inline double oracle_predictor(int z, const SafetyPredictor& sp) { return oracle_safety(z, sp); }

/// Checkpoint container (JSON; parameters stored as bit-exact hex).
struct Checkpoint {
    PolicyParams params;
    std::uint64_t iteration = 0;
    std::string scenario_hash;
};

void save_checkpoint(const PolicyParams& params, std::uint64_t iteration,
                     const std::string& scenario_hash, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace vigil
