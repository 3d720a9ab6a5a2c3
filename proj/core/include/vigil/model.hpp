#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "vigil/errors.hpp"

namespace vigil {

// Atomic-proposition sets are bitmasks over the scenario's proposition list.
using Label = std::uint32_t;

inline constexpr double kStochasticTol = 1e-12;

using SparseMat = Eigen::SparseMatrix<double>;  // column-major

/// Labeled hidden Markov model with a query-controlled emission channel.
///
/// The transition matrix is stored reversed: column j holds the outgoing
/// distribution of state j, so `transition(i, j)` is P(next = i | cur = j)
/// and every column sums to one.
struct LabeledHmm {
    std::vector<std::string> state_names;
    std::vector<std::string> obs_names;
    std::vector<std::string> query_names;
    std::vector<std::string> prop_names;

    SparseMat transition;                   // |S| x |S|, column = source
    std::vector<Eigen::MatrixXd> emission;  // emission[q](o, s) = E(o | s, q)
    Eigen::VectorXd initial_dist;           // mu0
    int initial_query = 0;
    std::vector<Label> labels;              // per-state proposition bitmask

    int num_states() const { return static_cast<int>(state_names.size()); }
    int num_obs() const { return static_cast<int>(obs_names.size()); }
    int num_queries() const { return static_cast<int>(query_names.size()); }

    /// Throws InvalidModel unless all stochasticity invariants hold.
    void validate() const;
};

/// Deterministic finite automaton over label sets.  Transitions are stored
/// explicitly per (state, label) pair; anything not listed is undefined.
struct Dfa {
    std::vector<std::string> state_names;
    int initial = 0;
    std::vector<std::uint8_t> accepting;  // failure-accepting mask
    std::map<std::pair<int, Label>, int> transitions;

    int num_states() const { return static_cast<int>(state_names.size()); }

    /// Throws UndefinedDfaTransition when (q, label) has no entry.
    int step(int q, Label label) const;
    bool has_transition(int q, Label label) const {
        return transitions.count({q, label}) != 0;
    }
    void validate() const;
};

/// Synchronous product of a labeled HMM and a failure DFA.  Product state
/// z = s * |Q| + q tracks both the physical state and the specification
/// progress; failure states are those whose DFA component accepts.
struct ProductHmm {
    int num_hmm_states = 0;
    int num_dfa_states = 0;
    int num_obs = 0;
    int num_queries = 0;
    int initial_query = 0;

    SparseMat transition;                   // N x N, column = source
    std::vector<Eigen::MatrixXd> emission;  // emission[q](o, z), inherited from the HMM
    Eigen::VectorXd initial_dist;
    std::vector<std::uint8_t> failure;      // F_Z mask
    bool failure_absorbing = false;

    // Content fingerprint used to detect cross-model misuse of derived
    // objects (operator sets, predictors, filter states).
    std::uint64_t tag = 0;

    int num_states() const { return num_hmm_states * num_dfa_states; }
    int index_of(int s, int q) const { return s * num_dfa_states + q; }
    int hmm_state_of(int z) const { return z / num_dfa_states; }
    int dfa_state_of(int z) const { return z % num_dfa_states; }
    bool is_failure(int z) const { return failure[static_cast<std::size_t>(z)] != 0; }

    void validate() const;
    /// Recomputes the content fingerprint; called by every constructor path.
    void refresh_tag();
};

/// A complete experiment description: model, specification, horizon,
/// lookahead, and the query-switching cost structure.
struct Scenario {
    LabeledHmm hmm;
    Dfa dfa;
    int horizon = 1;     // K
    int lookahead = 0;   // k
    Eigen::MatrixXd cost_matrix;  // C(prev, next)
    double alpha = 0.0;
    std::string name;
    std::string description;

    void validate() const;
};

/// Builds the product of `hmm` and `dfa`.  The DFA consumes the label of the
/// destination state on every transition; the initial DFA state is q0
/// regardless of the initial HMM state's label.
ProductHmm product_compose(const LabeledHmm& hmm, const Dfa& dfa);

/// True iff no probability mass can leave the failure set.
bool detect_absorbing(const ProductHmm& p);

/// Result of reachability pruning: a relabeled model plus the index maps in
/// both directions (old_of_new[z'] = z, new_of_old[z] = z' or -1).
struct PrunedProduct {
    ProductHmm product;
    std::vector<int> old_of_new;
    std::vector<int> new_of_old;
};

/// Drops product states unreachable from the initial distribution's support.
PrunedProduct prune_unreachable(const ProductHmm& p);

}  // namespace vigil
