#include "vigil/oom.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace vigil {

ObservableOperatorSet build_operators(const ProductHmm& p) {
    const int n = p.num_states();
    ObservableOperatorSet set;
    set.num_obs = p.num_obs;
    set.num_queries = p.num_queries;
    set.model_tag = p.tag;
    set.transition = p.transition;
    set.operators.reserve(static_cast<std::size_t>(p.num_obs * p.num_queries));
    set.emission_diag.reserve(set.operators.capacity());
    for (int q = 0; q < p.num_queries; ++q) {
        for (int o = 0; o < p.num_obs; ++o) {
            SparseMat a = p.transition;
            for (int j = 0; j < n; ++j) {
                const double e = p.emission[static_cast<std::size_t>(q)](o, j);
                for (SparseMat::InnerIterator it(a, j); it; ++it) it.valueRef() *= e;
            }
            a.prune(0.0);
            a.makeCompressed();
            set.operators.push_back(std::move(a));
            set.emission_diag.push_back(p.emission[static_cast<std::size_t>(q)].row(o).transpose());
        }
    }
    return set;
}

namespace {

FilterState normalize_or_throw(Eigen::VectorXd unnorm, double prev_ll, int step,
                               std::uint64_t tag) {
    const double sum = unnorm.sum();
    if (!(sum > 0.0)) {
        std::ostringstream os;
        os << "observation at step " << step << " has zero likelihood under the model";
        throw ZeroLikelihood(os.str());
    }
    FilterState f;
    f.posterior = unnorm / sum;
    f.log_likelihood = prev_ll + std::log(sum);
    f.step = step;
    f.model_tag = tag;
    return f;
}

}  // namespace

FilterState filter_init(const ProductHmm& p, int query0, int obs0) {
    Eigen::VectorXd u =
        p.emission[static_cast<std::size_t>(query0)].row(obs0).transpose().cwiseProduct(
            p.initial_dist);
    return normalize_or_throw(std::move(u), 0.0, 0, p.tag);
}

FilterState filter_step(const FilterState& f, const ObservableOperatorSet& ops, int query,
                        int obs) {
    if (f.model_tag != ops.model_tag)
        throw ModelMismatch("filter state and operator set come from different models");
    Eigen::VectorXd u = ops.diag(obs, query).cwiseProduct(ops.transition * f.posterior);
    return normalize_or_throw(std::move(u), f.log_likelihood, f.step + 1, f.model_tag);
}

double sequence_log_prob(const ProductHmm& p, const ObservableOperatorSet& ops,
                         std::span<const int> queries, std::span<const int> observations) {
    if (queries.size() != observations.size())
        throw LengthMismatch("query and observation sequences differ in length");
    if (queries.empty()) return 0.0;
    try {
        FilterState f = filter_init(p, queries[0], observations[0]);
        for (std::size_t t = 1; t < queries.size(); ++t)
            f = filter_step(f, ops, queries[t], observations[t]);
        return f.log_likelihood;
    } catch (const ZeroLikelihood&) {
        return -std::numeric_limits<double>::infinity();
    }
}

SafetyPredictor build_safety_predictor(const ProductHmm& p, int lookahead) {
    if (lookahead < 0) throw DomainError("lookahead must be non-negative");
    const int n = p.num_states();
    Eigen::VectorXd safe_mask(n);
    for (int z = 0; z < n; ++z) safe_mask[z] = p.is_failure(z) ? 0.0 : 1.0;

    // v_k^T = 1^T (D T)^k D, evaluated as k sparse row-vector products.
    Eigen::VectorXd row = Eigen::VectorXd::Ones(n);
    for (int i = 0; i < lookahead; ++i)
        row = p.transition.transpose() * Eigen::VectorXd(row.cwiseProduct(safe_mask));
    row = row.cwiseProduct(safe_mask);

    if (p.failure_absorbing) {
        // With an absorbing failure set the interleaved maskings collapse to
        // a single initial projection (1^T D T^k); check the identity holds.
        Eigen::VectorXd alt = safe_mask;
        for (int i = 0; i < lookahead; ++i) alt = p.transition.transpose() * alt;
        if ((alt - row).cwiseAbs().maxCoeff() > 1e-12)
            throw NumericalError("absorbing-failure projection identity violated");
    }

    SafetyPredictor sp;
    sp.lookahead = lookahead;
    sp.safe_row = std::move(row);
    sp.model_tag = p.tag;
    return sp;
}

double safety_probability(const FilterState& f, const SafetyPredictor& sp) {
    if (f.model_tag != sp.model_tag)
        throw ModelMismatch("filter state and safety predictor come from different models");
    const double v = sp.safe_row.dot(f.posterior);
    return std::min(1.0, std::max(0.0, v));
}

double oracle_safety(int z, const SafetyPredictor& sp) {
    return sp.safe_row[z];
}

}  // namespace vigil
