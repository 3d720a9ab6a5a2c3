#include "vigil/info.hpp"

#include <cmath>
#include <sstream>

namespace vigil {

double binary_entropy(double p) {
    constexpr double slack = 1e-12;
    if (p < -slack || p > 1.0 + slack) {
        std::ostringstream os;
        os << "binary_entropy argument " << p << " outside [0, 1]";
        throw DomainError(os.str());
    }
    p = std::min(1.0, std::max(0.0, p));
    if (p == 0.0 || p == 1.0) return 0.0;
    return -(p * std::log2(p) + (1.0 - p) * std::log2(1.0 - p));
}

double history_entropy(const FilterState& f, const SafetyPredictor& sp) {
    return binary_entropy(safety_probability(f, sp));
}

namespace {

void check_samples(std::span<const ObjectiveSample> samples, int t,
                   std::span<const double> weights) {
    if (samples.empty()) throw EmptySample("estimator received an empty batch");
    if (!weights.empty() && weights.size() != samples.size())
        throw LengthMismatch("weight vector length does not match batch size");
    for (const auto& s : samples) {
        if (t < 0 || t >= s.step_entropy.size())
            throw LengthMismatch("sample does not cover the requested step");
    }
}

}  // namespace

double objective_estimate(std::span<const ObjectiveSample> samples, const CostModel& cm,
                          int horizon) {
    if (samples.empty()) throw EmptySample("objective_estimate received an empty batch");
    const double inv_v = 1.0 / static_cast<double>(samples.size());
    double entropy_term = 0.0;
    double cost_term = 0.0;
    for (int t = 0; t <= horizon; ++t) {
        double h = 0.0, c = 0.0;
        for (const auto& s : samples) {
            if (t >= s.step_entropy.size())
                throw LengthMismatch("sample does not cover the full horizon");
            h += s.step_entropy[t];
            c += s.step_cost[t];
        }
        entropy_term += h * inv_v;
        cost_term += c * inv_v;
    }
    return entropy_term / static_cast<double>(horizon) + cm.alpha * cost_term;
}

Eigen::VectorXd estimate_entropy_gradient(std::span<const ObjectiveSample> samples, int t,
                                          std::span<const double> weights) {
    check_samples(samples, t, weights);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(samples.front().score_prefix.cols());
    const double inv_v = 1.0 / static_cast<double>(samples.size());
    for (std::size_t v = 0; v < samples.size(); ++v) {
        const double w = weights.empty() ? inv_v : weights[v];
        g.noalias() += (w * samples[v].step_entropy[t]) * samples[v].score_prefix.row(t).transpose();
    }
    return g;
}

Eigen::VectorXd estimate_cost_gradient(std::span<const ObjectiveSample> samples, int t,
                                       const CostModel&, std::span<const double> weights) {
    check_samples(samples, t, weights);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(samples.front().score_prefix.cols());
    const double inv_v = 1.0 / static_cast<double>(samples.size());
    for (std::size_t v = 0; v < samples.size(); ++v) {
        const double w = weights.empty() ? inv_v : weights[v];
        g.noalias() += (w * samples[v].step_cost[t]) * samples[v].score_prefix.row(t).transpose();
    }
    return g;
}

}  // namespace vigil
