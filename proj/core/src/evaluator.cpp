#include "vigil/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace vigil {

double brier_score(std::span<const double> p_unsafe, std::span<const std::uint8_t> outcomes) {
    if (p_unsafe.size() != outcomes.size())
        throw LengthMismatch("prediction and outcome sequences differ in length");
    if (p_unsafe.empty()) throw LengthMismatch("empty prediction sequence");
    double acc = 0.0;
    for (std::size_t t = 0; t < p_unsafe.size(); ++t) {
        const double d = p_unsafe[t] - static_cast<double>(outcomes[t]);
        acc += d * d;
    }
    return acc / static_cast<double>(p_unsafe.size());
}

double gap_closure(double b_random, double b_trained, double b_oracle) {
    if (!(b_random > b_oracle))
        throw DegenerateGap("random baseline does not exceed the oracle Brier score");
    return (b_random - b_trained) / (b_random - b_oracle);
}

namespace {

struct MeanCi {
    double mean = 0.0;
    double ci = 0.0;
};

MeanCi mean_ci(const std::vector<double>& xs) {
    const double n = static_cast<double>(xs.size());
    MeanCi r;
    r.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - r.mean) * (x - r.mean);
        r.ci = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    }
    return r;
}

// Realized failure-in-window indicators for every requested lookahead.
std::vector<std::vector<std::uint8_t>> window_outcomes(const ProductHmm& p,
                                                       const std::vector<int>& states, int K,
                                                       const std::vector<int>& ks) {
    const int n = static_cast<int>(states.size());
    std::vector<int> next_failure(static_cast<std::size_t>(n) + 1, n + 1);
    for (int j = n - 1; j >= 0; --j)
        next_failure[static_cast<std::size_t>(j)] =
            p.is_failure(states[static_cast<std::size_t>(j)])
                ? j
                : next_failure[static_cast<std::size_t>(j) + 1];
    std::vector<std::vector<std::uint8_t>> w(ks.size());
    for (std::size_t i = 0; i < ks.size(); ++i) {
        w[i].resize(static_cast<std::size_t>(K) + 1);
        for (int t = 0; t <= K; ++t)
            w[i][static_cast<std::size_t>(t)] =
                next_failure[static_cast<std::size_t>(t)] <= t + ks[i];
    }
    return w;
}

}  // namespace

EvalReport evaluate(const Scenario& sc, const std::optional<PolicyParams>& trained,
                    std::vector<int> lookaheads, int n_traj, std::uint64_t seed,
                    const EvalOptions& opts) {
    if (n_traj <= 0) throw EmptyEvaluation("evaluation needs at least one trajectory");
    if (lookaheads.empty()) lookaheads.push_back(sc.lookahead);
    sc.validate();

    ProductHmm full = product_compose(sc.hmm, sc.dfa);
    const ProductHmm product = opts.prune ? prune_unreachable(full).product : std::move(full);
    const ObservableOperatorSet ops = build_operators(product);
    std::vector<SafetyPredictor> predictors;
    int max_k = 0;
    for (int k : lookaheads) {
        predictors.push_back(build_safety_predictor(product, k));
        max_k = std::max(max_k, k);
    }
    CostModel cost;
    cost.cost = sc.cost_matrix;
    cost.alpha = opts.alpha_override.value_or(sc.alpha);
    cost.initial_query = sc.hmm.initial_query;
    const int K = sc.horizon;
    const std::size_t nk = lookaheads.size();

    EvalReport report;
    report.n_traj = n_traj;
    report.horizon = K;
    report.alpha = cost.alpha;
    report.seed = seed;

    struct PolicyAgg {
        std::vector<std::vector<double>> briers;  // [k][traj]
        std::vector<double> costs;                // [traj]
        std::vector<double> abs_err;              // [t], first lookahead
    };

    // Evaluates one observation-based policy over the shared seed stream.
    const auto run_filtered = [&](const PolicyParams& params, bool dump) {
        PolicyAgg agg;
        agg.briers.assign(nk, std::vector<double>(static_cast<std::size_t>(n_traj)));
        agg.costs.resize(static_cast<std::size_t>(n_traj));
        agg.abs_err.assign(static_cast<std::size_t>(K) + 1, 0.0);
        std::vector<std::vector<double>> abs_err_per_traj;
        for (int v = 0; v < n_traj; ++v) {
            Rng rng(derive_seed(seed, 0, static_cast<std::uint64_t>(v)));
            int z = rng.categorical(product.initial_dist);
            std::vector<int> states{z};
            EncoderState enc = reset_encoder(params);
            FilterState filter;
            int prev_query = cost.initial_query;
            double total_cost = 0.0;
            std::vector<std::vector<double>> p_unsafe(nk,
                                                      std::vector<double>(static_cast<std::size_t>(K) + 1));
            std::vector<int> queries(static_cast<std::size_t>(K) + 1);
            std::vector<int> observations(static_cast<std::size_t>(K) + 1);
            std::vector<double> step_costs(static_cast<std::size_t>(K) + 1);
            for (int t = 0; t <= K; ++t) {
                const Eigen::VectorXd probs = action_distribution(params, enc);
                const int query = rng.categorical(probs);
                const int obs =
                    rng.categorical(product.emission[static_cast<std::size_t>(query)].col(z));
                filter = (t == 0) ? filter_init(product, query, obs)
                                  : filter_step(filter, ops, query, obs);
                for (std::size_t i = 0; i < nk; ++i)
                    p_unsafe[i][static_cast<std::size_t>(t)] =
                        1.0 - safety_probability(filter, predictors[i]);
                const double c = cost.step_cost(prev_query, query);
                step_costs[static_cast<std::size_t>(t)] = c;
                total_cost += c;
                prev_query = query;
                queries[static_cast<std::size_t>(t)] = query;
                observations[static_cast<std::size_t>(t)] = obs;
                if (t < K) {
                    enc = advance(params, enc, obs, query);
                    z = rng.categorical_column(product.transition, z);
                    states.push_back(z);
                }
            }
            for (int j = 0; j < max_k; ++j) {
                z = rng.categorical_column(product.transition, z);
                states.push_back(z);
            }
            const auto outcomes = window_outcomes(product, states, K, lookaheads);
            for (std::size_t i = 0; i < nk; ++i)
                agg.briers[i][static_cast<std::size_t>(v)] =
                    brier_score(p_unsafe[i], outcomes[i]);
            agg.costs[static_cast<std::size_t>(v)] = total_cost;
            for (int t = 0; t <= K; ++t)
                agg.abs_err[static_cast<std::size_t>(t)] +=
                    std::abs(p_unsafe[0][static_cast<std::size_t>(t)] -
                             static_cast<double>(outcomes[0][static_cast<std::size_t>(t)]));
            if (dump) {
                for (int t = 0; t <= K; ++t) {
                    report.trajectories.push_back(
                        {v, t, p_unsafe[0][static_cast<std::size_t>(t)],
                         outcomes[0][static_cast<std::size_t>(t)] ? 1 : 0,
                         queries[static_cast<std::size_t>(t)],
                         observations[static_cast<std::size_t>(t)],
                         step_costs[static_cast<std::size_t>(t)]});
                }
            }
        }
        for (double& e : agg.abs_err) e /= static_cast<double>(n_traj);
        return agg;
    };

    const auto run_oracle = [&]() {
        PolicyAgg agg;
        agg.briers.assign(nk, std::vector<double>(static_cast<std::size_t>(n_traj)));
        agg.costs.assign(static_cast<std::size_t>(n_traj), 0.0);
        agg.abs_err.assign(static_cast<std::size_t>(K) + 1, 0.0);
        for (int v = 0; v < n_traj; ++v) {
            Rng rng(derive_seed(seed, 0, static_cast<std::uint64_t>(v)));
            int z = rng.categorical(product.initial_dist);
            std::vector<int> states{z};
            for (int j = 1; j <= K + max_k; ++j) {
                z = rng.categorical_column(product.transition, z);
                states.push_back(z);
            }
            const auto outcomes = window_outcomes(product, states, K, lookaheads);
            for (std::size_t i = 0; i < nk; ++i) {
                std::vector<double> p_unsafe(static_cast<std::size_t>(K) + 1);
                for (int t = 0; t <= K; ++t)
                    p_unsafe[static_cast<std::size_t>(t)] =
                        1.0 - oracle_safety(states[static_cast<std::size_t>(t)], predictors[i]);
                agg.briers[i][static_cast<std::size_t>(v)] = brier_score(p_unsafe, outcomes[i]);
                if (i == 0) {
                    for (int t = 0; t <= K; ++t)
                        agg.abs_err[static_cast<std::size_t>(t)] +=
                            std::abs(p_unsafe[static_cast<std::size_t>(t)] -
                                     static_cast<double>(outcomes[i][static_cast<std::size_t>(t)]));
                }
            }
        }
        for (double& e : agg.abs_err) e /= static_cast<double>(n_traj);
        return agg;
    };

    std::vector<std::pair<std::string, PolicyAgg>> results;
    if (trained) results.emplace_back("trained", run_filtered(*trained, opts.dump_trajectories));
    if (opts.run_random) {
        PolicyConfig ucfg;
        ucfg.variant = PolicyVariant::uniform;
        ucfg.num_obs = sc.hmm.num_obs();
        ucfg.num_queries = sc.hmm.num_queries();
        results.emplace_back("random",
                             run_filtered(PolicyParams::init(ucfg),
                                          opts.dump_trajectories && !trained));
    }
    if (opts.run_oracle) results.emplace_back("oracle", run_oracle());
    if (results.empty()) throw EmptyEvaluation("no policy selected for evaluation");

    for (const auto& [name, agg] : results) {
        const MeanCi c = mean_ci(agg.costs);
        for (std::size_t i = 0; i < nk; ++i) {
            const MeanCi b = mean_ci(agg.briers[i]);
            report.rows.push_back({name, lookaheads[i], b.mean, b.ci, c.mean, c.ci});
        }
        for (int t = 0; t <= K; ++t)
            report.accuracy.push_back({t, name, agg.abs_err[static_cast<std::size_t>(t)]});
    }

    const auto row_of = [&](const std::string& name, int k) -> const PolicyEvalRow* {
        for (const auto& r : report.rows)
            if (r.policy == name && r.lookahead == k) return &r;
        return nullptr;
    };
    for (std::size_t i = 0; i < nk; ++i) {
        const auto* tr = row_of("trained", lookaheads[i]);
        const auto* rnd = row_of("random", lookaheads[i]);
        const auto* orc = row_of("oracle", lookaheads[i]);
        if (tr && rnd && orc)
            report.gap_closures.emplace_back(lookaheads[i],
                                             gap_closure(rnd->brier, tr->brier, orc->brier));
    }
    return report;
}

std::vector<SequenceProb> brute_force_sequence_probs(const ProductHmm& p,
                                                     const PolicyParams& params, int horizon) {
    const int steps = horizon + 1;  // histories y_{0:K} carry K+1 (query, obs) pairs
    double combos = 1.0;
    for (int i = 0; i < steps; ++i) combos *= static_cast<double>(p.num_obs * p.num_queries);
    if (combos > 1e6)
        throw TooLarge("history enumeration would exceed the one-million-sequence guard");

    std::vector<SequenceProb> table;
    std::vector<int> queries, observations;

    const std::function<void(const EncoderState&, double)> walk =
        [&](const EncoderState& enc, double pi_prod) {
            if (static_cast<int>(queries.size()) == steps) {
                const double like = path_likelihood(p, queries, observations);
                const double prob = pi_prod * like;
                if (prob > 0.0) table.push_back({queries, observations, prob});
                return;
            }
            const Eigen::VectorXd probs = action_distribution(params, enc);
            for (int q = 0; q < p.num_queries; ++q) {
                if (probs[q] == 0.0) continue;
                for (int o = 0; o < p.num_obs; ++o) {
                    queries.push_back(q);
                    observations.push_back(o);
                    walk(advance(params, enc, o, q), pi_prod * probs[q]);
                    queries.pop_back();
                    observations.pop_back();
                }
            }
        };
    walk(reset_encoder(params), 1.0);
    return table;
}

namespace {

double path_sum(const Eigen::MatrixXd& trans, const ProductHmm& p, std::span<const int> queries,
                std::span<const int> observations, int lookahead, bool safe_window) {
    const int t_last = static_cast<int>(queries.size()) - 1;
    const int depth_max = t_last + (safe_window ? lookahead : 0);
    double total = 0.0;
    // Depth-first over state paths z_0..z_{depth_max}.
    const std::function<void(int, int, double)> walk = [&](int depth, int z, double weight) {
        if (weight == 0.0) return;
        if (depth <= t_last) {
            weight *= p.emission[static_cast<std::size_t>(queries[static_cast<std::size_t>(depth)])](
                observations[static_cast<std::size_t>(depth)], z);
            if (weight == 0.0) return;
        }
        if (safe_window && depth >= t_last && p.is_failure(z)) return;
        if (depth == depth_max) {
            total += weight;
            return;
        }
        for (int z2 = 0; z2 < p.num_states(); ++z2)
            walk(depth + 1, z2, weight * trans(z2, z));
    };
    for (int z0 = 0; z0 < p.num_states(); ++z0) walk(0, z0, p.initial_dist[z0]);
    return total;
}

}  // namespace

double path_likelihood(const ProductHmm& p, std::span<const int> queries,
                       std::span<const int> observations) {
    if (queries.size() != observations.size())
        throw LengthMismatch("query and observation sequences differ in length");
    if (queries.empty()) return 1.0;
    const Eigen::MatrixXd trans(p.transition);
    return path_sum(trans, p, queries, observations, 0, false);
}

double path_safety_probability(const ProductHmm& p, std::span<const int> queries,
                               std::span<const int> observations, int lookahead) {
    if (queries.size() != observations.size())
        throw LengthMismatch("query and observation sequences differ in length");
    if (queries.empty()) throw LengthMismatch("empty history");
    const Eigen::MatrixXd trans(p.transition);
    const double den = path_sum(trans, p, queries, observations, 0, false);
    if (!(den > 0.0)) throw ZeroLikelihood("history has zero probability");
    const double num = path_sum(trans, p, queries, observations, lookahead, true);
    return num / den;
}

double exact_objective(const ProductHmm& p, const PolicyParams& params, const CostModel& cm,
                       int horizon, int lookahead) {
    double entropy_term = 0.0;
    double cost_term = 0.0;
    for (int t = 0; t <= horizon; ++t) {
        const auto table = brute_force_sequence_probs(p, params, t);
        double h = 0.0, c = 0.0;
        for (const auto& y : table) {
            h += y.prob *
                 binary_entropy(path_safety_probability(p, y.queries, y.observations, lookahead));
            const int prev = y.queries.size() > 1 ? y.queries[y.queries.size() - 2]
                                                  : cm.initial_query;
            c += y.prob * cm.step_cost(prev, y.queries.back());
        }
        entropy_term += h;
        cost_term += c;
    }
    return entropy_term / static_cast<double>(horizon) + cm.alpha * cost_term;
}

namespace {

std::ofstream open_csv(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path + "'");
    return out;
}

}  // namespace

void write_report_csv(const EvalReport& report, const std::string& path) {
    std::ofstream out = open_csv(path);
    out << "policy,k,brier,brier_ci,cost,cost_ci\n";
    for (const auto& r : report.rows)
        out << r.policy << ',' << r.lookahead << ',' << g12(r.brier) << ',' << g12(r.brier_ci)
            << ',' << g12(r.cost) << ',' << g12(r.cost_ci) << '\n';
    if (!out) throw IoError("failed writing '" + path + "'");
}

void write_trajectories_csv(const EvalReport& report, const std::string& path) {
    std::ofstream out = open_csv(path);
    out << "traj,t,p_unsafe,w,query,obs,cost\n";
    for (const auto& r : report.trajectories)
        out << r.traj << ',' << r.t << ',' << g12(r.p_unsafe) << ',' << r.outcome << ','
            << r.query << ',' << r.obs << ',' << g12(r.cost) << '\n';
    if (!out) throw IoError("failed writing '" + path + "'");
}

void write_accuracy_csv(const EvalReport& report, const std::string& path) {
    std::ofstream out = open_csv(path);
    out << "t,policy,mean_abs_error\n";
    for (const auto& r : report.accuracy)
        out << r.t << ',' << r.policy << ',' << g12(r.mean_abs_error) << '\n';
    if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace vigil
