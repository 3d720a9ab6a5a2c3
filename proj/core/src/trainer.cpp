#include "vigil/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>

namespace vigil {

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be non-negative");
    if (batch_size < 1) throw ConfigError("batch size must be at least 1");
    if (iterations < 0) throw ConfigError("iteration count must be non-negative");
    if (horizon < 1) throw ConfigError("horizon must be at least 1");
    if (lookahead < 0) throw ConfigError("lookahead must be non-negative");
    if (alpha < 0.0) throw ConfigError("alpha must be non-negative");
    if (clip_norm <= 0.0) throw ConfigError("clip norm must be positive");
    if (workers < 1) throw ConfigError("worker count must be at least 1");
}

ModelBundle make_bundle(const Scenario& sc, const BundleOptions& opts) {
    ModelBundle b;
    ProductHmm full = product_compose(sc.hmm, sc.dfa);
    b.product = opts.prune ? prune_unreachable(full).product : std::move(full);
    b.ops = build_operators(b.product);
    b.lookahead = opts.lookahead_override.value_or(sc.lookahead);
    b.predictor = build_safety_predictor(b.product, b.lookahead);
    b.cost.cost = sc.cost_matrix;
    b.cost.alpha = opts.alpha_override.value_or(sc.alpha);
    b.cost.initial_query = sc.hmm.initial_query;
    b.horizon = sc.horizon;
    return b;
}

EpisodeSample sample_trajectory(const ModelBundle& bundle, const PolicyParams& params,
                                std::uint64_t episode_seed, bool with_scores) {
    const int K = bundle.horizon;
    const int k = bundle.lookahead;
    const ProductHmm& p = bundle.product;

    EpisodeSample ep;
    TrajectoryRecord& rec = ep.record;
    rec.episode_seed = episode_seed;
    rec.queries.resize(static_cast<std::size_t>(K) + 1);
    rec.observations.resize(static_cast<std::size_t>(K) + 1);
    rec.p_safe.resize(K + 1);
    rec.step_cost.resize(K + 1);
    ep.entropy.resize(K + 1);
    rec.states.reserve(static_cast<std::size_t>(K + k) + 1);
    if (with_scores) ep.tape = std::make_unique<GradientBuffer>(params);

    Rng rng(episode_seed);
    int z = rng.categorical(p.initial_dist);
    rec.states.push_back(z);

    EncoderState enc = reset_encoder(params);
    FilterState filter;
    int prev_query = bundle.cost.initial_query;

    for (int t = 0; t <= K; ++t) {
        const Eigen::VectorXd probs = action_distribution(params, enc);
        const int query = rng.categorical(probs);
        if (ep.tape) ep.tape->record_choice(enc, query);

        const int obs = rng.categorical(p.emission[static_cast<std::size_t>(query)].col(z));
        filter = (t == 0) ? filter_init(p, query, obs)
                          : filter_step(filter, bundle.ops, query, obs);

        rec.queries[static_cast<std::size_t>(t)] = query;
        rec.observations[static_cast<std::size_t>(t)] = obs;
        rec.p_safe[t] = safety_probability(filter, bundle.predictor);
        ep.entropy[t] = binary_entropy(rec.p_safe[t]);
        rec.step_cost[t] = bundle.cost.step_cost(prev_query, query);
        prev_query = query;

        if (t < K) {
            enc = ep.tape ? ep.tape->advance(enc, obs, query)
                          : advance(params, enc, obs, query);
            z = rng.categorical_column(p.transition, z);
            rec.states.push_back(z);
        }
    }
    for (int j = 0; j < k; ++j) {
        z = rng.categorical_column(p.transition, z);
        rec.states.push_back(z);
    }

    // Realized outcome: failure anywhere inside the lookahead window.
    const int n_states = static_cast<int>(rec.states.size());
    std::vector<int> next_failure(static_cast<std::size_t>(n_states) + 1, n_states + 1);
    for (int j = n_states - 1; j >= 0; --j)
        next_failure[static_cast<std::size_t>(j)] =
            p.is_failure(rec.states[static_cast<std::size_t>(j)])
                ? j
                : next_failure[static_cast<std::size_t>(j) + 1];
    rec.outcome.resize(static_cast<std::size_t>(K) + 1);
    for (int t = 0; t <= K; ++t)
        rec.outcome[static_cast<std::size_t>(t)] = next_failure[static_cast<std::size_t>(t)] <= t + k;
    return ep;
}

ObjectiveSample make_objective_sample(const EpisodeSample& ep, std::int64_t trajectory_id) {
    ObjectiveSample s;
    s.trajectory_id = trajectory_id;
    s.step_entropy = ep.entropy;
    s.step_cost = ep.record.step_cost;
    if (!ep.tape) throw EmptySample("episode was sampled without scores");
    const int steps = ep.tape->num_choices();
    Eigen::VectorXd prefix = Eigen::VectorXd::Zero(ep.tape->dim());
    s.score_prefix.resize(steps, prefix.size());
    for (int t = 0; t < steps; ++t) {
        prefix += ep.tape->step_score(t);
        s.score_prefix.row(t) = prefix.transpose();
    }
    return s;
}

ObjectiveSample replay_history(const ModelBundle& bundle, const PolicyParams& params,
                               std::span<const int> queries, std::span<const int> observations,
                               std::int64_t trajectory_id) {
    if (queries.size() != observations.size())
        throw LengthMismatch("query and observation sequences differ in length");
    if (queries.empty()) throw LengthMismatch("empty history");
    const int steps = static_cast<int>(queries.size());

    EpisodeSample ep;
    ep.entropy.resize(steps);
    ep.record.step_cost.resize(steps);
    ep.record.p_safe.resize(steps);
    ep.tape = std::make_unique<GradientBuffer>(params);

    EncoderState enc = reset_encoder(params);
    FilterState filter;
    int prev_query = bundle.cost.initial_query;
    for (int t = 0; t < steps; ++t) {
        const int query = queries[static_cast<std::size_t>(t)];
        const int obs = observations[static_cast<std::size_t>(t)];
        ep.tape->record_choice(enc, query);
        filter = (t == 0) ? filter_init(bundle.product, query, obs)
                          : filter_step(filter, bundle.ops, query, obs);
        ep.record.p_safe[t] = safety_probability(filter, bundle.predictor);
        ep.entropy[t] = binary_entropy(ep.record.p_safe[t]);
        ep.record.step_cost[t] = bundle.cost.step_cost(prev_query, query);
        prev_query = query;
        if (t + 1 < steps) enc = ep.tape->advance(enc, obs, query);
    }
    return make_objective_sample(ep, trajectory_id);
}

StepDiagnostics gradient_step(PolicyParams& params, std::span<const EpisodeSample> batch,
                              const TrainConfig& cfg, OptimizerState& opt) {
    if (batch.empty()) throw EmptySample("gradient_step received an empty batch");
    const int K = cfg.horizon;
    const double inv_v = 1.0 / static_cast<double>(batch.size());

    Eigen::VectorXd mean_entropy = Eigen::VectorXd::Zero(K + 1);
    double cost_total = 0.0;
    for (const auto& ep : batch) {
        if (ep.entropy.size() != K + 1)
            throw LengthMismatch("episode does not cover the configured horizon");
        mean_entropy += ep.entropy;
        cost_total += ep.record.step_cost.sum();
    }
    mean_entropy *= inv_v;

    StepDiagnostics diag;
    diag.entropy_term = mean_entropy.sum() / static_cast<double>(K);
    diag.cost_term = cost_total * inv_v;
    diag.objective = diag.entropy_term + cfg.alpha * diag.cost_term;

    // Per-episode weighted score.  With the prefix pairing, weighting step i
    // by the reverse-cumulative per-step weights reproduces
    // sum_t w_t * prefix_t; the full-episode pairing gives every step the
    // total weight instead.
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(params.dim());
    std::vector<double> w(static_cast<std::size_t>(K) + 1);
    for (const auto& ep : batch) {
        for (int t = 0; t <= K; ++t) {
            const double h =
                cfg.baseline_on ? ep.entropy[t] - mean_entropy[t] : ep.entropy[t];
            w[static_cast<std::size_t>(t)] =
                h / static_cast<double>(K) + cfg.alpha * ep.record.step_cost[t];
        }
        if (cfg.full_episode_score) {
            double total = 0.0;
            for (double x : w) total += x;
            for (double& x : w) x = total;
        } else {
            for (int t = K - 1; t >= 0; --t)
                w[static_cast<std::size_t>(t)] += w[static_cast<std::size_t>(t) + 1];
        }
        if (!ep.tape) throw EmptySample("gradient_step needs episodes sampled with scores");
        grad += ep.tape->weighted_score(w);
    }
    grad *= inv_v;

    if (!grad.allFinite()) {
        std::ostringstream os;
        os << "non-finite gradient (norm of finite part "
           << grad.array().isFinite().select(grad.array(), 0.0).matrix().norm() << ")";
        throw NonFiniteGradient(os.str());
    }

    diag.grad_norm = grad.norm();
    if (diag.grad_norm > cfg.clip_norm) {
        grad *= cfg.clip_norm / diag.grad_norm;
        diag.clip_applied = true;
    }

    Eigen::VectorXd theta = params.flat();
    switch (cfg.optimizer) {
        case Optimizer::sgd:
            theta -= cfg.learning_rate * grad;
            break;
        case Optimizer::adam: {
            if (opt.first_moment.size() != theta.size()) {
                opt.first_moment = Eigen::VectorXd::Zero(theta.size());
                opt.second_moment = Eigen::VectorXd::Zero(theta.size());
                opt.step = 0;
            }
            opt.step += 1;
            opt.first_moment = cfg.adam_beta1 * opt.first_moment + (1.0 - cfg.adam_beta1) * grad;
            opt.second_moment = cfg.adam_beta2 * opt.second_moment +
                                (1.0 - cfg.adam_beta2) * grad.cwiseProduct(grad);
            const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(opt.step));
            const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(opt.step));
            theta -= (cfg.learning_rate * (opt.first_moment / bc1).array() /
                      ((opt.second_moment / bc2).array().sqrt() + cfg.adam_eps))
                         .matrix();
            break;
        }
    }
    params.set_flat(theta);
    return diag;
}

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
    workers = std::max(1, std::min(workers, n));
    if (workers == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (int i = w; i < n; i += workers) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

std::string g12(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

namespace {

void write_diag_line(std::ostream& os, int iter, const StepDiagnostics& d) {
    os << iter << ',' << g12(d.entropy_term) << ',' << g12(d.cost_term) << ','
       << g12(d.objective) << ',' << g12(d.grad_norm) << ',' << (d.clip_applied ? 1 : 0)
       << '\n';
    os.flush();
}

}  // namespace

TrainResult train(const ModelBundle& bundle, PolicyParams initial, const TrainConfig& cfg,
                  const TrainHooks& hooks) {
    cfg.validate();
    if (bundle.horizon != cfg.horizon)
        throw ConfigError("train config horizon does not match the model bundle");

    if (hooks.log) *hooks.log << "iter,entropy_term,cost_term,objective,grad_norm,clip_applied\n";
    if (hooks.eval_log) *hooks.eval_log << "iter,entropy_term,cost_term,objective\n";

    PolicyParams params = std::move(initial);
    OptimizerState opt;
    std::vector<EpisodeSample> batch(static_cast<std::size_t>(cfg.batch_size));

    const auto holdout_estimate = [&](int iter) {
        Eigen::VectorXd ent = Eigen::VectorXd::Zero(cfg.horizon + 1);
        double cost = 0.0;
        for (int v = 0; v < cfg.batch_size; ++v) {
            EpisodeSample ep = sample_trajectory(
                bundle, params,
                derive_seed(cfg.seed ^ 0xe5a1c3940fb2d864ULL, static_cast<std::uint64_t>(iter),
                            static_cast<std::uint64_t>(v)),
                false);
            ent += ep.entropy;
            cost += ep.record.step_cost.sum();
        }
        const double inv_v = 1.0 / static_cast<double>(cfg.batch_size);
        StepDiagnostics d;
        d.entropy_term = ent.sum() * inv_v / static_cast<double>(cfg.horizon);
        d.cost_term = cost * inv_v;
        d.objective = d.entropy_term + cfg.alpha * d.cost_term;
        if (hooks.eval_log) {
            *hooks.eval_log << iter << ',' << g12(d.entropy_term) << ',' << g12(d.cost_term)
                            << ',' << g12(d.objective) << '\n';
            hooks.eval_log->flush();
        }
    };

    for (int iter = 0; iter < cfg.iterations; ++iter) {
        parallel_for(cfg.batch_size, cfg.workers, [&](int v) {
            batch[static_cast<std::size_t>(v)] = sample_trajectory(
                bundle, params,
                derive_seed(cfg.seed, static_cast<std::uint64_t>(iter),
                            static_cast<std::uint64_t>(v)),
                true);
        });
        const StepDiagnostics diag = gradient_step(params, batch, cfg, opt);
        if (hooks.log) write_diag_line(*hooks.log, iter, diag);
        if (cfg.eval_every > 0 && (iter + 1) % cfg.eval_every == 0) {
            holdout_estimate(iter + 1);
            if (hooks.checkpoint) hooks.checkpoint(params, iter + 1);
        }
    }
    if (hooks.checkpoint) hooks.checkpoint(params, cfg.iterations);
    return {std::move(params), cfg.iterations};
}

}  // namespace vigil
