// vigil: build, train, evaluate, and validate active-perception safety
// monitors over labeled-HMM x DFA product models.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "vigil/evaluator.hpp"
#include "vigil/scenario_io.hpp"
#include "vigil/scenarios.hpp"
#include "vigil/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace vigil;

namespace {

constexpr const char* kVersion = "0.1.0";

// Exit codes: 0 ok, 1 validation failure, 2 usage, 3 input/model error,
// 4 numerical failure.
enum ExitCode { kOk = 0, kValidationFailed = 1, kUsage = 2, kInputError = 3, kNumerical = 4 };

std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

class Manifest {
public:
    Manifest(std::string subcommand) {
        j_["subcommand"] = std::move(subcommand);
        j_["tool_version"] = kVersion;
        j_["started_ms"] = now_ms();
    }
    ordered_json& config() { return j_["config"]; }
    void set(const std::string& key, const ordered_json& v) { j_[key] = v; }
    void add_output(const std::string& path) { outputs_.push_back(path); }
    void write(const std::string& path) {
        j_["outputs"] = outputs_;
        j_["finished_ms"] = now_ms();
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write manifest '" + path + "'");
        out << j_.dump(2) << "\n";
    }

private:
    ordered_json j_;
    std::vector<std::string> outputs_;
};

int run_build_scenario(const std::string& kind, const std::string& fixture_name,
                       const CongestionConfig& ccfg,
                       const std::vector<std::string>& extra_options, const std::string& out) {
    CongestionConfig cfg = ccfg;
    for (const auto& kv : extra_options) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("option '" + kv + "' is not key=value");
        apply_option(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    const Scenario sc = (kind == "congestion") ? build_congestion_scenario(cfg)
                                               : build_fixture(fixture_name);
    save_scenario(sc, out);

    const ProductHmm product = product_compose(sc.hmm, sc.dfa);
    const auto pruned = prune_unreachable(product);
    std::cout << "wrote " << out << "\n"
              << "physical states: " << sc.hmm.num_states()
              << ", product states: " << product.num_states() << " ("
              << pruned.product.num_states() << " reachable)\n"
              << "queries: " << sc.hmm.num_queries() << ", observations: " << sc.hmm.num_obs()
              << ", horizon K=" << sc.horizon << ", lookahead k=" << sc.lookahead
              << ", alpha=" << sc.alpha << "\n";

    Manifest man("build-scenario");
    man.config()["kind"] = kind;
    if (kind == "fixture") man.config()["name"] = fixture_name;
    if (kind == "congestion") {
        man.config()["lookahead"] = cfg.lookahead;
        man.config()["horizon"] = cfg.horizon;
        man.config()["alpha"] = cfg.alpha;
    }
    man.set("scenario_hash", file_content_hash(out));
    man.add_output(out);
    man.write(out + ".manifest.json");
    return kOk;
}

struct TrainCli {
    std::string scenario_path;
    std::string out_dir;
    int iters = 1000;
    int batch = 64;
    double lr = 1e-2;
    std::uint64_t seed = 0;
    std::string optimizer = "sgd";
    std::string policy = "recurrent";
    int hidden = 32;
    int window = 2;
    double clip_norm = 5.0;
    bool baseline = false;
    bool full_episode_score = false;
    int eval_every = 0;
    int workers = 1;
    bool prune = false;
    std::optional<double> alpha_override;
    std::optional<int> k_override;
};

int run_train(const TrainCli& a) {
    const Scenario sc = load_scenario(a.scenario_path);
    const std::string scenario_hash = file_content_hash(a.scenario_path);

    BundleOptions bopts;
    bopts.alpha_override = a.alpha_override;
    bopts.lookahead_override = a.k_override;
    bopts.prune = a.prune;
    const ModelBundle bundle = make_bundle(sc, bopts);

    TrainConfig cfg;
    cfg.learning_rate = a.lr;
    cfg.batch_size = a.batch;
    cfg.iterations = a.iters;
    cfg.horizon = bundle.horizon;
    cfg.lookahead = bundle.lookahead;
    cfg.alpha = bundle.cost.alpha;
    cfg.seed = a.seed;
    cfg.optimizer = (a.optimizer == "adam") ? Optimizer::adam : Optimizer::sgd;
    cfg.clip_norm = a.clip_norm;
    cfg.baseline_on = a.baseline;
    cfg.full_episode_score = a.full_episode_score;
    cfg.eval_every = a.eval_every;
    cfg.workers = a.workers;

    PolicyConfig pcfg;
    pcfg.variant = policy_variant_from_string(a.policy);
    if (pcfg.variant == PolicyVariant::uniform)
        throw ConfigError("the uniform baseline is not trainable");
    pcfg.num_obs = sc.hmm.num_obs();
    pcfg.num_queries = sc.hmm.num_queries();
    pcfg.hidden = a.hidden;
    pcfg.window = a.window;
    pcfg.seed = a.seed;

    fs::create_directories(a.out_dir);
    const std::string log_path = a.out_dir + "/training_log.csv";
    const std::string ckpt_path = a.out_dir + "/checkpoint.json";
    std::ofstream log(log_path, std::ios::binary | std::ios::trunc);
    if (!log) throw IoError("cannot write '" + log_path + "'");
    std::ofstream eval_log;
    if (a.eval_every > 0) {
        eval_log.open(a.out_dir + "/eval_log.csv", std::ios::binary | std::ios::trunc);
        if (!eval_log) throw IoError("cannot write eval log");
    }

    Manifest man("train");
    TrainHooks hooks;
    hooks.log = &log;
    hooks.eval_log = a.eval_every > 0 ? &eval_log : nullptr;
    hooks.checkpoint = [&](const PolicyParams& params, int iteration) {
        const bool final = iteration == cfg.iterations;
        const std::string path =
            final ? ckpt_path
                  : a.out_dir + "/checkpoint_iter_" + std::to_string(iteration) + ".json";
        save_checkpoint(params, static_cast<std::uint64_t>(iteration), scenario_hash, path);
        man.add_output(path);
    };

    const TrainResult result = train(bundle, PolicyParams::init(pcfg), cfg, hooks);
    std::cout << "trained " << result.iterations_run << " iterations; checkpoint: " << ckpt_path
              << "\n";

    man.config()["scenario"] = a.scenario_path;
    man.config()["iters"] = a.iters;
    man.config()["batch"] = a.batch;
    man.config()["lr"] = a.lr;
    man.config()["optimizer"] = a.optimizer;
    man.config()["policy"] = a.policy;
    man.config()["hidden"] = a.hidden;
    man.config()["window"] = a.window;
    man.config()["clip_norm"] = a.clip_norm;
    man.config()["baseline"] = a.baseline;
    man.config()["full_episode_score"] = a.full_episode_score;
    man.config()["eval_every"] = a.eval_every;
    man.config()["workers"] = a.workers;
    man.config()["prune"] = a.prune;
    man.config()["alpha"] = cfg.alpha;
    man.config()["lookahead"] = cfg.lookahead;
    man.config()["horizon"] = cfg.horizon;
    man.set("seed", a.seed);
    man.set("scenario_hash", scenario_hash);
    man.add_output(log_path);
    man.write(a.out_dir + "/manifest.json");
    return kOk;
}

struct EvalCli {
    std::string scenario_path;
    std::string checkpoint_path;
    std::string baselines = "random,oracle";
    std::string k_list;
    int trajectories = 1000;
    std::uint64_t seed = 0;
    std::string out_dir;
    bool dump_trajectories = false;
    bool prune = false;
    std::optional<double> alpha_override;
};

int run_eval(const EvalCli& a) {
    const Scenario sc = load_scenario(a.scenario_path);
    const std::string scenario_hash = file_content_hash(a.scenario_path);

    std::optional<PolicyParams> trained;
    if (!a.checkpoint_path.empty()) {
        Checkpoint ck = load_checkpoint(a.checkpoint_path);
        if (!ck.scenario_hash.empty() && ck.scenario_hash != scenario_hash)
            throw ModelMismatch("checkpoint was trained on a different scenario (hash " +
                                ck.scenario_hash + " vs " + scenario_hash + ")");
        if (ck.params.config().num_obs != sc.hmm.num_obs() ||
            ck.params.config().num_queries != sc.hmm.num_queries())
            throw ModelMismatch("checkpoint dimensions do not match the scenario");
        trained = std::move(ck.params);
    }

    EvalOptions opts;
    opts.run_random = a.baselines.find("random") != std::string::npos;
    opts.run_oracle = a.baselines.find("oracle") != std::string::npos;
    opts.dump_trajectories = a.dump_trajectories;
    opts.prune = a.prune;
    opts.alpha_override = a.alpha_override;

    std::vector<int> ks;
    if (!a.k_list.empty()) {
        std::stringstream ss(a.k_list);
        std::string tok;
        while (std::getline(ss, tok, ',')) ks.push_back(std::stoi(tok));
    }

    const EvalReport report = evaluate(sc, trained, ks, a.trajectories, a.seed, opts);

    fs::create_directories(a.out_dir);
    Manifest man("eval");
    const std::string report_path = a.out_dir + "/report.csv";
    write_report_csv(report, report_path);
    man.add_output(report_path);
    const std::string acc_path = a.out_dir + "/accuracy_trace.csv";
    write_accuracy_csv(report, acc_path);
    man.add_output(acc_path);
    if (a.dump_trajectories) {
        const std::string traj_path = a.out_dir + "/trajectories.csv";
        write_trajectories_csv(report, traj_path);
        man.add_output(traj_path);
    }

    for (const auto& r : report.rows)
        std::cout << r.policy << " k=" << r.lookahead << ": brier " << g12(r.brier) << " +- "
                  << g12(r.brier_ci) << ", cost " << g12(r.cost) << " +- " << g12(r.cost_ci)
                  << "\n";
    for (const auto& [k, gc] : report.gap_closures)
        std::cout << "gap closure k=" << k << ": " << g12(gc) << "\n";

    man.config()["scenario"] = a.scenario_path;
    man.config()["checkpoint"] = a.checkpoint_path;
    man.config()["baselines"] = a.baselines;
    man.config()["trajectories"] = a.trajectories;
    man.config()["k_list"] = a.k_list;
    man.config()["dump_trajectories"] = a.dump_trajectories;
    man.config()["prune"] = a.prune;
    man.set("seed", a.seed);
    man.set("scenario_hash", scenario_hash);
    man.write(a.out_dir + "/manifest.json");
    return kOk;
}

int run_predict(const std::string& scenario_path, const std::string& history_path,
                std::optional<int> k_flag, const std::string& out_path) {
    const Scenario sc = load_scenario(scenario_path);
    const ModelBundle bundle = [&] {
        BundleOptions b;
        b.lookahead_override = k_flag;
        return make_bundle(sc, b);
    }();

    std::ifstream in(history_path, std::ios::binary);
    if (!in) throw IoError("cannot open history file '" + history_path + "'");

    std::vector<std::pair<int, int>> history;  // (query, obs)
    std::string line;
    int line_no = 0;
    const auto find_name = [](const std::vector<std::string>& names, const std::string& tok) {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == tok) return static_cast<int>(i);
        return -1;
    };
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string qtok, otok;
        if (!(ls >> qtok)) continue;  // blank line
        if (!(ls >> otok))
            throw ParseError("history line " + std::to_string(line_no) +
                             ": expected 'query observation'");
        const int q = find_name(sc.hmm.query_names, qtok);
        if (q < 0)
            throw ValidationError("history line " + std::to_string(line_no) +
                                  ": unknown query '" + qtok + "'");
        const int o = find_name(sc.hmm.obs_names, otok);
        if (o < 0)
            throw ValidationError("history line " + std::to_string(line_no) +
                                  ": unknown observation '" + otok + "'");
        history.emplace_back(q, o);
    }
    if (history.empty()) {
        std::cerr << "error: history file '" << history_path << "' is empty\n";
        return kUsage;
    }

    std::ostringstream csv;
    csv << "t,p_safe,entropy_bits,log_lik\n";
    FilterState f;
    for (std::size_t t = 0; t < history.size(); ++t) {
        try {
            f = (t == 0) ? filter_init(bundle.product, history[0].first, history[0].second)
                         : filter_step(f, bundle.ops, history[t].first, history[t].second);
        } catch (const ZeroLikelihood& e) {
            std::cerr << "error: history line " << (t + 1) << ": " << e.what() << "\n";
            return kInputError;
        }
        const double p_safe = safety_probability(f, bundle.predictor);
        csv << t << ',' << g12(p_safe) << ',' << g12(binary_entropy(p_safe)) << ','
            << g12(f.log_likelihood) << '\n';
    }
    if (out_path.empty()) {
        std::cout << csv.str();
    } else {
        std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write '" + out_path + "'");
        out << csv.str();
        Manifest man("predict");
        man.config()["scenario"] = scenario_path;
        man.config()["history"] = history_path;
        man.config()["lookahead"] = bundle.lookahead;
        man.set("scenario_hash", file_content_hash(scenario_path));
        man.add_output(out_path);
        man.write(out_path + ".manifest.json");
    }
    return kOk;
}

int run_validate(const std::string& scenario_path, bool deep) {
    std::vector<std::string> failures;
    std::vector<std::string> notes;

    Scenario sc;
    try {
        sc = load_scenario(scenario_path);
    } catch (const ValidationError& e) {
        std::cout << "FAIL scenario invariants: " << e.what() << "\n";
        return kValidationFailed;
    }

    const auto check = [&](const std::string& name, bool ok, const std::string& detail = "") {
        std::cout << (ok ? "ok   " : "FAIL ") << name;
        if (!ok && !detail.empty()) std::cout << ": " << detail;
        std::cout << "\n";
        if (!ok) failures.push_back(name);
    };

    check("scenario invariants", true);

    ProductHmm product;
    try {
        product = product_compose(sc.hmm, sc.dfa);
        check("product composition", true);
    } catch (const Error& e) {
        check("product composition", false, e.what());
        std::cout << failures.size() << " check(s) failed\n";
        return kValidationFailed;
    }

    {
        // Support correctness: every positive product transition obeys the
        // DFA step rule on the destination label.
        bool ok = true;
        std::string detail;
        for (int z = 0; z < product.num_states() && ok; ++z) {
            for (SparseMat::InnerIterator it(product.transition, z); it; ++it) {
                const int z2 = static_cast<int>(it.row());
                const int s2 = product.hmm_state_of(z2);
                const int expect_q =
                    sc.dfa.step(product.dfa_state_of(z),
                                sc.hmm.labels[static_cast<std::size_t>(s2)]);
                if (it.value() > 0.0 && product.dfa_state_of(z2) != expect_q) {
                    ok = false;
                    detail = "state " + std::to_string(z) + " -> " + std::to_string(z2);
                    break;
                }
            }
        }
        check("product support correctness", ok, detail);
    }

    {
        bool ok = true;
        std::string detail;
        try {
            for (int k = 0; k <= 10; ++k) build_safety_predictor(product, k);
        } catch (const NumericalError& e) {
            ok = false;
            detail = e.what();
        }
        check(product.failure_absorbing ? "absorbing projection identity (k <= 10)"
                                        : "safety predictor construction (k <= 10)",
              ok, detail);
    }

    if (deep) {
        const double combos = std::pow(static_cast<double>(sc.hmm.num_obs() * sc.hmm.num_queries()),
                                       std::min(sc.horizon, 3) + 1);
        const bool small = product.num_states() <= 12 && combos <= 2e5;
        if (!small) {
            notes.push_back("deep checks skipped: model too large for enumeration");
            std::cout << "note: deep checks skipped (model too large for enumeration)\n";
        } else {
            const int horizon = std::min(sc.horizon, 3);
            BundleOptions bo;
            ModelBundle bundle = make_bundle(sc, bo);

            PolicyConfig ucfg;
            ucfg.variant = PolicyVariant::uniform;
            ucfg.num_obs = sc.hmm.num_obs();
            ucfg.num_queries = sc.hmm.num_queries();
            const PolicyParams uniform = PolicyParams::init(ucfg);

            // Enumeration equivalence: operator-filter likelihoods and safety
            // probabilities against independent path sums.
            bool ok = true;
            std::string detail;
            double total = 0.0;
            try {
                for (const auto& y : brute_force_sequence_probs(product, uniform, horizon)) {
                    total += y.prob;
                    double pi_prod = 1.0;
                    for (std::size_t i = 0; i < y.queries.size(); ++i)
                        pi_prod /= static_cast<double>(sc.hmm.num_queries());
                    const double filter_like =
                        std::exp(sequence_log_prob(product, bundle.ops, y.queries, y.observations));
                    if (std::abs(filter_like * pi_prod - y.prob) > 1e-10) {
                        ok = false;
                        detail = "filter likelihood mismatch";
                        break;
                    }
                    FilterState f = filter_init(product, y.queries[0], y.observations[0]);
                    for (std::size_t i = 1; i < y.queries.size(); ++i)
                        f = filter_step(f, bundle.ops, y.queries[i], y.observations[i]);
                    const double ps = safety_probability(f, bundle.predictor);
                    const double ref = path_safety_probability(product, y.queries, y.observations,
                                                               bundle.lookahead);
                    if (std::abs(ps - ref) > 1e-10) {
                        ok = false;
                        detail = "safety probability mismatch";
                        break;
                    }
                }
                if (ok && std::abs(total - 1.0) > 1e-10) {
                    ok = false;
                    detail = "history probabilities sum to " + g12(total);
                }
            } catch (const Error& e) {
                ok = false;
                detail = e.what();
            }
            check("enumeration equivalence (filter vs path sums)", ok, detail);

            // Finite-difference check of the enumerated objective gradient
            // for a small tabular policy.
            try {
                PolicyConfig tcfg;
                tcfg.variant = PolicyVariant::tabular;
                tcfg.num_obs = sc.hmm.num_obs();
                tcfg.num_queries = sc.hmm.num_queries();
                tcfg.window = 1;
                tcfg.seed = 7;
                PolicyParams tab = PolicyParams::init(tcfg);
                {
                    Eigen::VectorXd theta = tab.flat();
                    Rng rng(11);
                    for (Eigen::Index i = 0; i < theta.size(); ++i)
                        theta[i] = rng.uniform(-0.3, 0.3);
                    tab.set_flat(theta);
                }
                ModelBundle small_bundle = bundle;
                small_bundle.horizon = horizon;

                std::vector<ObjectiveSample> samples;
                std::vector<double> weights;
                for (const auto& y : brute_force_sequence_probs(product, tab, horizon)) {
                    samples.push_back(replay_history(small_bundle, tab, y.queries, y.observations,
                                                     static_cast<std::int64_t>(samples.size())));
                    weights.push_back(y.prob);
                }
                Eigen::VectorXd analytic = Eigen::VectorXd::Zero(tab.dim());
                for (int t = 0; t <= horizon; ++t) {
                    analytic += estimate_entropy_gradient(samples, t, weights) /
                                static_cast<double>(horizon);
                    analytic += bundle.cost.alpha *
                                estimate_cost_gradient(samples, t, bundle.cost, weights);
                }
                const double eps = 1e-5;
                bool fd_ok = true;
                Eigen::VectorXd theta = tab.flat();
                for (Eigen::Index i = 0; i < theta.size() && fd_ok; ++i) {
                    PolicyParams plus = tab, minus = tab;
                    Eigen::VectorXd tp = theta, tm = theta;
                    tp[i] += eps;
                    tm[i] -= eps;
                    plus.set_flat(tp);
                    minus.set_flat(tm);
                    const double fd = (exact_objective(product, plus, bundle.cost, horizon,
                                                       bundle.lookahead) -
                                       exact_objective(product, minus, bundle.cost, horizon,
                                                       bundle.lookahead)) /
                                      (2.0 * eps);
                    const double scale = std::max({std::abs(fd), std::abs(analytic[i]), 1e-6});
                    if (std::abs(fd - analytic[i]) / scale > 1e-4) fd_ok = false;
                }
                check("finite-difference gradient agreement", fd_ok);
            } catch (const Error& e) {
                check("finite-difference gradient agreement", false, e.what());
            }
        }
    }

    if (!failures.empty()) {
        std::cout << failures.size() << " check(s) failed\n";
        return kValidationFailed;
    }
    std::cout << "all checks passed\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"active-perception predictive safety monitoring toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    // build-scenario
    auto* build = app.add_subcommand("build-scenario", "generate a scenario file");
    build->require_subcommand(1);
    CongestionConfig ccfg;
    std::string build_out, fixture_name;
    std::vector<std::string> extra_opts;
    auto* cong = build->add_subcommand("congestion", "congestion-game scenario");
    cong->add_option("--k", ccfg.lookahead, "prediction lookahead");
    cong->add_option("--horizon", ccfg.horizon, "episode horizon K");
    cong->add_option("--alpha", ccfg.alpha, "query-cost weight");
    cong->add_option("--map", ccfg.map_path, "map data file override");
    cong->add_option("--option", extra_opts, "additional key=value options");
    cong->add_option("--out", build_out, "output scenario path")->required();
    auto* fix = build->add_subcommand("fixture", "small verification fixture");
    fix->add_option("--name", fixture_name, "fixture name (f1 | f1-two-sensor)")->required();
    fix->add_option("--out", build_out, "output scenario path")->required();

    // train
    TrainCli tr;
    double tr_alpha_override = -1.0;
    int tr_k_override = -1;
    auto* train_cmd = app.add_subcommand("train", "train an active perception policy");
    train_cmd->add_option("--scenario", tr.scenario_path)->required();
    train_cmd->add_option("--iters", tr.iters);
    train_cmd->add_option("--batch", tr.batch);
    train_cmd->add_option("--lr", tr.lr);
    train_cmd->add_option("--seed", tr.seed);
    train_cmd->add_option("--optimizer", tr.optimizer)
        ->check(CLI::IsMember({"sgd", "adam"}));
    train_cmd->add_option("--alpha-override", tr_alpha_override);
    train_cmd->add_option("--k-override", tr_k_override);
    train_cmd->add_option("--policy", tr.policy)->check(CLI::IsMember({"recurrent", "tabular"}));
    train_cmd->add_option("--hidden", tr.hidden);
    train_cmd->add_option("--window", tr.window);
    train_cmd->add_option("--clip-norm", tr.clip_norm);
    train_cmd->add_flag("--baseline", tr.baseline);
    train_cmd->add_flag("--full-episode-score", tr.full_episode_score);
    train_cmd->add_option("--eval-every", tr.eval_every);
    train_cmd->add_option("--workers", tr.workers);
    train_cmd->add_flag("--prune", tr.prune);
    train_cmd->add_option("--out", tr.out_dir)->required();

    // eval
    EvalCli ev;
    double ev_alpha_override = -1.0;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate policies against baselines");
    eval_cmd->add_option("--scenario", ev.scenario_path)->required();
    eval_cmd->add_option("--checkpoint", ev.checkpoint_path);
    eval_cmd->add_option("--baselines", ev.baselines);
    eval_cmd->add_option("--trajectories", ev.trajectories);
    eval_cmd->add_option("--seed", ev.seed);
    eval_cmd->add_option("--k-list", ev.k_list, "comma-separated lookaheads");
    eval_cmd->add_flag("--dump-trajectories", ev.dump_trajectories);
    eval_cmd->add_flag("--prune", ev.prune);
    eval_cmd->add_option("--alpha-override", ev_alpha_override);
    eval_cmd->add_option("--out", ev.out_dir)->required();

    // predict
    std::string pr_scenario, pr_history, pr_out;
    int pr_k = -1;
    auto* pred_cmd = app.add_subcommand("predict", "filter a recorded history");
    pred_cmd->add_option("--scenario", pr_scenario)->required();
    pred_cmd->add_option("--history", pr_history)->required();
    pred_cmd->add_option("--k", pr_k, "lookahead override");
    pred_cmd->add_option("--out", pr_out);

    // validate
    std::string va_scenario;
    bool va_deep = false;
    auto* val_cmd = app.add_subcommand("validate", "run model checks");
    val_cmd->add_option("--scenario", va_scenario)->required();
    val_cmd->add_flag("--deep", va_deep);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (build->parsed())
            return run_build_scenario(cong->parsed() ? "congestion" : "fixture", fixture_name,
                                      ccfg, extra_opts, build_out);
        if (train_cmd->parsed()) {
            if (tr_alpha_override >= 0.0) tr.alpha_override = tr_alpha_override;
            if (tr_k_override >= 0) tr.k_override = tr_k_override;
            return run_train(tr);
        }
        if (eval_cmd->parsed()) {
            if (ev_alpha_override >= 0.0) ev.alpha_override = ev_alpha_override;
            return run_eval(ev);
        }
        if (pred_cmd->parsed())
            return run_predict(pr_scenario, pr_history,
                               pr_k >= 0 ? std::optional<int>(pr_k) : std::nullopt, pr_out);
        if (val_cmd->parsed()) return run_validate(va_scenario, va_deep);
    } catch (const NonFiniteGradient& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kNumerical;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kNumerical;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInputError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInputError;
    }
    return kUsage;
}
