#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "support/test_models.hpp"
#include "vigil/evaluator.hpp"
#include "vigil/scenarios.hpp"

using namespace vigil;
using namespace vigil::testing;

TEST_CASE("brier score") {
    SUBCASE("perfect predictions") {
        std::vector<double> p{0.0, 1.0, 1.0, 0.0};
        std::vector<std::uint8_t> w{0, 1, 1, 0};
        CHECK(brier_score(p, w) == 0.0);
    }
    SUBCASE("single-step arithmetic") {
        std::vector<double> p{0.3};
        std::vector<std::uint8_t> w{1};
        CHECK(brier_score(p, w) == doctest::Approx(0.49).epsilon(1e-14));
    }
    SUBCASE("length mismatch") {
        std::vector<double> p{0.3, 0.4};
        std::vector<std::uint8_t> w{1};
        CHECK_THROWS_AS(brier_score(p, w), LengthMismatch);
    }
    SUBCASE("the event frequency minimizes constant predictions") {
        std::vector<std::uint8_t> w{1, 0, 0, 1, 0, 0, 0, 1, 0, 0};
        double mean = 0.0;
        for (auto x : w) mean += x;
        mean /= static_cast<double>(w.size());
        double best_p = -1.0, best = 1e9;
        for (int i = 0; i <= 100; ++i) {
            const double c = i / 100.0;
            std::vector<double> p(w.size(), c);
            const double b = brier_score(p, w);
            if (b < best) {
                best = b;
                best_p = c;
            }
        }
        CHECK(best_p == doctest::Approx(mean).epsilon(1e-12));
    }
}

TEST_CASE("gap closure") {
    CHECK(gap_closure(0.1880, 0.0799, 0.0386) ==
          doctest::Approx(0.1081 / 0.1494).epsilon(1e-12));
    CHECK(gap_closure(0.1791, 0.0564, 0.0149) ==
          doctest::Approx(0.1227 / 0.1642).epsilon(1e-12));
    CHECK(gap_closure(0.2, 0.1, 0.1) == 1.0);  // full closure
    CHECK_THROWS_AS(gap_closure(0.1, 0.1, 0.1), DegenerateGap);
    CHECK_THROWS_AS(gap_closure(0.05, 0.1, 0.2), DegenerateGap);
}

TEST_CASE("evaluate on the f1 fixture") {
    const Scenario sc = build_fixture("f1");

    SUBCASE("zero trajectories are rejected") {
        CHECK_THROWS_AS(evaluate(sc, std::nullopt, {}, 0, 1, {}), EmptyEvaluation);
    }

    SUBCASE("oracle mean Brier matches its closed form within 3 sigma") {
        // While the chain sits in the safe state the oracle predicts failure
        // with p = 0.3, contributing p(1-p); after absorption it scores 0.
        EvalOptions opts;
        opts.run_random = false;
        const int n = 20000;
        const EvalReport rep = evaluate(sc, std::nullopt, {1}, n, 99, opts);
        REQUIRE(rep.rows.size() == 1);
        const int K = sc.horizon;
        double expected_occupancy = 0.0;  // E[# safe steps] / (K+1)
        for (int t = 0; t <= K; ++t) expected_occupancy += std::pow(0.7, t);
        const double analytic = 0.21 * expected_occupancy / (K + 1);
        CHECK(rep.rows[0].policy == "oracle");
        CHECK(rep.rows[0].cost == 0.0);
        // 1.96 -> 3 sigma conversion on the reported CI half-width.
        const double three_sigma = rep.rows[0].brier_ci / 1.96 * 3.0;
        CHECK(std::abs(rep.rows[0].brier - analytic) <= three_sigma);
    }

    SUBCASE("report covers every policy and lookahead, gap closure defined") {
        PolicyConfig cfg;
        cfg.variant = PolicyVariant::tabular;
        cfg.num_obs = 2;
        cfg.num_queries = 2;
        cfg.window = 0;
        PolicyParams trained = PolicyParams::init(cfg);
        Eigen::VectorXd theta = trained.flat();
        theta[0] = 50.0;  // exact sensor always
        trained.set_flat(theta);

        const EvalReport rep = evaluate(sc, trained, {0, 1}, 3000, 5, {});
        CHECK(rep.rows.size() == 6);  // 3 policies x 2 lookaheads
        CHECK(rep.gap_closures.size() == 2);
        for (const auto& r : rep.rows) {
            CHECK(r.brier >= 0.0);
            CHECK(r.brier <= 1.0);
        }
        // Exact sensing recovers the oracle's predictions on this fixture.
        const auto find = [&](const std::string& n, int k) {
            for (const auto& r : rep.rows)
                if (r.policy == n && r.lookahead == k) return r;
            FAIL("row missing");
            return rep.rows[0];
        };
        const auto tr = find("trained", 1);
        const auto orc = find("oracle", 1);
        const auto rnd = find("random", 1);
        CHECK(orc.brier <= tr.brier + tr.brier_ci + orc.brier_ci);
        CHECK(tr.brier < rnd.brier);
        CHECK(std::abs(tr.brier - orc.brier) <= 0.1 * orc.brier + tr.brier_ci + orc.brier_ci);
    }

    SUBCASE("determinism across runs") {
        const EvalReport a = evaluate(sc, std::nullopt, {1}, 500, 3, {});
        const EvalReport b = evaluate(sc, std::nullopt, {1}, 500, 3, {});
        REQUIRE(a.rows.size() == b.rows.size());
        for (std::size_t i = 0; i < a.rows.size(); ++i) {
            CHECK(a.rows[i].brier == b.rows[i].brier);
            CHECK(a.rows[i].cost == b.rows[i].cost);
        }
    }
}

TEST_CASE("brute-force sequence probabilities") {
    const Scenario sc = build_fixture("f1");
    const ModelBundle bundle = make_bundle(sc, {});

    SUBCASE("fixed query, horizon 1: two histories") {
        PolicyConfig cfg;
        cfg.variant = PolicyVariant::tabular;
        cfg.num_obs = 2;
        cfg.num_queries = 2;
        cfg.window = 0;
        PolicyParams fixed = PolicyParams::init(cfg);
        Eigen::VectorXd theta = fixed.flat();
        theta[0] = 500.0;  // pin to the exact sensor
        fixed.set_flat(theta);
        const auto table = brute_force_sequence_probs(bundle.product, fixed, 1);
        REQUIRE(table.size() == 2);
        double p_safe = 0.0, p_crash = 0.0;
        for (const auto& y : table)
            (y.observations.back() == 0 ? p_safe : p_crash) = y.prob;
        CHECK(p_safe == doctest::Approx(0.7).epsilon(1e-12));
        CHECK(p_crash == doctest::Approx(0.3).epsilon(1e-12));
    }

    SUBCASE("uniform policy factorizes") {
        PolicyConfig cfg;
        cfg.variant = PolicyVariant::uniform;
        cfg.num_obs = 2;
        cfg.num_queries = 2;
        const PolicyParams uni = PolicyParams::init(cfg);
        const auto table = brute_force_sequence_probs(bundle.product, uni, 1);
        double total = 0.0;
        for (const auto& y : table) {
            total += y.prob;
            const double like = path_likelihood(bundle.product, y.queries, y.observations);
            CHECK(y.prob == doctest::Approx(0.25 * like).epsilon(1e-12));
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-10));
    }

    SUBCASE("filter-based likelihoods agree with every enumerated history") {
        PolicyConfig cfg;
        cfg.variant = PolicyVariant::uniform;
        cfg.num_obs = 2;
        cfg.num_queries = 2;
        const PolicyParams uni = PolicyParams::init(cfg);
        for (const auto& y : brute_force_sequence_probs(bundle.product, uni, 2)) {
            const double via_filter =
                std::exp(sequence_log_prob(bundle.product, bundle.ops, y.queries, y.observations));
            const double pi = std::pow(0.5, static_cast<double>(y.queries.size()));
            CHECK(std::abs(via_filter * pi - y.prob) <= 1e-10);
        }
    }

    SUBCASE("guard rejects huge enumerations") {
        PolicyConfig cfg;
        cfg.variant = PolicyVariant::uniform;
        cfg.num_obs = 2;
        cfg.num_queries = 2;
        const PolicyParams uni = PolicyParams::init(cfg);
        CHECK_THROWS_AS(brute_force_sequence_probs(bundle.product, uni, 12), TooLarge);
    }
}

TEST_CASE("csv emitters") {
    namespace fs = std::filesystem;
    const std::string dir = (fs::temp_directory_path() / "vigil_csv_test").string();
    fs::create_directories(dir);

    SUBCASE("report schema and round-trip precision") {
        EvalReport rep;
        rep.rows.push_back({"trained", 3, 0.0799123456789012, 0.0035, 198.112233445566, 2.0});
        const std::string path = dir + "/report.csv";
        write_report_csv(rep, path);
        std::ifstream in(path);
        std::string header, line;
        std::getline(in, header);
        CHECK(header == "policy,k,brier,brier_ci,cost,cost_ci");
        std::getline(in, line);
        CHECK(line.substr(0, 10) == "trained,3,");
        // 12 significant digits survive the round trip.
        const auto first_comma = line.find(',', 10);
        const double parsed = std::stod(line.substr(10, first_comma - 10));
        CHECK(std::abs(parsed - 0.0799123456789012) <= 1e-13);
    }
    SUBCASE("empty records produce a header-only file") {
        EvalReport rep;
        const std::string path = dir + "/empty.csv";
        write_trajectories_csv(rep, path);
        std::ifstream in(path);
        std::string header, rest;
        std::getline(in, header);
        CHECK(header == "traj,t,p_unsafe,w,query,obs,cost");
        CHECK(!std::getline(in, rest));
    }
    SUBCASE("accuracy trace schema") {
        EvalReport rep;
        rep.accuracy.push_back({0, "oracle", 0.25});
        const std::string path = dir + "/acc.csv";
        write_accuracy_csv(rep, path);
        std::ifstream in(path);
        std::string header, line;
        std::getline(in, header);
        CHECK(header == "t,policy,mean_abs_error");
        std::getline(in, line);
        CHECK(line == "0,oracle,0.25");
    }
}

TEST_CASE("uniform policy Brier dominates the exact-sensor policy") {
    const Scenario sc = build_fixture("f1-two-sensor");
    PolicyConfig cfg;
    cfg.variant = PolicyVariant::tabular;
    cfg.num_obs = 2;
    cfg.num_queries = 2;
    cfg.window = 0;
    PolicyParams trained = PolicyParams::init(cfg);
    Eigen::VectorXd theta = trained.flat();
    theta[0] = 50.0;
    trained.set_flat(theta);
    const EvalReport rep = evaluate(sc, trained, {1}, 5000, 11, {});
    const auto find = [&](const std::string& n) {
        for (const auto& r : rep.rows)
            if (r.policy == n) return r;
        FAIL("row missing");
        return rep.rows[0];
    };
    CHECK(find("trained").brier + find("trained").brier_ci + find("random").brier_ci <
          find("random").brier);
}
