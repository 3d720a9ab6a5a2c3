#include "vigil/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "vigil/errors.hpp"

namespace vigil {

namespace {

using json = nlohmann::json;

constexpr const char* kObsNames[] = {"s_ego", "s_traffic", "s_both", "null"};

struct MapData {
    std::map<int, std::vector<std::pair<int, double>>> ego;  // node -> (next, p)
    std::map<int, std::set<int>> adj;
    std::vector<int> ego_start;
    int zone1_low, zone1_high;
    int zone2_low, zone2_high;
    std::vector<int> obstacle1_initial;
    std::vector<int> obstacle2_initial;
    std::vector<std::pair<std::string, std::set<int>>> sensors;  // declaration order
    int target_node, goal_node;
    double false_negative;
    double cost_hold, cost_switch, cost_idle;
};

MapData load_map(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open map data file '" + path + "'");
    json root;
    try {
        in >> root;
    } catch (const json::parse_error& e) {
        throw ParseError("failed to parse map data '" + path + "': " + e.what());
    }

    MapData m;
    for (const auto& e : root.at("ego_transitions"))
        m.ego[e.at("from").get<int>()].emplace_back(e.at("to").get<int>(), e.at("p").get<double>());
    for (auto& [node, row] : m.ego) std::sort(row.begin(), row.end());
    for (const auto& [node, row] : m.ego) {
        double sum = 0.0;
        for (const auto& [to, p] : row) sum += p;
        if (std::abs(sum - 1.0) > kStochasticTol) {
            std::ostringstream os;
            os << "ego transition row of node " << node << " sums to " << sum << ", expected 1";
            throw ValidationError(os.str());
        }
    }
    for (const auto& e : root.at("edges")) {
        const int u = e.at(0).get<int>();
        const int v = e.at(1).get<int>();
        m.adj[u].insert(v);
        m.adj[v].insert(u);
    }
    m.ego_start = root.at("ego_start").get<std::vector<int>>();
    m.zone1_low = root.at("zone1").at("low").get<int>();
    m.zone1_high = root.at("zone1").at("high").get<int>();
    m.obstacle1_initial = root.at("zone1").at("initial").get<std::vector<int>>();
    m.zone2_low = root.at("zone2").at("low").get<int>();
    m.zone2_high = root.at("zone2").at("high").get<int>();
    m.obstacle2_initial = root.at("zone2").at("initial").get<std::vector<int>>();
    for (const auto& [name, nodes] : root.at("sensors").items()) {
        std::set<int> cov;
        for (const auto& n : nodes) cov.insert(n.get<int>());
        m.sensors.emplace_back(name, std::move(cov));
    }
    std::sort(m.sensors.begin(), m.sensors.end());
    m.target_node = root.at("target_node").get<int>();
    m.goal_node = root.at("goal_node").get<int>();
    m.false_negative = root.at("false_negative_rate").get<double>();
    m.cost_hold = root.at("cost_hold").get<double>();
    m.cost_switch = root.at("cost_switch").get<double>();
    m.cost_idle = root.at("cost_idle").get<double>();
    return m;
}

Dfa make_failure_dfa(int prop_crash, int prop_target, int prop_goal) {
    // Failure = crash at any time, or reaching the goal node before the
    // target node.  q0: target not yet seen; q1: target seen; qfail trap.
    Dfa d;
    d.state_names = {"q0", "q1", "qfail"};
    d.initial = 0;
    d.accepting = {0, 0, 1};
    const Label none = 0;
    const Label crash = Label{1} << prop_crash;
    const Label target = Label{1} << prop_target;
    const Label goal = Label{1} << prop_goal;
    d.transitions[{0, none}] = 0;
    d.transitions[{0, target}] = 1;
    d.transitions[{0, goal}] = 2;
    d.transitions[{0, crash}] = 2;
    d.transitions[{1, none}] = 1;
    d.transitions[{1, target}] = 1;
    d.transitions[{1, goal}] = 1;
    d.transitions[{1, crash}] = 2;
    d.transitions[{2, none}] = 2;
    d.transitions[{2, target}] = 2;
    d.transitions[{2, goal}] = 2;
    d.transitions[{2, crash}] = 2;
    return d;
}

}  // namespace

std::string default_map_path() {
#ifdef VIGIL_DATA_DIR
    return std::string(VIGIL_DATA_DIR) + "/congestion_map.json";
#else
    return "data/congestion_map.json";
#endif
}

void apply_option(CongestionConfig& cfg, const std::string& key, const std::string& value) {
    try {
        if (key == "k" || key == "lookahead") {
            cfg.lookahead = std::stoi(value);
        } else if (key == "horizon") {
            cfg.horizon = std::stoi(value);
        } else if (key == "alpha") {
            cfg.alpha = std::stod(value);
        } else if (key == "map") {
            cfg.map_path = value;
        } else {
            throw ConfigError("unknown congestion scenario option '" + key + "'");
        }
    } catch (const std::invalid_argument&) {
        throw ConfigError("bad value '" + value + "' for option '" + key + "'");
    } catch (const std::out_of_range&) {
        throw ConfigError("bad value '" + value + "' for option '" + key + "'");
    }
}

Scenario build_congestion_scenario(const CongestionConfig& cfg) {
    if (cfg.lookahead < 0) throw ConfigError("lookahead must be non-negative");
    if (cfg.horizon < 1) throw ConfigError("horizon must be at least 1");
    const MapData map = load_map(cfg.map_path.empty() ? default_map_path() : cfg.map_path);

    const auto in_zone1 = [&](int n) { return n >= map.zone1_low && n <= map.zone1_high; };
    const auto in_zone2 = [&](int n) { return n >= map.zone2_low && n <= map.zone2_high; };

    std::vector<int> ego_nodes;
    for (const auto& [node, row] : map.ego) ego_nodes.push_back(node);

    // Tracked-obstacle slot: first-zone nodes, then second-zone nodes, then
    // the activation marker (second obstacle spawns one step after the ego
    // first leaves the first zone).
    std::vector<int> slots;  // node id, or -1 for the marker
    for (int n = map.zone1_low; n <= map.zone1_high; ++n) slots.push_back(n);
    for (int n = map.zone2_low; n <= map.zone2_high; ++n) slots.push_back(n);
    slots.push_back(-1);
    const int n_slots = static_cast<int>(slots.size());

    std::map<int, int> ego_idx, slot_idx;
    for (std::size_t i = 0; i < ego_nodes.size(); ++i) ego_idx[ego_nodes[i]] = static_cast<int>(i);
    for (int i = 0; i < n_slots; ++i) slot_idx[slots[static_cast<std::size_t>(i)]] = i;

    // In-zone random-walk rows for both patrol zones.
    std::map<int, std::vector<int>> walk;
    for (int n : slots) {
        if (n < 0) continue;
        std::vector<int> nbrs;
        auto it = map.adj.find(n);
        if (it != map.adj.end()) {
            for (int v : it->second) {
                if ((in_zone1(n) && in_zone1(v)) || (in_zone2(n) && in_zone2(v))) nbrs.push_back(v);
            }
        }
        if (nbrs.empty()) {
            std::ostringstream os;
            os << "patrol node " << n << " has no in-zone neighbor";
            throw ValidationError(os.str());
        }
        walk[n] = std::move(nbrs);
    }

    Scenario sc;
    LabeledHmm& m = sc.hmm;
    const int ns = static_cast<int>(ego_nodes.size()) * n_slots;
    const auto joint = [&](int e, int s) { return e * n_slots + s; };

    m.prop_names = {"crash", "n23", "n41"};
    const int prop_crash = 0, prop_target = 1, prop_goal = 2;

    m.state_names.resize(static_cast<std::size_t>(ns));
    m.labels.assign(static_cast<std::size_t>(ns), 0);
    for (int e = 0; e < static_cast<int>(ego_nodes.size()); ++e) {
        for (int s = 0; s < n_slots; ++s) {
            const int node = ego_nodes[static_cast<std::size_t>(e)];
            const int slot = slots[static_cast<std::size_t>(s)];
            std::ostringstream nm;
            nm << "e" << node << "_m" << (slot < 0 ? std::string("x") : std::to_string(slot));
            m.state_names[static_cast<std::size_t>(joint(e, s))] = nm.str();
            Label lab = 0;
            if (slot == node) lab |= Label{1} << prop_crash;
            if (node == map.target_node) lab |= Label{1} << prop_target;
            if (node == map.goal_node) lab |= Label{1} << prop_goal;
            m.labels[static_cast<std::size_t>(joint(e, s))] = lab;
        }
    }

    {
        std::vector<Eigen::Triplet<double>> trips;
        for (int e = 0; e < static_cast<int>(ego_nodes.size()); ++e) {
            const int e_node = ego_nodes[static_cast<std::size_t>(e)];
            for (int s = 0; s < n_slots; ++s) {
                const int slot = slots[static_cast<std::size_t>(s)];
                const int src = joint(e, s);
                for (const auto& [e_next_node, pe] : map.ego.at(e_node)) {
                    const int e_next = ego_idx.at(e_next_node);
                    // Slot dynamics may depend on the ego move (zone departure).
                    std::vector<std::pair<int, double>> slot_next;
                    if (slot < 0) {
                        const double p = 1.0 / static_cast<double>(map.obstacle2_initial.size());
                        for (int n : map.obstacle2_initial) slot_next.emplace_back(slot_idx.at(n), p);
                    } else if (in_zone1(slot) && in_zone1(e_node) && !in_zone1(e_next_node)) {
                        // First departure: retire the first obstacle, arm the second.
                        slot_next.emplace_back(slot_idx.at(-1), 1.0);
                    } else {
                        const auto& nbrs = walk.at(slot);
                        const double p = 1.0 / static_cast<double>(nbrs.size());
                        for (int n : nbrs) slot_next.emplace_back(slot_idx.at(n), p);
                    }
                    for (const auto& [s_next, ps] : slot_next)
                        trips.emplace_back(joint(e_next, s_next), src, pe * ps);
                }
            }
        }
        m.transition.resize(ns, ns);
        m.transition.setFromTriplets(trips.begin(), trips.end());
        m.transition.makeCompressed();
    }

    m.obs_names.assign(std::begin(kObsNames), std::end(kObsNames));
    for (const auto& [name, cov] : map.sensors) m.query_names.push_back(name);
    m.query_names.push_back("no-query");
    const int nq = m.num_queries();
    const int no = m.num_obs();
    const int obs_null = 3;

    const double hit = 1.0 - map.false_negative;
    m.emission.assign(static_cast<std::size_t>(nq), Eigen::MatrixXd::Zero(no, ns));
    for (int q = 0; q < nq; ++q) {
        const bool idle = (q == nq - 1);
        for (int e = 0; e < static_cast<int>(ego_nodes.size()); ++e) {
            for (int s = 0; s < n_slots; ++s) {
                const int z = joint(e, s);
                if (idle) {
                    m.emission[static_cast<std::size_t>(q)](obs_null, z) = 1.0;
                    continue;
                }
                const auto& cov = map.sensors[static_cast<std::size_t>(q)].second;
                const int slot = slots[static_cast<std::size_t>(s)];
                const bool ego_in = cov.count(ego_nodes[static_cast<std::size_t>(e)]) != 0;
                const bool obs_in = slot >= 0 && cov.count(slot) != 0;
                const double pe = ego_in ? hit : 0.0;
                const double po = obs_in ? hit : 0.0;
                auto& em = m.emission[static_cast<std::size_t>(q)];
                em(0, z) = pe * (1.0 - po);        // ego detected only
                em(1, z) = po * (1.0 - pe);        // obstacle detected only
                em(2, z) = pe * po;                // both
                em(obs_null, z) = (1.0 - pe) * (1.0 - po);
            }
        }
    }

    m.initial_dist = Eigen::VectorXd::Zero(ns);
    {
        const double p = 1.0 / static_cast<double>(map.ego_start.size() * map.obstacle1_initial.size());
        for (int e_node : map.ego_start)
            for (int o_node : map.obstacle1_initial)
                m.initial_dist[joint(ego_idx.at(e_node), slot_idx.at(o_node))] = p;
    }
    m.initial_query = nq - 1;  // start idle

    sc.dfa = make_failure_dfa(prop_crash, prop_target, prop_goal);

    sc.cost_matrix.resize(nq, nq);
    for (int prev = 0; prev < nq; ++prev) {
        for (int next = 0; next < nq; ++next) {
            if (next == nq - 1)
                sc.cost_matrix(prev, next) = map.cost_idle;
            else if (next == prev)
                sc.cost_matrix(prev, next) = map.cost_hold;
            else
                sc.cost_matrix(prev, next) = map.cost_switch;
        }
    }

    sc.alpha = cfg.alpha;
    sc.horizon = cfg.horizon;
    sc.lookahead = cfg.lookahead;
    {
        std::ostringstream nm;
        nm << "congestion-k" << cfg.lookahead;
        sc.name = nm.str();
    }
    sc.description =
        "44-node ego chain with a zone-patrolling obstacle (second obstacle arms one step "
        "after the ego first leaves nodes 3-22), ten boolean proximity sensors plus no-query, "
        "failure on crash or on reaching node 41 before node 23.";

    sc.validate();
    return sc;
}

Scenario build_fixture(const std::string& name) {
    int horizon = 0;
    if (name == "f1") {
        horizon = 8;
    } else if (name == "f1-two-sensor") {
        horizon = 5;
    } else {
        throw ConfigError("unknown fixture '" + name + "' (expected f1 or f1-two-sensor)");
    }

    Scenario sc;
    LabeledHmm& m = sc.hmm;
    m.state_names = {"a", "b"};
    m.prop_names = {"crash"};
    m.labels = {0, 1};
    {
        std::vector<Eigen::Triplet<double>> trips{{0, 0, 0.7}, {1, 0, 0.3}, {1, 1, 1.0}};
        m.transition.resize(2, 2);
        m.transition.setFromTriplets(trips.begin(), trips.end());
        m.transition.makeCompressed();
    }
    m.obs_names = {"safe", "crash"};
    m.query_names = {"s1", "s2"};
    m.emission.assign(2, Eigen::MatrixXd::Zero(2, 2));
    m.emission[0](0, 0) = 1.0;  // s1 reports the state exactly
    m.emission[0](1, 1) = 1.0;
    m.emission[1].setConstant(0.5);  // s2 is pure noise
    m.initial_dist = Eigen::Vector2d(1.0, 0.0);
    m.initial_query = 0;

    sc.dfa.state_names = {"q0", "qfail"};
    sc.dfa.initial = 0;
    sc.dfa.accepting = {0, 1};
    sc.dfa.transitions[{0, 0}] = 0;
    sc.dfa.transitions[{0, 1}] = 1;
    sc.dfa.transitions[{1, 0}] = 1;
    sc.dfa.transitions[{1, 1}] = 1;

    sc.cost_matrix.resize(2, 2);
    sc.cost_matrix << 5.0, 10.0, 10.0, 5.0;
    sc.alpha = 0.0;
    sc.horizon = horizon;
    sc.lookahead = 1;
    sc.name = name;
    sc.description = "two-state chain with absorbing failure; one exact sensor, one noise sensor";
    sc.validate();
    return sc;
}

}  // namespace vigil
