#include "vigil/scenario_io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace vigil {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

[[noreturn]] void schema_fail(const std::string& path, const std::string& what) {
    throw SchemaError("scenario schema error at " + path + ": " + what);
}

const json& require(const json& j, const char* key, const std::string& path) {
    auto it = j.find(key);
    if (it == j.end()) schema_fail(path, std::string("missing field '") + key + "'");
    return *it;
}

std::string as_string(const json& j, const std::string& path) {
    if (!j.is_string()) schema_fail(path, "expected a string");
    return j.get<std::string>();
}

double as_number(const json& j, const std::string& path) {
    if (!j.is_number()) schema_fail(path, "expected a number");
    return j.get<double>();
}

int as_int(const json& j, const std::string& path) {
    if (!j.is_number_integer()) schema_fail(path, "expected an integer");
    return j.get<int>();
}

const json& as_array(const json& j, const std::string& path) {
    if (!j.is_array()) schema_fail(path, "expected an array");
    return j;
}

class NameTable {
public:
    NameTable(const std::vector<std::string>& names, std::string kind) : kind_(std::move(kind)) {
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (!map_.emplace(names[i], static_cast<int>(i)).second)
                throw ValidationError("duplicate " + kind_ + " name '" + names[i] + "'");
        }
    }
    int at(const std::string& name, const std::string& path) const {
        auto it = map_.find(name);
        if (it == map_.end())
            throw ValidationError("unknown " + kind_ + " '" + name + "' at " + path);
        return it->second;
    }

private:
    std::string kind_;
    std::unordered_map<std::string, int> map_;
};

double read_probability(const json& j, const std::string& path) {
    const double p = as_number(require(j, "p", path), path + ".p");
    if (p < 0.0)
        throw ValidationError("negative probability " + std::to_string(p) + " at " + path + ".p");
    if (p > 1.0 + kStochasticTol)
        throw ValidationError("probability above 1 at " + path + ".p");
    return p;
}

Label label_mask(const json& arr, const NameTable& props, const std::string& path) {
    Label mask = 0;
    int i = 0;
    for (const auto& entry : as_array(arr, path)) {
        mask |= Label{1} << props.at(as_string(entry, path + "[" + std::to_string(i) + "]"),
                                     path + "[" + std::to_string(i) + "]");
        ++i;
    }
    return mask;
}

std::vector<std::string> collect_prop_names(const json& root) {
    std::set<std::string> props;
    for (const auto& st : as_array(require(root, "states", "$"), "$.states")) {
        if (st.contains("label"))
            for (const auto& p : as_array(st.at("label"), "$.states[].label"))
                props.insert(as_string(p, "$.states[].label[]"));
    }
    const json& dfa = require(root, "dfa", "$");
    for (const auto& tr : as_array(require(dfa, "transitions", "$.dfa"), "$.dfa.transitions")) {
        for (const auto& p : as_array(require(tr, "label", "$.dfa.transitions[]"),
                                      "$.dfa.transitions[].label"))
            props.insert(as_string(p, "$.dfa.transitions[].label[]"));
    }
    return {props.begin(), props.end()};  // sorted: canonical proposition order
}

ojson label_names(Label mask, const std::vector<std::string>& props) {
    ojson arr = ojson::array();
    for (std::size_t i = 0; i < props.size(); ++i)
        if (mask & (Label{1} << i)) arr.push_back(props[i]);
    return arr;
}

}  // namespace

Scenario scenario_from_json(const std::string& text, const std::string& origin) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError("failed to parse scenario " + origin + ": " + e.what());
    }
    if (!root.is_object()) throw ParseError("scenario " + origin + " is not a JSON object");

    Scenario sc;
    LabeledHmm& m = sc.hmm;

    m.prop_names = collect_prop_names(root);
    const NameTable props(m.prop_names, "proposition");

    const json& states = as_array(require(root, "states", "$"), "$.states");
    for (std::size_t i = 0; i < states.size(); ++i) {
        const std::string path = "$.states[" + std::to_string(i) + "]";
        m.state_names.push_back(as_string(require(states[i], "name", path), path + ".name"));
        m.labels.push_back(states[i].contains("label")
                               ? label_mask(states[i].at("label"), props, path + ".label")
                               : Label{0});
    }
    const NameTable state_ids(m.state_names, "state");

    for (const auto& q : as_array(require(root, "queries", "$"), "$.queries"))
        m.query_names.push_back(as_string(q, "$.queries[]"));
    const NameTable query_ids(m.query_names, "query");

    for (const auto& o : as_array(require(root, "observations", "$"), "$.observations"))
        m.obs_names.push_back(as_string(o, "$.observations[]"));
    const NameTable obs_ids(m.obs_names, "observation");

    const int ns = m.num_states();
    const int no = m.num_obs();
    const int nq = m.num_queries();

    {
        std::vector<Eigen::Triplet<double>> trips;
        std::set<std::pair<int, int>> seen;
        const json& trans = as_array(require(root, "transitions", "$"), "$.transitions");
        for (std::size_t i = 0; i < trans.size(); ++i) {
            const std::string path = "$.transitions[" + std::to_string(i) + "]";
            const int from = state_ids.at(as_string(require(trans[i], "from", path), path), path + ".from");
            const int to = state_ids.at(as_string(require(trans[i], "to", path), path), path + ".to");
            if (!seen.emplace(from, to).second)
                throw ValidationError("duplicate transition entry at " + path);
            const double p = read_probability(trans[i], path);
            if (p > 0.0) trips.emplace_back(to, from, p);
        }
        m.transition.resize(ns, ns);
        m.transition.setFromTriplets(trips.begin(), trips.end());
        m.transition.makeCompressed();
    }

    m.emission.assign(nq, Eigen::MatrixXd::Zero(no, ns));
    {
        std::set<std::tuple<int, int, int>> seen;
        const json& ems = as_array(require(root, "emissions", "$"), "$.emissions");
        for (std::size_t i = 0; i < ems.size(); ++i) {
            const std::string path = "$.emissions[" + std::to_string(i) + "]";
            const int s = state_ids.at(as_string(require(ems[i], "state", path), path), path + ".state");
            const int q = query_ids.at(as_string(require(ems[i], "query", path), path), path + ".query");
            const int o = obs_ids.at(as_string(require(ems[i], "obs", path), path), path + ".obs");
            if (!seen.emplace(s, q, o).second)
                throw ValidationError("duplicate emission entry at " + path);
            m.emission[q](o, s) = read_probability(ems[i], path);
        }
    }

    m.initial_dist = Eigen::VectorXd::Zero(ns);
    {
        const json& init = as_array(require(root, "initial", "$"), "$.initial");
        for (std::size_t i = 0; i < init.size(); ++i) {
            const std::string path = "$.initial[" + std::to_string(i) + "]";
            const int s = state_ids.at(as_string(require(init[i], "state", path), path), path + ".state");
            m.initial_dist[s] = read_probability(init[i], path);
        }
    }

    m.initial_query = query_ids.at(as_string(require(root, "initial_query", "$"), "$.initial_query"),
                                   "$.initial_query");

    {
        const json& d = require(root, "dfa", "$");
        for (const auto& q : as_array(require(d, "states", "$.dfa"), "$.dfa.states"))
            sc.dfa.state_names.push_back(as_string(q, "$.dfa.states[]"));
        const NameTable dfa_ids(sc.dfa.state_names, "DFA state");
        sc.dfa.initial = dfa_ids.at(as_string(require(d, "initial", "$.dfa"), "$.dfa.initial"),
                                    "$.dfa.initial");
        sc.dfa.accepting.assign(sc.dfa.state_names.size(), 0);
        for (const auto& q : as_array(require(d, "accepting", "$.dfa"), "$.dfa.accepting"))
            sc.dfa.accepting[static_cast<std::size_t>(
                dfa_ids.at(as_string(q, "$.dfa.accepting[]"), "$.dfa.accepting[]"))] = 1;
        const json& trans = as_array(require(d, "transitions", "$.dfa"), "$.dfa.transitions");
        for (std::size_t i = 0; i < trans.size(); ++i) {
            const std::string path = "$.dfa.transitions[" + std::to_string(i) + "]";
            const int from = dfa_ids.at(as_string(require(trans[i], "from", path), path), path + ".from");
            const int to = dfa_ids.at(as_string(require(trans[i], "to", path), path), path + ".to");
            const Label lab = label_mask(require(trans[i], "label", path), props, path + ".label");
            if (!sc.dfa.transitions.emplace(std::make_pair(from, lab), to).second)
                throw ValidationError("duplicate DFA transition at " + path);
        }
    }

    {
        const json& cm = as_array(require(root, "cost_matrix", "$"), "$.cost_matrix");
        if (static_cast<int>(cm.size()) != nq * nq)
            schema_fail("$.cost_matrix", "expected " + std::to_string(nq * nq) + " row-major entries");
        sc.cost_matrix.resize(nq, nq);
        for (int i = 0; i < nq * nq; ++i) {
            const double c = as_number(cm[static_cast<std::size_t>(i)],
                                       "$.cost_matrix[" + std::to_string(i) + "]");
            if (c < 0.0)
                throw ValidationError("negative cost at $.cost_matrix[" + std::to_string(i) + "]");
            sc.cost_matrix(i / nq, i % nq) = c;
        }
    }

    sc.alpha = as_number(require(root, "alpha", "$"), "$.alpha");
    sc.horizon = as_int(require(root, "horizon", "$"), "$.horizon");
    sc.lookahead = as_int(require(root, "lookahead", "$"), "$.lookahead");
    if (root.contains("metadata")) {
        const json& md = root.at("metadata");
        if (md.contains("name")) sc.name = as_string(md.at("name"), "$.metadata.name");
        if (md.contains("description"))
            sc.description = as_string(md.at("description"), "$.metadata.description");
    }

    try {
        sc.validate();
    } catch (const InvalidModel& e) {
        throw ValidationError(std::string("scenario invariant violated: ") + e.what());
    }
    return sc;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open scenario file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return scenario_from_json(buf.str(), path);
}

std::string scenario_to_json(const Scenario& sc) {
    const LabeledHmm& m = sc.hmm;
    ojson root;

    ojson states = ojson::array();
    for (int s = 0; s < m.num_states(); ++s) {
        ojson st;
        st["name"] = m.state_names[static_cast<std::size_t>(s)];
        st["label"] = label_names(m.labels[static_cast<std::size_t>(s)], m.prop_names);
        states.push_back(std::move(st));
    }
    root["states"] = std::move(states);

    ojson trans = ojson::array();
    for (int from = 0; from < m.num_states(); ++from) {
        std::vector<std::pair<int, double>> row;
        for (SparseMat::InnerIterator it(m.transition, from); it; ++it)
            row.emplace_back(static_cast<int>(it.row()), it.value());
        std::sort(row.begin(), row.end());
        for (const auto& [to, p] : row) {
            ojson e;
            e["from"] = m.state_names[static_cast<std::size_t>(from)];
            e["to"] = m.state_names[static_cast<std::size_t>(to)];
            e["p"] = p;
            trans.push_back(std::move(e));
        }
    }
    root["transitions"] = std::move(trans);

    root["queries"] = m.query_names;
    root["observations"] = m.obs_names;

    ojson ems = ojson::array();
    for (int s = 0; s < m.num_states(); ++s) {
        for (int q = 0; q < m.num_queries(); ++q) {
            for (int o = 0; o < m.num_obs(); ++o) {
                const double p = m.emission[static_cast<std::size_t>(q)](o, s);
                if (p == 0.0) continue;
                ojson e;
                e["state"] = m.state_names[static_cast<std::size_t>(s)];
                e["query"] = m.query_names[static_cast<std::size_t>(q)];
                e["obs"] = m.obs_names[static_cast<std::size_t>(o)];
                e["p"] = p;
                ems.push_back(std::move(e));
            }
        }
    }
    root["emissions"] = std::move(ems);

    ojson init = ojson::array();
    for (int s = 0; s < m.num_states(); ++s) {
        if (m.initial_dist[s] == 0.0) continue;
        ojson e;
        e["state"] = m.state_names[static_cast<std::size_t>(s)];
        e["p"] = m.initial_dist[s];
        init.push_back(std::move(e));
    }
    root["initial"] = std::move(init);
    root["initial_query"] = m.query_names[static_cast<std::size_t>(m.initial_query)];

    ojson dfa;
    dfa["states"] = sc.dfa.state_names;
    dfa["initial"] = sc.dfa.state_names[static_cast<std::size_t>(sc.dfa.initial)];
    ojson acc = ojson::array();
    for (std::size_t q = 0; q < sc.dfa.state_names.size(); ++q)
        if (sc.dfa.accepting[q]) acc.push_back(sc.dfa.state_names[q]);
    dfa["accepting"] = std::move(acc);
    ojson dtrans = ojson::array();
    for (const auto& [key, to] : sc.dfa.transitions) {  // std::map: already canonical order
        ojson e;
        e["from"] = sc.dfa.state_names[static_cast<std::size_t>(key.first)];
        e["label"] = label_names(key.second, m.prop_names);
        e["to"] = sc.dfa.state_names[static_cast<std::size_t>(to)];
        dtrans.push_back(std::move(e));
    }
    dfa["transitions"] = std::move(dtrans);
    root["dfa"] = std::move(dfa);

    ojson cm = ojson::array();
    for (int i = 0; i < sc.cost_matrix.rows(); ++i)
        for (int j = 0; j < sc.cost_matrix.cols(); ++j) cm.push_back(sc.cost_matrix(i, j));
    root["cost_matrix"] = std::move(cm);

    root["alpha"] = sc.alpha;
    root["horizon"] = sc.horizon;
    root["lookahead"] = sc.lookahead;
    ojson md;
    md["name"] = sc.name;
    md["description"] = sc.description;
    root["metadata"] = std::move(md);

    return root.dump(2) + "\n";
}

void save_scenario(const Scenario& sc, const std::string& path) {
    const std::string text = scenario_to_json(sc);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write scenario file '" + path + "'");
    out << text;
    if (!out) throw IoError("failed writing scenario file '" + path + "'");
}

std::string string_content_hash(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string file_content_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for hashing");
    std::ostringstream buf;
    buf << in.rdbuf();
    return string_content_hash(buf.str());
}

}  // namespace vigil
