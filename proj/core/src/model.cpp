#include "vigil/model.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

namespace vigil {

namespace {

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

template <typename T>
std::uint64_t fnv1a_pod(std::uint64_t h, const T& v) {
    return fnv1a(h, &v, sizeof(T));
}

void check_distribution(const Eigen::Ref<const Eigen::VectorXd>& v, const std::string& what) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (v[i] < 0.0) {
            std::ostringstream os;
            os << what << " has negative entry " << v[i] << " at index " << i;
            throw InvalidModel(os.str());
        }
        sum += v[i];
    }
    if (std::abs(sum - 1.0) > kStochasticTol) {
        std::ostringstream os;
        os << what << " sums to " << sum << ", expected 1";
        throw InvalidModel(os.str());
    }
}

}  // namespace

void LabeledHmm::validate() const {
    const int ns = num_states();
    const int no = num_obs();
    const int nq = num_queries();
    if (ns == 0) throw InvalidModel("model has no states");
    if (no == 0) throw InvalidModel("model has no observations");
    if (nq == 0) throw InvalidModel("model has no queries");
    if (transition.rows() != ns || transition.cols() != ns)
        throw InvalidModel("transition matrix shape does not match state count");
    if (static_cast<int>(emission.size()) != nq)
        throw InvalidModel("emission table missing queries");
    if (initial_dist.size() != ns) throw InvalidModel("initial distribution has wrong length");
    if (initial_query < 0 || initial_query >= nq)
        throw InvalidModel("initial query index out of range");
    if (static_cast<int>(labels.size()) != ns) throw InvalidModel("labeling has wrong length");

    Eigen::VectorXd col_sums = Eigen::VectorXd::Zero(ns);
    for (int j = 0; j < ns; ++j) {
        for (SparseMat::InnerIterator it(transition, j); it; ++it) {
            if (it.value() < 0.0) {
                std::ostringstream os;
                os << "transition from state '" << state_names[j] << "' has negative probability";
                throw InvalidModel(os.str());
            }
            col_sums[j] += it.value();
        }
        if (std::abs(col_sums[j] - 1.0) > kStochasticTol) {
            std::ostringstream os;
            os << "outgoing transition row of state '" << state_names[j] << "' sums to "
               << col_sums[j] << ", expected 1";
            throw InvalidModel(os.str());
        }
    }
    for (int q = 0; q < nq; ++q) {
        if (emission[q].rows() != no || emission[q].cols() != ns)
            throw InvalidModel("emission matrix shape mismatch for query '" + query_names[q] + "'");
        for (int s = 0; s < ns; ++s) {
            check_distribution(emission[q].col(s),
                               "emission of (state '" + state_names[s] + "', query '" +
                                   query_names[q] + "')");
        }
    }
    check_distribution(initial_dist, "initial distribution");
}

int Dfa::step(int q, Label label) const {
    auto it = transitions.find({q, label});
    if (it == transitions.end()) {
        std::ostringstream os;
        os << "DFA transition undefined for state '" << state_names[q] << "' and label mask 0x"
           << std::hex << label;
        throw UndefinedDfaTransition(os.str());
    }
    return it->second;
}

void Dfa::validate() const {
    const int nq = num_states();
    if (nq == 0) throw InvalidModel("DFA has no states");
    if (initial < 0 || initial >= nq) throw InvalidModel("DFA initial state out of range");
    if (static_cast<int>(accepting.size()) != nq)
        throw InvalidModel("DFA accepting mask has wrong length");
    for (const auto& [key, to] : transitions) {
        if (key.first < 0 || key.first >= nq || to < 0 || to >= nq)
            throw InvalidModel("DFA transition references an unknown state");
    }
}

void ProductHmm::validate() const {
    const int n = num_states();
    if (transition.rows() != n || transition.cols() != n)
        throw InvalidModel("product transition shape mismatch");
    if (initial_dist.size() != n) throw InvalidModel("product initial distribution length mismatch");
    if (static_cast<int>(failure.size()) != n) throw InvalidModel("failure mask length mismatch");
    for (int j = 0; j < n; ++j) {
        double sum = 0.0;
        for (SparseMat::InnerIterator it(transition, j); it; ++it) sum += it.value();
        if (std::abs(sum - 1.0) > kStochasticTol) {
            std::ostringstream os;
            os << "product state " << j << " outgoing mass sums to " << sum;
            throw InvalidModel(os.str());
        }
    }
    check_distribution(initial_dist, "product initial distribution");
}

void ProductHmm::refresh_tag() {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    h = fnv1a_pod(h, num_hmm_states);
    h = fnv1a_pod(h, num_dfa_states);
    h = fnv1a_pod(h, num_obs);
    h = fnv1a_pod(h, num_queries);
    h = fnv1a_pod(h, initial_query);
    h = fnv1a(h, failure.data(), failure.size());
    h = fnv1a(h, initial_dist.data(), sizeof(double) * initial_dist.size());
    for (int j = 0; j < transition.outerSize(); ++j) {
        for (SparseMat::InnerIterator it(transition, j); it; ++it) {
            h = fnv1a_pod(h, static_cast<std::int64_t>(it.row()));
            h = fnv1a_pod(h, static_cast<std::int64_t>(it.col()));
            h = fnv1a_pod(h, it.value());
        }
    }
    for (const auto& em : emission) h = fnv1a(h, em.data(), sizeof(double) * em.size());
    tag = h;
}

void Scenario::validate() const {
    hmm.validate();
    dfa.validate();
    if (horizon < 1) throw InvalidModel("horizon must be at least 1");
    if (lookahead < 0) throw InvalidModel("lookahead must be non-negative");
    const int nq = hmm.num_queries();
    if (cost_matrix.rows() != nq || cost_matrix.cols() != nq)
        throw InvalidModel("cost matrix must be |queries| x |queries|");
    if ((cost_matrix.array() < 0.0).any()) throw InvalidModel("cost matrix has negative entries");
    if (alpha < 0.0) throw InvalidModel("alpha must be non-negative");
}

ProductHmm product_compose(const LabeledHmm& hmm, const Dfa& dfa) {
    hmm.validate();
    dfa.validate();

    const int ns = hmm.num_states();
    const int nq = dfa.num_states();
    const int n = ns * nq;

    ProductHmm p;
    p.num_hmm_states = ns;
    p.num_dfa_states = nq;
    p.num_obs = hmm.num_obs();
    p.num_queries = hmm.num_queries();
    p.initial_query = hmm.initial_query;

    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(hmm.transition.nonZeros()) * nq);
    for (int s = 0; s < ns; ++s) {
        for (SparseMat::InnerIterator it(hmm.transition, s); it; ++it) {
            const int s_next = static_cast<int>(it.row());
            const Label lab = hmm.labels[s_next];
            for (int q = 0; q < nq; ++q) {
                const int q_next = dfa.step(q, lab);  // throws if delta is partial here
                trips.emplace_back(p.index_of(s_next, q_next), p.index_of(s, q), it.value());
            }
        }
    }
    p.transition.resize(n, n);
    p.transition.setFromTriplets(trips.begin(), trips.end());
    p.transition.makeCompressed();

    p.emission.resize(hmm.emission.size());
    for (int q = 0; q < hmm.num_queries(); ++q) {
        p.emission[q].resize(hmm.num_obs(), n);
        for (int z = 0; z < n; ++z)
            p.emission[q].col(z) = hmm.emission[q].col(z / nq);
    }

    p.initial_dist = Eigen::VectorXd::Zero(n);
    for (int s = 0; s < ns; ++s) p.initial_dist[p.index_of(s, dfa.initial)] = hmm.initial_dist[s];

    p.failure.assign(static_cast<std::size_t>(n), 0);
    for (int s = 0; s < ns; ++s)
        for (int q = 0; q < nq; ++q)
            if (dfa.accepting[q]) p.failure[static_cast<std::size_t>(p.index_of(s, q))] = 1;

    p.validate();
    p.failure_absorbing = detect_absorbing(p);
    p.refresh_tag();
    return p;
}

bool detect_absorbing(const ProductHmm& p) {
    const int n = p.num_states();
    for (int j = 0; j < n; ++j) {
        if (!p.is_failure(j)) continue;
        for (SparseMat::InnerIterator it(p.transition, j); it; ++it) {
            if (it.value() > 0.0 && !p.is_failure(static_cast<int>(it.row()))) return false;
        }
    }
    return true;
}

PrunedProduct prune_unreachable(const ProductHmm& p) {
    const int n = p.num_states();
    std::vector<std::uint8_t> seen(static_cast<std::size_t>(n), 0);
    std::deque<int> frontier;
    for (int z = 0; z < n; ++z) {
        if (p.initial_dist[z] > 0.0) {
            seen[static_cast<std::size_t>(z)] = 1;
            frontier.push_back(z);
        }
    }
    while (!frontier.empty()) {
        const int z = frontier.front();
        frontier.pop_front();
        for (SparseMat::InnerIterator it(p.transition, z); it; ++it) {
            const int z2 = static_cast<int>(it.row());
            if (it.value() > 0.0 && !seen[static_cast<std::size_t>(z2)]) {
                seen[static_cast<std::size_t>(z2)] = 1;
                frontier.push_back(z2);
            }
        }
    }

    PrunedProduct out;
    out.new_of_old.assign(static_cast<std::size_t>(n), -1);
    for (int z = 0; z < n; ++z) {
        if (seen[static_cast<std::size_t>(z)]) {
            out.new_of_old[static_cast<std::size_t>(z)] = static_cast<int>(out.old_of_new.size());
            out.old_of_new.push_back(z);
        }
    }
    const int m = static_cast<int>(out.old_of_new.size());

    ProductHmm& r = out.product;
    // The pruned model is no longer a full S x Q grid; treat it as a flat
    // state space with one "DFA state".
    r.num_hmm_states = m;
    r.num_dfa_states = 1;
    r.num_obs = p.num_obs;
    r.num_queries = p.num_queries;
    r.initial_query = p.initial_query;

    std::vector<Eigen::Triplet<double>> trips;
    for (int jz = 0; jz < m; ++jz) {
        const int old_j = out.old_of_new[static_cast<std::size_t>(jz)];
        for (SparseMat::InnerIterator it(p.transition, old_j); it; ++it) {
            const int nz = out.new_of_old[static_cast<std::size_t>(it.row())];
            if (it.value() > 0.0 && nz >= 0) trips.emplace_back(nz, jz, it.value());
        }
    }
    r.transition.resize(m, m);
    r.transition.setFromTriplets(trips.begin(), trips.end());
    r.transition.makeCompressed();

    r.emission.resize(p.emission.size());
    for (std::size_t q = 0; q < p.emission.size(); ++q) {
        r.emission[q].resize(p.num_obs, m);
        for (int z = 0; z < m; ++z)
            r.emission[q].col(z) = p.emission[q].col(out.old_of_new[static_cast<std::size_t>(z)]);
    }
    r.initial_dist.resize(m);
    r.failure.resize(static_cast<std::size_t>(m));
    for (int z = 0; z < m; ++z) {
        const int old_z = out.old_of_new[static_cast<std::size_t>(z)];
        r.initial_dist[z] = p.initial_dist[old_z];
        r.failure[static_cast<std::size_t>(z)] = p.failure[static_cast<std::size_t>(old_z)];
    }
    r.validate();
    r.failure_absorbing = detect_absorbing(r);
    r.refresh_tag();
    return out;
}

}  // namespace vigil
