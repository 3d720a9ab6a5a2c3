#include "vigil/policy.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "vigil/errors.hpp"

namespace vigil {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap map_w(const double* p, const RecurrentLayout& L) {
    return ConstMap(p + L.w_off, 4 * L.hidden, L.input);
}
ConstMap map_u(const double* p, const RecurrentLayout& L) {
    return ConstMap(p + L.u_off, 4 * L.hidden, L.hidden);
}
Eigen::Map<const Eigen::VectorXd> map_b(const double* p, const RecurrentLayout& L) {
    return {p + L.b_off, 4 * L.hidden};
}
ConstMap map_wout(const double* p, const RecurrentLayout& L) {
    return ConstMap(p + L.wout_off, L.actions, L.hidden);
}
Eigen::Map<const Eigen::VectorXd> map_bout(const double* p, const RecurrentLayout& L) {
    return {p + L.bout_off, L.actions};
}

Eigen::VectorXd sigmoid(const Eigen::VectorXd& x) {
    return (1.0 + (-x.array()).exp()).inverse().matrix();
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
    Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp().matrix();
    return e / e.sum();
}

struct CellResult {
    Eigen::VectorXd gi, gf, go, gg, c, h, tanh_c;
};

CellResult lstm_cell(const PolicyParams& params, const Eigen::VectorXd& h_prev,
                     const Eigen::VectorXd& c_prev, int obs, int query) {
    const RecurrentLayout& L = params.layout();
    const double* p = params.flat().data();
    const auto W = map_w(p, L);
    const auto U = map_u(p, L);
    Eigen::VectorXd pre = map_b(p, L);
    pre += W.col(obs);
    pre += W.col(params.config().num_obs + query);
    pre.noalias() += U * h_prev;

    const int h = L.hidden;
    CellResult r;
    r.gi = sigmoid(pre.segment(0, h));
    r.gf = sigmoid(pre.segment(h, h));
    r.go = sigmoid(pre.segment(2 * h, h));
    r.gg = pre.segment(3 * h, h).array().tanh().matrix();
    r.c = r.gf.cwiseProduct(c_prev) + r.gi.cwiseProduct(r.gg);
    r.tanh_c = r.c.array().tanh().matrix();
    r.h = r.go.cwiseProduct(r.tanh_c);
    return r;
}

void check_indices(const PolicyParams& params, int obs, int query) {
    if (obs < 0 || obs >= params.config().num_obs)
        throw DomainError("observation index out of range");
    if (query < 0 || query >= params.config().num_queries)
        throw DomainError("query index out of range");
}

}  // namespace

std::string to_string(PolicyVariant v) {
    switch (v) {
        case PolicyVariant::recurrent: return "recurrent";
        case PolicyVariant::tabular: return "tabular";
        case PolicyVariant::uniform: return "uniform";
    }
    return "?";
}

PolicyVariant policy_variant_from_string(const std::string& s) {
    if (s == "recurrent") return PolicyVariant::recurrent;
    if (s == "tabular") return PolicyVariant::tabular;
    if (s == "uniform") return PolicyVariant::uniform;
    throw ConfigError("unknown policy variant '" + s + "'");
}

RecurrentLayout RecurrentLayout::make(int hidden, int num_obs, int num_queries) {
    RecurrentLayout L;
    L.hidden = hidden;
    L.input = num_obs + num_queries;
    L.actions = num_queries;
    L.w_off = 0;
    L.u_off = L.w_off + 4 * hidden * L.input;
    L.b_off = L.u_off + 4 * hidden * hidden;
    L.wout_off = L.b_off + 4 * hidden;
    L.bout_off = L.wout_off + L.actions * hidden;
    L.total = L.bout_off + L.actions;
    return L;
}

PolicyParams PolicyParams::init(const PolicyConfig& cfg) {
    if (cfg.num_obs <= 0 || cfg.num_queries <= 0)
        throw ConfigError("policy needs positive observation and query counts");
    PolicyParams p;
    p.cfg_ = cfg;
    switch (cfg.variant) {
        case PolicyVariant::recurrent: {
            if (cfg.hidden <= 0) throw ConfigError("hidden width must be positive");
            p.layout_ = RecurrentLayout::make(cfg.hidden, cfg.num_obs, cfg.num_queries);
            p.theta_.resize(p.layout_.total);
            Rng rng(cfg.seed);
            for (int i = 0; i < p.layout_.total; ++i)
                p.theta_[i] = rng.uniform(-cfg.init_scale, cfg.init_scale);
            p.theta_.segment(p.layout_.bout_off, p.layout_.actions).setZero();
            break;
        }
        case PolicyVariant::tabular: {
            if (cfg.window < 0) throw ConfigError("tabular window must be non-negative");
            const std::int64_t base =
                static_cast<std::int64_t>(cfg.num_obs) * cfg.num_queries;
            std::int64_t rows = 0, block = 1;
            for (int j = 0; j <= cfg.window; ++j) {
                rows += block;
                block *= base;
                if (rows * cfg.num_queries > 50'000'000)
                    throw TooLarge("tabular policy table would exceed 50M parameters");
            }
            p.table_rows_ = static_cast<int>(rows);
            p.theta_ = Eigen::VectorXd::Zero(rows * cfg.num_queries);
            break;
        }
        case PolicyVariant::uniform:
            p.theta_.resize(0);
            break;
    }
    return p;
}

void PolicyParams::set_flat(const Eigen::VectorXd& theta) {
    if (theta.size() != theta_.size())
        throw VariantMismatch("flat parameter vector has the wrong dimension");
    theta_ = theta;
}

int PolicyParams::table_row(std::span<const std::pair<int, int>> window) const {
    if (cfg_.variant != PolicyVariant::tabular)
        throw VariantMismatch("table_row is only defined for the tabular variant");
    const std::int64_t base = static_cast<std::int64_t>(cfg_.num_obs) * cfg_.num_queries;
    std::int64_t offset = 0, block = 1;
    for (std::size_t j = 0; j < window.size(); ++j) {
        offset += block;
        block *= base;
    }
    std::int64_t idx = 0;
    for (const auto& [o, q] : window) idx = idx * base + (static_cast<std::int64_t>(o) * cfg_.num_queries + q);
    return static_cast<int>(offset + idx);
}

EncoderState reset_encoder(const PolicyParams& params) {
    EncoderState e;
    if (params.variant() == PolicyVariant::recurrent) {
        e.hidden = Eigen::VectorXd::Zero(params.config().hidden);
        e.cell = Eigen::VectorXd::Zero(params.config().hidden);
    }
    return e;
}

Eigen::VectorXd action_distribution(const PolicyParams& params, const EncoderState& enc) {
    const PolicyConfig& cfg = params.config();
    switch (params.variant()) {
        case PolicyVariant::recurrent: {
            if (enc.hidden.size() != cfg.hidden)
                throw VariantMismatch("encoder state does not match the recurrent policy");
            const RecurrentLayout& L = params.layout();
            const double* p = params.flat().data();
            Eigen::VectorXd logits = map_bout(p, L);
            logits.noalias() += map_wout(p, L) * enc.hidden;
            return softmax(logits);
        }
        case PolicyVariant::tabular: {
            const int row = params.table_row(enc.window);
            return softmax(params.flat().segment(
                static_cast<Eigen::Index>(row) * cfg.num_queries, cfg.num_queries));
        }
        case PolicyVariant::uniform:
            return Eigen::VectorXd::Constant(cfg.num_queries, 1.0 / cfg.num_queries);
    }
    throw VariantMismatch("unhandled policy variant");
}

EncoderState advance(const PolicyParams& params, const EncoderState& enc, int obs, int query) {
    check_indices(params, obs, query);
    EncoderState next = enc;
    next.step = enc.step + 1;
    switch (params.variant()) {
        case PolicyVariant::recurrent: {
            CellResult r = lstm_cell(params, enc.hidden, enc.cell, obs, query);
            next.hidden = std::move(r.h);
            next.cell = std::move(r.c);
            break;
        }
        case PolicyVariant::tabular: {
            next.window.emplace_back(obs, query);
            if (static_cast<int>(next.window.size()) > params.config().window)
                next.window.erase(next.window.begin());
            break;
        }
        case PolicyVariant::uniform:
            break;
    }
    return next;
}

std::pair<int, double> sample_action(const PolicyParams& params, const EncoderState& enc,
                                     Rng& rng) {
    const Eigen::VectorXd probs = action_distribution(params, enc);
    const int a = rng.categorical(probs);
    return {a, std::log(probs[a])};
}

GradientBuffer::GradientBuffer(const PolicyParams& params) : params_(&params) {}

void GradientBuffer::record_choice(const EncoderState& enc, int chosen) {
    ChoiceTape c;
    c.chosen = chosen;
    c.table_row = -1;
    c.cells_before = static_cast<int>(cells_.size());
    c.probs = action_distribution(*params_, enc);
    if (params_->variant() == PolicyVariant::recurrent) c.hidden = enc.hidden;
    if (params_->variant() == PolicyVariant::tabular) c.table_row = params_->table_row(enc.window);
    choices_.push_back(std::move(c));
}

EncoderState GradientBuffer::advance(const EncoderState& enc, int obs, int query) {
    if (params_->variant() != PolicyVariant::recurrent)
        return vigil::advance(*params_, enc, obs, query);
    check_indices(*params_, obs, query);
    CellResult r = lstm_cell(*params_, enc.hidden, enc.cell, obs, query);
    CellTape tape;
    tape.obs = obs;
    tape.query = query;
    tape.gate_in = std::move(r.gi);
    tape.gate_forget = std::move(r.gf);
    tape.gate_out = std::move(r.go);
    tape.gate_cand = std::move(r.gg);
    tape.c_prev = enc.cell;
    tape.h_prev = enc.hidden;
    tape.tanh_c = std::move(r.tanh_c);
    cells_.push_back(std::move(tape));

    EncoderState next = enc;
    next.step = enc.step + 1;
    next.hidden = std::move(r.h);
    next.cell = std::move(r.c);
    return next;
}

Eigen::VectorXd GradientBuffer::step_score(int t) const {
    if (t < 0 || t >= num_choices()) throw DomainError("step index outside the recorded episode");
    std::vector<double> w(static_cast<std::size_t>(num_choices()), 0.0);
    w[static_cast<std::size_t>(t)] = 1.0;
    return weighted_score(w);
}

Eigen::VectorXd GradientBuffer::weighted_score(std::span<const double> weights) const {
    if (weights.size() != static_cast<std::size_t>(num_choices()))
        throw LengthMismatch("weight vector does not match the number of recorded choices");
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(params_->dim());
    const int T = num_choices();
    if (T == 0) return grad;

    int last = T - 1;
    while (last >= 0 && weights[static_cast<std::size_t>(last)] == 0.0) --last;
    if (last < 0) return grad;

    const PolicyConfig& cfg = params_->config();
    if (params_->variant() == PolicyVariant::uniform) return grad;

    if (params_->variant() == PolicyVariant::tabular) {
        for (int t = 0; t <= last; ++t) {
            const double w = weights[static_cast<std::size_t>(t)];
            if (w == 0.0) continue;
            const ChoiceTape& c = choices_[static_cast<std::size_t>(t)];
            auto row = grad.segment(static_cast<Eigen::Index>(c.table_row) * cfg.num_queries,
                                    cfg.num_queries);
            row -= w * c.probs;
            row[c.chosen] += w;
        }
        return grad;
    }

    // Recurrent: one reverse sweep over the recorded cell updates, injecting
    // each choice's output-head gradient at the depth it conditioned on.
    const RecurrentLayout& L = params_->layout();
    const double* p = params_->flat().data();
    const auto U = map_u(p, L);
    const auto Wout = map_wout(p, L);

    MutMap gW(grad.data() + L.w_off, 4 * L.hidden, L.input);
    MutMap gU(grad.data() + L.u_off, 4 * L.hidden, L.hidden);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + L.b_off, 4 * L.hidden);
    MutMap gWout(grad.data() + L.wout_off, L.actions, L.hidden);
    Eigen::Map<Eigen::VectorXd> gbout(grad.data() + L.bout_off, L.actions);

    const int h = L.hidden;
    Eigen::VectorXd dh = Eigen::VectorXd::Zero(h);
    Eigen::VectorXd dc = Eigen::VectorXd::Zero(h);

    auto inject_choice = [&](int t) {
        const double w = weights[static_cast<std::size_t>(t)];
        if (w == 0.0) return;
        const ChoiceTape& c = choices_[static_cast<std::size_t>(t)];
        Eigen::VectorXd dlogits = -w * c.probs;
        dlogits[c.chosen] += w;
        gWout.noalias() += dlogits * c.hidden.transpose();
        gbout += dlogits;
        dh.noalias() += Wout.transpose() * dlogits;
    };

    const int start_depth = choices_[static_cast<std::size_t>(last)].cells_before;
    int ci = last;
    while (ci >= 0 && choices_[static_cast<std::size_t>(ci)].cells_before == start_depth) {
        inject_choice(ci);
        --ci;
    }
    for (int j = start_depth - 1; j >= 0; --j) {
        const CellTape& s = cells_[static_cast<std::size_t>(j)];
        const Eigen::VectorXd dgo = dh.cwiseProduct(s.tanh_c);
        const Eigen::VectorXd dc_tot =
            dc + dh.cwiseProduct(s.gate_out)
                     .cwiseProduct((1.0 - s.tanh_c.array().square()).matrix());
        const Eigen::VectorXd dgi = dc_tot.cwiseProduct(s.gate_cand);
        const Eigen::VectorXd dgf = dc_tot.cwiseProduct(s.c_prev);
        const Eigen::VectorXd dgg = dc_tot.cwiseProduct(s.gate_in);

        Eigen::VectorXd dpre(4 * h);
        dpre.segment(0, h) =
            dgi.cwiseProduct(s.gate_in).cwiseProduct((1.0 - s.gate_in.array()).matrix());
        dpre.segment(h, h) =
            dgf.cwiseProduct(s.gate_forget).cwiseProduct((1.0 - s.gate_forget.array()).matrix());
        dpre.segment(2 * h, h) =
            dgo.cwiseProduct(s.gate_out).cwiseProduct((1.0 - s.gate_out.array()).matrix());
        dpre.segment(3 * h, h) =
            dgg.cwiseProduct((1.0 - s.gate_cand.array().square()).matrix());

        gW.col(s.obs) += dpre;
        gW.col(cfg.num_obs + s.query) += dpre;
        gU.noalias() += dpre * s.h_prev.transpose();
        gb += dpre;

        dh.noalias() = U.transpose() * dpre;
        dc = dc_tot.cwiseProduct(s.gate_forget);
        while (ci >= 0 && choices_[static_cast<std::size_t>(ci)].cells_before == j) {
            inject_choice(ci);
            --ci;
        }
    }
    return grad;
}

void save_checkpoint(const PolicyParams& params, std::uint64_t iteration,
                     const std::string& scenario_hash, const std::string& path) {
    nlohmann::ordered_json j;
    j["format"] = "vigil-checkpoint";
    j["version"] = 1;
    const PolicyConfig& cfg = params.config();
    j["variant"] = to_string(cfg.variant);
    j["num_obs"] = cfg.num_obs;
    j["num_queries"] = cfg.num_queries;
    j["hidden"] = cfg.hidden;
    j["window"] = cfg.window;
    j["init_scale"] = cfg.init_scale;
    j["seed"] = cfg.seed;
    j["iteration"] = iteration;
    j["scenario_hash"] = scenario_hash;

    std::string hex;
    hex.reserve(static_cast<std::size_t>(params.dim()) * 16);
    char buf[17];
    for (int i = 0; i < params.dim(); ++i) {
        std::uint64_t bits;
        const double v = params.flat()[i];
        static_assert(sizeof(bits) == sizeof(v));
        std::memcpy(&bits, &v, sizeof(bits));
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(bits));
        hex += buf;
    }
    j["params_hex"] = std::move(hex);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint '" + path + "'");
    out << j.dump(2) << "\n";
    if (!out) throw IoError("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("failed to parse checkpoint '" + path + "': " + e.what());
    }
    if (j.value("format", "") != "vigil-checkpoint")
        throw SchemaError("'" + path + "' is not a checkpoint file");

    PolicyConfig cfg;
    try {
        cfg.variant = policy_variant_from_string(j.at("variant").get<std::string>());
        cfg.num_obs = j.at("num_obs").get<int>();
        cfg.num_queries = j.at("num_queries").get<int>();
        cfg.hidden = j.at("hidden").get<int>();
        cfg.window = j.at("window").get<int>();
        cfg.init_scale = j.at("init_scale").get<double>();
        cfg.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("checkpoint '" + path + "' missing fields: " + e.what());
    }

    Checkpoint ck{PolicyParams::init(cfg), j.at("iteration").get<std::uint64_t>(),
                  j.value("scenario_hash", "")};

    const std::string hex = j.at("params_hex").get<std::string>();
    if (hex.size() != static_cast<std::size_t>(ck.params.dim()) * 16)
        throw SchemaError("checkpoint parameter blob has the wrong length");
    Eigen::VectorXd theta(ck.params.dim());
    for (int i = 0; i < ck.params.dim(); ++i) {
        std::uint64_t bits = 0;
        for (int c = 0; c < 16; ++c) {
            const char ch = hex[static_cast<std::size_t>(i) * 16 + static_cast<std::size_t>(c)];
            bits <<= 4;
            if (ch >= '0' && ch <= '9') bits |= static_cast<std::uint64_t>(ch - '0');
            else if (ch >= 'a' && ch <= 'f') bits |= static_cast<std::uint64_t>(ch - 'a' + 10);
            else throw SchemaError("checkpoint parameter blob is not hex");
        }
        double v;
        std::memcpy(&v, &bits, sizeof(v));
        theta[i] = v;
    }
    ck.params.set_flat(theta);
    return ck;
}

}  // namespace vigil
