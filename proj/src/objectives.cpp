#include "gfn/objectives.hpp"

#include <cmath>
#include <stdexcept>

namespace gfn {

std::string residual_name(ResidualKind k) {
    switch (k) {
        case ResidualKind::fm: return "fm";
        case ResidualKind::db: return "db";
        case ResidualKind::db_terminal: return "db-terminal";
        case ResidualKind::tb: return "tb";
        case ResidualKind::subtb: return "subtb";
        case ResidualKind::modified_db: return "modified-db";
        case ResidualKind::fl_db: return "fl-db";
        case ResidualKind::sql: return "sql";
        case ResidualKind::pcl: return "pcl";
        case ResidualKind::pisql: return "pi-sql";
    }
    return "?";
}

double CorrectedReward::at(const StateId& s, const StateId& next) const {
    auto it = r.find({s, next});
    if (it == r.end()) throw std::out_of_range("no reward on edge " + s.key + " -> " + (next.terminal ? "<sink>" : next.key));
    return it->second;
}

CorrectedReward corrected_reward(const EnvGraph& env, const BackwardPolicy& PB,
                                 const std::function<double(const StateId&)>& energy, double alpha, RewardScheme scheme,
                                 const std::function<double(const StateId&, const StateId&)>& step_energy) {
    if (scheme == RewardScheme::dense && !step_energy)
        throw std::invalid_argument("dense correction needs a per-step energy decomposition");
    Enumerated en = enumerate_env(env);
    CorrectedReward out;
    for (std::size_t i = 0; i < en.size(); ++i) {
        const StateId& s = en.states[i];
        for (int c : en.children[i]) {
            const StateId& n = en.states[c];
            double lpb = kNegInf;
            for (auto& o : PB(n))
                if (o.next == s) lpb = o.logp;
            double r = alpha * lpb;
            if (scheme == RewardScheme::dense) r -= step_energy(s, n);
            out.r[{s, n}] = r;
        }
        if (en.terminating[i])
            out.r[{s, StateId::bottom()}] = scheme == RewardScheme::sparse ? -energy(s) : 0.0;
    }
    return out;
}

CorrectedReward terminal_reward(const EnvGraph& env, const std::function<double(const StateId&)>& energy) {
    Enumerated en = enumerate_env(env);
    CorrectedReward out;
    for (std::size_t i = 0; i < en.size(); ++i) {
        for (int c : en.children[i]) out.r[{en.states[i], en.states[c]}] = 0.0;
        if (en.terminating[i]) out.r[{en.states[i], StateId::bottom()}] = -energy(en.states[i]);
    }
    return out;
}

LossResult loss_aggregate(const std::vector<double>& residuals, LossSpec spec) {
    if (residuals.empty()) throw std::invalid_argument("empty residual batch");
    LossResult out;
    out.weights.assign(residuals.size(), 0.0);
    double n = double(residuals.size());
    for (std::size_t i = 0; i < residuals.size(); ++i) {
        double r = residuals[i];
        if (!std::isfinite(r)) {
            ++out.skipped;
            continue;
        }
        if (spec.kind == LossKind::squared || std::abs(r) <= spec.delta) {
            out.loss += 0.5 * r * r / n;
            out.weights[i] = r / n;
        } else {
            out.loss += spec.delta * (std::abs(r) - 0.5 * spec.delta) / n;
            out.weights[i] = spec.delta * (r > 0 ? 1.0 : -1.0) / n;
        }
    }
    return out;
}

ReverseKlResult reverse_kl_gradient(const std::vector<TrajectoryTerm>& batch, BaselineKind kind, BaselineState& state,
                                    bool on_policy) {
    if (!on_policy) throw std::invalid_argument("reverse-KL estimator needs on-policy trajectories");
    if (batch.empty()) throw std::invalid_argument("empty trajectory batch");
    std::size_t P = batch.front().grad_log_pf.size();
    double K = double(batch.size());
    std::vector<double> c;
    ReverseKlResult out;
    for (auto& t : batch) {
        if (t.grad_log_pf.size() != P) throw std::invalid_argument("gradient sizes differ within the batch");
        c.push_back(t.log_pf - t.log_r - t.log_pb);
        out.b_local += c.back() / K;
    }
    double b = out.b_local;
    if (kind == BaselineKind::global) {
        double next = (1 - state.eta) * state.value + state.eta * out.b_local;
        b = state.update_first ? next : state.value;
        state.value = next;
    }
    out.b_used = b;
    out.grad.assign(P, 0.0);
    for (std::size_t k = 0; k < batch.size(); ++k)
        for (std::size_t p = 0; p < P; ++p) out.grad[p] += batch[k].grad_log_pf[p] * (c[k] - b) / K;
    return out;
}

}  // namespace gfn
