#pragma once
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gfn/dual.hpp"
#include "gfn/flow_core.hpp"

namespace gfn {

// Residuals are log-domain mismatches, templated on double or Dual so the same
// expression yields values and exact gradients. Inputs named log* are log-probabilities
// or log-flows; energies and per-step rewards are plain numbers.

enum class ResidualKind { fm, db, db_terminal, tb, subtb, modified_db, fl_db, sql, pcl, pisql };
std::string residual_name(ResidualKind k);

struct Residual {
    double value;
    ResidualKind tag;
    bool flagged() const { return !std::isfinite(value); }
};

template <class T>
std::vector<T> with_optional(std::vector<T> xs, const std::optional<T>& extra) {
    if (extra) xs.push_back(*extra);
    return xs;
}

// log inflow - log(outflow + R)
template <class T>
T fm_residual(const std::vector<T>& log_in, const std::vector<T>& log_out, const std::optional<T>& log_reward) {
    return lse(log_in) - lse(with_optional(log_out, log_reward));
}

// log F(s) P_F(s'|s) - log F(s') P_B(s|s')
template <class T>
T db_residual(const T& logF_s, const T& logPF, const T& logF_next, const T& logPB) {
    return logF_s + logPF - logF_next - logPB;
}

// reward matching at a terminating state: log F(x) P_F(stop|x) - log R(x)
template <class T>
T db_terminal_residual(const T& logF_x, const T& logPF_stop, const T& logR) {
    return logF_x + logPF_stop - logR;
}

// log Z prod P_F - log R prod P_B; logPF has T+1 entries (last is the stop step), logPB has T
template <class T>
T tb_residual(const T& logZ, const std::vector<T>& logPF, const std::vector<T>& logPB, const T& logR) {
    T out = logZ - logR;
    for (auto& x : logPF) out = out + x;
    for (auto& x : logPB) out = out - x;
    return out;
}

// Segment s_m..s_n, backward product on top: log F(s_n) prod P_B - log F(s_m) prod P_F.
// A one-step segment is the negated detailed-balance residual.
template <class T>
T subtb_residual(const T& logF_m, const std::vector<T>& logPF, const std::vector<T>& logPB, const T& logF_n) {
    T out = logF_n - logF_m;
    for (auto& x : logPB) out = out + x;
    for (auto& x : logPF) out = out - x;
    return out;
}

// Segment ending in the sink: logPF includes the stop step, logR = -E(s_{n-1})/alpha.
template <class T>
T subtb_terminal_residual(const T& logF_m, const std::vector<T>& logPF, const std::vector<T>& logPB, const T& logR) {
    return subtb_residual(logF_m, logPF, logPB, logR);
}

// Every-state-terminating form with a frozen stop head on the child:
// log R(G')P_B(G|G')P(stop|G) - log R(G)P(G'|G)Pbar(stop|G')
template <class T>
T modified_db_residual(const T& delta_log_reward, const T& logPB, const T& logPstop, const T& logPF,
                       const T& logPstop_target_next) {
    return delta_log_reward + logPB + logPstop - logPF - logPstop_target_next;
}

// Same condition written with energies and the forward product on top:
// log P_F(s'|s)P_F(stop|s') - log P_B(s|s')P_F(stop|s) + (E(s') - E(s))/alpha
template <class T>
T modified_db_energy_residual(const T& logPF, const T& logPstop, const T& logPstop_next, const T& logPB, double E_s,
                              double E_next, double alpha) {
    return logPF + logPstop_next - logPB - logPstop + T((E_next - E_s) / alpha);
}

// Forward-looking: log Ft(s) P_F - log Ft(s') P_B + E(s->s')/alpha
template <class T>
T fl_db_residual(const T& logFt_s, const T& logPF, const T& logFt_next, const T& logPB, double step_energy,
                 double alpha) {
    return logFt_s + logPF - logFt_next - logPB + T(step_energy / alpha);
}

// soft value alpha log sum exp(Q/alpha); an empty child list is the sink with V = 0
template <class T>
T soft_value(const std::vector<T>& Q, double alpha) {
    if (Q.empty()) return T(0.0);
    std::vector<T> scaled;
    for (auto& q : Q) scaled.push_back(q / alpha);
    return alpha * lse(scaled);
}

// Q(s,s') - (r + V(s'))
template <class T>
T sql_residual(const T& Q, double r, const std::vector<T>& Q_next, double alpha) {
    return Q - T(r) - soft_value(Q_next, alpha);
}

// -V(s_m) + V(s_n) + sum (r - alpha log pi); pass V_n = 0 when s_n is the sink
template <class T>
T pcl_residual(const T& V_m, const T& V_n, const std::vector<double>& r, const std::vector<T>& logpi, double alpha) {
    T out = V_n - V_m;
    for (double x : r) out = out + T(x);
    for (auto& x : logpi) out = out - alpha * x;
    return out;
}

// alpha [log pi(s'|s) - log pi(stop|s) + log pi(stop|s')] - r(s,s')
template <class T>
T pisql_residual(const T& logpi, const T& logpi_stop, const T& logpi_stop_next, double r, double alpha) {
    return alpha * (logpi - logpi_stop + logpi_stop_next) - T(r);
}

// Per-edge MDP rewards keyed by (s, s'); the sink appears as StateId::bottom().
struct CorrectedReward {
    std::map<std::pair<StateId, StateId>, double> r;
    double at(const StateId& s, const StateId& next) const;
};

enum class RewardScheme { sparse, dense };

// sparse: r(s,s') = alpha log P_B(s|s'), r(x,stop) = -E(x)
// dense:  r(s,s') = -E(s->s') + alpha log P_B(s|s'), r(x,stop) = 0
CorrectedReward corrected_reward(const EnvGraph& env, const BackwardPolicy& PB,
                                 const std::function<double(const StateId&)>& energy, double alpha, RewardScheme scheme,
                                 const std::function<double(const StateId&, const StateId&)>& step_energy = {});

// uncorrected: r(x,stop) = -E(x), zero elsewhere
CorrectedReward terminal_reward(const EnvGraph& env, const std::function<double(const StateId&)>& energy);

enum class LossKind { squared, huber };
struct LossSpec {
    LossKind kind = LossKind::squared;
    double delta = 1.0;
};
struct LossResult {
    double loss = 0.0;
    std::vector<double> weights;  // dL/dDelta_i, zero for skipped residuals
    int skipped = 0;
};
// Mean over the batch; non-finite residuals are skipped and counted.
LossResult loss_aggregate(const std::vector<double>& residuals, LossSpec spec = {});

// One on-policy trajectory for the score-function estimator.
struct TrajectoryTerm {
    double log_pf;                   // log P_F(tau)
    double log_pb;                   // log P_B(tau | x)
    double log_r;                    // log R(x)
    std::vector<double> grad_log_pf; // d log P_F(tau) / d params
};
enum class BaselineKind { local, global };
struct BaselineState {
    double value = 0.0;
    double eta = 0.1;
    bool update_first = false;  // use the refreshed running mean in this batch's gradient
};
struct ReverseKlResult {
    std::vector<double> grad;
    double b_local = 0.0;
    double b_used = 0.0;
};
// (1/K) sum grad log P_F(tau) (c(tau) - b), c = log P_F(tau) - log R(x) - log P_B(tau|x)
ReverseKlResult reverse_kl_gradient(const std::vector<TrajectoryTerm>& batch, BaselineKind kind, BaselineState& state,
                                    bool on_policy = true);

}  // namespace gfn
