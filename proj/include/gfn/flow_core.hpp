#pragma once
#include <compare>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "gfn/rng.hpp"

namespace gfn {

struct StateId {
    std::string key;
    bool terminal = false;  // the sink; never equal to an in-space state

    static StateId of(std::string k) { return {std::move(k), false}; }
    static StateId bottom() { return {std::string(), true}; }
    auto operator<=>(const StateId&) const = default;
};

struct StateIdHash {
    std::size_t operator()(const StateId& s) const {
        return std::hash<std::string>()(s.key) ^ (s.terminal ? 0x9e3779b97f4a7c15ULL : 0);
    }
};

struct BudgetExceeded : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SupportViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A pointed DAG. children() never lists the sink; terminating() says whether s -> sink exists.
class EnvGraph {
public:
    virtual ~EnvGraph() = default;
    virtual StateId initial() const = 0;
    virtual std::vector<StateId> children(const StateId& s) const = 0;
    virtual std::vector<StateId> parents(const StateId& s) const = 0;
    virtual bool terminating(const StateId& s) const = 0;
    virtual double log_reward(const StateId& s) const = 0;
    // full state list when the env knows it; empty means "discover by BFS"
    virtual std::vector<StateId> listed_states() const { return {}; }
};

// children plus the sink when terminating
std::vector<StateId> out_edges(const EnvGraph& env, const StateId& s);

struct Trajectory {
    std::vector<StateId> states;
    auto operator<=>(const Trajectory&) const = default;
    std::size_t steps() const { return states.empty() ? 0 : states.size() - 1; }
    const StateId& last_state() const { return states[states.size() - 2]; }
};

struct Outcome {
    StateId next;
    double logp;
};
using TransitionDistribution = std::vector<Outcome>;
using ForwardPolicy = std::function<TransitionDistribution(const StateId&)>;
using BackwardPolicy = std::function<TransitionDistribution(const StateId&)>;

// BFS-discovered env with a fixed topological order.
struct Enumerated {
    std::vector<StateId> states;  // discovery order, 0 = initial
    std::unordered_map<StateId, int, StateIdHash> index;
    std::vector<std::vector<int>> children, parents;
    std::vector<char> terminating;
    std::vector<double> log_reward;  // -inf when not terminating
    std::vector<int> topo;

    std::size_t size() const { return states.size(); }
    std::size_t transitions() const;  // non-sink edges
    int find(const StateId& s) const;
};

Enumerated enumerate_env(const EnvGraph& env, std::size_t max_states = 1u << 20);

struct ValidationReport {
    std::vector<std::string> cycles;       // one edge per back-edge found
    std::vector<std::string> unreachable;  // listed but not reachable from the initial state
    std::vector<std::string> dead_ends;    // sink not reachable
    std::vector<std::string> asymmetric;   // children/parents disagree
    std::size_t visited = 0;
    bool ok() const { return cycles.empty() && unreachable.empty() && dead_ends.empty() && asymmetric.empty(); }
};
ValidationReport validate_env(const EnvGraph& env, std::size_t max_states = 1u << 20);

Trajectory sample_trajectory(const EnvGraph& env, const ForwardPolicy& policy, Rng& rng);

enum class Direction { forward, backward };
struct LogProb {
    double value;
    bool zero_step;
};
LogProb trajectory_logprob(const Trajectory& traj, const ForwardPolicy& policy, Direction dir);

std::vector<Trajectory> enumerate_trajectories(const EnvGraph& env, std::size_t max_trajectories = 1u << 20);

struct EdgeFlowTable {
    std::map<std::pair<StateId, StateId>, double> entries;

    double at(const StateId& from, const StateId& to) const;
    void set(const StateId& from, const StateId& to, double v) { entries[{from, to}] = v; }
    double outflow(const StateId& s) const;
    double inflow(const StateId& s) const;
};

// terminating-edge flows = reward; each state's outflow split equally over its incoming edges
EdgeFlowTable construct_flow_from_reward(const EnvGraph& env, const std::map<StateId, double>& reward,
                                         std::size_t max_states = 1u << 20);

// log(inflow) - log(outflow + R(s)) per non-initial state. Without a reward map the sink edge is
// counted as ordinary outflow.
std::map<StateId, double> flow_residual_report(const EdgeFlowTable& flow, const EnvGraph& env,
                                               const std::optional<std::map<StateId, double>>& reward);

ForwardPolicy policy_from_flow(const EdgeFlowTable& flow);

// log P_F^T per enumerated index (-inf for non-terminating states)
std::vector<double> dp_log_terminating(const Enumerated& en, const ForwardPolicy& policy);
std::map<StateId, double> terminating_distribution_dp(const EnvGraph& env, const ForwardPolicy& policy,
                                                      std::size_t max_states = 1u << 20);

BackwardPolicy uniform_backward_policy(const EnvGraph& env);

struct MarkovReport {
    bool markovian = true;
    Trajectory prefix;  // violating prefix ending in `from`
    StateId from, to;
};
MarkovReport is_markovian_table(const std::map<Trajectory, double>& flows, const EnvGraph& env);

}  // namespace gfn
