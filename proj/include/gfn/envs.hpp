#pragma once
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "gfn/flow_core.hpp"

namespace gfn {

// Table-driven pointed DAG. Rewards are stored as energies E = -log R; the reward seen by
// learners is exp(-E/alpha).
class ExplicitEnv : public EnvGraph {
public:
    ExplicitEnv(std::vector<std::string> states, std::vector<std::pair<std::string, std::string>> edges,
                std::map<std::string, double> rewards);

    StateId initial() const override { return StateId::of(states_.front()); }
    std::vector<StateId> children(const StateId& s) const override;
    std::vector<StateId> parents(const StateId& s) const override;
    bool terminating(const StateId& s) const override;
    double log_reward(const StateId& s) const override;
    std::vector<StateId> listed_states() const override;

    double energy(const StateId& s) const;
    double alpha() const { return alpha_; }
    ExplicitEnv tempered(double alpha) const;

    // raw edge insertion, no validation (used to build broken fixtures)
    void add_edge(const std::string& from, const std::string& to);

    std::map<StateId, double> rewards() const;  // linear domain, tempered
    const std::vector<std::string>& state_names() const { return states_; }

private:
    std::vector<std::string> states_;
    std::map<std::string, std::vector<std::string>> ch_, pa_;
    std::map<std::string, double> energy_;
    double alpha_ = 1.0;
};

// Text format:
//   [states]   whitespace-separated names, first one is initial
//   [edges]    one "from to" per line
//   [rewards]  one "state reward" per line; listed states are the terminating ones
// '#' starts a comment.
ExplicitEnv explicit_env(const std::string& spec);

struct Galton {
    ExplicitEnv env;
    ForwardPolicy policy;  // left with probability p
};
// Peg (r,k) has children (r+1,k) [left] and (r+1,k+1) [right]; row `rows` holds the bins.
// Bin k is rewarded with its binomial mass under the bundled policy.
Galton galton_env(int rows, double p);
std::string galton_key(int r, int k);

struct Factor {
    std::vector<int> vars;
    std::vector<double> table;  // K^|vars| entries, first listed variable most significant
};
struct FactorSpec {
    int d = 0;
    int K = 2;
    std::vector<Factor> factors;
};

// Assigns one variable per step in `order`; terminating states are the full assignments.
class FactorGraphEnv : public EnvGraph {
public:
    FactorGraphEnv(FactorSpec spec, std::vector<int> order, double alpha = 1.0);

    StateId initial() const override { return StateId::of(""); }
    std::vector<StateId> children(const StateId& s) const override;
    std::vector<StateId> parents(const StateId& s) const override;
    bool terminating(const StateId& s) const override;
    double log_reward(const StateId& s) const override;

    double energy(const StateId& x) const;          // full assignment
    double partial_energy(const StateId& s) const;  // factors whose variables are all assigned
    double energy_increment(const StateId& s, const StateId& next) const;
    std::vector<int> assignment(const StateId& s) const;  // by variable index, -1 unassigned
    double alpha() const { return alpha_; }
    const FactorSpec& spec() const { return spec_; }

private:
    FactorSpec spec_;
    std::vector<int> order_, pos_;
    double alpha_;
};

FactorGraphEnv factor_graph_env(const FactorSpec& spec, const std::vector<int>& order, double alpha = 1.0);

// Named fixtures.
std::string fixture_markov_text();     // two terminating states with rewards 2 and 3
std::string fixture_multipath_text();  // x4 reachable along two paths, zero energies
std::string fixture_subtb_text();      // five states, two terminating leaves
std::string fixture_text(const std::string& name);  // by name: markov, multipath, subtb

}  // namespace gfn
