#include "gfn/envs.hpp"

#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

namespace gfn {

ExplicitEnv::ExplicitEnv(std::vector<std::string> states, std::vector<std::pair<std::string, std::string>> edges,
                         std::map<std::string, double> rewards)
    : states_(std::move(states)) {
    if (states_.empty()) throw std::invalid_argument("env needs at least one state");
    std::set<std::string> known(states_.begin(), states_.end());
    if (known.size() != states_.size()) throw std::invalid_argument("duplicate state");
    for (auto& [a, b] : edges) {
        if (!known.count(a) || !known.count(b)) throw std::invalid_argument("edge references unknown state");
        add_edge(a, b);
    }
    for (auto& [s, r] : rewards) {
        if (!known.count(s)) throw std::invalid_argument("reward for unknown state " + s);
        if (!(r > 0)) throw std::invalid_argument("non-positive reward at " + s);
        energy_[s] = -std::log(r);
    }
}

void ExplicitEnv::add_edge(const std::string& from, const std::string& to) {
    ch_[from].push_back(to);
    pa_[to].push_back(from);
}

std::vector<StateId> ExplicitEnv::children(const StateId& s) const {
    std::vector<StateId> out;
    auto it = ch_.find(s.key);
    if (!s.terminal && it != ch_.end())
        for (auto& c : it->second) out.push_back(StateId::of(c));
    return out;
}

std::vector<StateId> ExplicitEnv::parents(const StateId& s) const {
    std::vector<StateId> out;
    auto it = pa_.find(s.key);
    if (!s.terminal && it != pa_.end())
        for (auto& c : it->second) out.push_back(StateId::of(c));
    return out;
}

bool ExplicitEnv::terminating(const StateId& s) const { return !s.terminal && energy_.count(s.key); }

double ExplicitEnv::energy(const StateId& s) const {
    auto it = energy_.find(s.key);
    if (it == energy_.end() || s.terminal) throw std::invalid_argument("not a terminating state: " + s.key);
    return it->second;
}

double ExplicitEnv::log_reward(const StateId& s) const { return -energy(s) / alpha_; }

std::vector<StateId> ExplicitEnv::listed_states() const {
    std::vector<StateId> v;
    for (auto& s : states_) v.push_back(StateId::of(s));
    return v;
}

ExplicitEnv ExplicitEnv::tempered(double alpha) const {
    if (!(alpha > 0)) throw std::invalid_argument("temperature must be positive");
    ExplicitEnv e = *this;
    e.alpha_ = alpha;
    return e;
}

std::map<StateId, double> ExplicitEnv::rewards() const {
    std::map<StateId, double> r;
    for (auto& [s, e] : energy_) r[StateId::of(s)] = std::exp(-e / alpha_);
    return r;
}

ExplicitEnv explicit_env(const std::string& spec) {
    std::istringstream in(spec);
    std::string line, section;
    std::vector<std::string> states;
    std::vector<std::pair<std::string, std::string>> edges;
    std::set<std::pair<std::string, std::string>> seen;
    std::map<std::string, double> rewards;
    int lineno = 0;
    auto fail = [&](const std::string& why) {
        throw std::invalid_argument("env spec line " + std::to_string(lineno) + ": " + why);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        std::istringstream ls(line);
        std::vector<std::string> tok;
        for (std::string t; ls >> t;) tok.push_back(t);
        if (tok.empty()) continue;
        if (tok[0].front() == '[') {
            section = tok[0];
            if (section != "[states]" && section != "[edges]" && section != "[rewards]") fail("unknown section " + section);
            continue;
        }
        if (section == "[states]") {
            states.insert(states.end(), tok.begin(), tok.end());
        } else if (section == "[edges]") {
            if (tok.size() != 2) fail("edge needs two states");
            if (!seen.insert({tok[0], tok[1]}).second) fail("duplicate edge " + tok[0] + " " + tok[1]);
            edges.emplace_back(tok[0], tok[1]);
        } else if (section == "[rewards]") {
            if (tok.size() != 2) fail("reward line needs a state and a value");
            try {
                rewards[tok[0]] = std::stod(tok[1]);
            } catch (const std::exception&) {
                fail("bad reward value " + tok[1]);
            }
        } else {
            fail("content outside a section");
        }
    }
    ExplicitEnv env(states, edges, rewards);
    auto rep = validate_env(env);
    if (!rep.ok()) throw std::invalid_argument("env spec is not a valid pointed DAG");
    return env;
}

std::string galton_key(int r, int k) { return "g" + std::to_string(r) + "_" + std::to_string(k); }

Galton galton_env(int rows, double p) {
    if (rows < 1) throw std::invalid_argument("galton board needs at least one row");
    if (!(p > 0 && p < 1)) throw std::invalid_argument("galton p must lie in (0,1)");
    std::vector<std::string> states;
    std::vector<std::pair<std::string, std::string>> edges;
    std::map<std::string, double> rewards;
    for (int r = 0; r <= rows; ++r)
        for (int k = 0; k <= r; ++k) {
            states.push_back(galton_key(r, k));
            if (r < rows) {
                edges.emplace_back(galton_key(r, k), galton_key(r + 1, k));
                edges.emplace_back(galton_key(r, k), galton_key(r + 1, k + 1));
            }
        }
    for (int k = 0; k <= rows; ++k) {
        double lb = std::lgamma(rows + 1.0) - std::lgamma(k + 1.0) - std::lgamma(rows - k + 1.0) +
                    (rows - k) * std::log(p) + k * std::log1p(-p);
        rewards[galton_key(rows, k)] = std::exp(lb);
    }
    ExplicitEnv env(states, edges, rewards);
    double lp = std::log(p), lq = std::log1p(-p);
    ForwardPolicy pol = [rows, lp, lq](const StateId& s) {
        TransitionDistribution d;
        if (s.terminal) return d;
        int r = 0, k = 0;
        if (std::sscanf(s.key.c_str(), "g%d_%d", &r, &k) != 2) throw SupportViolation("not a galton state");
        if (r == rows) return TransitionDistribution{{StateId::bottom(), 0.0}};
        d.push_back({StateId::of(galton_key(r + 1, k)), lp});
        d.push_back({StateId::of(galton_key(r + 1, k + 1)), lq});
        return d;
    };
    return {std::move(env), std::move(pol)};
}

FactorGraphEnv::FactorGraphEnv(FactorSpec spec, std::vector<int> order, double alpha)
    : spec_(std::move(spec)), order_(std::move(order)), alpha_(alpha) {
    if (spec_.d < 1 || spec_.K < 1) throw std::invalid_argument("factor spec needs d, K >= 1");
    if (int(order_.size()) != spec_.d) throw std::invalid_argument("order must be a permutation");
    pos_.assign(spec_.d, -1);
    for (int i = 0; i < spec_.d; ++i) {
        int v = order_[i];
        if (v < 0 || v >= spec_.d || pos_[v] >= 0) throw std::invalid_argument("order must be a permutation");
        pos_[v] = i;
    }
    for (auto& f : spec_.factors) {
        std::size_t need = 1;
        for (int v : f.vars) {
            if (v < 0 || v >= spec_.d) throw std::invalid_argument("factor references unknown variable");
            need *= std::size_t(spec_.K);
        }
        if (f.table.size() != need) throw std::invalid_argument("factor table has the wrong size");
    }
}

std::vector<int> FactorGraphEnv::assignment(const StateId& s) const {
    std::vector<int> a(spec_.d, -1);
    for (std::size_t t = 0; t < s.key.size(); ++t) a[order_[t]] = s.key[t] - '0';
    return a;
}

std::vector<StateId> FactorGraphEnv::children(const StateId& s) const {
    std::vector<StateId> out;
    if (s.terminal || int(s.key.size()) >= spec_.d) return out;
    for (int v = 0; v < spec_.K; ++v) out.push_back(StateId::of(s.key + char('0' + v)));
    return out;
}

std::vector<StateId> FactorGraphEnv::parents(const StateId& s) const {
    if (s.terminal || s.key.empty()) return {};
    return {StateId::of(s.key.substr(0, s.key.size() - 1))};
}

bool FactorGraphEnv::terminating(const StateId& s) const { return !s.terminal && int(s.key.size()) == spec_.d; }

double FactorGraphEnv::partial_energy(const StateId& s) const {
    auto a = assignment(s);
    double e = 0;
    for (auto& f : spec_.factors) {
        std::size_t idx = 0;
        bool full = true;
        for (int v : f.vars) {
            if (a[v] < 0) {
                full = false;
                break;
            }
            idx = idx * spec_.K + a[v];
        }
        if (full) e += f.table[idx];
    }
    return e;
}

double FactorGraphEnv::energy(const StateId& x) const {
    if (!terminating(x)) throw std::invalid_argument("energy needs a full assignment");
    return partial_energy(x);
}

double FactorGraphEnv::energy_increment(const StateId& s, const StateId& next) const {
    if (next.terminal) return 0.0;
    return partial_energy(next) - partial_energy(s);
}

double FactorGraphEnv::log_reward(const StateId& s) const { return -energy(s) / alpha_; }

FactorGraphEnv factor_graph_env(const FactorSpec& spec, const std::vector<int>& order, double alpha) {
    return FactorGraphEnv(spec, order, alpha);
}

std::string fixture_markov_text() {
    return R"([states]
s0 s1 s2 s3
[edges]
s0 s1
s0 s2
s1 s2
s2 s3
[rewards]
s2 2
s3 3
)";
}

std::string fixture_multipath_text() {
    return R"([states]
s0 s1 s2 x3 x4 x5
[edges]
s0 s1
s0 s2
s1 x3
s1 x4
s2 x4
s2 x5
[rewards]
x3 1
x4 1
x5 1
)";
}

std::string fixture_subtb_text() {
    return R"([states]
s0 s1 s2 s3 s4
[edges]
s0 s1
s1 s2
s1 s3
s3 s4
[rewards]
s2 1
s4 1
)";
}

std::string fixture_text(const std::string& name) {
    if (name == "markov") return fixture_markov_text();
    if (name == "multipath") return fixture_multipath_text();
    if (name == "subtb") return fixture_subtb_text();
    throw std::invalid_argument("unknown fixture " + name);
}

}  // namespace gfn
