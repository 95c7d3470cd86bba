#include "gfn/flow_core.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <memory>
#include <queue>
#include <set>

#include "gfn/logmath.hpp"

namespace gfn {

namespace {

std::string show(const StateId& s) { return s.terminal ? std::string("<sink>") : s.key; }

std::vector<StateId> sorted_children(const EnvGraph& env, const StateId& s) {
    auto ch = env.children(s);
    std::sort(ch.begin(), ch.end());
    return ch;
}

}  // namespace

std::vector<StateId> out_edges(const EnvGraph& env, const StateId& s) {
    auto v = env.children(s);
    if (env.terminating(s)) v.push_back(StateId::bottom());
    return v;
}

std::size_t Enumerated::transitions() const {
    std::size_t n = 0;
    for (auto& c : children) n += c.size();
    return n;
}

int Enumerated::find(const StateId& s) const {
    auto it = index.find(s);
    return it == index.end() ? -1 : it->second;
}

Enumerated enumerate_env(const EnvGraph& env, std::size_t max_states) {
    Enumerated en;
    auto add = [&](const StateId& s) {
        auto [it, fresh] = en.index.emplace(s, int(en.states.size()));
        if (fresh) {
            if (en.states.size() >= max_states) throw BudgetExceeded("state enumeration budget exceeded");
            en.states.push_back(s);
        }
        return it->second;
    };
    add(env.initial());
    for (std::size_t i = 0; i < en.states.size(); ++i) {
        StateId s = en.states[i];
        std::vector<int> ch;
        for (auto& c : sorted_children(env, s)) ch.push_back(add(c));
        en.children.push_back(std::move(ch));
    }
    std::size_t n = en.states.size();
    en.parents.assign(n, {});
    en.terminating.assign(n, 0);
    en.log_reward.assign(n, kNegInf);
    std::vector<int> indeg(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        for (int c : en.children[i]) {
            en.parents[c].push_back(int(i));
            ++indeg[c];
        }
        if (env.terminating(en.states[i])) {
            en.terminating[i] = 1;
            en.log_reward[i] = env.log_reward(en.states[i]);
        }
    }
    // Kahn, ties broken by discovery index
    std::priority_queue<int, std::vector<int>, std::greater<>> ready;
    for (std::size_t i = 0; i < n; ++i)
        if (indeg[i] == 0) ready.push(int(i));
    while (!ready.empty()) {
        int s = ready.top();
        ready.pop();
        en.topo.push_back(s);
        for (int c : en.children[s])
            if (--indeg[c] == 0) ready.push(c);
    }
    if (en.topo.size() != n) throw std::runtime_error("environment graph has a cycle");
    return en;
}

ValidationReport validate_env(const EnvGraph& env, std::size_t max_states) {
    ValidationReport rep;
    std::unordered_map<StateId, int, StateIdHash> idx;
    std::vector<StateId> states;
    std::vector<std::vector<int>> ch;
    auto add = [&](const StateId& s) {
        auto [it, fresh] = idx.emplace(s, int(states.size()));
        if (fresh) {
            if (states.size() >= max_states) throw BudgetExceeded("state enumeration budget exceeded");
            states.push_back(s);
        }
        return it->second;
    };
    add(env.initial());
    for (std::size_t i = 0; i < states.size(); ++i) {
        StateId s = states[i];
        std::vector<int> c;
        for (auto& x : sorted_children(env, s)) {
            if (x.terminal) {
                rep.asymmetric.push_back(show(s) + " lists the sink as a child");
                continue;
            }
            c.push_back(add(x));
            auto ps = env.parents(x);
            if (std::find(ps.begin(), ps.end(), s) == ps.end())
                rep.asymmetric.push_back(show(s) + " -> " + show(x) + " missing from parents");
        }
        ch.push_back(std::move(c));
    }
    std::size_t n = states.size();
    rep.visited = n;

    // iterative DFS colouring for back edges
    std::vector<char> colour(n, 0);
    for (std::size_t root = 0; root < n; ++root) {
        if (colour[root]) continue;
        std::vector<std::pair<int, std::size_t>> stack{{int(root), 0}};
        colour[root] = 1;
        while (!stack.empty()) {
            auto& [u, k] = stack.back();
            if (k < ch[u].size()) {
                int v = ch[u][k++];
                if (colour[v] == 1)
                    rep.cycles.push_back(show(states[u]) + " -> " + show(states[v]));
                else if (colour[v] == 0) {
                    colour[v] = 1;
                    stack.push_back({v, 0});
                }
            } else {
                colour[u] = 2;
                stack.pop_back();
            }
        }
    }

    // co-reachability of the sink
    std::vector<std::vector<int>> par(n);
    for (std::size_t i = 0; i < n; ++i)
        for (int c : ch[i]) par[c].push_back(int(i));
    std::vector<char> alive(n, 0);
    std::deque<int> q;
    for (std::size_t i = 0; i < n; ++i)
        if (env.terminating(states[i])) alive[i] = 1, q.push_back(int(i));
    while (!q.empty()) {
        int u = q.front();
        q.pop_front();
        for (int p : par[u])
            if (!alive[p]) alive[p] = 1, q.push_back(p);
    }
    for (std::size_t i = 0; i < n; ++i)
        if (!alive[i]) rep.dead_ends.push_back(show(states[i]));

    for (auto& s : env.listed_states())
        if (!idx.count(s)) rep.unreachable.push_back(show(s));
    return rep;
}

Trajectory sample_trajectory(const EnvGraph& env, const ForwardPolicy& policy, Rng& rng) {
    Trajectory t;
    StateId s = env.initial();
    t.states.push_back(s);
    while (!s.terminal) {
        auto dist = policy(s);
        if (dist.empty()) throw SupportViolation("empty policy at " + show(s));
        double u = rng.uniform(), acc = 0;
        const StateId* pick = &dist.back().next;
        for (auto& o : dist) {
            acc += std::exp(o.logp);
            if (u < acc) {
                pick = &o.next;
                break;
            }
        }
        auto legal = out_edges(env, s);
        if (std::find(legal.begin(), legal.end(), *pick) == legal.end())
            throw SupportViolation("policy proposed " + show(*pick) + " from " + show(s));
        s = *pick;
        t.states.push_back(s);
    }
    return t;
}

LogProb trajectory_logprob(const Trajectory& traj, const ForwardPolicy& policy, Direction dir) {
    LogProb out{0.0, false};
    auto lookup = [&](const StateId& at, const StateId& target) {
        for (auto& o : policy(at))
            if (o.next == target) return o.logp;
        return kNegInf;
    };
    const auto& st = traj.states;
    for (std::size_t t = 0; t + 1 < st.size(); ++t) {
        double lp;
        if (dir == Direction::forward)
            lp = lookup(st[t], st[t + 1]);
        else if (st[t + 1].terminal)
            continue;
        else
            lp = lookup(st[t + 1], st[t]);
        if (lp == kNegInf) out.zero_step = true;
        out.value += lp;
    }
    if (out.zero_step) out.value = kNegInf;
    return out;
}

std::vector<Trajectory> enumerate_trajectories(const EnvGraph& env, std::size_t max_trajectories) {
    std::vector<Trajectory> out;
    std::vector<StateId> path{env.initial()};
    std::function<void()> rec = [&]() {
        const StateId s = path.back();
        for (auto& c : out_edges(env, s)) {
            path.push_back(c);
            if (c.terminal) {
                if (out.size() >= max_trajectories) throw BudgetExceeded("trajectory enumeration budget exceeded");
                out.push_back({path});
            } else {
                rec();
            }
            path.pop_back();
        }
    };
    rec();
    return out;
}

double EdgeFlowTable::at(const StateId& from, const StateId& to) const {
    auto it = entries.find({from, to});
    if (it == entries.end()) throw std::out_of_range("missing edge flow " + show(from) + " -> " + show(to));
    return it->second;
}

double EdgeFlowTable::outflow(const StateId& s) const {
    double f = 0;
    for (auto it = entries.lower_bound({s, StateId{std::string(), false}}); it != entries.end() && it->first.first == s; ++it)
        f += it->second;
    return f;
}

double EdgeFlowTable::inflow(const StateId& s) const {
    double f = 0;
    for (auto& [e, v] : entries)
        if (e.second == s) f += v;
    return f;
}

EdgeFlowTable construct_flow_from_reward(const EnvGraph& env, const std::map<StateId, double>& reward,
                                         std::size_t max_states) {
    Enumerated en = enumerate_env(env, max_states);
    std::size_t n = en.size();
    std::vector<double> out(n, 0.0), in_edge(n, 0.0);
    EdgeFlowTable tab;
    for (auto it = en.topo.rbegin(); it != en.topo.rend(); ++it) {
        int s = *it;
        double o = 0;
        if (en.terminating[s]) {
            auto r = reward.find(en.states[s]);
            if (r == reward.end()) throw std::invalid_argument("no reward for terminating state " + show(en.states[s]));
            if (!(r->second > 0)) throw std::invalid_argument("non-positive reward at " + show(en.states[s]));
            tab.set(en.states[s], StateId::bottom(), r->second);
            o += r->second;
        }
        for (int c : en.children[s]) {
            tab.set(en.states[s], en.states[c], in_edge[c]);
            o += in_edge[c];
        }
        out[s] = o;
        if (!en.parents[s].empty()) in_edge[s] = o / double(en.parents[s].size());
    }
    return tab;
}

std::map<StateId, double> flow_residual_report(const EdgeFlowTable& flow, const EnvGraph& env,
                                               const std::optional<std::map<StateId, double>>& reward) {
    Enumerated en = enumerate_env(env);
    std::map<StateId, double> rep;
    for (std::size_t s = 1; s < en.size(); ++s) {
        const StateId& id = en.states[s];
        double in = 0, out = 0;
        for (int p : en.parents[s]) in += flow.at(en.states[p], id);
        for (int c : en.children[s]) out += flow.at(id, en.states[c]);
        if (en.terminating[s]) {
            if (reward) {
                auto r = reward->find(id);
                if (r == reward->end()) throw std::invalid_argument("no reward for " + show(id));
                out += r->second;
            } else {
                out += flow.at(id, StateId::bottom());
            }
        }
        rep[id] = std::log(in) - std::log(out);
    }
    return rep;
}

ForwardPolicy policy_from_flow(const EdgeFlowTable& flow) {
    auto table = std::make_shared<std::map<StateId, TransitionDistribution>>();
    for (auto& [e, v] : flow.entries) (*table)[e.first].push_back({e.second, v});
    for (auto& [s, dist] : *table) {
        double tot = 0;
        for (auto& o : dist) tot += o.logp;
        if (!(tot > 0)) throw std::invalid_argument("zero outflow at " + show(s));
        for (auto& o : dist) o.logp = std::log(o.logp) - std::log(tot);
    }
    return [table](const StateId& s) {
        auto it = table->find(s);
        if (it == table->end()) throw SupportViolation("no flow out of " + show(s));
        return it->second;
    };
}

std::vector<double> dp_log_terminating(const Enumerated& en, const ForwardPolicy& policy) {
    std::size_t n = en.size();
    std::vector<double> logF(n, kNegInf), term(n, kNegInf);
    logF[0] = 0.0;
    for (int s : en.topo) {
        if (logF[s] == kNegInf) continue;
        for (auto& o : policy(en.states[s])) {
            if (o.next.terminal) {
                term[s] = logaddexp(term[s], logF[s] + o.logp);
                continue;
            }
            int c = en.find(o.next);
            if (c < 0) throw SupportViolation("policy leaves the enumerated env at " + show(en.states[s]));
            logF[c] = logaddexp(logF[c], logF[s] + o.logp);
        }
    }
    return term;
}

std::map<StateId, double> terminating_distribution_dp(const EnvGraph& env, const ForwardPolicy& policy,
                                                      std::size_t max_states) {
    Enumerated en = enumerate_env(env, max_states);
    auto lt = dp_log_terminating(en, policy);
    std::map<StateId, double> out;
    for (std::size_t i = 0; i < en.size(); ++i)
        if (en.terminating[i]) out[en.states[i]] = std::exp(lt[i]);
    return out;
}

BackwardPolicy uniform_backward_policy(const EnvGraph& env) {
    const EnvGraph* e = &env;
    StateId s0 = env.initial();
    return [e, s0](const StateId& s) {
        TransitionDistribution d;
        if (s.terminal || s == s0) return d;
        auto ps = e->parents(s);
        if (ps.empty()) throw std::invalid_argument("orphan state " + show(s));
        double lp = -std::log(double(ps.size()));
        for (auto& p : ps) d.push_back({p, lp});
        return d;
    };
}

MarkovReport is_markovian_table(const std::map<Trajectory, double>& flows, const EnvGraph& env) {
    auto all = enumerate_trajectories(env);
    for (auto& t : all)
        if (!flows.count(t)) throw std::invalid_argument("flow table does not cover every complete trajectory");

    // prefix flows, state flows, edge flows
    std::map<std::vector<StateId>, double> prefix;
    std::map<StateId, double> state;
    std::map<std::pair<StateId, StateId>, double> edge;
    for (auto& [t, f] : flows) {
        std::vector<StateId> p;
        std::set<StateId> seen;
        for (std::size_t i = 0; i < t.states.size(); ++i) {
            p.push_back(t.states[i]);
            prefix[p] += f;
            state[t.states[i]] += f;
            if (i > 0) edge[{t.states[i - 1], t.states[i]}] += f;
        }
    }
    // Markovian iff F(h.s') F(s) = F(h) F(s->s') for every prefix h ending in s
    MarkovReport rep;
    for (auto& [h, fh] : prefix) {
        if (h.back().terminal) continue;
        const StateId& s = h.back();
        for (auto& c : out_edges(env, s)) {
            auto hc = h;
            hc.push_back(c);
            auto it = prefix.find(hc);
            double fhc = it == prefix.end() ? 0.0 : it->second;
            double lhs = fhc * state[s], rhs = fh * edge[{s, c}];
            if (std::abs(lhs - rhs) > 1e-12 * std::max({1.0, std::abs(lhs), std::abs(rhs)})) {
                rep.markovian = false;
                rep.prefix.states = h;
                rep.from = s;
                rep.to = c;
                return rep;
            }
        }
    }
    return rep;
}

}  // namespace gfn
