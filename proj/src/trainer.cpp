#include "gfn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "gfn/logmath.hpp"

namespace gfn {

namespace {

int sample_index(const std::vector<double>& logp, Rng& rng) {
    double u = rng.uniform(), acc = 0;
    int last = -1;
    for (std::size_t i = 0; i < logp.size(); ++i) {
        if (logp[i] == kNegInf) continue;
        acc += std::exp(logp[i]);
        last = int(i);
        if (u < acc) return int(i);
    }
    if (last < 0) throw SupportViolation("sampling from an empty distribution");
    return last;
}

void zero_spans(std::vector<double>& grad, const std::vector<Span>& spans) {
    for (auto [o, n] : spans) std::fill(grad.begin() + long(o), grad.begin() + long(o + n), 0.0);
}

double find_logp(const TransitionDistribution& dist, const StateId& target) {
    for (auto& o : dist)
        if (o.next == target) return o.logp;
    return kNegInf;
}

template <class T>
std::string str(const T& x) {
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
}

}  // namespace

// ---- models --------------------------------------------------------------------

ForwardPolicy PolicyModel::forward() const {
    return [this](const StateId& s) {
        auto acts = actions(s);
        auto lp = log_probs(s);
        TransitionDistribution d;
        for (std::size_t a = 0; a < acts.size(); ++a) d.push_back({acts[a], lp[a]});
        return d;
    };
}

Span FlatModel::accumulate(const StateId& s, int a, double coef, std::vector<double>& grad) {
    Dual lp = p_->log_prob(s, a);
    if (grad.size() < p_->params().size()) grad.resize(p_->params().size(), 0.0);
    for (auto [i, x] : lp.g) grad[i] += coef * x;
    return {std::size_t(p_->offset(s)), p_->actions(s).size()};
}

std::vector<StateId> DagModel::actions(const StateId& s) const { return out_edges(*env_, s); }

std::vector<double> DagModel::log_probs(const StateId& s) const {
    DagState g = env_->state(s);
    BitMatrix m = action_mask(g, env_->options());
    HierDist h = hierarchical_forward(*p_, g, m);
    std::vector<double> out;
    for (int i = 0; i < g.d; ++i)
        for (int j = 0; j < g.d; ++j)
            if (mask_at(m, i, j)) out.push_back(h.log_edge[i * g.d + j]);
    out.push_back(h.log_stop);
    return out;
}

Span DagModel::accumulate(const StateId& s, int a, double coef, std::vector<double>& grad) {
    DagState g = env_->state(s);
    BitMatrix m = action_mask(g, env_->options());
    HierDist h = hierarchical_forward(*p_, g, m);
    EdgeAction act = EdgeAction::stop_action();
    int k = 0;
    for (int i = 0; i < g.d && act.stop; ++i)
        for (int j = 0; j < g.d; ++j)
            if (mask_at(m, i, j) && k++ == a) {
                act = {i, j, false};
                break;
            }
    double ds = 0;
    std::vector<double> de;
    action_logit_grad(h, g.d, act, coef, ds, de);
    Span sp = p_->param_span(g);
    if (grad.size() < p_->params().size()) grad.resize(p_->params().size(), 0.0);
    p_->backward(g, ds, de, grad);
    return sp;
}

// ---- config --------------------------------------------------------------------

void TrainConfig::validate() const {
    auto need = [](bool ok, const char* what) {
        if (!ok) throw std::invalid_argument(what);
    };
    need(steps > 0, "steps must be positive");
    need(batch > 0, "batch must be positive");
    need(eps_start >= 0 && eps_start <= 1 && eps_min >= 0 && eps_min <= 1, "epsilon must lie in [0,1]");
    need(eps_decay_frac > 0 && eps_decay_frac <= 1, "eps_decay_frac must lie in (0,1]");
    need(temperature > 0, "temperature must be positive");
    need(lr > 0 && lr_logz > 0, "learning rates must be positive");
    need(baseline_eta > 0 && baseline_eta <= 1, "baseline_eta must lie in (0,1]");
    need(target_period > 0, "target_period must be positive");
    need(buffer_capacity > 0, "buffer_capacity must be positive");
    need(rollouts_per_step > 0, "rollouts_per_step must be positive");
    need(sql_rate > 0 && sql_rate <= 1, "sql_rate must lie in (0,1]");
    need(alpha > 0, "alpha must be positive");
    need(log_every > 0, "log_every must be positive");
    need(loss.delta > 0, "huber delta must be positive");
}

std::vector<std::pair<std::string, std::string>> TrainConfig::describe() const {
    return {{"steps", str(steps)},
            {"batch", str(batch)},
            {"eps_start", str(eps_start)},
            {"eps_min", str(eps_min)},
            {"eps_decay_frac", str(eps_decay_frac)},
            {"on_policy", on_policy ? "true" : "false"},
            {"temperature", str(temperature)},
            {"loss", loss.kind == LossKind::squared ? "squared" : "huber"},
            {"huber_delta", str(loss.delta)},
            {"lr", str(lr)},
            {"lr_logz", str(lr_logz)},
            {"logz_warm_start", logz_warm_start ? "true" : "false"},
            {"objective", objective == Objective::tb ? "tb" : "reverse-kl"},
            {"baseline", baseline == BaselineKind::local ? "local" : "global"},
            {"baseline_eta", str(baseline_eta)},
            {"use_target", use_target ? "true" : "false"},
            {"target_period", str(target_period)},
            {"buffer_capacity", str(buffer_capacity)},
            {"rollouts_per_step", str(rollouts_per_step)},
            {"sql_rate", str(sql_rate)},
            {"alpha", str(alpha)},
            {"log_every", str(log_every)},
            {"seed", str(seed)}};
}

double epsilon_at(const TrainConfig& cfg, long step) {
    if (cfg.on_policy) return 0.0;
    double horizon = cfg.eps_decay_frac * double(cfg.steps);
    if (double(step) >= horizon) return cfg.eps_min;
    double f = double(step) / horizon;
    return cfg.eps_start + f * (cfg.eps_min - cfg.eps_start);
}

// ---- bounds --------------------------------------------------------------------

BoundChecker::BoundChecker(const EnvGraph& env, BackwardPolicy pb)
    : env_(&env), pb_(std::move(pb)), en_(enumerate_env(env)), trajs_(enumerate_trajectories(env)) {
    std::vector<double> lr;
    for (std::size_t i = 0; i < en_.size(); ++i)
        if (en_.terminating[i]) lr.push_back(en_.log_reward[i]);
    log_z_ = logsumexp(lr);
    for (auto& t : trajs_) {
        log_pb_.push_back(trajectory_logprob(t, pb_, Direction::backward).value);
        log_r_.push_back(env.log_reward(t.last_state()));
    }
}

BoundCheck BoundChecker::check(const ForwardPolicy& pf, double logZ, long step) const {
    BoundCheck out;
    out.step = step;
    for (std::size_t k = 0; k < trajs_.size(); ++k) {
        double lpf = trajectory_logprob(trajs_[k], pf, Direction::forward).value;
        out.max_residual = std::max(out.max_residual, std::abs(logZ + lpf - log_pb_[k] - log_r_[k]));
    }
    out.logz_gap = std::abs(logZ - log_z_);
    auto term = dp_log_terminating(en_, pf);
    for (std::size_t i = 0; i < en_.size(); ++i)
        if (en_.terminating[i])
            out.max_state_gap = std::max(out.max_state_gap, std::abs(term[i] - (en_.log_reward[i] - log_z_)));
    return out;
}

// ---- trajectory balance --------------------------------------------------------

namespace {

struct Rollout {
    std::vector<StateId> states;
    std::vector<int> acts;
    double log_pf = 0, log_pb = 0, log_r = 0;
};

Rollout roll(const EnvGraph& env, const PolicyModel& model, const BackwardPolicy& pb, double eps, double temp,
             Rng& rng) {
    Rollout r;
    StateId s = env.initial();
    r.states.push_back(s);
    for (;;) {
        auto acts = model.actions(s);
        auto lp = model.log_probs(s);
        auto beh = (eps > 0 || temp != 1.0) ? behavior_policy(lp, eps, temp) : lp;
        int a = sample_index(beh, rng);
        r.acts.push_back(a);
        r.log_pf += lp[a];
        if (acts[a].terminal) {
            r.log_r = env.log_reward(s);
            return r;
        }
        r.log_pb += find_logp(pb(acts[a]), s);
        s = acts[a];
        r.states.push_back(s);
    }
}

}  // namespace

TbResult train_tb(const EnvGraph& env, PolicyModel& model, const BackwardPolicy& pb, const TrainConfig& cfg,
                  const Monitor& on_log) {
    cfg.validate();
    if (cfg.objective == Objective::reverse_kl && !cfg.on_policy)
        throw std::invalid_argument("reverse-KL training needs on-policy rollouts");
    std::unique_ptr<BoundChecker> checker;
    if (cfg.check_bounds && cfg.objective == Objective::tb) checker = std::make_unique<BoundChecker>(env, pb);

    Rng rng(cfg.seed, 0x7462);
    TbResult out;
    AdamState adam, adam_z;
    adam.lr = cfg.lr;
    adam_z.lr = cfg.lr_logz;
    std::vector<double> grad, logz{0.0};
    BaselineState base;
    base.eta = cfg.baseline_eta;

    auto log_point = [&](long step) {
        if (checker) out.bounds.push_back(checker->check(model.forward(), logz[0], step));
        if (on_log) on_log(step);
    };

    for (long step = 1; step <= cfg.steps; ++step) {
        double eps = epsilon_at(cfg, step - 1);
        std::vector<Rollout> batch;
        for (int b = 0; b < cfg.batch; ++b) batch.push_back(roll(env, model, pb, eps, cfg.temperature, rng));

        std::vector<Span> spans;
        double trace = 0;
        if (cfg.objective == Objective::tb) {
            if (step == 1 && cfg.logz_warm_start) {
                logz[0] = 0;
                for (auto& r : batch) logz[0] -= (r.log_pf - r.log_pb - r.log_r) / double(batch.size());
            }
            std::vector<double> res;
            for (auto& r : batch) res.push_back(logz[0] + r.log_pf - r.log_pb - r.log_r);
            for (double x : res) {
                if (!std::isfinite(x)) throw TrainingDiverged("non-finite trajectory-balance residual", out.trace);
                trace += std::abs(x) / double(res.size());
            }
            LossResult L = loss_aggregate(res, cfg.loss);
            double gz = 0;
            for (std::size_t k = 0; k < batch.size(); ++k) {
                double w = L.weights[k];
                if (w == 0) continue;
                gz += w;
                for (std::size_t t = 0; t < batch[k].acts.size(); ++t)
                    spans.push_back(model.accumulate(batch[k].states[t], batch[k].acts[t], w, grad));
            }
            std::vector<double> gzv{gz};
            try {
                optimizer_step(logz, gzv, adam_z);
            } catch (const std::runtime_error& e) {
                throw TrainingDiverged(e.what(), out.trace);
            }
        } else {
            std::vector<TrajectoryTerm> terms;
            for (auto& r : batch) {
                std::vector<double> g;
                for (std::size_t t = 0; t < r.acts.size(); ++t)
                    spans.push_back(model.accumulate(r.states[t], r.acts[t], 1.0, g));
                terms.push_back({r.log_pf, r.log_pb, r.log_r, std::move(g)});
            }
            std::size_t P = model.params().size();
            for (auto& t : terms) t.grad_log_pf.resize(P, 0.0);
            auto R = reverse_kl_gradient(terms, cfg.baseline, base, true);
            for (auto& t : terms) trace += std::abs(t.log_pf - t.log_r - t.log_pb - R.b_used) / double(terms.size());
            grad.resize(P, 0.0);
            for (std::size_t p = 0; p < P; ++p) grad[p] = R.grad[p];
        }
        grad.resize(model.params().size(), 0.0);
        try {
            optimizer_step_sparse(model.params(), grad, spans, adam);
        } catch (const std::runtime_error& e) {
            throw TrainingDiverged(e.what(), out.trace);
        }
        zero_spans(grad, spans);
        out.trace.push_back(trace);
        if (step % cfg.log_every == 0 || step == cfg.steps) log_point(step);
    }
    out.logZ = logz[0];
    return out;
}

TbResult train_tb_dag(const DagEnv& env, DagPolicy& policy, const TrainConfig& cfg, const Monitor& on_log) {
    DagModel model(policy, env);
    return train_tb(env, model, uniform_backward_policy(env), cfg, on_log);
}

// ---- replay --------------------------------------------------------------------

void ReplayBuffer::push(Transition t) {
    if (items_.size() < cap_) {
        items_.push_back(std::move(t));
    } else {
        items_[cursor_] = std::move(t);
    }
    cursor_ = (cursor_ + 1) % cap_;
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
    n = std::min(n, items_.size());
    std::vector<const Transition*> out;
    std::unordered_set<std::size_t> seen;
    // Floyd's subset sampling keeps draws distinct without a full shuffle
    std::size_t N = items_.size();
    for (std::size_t j = N - n; j < N; ++j) {
        std::size_t t = rng.below(j + 1);
        std::size_t pick = seen.count(t) ? j : t;
        seen.insert(pick);
        out.push_back(&items_[pick]);
    }
    return out;
}

// ---- modified detailed balance -------------------------------------------------

double dag_log_pb_uniform(const DagEnv& env, const DagState& next) {
    if (!env.options().filter) return -std::log(double(next.num_edges()));
    return -std::log(double(env.parents(StateId::of(canonical_key(next))).size()));
}

MdbResult train_modified_db(const DagEnv& env, const LocalScoreCache& cache, const GraphPrior& prior,
                            DagPolicy& policy, const TrainConfig& cfg, const Monitor& on_log) {
    cfg.validate();
    const int d = env.d();
    const MaskOptions& opt = env.options();
    Rng rng(cfg.seed, 0x6d6462);
    ReplayBuffer buf(cfg.buffer_capacity);
    TargetCopy target;
    target.period = cfg.target_period;
    if (cfg.use_target) sync_target(policy, target, 0);
    AdamState adam;
    adam.lr = cfg.lr;
    std::vector<double> grad;
    MdbResult out;

    auto rollout = [&](double eps) {
        DagState g = initial_dag_state(d);
        for (;;) {
            BitMatrix m = action_mask(g, opt);
            HierDist h = hierarchical_forward(policy, g, m);
            std::vector<double> lp(1 + std::size_t(d) * d);
            lp[0] = h.log_stop;
            std::copy(h.log_edge.begin(), h.log_edge.end(), lp.begin() + 1);
            auto beh = (eps > 0 || cfg.temperature != 1.0) ? behavior_policy(lp, eps, cfg.temperature) : lp;
            int k = sample_index(beh, rng);
            if (k == 0) return;
            EdgeAction a{(k - 1) / d, (k - 1) % d, false};
            buf.push({canonical_key(g), a, delta_score(g, a, cache, prior, opt)});
            g = apply_edge(g, a, opt);
        }
    };

    while (buf.size() < std::size_t(cfg.batch)) {
        std::size_t before = buf.size();
        rollout(epsilon_at(cfg, 0));
        // the stop-only rollout of a one-node graph adds nothing
        if (d == 1 && buf.size() == before) throw std::invalid_argument("a one-node graph has no transitions");
    }

    for (long step = 1; step <= cfg.steps; ++step) {
        double eps = epsilon_at(cfg, step - 1);
        for (int r = 0; r < cfg.rollouts_per_step; ++r) rollout(eps);
        auto batch = buf.sample(std::size_t(cfg.batch), rng);

        struct Eval {
            DagState g, g2;
            HierDist h, h2;
        };
        std::vector<Eval> ev;
        std::vector<double> res;
        ev.reserve(batch.size());
        for (auto* t : batch) {
            Eval e;
            e.g = dag_from_key(t->key, d);
            e.h = hierarchical_forward(policy, e.g, action_mask(e.g, opt));
            e.g2 = apply_edge(e.g, t->action, opt);
            BitMatrix m2 = action_mask(e.g2, opt);
            e.h2 = hierarchical_forward(cfg.use_target ? *target.snapshot : policy, e.g2, m2);
            double lpb = dag_log_pb_uniform(env, e.g2);
            res.push_back(modified_db_residual(t->delta, lpb, e.h.log_stop, e.h.log_edge[t->action.u * d + t->action.v],
                                               e.h2.log_stop));
            if (!std::isfinite(res.back())) throw TrainingDiverged("non-finite modified-DB residual", out.trace);
            ev.push_back(std::move(e));
        }
        LossResult L = loss_aggregate(res, cfg.loss);
        std::vector<Span> spans;
        for (std::size_t k = 0; k < batch.size(); ++k) {
            double w = L.weights[k];
            if (w == 0) continue;
            double ds = 0;
            std::vector<double> de;
            action_logit_grad(ev[k].h, d, EdgeAction::stop_action(), w, ds, de);
            action_logit_grad(ev[k].h, d, batch[k]->action, -w, ds, de);
            spans.push_back(policy.param_span(ev[k].g));
            grad.resize(policy.params().size(), 0.0);
            policy.backward(ev[k].g, ds, de, grad);
            if (!cfg.use_target) {
                double ds2 = 0;
                std::vector<double> de2;
                action_logit_grad(ev[k].h2, d, EdgeAction::stop_action(), -w, ds2, de2);
                spans.push_back(policy.param_span(ev[k].g2));
                grad.resize(policy.params().size(), 0.0);
                policy.backward(ev[k].g2, ds2, de2, grad);
            }
        }
        grad.resize(policy.params().size(), 0.0);
        try {
            optimizer_step_sparse(policy.params(), grad, spans, adam);
        } catch (const std::runtime_error& e) {
            throw TrainingDiverged(e.what(), out.trace);
        }
        zero_spans(grad, spans);
        if (cfg.use_target && sync_target(policy, target, step)) ++out.target_syncs;

        double tr = 0;
        for (double x : res) tr += std::abs(x) / double(res.size());
        out.trace.push_back(tr);
        if (step % cfg.log_every == 0 || step == cfg.steps) {
            DagState g0 = initial_dag_state(d);
            out.stop_trace.push_back(hierarchical_forward(policy, g0, action_mask(g0, opt)).p_stop);
            if (on_log) on_log(step);
        }
    }
    return out;
}

// ---- soft Q-learning -----------------------------------------------------------

double QTable::value(int s) const {
    std::vector<double> scaled;
    for (double x : q[s]) scaled.push_back(x / alpha);
    return alpha * logsumexp(scaled);
}

std::vector<StateId> QTable::actions(int s) const {
    std::vector<StateId> out;
    for (int c : en->children[s]) out.push_back(en->states[c]);
    if (en->terminating[s]) out.push_back(StateId::bottom());
    return out;
}

ForwardPolicy QTable::policy() const {
    QTable self = *this;
    return [self](const StateId& s) {
        int i = self.en->find(s);
        if (i < 0) throw SupportViolation("state outside the Q table");
        auto acts = self.actions(i);
        std::vector<double> lp;
        for (double x : self.q[i]) lp.push_back(x / self.alpha);
        log_normalize(lp);
        TransitionDistribution d;
        for (std::size_t a = 0; a < acts.size(); ++a) d.push_back({acts[a], lp[a]});
        return d;
    };
}

namespace {

QTable empty_table(const EnvGraph& env, double alpha, std::vector<std::vector<double>>& rewards,
                   const CorrectedReward& reward) {
    QTable T;
    T.en = std::make_shared<const Enumerated>(enumerate_env(env));
    T.alpha = alpha;
    const Enumerated& en = *T.en;
    T.q.resize(en.size());
    rewards.resize(en.size());
    for (std::size_t s = 0; s < en.size(); ++s) {
        for (auto& a : T.actions(int(s))) rewards[s].push_back(reward.at(en.states[s], a));
        T.q[s].assign(rewards[s].size(), 0.0);
    }
    return T;
}

}  // namespace

SqlResult train_sql(const EnvGraph& env, const CorrectedReward& reward, const TrainConfig& cfg, std::size_t log_limit) {
    cfg.validate();
    std::vector<std::vector<double>> rr;
    SqlResult out;
    out.table = empty_table(env, cfg.alpha, rr, reward);
    QTable& T = out.table;
    const Enumerated& en = *T.en;
    Rng rng(cfg.seed, 0x73716c);
    for (long step = 1; step <= cfg.steps; ++step) {
        double eps = epsilon_at(cfg, step - 1);
        for (int b = 0; b < cfg.batch; ++b) {
            int s = 0;
            for (;;) {
                int n = int(T.q[s].size());
                int a;
                if (eps > 0 && rng.uniform() < eps) {
                    a = int(rng.below(std::uint64_t(n)));
                } else {
                    std::vector<double> lp;
                    for (double x : T.q[s]) lp.push_back(x / T.alpha);
                    log_normalize(lp);
                    a = sample_index(lp, rng);
                }
                bool sink = a == int(en.children[s].size());
                int c = sink ? -1 : en.children[s][a];
                double v = sink ? 0.0 : T.value(c);
                double before = T.q[s][a];
                T.q[s][a] += cfg.sql_rate * (rr[s][a] + v - before);
                if (out.log.size() < log_limit)
                    out.log.push_back({s, a, before, rr[s][a], sink ? std::vector<double>{} : T.q[c], T.q[s][a]});
                if (sink) break;
                s = c;
            }
        }
    }
    return out;
}

QTable soft_value_iteration(const EnvGraph& env, const CorrectedReward& reward, double alpha) {
    if (!(alpha > 0)) throw std::invalid_argument("alpha must be positive");
    std::vector<std::vector<double>> rr;
    QTable T = empty_table(env, alpha, rr, reward);
    const Enumerated& en = *T.en;
    std::vector<double> V(en.size(), 0.0);
    for (auto it = en.topo.rbegin(); it != en.topo.rend(); ++it) {
        int s = *it;
        for (std::size_t a = 0; a < T.q[s].size(); ++a) {
            bool sink = a == en.children[s].size();
            T.q[s][a] = rr[s][a] + (sink ? 0.0 : V[en.children[s][a]]);
        }
        V[s] = T.value(s);
    }
    return T;
}

}  // namespace gfn
