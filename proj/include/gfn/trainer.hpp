#pragma once
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gfn/dag_env.hpp"
#include "gfn/flow_core.hpp"
#include "gfn/objectives.hpp"
#include "gfn/policy_nn.hpp"
#include "gfn/scores.hpp"

namespace gfn {

// Forward policy over StateIds with gradients, shared by the trajectory-level loops.
class PolicyModel {
public:
    virtual ~PolicyModel() = default;
    virtual std::vector<StateId> actions(const StateId& s) const = 0;  // out_edges order, sink last
    virtual std::vector<double> log_probs(const StateId& s) const = 0;
    // grad += coef * d log p(actions(s)[a]) / d params; returns the touched span
    virtual Span accumulate(const StateId& s, int a, double coef, std::vector<double>& grad) = 0;
    virtual std::vector<double>& params() = 0;
    ForwardPolicy forward() const;
};

class FlatModel : public PolicyModel {
public:
    explicit FlatModel(TabularPolicy& p) : p_(&p) {}
    std::vector<StateId> actions(const StateId& s) const override { return p_->actions(s); }
    std::vector<double> log_probs(const StateId& s) const override { return p_->log_probs(s); }
    Span accumulate(const StateId& s, int a, double coef, std::vector<double>& grad) override;
    std::vector<double>& params() override { return p_->params(); }

private:
    TabularPolicy* p_;
};

// Hierarchical DAG policy seen through the generic env interface: valid edges row-major, then stop.
class DagModel : public PolicyModel {
public:
    DagModel(DagPolicy& p, const DagEnv& env) : p_(&p), env_(&env) {}
    std::vector<StateId> actions(const StateId& s) const override;
    std::vector<double> log_probs(const StateId& s) const override;
    Span accumulate(const StateId& s, int a, double coef, std::vector<double>& grad) override;
    std::vector<double>& params() override { return p_->params(); }

private:
    DagPolicy* p_;
    const DagEnv* env_;
};

enum class Objective { tb, reverse_kl };

struct TrainConfig {
    long steps = 2000;
    int batch = 16;  // trajectories per step (TB, SQL) or transitions per step (modified DB)
    double eps_start = 1.0, eps_min = 0.1, eps_decay_frac = 0.5;
    bool on_policy = false;  // epsilon forced to 0
    double temperature = 1.0;
    LossSpec loss;
    double lr = 1e-2, lr_logz = 1e-2;
    bool logz_warm_start = true;  // set log Z from the first batch before the first update
    Objective objective = Objective::tb;
    BaselineKind baseline = BaselineKind::local;
    double baseline_eta = 0.1;
    // modified DB
    bool use_target = true;
    long target_period = 100;
    std::size_t buffer_capacity = 100000;
    int rollouts_per_step = 4;
    // SQL
    double sql_rate = 0.1;
    double alpha = 1.0;
    // monitoring
    long log_every = 100;
    bool check_bounds = false;
    std::uint64_t seed = 0;

    void validate() const;  // throws std::invalid_argument
    std::vector<std::pair<std::string, std::string>> describe() const;
};

// linear eps_start -> eps_min over the first eps_decay_frac of training, then constant
double epsilon_at(const TrainConfig& cfg, long step);

struct TrainingDiverged : std::runtime_error {
    std::vector<double> trace;
    TrainingDiverged(const std::string& what, std::vector<double> t) : std::runtime_error(what), trace(std::move(t)) {}
};

// Worst-case residual bounds of a TB model over every complete trajectory of an enumerable env.
struct BoundCheck {
    long step = 0;
    double max_residual = 0;   // max over tau of |Delta_TB(tau)|
    double logz_gap = 0;       // |log Z_phi - log Z|
    double max_state_gap = 0;  // max over x of |log P_F^T(x) - log R(x)/Z|
    bool ok() const { return logz_gap <= max_residual + 1e-9 && max_state_gap <= 2 * max_residual + 1e-9; }
};

class BoundChecker {
public:
    BoundChecker(const EnvGraph& env, BackwardPolicy pb);
    BoundCheck check(const ForwardPolicy& pf, double logZ, long step) const;

private:
    const EnvGraph* env_;
    BackwardPolicy pb_;
    Enumerated en_;
    std::vector<Trajectory> trajs_;
    std::vector<double> log_pb_, log_r_;
    double log_z_;
};

struct TbResult {
    double logZ = 0.0;
    std::vector<double> trace;  // mean |Delta| per step; for reverse KL, mean |c - b|
    std::vector<BoundCheck> bounds;
};

using Monitor = std::function<void(long step)>;

// Trajectory balance (or the reverse-KL surrogate) with a fixed backward policy.
TbResult train_tb(const EnvGraph& env, PolicyModel& model, const BackwardPolicy& pb, const TrainConfig& cfg,
                  const Monitor& on_log = {});

struct Transition {
    std::string key;  // canonical key of the source graph
    EdgeAction action;
    double delta;     // log R(G') - log R(G), fixed at insertion
};

class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity) : cap_(capacity) {}
    void push(Transition t);
    std::vector<const Transition*> sample(std::size_t n, Rng& rng) const;  // distinct entries
    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return cap_; }

private:
    std::size_t cap_;
    std::size_t cursor_ = 0;
    std::vector<Transition> items_;
};

struct MdbResult {
    std::vector<double> trace;       // mean |Delta| per step
    std::vector<double> stop_trace;  // P(stop | empty graph) at each logged step
    long target_syncs = 0;
};

double dag_log_pb_uniform(const DagEnv& env, const DagState& next);

TbResult train_tb_dag(const DagEnv& env, DagPolicy& policy, const TrainConfig& cfg, const Monitor& on_log = {});

MdbResult train_modified_db(const DagEnv& env, const LocalScoreCache& cache, const GraphPrior& prior,
                            DagPolicy& policy, const TrainConfig& cfg, const Monitor& on_log = {});

// Tabular Q over the edges of an enumerated env, sink edges included; V(sink) = 0.
struct QTable {
    std::shared_ptr<const Enumerated> en;
    std::vector<std::vector<double>> q;  // per state, children order then the sink
    double alpha = 1.0;

    double value(int s) const;           // alpha log sum exp(Q / alpha)
    std::vector<StateId> actions(int s) const;
    ForwardPolicy policy() const;        // softmax(Q / alpha)
};

struct SqlUpdate {
    int state, action;
    double q_before, reward;
    std::vector<double> q_next;  // Q(s', .) at update time, empty for the sink
    double q_after;
};

struct SqlResult {
    QTable table;
    std::vector<SqlUpdate> log;  // first `log_limit` updates
};

SqlResult train_sql(const EnvGraph& env, const CorrectedReward& reward, const TrainConfig& cfg,
                    std::size_t log_limit = 0);

QTable soft_value_iteration(const EnvGraph& env, const CorrectedReward& reward, double alpha);

}  // namespace gfn
