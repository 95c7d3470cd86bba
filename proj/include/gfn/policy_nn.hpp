#pragma once
#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gfn/dag_env.hpp"
#include "gfn/dual.hpp"
#include "gfn/flow_core.hpp"

namespace gfn {

// Flat softmax over out_edges(env, s), logits created lazily at zero.
class TabularPolicy {
public:
    explicit TabularPolicy(const EnvGraph& env) : env_(&env) {}

    std::vector<StateId> actions(const StateId& s) const { return out_edges(*env_, s); }
    std::vector<double> log_probs(const StateId& s) const;
    // log-probability of actions(s)[a] with its gradient over params()
    Dual log_prob(const StateId& s, int a);
    ForwardPolicy forward() const;

    int offset(const StateId& s);  // first logit of s, allocating on first use
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

private:
    const EnvGraph* env_;
    std::unordered_map<StateId, int, StateIdHash> off_;
    std::vector<double> params_;
};

using Span = std::pair<std::size_t, std::size_t>;  // [offset, offset + length) within params()

// Raw heads of a DAG policy: one stop logit and d*d edge logits (row-major u*d+v).
class DagPolicy {
public:
    virtual ~DagPolicy() = default;
    virtual int d() const = 0;
    virtual void logits(const DagState& g, double& stop, std::vector<double>& edge) const = 0;
    // grad += J^T (dstop, dedge), allocating parameters if needed
    virtual void backward(const DagState& g, double dstop, const std::vector<double>& dedge,
                          std::vector<double>& grad) = 0;
    virtual std::vector<double>& params() = 0;
    virtual const std::vector<double>& params() const = 0;
    virtual std::unique_ptr<DagPolicy> clone() const = 0;
    virtual std::string kind() const = 0;
    // parameters that backward(g, ...) can touch, allocating them if needed
    virtual Span param_span(const DagState& g) = 0;
};

class DagTabularPolicy : public DagPolicy {
public:
    explicit DagTabularPolicy(int d) : d_(d) {}
    int d() const override { return d_; }
    void logits(const DagState& g, double& stop, std::vector<double>& edge) const override;
    void backward(const DagState& g, double dstop, const std::vector<double>& dedge, std::vector<double>& grad) override;
    std::vector<double>& params() override { return params_; }
    const std::vector<double>& params() const override { return params_; }
    std::unique_ptr<DagPolicy> clone() const override { return std::make_unique<DagTabularPolicy>(*this); }
    std::string kind() const override { return "tabular"; }
    Span param_span(const DagState& g) override { return {std::size_t(offset(g)), std::size_t(d_) * d_ + 1}; }
    int offset(const DagState& g);  // stop logit at offset, edges follow
    const std::unordered_map<std::string, int>& offsets() const { return off_; }

private:
    int d_;
    std::unordered_map<std::string, int> off_;
    std::vector<double> params_;
};

// Two tanh hidden layers over the flattened adjacency.
class MlpPolicy : public DagPolicy {
public:
    MlpPolicy(int d, int hidden, std::uint64_t seed);
    int d() const override { return d_; }
    void logits(const DagState& g, double& stop, std::vector<double>& edge) const override;
    void backward(const DagState& g, double dstop, const std::vector<double>& dedge, std::vector<double>& grad) override;
    std::vector<double>& params() override { return params_; }
    const std::vector<double>& params() const override { return params_; }
    std::unique_ptr<DagPolicy> clone() const override { return std::make_unique<MlpPolicy>(*this); }
    std::string kind() const override { return "mlp"; }
    Span param_span(const DagState&) override { return {0, params_.size()}; }
    int hidden() const { return h_; }

private:
    int d_, h_, in_, out_;
    int oW1_, ob1_, oW2_, ob2_, oW3_, ob3_;
    std::vector<double> params_;
};

struct HierDist {
    double log_stop = 0.0;
    std::vector<double> log_edge;  // d*d, -inf where masked
    // softmax and sigmoid intermediates for gradients
    double p_stop = 1.0;
    std::vector<double> p_edge_given_continue;
    bool forced_stop = true;
};

// P(stop|G) = sigmoid(stop logit); P(G'|G) = (1 - P(stop)) * masked softmax. Stop is 1 with an empty mask.
HierDist hierarchical_forward(const DagPolicy& policy, const DagState& g, const BitMatrix& mask);

struct ActionGrad {
    double value;
    std::vector<double> grad;  // over policy.params()
};
// log-probability of an edge or stop action, with d/dparams
ActionGrad log_prob_action(DagPolicy& policy, const DagState& g, const BitMatrix& mask, EdgeAction a);
// d log P(a) / d logits for a fixed distribution
void action_logit_grad(const HierDist& h, int d, EdgeAction a, double coef, double& dstop, std::vector<double>& dedge);

// Mixture with uniform over the support, then tempering by 1/temperature. -inf entries stay out of the support.
std::vector<double> behavior_policy(const std::vector<double>& logp, double epsilon, double temperature = 1.0);

struct AdamState {
    double lr = 1e-2, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long step = 0;
    std::vector<double> m, v;
};
// Rejects non-finite gradients by throwing; parameters are left unchanged then.
void optimizer_step(std::vector<double>& params, const std::vector<double>& grad, AdamState& adam);

// Adam restricted to the listed spans; moments elsewhere are left untouched. The step counter
// advances once per call.
void optimizer_step_sparse(std::vector<double>& params, const std::vector<double>& grad, std::vector<Span> spans,
                           AdamState& adam);

struct TargetCopy {
    std::unique_ptr<DagPolicy> snapshot;
    long period = 100;
};
bool sync_target(const DagPolicy& policy, TargetCopy& target, long step);

// flat little-endian doubles plus a text manifest with shapes, step and seed
void save_checkpoint(const std::string& path, const DagPolicy& policy, double logZ, long step, std::uint64_t seed);
std::unique_ptr<DagPolicy> load_checkpoint(const std::string& path, double* logZ = nullptr);

}  // namespace gfn
