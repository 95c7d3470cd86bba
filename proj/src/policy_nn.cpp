#include "gfn/policy_nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

#include "gfn/logmath.hpp"
#include "gfn/rng.hpp"

namespace gfn {

// ---- generic tabular ----------------------------------------------------------

int TabularPolicy::offset(const StateId& s) {
    auto it = off_.find(s);
    if (it != off_.end()) return it->second;
    int o = int(params_.size());
    params_.resize(params_.size() + out_edges(*env_, s).size(), 0.0);
    off_.emplace(s, o);
    return o;
}

std::vector<double> TabularPolicy::log_probs(const StateId& s) const {
    std::size_t n = out_edges(*env_, s).size();
    std::vector<double> lp(n, 0.0);
    auto it = off_.find(s);
    if (it != off_.end())
        for (std::size_t a = 0; a < n; ++a) lp[a] = params_[it->second + a];
    log_normalize(lp);
    return lp;
}

Dual TabularPolicy::log_prob(const StateId& s, int a) {
    int o = offset(s);
    auto lp = log_probs(s);
    Dual out(lp[a]);
    for (std::size_t b = 0; b < lp.size(); ++b) out.g.push_back({o + int(b), (int(b) == a ? 1.0 : 0.0) - std::exp(lp[b])});
    return out;
}

ForwardPolicy TabularPolicy::forward() const {
    return [this](const StateId& s) {
        auto acts = actions(s);
        auto lp = log_probs(s);
        TransitionDistribution d;
        for (std::size_t a = 0; a < acts.size(); ++a) d.push_back({acts[a], lp[a]});
        return d;
    };
}

// ---- DAG tabular ---------------------------------------------------------------

int DagTabularPolicy::offset(const DagState& g) {
    auto key = canonical_key(g);
    auto it = off_.find(key);
    if (it != off_.end()) return it->second;
    int o = int(params_.size());
    params_.resize(params_.size() + 1 + std::size_t(d_) * d_, 0.0);
    off_.emplace(std::move(key), o);
    return o;
}

void DagTabularPolicy::logits(const DagState& g, double& stop, std::vector<double>& edge) const {
    edge.assign(std::size_t(d_) * d_, 0.0);
    stop = 0.0;
    auto it = off_.find(canonical_key(g));
    if (it == off_.end()) return;
    stop = params_[it->second];
    for (std::size_t k = 0; k < edge.size(); ++k) edge[k] = params_[it->second + 1 + k];
}

void DagTabularPolicy::backward(const DagState& g, double dstop, const std::vector<double>& dedge,
                                std::vector<double>& grad) {
    int o = offset(g);
    if (grad.size() < params_.size()) grad.resize(params_.size(), 0.0);
    grad[o] += dstop;
    for (std::size_t k = 0; k < dedge.size(); ++k) grad[o + 1 + k] += dedge[k];
}

// ---- MLP -----------------------------------------------------------------------

MlpPolicy::MlpPolicy(int d, int hidden, std::uint64_t seed) : d_(d), h_(hidden), in_(d * d), out_(1 + d * d) {
    if (d < 1 || hidden < 1) throw std::invalid_argument("MLP needs d >= 1 and a positive width");
    int n = 0;
    oW1_ = n, n += h_ * in_;
    ob1_ = n, n += h_;
    oW2_ = n, n += h_ * h_;
    ob2_ = n, n += h_;
    oW3_ = n, n += out_ * h_;
    ob3_ = n, n += out_;
    params_.assign(n, 0.0);
    Rng rng(seed, 0x4d4c50);
    auto fill = [&](int off, int count, int fan_in) {
        double a = 1.0 / std::sqrt(double(fan_in));
        for (int i = 0; i < count; ++i) params_[off + i] = a * (2 * rng.uniform() - 1);
    };
    fill(oW1_, h_ * in_, in_);
    fill(ob1_, h_, in_);
    fill(oW2_, h_ * h_, h_);
    fill(ob2_, h_, h_);
    fill(oW3_, out_ * h_, h_);
    fill(ob3_, out_, h_);
}

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;
using CVec = Eigen::Map<const Eigen::VectorXd>;
using Vec = Eigen::Map<Eigen::VectorXd>;

Eigen::VectorXd adjacency_input(const DagState& g) {
    Eigen::VectorXd x(g.d * g.d);
    for (int i = 0; i < g.d; ++i)
        for (int j = 0; j < g.d; ++j) x(i * g.d + j) = g.has_edge(i, j) ? 1.0 : 0.0;
    return x;
}

}  // namespace

void MlpPolicy::logits(const DagState& g, double& stop, std::vector<double>& edge) const {
    const double* p = params_.data();
    Eigen::VectorXd x = adjacency_input(g);
    Eigen::VectorXd h1 = (CMap(p + oW1_, h_, in_) * x + CVec(p + ob1_, h_)).array().tanh();
    Eigen::VectorXd h2 = (CMap(p + oW2_, h_, h_) * h1 + CVec(p + ob2_, h_)).array().tanh();
    Eigen::VectorXd y = CMap(p + oW3_, out_, h_) * h2 + CVec(p + ob3_, out_);
    stop = y(0);
    edge.assign(y.data() + 1, y.data() + out_);
}

void MlpPolicy::backward(const DagState& g, double dstop, const std::vector<double>& dedge, std::vector<double>& grad) {
    if (grad.size() < params_.size()) grad.resize(params_.size(), 0.0);
    const double* p = params_.data();
    double* q = grad.data();
    Eigen::VectorXd x = adjacency_input(g);
    Eigen::VectorXd h1 = (CMap(p + oW1_, h_, in_) * x + CVec(p + ob1_, h_)).array().tanh();
    Eigen::VectorXd h2 = (CMap(p + oW2_, h_, h_) * h1 + CVec(p + ob2_, h_)).array().tanh();
    Eigen::VectorXd dy(out_);
    dy(0) = dstop;
    for (int k = 0; k + 1 < out_; ++k) dy(k + 1) = dedge[k];

    Map(q + oW3_, out_, h_) += dy * h2.transpose();
    Vec(q + ob3_, out_) += dy;
    Eigen::VectorXd dz2 = (CMap(p + oW3_, out_, h_).transpose() * dy).array() * (1 - h2.array().square());
    Map(q + oW2_, h_, h_) += dz2 * h1.transpose();
    Vec(q + ob2_, h_) += dz2;
    Eigen::VectorXd dz1 = (CMap(p + oW2_, h_, h_).transpose() * dz2).array() * (1 - h1.array().square());
    Map(q + oW1_, h_, in_) += dz1 * x.transpose();
    Vec(q + ob1_, h_) += dz1;
}

// ---- hierarchical head ---------------------------------------------------------

HierDist hierarchical_forward(const DagPolicy& policy, const DagState& g, const BitMatrix& mask) {
    int d = g.d;
    double s;
    std::vector<double> e;
    policy.logits(g, s, e);
    HierDist h;
    h.log_edge.assign(std::size_t(d) * d, kNegInf);
    h.p_edge_given_continue.assign(std::size_t(d) * d, 0.0);
    if (mask_count(mask) == 0) {
        h.log_stop = 0.0;
        h.p_stop = 1.0;
        h.forced_stop = true;
        return h;
    }
    h.forced_stop = false;
    // log sigmoid(s) and log sigmoid(-s), stable
    auto log_sig = [](double z) { return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); };
    h.log_stop = log_sig(s);
    h.p_stop = std::exp(h.log_stop);
    double log_cont = log_sig(-s);
    double m = kNegInf;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            if (mask_at(mask, i, j)) m = std::max(m, e[i * d + j]);
    double z = 0;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            if (mask_at(mask, i, j)) z += std::exp(e[i * d + j] - m);
    double lz = m + std::log(z);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            if (mask_at(mask, i, j)) {
                double lp = e[i * d + j] - lz;
                h.p_edge_given_continue[i * d + j] = std::exp(lp);
                h.log_edge[i * d + j] = log_cont + lp;
            }
    return h;
}

void action_logit_grad(const HierDist& h, int d, EdgeAction a, double coef, double& dstop, std::vector<double>& dedge) {
    if (dedge.size() != std::size_t(d) * d) dedge.assign(std::size_t(d) * d, 0.0);
    if (h.forced_stop) return;
    if (a.stop) {
        dstop += coef * (1 - h.p_stop);
        return;
    }
    dstop -= coef * h.p_stop;
    int k = a.u * d + a.v;
    for (std::size_t b = 0; b < dedge.size(); ++b) dedge[b] -= coef * h.p_edge_given_continue[b];
    dedge[k] += coef;
}

ActionGrad log_prob_action(DagPolicy& policy, const DagState& g, const BitMatrix& mask, EdgeAction a) {
    HierDist h = hierarchical_forward(policy, g, mask);
    ActionGrad out;
    if (a.stop) {
        out.value = h.log_stop;
    } else {
        if (a.u < 0 || a.v < 0 || a.u >= g.d || a.v >= g.d || !mask_at(mask, a.u, a.v))
            throw InvalidAction("log-probability of a masked action");
        out.value = h.log_edge[a.u * g.d + a.v];
    }
    double ds = 0;
    std::vector<double> de;
    action_logit_grad(h, g.d, a, 1.0, ds, de);
    out.grad.assign(policy.params().size(), 0.0);
    policy.backward(g, ds, de, out.grad);
    out.grad.resize(policy.params().size(), 0.0);
    return out;
}

std::vector<double> behavior_policy(const std::vector<double>& logp, double epsilon, double temperature) {
    if (epsilon < 0 || epsilon > 1) throw std::invalid_argument("epsilon must lie in [0,1]");
    if (!(temperature > 0)) throw std::invalid_argument("temperature must be positive");
    int support = 0;
    for (double x : logp)
        if (x > kNegInf) ++support;
    if (support == 0) throw std::invalid_argument("empty support");
    std::vector<double> out(logp.size(), kNegInf);
    for (std::size_t i = 0; i < logp.size(); ++i)
        if (logp[i] > kNegInf) {
            double p = (1 - epsilon) * std::exp(logp[i]) + epsilon / support;
            out[i] = std::log(p) / temperature;
        }
    log_normalize(out);
    return out;
}

void optimizer_step(std::vector<double>& params, const std::vector<double>& grad, AdamState& adam) {
    if (grad.size() > params.size()) throw std::invalid_argument("gradient longer than parameter vector");
    for (double g : grad)
        if (!std::isfinite(g)) throw std::runtime_error("non-finite gradient, step rejected");
    adam.m.resize(params.size(), 0.0);
    adam.v.resize(params.size(), 0.0);
    ++adam.step;
    double c1 = 1 - std::pow(adam.beta1, double(adam.step)), c2 = 1 - std::pow(adam.beta2, double(adam.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        double g = i < grad.size() ? grad[i] : 0.0;
        adam.m[i] = adam.beta1 * adam.m[i] + (1 - adam.beta1) * g;
        adam.v[i] = adam.beta2 * adam.v[i] + (1 - adam.beta2) * g * g;
        params[i] -= adam.lr * (adam.m[i] / c1) / (std::sqrt(adam.v[i] / c2) + adam.eps);
    }
}

void optimizer_step_sparse(std::vector<double>& params, const std::vector<double>& grad, std::vector<Span> spans,
                           AdamState& adam) {
    std::sort(spans.begin(), spans.end());
    std::vector<Span> merged;
    for (auto [o, n] : spans) {
        if (o + n > params.size() || o + n > grad.size()) throw std::invalid_argument("span outside parameter vector");
        if (!merged.empty() && o <= merged.back().first + merged.back().second) {
            auto& m = merged.back();
            m.second = std::max(m.second, o + n - m.first);
        } else {
            merged.push_back({o, n});
        }
    }
    for (auto [o, n] : merged)
        for (std::size_t i = o; i < o + n; ++i)
            if (!std::isfinite(grad[i])) throw std::runtime_error("non-finite gradient, step rejected");
    adam.m.resize(params.size(), 0.0);
    adam.v.resize(params.size(), 0.0);
    ++adam.step;
    double c1 = 1 - std::pow(adam.beta1, double(adam.step)), c2 = 1 - std::pow(adam.beta2, double(adam.step));
    for (auto [o, n] : merged)
        for (std::size_t i = o; i < o + n; ++i) {
            double g = grad[i];
            adam.m[i] = adam.beta1 * adam.m[i] + (1 - adam.beta1) * g;
            adam.v[i] = adam.beta2 * adam.v[i] + (1 - adam.beta2) * g * g;
            params[i] -= adam.lr * (adam.m[i] / c1) / (std::sqrt(adam.v[i] / c2) + adam.eps);
        }
}

bool sync_target(const DagPolicy& policy, TargetCopy& target, long step) {
    if (target.snapshot && (target.period <= 0 || step % target.period != 0)) return false;
    target.snapshot = policy.clone();
    return true;
}

void save_checkpoint(const std::string& path, const DagPolicy& policy, double logZ, long step, std::uint64_t seed) {
    std::ofstream bin(path + ".bin", std::ios::binary);
    if (!bin) throw std::runtime_error("cannot write " + path + ".bin");
    const auto& p = policy.params();
    bin.write(reinterpret_cast<const char*>(p.data()), std::streamsize(p.size() * sizeof(double)));
    std::ofstream man(path + ".manifest");
    if (!man) throw std::runtime_error("cannot write " + path + ".manifest");
    man.precision(17);
    man << "kind " << policy.kind() << "\nd " << policy.d() << "\nparams " << p.size() << "\nstep " << step
        << "\nseed " << seed << "\nlogZ " << logZ << "\n";
    if (auto* mlp = dynamic_cast<const MlpPolicy*>(&policy)) man << "hidden " << mlp->hidden() << "\n";
    if (auto* tab = dynamic_cast<const DagTabularPolicy*>(&policy)) {
        std::vector<std::pair<int, std::string>> rows;
        for (auto& [k, o] : tab->offsets()) rows.push_back({o, key_hex(k)});
        std::sort(rows.begin(), rows.end());
        for (auto& [o, k] : rows) man << "key " << k << " " << o << "\n";
    }
}

std::unique_ptr<DagPolicy> load_checkpoint(const std::string& path, double* logZ) {
    std::ifstream man(path + ".manifest");
    if (!man) throw std::runtime_error("cannot read " + path + ".manifest");
    std::string kind, line;
    int d = 0, hidden = 0;
    std::size_t n = 0;
    double lz = 0;
    std::vector<std::pair<std::string, int>> keys;
    while (std::getline(man, line)) {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "kind") ls >> kind;
        else if (tag == "d") ls >> d;
        else if (tag == "params") ls >> n;
        else if (tag == "logZ") ls >> lz;
        else if (tag == "hidden") ls >> hidden;
        else if (tag == "key") {
            std::string h;
            int o;
            ls >> h >> o;
            keys.push_back({key_from_hex(h), o});
        }
    }
    std::vector<double> p(n);
    std::ifstream bin(path + ".bin", std::ios::binary);
    if (!bin.read(reinterpret_cast<char*>(p.data()), std::streamsize(n * sizeof(double))))
        throw std::runtime_error("checkpoint payload is truncated");
    if (logZ) *logZ = lz;
    if (kind == "mlp") {
        auto m = std::make_unique<MlpPolicy>(d, hidden, 0);
        if (m->params().size() != n) throw std::runtime_error("checkpoint shape mismatch");
        m->params() = p;
        return m;
    }
    if (kind == "tabular") {
        auto t = std::make_unique<DagTabularPolicy>(d);
        for (auto& [k, o] : keys) {
            int got = t->offset(dag_from_key(k, d));
            if (got != o) throw std::runtime_error("checkpoint key table out of order");
        }
        if (t->params().size() != n) throw std::runtime_error("checkpoint shape mismatch");
        t->params() = p;
        return t;
    }
    throw std::runtime_error("unknown checkpoint kind " + kind);
}

}  // namespace gfn
