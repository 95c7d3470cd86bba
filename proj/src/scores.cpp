#include "gfn/scores.hpp"

#include <bit>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace gfn {

void Dataset::check() const {
    if (n < 0 || d < 1) throw std::invalid_argument("dataset needs at least one column");
    if (values.size() != std::size_t(n) * d) throw std::invalid_argument("dataset size does not match n x d");
    if (!intervened.empty() && intervened.size() != values.size())
        throw std::invalid_argument("intervention mask size does not match n x d");
    if (kind == Kind::categorical) {
        if (K < 1) throw std::invalid_argument("categorical data needs an arity");
        for (double v : values)
            if (v < 0 || v >= K || v != std::floor(v)) throw std::invalid_argument("category index out of range");
    }
}

Dataset standardize(const Dataset& data) {
    Dataset out = data;
    for (int j = 0; j < data.d; ++j) {
        double m = 0, s = 0;
        for (int i = 0; i < data.n; ++i) m += data.at(i, j);
        m /= data.n;
        for (int i = 0; i < data.n; ++i) s += (data.at(i, j) - m) * (data.at(i, j) - m);
        s = std::sqrt(s / data.n);
        if (s == 0) s = 1;
        for (int i = 0; i < data.n; ++i) out.values[std::size_t(i) * data.d + j] = (data.at(i, j) - m) / s;
    }
    return out;
}

std::uint64_t parent_mask(const std::vector<int>& parents) {
    std::uint64_t m = 0;
    for (int p : parents) m |= 1ULL << p;
    return m;
}

BgeScore::BgeScore(const Dataset& data, BgeHyper h) : d_(data.d), n_(data.n) {
    data.check();
    if (data.kind != Dataset::Kind::continuous) throw std::invalid_argument("BGe needs continuous data");
    if (data.n < 1) throw std::invalid_argument("BGe needs at least one observation");
    am_ = h.alpha_mu;
    aw_ = h.alpha_w > 0 ? h.alpha_w : d_ + 2.0;
    if (!(am_ > 0)) throw std::invalid_argument("alpha_mu must be positive");
    if (!(aw_ > d_ + 1)) throw std::invalid_argument("alpha_w must exceed d + 1");
    t_ = am_ * (aw_ - d_ - 1) / (am_ + 1);

    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> X(data.values.data(), n_, d_);
    Eigen::RowVectorXd mean = X.colwise().mean();
    Eigen::MatrixXd C = X.rowwise() - mean;
    R_ = t_ * Eigen::MatrixXd::Identity(d_, d_) + C.transpose() * C +
         (n_ * am_ / (n_ + am_)) * mean.transpose() * mean;
}

double BgeScore::logdet(const std::vector<int>& idx) const {
    if (idx.empty()) return 0.0;
    Eigen::MatrixXd S(idx.size(), idx.size());
    for (std::size_t a = 0; a < idx.size(); ++a)
        for (std::size_t b = 0; b < idx.size(); ++b) S(a, b) = R_(idx[a], idx[b]);
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() != Eigen::Success) throw std::runtime_error("BGe submatrix is not positive definite");
    return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

double BgeScore::family(int child, std::uint64_t parents) const {
    std::vector<int> pa;
    for (std::uint64_t r = parents; r; r &= r - 1) pa.push_back(std::countr_zero(r));
    double l = double(pa.size()), N = n_, d = d_;
    double ld_pa = logdet(pa);
    pa.push_back(child);
    double ld_fam = logdet(pa);
    return 0.5 * (std::log(am_) - std::log(N + am_)) + std::lgamma(0.5 * (N + aw_ - d + l + 1)) -
           std::lgamma(0.5 * (aw_ - d + l + 1)) - 0.5 * N * std::log(std::numbers::pi) +
           0.5 * (aw_ - d + 2 * l + 1) * std::log(t_) + 0.5 * (N + aw_ - d + l) * ld_pa -
           0.5 * (N + aw_ - d + l + 1) * ld_fam;
}

BdeScore::BdeScore(const Dataset& data, BdeHyper h) : data_(data), ess_(h.equivalent_sample_size) {
    data_.check();
    if (data_.kind != Dataset::Kind::categorical) throw std::invalid_argument("BDe needs categorical data");
    K_ = h.K > 0 ? h.K : data_.K;
    if (K_ < data_.K) throw std::invalid_argument("BDe arity smaller than data arity");
    if (!(ess_ > 0)) throw std::invalid_argument("equivalent sample size must be positive");
}

double BdeScore::family(int child, std::uint64_t parents) const {
    std::vector<int> pa;
    for (std::uint64_t r = parents; r; r &= r - 1) pa.push_back(std::countr_zero(r));
    double q = std::pow(double(K_), double(pa.size()));
    double a_ku = ess_ / (K_ * q), a_u = ess_ / q;
    // counts over observed parent configurations only; unobserved ones contribute 0
    std::map<std::size_t, std::vector<int>> counts;
    for (int r = 0; r < data_.n; ++r) {
        if (data_.clamped(r, child)) continue;
        std::size_t u = 0;
        for (int p : pa) u = u * K_ + std::size_t(data_.at(r, p));
        auto& row = counts[u];
        if (row.empty()) row.assign(K_, 0);
        ++row[std::size_t(data_.at(r, child))];
    }
    double s = 0;
    for (auto& [u, row] : counts) {
        int nu = 0;
        for (int c : row) nu += c;
        s += std::lgamma(a_u) - std::lgamma(a_u + nu);
        for (int c : row)
            if (c) s += std::lgamma(a_ku + c) - std::lgamma(a_ku);
    }
    return s;
}

double bge_local_score(const Dataset& data, int child, const std::vector<int>& parents, BgeHyper hyper) {
    return BgeScore(data, hyper).family(child, parent_mask(parents));
}

double bde_local_score(const Dataset& data, int child, const std::vector<int>& parents, BdeHyper hyper) {
    return BdeScore(data, hyper).family(child, parent_mask(parents));
}

double LocalScoreCache::family(int child, std::uint64_t parents) const {
    {
        std::lock_guard lock(mu_);
        auto it = memo_.find({child, parents});
        if (it != memo_.end()) return it->second;
    }
    double v = score_->family(child, parents);
    std::lock_guard lock(mu_);
    memo_.emplace(std::make_pair(child, parents), v);
    return v;
}

std::size_t LocalScoreCache::size() const {
    std::lock_guard lock(mu_);
    return memo_.size();
}

double log_reward(const DagState& g, const LocalScoreCache& cache, const GraphPrior& prior) {
    double s = prior.log_prior(g);
    for (int j = 0; j < g.d; ++j) s += cache.family(j, g.parent_set(j));
    return s;
}

double log_reward_uncached(const DagState& g, const LocalScore& score, const GraphPrior& prior) {
    double s = prior.log_prior(g);
    for (int j = 0; j < g.d; ++j) s += score.family(j, g.parent_set(j));
    return s;
}

double delta_score(const DagState& g, EdgeAction a, const LocalScoreCache& cache, const GraphPrior& prior,
                   const MaskOptions& opt) {
    if (a.stop || a.u < 0 || a.v < 0 || a.u >= g.d || a.v >= g.d || !mask_at(action_mask(g, opt), a.u, a.v))
        throw InvalidAction("delta score of an invalid action");
    std::uint64_t pa = g.parent_set(a.v);
    return cache.family(a.v, pa | (1ULL << a.u)) - cache.family(a.v, pa) - prior.edge_penalty;
}

}  // namespace gfn
