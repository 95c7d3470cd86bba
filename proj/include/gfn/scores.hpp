#pragma once
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gfn/dag_env.hpp"

namespace gfn {

struct Dataset {
    enum class Kind { continuous, categorical };
    Kind kind = Kind::continuous;
    int n = 0, d = 0;
    int K = 0;                        // arity, categorical only
    std::vector<double> values;       // n x d, row-major
    std::vector<char> intervened;     // empty, or n x d with 1 = clamped by intervention
    std::vector<std::string> names;

    double at(int row, int col) const { return values[std::size_t(row) * d + col]; }
    bool clamped(int row, int col) const { return !intervened.empty() && intervened[std::size_t(row) * d + col]; }
    void check() const;  // throws on inconsistent dimensions or out-of-range categories
};

Dataset standardize(const Dataset& data);  // zero mean, unit variance per column

struct BgeHyper {
    double alpha_mu = 1.0;
    double alpha_w = -1.0;  // <= 0 means d + 2
};

struct BdeHyper {
    double equivalent_sample_size = 1.0;
    int K = 0;  // <= 0 means take it from the data
};

// Family score interface: parents as a bit set over node indices.
class LocalScore {
public:
    virtual ~LocalScore() = default;
    virtual double family(int child, std::uint64_t parents) const = 0;
    virtual int d() const = 0;
};

class BgeScore : public LocalScore {
public:
    BgeScore(const Dataset& data, BgeHyper hyper = {});
    double family(int child, std::uint64_t parents) const override;
    int d() const override { return d_; }
    const Eigen::MatrixXd& R() const { return R_; }
    double t() const { return t_; }

private:
    double logdet(const std::vector<int>& idx) const;
    int d_, n_;
    double am_, aw_, t_;
    Eigen::MatrixXd R_;
};

class BdeScore : public LocalScore {
public:
    BdeScore(const Dataset& data, BdeHyper hyper = {});
    double family(int child, std::uint64_t parents) const override;
    int d() const override { return data_.d; }

private:
    Dataset data_;
    double ess_;
    int K_;
};

// Every family scores 0, so every graph has the same reward.
class UniformScore : public LocalScore {
public:
    explicit UniformScore(int d) : d_(d) {}
    double family(int, std::uint64_t) const override { return 0.0; }
    int d() const override { return d_; }

private:
    int d_;
};

std::uint64_t parent_mask(const std::vector<int>& parents);
double bge_local_score(const Dataset& data, int child, const std::vector<int>& parents, BgeHyper hyper = {});
double bde_local_score(const Dataset& data, int child, const std::vector<int>& parents, BdeHyper hyper = {});

class LocalScoreCache {
public:
    explicit LocalScoreCache(std::shared_ptr<const LocalScore> score) : score_(std::move(score)) {}
    double family(int child, std::uint64_t parents) const;
    int d() const { return score_->d(); }
    std::size_t size() const;
    const LocalScore& score() const { return *score_; }

private:
    std::shared_ptr<const LocalScore> score_;
    mutable std::mutex mu_;
    mutable std::map<std::pair<int, std::uint64_t>, double> memo_;
};

// log P(G) = -beta |E|; beta = 0 is the uniform prior
struct GraphPrior {
    double edge_penalty = 0.0;
    double log_prior(const DagState& g) const { return -edge_penalty * g.num_edges(); }
};

double log_reward(const DagState& g, const LocalScoreCache& cache, const GraphPrior& prior = {});
double log_reward_uncached(const DagState& g, const LocalScore& score, const GraphPrior& prior = {});
double delta_score(const DagState& g, EdgeAction a, const LocalScoreCache& cache, const GraphPrior& prior = {},
                   const MaskOptions& opt = {});

}  // namespace gfn
