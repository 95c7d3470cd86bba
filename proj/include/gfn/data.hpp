#pragma once
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gfn/dag_env.hpp"
#include "gfn/rng.hpp"
#include "gfn/scores.hpp"

namespace gfn {

// Random node order, then each order-respecting edge independently with
// p = edges_per_node * d / C(d, 2), so the expected edge count is edges_per_node * d.
DagState sample_er_dag(int d, double edges_per_node, Rng& rng);

std::vector<int> topological_order(const DagState& g);

struct LinGaussBn {
    DagState g;
    Eigen::MatrixXd theta;       // theta(j, i) is the weight of j -> i
    std::vector<double> noise;   // per-node noise variance
};
LinGaussBn sample_lingauss_bn(const DagState& g, Rng& rng, double noise_var = 0.01);
// (I - Theta)^-T D (I - Theta)^-1
Eigen::MatrixXd lingauss_covariance(const LinGaussBn& bn);

struct DiscreteBn {
    DagState g;
    int K = 2;
    // cpt[i][row * K + k]; row is the parent configuration in mixed radix K, lowest parent index most significant
    std::vector<std::vector<double>> cpt;
};
DiscreteBn sample_discrete_bn(const DagState& g, int K, Rng& rng);
int parent_row(const DiscreteBn& bn, int node, const std::vector<int>& sample);

Dataset ancestral_sample(const LinGaussBn& bn, int N, Rng& rng);
Dataset ancestral_sample(const DiscreteBn& bn, int N, Rng& rng);

struct CsvError : std::runtime_error {
    int row, col;
    CsvError(const std::string& what, int r, int c) : std::runtime_error(what), row(r), col(c) {}
};

// Header of names, one row per sample. An intervention mask, if any, goes to <path>.mask.
void write_csv(const std::string& path, const Dataset& data);
// Categorical files take K from the largest code unless K > 0 is given. <path>.mask is read when present.
Dataset read_csv(const std::string& path, Dataset::Kind kind, int K = 0);

void write_metadata(const std::string& path, const std::map<std::string, std::string>& kv);
std::map<std::string, std::string> read_metadata(const std::string& path);

}  // namespace gfn
