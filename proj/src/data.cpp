#include "gfn/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace gfn {

DagState sample_er_dag(int d, double edges_per_node, Rng& rng) {
    if (d < 1 || d > kMaxNodes) throw std::invalid_argument("d must lie in [1, 64]");
    if (edges_per_node < 0) throw std::invalid_argument("edges_per_node must be non-negative");
    std::vector<int> order(d);
    std::iota(order.begin(), order.end(), 0);
    for (int i = d - 1; i > 0; --i) std::swap(order[i], order[rng.below(std::uint64_t(i) + 1)]);
    double pairs = 0.5 * d * (d - 1);
    double p = pairs > 0 ? std::min(1.0, edges_per_node * d / pairs) : 0.0;
    std::vector<std::pair<int, int>> edges;
    for (int a = 0; a < d; ++a)
        for (int b = a + 1; b < d; ++b)
            if (rng.uniform() < p) edges.push_back({order[a], order[b]});
    return dag_from_edges(d, edges);
}

std::vector<int> topological_order(const DagState& g) {
    std::vector<int> indeg(g.d), out;
    for (int j = 0; j < g.d; ++j) indeg[j] = g.num_parents(j);
    std::vector<int> ready;
    for (int j = g.d - 1; j >= 0; --j)
        if (!indeg[j]) ready.push_back(j);
    while (!ready.empty()) {
        int u = ready.back();
        ready.pop_back();
        out.push_back(u);
        for (int v = g.d - 1; v >= 0; --v)
            if (g.has_edge(u, v) && --indeg[v] == 0) ready.push_back(v);
    }
    if (int(out.size()) != g.d) throw std::invalid_argument("graph has a cycle");
    return out;
}

LinGaussBn sample_lingauss_bn(const DagState& g, Rng& rng, double noise_var) {
    if (!(noise_var > 0)) throw std::invalid_argument("noise variance must be positive");
    LinGaussBn bn{g, Eigen::MatrixXd::Zero(g.d, g.d), std::vector<double>(g.d, noise_var)};
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int j = 0; j < g.d; ++j)
        for (int i = 0; i < g.d; ++i)
            if (g.has_edge(j, i)) bn.theta(j, i) = normal(rng);
    return bn;
}

Eigen::MatrixXd lingauss_covariance(const LinGaussBn& bn) {
    int d = bn.g.d;
    Eigen::MatrixXd A = (Eigen::MatrixXd::Identity(d, d) - bn.theta).inverse();
    Eigen::VectorXd D = Eigen::Map<const Eigen::VectorXd>(bn.noise.data(), d);
    return A.transpose() * D.asDiagonal() * A;
}

DiscreteBn sample_discrete_bn(const DagState& g, int K, Rng& rng) {
    if (K < 2) throw std::invalid_argument("arity must be at least 2");
    DiscreteBn bn{g, K, {}};
    for (int i = 0; i < g.d; ++i) {
        std::size_t rows = std::size_t(std::pow(double(K), double(g.num_parents(i))));
        std::vector<double> t(rows * K);
        for (std::size_t r = 0; r < rows; ++r) {
            // symmetric Dirichlet(1) via normalized unit exponentials
            double s = 0;
            for (int k = 0; k < K; ++k) s += t[r * K + k] = -std::log1p(-rng.uniform());
            for (int k = 0; k < K; ++k) t[r * K + k] /= s;
        }
        bn.cpt.push_back(std::move(t));
    }
    return bn;
}

int parent_row(const DiscreteBn& bn, int node, const std::vector<int>& sample) {
    int row = 0;
    for (int j = 0; j < bn.g.d; ++j)
        if (bn.g.has_edge(j, node)) row = row * bn.K + sample[j];
    return row;
}

Dataset ancestral_sample(const LinGaussBn& bn, int N, Rng& rng) {
    if (N < 1) throw std::invalid_argument("need at least one sample");
    int d = bn.g.d;
    Dataset ds;
    ds.n = N;
    ds.d = d;
    ds.values.assign(std::size_t(N) * d, 0.0);
    for (int j = 0; j < d; ++j) ds.names.push_back("X" + std::to_string(j));
    auto order = topological_order(bn.g);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int n = 0; n < N; ++n) {
        double* row = &ds.values[std::size_t(n) * d];
        for (int i : order) {
            double x = std::sqrt(bn.noise[i]) * normal(rng);
            for (int j = 0; j < d; ++j)
                if (bn.g.has_edge(j, i)) x += bn.theta(j, i) * row[j];
            row[i] = x;
        }
    }
    return ds;
}

Dataset ancestral_sample(const DiscreteBn& bn, int N, Rng& rng) {
    if (N < 1) throw std::invalid_argument("need at least one sample");
    int d = bn.g.d;
    Dataset ds;
    ds.kind = Dataset::Kind::categorical;
    ds.K = bn.K;
    ds.n = N;
    ds.d = d;
    ds.values.assign(std::size_t(N) * d, 0.0);
    for (int j = 0; j < d; ++j) ds.names.push_back("X" + std::to_string(j));
    auto order = topological_order(bn.g);
    std::vector<int> s(d);
    for (int n = 0; n < N; ++n) {
        for (int i : order) {
            const double* p = &bn.cpt[i][std::size_t(parent_row(bn, i, s)) * bn.K];
            double u = rng.uniform(), acc = 0;
            int k = bn.K - 1;
            for (int c = 0; c < bn.K; ++c)
                if (u < (acc += p[c])) {
                    k = c;
                    break;
                }
            s[i] = k;
        }
        for (int j = 0; j < d; ++j) ds.values[std::size_t(n) * d + j] = s[j];
    }
    return ds;
}

// ---- files ---------------------------------------------------------------------

void write_csv(const std::string& path, const Dataset& data) {
    data.check();
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f.precision(17);
    for (int j = 0; j < data.d; ++j)
        f << (j ? "," : "") << (j < int(data.names.size()) ? data.names[j] : "X" + std::to_string(j));
    f << "\n";
    for (int i = 0; i < data.n; ++i) {
        for (int j = 0; j < data.d; ++j) {
            f << (j ? "," : "");
            if (data.kind == Dataset::Kind::categorical) f << int(data.at(i, j));
            else f << data.at(i, j);
        }
        f << "\n";
    }
    if (!data.intervened.empty()) {
        std::ofstream m(path + ".mask");
        if (!m) throw std::runtime_error("cannot write " + path + ".mask");
        for (int i = 0; i < data.n; ++i) {
            for (int j = 0; j < data.d; ++j) m << (j ? "," : "") << int(data.clamped(i, j));
            m << "\n";
        }
    }
}

namespace {

std::vector<std::string> split_row(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream s(line);
    while (std::getline(s, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

std::string trim(std::string s) {
    auto issp = [](unsigned char c) { return std::isspace(c); };
    s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), issp));
    s.erase(std::find_if_not(s.rbegin(), s.rend(), issp).base(), s.end());
    return s;
}

std::vector<std::vector<double>> read_table(const std::string& path, int d, bool header, std::vector<std::string>* names) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::string line;
    int row = 0;
    if (header) {
        if (!std::getline(f, line)) throw CsvError(path + ": empty file", 0, 0);
        for (auto& c : split_row(line)) names->push_back(trim(c));
        d = int(names->size());
        ++row;
    }
    std::vector<std::vector<double>> out;
    while (std::getline(f, line)) {
        ++row;
        if (trim(line).empty()) continue;
        auto cells = split_row(line);
        if (int(cells.size()) != d)
            throw CsvError(path + ":" + std::to_string(row) + ": expected " + std::to_string(d) + " cells, found " +
                               std::to_string(cells.size()),
                           row, int(std::min<std::size_t>(cells.size(), std::size_t(d))) + 1);
        std::vector<double> r;
        for (int c = 0; c < d; ++c) {
            std::string t = trim(cells[c]);
            std::size_t used = 0;
            double v = 0;
            try {
                v = std::stod(t, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (t.empty() || used != t.size())
                throw CsvError(path + ":" + std::to_string(row) + ":" + std::to_string(c + 1) + ": bad cell '" + t + "'",
                               row, c + 1);
            r.push_back(v);
        }
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace

Dataset read_csv(const std::string& path, Dataset::Kind kind, int K) {
    Dataset ds;
    ds.kind = kind;
    auto rows = read_table(path, 0, true, &ds.names);
    ds.d = int(ds.names.size());
    ds.n = int(rows.size());
    for (auto& r : rows) ds.values.insert(ds.values.end(), r.begin(), r.end());
    if (kind == Dataset::Kind::categorical) {
        int mx = 0;
        for (double v : ds.values) mx = std::max(mx, int(v));
        ds.K = K > 0 ? K : mx + 1;
    }
    if (std::filesystem::exists(path + ".mask")) {
        auto m = read_table(path + ".mask", ds.d, false, nullptr);
        if (int(m.size()) != ds.n) throw CsvError(path + ".mask: row count differs from the data", int(m.size()), 0);
        for (auto& r : m)
            for (double v : r) ds.intervened.push_back(v != 0);
    }
    ds.check();
    return ds;
}

void write_metadata(const std::string& path, const std::map<std::string, std::string>& kv) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    for (auto& [k, v] : kv) f << k << "=" << v << "\n";
}

std::map<std::string, std::string> read_metadata(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(f, line)) {
        auto t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto eq = t.find('=');
        if (eq == std::string::npos) throw std::runtime_error(path + ": expected key=value, got '" + t + "'");
        kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }
    return kv;
}

}  // namespace gfn
