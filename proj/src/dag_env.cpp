#include "gfn/dag_env.hpp"

#include <algorithm>
#include <bit>

namespace gfn {

namespace {

std::uint64_t full_row(int d) { return d == 64 ? ~0ULL : ((1ULL << d) - 1); }

}  // namespace

int DagState::num_edges() const {
    int k = 0;
    for (auto r : adj) k += std::popcount(r);
    return k;
}

std::uint64_t DagState::parent_set(int j) const {
    std::uint64_t p = 0;
    for (int i = 0; i < d; ++i) p |= ((adj[i] >> j) & 1ULL) << i;
    return p;
}

int DagState::num_parents(int j) const { return std::popcount(parent_set(j)); }

DagState initial_dag_state(int d) {
    if (d < 1 || d > kMaxNodes) throw std::invalid_argument("node count must lie in [1, 64]");
    DagState g;
    g.d = d;
    g.adj.assign(d, 0);
    g.closT.assign(d, 0);
    for (int i = 0; i < d; ++i) g.closT[i] = 1ULL << i;
    return g;
}

BitMatrix action_mask(const DagState& g, const MaskOptions& opt) {
    BitMatrix m(g.d);
    std::uint64_t full = full_row(g.d);
    for (int i = 0; i < g.d; ++i) m[i] = ~(g.adj[i] | g.closT[i]) & full;
    if (opt.max_parents) {
        std::uint64_t blocked = 0;
        for (int j = 0; j < g.d; ++j)
            if (g.num_parents(j) >= *opt.max_parents) blocked |= 1ULL << j;
        for (auto& r : m) r &= ~blocked;
    }
    if (opt.filter)
        for (int i = 0; i < g.d; ++i)
            for (std::uint64_t r = m[i]; r; r &= r - 1) {
                int j = std::countr_zero(r);
                if (!opt.filter(g, i, j)) m[i] &= ~(1ULL << j);
            }
    return m;
}

int mask_count(const BitMatrix& m) {
    int k = 0;
    for (auto r : m) k += std::popcount(r);
    return k;
}

DagState apply_edge(const DagState& g, EdgeAction a, const MaskOptions& opt) {
    if (a.stop || a.u < 0 || a.v < 0 || a.u >= g.d || a.v >= g.d || a.u == a.v)
        throw InvalidAction("not an edge action");
    if (!mask_at(action_mask(g, opt), a.u, a.v))
        throw InvalidAction("edge " + std::to_string(a.u) + "->" + std::to_string(a.v) + " is masked");
    DagState n = g;
    n.adj[a.u] |= 1ULL << a.v;
    // rows that reach v from below absorb everything that reaches u
    std::uint64_t into_u = g.closT[a.u];
    for (int i = 0; i < g.d; ++i) {
        std::uint64_t sel = 0 - ((g.closT[i] >> a.v) & 1ULL);
        n.closT[i] |= into_u & sel;
    }
    return n;
}

BitMatrix closure_transpose(int d, const BitMatrix& adj) {
    // closT[i] = {j : j ~> i}; iterate to a fixed point through parents
    BitMatrix c(d);
    for (int i = 0; i < d; ++i) c[i] = 1ULL << i;
    bool changed = true;
    while (changed) {
        changed = false;
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j)
                if ((adj[j] >> i) & 1ULL) {
                    std::uint64_t nc = c[i] | c[j];
                    if (nc != c[i]) c[i] = nc, changed = true;
                }
    }
    return c;
}

bool is_acyclic(int d, const BitMatrix& adj) {
    auto c = closure_transpose(d, adj);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            if (i != j && ((c[i] >> j) & 1ULL) && ((c[j] >> i) & 1ULL)) return false;
    for (int i = 0; i < d; ++i)
        if ((adj[i] >> i) & 1ULL) return false;
    return true;
}

DagState dag_from_adjacency(int d, const BitMatrix& adj) {
    if (!is_acyclic(d, adj)) throw std::invalid_argument("adjacency has a cycle");
    DagState g = initial_dag_state(d);
    g.adj = adj;
    g.closT = closure_transpose(d, adj);
    return g;
}

DagState dag_from_edges(int d, const std::vector<std::pair<int, int>>& edges) {
    BitMatrix adj(d, 0);
    for (auto [u, v] : edges) {
        if (u < 0 || v < 0 || u >= d || v >= d) throw std::invalid_argument("edge out of range");
        adj[u] |= 1ULL << v;
    }
    return dag_from_adjacency(d, adj);
}

std::vector<std::pair<DagState, EdgeAction>> parent_states(const DagState& g) {
    std::vector<std::pair<DagState, EdgeAction>> out;
    for (int i = 0; i < g.d; ++i)
        for (std::uint64_t r = g.adj[i]; r; r &= r - 1) {
            int j = std::countr_zero(r);
            BitMatrix a = g.adj;
            a[i] &= ~(1ULL << j);
            DagState p = initial_dag_state(g.d);
            p.adj = a;
            p.closT = closure_transpose(g.d, a);
            out.push_back({std::move(p), EdgeAction{i, j, false}});
        }
    return out;
}

std::string canonical_key(const DagState& g) {
    std::string k(std::size_t((g.d * g.d + 7) / 8), '\0');
    for (int i = 0; i < g.d; ++i)
        for (std::uint64_t r = g.adj[i]; r; r &= r - 1) {
            int b = i * g.d + std::countr_zero(r);
            k[b / 8] = char(static_cast<unsigned char>(k[b / 8]) | (1u << (b % 8)));
        }
    return k;
}

DagState dag_from_key(const std::string& key, int d) {
    if (key.size() != std::size_t((d * d + 7) / 8)) throw std::invalid_argument("key length does not match d");
    BitMatrix adj(d, 0);
    for (int b = 0; b < d * d; ++b)
        if ((static_cast<unsigned char>(key[b / 8]) >> (b % 8)) & 1u) adj[b / d] |= 1ULL << (b % d);
    DagState g = initial_dag_state(d);
    g.adj = adj;
    g.closT = closure_transpose(d, adj);
    return g;
}

std::string key_hex(const std::string& key) {
    static const char* h = "0123456789abcdef";
    std::string s;
    for (unsigned char c : key) s += h[c >> 4], s += h[c & 15];
    return s;
}

std::string key_from_hex(const std::string& hex) {
    if (hex.size() % 2) throw std::invalid_argument("odd-length hex key");
    auto nib = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        throw std::invalid_argument("bad hex digit");
    };
    std::string k;
    for (std::size_t i = 0; i < hex.size(); i += 2) k += char(nib(hex[i]) * 16 + nib(hex[i + 1]));
    return k;
}

std::string edge_list(const DagState& g) {
    std::string s;
    for (int i = 0; i < g.d; ++i)
        for (int j = 0; j < g.d; ++j)
            if (g.has_edge(i, j)) s += (s.empty() ? "" : " ") + std::to_string(i) + "->" + std::to_string(j);
    return s;
}

DagEnv::DagEnv(int d, LogReward log_reward, MaskOptions opt) : d_(d), reward_(std::move(log_reward)), opt_(std::move(opt)) {
    initial_dag_state(d);  // range check
}

std::vector<StateId> DagEnv::children(const StateId& s) const {
    std::vector<StateId> out;
    if (s.terminal) return out;
    DagState g = state(s);
    BitMatrix m = action_mask(g, opt_);
    for (int i = 0; i < d_; ++i)
        for (std::uint64_t r = m[i]; r; r &= r - 1) {
            DagState n = g;
            n.adj[i] |= 1ULL << std::countr_zero(r);
            out.push_back(StateId::of(canonical_key(n)));
        }
    return out;
}

std::vector<StateId> DagEnv::parents(const StateId& s) const {
    std::vector<StateId> out;
    if (s.terminal) return out;
    DagState g = state(s);
    for (int i = 0; i < d_; ++i)
        for (std::uint64_t r = g.adj[i]; r; r &= r - 1) {
            DagState p = g;
            p.adj[i] &= ~(1ULL << std::countr_zero(r));
            out.push_back(StateId::of(canonical_key(p)));
        }
    return out;
}

}  // namespace gfn
