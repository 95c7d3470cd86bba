#pragma once
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gfn/flow_core.hpp"

namespace gfn {

inline constexpr int kMaxNodes = 64;

// Row i of a bit matrix is a 64-bit word; bit j is column j.
using BitMatrix = std::vector<std::uint64_t>;

struct DagState {
    int d = 0;
    BitMatrix adj;     // adj[i] bit j: edge i -> j
    BitMatrix closT;   // closT[i] bit j: path j ~> i, diagonal set

    bool has_edge(int i, int j) const { return (adj[i] >> j) & 1u; }
    bool reaches(int from, int to) const { return (closT[to] >> from) & 1u; }
    int num_edges() const;
    std::uint64_t parent_set(int j) const;  // bit i set iff i -> j
    int num_parents(int j) const;
    bool operator==(const DagState& o) const { return d == o.d && adj == o.adj; }
};

struct EdgeAction {
    int u = -1, v = -1;
    bool stop = false;
    static EdgeAction stop_action() { return {-1, -1, true}; }
    bool operator==(const EdgeAction&) const = default;
};

struct InvalidAction : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

using EdgeFilter = std::function<bool(const DagState&, int u, int v)>;
struct MaskOptions {
    std::optional<int> max_parents;
    EdgeFilter filter;  // extra user constraint; return false to forbid u -> v
};

DagState initial_dag_state(int d);
BitMatrix action_mask(const DagState& g, const MaskOptions& opt = {});
inline bool mask_at(const BitMatrix& m, int i, int j) { return (m[i] >> j) & 1u; }
int mask_count(const BitMatrix& m);

DagState apply_edge(const DagState& g, EdgeAction a, const MaskOptions& opt = {});
std::vector<std::pair<DagState, EdgeAction>> parent_states(const DagState& g);

// transpose transitive closure rebuilt from adjacency alone
BitMatrix closure_transpose(int d, const BitMatrix& adj);
DagState dag_from_adjacency(int d, const BitMatrix& adj);
DagState dag_from_edges(int d, const std::vector<std::pair<int, int>>& edges);
bool is_acyclic(int d, const BitMatrix& adj);

std::string canonical_key(const DagState& g);  // row-major bit-packed, ceil(d*d/8) bytes
DagState dag_from_key(const std::string& key, int d);
std::string key_hex(const std::string& key);
std::string key_from_hex(const std::string& hex);
std::string edge_list(const DagState& g);  // "0->1 2->1"

// The edge-by-edge construction environment. Every state is terminating.
class DagEnv : public EnvGraph {
public:
    using LogReward = std::function<double(const DagState&)>;
    DagEnv(int d, LogReward log_reward, MaskOptions opt = {});

    StateId initial() const override { return StateId::of(canonical_key(initial_dag_state(d_))); }
    std::vector<StateId> children(const StateId& s) const override;
    std::vector<StateId> parents(const StateId& s) const override;
    bool terminating(const StateId& s) const override { return !s.terminal; }
    double log_reward(const StateId& s) const override { return reward_(state(s)); }

    DagState state(const StateId& s) const { return dag_from_key(s.key, d_); }
    int d() const { return d_; }
    const MaskOptions& options() const { return opt_; }
    double log_reward_of(const DagState& g) const { return reward_(g); }

private:
    int d_;
    LogReward reward_;
    MaskOptions opt_;
};

}  // namespace gfn
