"""Reference values for the score tests.

BGe: local score as log p(D_fam) - log p(D_pa), each term the closed-form
normal-Wishart marginal of a variable subset (multivariate gamma form), in
50-digit arithmetic. BDe: Dirichlet-multinomial counts tabulated by hand.
DAG counts: brute force over all directed graphs.
"""
import itertools

import mpmath as mp
import networkx as nx

mp.mp.dps = 50

X = [[0.3, -1.2], [1.1, 0.4], [-0.7, -0.5], [2.0, 1.7], [-0.2, 0.9]]
N, d = len(X), 2
am, aw = mp.mpf(1), mp.mpf(d + 2)
t = am * (aw - d - 1) / (am + 1)


def R_matrix():
    mean = [mp.fsum(r[j] for r in X) / N for j in range(d)]
    R = mp.matrix(d, d)
    for a in range(d):
        for b in range(d):
            s = mp.fsum((mp.mpf(r[a]) - mean[a]) * (mp.mpf(r[b]) - mean[b]) for r in X)
            R[a, b] = (t if a == b else 0) + s + N * am / (N + am) * mean[a] * mean[b]
    return R


def log_mvgamma(p, a):
    return p * (p - 1) / 4 * mp.log(mp.pi) + mp.fsum(mp.loggamma(a + mp.mpf(1 - j) / 2) for j in range(1, p + 1))


def log_marginal(S):
    if not S:
        return mp.mpf(0)
    p = len(S)
    awp = aw - d + p
    R = R_matrix()
    RS = mp.matrix([[R[i, j] for j in S] for i in S])
    return (-N * p / 2 * mp.log(mp.pi) + p / 2 * mp.log(am / (N + am))
            + log_mvgamma(p, (N + awp) / 2) - log_mvgamma(p, awp / 2)
            + awp / 2 * p * mp.log(t) - (N + awp) / 2 * mp.log(mp.det(RS)))


def bge(child, parents):
    return log_marginal(sorted(parents + [child])) - log_marginal(sorted(parents))


print("bge 0|{}", mp.nstr(bge(0, []), 20))
print("bge 1|{}", mp.nstr(bge(1, []), 20))
print("bge 1|{0}", mp.nstr(bge(1, [0]), 20))
print("bge 0|{1}", mp.nstr(bge(0, [1]), 20))

# BDeu, K=2, N'=1. Rows (X0, X1):
B = [(0, 0), (0, 1), (1, 1), (1, 1), (0, 0), (1, 0), (1, 1)]
# hand counts: X0 alone: N[0]=3, N[1]=4; X1 given X0=0: (2, 1); given X0=1: (1, 3)
def dm(counts, ess):
    q = len(counts)
    K = len(counts[0])
    s = mp.mpf(0)
    for row in counts:
        s += mp.loggamma(mp.mpf(ess) / q) - mp.loggamma(mp.mpf(ess) / q + sum(row))
        for c in row:
            s += mp.loggamma(mp.mpf(ess) / (K * q) + c) - mp.loggamma(mp.mpf(ess) / (K * q))
    return s


print("bde 0|{}", mp.nstr(dm([[3, 4]], 1), 20))
print("bde 1|{0}", mp.nstr(dm([[2, 1], [1, 3]], 1), 20))


def count_dags(n):
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    c = 0
    for bits in itertools.product([0, 1], repeat=len(pairs)):
        g = nx.DiGraph()
        g.add_nodes_from(range(n))
        g.add_edges_from(p for p, b in zip(pairs, bits) if b)
        c += nx.is_directed_acyclic_graph(g)
    return c


print("dags", [count_dags(n) for n in (1, 2, 3, 4)])
