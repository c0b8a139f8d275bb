"""Network topologies, Metropolis mixing matrices and spectral quantities.

Mixing matrices are symmetric and doubly stochastic over a connected
undirected graph; the spectral report carries rho_eta (operator norm of the
step-damped mixer minus the averaging projector) and the derived constants
w1 = 1 + rho_eta^2, w2 = 1 - rho_eta^2 used by the certification module.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_ER_ATTEMPTS = 1000


class InfeasibleTopologyError(RuntimeError):
    """Raised when no connected Erdos-Renyi draw is found within the cap."""


@dataclass(frozen=True)
class Topology:
    """Undirected simple graph on nodes 0..n-1 given as sorted edge pairs."""

    n: int
    edges: frozenset  # of (i, j) with i < j
    attempts: int = field(default=1, compare=False)

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("need at least 2 agents")
        for i, j in self.edges:
            if not (0 <= i < j < self.n):
                raise ValueError(f"bad edge ({i}, {j}) for n={self.n}")

    def degrees(self):
        deg = np.zeros(self.n, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def is_connected(self):
        adj = [[] for _ in range(self.n)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        seen = {0}
        stack = [0]
        while stack:
            for v in adj[stack.pop()]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == self.n


@dataclass(frozen=True)
class MixingMatrix:
    n: int
    w: np.ndarray

    def __post_init__(self):
        w = self.w
        if w.shape != (self.n, self.n):
            raise ValueError("weight matrix shape mismatch")
        if not np.allclose(w, w.T, atol=1e-12):
            raise ValueError("mixing matrix must be symmetric")
        if np.any(w < -1e-15) or np.any(w > 1 + 1e-15):
            raise ValueError("mixing weights must lie in [0, 1]")
        if np.max(np.abs(w.sum(axis=1) - 1.0)) > 1e-12:
            raise ValueError("rows must sum to 1")
        if np.max(np.abs(w.sum(axis=0) - 1.0)) > 1e-12:
            raise ValueError("columns must sum to 1")


@dataclass(frozen=True)
class SpectralReport:
    rho_eta: float
    w1: float
    w2: float


def gen_erdos_renyi(n, p, seed):
    """Connected G(n, p) draw; disconnected draws are redrawn with seed+1."""
    if n < 2:
        raise ValueError("need at least 2 agents")
    if not 0.0 < p <= 1.0:
        raise ValueError("edge probability must be in (0, 1]")
    for attempt in range(1, MAX_ER_ATTEMPTS + 1):
        rng = np.random.default_rng(seed + attempt - 1)
        edges = frozenset(
            (i, j)
            for i in range(n)
            for j in range(i + 1, n)
            if rng.random() < p
        )
        topo = Topology(n, edges, attempts=attempt)
        if topo.is_connected():
            return topo
    raise InfeasibleTopologyError(
        f"no connected draw for n={n}, p={p} after {MAX_ER_ATTEMPTS} attempts"
    )


def gen_ring(n):
    if n < 3:
        raise ValueError("ring needs at least 3 nodes")
    edges = {(i, i + 1) for i in range(n - 1)}
    edges.add((0, n - 1))
    return Topology(n, frozenset(edges))


def gen_complete(n):
    if n < 2:
        raise ValueError("need at least 2 agents")
    edges = frozenset((i, j) for i in range(n) for j in range(i + 1, n))
    return Topology(n, edges)


def gen_path(n):
    if n < 2:
        raise ValueError("need at least 2 agents")
    return Topology(n, frozenset((i, i + 1) for i in range(n - 1)))


def metropolis_weights(topo):
    """Metropolis-Hastings weights: w_ij = 1/(1 + max(deg_i, deg_j)) on edges."""
    if not topo.is_connected():
        raise ValueError("topology must be connected")
    deg = topo.degrees()
    w = np.zeros((topo.n, topo.n))
    for i, j in topo.edges:
        w[i, j] = w[j, i] = 1.0 / (1.0 + max(deg[i], deg[j]))
    np.fill_diagonal(w, 1.0 - w.sum(axis=1))
    return MixingMatrix(topo.n, w)


def _power_iteration_sym(b, tol=1e-12, max_iter=100_000):
    """Largest eigenvalue of a symmetric PSD matrix by power iteration.

    Deterministic start: normalized all-ones vector with a 1e-3 perturbation
    on coordinate 0, so the start is never orthogonal to the top eigenspace
    in the matrices we feed in.
    """
    n = b.shape[0]
    v = np.ones(n)
    v[0] += 1e-3
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        bv = b @ v
        norm = np.linalg.norm(bv)
        if norm == 0.0:
            return 0.0
        v = bv / norm
        new_lam = float(v @ (b @ v))
        if abs(new_lam - lam) <= tol * max(abs(new_lam), 1.0):
            return new_lam
        lam = new_lam
    return lam


def spectral_report(mix, eta):
    """rho_eta = ||W_eta - (1/n) 11^T|| with W_eta = I - eta(I - W)."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    n = mix.n
    w_eta = (1.0 - eta) * np.eye(n) + eta * mix.w
    b = w_eta - np.full((n, n), 1.0 / n)
    # b is symmetric, so the operator norm is sqrt(lambda_max(b @ b)).
    lam = _power_iteration_sym(b @ b)
    rho = float(np.sqrt(max(lam, 0.0)))
    return SpectralReport(rho_eta=rho, w1=1.0 + rho**2, w2=1.0 - rho**2)


def save_topology(topo, path):
    """Edge-list text format: header 'n=<count>', then one 'i j' per line."""
    lines = [f"n={topo.n}"]
    lines += [f"{i} {j}" for i, j in sorted(topo.edges)]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_topology(path):
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("n="):
            raise ValueError("expected 'n=<count>' header")
        n = int(header[2:])
        edges = set()
        for line in fh:
            line = line.strip()
            if not line:
                continue
            i, j = map(int, line.split())
            edges.add((min(i, j), max(i, j)))
    return Topology(n, frozenset(edges))
