"""Time-varying local losses with full / stochastic / one-point access.

Two families are provided: drifting quadratics (closed-form optima, exact
regularity measures) and online logistic regression (per-agent per-round
sample batches, damped-Newton optima). The one-point estimator perturbs a
single function evaluation along a Gaussian direction.
"""

from __future__ import annotations

import csv
import threading
from dataclasses import dataclass

import numpy as np

from .streams import substream

SMOOTHING_FLOOR = 1e-8
NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 200


class NewtonFailure(RuntimeError):
    """Raised when the centralized Newton solve does not reach tolerance."""


@dataclass(frozen=True)
class SmoothingSchedule:
    """Constant v_t = v, or decaying v_t = c / max(t, 1), floored at 1e-8."""

    kind: str  # "constant" | "decaying"
    value: float

    def __post_init__(self):
        if self.kind not in ("constant", "decaying"):
            raise ValueError(f"unknown smoothing kind {self.kind!r}")
        if self.value <= 0:
            raise ValueError("smoothing parameter must be positive")

    def at(self, t):
        v = self.value if self.kind == "constant" else self.value / max(t, 1)
        return max(v, SMOOTHING_FLOOR)


@dataclass(frozen=True)
class RegularityTrace:
    p: float  # gradient variation sup (exact for quadratics)
    v: float  # optimum drift ||x*_{t+1} - x*_t||
    sigma_bar_sq: float  # mean_i ||grad f_{i,t}(x*_t)||^2
    p_is_estimate: bool


# --- drift rules for quadratic centers -------------------------------------


@dataclass(frozen=True)
class StaticPath:
    def offset(self, t):
        return 0.0


@dataclass(frozen=True)
class LinearPath:
    step: np.ndarray  # added once per round

    def offset(self, t):
        return t * self.step


@dataclass(frozen=True)
class GeometricPath:
    """Offset increments direction * rate^t, so total drift is summable."""

    direction: np.ndarray
    rate: float

    def offset(self, t):
        if self.rate == 1.0:
            return t * self.direction
        return self.direction * (1.0 - self.rate**t) / (1.0 - self.rate)


class _CachedOptima:
    """Round-indexed optimum cache; access serialized for threaded callers."""

    def __init__(self):
        self._cache = {}
        self._lock = threading.Lock()

    def get_or_compute(self, t, compute):
        with self._lock:
            if t not in self._cache:
                self._cache[t] = compute(t)
            return self._cache[t]

    def latest_before(self, t):
        earlier = [k for k in self._cache if k < t]
        return self._cache[max(earlier)] if earlier else None


class DriftingQuadratic:
    """f_{i,t}(x) = 1/2 (x - c_{i,t})^T A_i (x - c_{i,t}).

    All agents share a common drift path applied on top of per-agent base
    centers, so the global optimum drifts along the same path.
    """

    def __init__(self, mats, base_centers, drift=None, noise_std=0.0):
        self.mats = [np.asarray(a, dtype=float) for a in mats]
        self.base_centers = [np.asarray(c, dtype=float) for c in base_centers]
        self.drift = drift if drift is not None else StaticPath()
        self.noise_std = float(noise_std)
        self.n_agents = len(self.mats)
        self.dim = self.mats[0].shape[0]
        self._sum_a = np.sum(self.mats, axis=0)
        for a in self.mats:
            if not np.allclose(a, a.T, atol=1e-10):
                raise ValueError("quadratic matrices must be symmetric")
        mean_a = self._sum_a / self.n_agents
        if np.min(np.linalg.eigvalsh(mean_a)) <= 0:
            raise ValueError("average quadratic matrix must be positive definite")
        self._optima = _CachedOptima()

    # regularity constants, used by tests and the certification CLI glue
    def smoothness(self):
        return max(np.linalg.eigvalsh(a)[-1] for a in self.mats)

    def strong_convexity(self):
        return float(np.min(np.linalg.eigvalsh(self._sum_a / self.n_agents)))

    def center(self, i, t):
        return self.base_centers[i] + self.drift.offset(t)

    def value(self, i, t, x):
        d = x - self.center(i, t)
        return 0.5 * float(d @ self.mats[i] @ d)

    def grad(self, i, t, x):
        return self.mats[i] @ (x - self.center(i, t))

    def stoch_grad(self, i, t, x, rng):
        g = self.grad(i, t, x)
        if self.noise_std > 0:
            g = g + self.noise_std * rng.standard_normal(self.dim)
        return g

    def optimum(self, t):
        def compute(t):
            rhs = np.sum(
                [a @ self.center(i, t) for i, a in enumerate(self.mats)], axis=0
            )
            return np.linalg.solve(self._sum_a, rhs)

        return self._optima.get_or_compute(t, compute)

    def regularity(self, t, eval_points=()):
        shift = np.broadcast_to(
            np.asarray(self.drift.offset(t) - self.drift.offset(t + 1), float),
            (self.dim,),
        )
        p = max(float(np.linalg.norm(a @ shift)) for a in self.mats)
        xs, xs_next = self.optimum(t), self.optimum(t + 1)
        sig = np.mean(
            [np.linalg.norm(self.grad(i, t, xs)) ** 2 for i in range(self.n_agents)]
        )
        return RegularityTrace(
            p=p,
            v=float(np.linalg.norm(xs_next - xs)),
            sigma_bar_sq=float(sig),
            p_is_estimate=False,
        )

    def global_value(self, t, x):
        return np.mean([self.value(i, t, x) for i in range(self.n_agents)])

    def global_grad(self, t, x):
        return np.mean([self.grad(i, t, x) for i in range(self.n_agents)], axis=0)

    def test_accuracy(self, x):
        return None


def _log1p_exp(z):
    # log(1 + e^z), stable on both tails
    return np.logaddexp(0.0, z)


def _sigmoid(z):
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class OnlineLogistic:
    """Regularized logistic loss over per-agent, per-round sample batches.

    batches(i, t) must deterministically return (features (M, m), labels (M,))
    with labels in {0, 1}. The r/2 ||x||^2 term makes every local loss
    strongly convex and smooth.
    """

    def __init__(self, n_agents, dim, batches, reg, test_set=None):
        if reg <= 0:
            raise ValueError("regularizer must be positive")
        self.n_agents = n_agents
        self.dim = dim
        self._batches = batches
        self.reg = float(reg)
        self.test_set = test_set
        self._optima = _CachedOptima()
        self._batch_cache = {}

    def batch(self, i, t):
        # deterministic in (i, t), so memoizing is safe; value, gradient
        # and Hessian calls at the same round otherwise regenerate it
        key = (i, t)
        if key not in self._batch_cache:
            self._batch_cache[key] = self._batches(i, t)
        return self._batch_cache[key]

    def value(self, i, t, x):
        a, b = self.batch(i, t)
        z = a @ x
        loss = np.mean((1.0 - b) * z + _log1p_exp(-z))
        return float(loss + 0.5 * self.reg * x @ x)

    def grad(self, i, t, x):
        a, b = self.batch(i, t)
        z = a @ x
        return a.T @ (_sigmoid(z) - b) / len(b) + self.reg * x

    def stoch_grad(self, i, t, x, rng):
        a, b = self.batch(i, t)
        idx = rng.integers(len(b))
        z = float(a[idx] @ x)
        return (_sigmoid(np.array([z]))[0] - b[idx]) * a[idx] + self.reg * x

    def _hess(self, i, t, x):
        a, b = self.batch(i, t)
        sig = _sigmoid(a @ x)
        weights = sig * (1.0 - sig)
        return (a.T * weights) @ a / len(b) + self.reg * np.eye(self.dim)

    def optimum(self, t):
        def compute(t):
            x = self._optima.latest_before(t)
            x = np.zeros(self.dim) if x is None else x.copy()
            for _ in range(NEWTON_MAX_ITER):
                g = self.global_grad(t, x)
                if np.linalg.norm(g) <= NEWTON_TOL:
                    return x
                h = np.mean(
                    [self._hess(i, t, x) for i in range(self.n_agents)], axis=0
                )
                step = np.linalg.solve(h, g)
                # damped: halve until the global value stops increasing.
                # The slack term matters near the solution, where the true
                # decrease falls below the rounding noise of f itself and a
                # strict descent test would reject the full Newton step.
                f0 = self.global_value(t, x)
                accept = f0 + 1e-12 * (1.0 + abs(f0))
                alpha = 1.0
                while alpha > 1e-12:
                    x_new = x - alpha * step
                    if self.global_value(t, x_new) <= accept:
                        break
                    alpha *= 0.5
                x = x_new
            if np.linalg.norm(self.global_grad(t, x)) <= NEWTON_TOL:
                return x
            raise NewtonFailure(f"no optimum to tolerance at round {t}")

        return self._optima.get_or_compute(t, compute)

    def regularity(self, t, eval_points=()):
        xs, xs_next = self.optimum(t), self.optimum(t + 1)
        points = [xs, xs_next, *eval_points]
        p = max(
            float(np.linalg.norm(self.grad(i, t + 1, x) - self.grad(i, t, x)))
            for i in range(self.n_agents)
            for x in points
        )
        sig = np.mean(
            [np.linalg.norm(self.grad(i, t, xs)) ** 2 for i in range(self.n_agents)]
        )
        return RegularityTrace(
            p=p,
            v=float(np.linalg.norm(xs_next - xs)),
            sigma_bar_sq=float(sig),
            p_is_estimate=True,
        )

    def global_value(self, t, x):
        return np.mean([self.value(i, t, x) for i in range(self.n_agents)])

    def global_grad(self, t, x):
        return np.mean([self.grad(i, t, x) for i in range(self.n_agents)], axis=0)

    def test_accuracy(self, x):
        if self.test_set is None:
            return None
        a, b = self.test_set
        return float(np.mean((a @ x > 0) == (b > 0.5)))


def one_point_estimate(family, i, t, x, v_t, u):
    """Single-evaluation gradient estimate along direction u with smoothing v_t."""
    if v_t <= 0:
        raise ValueError("smoothing parameter must be positive")
    diff = family.value(i, t, x + v_t * u) - family.value(i, t, x)
    return diff / v_t * u


# --- family constructors ----------------------------------------------------


def random_quadratic(
    n_agents,
    dim,
    seed,
    eig_min=0.5,
    eig_max=2.0,
    center_scale=3.0,
    drift=None,
    noise_std=0.0,
    identical=False,
):
    """Random PSD quadratics with per-matrix eigenvalues in [eig_min, eig_max]."""
    rng = np.random.default_rng(seed)
    mats, centers = [], []
    for _ in range(n_agents):
        q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        eigs = rng.uniform(eig_min, eig_max, size=dim)
        mats.append(q @ np.diag(eigs) @ q.T)
        centers.append(center_scale * rng.standard_normal(dim))
    if identical:
        mats = [mats[0]] * n_agents
        centers = [centers[0]] * n_agents
    return DriftingQuadratic(mats, centers, drift=drift, noise_std=noise_std)


def synthetic_logistic(
    n_agents,
    dim,
    seed,
    batch=1,
    reg=0.05,
    separation=3.0,
    test_size=200,
):
    """Separable Gaussian-blob streams: fresh per-agent batch every round."""
    rng = np.random.default_rng(seed)
    w_true = rng.standard_normal(dim)
    w_true *= separation / (2.0 * np.linalg.norm(w_true))

    def draw(stream, count):
        labels = stream.random(count) < 0.5
        signs = np.where(labels, 1.0, -1.0)
        feats = signs[:, None] * w_true + stream.standard_normal((count, dim))
        return feats, labels.astype(float)

    def batches(i, t):
        return draw(substream(seed, i, t, "data"), batch)

    test = draw(substream(seed, 0, 0, "test"), test_size)
    return OnlineLogistic(n_agents, dim, batches, reg, test_set=test)


def load_logistic_csv(path):
    """CSV with header label,feature_1..feature_m and 0/1 labels."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "label":
            raise ValueError("expected 'label' as the first CSV column")
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.asarray(rows)
    if data.size == 0:
        raise ValueError("empty dataset")
    return data[:, 1:], data[:, 0]


def csv_logistic(path, n_agents, batch=1, reg=0.05, test_fraction=0.2, seed=0):
    """Round-robin shards per agent; rounds cycle through each shard in order."""
    feats, labels = load_logistic_csv(path)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(labels))
    n_test = int(len(labels) * test_fraction)
    test_idx, train_idx = order[:n_test], order[n_test:]
    shards = [train_idx[i::n_agents] for i in range(n_agents)]
    if min(len(s) for s in shards) == 0:
        raise ValueError("not enough samples for the agent count")

    def batches(i, t):
        shard = shards[i]
        idx = [(t * batch + j) % len(shard) for j in range(batch)]
        sel = shard[idx]
        return feats[sel], labels[sel]

    test = (feats[test_idx], labels[test_idx]) if n_test else None
    return OnlineLogistic(n_agents, feats.shape[1], batches, reg, test_set=test)
