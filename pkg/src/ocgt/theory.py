"""Numerical step-size certification via the 5x5 error-recursion matrices.

For a parameter instance (smoothness, strong convexity, dimension, agent
count, compression contraction, network spectral gap, mixing and Young
parameters) we build the non-negative matrix that drives the coupled error
recursion -- one variant for one-point bandit feedback, one for stochastic
gradients -- and search for the largest step size whose spectral radius
stays below 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

VARIANTS = ("bandit", "stochastic")
RHO_MARGIN = 1e-6
GRID_MIN = 1e-8
GRID_POINTS = 400


class InvalidParams(ValueError):
    """Raised with the violated inequality named."""


@dataclass(frozen=True)
class AnalysisParams:
    L: float
    mu: float
    m: int
    n: int
    omega: float
    rho_eta: float
    alpha_x: float = 0.5
    alpha_y: float = 0.5
    tau_x: float = 2.0
    tau_y: float = 2.0

    def __post_init__(self):
        if not self.mu > 0:
            raise InvalidParams("mu > 0 violated")
        if not self.L >= self.mu:
            raise InvalidParams("L >= mu violated")
        if not 0.0 <= self.omega <= 1.0:
            raise InvalidParams("omega in [0, 1] violated")
        if not 0.0 <= self.rho_eta < 1.0:
            raise InvalidParams("rho_eta in [0, 1) violated")
        if not (self.tau_x > 1.0 and self.tau_y > 1.0):
            raise InvalidParams("tau_x > 1 and tau_y > 1 violated")
        if self.m < 1 or self.n < 1:
            raise InvalidParams("m >= 1 and n >= 1 violated")

    @property
    def w1(self):
        return 1.0 + self.rho_eta**2

    @property
    def w2(self):
        return 1.0 - self.rho_eta**2

    def b_x(self):
        return self.tau_x * (1.0 - self.alpha_x * (1.0 - self.omega))

    def b_y(self):
        return self.tau_y * (1.0 - self.alpha_y * (1.0 - self.omega))

    def check_contractive(self):
        if self.b_x() >= 1.0:
            raise InvalidParams(
                f"b_x = tau_x[1 - alpha_x(1 - omega)] = {self.b_x():.6g} >= 1"
            )
        if self.b_y() >= 1.0:
            raise InvalidParams(
                f"b_y = tau_y[1 - alpha_y(1 - omega)] = {self.b_y():.6g} >= 1"
            )


def bandit_m_l(L, m):
    """Second-moment constant of the one-point estimator (cubic in m)."""
    return L**2 * (0.5 * (m + 6) ** 3 + 0.25 * (m + 3) ** 3)


def _bandit_coeffs(p):
    L, mu, m, n = p.L, p.mu, p.m, p.n
    w1, w2 = p.w1, p.w2
    a_x = 12 * p.tau_x / (p.tau_x - 1) * (1.0 / 12.0 + L**2 * (8 * m + 33))
    a_y = 3 * p.tau_y / (p.tau_y - 1)
    c = {
        "c1": (30 * (m + 4) * L**2 * w1 + 2 * w1) / w2,
        "c2": (96 * w1 * w2 * L**2 + 16 * (m + 4) * w1**2) / w2**2,
        "c3": 20 * n * L**2 * (m + 4) * w1 / w2,
        "c4": (64 * w1**2 * (m + 4) + 96 * w1 * w2) / w2**2 * L**2 * p.omega,
        "c5": L / (4 * n) * ((4 * m + 5) / math.sqrt(m + 4) + (4 * m + 4) * L / mu),
        "c6": (15 * (m + 4) * L**2 + 1) / 6 * a_y,
        "c7": (w1 + w2) * a_y / w2,
        "c8": 5 * n * L**2 * (m + 4) * a_y / 3,
        "a_x": a_x,
        "a_y": a_y,
        "b_x": p.b_x(),
        "b_y": p.b_y(),
    }
    return c


def _stochastic_coeffs(p):
    L, mu, n = p.L, p.mu, p.n
    w1, w2 = p.w1, p.w2
    c = {
        "c1p": 2 * w1 / w2,
        "c2p": 96 * w1 * L**2 / w2,
        "c3p": (8 * L + 1) / (mu * math.sqrt(n)),
        "a_x": 12 * p.tau_x / (p.tau_x - 1),
        "a_y": 6 * p.tau_y / (p.tau_y - 1),
        "b_x": p.b_x(),
        "b_y": p.b_y(),
    }
    return c


def build_matrix(params, eta, variant, third_diag_alt=False):
    """The 5x5 recursion matrix at step size eta.

    third_diag_alt switches the bandit variant's third diagonal entry from
    1 - 2*mu*eta/3 to 1 - 3*mu*eta/2 for sensitivity checks.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if eta <= 0:
        raise ValueError("eta must be positive")
    params.check_contractive()
    w1, w2 = params.w1, params.w2
    mu, L, n, om = params.mu, params.L, params.n, params.omega

    if variant == "bandit":
        c = _bandit_coeffs(params)
        diag3 = 1 - 3 * mu * eta / 2 if third_diag_alt else 1 - 2 * mu * eta / 3
        g = np.array(
            [
                [w1 / 2, 2 * w1 * eta**2 / w2, 0, 8 * om * w1 * eta**2 / w2, 0],
                [
                    c["c1"],
                    w1 / 2 + c["c2"] * eta**2,
                    c["c3"],
                    c["c4"] * eta**2,
                    8 * w1 * om * eta**2 / w2,
                ],
                [c["c5"] * eta, 0, diag3, 0, 0],
                [
                    2 * c["a_x"],
                    c["a_x"] * eta**2,
                    n * c["a_x"],
                    c["b_x"] + c["a_x"] * om * eta**2,
                    0,
                ],
                [
                    c["c6"],
                    c["c7"],
                    c["c8"],
                    c["c7"] * om,
                    c["b_y"] + c["a_y"] * om * eta,
                ],
            ]
        )
    else:
        c = _stochastic_coeffs(params)
        g = np.array(
            [
                [w1 / 2, c["c1p"] * eta**2, 0, 4 * c["c1p"] * om * eta**2, 0],
                [
                    192 * w1 * L**2 / w2,
                    w1 / 2 + 96 * w1 * L**2 * eta**2 / w2,
                    96 * n * w1 / w2,
                    c["c2p"] * om * eta**2,
                    4 * c["c1p"] * om * eta**2,
                ],
                [c["c3p"] * eta, 0, 1 - 3 * mu * eta / 2, 0, 0],
                [
                    2 * c["a_x"],
                    c["a_x"] * eta**2,
                    n * c["a_x"],
                    c["b_x"] + c["a_x"] * om * eta,
                    0,
                ],
                [
                    48 * c["a_y"] * L**2,
                    25 * c["a_y"],
                    24 * n * c["a_y"] * L**2,
                    24 * c["a_y"] * om * eta * L**2,
                    c["b_y"] + c["a_y"] * om * eta,
                ],
            ]
        )
    return g


def diag_thresholds(params, variant):
    """Step-size caps under which every diagonal entry lies in (0, 1)."""
    params.check_contractive()
    mu, L, om = params.mu, params.L, params.omega
    w1, w2 = params.w1, params.w2
    inf = float("inf")
    if variant == "bandit":
        c = _bandit_coeffs(params)
        eta1 = math.sqrt(w2 / (2 * c["c2"]))
        eta2 = 2 / (3 * mu)
        eta3 = math.sqrt((1 - c["b_x"]) / (2 * c["a_x"] * om)) if om > 0 else inf
        eta4 = (1 - c["b_y"]) / (c["a_y"] * om) if om > 0 else inf
    else:
        c = _stochastic_coeffs(params)
        # G22 < 1 requires eta^2 < w2^2 / (192 w1 L^2)
        eta1 = w2 / math.sqrt(192 * w1 * L**2)
        eta2 = 2 / (3 * mu)
        eta3 = (1 - c["b_x"]) / (c["a_x"] * om) if om > 0 else inf
        eta4 = (1 - c["b_y"]) / (c["a_y"] * om) if om > 0 else inf
    return eta1, eta2, eta3, eta4


def spectral_radius(mat, tol=1e-10, max_iter=500):
    """Perron root of a non-negative matrix by shifted power iteration.

    Shifting to I + M makes the Perron root strictly dominant even when
    eigenvalues tie in magnitude. Repeatedly squaring the (normalized)
    shifted matrix squares the eigenvalue-gap ratio each time, so tiny
    spectral gaps converge in a few dozen squarings instead of many
    thousands of plain iterations; the root is then read off through a
    Rayleigh quotient with the original shifted matrix.
    """
    mat = np.asarray(mat, dtype=float)
    if np.any(mat < 0):
        raise ValueError("matrix must be non-negative")
    shifted = np.eye(mat.shape[0]) + mat
    b = shifted.copy()
    for _ in range(60):
        scale = np.max(np.abs(b))
        if scale == 0.0:
            return 0.0
        b = b / scale
        b = b @ b
    v = np.ones(mat.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        bv = b @ v
        norm = np.linalg.norm(bv)
        if norm == 0.0:
            return 0.0
        v = bv / norm
        new_lam = float(v @ (shifted @ v))
        if abs(new_lam - lam) <= tol * max(abs(new_lam), 1.0):
            break
        lam = new_lam
    else:
        new_lam = lam
    return max(new_lam - 1.0, 0.0)


@dataclass(frozen=True)
class Certification:
    variant: str
    eta_star: float | None
    rho: float | None
    thresholds: tuple
    certified: bool
    reason: str = ""


def find_eta_star(params, variant, grid_points=GRID_POINTS, third_diag_alt=False):
    """Largest grid step size with spectral radius below 1 - 1e-6.

    The grid is logarithmic on [1e-8, min(diagonal thresholds)]. A result
    with certified=False (no admissible eta) is a certification failure for
    the instance, not an exception.
    """
    params.check_contractive()
    thresholds = diag_thresholds(params, variant)
    eta_max = min(t for t in thresholds if math.isfinite(t))
    if eta_max <= GRID_MIN:
        return Certification(
            variant, None, None, thresholds, False, "threshold interval empty"
        )
    grid = np.geomspace(GRID_MIN, eta_max * (1 - 1e-12), grid_points)
    best = None
    for eta in grid:
        rho = spectral_radius(
            build_matrix(params, float(eta), variant, third_diag_alt=third_diag_alt)
        )
        if rho < 1.0 - RHO_MARGIN and (best is None or eta > best[0]):
            best = (float(eta), rho)
    if best is None:
        return Certification(
            variant, None, None, thresholds, False, "no admissible eta on grid"
        )
    return Certification(variant, best[0], best[1], thresholds, True)
