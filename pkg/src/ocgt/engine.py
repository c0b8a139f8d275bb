"""Round-by-round execution of the compressed gradient tracking recursions.

Two equivalent implementations are provided: the per-agent form (communicate
compressed residuals, then update decision and tracking variables) and the
stacked matrix form used by the analysis. Under shared seeds their
trajectories must agree to tight tolerance, which the test suite exploits as
a cross-checking oracle.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .compress import compress
from .losses import one_point_estimate
from .streams import substream

DIVERGENCE_NORM = 1e12
FEEDBACK_MODES = ("bandit", "stochastic", "full")

CSV_COLUMNS = [
    "t",
    "regret_increment",
    "cumulative_regret",
    "consensus_error",
    "tracking_error",
    "optimum_gap",
    "p_t",
    "v_t",
    "sigma_bar_sq",
    "bits",
    "test_accuracy",
]


@dataclass
class CommState:
    """Stacked per-agent historical estimates, one row per agent."""

    h_hat: np.ndarray
    h_tilde: np.ndarray


@dataclass
class AgentState:
    x: np.ndarray  # (n, m) decisions
    y: np.ndarray  # (n, m) tracking variables
    comm_x: CommState
    comm_y: CommState
    g_prev: np.ndarray  # (n, m) last gradient estimates


@dataclass(frozen=True)
class RunConfig:
    mixing: "ocgt.graph.MixingMatrix"
    eta: float
    alpha_x: float
    alpha_y: float
    T: int
    feedback: str
    compressor: "ocgt.compress.CompressorSpec"
    seed: int
    smoothing: "ocgt.losses.SmoothingSchedule | None" = None
    x0: np.ndarray | None = None

    def __post_init__(self):
        if not 0.0 < self.eta < 1.0:
            raise ValueError("eta must lie in (0, 1)")
        if not (0.0 < self.alpha_x < 1.0 and 0.0 < self.alpha_y < 1.0):
            raise ValueError("mixing parameters must lie in (0, 1)")
        if self.T < 0:
            raise ValueError("T must be non-negative")
        if self.feedback not in FEEDBACK_MODES:
            raise ValueError(f"unknown feedback mode {self.feedback!r}")
        if self.feedback == "bandit" and self.smoothing is None:
            raise ValueError("bandit feedback needs a smoothing schedule")


@dataclass
class RunRow:
    t: int
    regret_increment: float
    cumulative_regret: float
    consensus_error: float
    tracking_error: float
    optimum_gap: float
    p_t: float
    v_t: float
    sigma_bar_sq: float
    bits: int
    test_accuracy: float | None


@dataclass
class RunRecord:
    rows: list = field(default_factory=list)
    per_agent_regret: np.ndarray | None = None
    total_bits: int = 0
    diverged: bool = False


def dynamic_regret(record):
    if not record.rows:
        return 0.0
    return record.rows[-1].cumulative_regret


def comm_round(theta, comm, w, spec, alpha, rngs):
    """One compressed-communication step for all agents at once.

    theta is (n, m); comm holds the stacked historical estimates. Returns
    (theta_hat, theta_tilde, new CommState, bits transmitted).
    """
    n, m = theta.shape
    q = np.empty_like(theta)
    bits = 0
    for i in range(n):
        res = compress(spec, theta[i] - comm.h_hat[i], rngs[i])
        q[i] = res.vector
        bits += res.bits
    theta_tilde = comm.h_tilde + w @ q
    theta_hat = comm.h_hat + q
    new_comm = CommState(
        h_hat=alpha * theta_hat + (1 - alpha) * comm.h_hat,
        h_tilde=alpha * theta_tilde + (1 - alpha) * comm.h_tilde,
    )
    return theta_hat, theta_tilde, new_comm, bits


def _gradient_block(family, config, k, x_block):
    """G_{i,k} for all agents at their current points, by feedback mode."""
    n, m = x_block.shape
    g = np.empty_like(x_block)
    for i in range(n):
        if config.feedback == "full":
            g[i] = family.grad(i, k, x_block[i])
        elif config.feedback == "stochastic":
            rng = substream(config.seed, i, k, "grad")
            g[i] = family.stoch_grad(i, k, x_block[i], rng)
        else:
            v = config.smoothing.at(k)
            u = substream(config.seed, i, k, "grad").standard_normal(m)
            g[i] = one_point_estimate(family, i, k, x_block[i], v, u)
    return g


def _comm_rngs(config, t, purpose):
    n = config.mixing.n
    return [substream(config.seed, i, t, purpose) for i in range(n)]


def init_state(config, family):
    n, m = config.mixing.n, family.dim
    x0 = np.zeros(m) if config.x0 is None else np.asarray(config.x0, float)
    x = np.tile(x0, (n, 1))
    g = _gradient_block(family, config, 0, x)
    w = config.mixing.w
    hx_hat = np.zeros((n, m))
    hy_hat = np.zeros((n, m))
    return AgentState(
        x=x,
        y=g.copy(),
        comm_x=CommState(h_hat=hx_hat, h_tilde=w @ hx_hat),
        comm_y=CommState(h_hat=hy_hat, h_tilde=w @ hy_hat),
        g_prev=g,
    )


def _metrics_row(family, config, t, state, bits):
    xbar = state.x.mean(axis=0)
    ybar = state.y.mean(axis=0)
    xstar = family.optimum(t)
    f_star = family.global_value(t, xstar)
    inc = family.global_value(t, xbar) - f_star
    reg = family.regularity(t, eval_points=tuple(state.x))
    acc = family.test_accuracy(xbar)
    row = RunRow(
        t=t,
        regret_increment=float(inc),
        cumulative_regret=0.0,  # filled by caller
        consensus_error=float(np.linalg.norm(state.x - xbar)),
        tracking_error=float(np.linalg.norm(state.y - ybar)),
        optimum_gap=float(np.linalg.norm(xbar - xstar)),
        p_t=reg.p,
        v_t=reg.v,
        sigma_bar_sq=reg.sigma_bar_sq,
        bits=bits,
        test_accuracy=acc,
    )
    per_agent_inc = np.array(
        [family.global_value(t, state.x[i]) - f_star for i in range(len(state.x))]
    )
    return row, per_agent_inc


def _diverged(state):
    blocks = (state.x, state.y, state.g_prev)
    return any(
        (not np.all(np.isfinite(b))) or np.linalg.norm(b) > DIVERGENCE_NORM
        for b in blocks
    )


def ocgt_step(state, t, config, family):
    """One round: communicate both channels, update x, compute G, update y."""
    w = config.mixing.w
    eta = config.eta
    x_hat, x_tilde, comm_x, bits_x = comm_round(
        state.x, state.comm_x, w, config.compressor, config.alpha_x,
        _comm_rngs(config, t, "cx"),
    )
    y_hat, y_tilde, comm_y, bits_y = comm_round(
        state.y, state.comm_y, w, config.compressor, config.alpha_y,
        _comm_rngs(config, t, "cy"),
    )
    x_new = state.x - eta * (x_hat - x_tilde + state.y)
    g_new = _gradient_block(family, config, t + 1, x_new)
    y_new = state.y - eta * (y_hat - y_tilde) + (g_new - state.g_prev)
    new_state = AgentState(
        x=x_new, y=y_new, comm_x=comm_x, comm_y=comm_y, g_prev=g_new
    )
    return new_state, bits_x + bits_y


def _run_loop(config, family, step, observer=None):
    """Shared driver: record metrics at t, then advance with `step`.

    observer(t, state, state_next), when given, sees every transition; used
    by the test suite to check per-round identities without re-running.
    """
    record = RunRecord()
    if config.T == 0:
        record.per_agent_regret = np.zeros(config.mixing.n)
        return record
    state = init_state(config, family)
    cumulative = 0.0
    per_agent = np.zeros(config.mixing.n)
    for t in range(config.T):
        state_next, bits = step(state, t)
        if observer is not None:
            observer(t, state, state_next)
        row, per_agent_inc = _metrics_row(family, config, t, state, bits)
        cumulative += row.regret_increment
        row.cumulative_regret = cumulative
        per_agent += per_agent_inc
        record.rows.append(row)
        record.total_bits += bits
        if _diverged(state_next):
            record.diverged = True
            record.rows.append(
                RunRow(
                    t=t + 1,
                    regret_increment=float("nan"),
                    cumulative_regret=float("nan"),
                    consensus_error=float("nan"),
                    tracking_error=float("nan"),
                    optimum_gap=float("nan"),
                    p_t=float("nan"),
                    v_t=float("nan"),
                    sigma_bar_sq=float("nan"),
                    bits=0,
                    test_accuracy=None,
                )
            )
            break
        state = state_next
    record.per_agent_regret = per_agent
    return record


def run(config, family, observer=None):
    """Per-agent form of the full algorithm; returns the metric record."""

    def step(state, t):
        return ocgt_step(state, t, config, family)

    return _run_loop(config, family, step, observer=observer)


def run_matrix_form(config, family, observer=None):
    """Stacked-recursion form: X' = W_eta X - eta Y + eta (I - W)(X - X~).

    Maintains only the local history blocks H^x, H^y; the consensus history
    is implicit (it equals W H when both forms are initialized alike).
    """
    n, m = config.mixing.n, family.dim
    w = config.mixing.w
    eta = config.eta
    w_eta = np.eye(n) - eta * (np.eye(n) - w)
    lap = np.eye(n) - w

    hx = np.zeros((n, m))
    hy = np.zeros((n, m))

    def step(state, t):
        nonlocal hx, hy
        qx = np.empty((n, m))
        qy = np.empty((n, m))
        bits = 0
        rngs_x = _comm_rngs(config, t, "cx")
        rngs_y = _comm_rngs(config, t, "cy")
        for i in range(n):
            rx = compress(config.compressor, state.x[i] - hx[i], rngs_x[i])
            ry = compress(config.compressor, state.y[i] - hy[i], rngs_y[i])
            qx[i], qy[i] = rx.vector, ry.vector
            bits += rx.bits + ry.bits
        x_tilde = qx + hx
        y_tilde = qy + hy
        x_new = w_eta @ state.x - eta * state.y + eta * lap @ (state.x - x_tilde)
        g_new = _gradient_block(family, config, t + 1, x_new)
        y_new = w_eta @ state.y + (g_new - state.g_prev) + eta * lap @ (
            state.y - y_tilde
        )
        hx = (1 - config.alpha_x) * hx + config.alpha_x * x_tilde
        hy = (1 - config.alpha_y) * hy + config.alpha_y * y_tilde
        new_state = AgentState(
            x=x_new,
            y=y_new,
            comm_x=CommState(h_hat=hx, h_tilde=w @ hx),
            comm_y=CommState(h_hat=hy, h_tilde=w @ hy),
            g_prev=g_new,
        )
        return new_state, bits

    return _run_loop(config, family, step, observer=observer)


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def write_run_csv(record, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in record.rows:
            writer.writerow([_fmt(getattr(row, col)) for col in CSV_COLUMNS])
