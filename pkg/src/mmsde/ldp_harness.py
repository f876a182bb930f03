"""Monte Carlo estimates of small-noise probabilities and related utilities.

Replicas are processed in blocks of ``streams.BLOCK_SIZE``; block ``b`` draws
all its randomness from streams keyed by ``(seed, tag, b)``.  Blocks return
integer hit counts, so totals do not depend on how blocks are scheduled.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from mmsde.errors import BadEta, BadG0
from mmsde.monotone_ops import ConvexSet
from mmsde.msde_solver import ModelSpec, integrate
from mmsde.parallel import pmap
from mmsde.paths import Control, TimeGrid
from mmsde.rate_function import skeleton
from mmsde.streams import BLOCK_SIZE, block_ranges, stream

# ---------------------------------------------------------------------------
# events: vectorized predicates on (X, W) of shapes (B, N+1, m), (B, N+1, k)
# ---------------------------------------------------------------------------


class Event:
    def __call__(self, X: np.ndarray, W: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class Always(Event):
    def __call__(self, X, W):
        return np.ones(X.shape[0], dtype=bool)


@dataclass(frozen=True)
class Never(Event):
    def __call__(self, X, W):
        return np.zeros(X.shape[0], dtype=bool)


@dataclass(frozen=True)
class EndpointIn(Event):
    """X(T) lies in a closed convex set."""

    target: ConvexSet
    tol: float = 0.0

    def __call__(self, X, W):
        return self.target.contains(X[:, -1], self.tol)


@dataclass(frozen=True, eq=False)
class Tube(Event):
    """sup |scale W - h| < eta and sup |X - f| > alpha, both over grid nodes."""

    h: np.ndarray  # (N+1, k)
    f: np.ndarray  # (N+1, m)
    alpha: float
    eta: float
    scale: float

    def __call__(self, X, W):
        near = np.max(np.linalg.norm(self.scale * W - self.h, axis=-1), axis=-1) < self.eta
        far = np.max(np.linalg.norm(X - self.f, axis=-1), axis=-1) > self.alpha
        return near & far


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------


@dataclass
class MCResult:
    estimate: float
    std_error: float
    n_replicas: int
    seed: int
    hits: int

    def to_dict(self) -> dict:
        return {"estimate": self.estimate, "std_error": self.std_error,
                "n_replicas": self.n_replicas, "seed": self.seed, "hits": self.hits}


def _block_hits(job, model: ModelSpec, eps: float, event: Event, grid: TimeGrid, seed: int,
                tag: str, scheme: str) -> int:
    b, size = job
    rng = stream(seed, tag, b)
    dW = rng.standard_normal((size, grid.N, model.k)) * np.sqrt(grid.dt)
    uniforms = 1.0 - rng.random((size, grid.N)) if scheme == "bridge" else None
    x0 = np.broadcast_to(model.x0, (size, model.m))
    X, _ = integrate(model, grid.steps, x0, eps, dW, None, scheme, uniforms)
    W = np.concatenate([np.zeros((size, 1, model.k)), np.cumsum(dW, axis=1)], axis=1)
    return int(np.count_nonzero(event(X, W)))


def mc_probability(
    model: ModelSpec,
    eps: float,
    event: Event,
    n: int,
    seed: int,
    grid: TimeGrid,
    scheme: str = "prox",
    workers: int = 1,
    tag: str = "mc",
    block_size: int = BLOCK_SIZE,
) -> MCResult:
    """Bernoulli mean of ``event`` over n replicas of the eps-noise solution."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not eps > 0:
        raise ValueError("eps must be > 0")
    fn = functools.partial(_block_hits, model=model, eps=eps, event=event, grid=grid,
                           seed=seed, tag=tag, scheme=scheme)
    hits = sum(pmap(fn, block_ranges(n, block_size), workers))
    p = hits / n
    return MCResult(p, float(np.sqrt(p * (1 - p) / n)), n, seed, hits)


def clopper_pearson_upper(hits: int, n: int, level: float = 0.95) -> float:
    """Upper end of the two-sided Clopper-Pearson interval."""
    if hits >= n:
        return 1.0
    return float(stats.beta.ppf(1 - (1 - level) / 2, hits + 1, n - hits))


@dataclass
class ScanRow:
    epsilon: float
    phat: float
    stderr: float
    eps_log_p: float
    ci_lo: float
    ci_hi: float
    zero_hits: bool
    cp_upper: float  # eps * log of the Clopper-Pearson upper bound on p


SCAN_COLUMNS = ("epsilon", "phat", "stderr", "eps_log_p", "ci_lo", "ci_hi")


@dataclass
class ScanResult:
    rows: list[ScanRow]
    n: int
    seed: int
    trend_intercept: float  # least-squares extrapolation of eps log p to eps = 0
    reference: float | None = None  # -inf I from the optimizer, if supplied
    extra: dict = field(default_factory=dict)

    @property
    def all_zero(self) -> bool:
        return all(r.zero_hits for r in self.rows)

    def table(self) -> np.ndarray:
        return np.array([[getattr(r, c) for c in SCAN_COLUMNS] for r in self.rows], dtype=float)

    def summary(self) -> dict:
        return {
            "n": self.n,
            "seed": self.seed,
            "trend_intercept": self.trend_intercept,
            "reference": self.reference,
            "zero_hit_epsilons": [r.epsilon for r in self.rows if r.zero_hits],
            "cp_upper": {repr(r.epsilon): r.cp_upper for r in self.rows},
            **self.extra,
        }


def ldp_scan(
    model: ModelSpec,
    event: Event,
    eps_grid,
    n: int,
    seed: int,
    grid: TimeGrid,
    scheme: str = "prox",
    workers: int = 1,
    z: float = 1.96,
    reference: float | None = None,
) -> ScanResult:
    """eps log p-hat along a decreasing eps grid with delta-method intervals.

    The interval on eps log p is eps log p-hat +- z eps se / p-hat.  Rows with no
    hits are flagged and carry eps log of the Clopper-Pearson upper bound.
    """
    eps_grid = [float(e) for e in eps_grid]
    if any(e <= 0 for e in eps_grid) or any(a <= b for a, b in zip(eps_grid, eps_grid[1:])):
        raise ValueError("eps grid must be positive and strictly decreasing")
    rows = []
    for i, eps in enumerate(eps_grid):
        r = mc_probability(model, eps, event, n, seed, grid, scheme, workers, tag=f"scan/{i}")
        cp = eps * np.log(clopper_pearson_upper(r.hits, n))
        if r.hits == 0:
            rows.append(ScanRow(eps, 0.0, 0.0, float("nan"), float("nan"), float("nan"), True, cp))
            continue
        elp = eps * np.log(r.estimate)
        half = z * eps * r.std_error / r.estimate
        rows.append(ScanRow(eps, r.estimate, r.std_error, elp, elp - half, elp + half, False, cp))
    ok = [(r.epsilon, r.eps_log_p) for r in rows if not r.zero_hits]
    if len(ok) >= 2:
        e, v = np.array(ok).T
        intercept = float(np.polyfit(e, v, 1)[1])
    else:
        intercept = float("nan")
    return ScanResult(rows, n, seed, intercept, reference)


def fw_tube_estimate(
    model: ModelSpec,
    h: Control,
    alpha: float,
    eta: float,
    eps: float,
    n: int,
    seed: int,
    scheme: str = "prox",
    workers: int = 1,
) -> MCResult:
    """P{ sup|sqrt(eps) W - h| < eta, sup|X^eps - X^h| > alpha } on the control's grid.

    The noise amplitude of the model is sqrt(eps), so the tube around h is
    measured for sqrt(eps) W.
    """
    if not alpha > 0:
        raise ValueError("alpha must be > 0")
    if eta <= 0:
        return MCResult(0.0, 0.0, n, seed, 0)
    f = skeleton(model, h).values
    event = Tube(h.path().values, f, float(alpha), float(eta), float(np.sqrt(eps)))
    return mc_probability(model, eps, event, n, seed, h.grid, scheme, workers, tag="tube")


# ---------------------------------------------------------------------------
# moduli
# ---------------------------------------------------------------------------


def rho_eta(x, eta: float):
    """x log(1/x) up to eta, continued by its tangent line beyond eta."""
    if not 0 < eta < np.exp(-1):
        raise BadEta(f"eta must lie in (0, 1/e), got {eta}")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("rho_eta is defined for x >= 0")
    le = np.log(1 / eta)
    with np.errstate(divide="ignore", invalid="ignore"):
        low = np.where(x > 0, -x * np.log(np.where(x > 0, x, 1.0)), 0.0)
    high = eta * le + (le - 1) * (x - eta)
    out = np.where(x <= eta, low, high)
    return float(out) if out.ndim == 0 else out


def bihari_bound(g0: float, q, t: float, n: int = 1025) -> float:
    """g0 ** exp(-int_0^t q) with the trapezoid rule.

    ``q`` is a callable or a table ``(times, values)``; tables are integrated
    on their own nodes up to t (linear interpolation at t).
    """
    if not 0 < g0 < 1:
        raise BadG0(f"g0 must lie in (0, 1), got {g0}")
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0:
        return float(g0)
    if callable(q):
        ts = np.linspace(0.0, t, n)
        qs = np.broadcast_to(np.asarray(q(ts), dtype=float), ts.shape)
    else:
        tt, qq = (np.asarray(a, dtype=float) for a in q)
        if tt[0] > 0 or tt[-1] < t:
            raise ValueError("table does not cover [0, t]")
        inside = tt < t
        ts = np.append(tt[inside], t)
        qs = np.append(qq[inside], np.interp(t, tt, qq))
    if np.any(qs < 0):
        raise ValueError("q must be nonnegative")
    return float(g0 ** np.exp(-np.trapezoid(qs, ts)))
