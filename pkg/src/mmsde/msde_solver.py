"""Numerical schemes for multivalued SDEs and their skeletons.

The main scheme is resolvent (prox) Euler::

    Y_n     = X_n + b(X_n) dt + sigma(X_n) (hdot_n dt + sqrt(eps) dW_n)
    X_{n+1} = J_dt(Y_n) = (1 + dt A)^{-1} Y_n
    dK_n    = Y_n - X_{n+1}

so ``dK_n / dt`` lies in ``A(X_{n+1})``.  For indicators of half-spaces an
additional ``"bridge"`` scheme reflects the Brownian bridge inside each step
exactly (it samples the within-step minimum), which removes the O(sqrt(dt))
monitoring bias of the prox scheme when coefficients are constant.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mmsde.coefficients import Coefficient, coefficient_from_dict
from mmsde.csvio import write_rows
from mmsde.errors import GridMismatch, NotInGraph, OutsideDomain, StabilityViolation
from mmsde.monotone_ops import (
    HalfSpace,
    IndicatorSubdifferential,
    MonotoneOp,
    ZeroOp,
    op_from_dict,
)
from mmsde.paths import Control, Path, TimeGrid, brownian_values
from mmsde.streams import stream

DOMAIN_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """dX in b(X) dt + sqrt(eps) sigma(X) dW - A(X) dt, X(0) = x0."""

    m: int
    k: int
    drift: Coefficient
    diffusion: Coefficient
    op: MonotoneOp
    x0: np.ndarray

    def __post_init__(self):
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        if x0.shape != (self.m,):
            raise ValueError(f"x0 must have shape ({self.m},), got {x0.shape}")
        x0.setflags(write=False)
        object.__setattr__(self, "x0", x0)
        if not bool(np.all(self.op.in_domain_closure(x0, DOMAIN_TOL))):
            raise OutsideDomain(f"initial point {x0.tolist()} is outside the closure of D(A)")
        if tuple(self.drift.shape) != (self.m,):
            raise ValueError(f"drift has shape {self.drift.shape}, expected ({self.m},)")
        if tuple(self.diffusion.shape) != (self.m, self.k):
            raise ValueError(f"diffusion has shape {self.diffusion.shape}, expected ({self.m}, {self.k})")

    def with_x0(self, x0) -> "ModelSpec":
        return ModelSpec(self.m, self.k, self.drift, self.diffusion, self.op, x0)

    def with_op(self, op: MonotoneOp) -> "ModelSpec":
        return ModelSpec(self.m, self.k, self.drift, self.diffusion, op, self.x0)

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "k": self.k,
            "drift": self.drift.to_dict(),
            "diffusion": self.diffusion.to_dict(),
            "operator": self.op.to_dict(),
            "x0": self.x0.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        m, k = int(d["m"]), int(d["k"])
        return cls(
            m,
            k,
            coefficient_from_dict(d["drift"], (m,)),
            coefficient_from_dict(d["diffusion"], (m, k)),
            op_from_dict(d.get("operator", {"kind": "zero"})),
            d["x0"],
        )


@dataclass(frozen=True, eq=False)
class ReflectedSolution:
    """Paired paths (X, K) and the running total variation |K|_0^{t_n}."""

    X: Path
    K: Path
    k_variation: np.ndarray

    @property
    def grid(self) -> TimeGrid:
        return self.X.grid

    @property
    def dK(self) -> np.ndarray:
        return np.diff(self.K.values, axis=0)

    def to_csv(self, path) -> None:
        m = self.X.dim
        cols = ["t"] + [f"x_{i + 1}" for i in range(m)] + [f"k_{i + 1}" for i in range(m)] + ["kvar"]
        data = np.column_stack([self.X.times, self.X.values, self.K.values, self.k_variation])
        write_rows(path, cols, data)


def half_line_model(x0: float = 0.0, drift: float = 0.0, sigma: float = 1.0) -> ModelSpec:
    """1-D model reflected at 0: dX = drift dt + sigma dW - d(I_{R+})(X) dt."""
    from mmsde.coefficients import Constant

    return ModelSpec(1, 1, Constant([drift]), Constant([[sigma]]), IndicatorSubdifferential(HalfSpace(0)), [x0])


def free_model(m: int = 1, x0=None) -> ModelSpec:
    """b = 0, sigma = I, A = 0: standard Brownian motion started at x0."""
    from mmsde.coefficients import identity_diffusion, zero_drift

    return ModelSpec(m, m, zero_drift(m), identity_diffusion(m), ZeroOp(), np.zeros(m) if x0 is None else x0)


# ---------------------------------------------------------------------------
# Batched integrators
# ---------------------------------------------------------------------------


def _bridge_axis(op: MonotoneOp) -> int:
    if isinstance(op, IndicatorSubdifferential) and isinstance(op.set, HalfSpace):
        return op.set.axis
    raise ValueError("the bridge scheme is only available for half-space indicators")


def integrate(
    model: ModelSpec,
    dts: np.ndarray,
    x0: np.ndarray,
    eps: float = 0.0,
    dW: np.ndarray | None = None,
    hdrive: np.ndarray | None = None,
    scheme: str = "prox",
    uniforms: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Run the scheme for a batch of B trajectories.

    Parameters
    ----------
    dts : (N,) step sizes.
    x0 : (B, m) initial points.
    dW : (B, N, k) Brownian increments, or None for eps = 0.
    hdrive : (N, k) or (B, N, k) control increments ``hdot_n * dt_n``.
    uniforms : (B, N) uniforms in (0, 1], needed by the bridge scheme.

    Returns ``X`` of shape (B, N+1, m) and ``dK`` of shape (B, N, m).
    """
    dts = np.asarray(dts, dtype=float)
    x = np.array(x0, dtype=float)
    B, N, m, k = x.shape[0], len(dts), model.m, model.k
    X = np.empty((B, N + 1, m))
    dK = np.empty((B, N, m))
    X[:, 0] = x
    sq = np.sqrt(eps) if eps > 0 else 0.0
    if scheme == "bridge":
        axis = _bridge_axis(model.op)
        if uniforms is None:
            raise ValueError("bridge scheme needs uniforms")
    elif scheme != "prox":
        raise ValueError(f"unknown scheme {scheme!r}")
    for n in range(N):
        dt = dts[n]
        drive = np.zeros((B, k))
        if hdrive is not None:
            drive = drive + (hdrive[n] if hdrive.ndim == 2 else hdrive[:, n])
        if sq:
            drive = drive + sq * dW[:, n]
        sig = model.diffusion(x)
        y = x + model.drift(x) * dt + np.einsum("bij,bj->bi", sig, drive)
        if scheme == "prox":
            x_new = model.op.resolvent(dt, y)
        else:
            a, c = x[:, axis], y[:, axis]
            var = eps * np.sum(sig[:, axis, :] ** 2, axis=-1) * dt
            # minimum of the Brownian bridge from a to c over the step
            low = 0.5 * (a + c - np.sqrt((c - a) ** 2 - 2.0 * var * np.log(uniforms[:, n])))
            x_new = y.copy()
            x_new[:, axis] = c + np.maximum(0.0, -low)
        dK[:, n] = y - x_new
        X[:, n + 1] = x_new
        x = x_new
    return X, dK


def integrate_yosida(
    model: ModelSpec,
    alpha: float,
    dts: np.ndarray,
    x0: np.ndarray,
    eps: float = 0.0,
    dW: np.ndarray | None = None,
    hdrive: np.ndarray | None = None,
) -> np.ndarray:
    """Explicit Euler for dX = b dt + sigma (hdot dt + sqrt(eps) dW) - A^alpha(X) dt."""
    dts = np.asarray(dts, dtype=float)
    if np.max(dts) > alpha / 2 * (1 + 1e-12):
        raise StabilityViolation(f"dt={np.max(dts):.3g} exceeds alpha/2={alpha / 2:.3g}")
    x = np.array(x0, dtype=float)
    B, N, k = x.shape[0], len(dts), model.k
    X = np.empty((B, N + 1, model.m))
    X[:, 0] = x
    sq = np.sqrt(eps) if eps > 0 else 0.0
    for n in range(N):
        dt = dts[n]
        drive = np.zeros((B, k))
        if hdrive is not None:
            drive = drive + (hdrive[n] if hdrive.ndim == 2 else hdrive[:, n])
        if sq:
            drive = drive + sq * dW[:, n]
        yos = (x - model.op.resolvent(alpha, x)) / alpha
        x = x + (model.drift(x) - yos) * dt + np.einsum("bij,bj->bi", model.diffusion(x), drive)
        X[:, n + 1] = x
    return X


# ---------------------------------------------------------------------------
# Single-trajectory front ends
# ---------------------------------------------------------------------------


def _resolve_inputs(model, eps, h, W, grid):
    if grid is None:
        if h is not None:
            grid = h.grid
        elif isinstance(W, Path):
            grid = W.grid
        else:
            raise ValueError("a grid is required when neither h nor a Brownian path is given")
    if h is not None and h.grid != grid:
        raise GridMismatch("control grid differs from simulation grid")
    if h is not None and h.dim != model.k:
        raise ValueError(f"control dimension {h.dim} != noise dimension {model.k}")
    seed = None
    dW = None
    if eps > 0:
        if W is None:
            raise ValueError("eps > 0 needs a Brownian path or a seed")
        if isinstance(W, Path):
            if W.grid != grid:
                raise GridMismatch("Brownian path grid differs from simulation grid")
            vals = W.values
        else:
            seed = int(W)
            vals = brownian_values(model.k, grid, seed)
        dW = np.diff(vals, axis=0)[None]
    hdrive = None if h is None else h.hdot * grid.dt
    return grid, dW, hdrive, seed


def simulate(
    model: ModelSpec,
    eps: float = 0.0,
    h: Control | None = None,
    W: Path | int | None = None,
    grid: TimeGrid | None = None,
    scheme: str = "prox",
    uniforms: np.ndarray | None = None,
) -> ReflectedSolution:
    """Simulate the (controlled) MSDE; ``W`` is a Brownian path or a seed."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    grid, dW, hdrive, seed = _resolve_inputs(model, eps, h, W, grid)
    if scheme == "bridge" and uniforms is None:
        if seed is None:
            raise ValueError("bridge scheme with an explicit path needs uniforms")
        uniforms = 1.0 - stream(seed, "U").random((1, grid.N))
    X, dK = integrate(model, grid.steps, model.x0[None], eps, dW, hdrive, scheme,
                      None if uniforms is None else np.asarray(uniforms).reshape(1, -1))
    K = np.vstack([np.zeros((1, model.m)), np.cumsum(dK[0], axis=0)])
    kvar = np.concatenate([[0.0], np.cumsum(np.linalg.norm(dK[0], axis=1))])
    return ReflectedSolution(Path(grid, X[0]), Path(grid, K), kvar)


def simulate_yosida(
    model: ModelSpec,
    alpha: float,
    eps: float = 0.0,
    h: Control | None = None,
    W: Path | int | None = None,
    grid: TimeGrid | None = None,
) -> Path:
    """Penalized (Yosida) approximation; explicit, requires dt <= alpha / 2."""
    grid, dW, hdrive, _ = _resolve_inputs(model, eps, h, W, grid)
    X = integrate_yosida(model, alpha, grid.steps, model.x0[None], eps, dW, hdrive)
    return Path(grid, X[0])


def reflect_halfspace(free: Path, axis: int = 0) -> Path:
    """Skorohod map of the half-space {x[axis] >= 0}: w + (running negative infimum) e_axis."""
    v = free.values.copy()
    v[:, axis] = reflect_values(v[:, axis])
    return Path(free.grid, v)


def reflect_values(w: np.ndarray) -> np.ndarray:
    """w + max(0, -min_{s<=t} w(s)) along the last axis."""
    return w + np.maximum(0.0, -np.minimum.accumulate(w, axis=-1))


# ---------------------------------------------------------------------------
# Solution checks
# ---------------------------------------------------------------------------


def check_vi(sol: ReflectedSolution, model: ModelSpec, a, beta, tol: float = 1e-10) -> float:
    """min_n sum_{j<=n} <X_{j+1} - a, dK_j - beta dt> for a constant pair (a, beta) in Gr(A).

    Each regulator increment dK_j is paired with the post-step state X_{j+1},
    since the resolvent step puts dK_j / dt in A(X_{j+1}).
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    # (a, beta) in Gr(A)  <=>  J_1(a + beta) = a
    if np.linalg.norm(model.op.resolvent(1.0, (a + beta)[None])[0] - a) > tol * (1 + np.linalg.norm(a)):
        raise NotInGraph(f"({a.tolist()}, {beta.tolist()}) is not in the graph of A")
    terms = np.sum((sol.X.values[1:] - a) * (sol.dK - beta * sol.grid.dt), axis=1)
    return float(np.min(np.cumsum(terms)))


def check_two_solution_monotonicity(s1: ReflectedSolution, s2: ReflectedSolution) -> float:
    """min_n <X_{n+1} - X~_{n+1}, dK_n - dK~_n>; nonnegative for monotone A."""
    if s1.grid != s2.grid or s1.X.dim != s2.X.dim:
        raise GridMismatch("solutions live on different grids")
    terms = np.sum((s1.X.values[1:] - s2.X.values[1:]) * (s1.dK - s2.dK), axis=1)
    return float(np.min(terms))


@dataclass
class SupportReport:
    interior_mass: float
    total_mass: float
    passed: bool


def boundary_support_check(sol: ReflectedSolution, cset, tol: float = 1e-9, rel: float = 1e-8) -> SupportReport:
    """Regulator variation spent away from the boundary (should vanish for indicators)."""
    inc = np.linalg.norm(sol.dK, axis=1)
    away = cset.boundary_distance(sol.X.values[1:]) > tol
    interior, total = float(np.sum(inc[away])), float(np.sum(inc))
    return SupportReport(interior, total, interior <= rel * total if total > 0 else interior == 0.0)
