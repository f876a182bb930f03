"""Freidlin-Wentzell rate function: skeleton map, energies and their minimization.

All optimizers return feasible controls, so every finite value is an upper
bound on the true infimum over piecewise-constant controls.
"""
from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from mmsde.errors import NotInterior, OptimizerDiverged, SingularDiffusion
from mmsde.monotone_ops import ConvexSet, HalfSpace, IndicatorSubdifferential
from mmsde.msde_solver import ModelSpec, integrate, reflect_values, simulate
from mmsde.parallel import pmap
from mmsde.paths import Control, Path, TimeGrid, cm_norm
from mmsde.streams import stream

log = logging.getLogger(__name__)


@dataclass
class RateResult:
    value: float
    minimizer: Control | None
    residual: float
    iterations: int
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "value": self.value if np.isfinite(self.value) else "inf",
            "residual": self.residual if np.isfinite(self.residual) else "inf",
            "iterations": self.iterations,
            "message": self.message,
        }


@dataclass
class RateConfig:
    control_steps: int | None = 8  # None: one control value per simulation step
    restarts: int = 8
    seed: int = 0
    feasibility_tol: float = 1e-3
    residual_tol: float = 1e-6
    max_iter: int = 500
    init_scale: float = 1.0
    workers: int = 1
    # path tracking
    penalty_start: float = 10.0
    max_doublings: int = 40


def energy(h: Control) -> float:
    """Half the squared Cameron-Martin norm."""
    return 0.5 * cm_norm(h) ** 2


def skeleton(model: ModelSpec, h: Control) -> Path:
    """Deterministic controlled inclusion dX in b dt + sigma hdot dt - A(X) dt."""
    return simulate(model, 0.0, h=h).X


def skeleton_batch(model: ModelSpec, grid: TimeGrid, hdots: np.ndarray) -> np.ndarray:
    """Skeleton paths for a batch of controls of shape (B, N, k) -> (B, N+1, m)."""
    B = hdots.shape[0]
    X, _ = integrate(model, grid.steps, np.broadcast_to(model.x0, (B, model.m)), 0.0, None, hdots * grid.dt)
    return X


def free_skeleton_batch(model: ModelSpec, grid: TimeGrid, hdots: np.ndarray, axis: int = 0):
    """Unconstrained path X^ with coefficients evaluated at its Skorohod image.

    dX^ = b(Gamma_t(X^)) dt + sigma(Gamma_t(X^)) hdot dt; returns (X^, Gamma(X^)).
    """
    B, N = hdots.shape[0], grid.N
    xh = np.array(np.broadcast_to(model.x0, (B, model.m)), dtype=float)
    free = np.empty((B, N + 1, model.m))
    refl = np.empty_like(free)
    free[:, 0] = xh
    run_min = np.minimum(xh[:, axis], 0.0)
    g = xh.copy()
    g[:, axis] -= run_min
    refl[:, 0] = g
    for n in range(N):
        xh = xh + model.drift(g) * grid.dt + np.einsum("bij,bj->bi", model.diffusion(g), hdots[:, n]) * grid.dt
        run_min = np.minimum(run_min, xh[:, axis])
        g = xh.copy()
        g[:, axis] -= run_min
        free[:, n + 1] = xh
        refl[:, n + 1] = g
    return free, refl


# ---------------------------------------------------------------------------
# control parameterization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Param:
    grid: TimeGrid
    k: int
    steps: int

    @classmethod
    def make(cls, grid: TimeGrid, k: int, steps: int | None):
        steps = grid.N if steps is None else min(steps, grid.N)
        if grid.N % steps:
            raise ValueError(f"control steps {steps} must divide the grid size {grid.N}")
        return cls(grid, k, steps)

    @property
    def size(self) -> int:
        return self.steps * self.k

    @property
    def dtc(self) -> float:
        return self.grid.T / self.steps

    def hdots(self, V: np.ndarray) -> np.ndarray:
        V = np.atleast_2d(V).reshape(-1, self.steps, self.k)
        return np.repeat(V, self.grid.N // self.steps, axis=1)

    def control(self, v: np.ndarray) -> Control:
        return Control(self.grid, self.hdots(v)[0])

    def energy(self, v):
        return 0.5 * float(np.sum(v * v)) * self.dtc

    def energy_grad(self, v):
        return v * self.dtc


def _fd_jacobian(fun_batch, v: np.ndarray, f0: np.ndarray | None = None) -> np.ndarray:
    """Forward-difference Jacobian of a batched vector function, all perturbations in one batch."""
    n = v.size
    step = np.sqrt(np.finfo(float).eps) * np.maximum(1.0, np.abs(v))
    V = np.vstack([v, v + np.diag(step)])
    F = fun_batch(V).reshape(n + 1, -1)
    base = F[0] if f0 is None else np.ravel(f0)
    return ((F[1:] - base) / step[:, None]).T


# ---------------------------------------------------------------------------
# endpoint problems
# ---------------------------------------------------------------------------


def _signed_distance(cset: ConvexSet, x: np.ndarray) -> np.ndarray:
    d = cset.distance(x)
    return np.where(d > 0, d, -cset.boundary_distance(x))


def _endpoint_fun(model, param, target):
    def fun(V):
        X = skeleton_batch(model, param.grid, param.hdots(V))
        return _signed_distance(target, X[:, -1])

    return fun


def _feasibility_run(r: int, model, param, target, cfg) -> tuple[float, np.ndarray, int]:
    """Minimize the squared endpoint distance from restart ``r``."""
    fun = _endpoint_fun(model, param, target)
    if r == 0:
        v0 = np.zeros(param.size)
    else:
        v0 = cfg.init_scale * stream(cfg.seed, "rate-init", r).standard_normal(param.size)

    def obj(v):
        sd = fun(v[None])[0]
        return max(sd, 0.0) ** 2

    def grad(v):
        J = _fd_jacobian(fun, v)[0]
        sd = fun(v[None])[0]
        return 2 * max(sd, 0.0) * J

    res = optimize.minimize(obj, v0, jac=grad, method="L-BFGS-B", options={"maxiter": cfg.max_iter})
    return float(np.sqrt(res.fun)), res.x, int(res.nit)


def _energy_run(v0: np.ndarray, model, param, target, cfg) -> tuple[float, np.ndarray, float, int]:
    fun = _endpoint_fun(model, param, target)
    margin = 0.5 * cfg.residual_tol
    cons = {
        "type": "ineq",
        "fun": lambda v: np.array([-margin - fun(v[None])[0]]),
        "jac": lambda v: -_fd_jacobian(fun, v),
    }
    res = optimize.minimize(
        param.energy, v0, jac=param.energy_grad, constraints=[cons], method="SLSQP",
        options={"maxiter": cfg.max_iter, "ftol": 1e-12},
    )
    v = res.x
    resid = float(max(fun(v[None])[0], 0.0))
    if resid > cfg.residual_tol:
        # derivative-free fallback on an exact-penalty objective
        def pen(u):
            return param.energy(u) + 1e3 * max(fun(u[None])[0] + margin, 0.0)

        nm = optimize.minimize(pen, v0, method="Nelder-Mead",
                               options={"maxiter": 200 * param.size, "xatol": 1e-10, "fatol": 1e-14})
        r2 = float(max(fun(nm.x[None])[0], 0.0))
        if r2 <= cfg.residual_tol:
            v, resid = nm.x, r2
    return param.energy(v), v, resid, int(res.nit)


def rate_endpoint(model: ModelSpec, target: ConvexSet, grid: TimeGrid, config: RateConfig | None = None) -> RateResult:
    """inf { |h|^2 / 2 : X^h(T) in target } over piecewise-constant controls."""
    cfg = config or RateConfig()
    param = _Param.make(grid, model.k, cfg.control_steps)
    fun = _endpoint_fun(model, param, target)
    zero = np.zeros(param.size)
    if fun(zero[None])[0] <= cfg.residual_tol:
        return RateResult(0.0, param.control(zero), 0.0, 0, "h = 0 already reaches the target")

    feas = pmap(
        functools.partial(_feasibility_run, model=model, param=param, target=target, cfg=cfg),
        range(cfg.restarts),
        cfg.workers,
    )
    starts = [v for d, v, _ in feas if d <= cfg.feasibility_tol]
    iters = sum(it for _, _, it in feas)
    if not starts:
        best = min(d for d, _, _ in feas)
        return RateResult(float("inf"), None, best, iters, "feasibility phase stalled: target unreachable")

    runs = pmap(
        functools.partial(_energy_run, model=model, param=param, target=target, cfg=cfg),
        starts,
        cfg.workers,
    )
    iters += sum(r[3] for r in runs)
    ok = [r for r in runs if r[2] <= cfg.residual_tol]
    if not ok:
        raise OptimizerDiverged(
            f"rate_endpoint: residual {min(r[2] for r in runs):.3g} above {cfg.residual_tol} after {cfg.restarts} restarts"
        )
    val, v, resid, _ = min(ok, key=lambda r: r[0])
    return RateResult(val, param.control(v), resid, iters)


# ---------------------------------------------------------------------------
# path problems
# ---------------------------------------------------------------------------


def rate_interior_path(model: ModelSpec, f: Path, tol: float = 1e-10) -> RateResult:
    """Closed-form rate of a path staying in the interior of D(A), for square invertible sigma.

    Inverting one resolvent step gives
    hdot_n = sigma(f_n)^{-1} ((f_{n+1} + dt A0(f_{n+1}) - f_n) / dt - b(f_n)),
    where A0 is the minimal section (zero inside the set for indicators).
    """
    if model.m != model.k:
        raise SingularDiffusion("closed form needs a square diffusion (m == k)")
    F = f.values
    dom = model.op.domain
    if dom is not None and np.any(~dom.contains(F, tol) | (dom.boundary_distance(F) <= tol)):
        raise NotInterior("path touches the boundary of D(A)")
    if not np.allclose(F[0], model.x0, atol=1e-12):
        return RateResult(float("inf"), None, float(np.linalg.norm(F[0] - model.x0)), 0, "f(0) != x0")
    dt = f.grid.dt
    a0 = model.op.exact_minimal_section(F[1:])
    if a0 is None:
        from mmsde.monotone_ops import minimal_section

        a0 = np.asarray(minimal_section(model.op, F[1:]))
    sig = model.diffusion(F[:-1])
    if np.any(np.abs(np.linalg.det(sig)) < 1e-14):
        raise SingularDiffusion("sigma is singular along the path")
    rhs = (F[1:] + dt * a0 - F[:-1]) / dt - model.drift(F[:-1])
    hdot = np.linalg.solve(sig, rhs[..., None])[..., 0]
    h = Control(f.grid, hdot)
    return RateResult(energy(h), h, 0.0, 0, "closed form")


def _track(path_batch, target: np.ndarray, param: _Param, tol: float, cfg: RateConfig, v0=None):
    """Minimize energy subject to max_n |X_n - f_n| <= tol, by penalty continuation.

    The penalty sum_n (|X_n - f_n| - tol/2)_+^2 is weighted by w, doubled until
    the sup-distance residual drops below ``tol``.
    """
    inner = 0.5 * tol

    def viol(V):
        X = path_batch(V)
        e = np.linalg.norm(X - target, axis=-1)
        return np.maximum(e - inner, 0.0)

    def residual(v):
        return float(np.max(np.linalg.norm(path_batch(v[None])[0] - target, axis=-1)))

    v = np.zeros(param.size) if v0 is None else np.asarray(v0, float)
    w = cfg.penalty_start
    iters = 0
    for _ in range(cfg.max_doublings):
        def obj(u, w=w):
            r = viol(u[None])[0]
            return param.energy(u) + w * float(np.sum(r * r))

        def grad(u, w=w):
            r = viol(u[None])[0]
            J = _fd_jacobian(viol, u, r)
            return param.energy_grad(u) + 2 * w * (J.T @ r)

        res = optimize.minimize(obj, v, jac=grad, method="L-BFGS-B",
                                options={"maxiter": cfg.max_iter, "ftol": 1e-15, "gtol": 1e-10})
        v, iters = res.x, iters + int(res.nit)
        if residual(v) <= tol:
            return v, residual(v), iters
        w *= 2
    # derivative-free fallback
    best = None
    for r in range(cfg.restarts):
        start = v if r == 0 else v + 0.1 * stream(cfg.seed, "track-nm", r).standard_normal(param.size)

        def obj(u):
            rr = viol(u[None])[0]
            return param.energy(u) + w * float(np.sum(rr * rr))

        nm = optimize.minimize(obj, start, method="Nelder-Mead", options={"maxiter": 400 * param.size})
        cand = (residual(nm.x), nm.x)
        if best is None or cand[0] < best[0]:
            best = cand
        iters += int(nm.nit)
        if cand[0] <= tol:
            break
    if best[0] > tol:
        raise OptimizerDiverged(f"path tracking stalled at sup-distance {best[0]:.3g} > {tol}")
    return best[1], best[0], iters


def rate_path(model: ModelSpec, f: Path, tol: float = 1e-3, config: RateConfig | None = None) -> RateResult:
    """Upper bound on I(f): least energy of a control whose skeleton stays within ``tol`` of f."""
    cfg = config or RateConfig(control_steps=None)
    if not np.allclose(f.values[0], model.x0, atol=tol):
        return RateResult(float("inf"), None, float(np.linalg.norm(f.values[0] - model.x0)), 0, "f(0) != x0")
    param = _Param.make(f.grid, model.k, cfg.control_steps)

    def batch(V):
        return skeleton_batch(model, f.grid, param.hdots(V))

    v, resid, iters = _track(batch, f.values, param, tol, cfg)
    return RateResult(param.energy(v), param.control(v), resid, iters)


def rate_plus_halfspace(f: Path, model: ModelSpec, tol: float = 1e-3, config: RateConfig | None = None) -> RateResult:
    """I+(f) = inf { I^(g) : Gamma(g) = f }, optimizing over free paths g = X^^h.

    The free path is driven with coefficients evaluated at its Skorohod image,
    so Gamma(X^^h) is the reflected skeleton and the infimum runs over h.
    """
    op = model.op
    if not (isinstance(op, IndicatorSubdifferential) and isinstance(op.set, HalfSpace)):
        raise ValueError("rate_plus_halfspace needs A = normal cone of a half-space")
    axis = op.set.axis
    F = f.values
    if np.any(F[:, axis] < -1e-12):
        raise ValueError("f must stay in the half-space")
    if not np.allclose(F[0], model.x0, atol=1e-12):
        return RateResult(float("inf"), None, float(np.linalg.norm(F[0] - model.x0)), 0,
                          "no preimage: f(0) != x0")
    cfg = config or RateConfig(control_steps=None)
    param = _Param.make(f.grid, model.k, cfg.control_steps)

    def batch(V):
        return free_skeleton_batch(model, f.grid, param.hdots(V), axis)[1]

    if float(np.max(np.linalg.norm(batch(np.zeros((1, param.size)))[0] - F, axis=-1))) <= tol:
        return RateResult(0.0, param.control(np.zeros(param.size)), 0.0, 0, "h = 0 tracks f")
    v, resid, iters = _track(batch, F, param, tol, cfg)
    return RateResult(param.energy(v), param.control(v), resid, iters)


def reflected_via_gamma(model: ModelSpec, h: Control, axis: int = 0) -> Path:
    """Gamma applied to the free skeleton driven by h (equals the reflected skeleton)."""
    _, refl = free_skeleton_batch(model, h.grid, h.hdot[None], axis)
    return Path(h.grid, refl[0])


def random_interior_path(grid: TimeGrid, seed: int, index: int, x0: float = 1.0) -> Path:
    """Smooth scalar test path: x0 + two sine modes + a linear trend, staying above x0 - 0.8."""
    r = stream(seed, "interior-paths", index)
    c = r.uniform(-0.3, 0.3, 2)
    t = grid.times
    v = x0 + c[0] * np.sin(np.pi * t / grid.T) + c[1] * np.sin(2 * np.pi * t / grid.T) + r.uniform(-0.5, 0.5) * t / grid.T
    return Path(grid, v[:, None])
