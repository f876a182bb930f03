"""Functional iterated-logarithm rescaling and distances to the energy-one limit set.

Large time:  Z_u(t) = Y(u t) / phi(u),  phi(u) = sqrt(u log log u),      u > e.
Small time:  Z_u(t) = Y(u t) / phi(u),  phi(u) = sqrt(u log log (1/u)),  u < 1/e.

The limit set {f : I(f) <= 1} is approximated from inside by a finite net of
skeleton paths whose controls have energy at most one, so every reported
distance is an upper bound on the distance to the net's convex hull of
controls and an approximation of the distance to the limit set.
"""
from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from mmsde.coefficients import Rescaled
from mmsde.errors import EmptyNet, HorizonTooShort, UnsupportedContraction
from mmsde.monotone_ops import Scaled, ZeroOp
from mmsde.msde_solver import ModelSpec, integrate
from mmsde.parallel import pmap
from mmsde.paths import Path, TimeGrid
from mmsde.rate_function import skeleton_batch
from mmsde.streams import stream

log = logging.getLogger(__name__)

E = np.e


# ---------------------------------------------------------------------------
# contraction systems
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ContractionSystem:
    """Family c -> Gamma_c of contractions centered at 0.  Only linear scalings are runnable."""

    kind: str = "custom"

    def apply(self, c: float, y):
        raise UnsupportedContraction(f"contraction system {self.kind!r} is not supported; use LinearScaling")


@dataclass(frozen=True)
class LinearScaling(ContractionSystem):
    """Gamma_c(y) = y / c."""

    kind: str = "linear"

    def apply(self, c: float, y):
        return np.asarray(y, dtype=float) / c

    def check_axioms(self, n: int = 1000, m: int = 2, seed: int = 0, rtol: float = 4e-16) -> dict:
        """Sample-based check of: zero is fixed; contraction ordering in c; Gamma_1 = id and inverse."""
        rng = stream(seed, "axioms")
        y, z = rng.normal(size=(2, n, m)) * np.exp(rng.uniform(-3, 3, size=(2, n, 1)))
        c1, c2 = np.sort(np.exp(rng.uniform(-5, 5, size=(2, n))), axis=0)  # c1 <= c2
        centered = bool(np.all(self.apply(c2[:, None], np.zeros((n, m))) == 0))
        d_big = np.linalg.norm(self.apply(c2[:, None], y) - self.apply(c2[:, None], z), axis=1)
        d_small = np.linalg.norm(self.apply(c1[:, None], y) - self.apply(c1[:, None], z), axis=1)
        ordered = bool(np.all(d_big <= d_small * (1 + rtol)))
        identity = bool(np.all(self.apply(1.0, y) == y))
        back = self.apply(1.0 / c2[:, None], self.apply(c2[:, None], y))
        inverse = bool(np.all(np.abs(back - y) <= 4 * rtol * np.abs(y) + 1e-300))
        return {"centered": centered, "ordered": ordered, "identity": identity, "inverse": inverse}


def loglog(u: float) -> float:
    return float(np.log(np.log(u)))


def phi_large(u: float) -> float:
    """sqrt(u log log u), for u > e."""
    if not u > E:
        raise ValueError(f"large-time scale needs u > e, got {u}")
    return float(np.sqrt(u * loglog(u)))


def phi_small(u: float) -> float:
    """sqrt(u log log (1/u)), for 0 < u < 1/e."""
    if not 0 < u < 1 / E:
        raise ValueError(f"small-time scale needs 0 < u < 1/e, got {u}")
    return float(np.sqrt(u * loglog(1.0 / u)))


def transformed_coefficients(model: ModelSpec, c: float, alpha: float,
                             system: ContractionSystem = LinearScaling()) -> ModelSpec:
    """Model of Gamma_c(Y(alpha .)) for a linear scaling, with c = phi(alpha).

    drift  y -> (alpha / c) b(c y)
    diff.  y -> sigma(c y)
    op     y -> (alpha / c) A(c y), resolvent by the scaling identity
    start  x0 / c
    """
    if not isinstance(system, LinearScaling):
        raise UnsupportedContraction(f"contraction system {system.kind!r} is not supported")
    if not (alpha > E or 0 < alpha < 1 / E):
        raise ValueError(f"alpha must be > e or in (0, 1/e), got {alpha}")
    if c <= 0:
        raise ValueError("scale c must be positive")
    ratio = alpha / c
    op = model.op if isinstance(model.op, ZeroOp) else Scaled(model.op, ratio, c)
    return ModelSpec(
        model.m,
        model.k,
        Rescaled(model.drift, ratio, c),
        Rescaled(model.diffusion, 1.0, c),
        op,
        model.x0 / c,
    )


# ---------------------------------------------------------------------------
# rescaling
# ---------------------------------------------------------------------------


def _sample(Y: Path, times: np.ndarray) -> np.ndarray:
    """Y at the given times (linear interpolation between nodes)."""
    if times[-1] > Y.grid.T * (1 + 1e-12):
        raise HorizonTooShort(f"path ends at {Y.grid.T:.6g}, need {times[-1]:.6g}")
    t = np.minimum(times, Y.grid.T)
    return np.column_stack([np.interp(t, Y.times, Y.values[:, i]) for i in range(Y.dim)])


def rescale_large(Y: Path, u: float, T0: float = 1.0, N: int | None = None) -> Path:
    """Z_u(t) = Y(u t) / sqrt(u log log u) on [0, T0]."""
    g = TimeGrid(T0, N or Y.grid.N)
    return Path(g, _sample(Y, u * g.times) / phi_large(u))


def rescale_small(Y: Path, u: float, T0: float = 1.0, N: int | None = None) -> Path:
    """Z_u(t) = Y(u t) / sqrt(u log log (1/u)) on [0, T0]."""
    g = TimeGrid(T0, N or Y.grid.N)
    return Path(g, _sample(Y, u * g.times) / phi_small(u))


# ---------------------------------------------------------------------------
# limit-set net
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class LimitSetNet:
    model: ModelSpec
    grid: TimeGrid
    control_steps: int
    controls: np.ndarray  # (M, control_steps, k) control derivatives
    values: np.ndarray  # (M, N+1, m) skeleton paths
    energies: np.ndarray  # (M,)
    extreme_ids: list[int]
    net_resolution: float

    @property
    def members(self) -> list[Path]:
        return [Path(self.grid, v) for v in self.values]

    def __len__(self) -> int:
        return self.values.shape[0]

    def hdots(self, V: np.ndarray) -> np.ndarray:
        V = np.asarray(V).reshape(-1, self.control_steps, self.model.k)
        return np.repeat(V, self.grid.N // self.control_steps, axis=1)

    def energy(self, V: np.ndarray) -> np.ndarray:
        V = np.asarray(V).reshape(-1, self.control_steps * self.model.k)
        return 0.5 * np.sum(V * V, axis=1) * (self.grid.T / self.control_steps)


def _ball_controls(rng, count: int, dim: int, radius: float) -> np.ndarray:
    """Uniform samples in the Euclidean ball of the given radius."""
    d = rng.standard_normal((count, dim))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = radius * rng.random(count) ** (1.0 / dim)
    return d * r[:, None]


def build_limit_set_net(
    model: ModelSpec,
    M: int = 256,
    seed: int = 0,
    refine: bool = False,
    grid: TimeGrid = TimeGrid(1.0, 128),
    control_steps: int = 16,
    probe: int = 64,
) -> LimitSetNet:
    """Skeletons of M controls drawn uniformly from {energy <= 1}, the zero control and the constant extreme rays.

    With ``refine`` every random control is also pushed radially onto the
    energy-one sphere, doubling the net.  ``net_resolution`` is the largest
    distance from ``probe`` fresh energy-ball samples to their nearest member.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    if grid.N % control_steps:
        raise ValueError("control_steps must divide the grid size")
    k, dim = model.k, control_steps * model.k
    dtc = grid.T / control_steps
    radius = np.sqrt(2.0 / dtc)  # 0.5 |v|^2 dtc <= 1
    V = _ball_controls(stream(seed, "net"), M, dim, radius)
    if refine:
        norms = np.linalg.norm(V, axis=1, keepdims=True)
        V = np.vstack([V, V / np.where(norms > 0, norms, 1.0) * radius])
    rays = []
    for i in range(k):
        for s in (1.0, -1.0):
            e = np.zeros((control_steps, k))
            e[:, i] = s * np.sqrt(2.0 / grid.T)
            rays.append(e.ravel())
    V = np.vstack([V, np.zeros((1, dim)), np.array(rays)]).reshape(-1, control_steps, k)
    extreme = list(range(V.shape[0] - len(rays), V.shape[0]))
    base = model.with_x0(np.zeros(model.m)) if not np.all(model.x0 == 0) else model
    net = LimitSetNet(base, grid, control_steps, V, np.empty(0), np.empty(0), extreme, float("nan"))
    net.values = skeleton_batch(base, grid, net.hdots(V))
    net.energies = net.energy(V)
    P = _ball_controls(stream(seed, "net-probe"), probe, dim, radius)
    probe_paths = skeleton_batch(base, grid, net.hdots(P))
    net.net_resolution = float(max(_nearest(p, net.values)[1] for p in probe_paths))
    return net


def _nearest(z: np.ndarray, values: np.ndarray) -> tuple[int, float]:
    d = np.max(np.linalg.norm(values - z, axis=-1), axis=-1)
    i = int(np.argmin(d))
    return i, float(d[i])


def _on_grid(z: Path, grid: TimeGrid) -> np.ndarray:
    if z.grid == grid:
        return z.values
    if abs(z.grid.T - grid.T) > 1e-12 * grid.T:
        raise ValueError("path and net cover different horizons")
    return _sample(z, grid.times)


def _polish(z: np.ndarray, net: LimitSetNet, start: int, d0: float, max_iter: int = 100) -> float:
    """Minimize s subject to |X^v_n - z_n| <= s at all nodes and energy(v) <= 1, from a net member."""
    v0 = net.controls[start].ravel()
    n = v0.size

    def paths(V):
        return skeleton_batch(net.model, net.grid, net.hdots(V))

    def gaps(x):
        return np.sum((paths(x[None, :n])[0] - z) ** 2, axis=-1)

    def gaps_jac(x):
        v = x[:n]
        step = np.sqrt(np.finfo(float).eps) * np.maximum(1.0, np.abs(v))
        G = np.sum((paths(np.vstack([v, v + np.diag(step)])) - z) ** 2, axis=-1)
        J = ((G[1:] - G[0]) / step[:, None]).T
        return np.hstack([-J, 2 * x[n] * np.ones((J.shape[0], 1))])

    dtc = net.grid.T / net.control_steps
    cons = [
        {"type": "ineq", "fun": lambda x: x[n] ** 2 - gaps(x), "jac": gaps_jac},
        {"type": "ineq", "fun": lambda x: np.array([1.0 - 0.5 * dtc * x[:n] @ x[:n]]),
         "jac": lambda x: np.append(-dtc * x[:n], 0.0)[None]},
    ]
    x0 = np.append(v0, d0)
    res = optimize.minimize(lambda x: x[n], x0, jac=lambda x: np.append(np.zeros(n), 1.0),
                            constraints=cons, method="SLSQP", options={"maxiter": max_iter, "ftol": 1e-10})
    v = res.x[:n]
    if net.energy(v)[0] > 1 + 1e-9:
        v = v * np.sqrt(1.0 / net.energy(v)[0])
    return float(np.max(np.linalg.norm(paths(v[None])[0] - z, axis=-1)))


def dist_to_limit_set(z: Path, net: LimitSetNet, polish: bool = False) -> float:
    """Sup-distance from z to the nearest net member, optionally improved by local optimization."""
    return _dist_and_id(z, net, polish)[1]


def _dist_and_id(z: Path, net: LimitSetNet, polish: bool) -> tuple[int, float]:
    if len(net) == 0:
        raise EmptyNet("the limit-set net has no members")
    zv = _on_grid(z, net.grid)
    i, d = _nearest(zv, net.values)
    if polish and d > 0:
        d = min(d, _polish(zv, net, i, d))
    return i, d


# ---------------------------------------------------------------------------
# experiment
# ---------------------------------------------------------------------------


def simulate_at(model: ModelSpec, times: np.ndarray, seed: int, eps: float = 1.0,
                scheme: str = "prox", tag: str = "flil") -> np.ndarray:
    """One eps-noise trajectory evaluated at increasing ``times`` (starting at 0).

    The Brownian increments over consecutive times are independent normals
    from stream ``(seed, tag)``; for Brownian motion (and exact schemes) the
    result has the exact law at those times.
    """
    dts = np.diff(times)
    rng = stream(seed, tag)
    dW = rng.standard_normal((1, dts.size, model.k)) * np.sqrt(dts)[None, :, None]
    uniforms = 1.0 - rng.random((1, dts.size)) if scheme == "bridge" else None
    X, _ = integrate(model, dts, model.x0[None], eps, dW, None, scheme, uniforms)
    return X[0]


@dataclass
class FlilReport:
    rows: list[tuple]  # (seed, j, u, dist, nearest_member_id)
    z_end: dict  # seed -> list of Z_{c^j}(T0) first coordinates, aligned with js
    js: list[int]
    us: list[float]
    window: int
    window_max: dict  # seed -> max distance over the trailing window
    recurrence: dict  # seed -> {extreme member id: min_j distance}
    net_resolution: float
    min_value: dict = field(default_factory=dict)  # seed -> min coordinate of all Z (domain check)

    def summary(self, threshold: float = 0.35) -> dict:
        tail = self.js[-self.window:]
        z_tail = [z for s in self.z_end for j, z in zip(self.js, self.z_end[s]) if j in tail]
        return {
            "js": self.js,
            "window": self.window,
            "window_max": {str(s): v for s, v in self.window_max.items()},
            "seeds_below_threshold": int(sum(v <= threshold for v in self.window_max.values())),
            "threshold": threshold,
            "max_z_end_window": float(max(z_tail)),
            "max_z_end_all": float(max(max(v) for v in self.z_end.values())),
            "recurrence": {str(s): {str(k): v for k, v in r.items()} for s, r in self.recurrence.items()},
            "net_resolution": self.net_resolution,
        }


def _one_seed(seed: int, model: ModelSpec, us: list[float], scales: list[float], grid: TimeGrid,
              net: LimitSetNet, polish: bool, scheme: str, max_step: float | None):
    checkpoints = [u * grid.times for u in us]
    times = np.unique(np.concatenate([[0.0], *checkpoints]))
    if max_step is not None:
        gaps = np.diff(times)
        sub = np.maximum(1, np.ceil(gaps / max_step)).astype(int)
        fine = [np.linspace(a, b, s + 1)[:-1] for a, b, s in zip(times[:-1], times[1:], sub)]
        times = np.concatenate(fine + [times[-1:]])
    Y = simulate_at(model, times, seed, 1.0, scheme)
    out = []
    for cp, phi in zip(checkpoints, scales):
        idx = np.searchsorted(times, cp)
        Z = Path(grid, Y[idx] / phi)
        i, d = _dist_and_id(Z, net, polish)
        ext = {e: float(np.max(np.linalg.norm(Z.values - net.values[e], axis=-1))) for e in net.extreme_ids}
        out.append((d, i, float(Z.values[-1, 0]), ext, float(Z.values.min())))
    return out


def flil_experiment(
    model: ModelSpec,
    c: float,
    j_max: int,
    seeds,
    small_time: bool = False,
    net: LimitSetNet | None = None,
    net_size: int = 256,
    net_seed: int = 0,
    grid: TimeGrid = TimeGrid(1.0, 128),
    window: int = 10,
    polish: bool = False,
    scheme: str = "prox",
    max_step: float | None = None,
    workers: int = 1,
) -> FlilReport:
    """Distances from Z_{c^j} (or Z_{c^-j} for small time) to the limit-set net.

    Indices j with c^j <= e (large time) or c^-j >= 1/e (small time) are skipped
    since the iterated logarithm is not positive there.  Each seed simulates Y
    once on the union of all checkpoint times u_j t_n, refined to ``max_step``
    if given.
    """
    if c <= 1:
        raise ValueError("c must be > 1")
    if small_time:
        js = [j for j in range(1, j_max + 1) if c ** (-j) < 1 / E]
        us = [c ** (-j) for j in js]
        scales = [phi_small(u) for u in us]
    else:
        js = [j for j in range(1, j_max + 1) if c**j > E]
        us = [c**j for j in js]
        scales = [phi_large(u) for u in us]
    if not js:
        raise HorizonTooShort(f"no j <= {j_max} gives a usable scale for c={c}")
    if net is None:
        net = build_limit_set_net(model, net_size, net_seed, grid=grid)
    seeds = list(seeds)
    fn = functools.partial(_one_seed, model=model, us=us, scales=scales, grid=grid, net=net,
                           polish=polish, scheme=scheme, max_step=max_step)
    results = pmap(fn, seeds, workers)
    rows, z_end, wmax, rec, mins = [], {}, {}, {}, {}
    for s, res in zip(seeds, results):
        for j, u, (d, i, _, _, _) in zip(js, us, res):
            rows.append((s, j, u, d, i))
        z_end[s] = [r[2] for r in res]
        wmax[s] = max(r[0] for r in res[-window:])
        rec[s] = {e: min(r[3][e] for r in res) for e in net.extreme_ids}
        mins[s] = min(r[4] for r in res)
    return FlilReport(rows, z_end, js, us, window, wmax, rec, net.net_resolution, mins)
