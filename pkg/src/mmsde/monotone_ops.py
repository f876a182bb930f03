"""Maximal monotone operators represented through their resolvents.

Every operator exposes ``resolvent(alpha, x)`` computing ``(1 + alpha A)^{-1} x``
for points of shape ``(..., m)``.  Yosida approximations, minimal sections and
Moreau envelopes are all derived from that single primitive.

Tolerances per kind:

* ``IndicatorSubdifferential``, ``LinearPSD``, ``Graph1D``, ``Scaled`` and
  ``ZeroOp`` are exact up to floating point (absolute 1e-10).
* ``Sum`` and indicators of an ``Intersection`` are iterative (1e-8).
"""
from __future__ import annotations

import logging
from itertools import combinations
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from mmsde.errors import NoResolvent, OutsideDomain

log = logging.getLogger(__name__)

EXACT_TOL = 1e-10
ITERATIVE_TOL = 1e-8


def _points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    return x


def _unwrap(result: np.ndarray, like):
    if np.ndim(like) == 0:
        return float(result.reshape(-1)[0])
    return result


# ---------------------------------------------------------------------------
# Convex sets
# ---------------------------------------------------------------------------


class ConvexSet:
    """Closed convex subset of R^m with an exact or certified projection."""

    kind: str = ""

    def project(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def distance(self, x) -> np.ndarray:
        x = _points(x)
        return np.linalg.norm(x - self.project(x), axis=-1)

    def contains(self, x, tol: float = EXACT_TOL) -> np.ndarray:
        return self.distance(x) <= tol

    def boundary_distance(self, x) -> np.ndarray:
        """Distance to the boundary for interior points, to the set otherwise."""
        raise NotImplementedError

    def pieces(self, m: int) -> list | None:
        """Constraint description: ``("lin", a, b)`` for a.y >= b, ``("sph", c, r)`` for |y - c| <= r."""
        return None

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class HalfSpace(ConvexSet):
    """The half-space ``{x : x[axis] >= 0}``."""

    axis: int = 0
    kind = "halfspace"

    def project(self, x):
        y = np.array(_points(x), dtype=float, copy=True)
        y[..., self.axis] = np.maximum(y[..., self.axis], 0.0)
        return y

    def distance(self, x):
        return np.maximum(-_points(x)[..., self.axis], 0.0)

    def boundary_distance(self, x):
        return np.abs(_points(x)[..., self.axis])

    def pieces(self, m):
        a = np.zeros(m)
        a[self.axis] = 1.0
        return [("lin", a, 0.0)]

    def to_dict(self):
        return {"kind": self.kind, "axis": self.axis}


@dataclass(frozen=True)
class Box(ConvexSet):
    lo: tuple
    hi: tuple
    kind = "box"

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(lo) != len(hi) or any(a > b for a, b in zip(lo, hi)):
            raise ValueError(f"invalid box bounds lo={lo} hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def project(self, x):
        return np.clip(_points(x), np.array(self.lo), np.array(self.hi))

    def boundary_distance(self, x):
        x = _points(x)
        lo, hi = np.array(self.lo), np.array(self.hi)
        inside = np.min(np.minimum(x - lo, hi - x), axis=-1)
        return np.where(inside >= 0, inside, self.distance(x))

    def pieces(self, m):
        out = []
        for i, (lo, hi) in enumerate(zip(self.lo, self.hi)):
            e = np.zeros(m)
            e[i] = 1.0
            if np.isfinite(lo):
                out.append(("lin", e, lo))
            if np.isfinite(hi):
                out.append(("lin", -e, -hi))
        return out

    def to_dict(self):
        return {"kind": self.kind, "lo": [_enc_float(v) for v in self.lo], "hi": [_enc_float(v) for v in self.hi]}


@dataclass(frozen=True)
class Ball(ConvexSet):
    center: tuple
    radius: float
    kind = "ball"

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in np.atleast_1d(self.center)))
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")

    def project(self, x):
        x = _points(x)
        c = np.array(self.center)
        d = x - c
        r = np.linalg.norm(d, axis=-1, keepdims=True)
        scale = np.where(r > self.radius, self.radius / np.where(r > 0, r, 1.0), 1.0)
        return c + d * scale

    def boundary_distance(self, x):
        r = np.linalg.norm(_points(x) - np.array(self.center), axis=-1)
        return np.abs(r - self.radius)

    def pieces(self, m):
        return [("sph", np.array(self.center), self.radius)]

    def to_dict(self):
        return {"kind": self.kind, "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Intersection(ConvexSet):
    """Intersection of convex sets.

    Projection runs Dykstra's algorithm.  Dykstra can be very slow for points
    far from a corner of the intersection, so points still moving after
    ``polish_after`` sweeps are finished by an exact KKT solve over subsets of
    the active linear/spherical constraint pieces; a KKT point is accepted
    only when it is feasible with nonnegative multipliers, which certifies it
    as the projection.
    """

    sets: tuple
    max_iter: int = 10_000
    tol: float = 1e-13
    polish_after: int = 50
    kind = "intersection"

    def __post_init__(self):
        object.__setattr__(self, "sets", tuple(self.sets))
        if not self.sets:
            raise ValueError("empty intersection")

    def pieces(self, m):
        out = []
        for s in self.sets:
            p = s.pieces(m)
            if p is None:
                return None
            out.extend(p)
        return out

    def _dykstra(self, x, iters):
        y = x.copy()
        incs = [np.zeros_like(x) for _ in self.sets]
        moving = np.ones(x.shape[:-1], dtype=bool)
        for _ in range(iters):
            prev = y
            for i, s in enumerate(self.sets):
                z = s.project(y + incs[i])
                incs[i] = y + incs[i] - z
                y = z
            moving = np.max(np.abs(y - prev), axis=-1, initial=0.0) > self.tol
            if not moving.any():
                break
        return y, moving

    def project(self, x):
        x = _points(x)
        if len(self.sets) == 1:
            return self.sets[0].project(x)
        y, moving = self._dykstra(x, self.polish_after)
        if not moving.any():
            return y
        pieces = self.pieces(x.shape[-1])
        flat_x, flat_y, flat_m = x.reshape(-1, x.shape[-1]), y.reshape(-1, x.shape[-1]), moving.reshape(-1)
        for i in np.flatnonzero(flat_m):
            exact = None if pieces is None else _kkt_projection(flat_x[i], pieces, flat_y[i])
            if exact is None:
                exact, still = self._dykstra(flat_x[i], self.max_iter)
                if still:
                    log.warning("intersection projection did not converge at %s", flat_x[i])
            flat_y[i] = exact
        return flat_y.reshape(x.shape)

    def boundary_distance(self, x):
        x = _points(x)
        inner = np.min([s.boundary_distance(x) for s in self.sets], axis=0)
        return np.where(self.contains(x), inner, self.distance(x))

    def to_dict(self):
        return {"kind": self.kind, "sets": [s.to_dict() for s in self.sets]}


def _piece_value(piece, y):
    kind, a, b = piece
    if kind == "lin":
        return float(a @ y - b), a, 0.0
    d = y - a
    return 0.5 * (b * b - float(d @ d)), -d, -1.0  # value, gradient, Hessian scale


def _kkt_projection(x, pieces, y0, tol: float = 1e-12, newton_iters: int = 40):
    """Exact projection onto {g_l >= 0}: Newton on the KKT system of candidate active subsets."""
    m = x.size
    scale = 1.0 + float(np.max(np.abs(x)))
    # try the constraints nearly active at the warm start first, then every subset by size
    gap = [abs(_piece_value(p, y0)[0]) for p in pieces]
    guess = tuple(l for l in np.argsort(gap)[:m] if gap[l] <= 1e-3 * scale * scale)
    order = [guess] + [c for r in range(min(m, len(pieces)) + 1) for c in combinations(range(len(pieces)), r)]
    for subset in order:
        r = len(subset)
        y, lam = y0.copy(), np.zeros(r)
        for _ in range(newton_iters):
            vals = [_piece_value(pieces[l], y) for l in subset]
            G = np.array([v[1] for v in vals]).reshape(r, m).T
            h = sum((lam[i] * vals[i][2] for i in range(r)), 0.0)
            F = np.concatenate([y - x - G @ lam, [v[0] for v in vals]])
            if np.max(np.abs(F), initial=0.0) < tol * scale:
                break
            J = np.block([[(1.0 - h) * np.eye(m), -G], [G.T, np.zeros((r, r))]])
            step = np.linalg.lstsq(J, -F, rcond=None)[0]
            y, lam = y + step[:m], lam + step[m:]
        else:
            continue
        # a feasible KKT point with nonnegative multipliers is the (unique) projection
        if np.all(lam >= -tol * scale) and all(_piece_value(p, y)[0] >= -tol * scale * scale for p in pieces):
            return y
    return None


def set_from_dict(d: dict) -> ConvexSet:
    kind = d["kind"]
    if kind == "halfspace":
        return HalfSpace(int(d.get("axis", 0)))
    if kind == "box":
        return Box(tuple(d["lo"]), tuple(d["hi"]))
    if kind == "ball":
        return Ball(tuple(d["center"]), float(d["radius"]))
    if kind == "intersection":
        return Intersection(tuple(set_from_dict(s) for s in d["sets"]))
    raise ValueError(f"unknown convex set kind {kind!r}")


# ---------------------------------------------------------------------------
# Proximable convex functions
# ---------------------------------------------------------------------------


class ConvexFunction:
    """Proper lsc convex function with a closed-form proximal map."""

    kind: str = ""
    domain: ConvexSet | None = None

    def value(self, x) -> np.ndarray:
        raise NotImplementedError

    def prox(self, x, alpha: float) -> np.ndarray:
        """argmin_y f(y) + |y - x|^2 / (2 alpha)."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class IndicatorFunction(ConvexFunction):
    set: ConvexSet
    kind = "indicator"

    @property
    def domain(self):
        return self.set

    def value(self, x):
        return np.where(self.set.contains(x), 0.0, np.inf)

    def prox(self, x, alpha):
        return self.set.project(x)

    def to_dict(self):
        return {"kind": self.kind, "set": self.set.to_dict()}


@dataclass(frozen=True)
class QuadraticFunction(ConvexFunction):
    """f(x) = scale/2 |x|^2."""

    scale: float = 1.0
    kind = "quadratic"

    def __post_init__(self):
        if self.scale < 0:
            raise ValueError("scale must be nonnegative")

    def value(self, x):
        x = _points(x)
        return 0.5 * self.scale * np.sum(x * x, axis=-1)

    def prox(self, x, alpha):
        return _points(x) / (1.0 + alpha * self.scale)

    def to_dict(self):
        return {"kind": self.kind, "scale": self.scale}


@dataclass(frozen=True)
class L1Norm(ConvexFunction):
    """f(x) = weight * |x|_1."""

    weight: float = 1.0
    kind = "l1"

    def value(self, x):
        return self.weight * np.sum(np.abs(_points(x)), axis=-1)

    def prox(self, x, alpha):
        x = _points(x)
        t = alpha * self.weight
        return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)

    def to_dict(self):
        return {"kind": self.kind, "weight": self.weight}


def function_from_dict(d: dict) -> ConvexFunction:
    kind = d["kind"]
    if kind == "indicator":
        return IndicatorFunction(set_from_dict(d["set"]))
    if kind == "quadratic":
        return QuadraticFunction(float(d.get("scale", 1.0)))
    if kind == "l1":
        return L1Norm(float(d.get("weight", 1.0)))
    raise ValueError(f"unknown convex function kind {kind!r}")


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------


class MonotoneOp:
    """A maximal monotone operator given by its resolvent."""

    kind: str = ""

    def resolvent(self, alpha: float, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def domain(self) -> ConvexSet | None:
        """Closure of D(A); ``None`` means all of R^m."""
        return None

    def in_domain_closure(self, x, tol: float = EXACT_TOL) -> np.ndarray:
        dom = self.domain
        x = _points(x)
        if dom is None:
            return np.ones(x.shape[:-1], dtype=bool)
        return dom.contains(x, tol)

    def exact_minimal_section(self, x: np.ndarray) -> np.ndarray | None:
        """Closed-form minimal-norm element, or ``None`` if unavailable."""
        return None

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ZeroOp(MonotoneOp):
    kind = "zero"

    def resolvent(self, alpha, x):
        return np.array(_points(x), dtype=float, copy=True)

    def exact_minimal_section(self, x):
        return np.zeros_like(_points(x))

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class IndicatorSubdifferential(MonotoneOp):
    """Normal-cone operator of a closed convex set; its resolvent is the projection."""

    set: ConvexSet
    kind = "indicator"

    def resolvent(self, alpha, x):
        return self.set.project(x)

    @property
    def domain(self):
        return self.set

    def exact_minimal_section(self, x):
        # 0 lies in every normal cone
        return np.zeros_like(_points(x))

    def to_dict(self):
        return {"kind": self.kind, "set": self.set.to_dict()}


@dataclass(frozen=True)
class ConvexSubdifferential(MonotoneOp):
    func: ConvexFunction
    kind = "subdifferential"

    def resolvent(self, alpha, x):
        return self.func.prox(x, alpha)

    @property
    def domain(self):
        return self.func.domain

    def to_dict(self):
        return {"kind": self.kind, "func": self.func.to_dict()}


@dataclass(frozen=True)
class LinearPSD(MonotoneOp):
    """x -> M x with a positive semidefinite symmetric part."""

    matrix: np.ndarray
    kind = "linear"

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if M.shape[0] != M.shape[1]:
            raise NoResolvent(f"linear operator must be square, got {M.shape}")
        sym = 0.5 * (M + M.T)
        if np.min(np.linalg.eigvalsh(sym)) < -1e-12:
            raise NoResolvent("linear operator is not monotone (symmetric part not PSD)")
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)

    @property
    def lipschitz(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))

    def apply(self, x):
        return _points(x) @ self.matrix.T

    def resolvent(self, alpha, x):
        m = self.matrix.shape[0]
        R = np.linalg.inv(np.eye(m) + alpha * self.matrix)
        return _points(x) @ R.T

    def exact_minimal_section(self, x):
        return self.apply(x)

    def to_dict(self):
        return {"kind": self.kind, "matrix": self.matrix.tolist()}

    def __hash__(self):
        return hash((self.kind, self.matrix.tobytes()))

    def __eq__(self, other):
        return isinstance(other, LinearPSD) and np.array_equal(self.matrix, other.matrix)


@dataclass(frozen=True)
class Graph1D(MonotoneOp):
    """Piecewise-linear maximal monotone graph in R x R, applied componentwise.

    The graph is the polyline through ``vertices`` (pairs ``(u, v)`` with both
    coordinates nondecreasing; vertical and horizontal pieces allowed) extended
    by a left and a right tail.  A tail slope of ``inf`` is a vertical ray,
    which bounds the domain; a finite slope ``s >= 0`` continues linearly.
    """

    vertices: tuple
    left_slope: float = float("inf")
    right_slope: float = float("inf")
    kind = "graph1d"

    def __post_init__(self):
        V = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        if len(V) == 0:
            raise NoResolvent("graph needs at least one vertex")
        du, dv = np.diff(V[:, 0]), np.diff(V[:, 1])
        if np.any(du < 0) or np.any(dv < 0):
            raise NoResolvent("graph vertices must be nondecreasing in both coordinates")
        if np.any((du == 0) & (dv == 0)):
            raise NoResolvent("graph has repeated vertices")
        if self.left_slope < 0 or self.right_slope < 0:
            raise NoResolvent("tail slopes must be nonnegative")
        object.__setattr__(self, "vertices", tuple(map(tuple, V.tolist())))

    @property
    def _uv(self):
        V = np.asarray(self.vertices)
        return V[:, 0], V[:, 1]

    @property
    def domain(self):
        u, _ = self._uv
        lo = u[0] if np.isinf(self.left_slope) else -np.inf
        hi = u[-1] if np.isinf(self.right_slope) else np.inf
        if np.isinf(lo) and np.isinf(hi):
            return None
        return _IntervalSet(lo, hi)

    def resolvent(self, alpha, x):
        x = _points(x)
        u, v = self._uv
        G = u + alpha * v
        y = np.empty_like(x)
        left = x < G[0]
        right = x > G[-1]
        mid = ~(left | right)
        if np.isinf(self.left_slope):
            y[left] = u[0]
        else:
            y[left] = u[0] - (G[0] - x[left]) / (1.0 + alpha * self.left_slope)
        if np.isinf(self.right_slope):
            y[right] = u[-1]
        else:
            y[right] = u[-1] + (x[right] - G[-1]) / (1.0 + alpha * self.right_slope)
        if np.any(mid):
            xm = x[mid]
            if len(G) == 1:
                y[mid] = u[0]
            else:
                i = np.clip(np.searchsorted(G, xm, side="right") - 1, 0, len(G) - 2)
                lam = (xm - G[i]) / (G[i + 1] - G[i])
                y[mid] = u[i] + lam * (u[i + 1] - u[i])
        return y

    def section_bounds(self, y) -> tuple[np.ndarray, np.ndarray]:
        """Lower and upper ends of the interval A(y) (empty intervals give lo > hi)."""
        y = _points(y)
        u, v = self._uv
        lo = np.full(y.shape, np.inf)
        hi = np.full(y.shape, -np.inf)
        # tails
        below, above = y < u[0], y > u[-1]
        if not np.isinf(self.left_slope):
            val = v[0] - self.left_slope * (u[0] - y[below])
            lo[below], hi[below] = val, val
        if not np.isinf(self.right_slope):
            val = v[-1] + self.right_slope * (y[above] - u[-1])
            lo[above], hi[above] = val, val
        inside = ~(below | above)
        yi = y[inside]
        # leftmost / rightmost graph points with abscissa yi
        il = np.searchsorted(u, yi, side="left")
        ir = np.searchsorted(u, yi, side="right") - 1
        lo_i = np.empty_like(yi)
        hi_i = np.empty_like(yi)
        exact_l = (il < len(u)) & (u[np.minimum(il, len(u) - 1)] == yi)
        for k in range(len(yi)):
            a = il[k]
            if exact_l[k]:
                lo_i[k] = v[a]
            else:
                lam = (yi[k] - u[a - 1]) / (u[a] - u[a - 1])
                lo_i[k] = v[a - 1] + lam * (v[a] - v[a - 1])
            b = ir[k]
            if u[b] == yi[k]:
                hi_i[k] = v[b]
            else:
                lam = (yi[k] - u[b]) / (u[b + 1] - u[b])
                hi_i[k] = v[b] + lam * (v[b + 1] - v[b])
        if np.isinf(self.left_slope):
            lo_i[yi == u[0]] = -np.inf
        if np.isinf(self.right_slope):
            hi_i[yi == u[-1]] = np.inf
        lo[inside], hi[inside] = lo_i, hi_i
        return lo, hi

    def exact_minimal_section(self, x):
        lo, hi = self.section_bounds(x)
        return np.clip(0.0, lo, hi)

    def to_dict(self):
        return {
            "kind": self.kind,
            "vertices": [list(p) for p in self.vertices],
            "left_slope": _enc_float(self.left_slope),
            "right_slope": _enc_float(self.right_slope),
        }


@dataclass(frozen=True)
class _IntervalSet(ConvexSet):
    """Componentwise interval [lo, hi]; used as the domain of Graph1D."""

    lo: float
    hi: float
    kind = "interval"

    def project(self, x):
        return np.clip(_points(x), self.lo, self.hi)

    def boundary_distance(self, x):
        x = _points(x)
        inside = np.min(np.minimum(x - self.lo, self.hi - x), axis=-1)
        return np.where(inside >= 0, inside, self.distance(x))

    def to_dict(self):
        return {"kind": "box", "lo": [self.lo], "hi": [self.hi]}


@dataclass(frozen=True)
class Sum(MonotoneOp):
    """``multi + single`` where ``single`` is linear, monotone and Lipschitz.

    The resolvent finds the zero of ``y -> alpha A(y) + (y - x + alpha M y)`` by
    Douglas-Rachford splitting: the second summand is strongly monotone with an
    exact (linear) resolvent and the first uses ``J^A``.  The step
    ``1 / sqrt(1 + alpha L)`` balances strong monotonicity against the
    Lipschitz constant, which gives linear convergence for every alpha.
    """

    multi: MonotoneOp
    single: LinearPSD
    max_iter: int = 100
    tol: float = 1e-10
    kind = "sum"

    def resolvent(self, alpha, x):
        x = _points(x)
        L = self.single.lipschitz
        if L == 0:
            return self.multi.resolvent(alpha, x)
        m = x.shape[-1]
        g = 1.0 / np.sqrt(1.0 + alpha * L)
        Q = (1.0 + g) * np.eye(m) + g * alpha * np.asarray(self.single.matrix, dtype=float)
        Qinv = np.linalg.inv(Q)
        u = self.multi.resolvent(alpha, x)
        for _ in range(self.max_iter):
            y = (u + g * x) @ Qinv.T
            v = self.multi.resolvent(g * alpha, 2 * y - u)
            if np.max(np.abs(v - y), initial=0.0) < self.tol:
                return v
            u = u + v - y
        raise NoResolvent(
            f"sum resolvent did not reach residual {self.tol} in {self.max_iter} iterations "
            f"(alpha*L={alpha * L:.3g})"
        )

    @property
    def domain(self):
        return self.multi.domain

    def to_dict(self):
        return {"kind": self.kind, "multi": self.multi.to_dict(), "single": self.single.to_dict()}


@dataclass(frozen=True)
class Scaled(MonotoneOp):
    """B(y) = outer * A(inner * y), with ``outer, inner > 0``.

    J^B_lam(x) = J^A_{lam * outer * inner}(inner * x) / inner.
    """

    op: MonotoneOp
    outer: float
    inner: float
    kind = "scaled"

    def __post_init__(self):
        if self.outer <= 0 or self.inner <= 0:
            raise NoResolvent("scaling factors must be positive")

    def resolvent(self, alpha, x):
        c = self.inner
        return self.op.resolvent(alpha * self.outer * c, c * _points(x)) / c

    def in_domain_closure(self, x, tol=EXACT_TOL):
        return self.op.in_domain_closure(self.inner * _points(x), tol * self.inner)

    @property
    def domain(self):
        dom = self.op.domain
        if dom is None:
            return None
        return _ScaledSet(dom, self.inner)

    def exact_minimal_section(self, x):
        inner = self.op.exact_minimal_section(self.inner * _points(x))
        return None if inner is None else self.outer * inner

    def to_dict(self):
        return {"kind": self.kind, "op": self.op.to_dict(), "outer": self.outer, "inner": self.inner}


@dataclass(frozen=True)
class _ScaledSet(ConvexSet):
    """{y : inner * y in base}."""

    base: ConvexSet
    inner: float

    def project(self, x):
        return self.base.project(self.inner * _points(x)) / self.inner

    def boundary_distance(self, x):
        return self.base.boundary_distance(self.inner * _points(x)) / self.inner


def _enc_float(v: float):
    """JSON has no infinities; encode them as the strings "inf" / "-inf"."""
    if np.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _dec_float(v) -> float:
    return float(v)


def op_from_dict(d: dict) -> MonotoneOp:
    """Rebuild an operator from its JSON description (``kind`` tag + parameters)."""
    kind = d["kind"]
    if kind == "zero":
        return ZeroOp()
    if kind == "indicator":
        return IndicatorSubdifferential(set_from_dict(d["set"]))
    if kind == "subdifferential":
        return ConvexSubdifferential(function_from_dict(d["func"]))
    if kind == "linear":
        return LinearPSD(np.asarray(d["matrix"], dtype=float))
    if kind == "graph1d":
        return Graph1D(
            tuple(map(tuple, d["vertices"])),
            _dec_float(d.get("left_slope", "inf")),
            _dec_float(d.get("right_slope", "inf")),
        )
    if kind == "sum":
        single = op_from_dict(d["single"])
        if not isinstance(single, LinearPSD):
            raise NoResolvent("the single-valued summand must be a linear operator")
        return Sum(op_from_dict(d["multi"]), single)
    if kind == "scaled":
        return Scaled(op_from_dict(d["op"]), float(d["outer"]), float(d["inner"]))
    raise ValueError(f"unknown operator kind {kind!r}")


# ---------------------------------------------------------------------------
# Resolvent calculus
# ---------------------------------------------------------------------------


def _check_alpha(alpha: float) -> None:
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")


def resolvent(op: MonotoneOp, alpha: float, x):
    """J_alpha(x) = (1 + alpha A)^{-1} x."""
    _check_alpha(alpha)
    return _unwrap(op.resolvent(alpha, _points(x)), x)


def yosida(op: MonotoneOp, alpha: float, x):
    """A^alpha(x) = (x - J_alpha(x)) / alpha."""
    _check_alpha(alpha)
    p = _points(x)
    return _unwrap((p - op.resolvent(alpha, p)) / alpha, x)


MINIMAL_SECTION_SCHEDULE = (1e-2, 1e-3, 1e-4)
MINIMAL_SECTION_AGREEMENT = 1e-6


def minimal_section(op: MonotoneOp, x):
    """Minimal-norm element A^0(x) = lim_{alpha -> 0} A^alpha(x).

    Closed forms are used where the operator kind has one.  Otherwise A^alpha
    is evaluated on ``MINIMAL_SECTION_SCHEDULE`` and extrapolated to alpha = 0
    (quadratic Richardson); the two-point extrapolation on the last pair must
    agree to ``MINIMAL_SECTION_AGREEMENT``, else a warning is logged.
    """
    p = _points(x)
    if not np.all(op.in_domain_closure(p)):
        raise OutsideDomain(f"point {x} lies outside the closure of D(A)")
    exact = op.exact_minimal_section(p)
    if exact is not None:
        return _unwrap(np.asarray(exact, dtype=float), x)
    a1, a2, a3 = MINIMAL_SECTION_SCHEDULE
    f1, f2, f3 = (yosida(op, a, p) for a in (a1, a2, a3))
    # Lagrange extrapolation to 0 through (a_i, f_i)
    w1 = a2 * a3 / ((a1 - a2) * (a1 - a3))
    w2 = a1 * a3 / ((a2 - a1) * (a2 - a3))
    w3 = a1 * a2 / ((a3 - a1) * (a3 - a2))
    est3 = w1 * f1 + w2 * f2 + w3 * f3
    est2 = (a2 * f3 - a3 * f2) / (a2 - a3)
    gap = np.max(np.abs(est3 - est2), initial=0.0)
    if gap > MINIMAL_SECTION_AGREEMENT * max(1.0, float(np.max(np.abs(est3), initial=0.0))):
        log.warning("minimal_section: extrapolations disagree by %.3g at %s", gap, x)
    return _unwrap(est3, x)


def moreau_envelope(f: ConvexFunction, alpha: float, x):
    """phi^alpha(x) = inf_y {phi(y) + |y - x|^2 / (2 alpha)}, attained at prox."""
    _check_alpha(alpha)
    p = _points(x)
    y = f.prox(p, alpha)
    val = f.value(y) + np.sum((y - p) ** 2, axis=-1) / (2.0 * alpha)
    return float(val) if np.ndim(val) == 0 else val


# ---------------------------------------------------------------------------
# Hypothesis validators
# ---------------------------------------------------------------------------


@dataclass
class OperatorFamily:
    """A family eps -> A_eps together with its limit A."""

    op_at: Callable[[float], MonotoneOp]
    limit_op: MonotoneOp

    def common_domain(self, points, eps_schedule: Sequence[float], tol: float = EXACT_TOL) -> bool:
        """Sampled check that closure(D(A_eps)) agrees with closure(D(A))."""
        pts = _points(points).reshape(-1, 1) if np.ndim(points) <= 1 else _points(points)
        ref = self.limit_op.in_domain_closure(pts, tol)
        return all(np.array_equal(self.op_at(e).in_domain_closure(pts, tol), ref) for e in eps_schedule)


@dataclass
class FamilyReport:
    alpha: float
    eps: list
    max_errors: list
    passed: bool
    common_domain: bool | None = None
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {
            "alpha": self.alpha,
            "eps": list(self.eps),
            "max_errors": list(self.max_errors),
            "passed": self.passed,
            "common_domain": self.common_domain,
        }


def check_family_convergence(
    fam: OperatorFamily,
    alpha: float,
    grid,
    eps_schedule: Sequence[float],
    threshold: float = 1e-2,
    tol: float = 1e-12,
) -> FamilyReport:
    """Resolvent distance max_y |J^eps_alpha(y) - J_alpha(y)| along a decreasing eps schedule.

    PASS when the errors are nonincreasing (up to ``tol``) and the last one is
    below ``threshold``.  A FAIL is reported, never raised.
    """
    pts = np.asarray(grid, dtype=float)
    if pts.size == 0:
        raise ValueError("grid must be nonempty")
    if pts.ndim <= 1:
        pts = pts.reshape(-1, 1)
    ref = fam.limit_op.resolvent(alpha, pts)
    errs = []
    for e in eps_schedule:
        diff = fam.op_at(e).resolvent(alpha, pts) - ref
        errs.append(float(np.max(np.linalg.norm(diff, axis=-1))))
    monotone = all(b <= a + tol for a, b in zip(errs, errs[1:]))
    passed = bool(monotone and errs[-1] < threshold)
    rep = FamilyReport(alpha, list(eps_schedule), errs, passed)
    rep.common_domain = fam.common_domain(pts, eps_schedule)
    if not monotone:
        rep.notes.append("errors not nonincreasing")
    return rep


def check_log_lipschitz(f: Callable, sample_pairs) -> float:
    """sup |f(x)-f(y)|^2 / (|x-y|^2 (1 v log|x-y|^{-1})) over the given pairs."""
    best = 0.0
    for x, y in sample_pairs:
        x, y = np.atleast_1d(np.asarray(x, float)), np.atleast_1d(np.asarray(y, float))
        r = float(np.linalg.norm(x - y))
        if r == 0:
            raise ValueError("pairs must be distinct")
        num = float(np.sum((np.asarray(f(x), float) - np.asarray(f(y), float)) ** 2))
        best = max(best, num / (r * r * max(1.0, np.log(1.0 / r))))
    return best


def check_local_boundedness(
    ops: Sequence[MonotoneOp], radius: float, m: int, n_samples: int = 256, seed: int = 0, alpha: float = 1e-4
) -> float:
    """Sampled sup of |A^alpha_eps(x)| over the ball of given radius, for each op in ``ops``.

    Only samples inside each operator's domain closure count (outside it
    A^alpha grows like dist / alpha by design).  A validator for uniform local
    boundedness at 0, not a proof of it.
    """
    rng = np.random.default_rng(seed)
    d = rng.standard_normal((n_samples, m))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    pts = d * radius * rng.uniform(0, 1, (n_samples, 1)) ** (1.0 / m)
    pts = np.vstack([np.zeros((1, m)), pts])
    best = 0.0
    for op in ops:
        inside = pts[op.in_domain_closure(pts)]
        if inside.size:
            best = max(best, float(np.max(np.linalg.norm(yosida(op, alpha, inside), axis=-1))))
    return best


def check_monotonicity(op: MonotoneOp, alpha: float, xs, ys) -> float:
    """min <A^alpha(x) - A^alpha(y), x - y> over paired samples (should be >= 0)."""
    xs, ys = _points(xs), _points(ys)
    ax, ay = yosida(op, alpha, xs), yosida(op, alpha, ys)
    return float(np.min(np.sum((ax - ay) * (xs - ys), axis=-1)))


@dataclass
class PropertyReport:
    """Worst-case margins of the resolvent/Yosida properties over random samples."""

    nonexpansive: float  # max |J x - J y| - |x - y|
    yosida_lipschitz: float  # max (|A^a x - A^a y| - |x - y| / a) / (1 + |x - y| / a)
    monotone: float  # min <A^a x - A^a y, x - y> / (1 + |A^a x - A^a y| |x - y|)
    n: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.nonexpansive <= self.tol and self.yosida_lipschitz <= self.tol and self.monotone >= -self.tol

    def to_dict(self) -> dict:
        return {"nonexpansive": self.nonexpansive, "yosida_lipschitz": self.yosida_lipschitz,
                "monotone": self.monotone, "n": self.n, "tol": self.tol, "passed": self.passed}


def operator_property_report(op: MonotoneOp, m: int, n: int = 1000, seed: int = 0,
                             box: float = 10.0, alpha_max: float = 10.0, tol: float | None = None) -> PropertyReport:
    """Sample alpha in (0, alpha_max] and x, y in [-box, box]^m and record the worst margins."""
    from mmsde.streams import stream

    if tol is None:
        tol = ITERATIVE_TOL if isinstance(op, Sum) else EXACT_TOL
    rng = stream(seed, "op-props")
    alphas = alpha_max * (1.0 - rng.random(n))
    xs = rng.uniform(-box, box, (n, m))
    ys = rng.uniform(-box, box, (n, m))
    ne, lip, mono = -np.inf, -np.inf, np.inf
    # resolvents are vectorized over points but take a scalar alpha
    for i in range(n):
        a = float(alphas[i])
        P = np.vstack([xs[i], ys[i]])
        J = op.resolvent(a, P)
        Y = (P - J) / a
        d = float(np.linalg.norm(xs[i] - ys[i]))
        ne = max(ne, float(np.linalg.norm(J[0] - J[1])) - d)
        dy = float(np.linalg.norm(Y[0] - Y[1]))
        # Yosida margins are relative: A^a is of size |x| / a, so absolute roundoff grows as a -> 0
        lip = max(lip, (dy - d / a) / (1.0 + d / a))
        mono = min(mono, float(np.dot(Y[0] - Y[1], xs[i] - ys[i])) / (1.0 + dy * d))
    return PropertyReport(ne, lip, mono, n, tol)
