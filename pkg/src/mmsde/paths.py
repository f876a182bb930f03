"""Time grids, paths, Cameron-Martin controls and Brownian sampling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mmsde.csvio import read_csv, write_rows
from mmsde.errors import GridMismatch
from mmsde.streams import stream


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_n = n T / N on [0, T]."""

    T: float
    N: int

    def __post_init__(self):
        if not (isinstance(self.N, (int, np.integer)) and self.N >= 1):
            raise ValueError(f"TimeGrid requires an integer N >= 1, got N={self.N!r}")
        if not self.T > 0:
            raise ValueError(f"TimeGrid requires T > 0, got T={self.T!r}")

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.N + 1) * (self.T / self.N)

    @property
    def steps(self) -> np.ndarray:
        return np.full(self.N, self.dt)


@dataclass(frozen=True, eq=False)
class Path:
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.grid.N + 1:
            raise ValueError(f"path has {v.shape[0]} nodes, grid needs {self.grid.N + 1}")
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def __getitem__(self, n):
        return self.values[n]

    def to_csv(self, path, prefix: str = "x") -> None:
        cols = ["t"] + [f"{prefix}_{i + 1}" for i in range(self.dim)]
        write_rows(path, cols, np.column_stack([self.times, self.values]))

    @classmethod
    def from_csv(cls, path) -> "Path":
        header, data = read_csv(path)
        t = data[:, 0]
        grid = TimeGrid(float(t[-1]), len(t) - 1)
        return cls(grid, data[:, 1:])

    def dump(self, path) -> None:
        """Compact binary dump (npz) for resuming long runs."""
        np.savez(path, T=self.grid.T, N=self.grid.N, values=self.values)

    @classmethod
    def load(cls, path) -> "Path":
        with np.load(path) as z:
            return cls(TimeGrid(float(z["T"]), int(z["N"])), z["values"])


@dataclass(frozen=True, eq=False)
class Control:
    """Cameron-Martin element h with piecewise-constant derivative; h(0) = 0."""

    grid: TimeGrid
    hdot: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.hdot, dtype=float)
        if d.ndim == 1:
            d = d[:, None]
        if d.shape[0] != self.grid.N:
            raise ValueError(f"control has {d.shape[0]} steps, grid has {self.grid.N}")
        object.__setattr__(self, "hdot", d)

    @classmethod
    def constant(cls, grid: TimeGrid, value) -> "Control":
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(grid, np.tile(value, (grid.N, 1)))

    @classmethod
    def zero(cls, grid: TimeGrid, k: int) -> "Control":
        return cls(grid, np.zeros((grid.N, k)))

    @property
    def dim(self) -> int:
        return self.hdot.shape[1]

    def path(self) -> Path:
        vals = np.vstack([np.zeros((1, self.dim)), np.cumsum(self.hdot * self.grid.dt, axis=0)])
        return Path(self.grid, vals)

    def __mul__(self, c: float) -> "Control":
        return Control(self.grid, c * self.hdot)

    __rmul__ = __mul__

    def __add__(self, other: "Control") -> "Control":
        if other.grid != self.grid:
            raise GridMismatch("controls live on different grids")
        return Control(self.grid, self.hdot + other.hdot)

    def to_csv(self, path) -> None:
        cols = ["t"] + [f"hdot_{i + 1}" for i in range(self.dim)]
        write_rows(path, cols, np.column_stack([self.grid.times[:-1], self.hdot]))

    @classmethod
    def from_csv(cls, path, T: float) -> "Control":
        _, data = read_csv(path)
        return cls(TimeGrid(T, data.shape[0]), data[:, 1:])


def cm_norm(h: Control) -> float:
    """(sum_n |hdot_n|^2 dt)^{1/2}, exact for step functions."""
    return float(np.sqrt(np.sum(h.hdot**2) * h.grid.dt))


def sup_distance(u: Path, v: Path) -> float:
    """max_n |u(t_n) - v(t_n)| (Euclidean norm at each node)."""
    if u.grid != v.grid:
        raise GridMismatch(f"paths on different grids: {u.grid} vs {v.grid}")
    if u.dim != v.dim:
        raise GridMismatch(f"paths of different dimension: {u.dim} vs {v.dim}")
    return float(np.max(np.linalg.norm(u.values - v.values, axis=1)))


# ---------------------------------------------------------------------------
# Brownian motion
# ---------------------------------------------------------------------------


def _odd_part(N: int) -> tuple[int, int]:
    L = 0
    while N % 2 == 0:
        N //= 2
        L += 1
    return N, L


def brownian_values(k: int, grid: TimeGrid, seed: int, replica: int = 0, tag: str = "W") -> np.ndarray:
    """W at the grid nodes, shape (N+1, k), by the hierarchical stream rule.

    Write N = N0 * 2^L with N0 odd.  Level 0 draws the N0 increments of the
    coarse grid T/N0 from stream ``(seed, tag, replica, 0)``; level l >= 1 fills
    the midpoints of the level l-1 grid by Brownian-bridge sampling with
    normals from stream ``(seed, tag, replica, l)``.  Hence the path on
    ``TimeGrid(T, N0 * 2^l)`` is exactly the restriction of the path on
    ``TimeGrid(T, N0 * 2^(l+1))``.
    """
    if k < 1:
        raise ValueError("noise dimension k must be >= 1")
    N0, L = _odd_part(grid.N)
    h = grid.T / N0
    z = stream(seed, tag, replica, 0).standard_normal((N0, k))
    W = np.vstack([np.zeros((1, k)), np.cumsum(np.sqrt(h) * z, axis=0)])
    for level in range(1, L + 1):
        # bridge midpoint: mean of endpoints, variance h/4 where h is the parent step
        z = stream(seed, tag, replica, level).standard_normal((W.shape[0] - 1, k))
        mid = 0.5 * (W[:-1] + W[1:]) + 0.5 * np.sqrt(h) * z
        out = np.empty((2 * W.shape[0] - 1, k))
        out[0::2] = W
        out[1::2] = mid
        W = out
        h /= 2
    return W


def sample_brownian(k: int, grid: TimeGrid, seed: int, replica: int = 0, tag: str = "W") -> Path:
    """k-dimensional standard Brownian path on ``grid``; deterministic in (seed, replica, grid)."""
    return Path(grid, brownian_values(k, grid, seed, replica, tag))
