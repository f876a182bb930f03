"""Symbolic coefficient mini-language for drift and diffusion.

All coefficients are vectorized: they take points of shape ``(..., m)`` and
return ``(..., *shape)`` where ``shape`` is ``(m,)`` for drifts and
``(m, k)`` for diffusions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class Coefficient:
    kind: str = ""
    shape: tuple = ()

    def __call__(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


def _frozen_array(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Constant(Coefficient):
    value: np.ndarray
    kind = "constant"

    def __post_init__(self):
        object.__setattr__(self, "value", _frozen_array(self.value))

    @property
    def shape(self):
        return self.value.shape

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.value, x.shape[:-1] + self.value.shape)

    def to_dict(self):
        return {"kind": self.kind, "value": self.value.tolist()}


@dataclass(frozen=True, eq=False)
class Affine(Coefficient):
    """f(x) = offset + linear . x, with ``linear`` of shape ``shape + (m,)``."""

    offset: np.ndarray
    linear: np.ndarray
    kind = "affine"

    def __post_init__(self):
        off, lin = _frozen_array(self.offset), _frozen_array(self.linear)
        if lin.shape[:-1] != off.shape:
            raise ValueError(f"affine shapes disagree: offset {off.shape}, linear {lin.shape}")
        object.__setattr__(self, "offset", off)
        object.__setattr__(self, "linear", lin)

    @property
    def shape(self):
        return self.offset.shape

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.offset + np.tensordot(x, np.moveaxis(self.linear, -1, 0), axes=([x.ndim - 1], [0]))

    def to_dict(self):
        return {"kind": self.kind, "offset": self.offset.tolist(), "linear": self.linear.tolist()}


@dataclass(frozen=True, eq=False)
class Tabulated1D(Coefficient):
    """Piecewise-linear interpolation of a table in the first state coordinate.

    Values outside the table are held constant.  ``shape`` is ``(1,)`` for a
    drift and ``(1, 1)`` for a diffusion.
    """

    xs: np.ndarray
    ys: np.ndarray
    out_shape: tuple = (1,)
    kind = "tabulated"

    def __post_init__(self):
        xs, ys = _frozen_array(self.xs), _frozen_array(self.ys)
        if xs.ndim != 1 or xs.shape != ys.shape or np.any(np.diff(xs) <= 0):
            raise ValueError("tabulated coefficient needs strictly increasing xs and matching ys")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "out_shape", tuple(self.out_shape))

    @property
    def shape(self):
        return self.out_shape

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        v = np.interp(x[..., 0], self.xs, self.ys)
        return v.reshape(v.shape + (1,) * len(self.out_shape))

    def to_dict(self):
        return {"kind": self.kind, "xs": self.xs.tolist(), "ys": self.ys.tolist(), "shape": list(self.out_shape)}


@dataclass(frozen=True, eq=False)
class Rescaled(Coefficient):
    """y -> outer * base(inner * y)."""

    base: Coefficient
    outer: float
    inner: float
    kind = "rescaled"

    @property
    def shape(self):
        return self.base.shape

    def __call__(self, x):
        return self.outer * self.base(self.inner * np.asarray(x, dtype=float))

    def to_dict(self):
        return {"kind": self.kind, "base": self.base.to_dict(), "outer": self.outer, "inner": self.inner}


def coefficient_from_dict(d: dict, shape: tuple | None = None) -> Coefficient:
    kind = d["kind"]
    if kind == "constant":
        return Constant(d["value"])
    if kind == "affine":
        return Affine(d["offset"], d["linear"])
    if kind == "linear":
        lin = np.asarray(d["matrix"], dtype=float)
        return Affine(np.zeros(lin.shape[:-1]), lin)
    if kind == "tabulated":
        return Tabulated1D(d["xs"], d["ys"], tuple(d.get("shape", shape or (1,))))
    if kind == "rescaled":
        return Rescaled(coefficient_from_dict(d["base"], shape), float(d["outer"]), float(d["inner"]))
    raise ValueError(f"unknown coefficient kind {kind!r}")


def zero_drift(m: int) -> Constant:
    return Constant(np.zeros(m))


def identity_diffusion(m: int, k: int | None = None) -> Constant:
    return Constant(np.eye(m, k if k is not None else m))
