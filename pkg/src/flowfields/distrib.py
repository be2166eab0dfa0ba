"""Compactly supported bump test functions and the weak-derivative pairing check."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad

from .flow import FlowModel
from .fundamentals import fundamental_arrays, jacobian_arrays
from .retarded import DEFAULT_TOL, OnMatterError, solve_batch

MAX_NODES = 32


def _profile(s):
    """exp(-1/(1 - s^2)) on |s| < 1, zero elsewhere."""
    s = np.asarray(s, float)
    inside = np.abs(s) < 1.0
    out = np.zeros_like(s)
    si = s[inside]
    out[inside] = np.exp(-1.0 / (1.0 - si * si))
    return out


@lru_cache(maxsize=None)
def bump_normalization() -> float:
    """alpha with alpha * integral of the profile over [-1, 1] equal to 1."""
    val, _ = quad(lambda s: math.exp(-1.0 / (1.0 - s * s)), -1.0, 1.0,
                  epsabs=1e-14, epsrel=1e-13, limit=200)
    return 1.0 / val


def g0(s):
    return bump_normalization() * _profile(s)


def g0_prime(s):
    s = np.asarray(s, float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    si = s[inside]
    out[inside] = -2.0 * si / (1.0 - si * si) ** 2 * bump_normalization() * np.exp(-1.0 / (1.0 - si * si))
    return out


@dataclass(frozen=True)
class BumpTestFunction:
    """Product bump on the box center +- radii in (x, y, z, t), unit integral."""

    center: tuple
    radii: tuple
    alpha: float = field(init=False)

    def __post_init__(self):
        c = tuple(float(x) for x in self.center)
        r = tuple(float(x) for x in np.broadcast_to(np.asarray(self.radii, float), (4,)))
        if len(c) != 4:
            raise ValueError("center must be a 4-vector (x, y, z, t)")
        if min(r) <= 0:
            raise ValueError("radii must be > 0")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radii", r)
        object.__setattr__(self, "alpha", bump_normalization())

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        c, r = np.array(self.center), np.array(self.radii)
        return c - r, c + r

    def value_and_gradient(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Values [M] and gradients [M, 4] at points x[M, 4] (or a single point)."""
        x = np.asarray(x, float)
        single = x.ndim == 1
        x = x.reshape(-1, 4)
        r = np.array(self.radii)
        s = (x - np.array(self.center)) / r
        g = g0(s) / r
        dg = g0_prime(s) / (r * r)
        val = np.prod(g, axis=1)
        grad = np.empty_like(x)
        for k in range(4):
            others = np.prod(np.delete(g, k, axis=1), axis=1)
            grad[:, k] = dg[:, k] * others
        if single:
            return val[0], grad[0]
        return val, grad


def gauss_grid(lo, hi, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Legendre nodes [n^d, d] and weights on a box."""
    x, w = leggauss(n)
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    half, mid = 0.5 * (hi - lo), 0.5 * (hi + lo)
    axes = [mid[k] + half[k] * x for k in range(len(lo))]
    wts = [half[k] * w for k in range(len(lo))]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))
    weight = np.ones(1)
    for wk in wts:
        weight = np.multiply.outer(weight, wk).ravel()
    return pts, weight


def _fd_axis(field_fn, pts, k, h=1e-5):
    step = np.zeros(4)
    step[k] = h
    return (field_fn(pts + step) - field_fn(pts - step)) / (2 * h)


def weak_derivative_pairing(field_fn: Callable, bump: BumpTestFunction, axis: int, nodes: int = 16,
                            dfield: Callable | None = None) -> float:
    """Normalized |int D f b + int f D b| over the bump support.

    ``axis`` is 1..4 for x, y, z, t.  ``field_fn`` and ``dfield`` map points
    [M, 4] to values [M]; without ``dfield`` the strong derivative is taken by
    central differences.
    """
    if axis not in (1, 2, 3, 4):
        raise ValueError("axis must be 1, 2, 3 or 4")
    if not 1 <= nodes <= MAX_NODES:
        raise ValueError(f"nodes must be in 1..{MAX_NODES}")
    k = axis - 1
    lo, hi = bump.bounds()
    check = getattr(field_fn, "check_clear", None)
    if check is not None:
        check(lo, hi)
    pts, w = gauss_grid(lo, hi, nodes)
    b, db = bump.value_and_gradient(pts)
    f = np.asarray(field_fn(pts), float)
    df = np.asarray(dfield(pts), float) if dfield is not None else _fd_axis(field_fn, pts, k)
    strong = math.fsum((w * df * b).tolist())
    weak = math.fsum((w * f * db[:, k]).tolist())
    norm = math.fsum((w * np.abs(f * b)).tolist())
    if norm == 0.0:
        return abs(strong + weak)
    return abs(strong + weak) / norm


@dataclass(frozen=True)
class SourceField:
    """uz of one line of flow as a function of (x, y, z, t), with analytic partials."""

    flow: FlowModel
    r0: tuple
    tol: float = DEFAULT_TOL

    def _arrays(self, pts):
        pts = np.asarray(pts, float).reshape(-1, 4)
        res = solve_batch(self.flow, pts[:, :3], pts[:, 3], np.asarray(self.r0, float), self.tol)
        if np.any(res.T < self.flow.singularity_epsilon):
            raise OnMatterError("bump support touches the matter", sources=[self.r0])
        f = fundamental_arrays(res.T, pts[:, :3] - res.position, res.velocity,
                               res.acceleration, res.jerk)
        return f, jacobian_arrays(f)

    def check_clear(self, lo, hi, n_time: int = 257) -> None:
        """Raise if the line of flow enters the space-time box [lo, hi]."""
        ts = np.linspace(lo[3], hi[3], n_time)
        pos = self.flow.jets(ts, np.tile(self.r0, (n_time, 1)))[:, :, 0]
        pad = self.flow.v1 * (ts[1] - ts[0] if n_time > 1 else 0.0)
        inside = np.all((pos >= np.asarray(lo[:3]) - pad) & (pos <= np.asarray(hi[:3]) + pad), axis=1)
        if inside.any():
            raise OnMatterError(f"bump support touches the matter near t={ts[np.argmax(inside)]!r}",
                                sources=[self.r0])

    def __call__(self, pts) -> np.ndarray:
        f, _ = self._arrays(pts)
        return f["u"] * f["z"]

    def derivative(self, axis: int) -> Callable:
        k = axis - 1

        def d(pts):
            f, j = self._arrays(pts)
            if k < 3:
                return f["z"] * j["grad_u"][:, k] + f["u"] * j["grad_z"][:, k]
            return f["z"] * j["Du"] + f["u"] * j["Dz"]
        return d


def uz_field(flow: FlowModel, r0, tol: float = DEFAULT_TOL) -> SourceField:
    return SourceField(flow, tuple(float(x) for x in r0), tol)
