"""Flows of matter: trajectory expressions over a compact initial support."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import kernel
from .dsl import (
    STATUS_MESSAGES, Expr, ExprDomainError, Tape, compile_tape, free_params,
    parse_expr, to_source,
)

DEFAULT_EPSILON = 1e-9
SUPPORT_TOL = 1e-12


class OutsideSupportError(ValueError):
    pass


@dataclass(frozen=True)
class SupportRegion:
    """Compact initial support: an axis-aligned box, a ball, or a finite point set."""

    kind: str
    lo: tuple = ()
    hi: tuple = ()
    center: tuple = ()
    radius: float = 0.0
    points: tuple = ()

    def __post_init__(self):
        if self.kind == "box":
            lo, hi = np.asarray(self.lo, float), np.asarray(self.hi, float)
            if lo.shape != (3,) or hi.shape != (3,):
                raise ValueError("box corners must be 3-vectors")
            if np.any(lo > hi):
                raise ValueError("box min must be <= max componentwise")
        elif self.kind == "ball":
            if np.asarray(self.center, float).shape != (3,):
                raise ValueError("ball center must be a 3-vector")
            if not self.radius > 0:
                raise ValueError("ball radius must be > 0")
        elif self.kind == "points":
            pts = np.asarray(self.points, float).reshape(-1, 3)
            if len(pts) == 0:
                raise ValueError("point set must be non-empty")
            if len(np.unique(pts, axis=0)) != len(pts):
                raise ValueError("point set contains duplicates")
        else:
            raise ValueError(f"unknown support kind {self.kind!r}")

    @classmethod
    def box(cls, lo, hi) -> "SupportRegion":
        return cls("box", lo=tuple(map(float, lo)), hi=tuple(map(float, hi)))

    @classmethod
    def ball(cls, center, radius) -> "SupportRegion":
        return cls("ball", center=tuple(map(float, center)), radius=float(radius))

    @classmethod
    def point_set(cls, points) -> "SupportRegion":
        return cls("points", points=tuple(tuple(map(float, p)) for p in points))

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "box":
            return np.array(self.lo, float), np.array(self.hi, float)
        if self.kind == "ball":
            c = np.array(self.center, float)
            return c - self.radius, c + self.radius
        pts = np.asarray(self.points, float)
        return pts.min(axis=0), pts.max(axis=0)

    def contains(self, r0) -> np.ndarray:
        r0 = np.asarray(r0, float).reshape(-1, 3)
        if self.kind == "box":
            lo, hi = self.bounding_box()
            scale = SUPPORT_TOL * np.maximum(1.0, np.abs(r0))
            return np.all((r0 >= lo - scale) & (r0 <= hi + scale), axis=1)
        if self.kind == "ball":
            d = np.linalg.norm(r0 - np.asarray(self.center), axis=1)
            return d <= self.radius * (1 + SUPPORT_TOL) + SUPPORT_TOL
        pts = np.asarray(self.points, float)
        dist = np.linalg.norm(r0[:, None, :] - pts[None, :, :], axis=2)
        return np.any(dist <= SUPPORT_TOL * np.maximum(1.0, np.abs(pts).max()), axis=1)

    def sample(self, n: int) -> np.ndarray:
        """Deterministic sample: an n-per-axis grid (clipped to the ball), or all points."""
        if self.kind == "points":
            return np.asarray(self.points, float).reshape(-1, 3)
        lo, hi = self.bounding_box()
        axes = [np.linspace(lo[k], hi[k], n) if hi[k] > lo[k] else np.array([lo[k]])
                for k in range(3)]
        grid = np.array(list(itertools.product(*axes)), float)
        if self.kind == "ball":
            grid = grid[self.contains(grid)]
            grid = np.vstack([np.asarray(self.center, float)[None], grid])
            grid = np.unique(grid, axis=0)
        return grid

    def to_dict(self) -> dict:
        if self.kind == "box":
            return {"type": "box", "min": list(self.lo), "max": list(self.hi)}
        if self.kind == "ball":
            return {"type": "ball", "center": list(self.center), "radius": self.radius}
        return {"type": "points", "points": [list(p) for p in self.points]}


@dataclass(frozen=True)
class FlowModel:
    """Trajectory family r2(t, r0) given by three expressions in t, x0, y0, z0."""

    exprs: tuple  # three ASTs
    params: Mapping[str, float]
    support: SupportRegion
    t0: float = 0.0
    v1: float = 0.5
    singularity_epsilon: float = DEFAULT_EPSILON
    tape: Tape = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.exprs) != 3:
            raise ValueError("a flow needs exactly three component expressions")
        if not 0.0 < self.v1 < 1.0:
            raise ValueError("v1 must be < 1 (and > 0)")
        if not self.singularity_epsilon > 0:
            raise ValueError("singularity_epsilon must be > 0")
        missing = set().union(*(free_params(e) for e in self.exprs)) - set(self.params)
        if missing:
            raise ValueError(f"unbound parameters: {sorted(missing)}")
        object.__setattr__(self, "params", dict(self.params))
        object.__setattr__(self, "tape", compile_tape(self.exprs, self.params))

    @classmethod
    def from_strings(cls, x: str, y: str, z: str, *, params: Mapping[str, float] | None = None,
                     support: SupportRegion, t0: float = 0.0, v1: float = 0.5,
                     singularity_epsilon: float = DEFAULT_EPSILON) -> "FlowModel":
        params = dict(params or {})
        exprs = tuple(parse_expr(s, params) for s in (x, y, z))
        return cls(exprs, params, support, float(t0), float(v1), float(singularity_epsilon))

    @property
    def sources(self) -> tuple[str, str, str]:
        return tuple(to_source(e) for e in self.exprs)

    @property
    def max_iterations(self) -> int:
        return 5000 if self.v1 > 0.95 else 200

    def index_map(self, r0: np.ndarray) -> np.ndarray:
        """Map source indices to the r0 the trajectory expressions expect (identity here)."""
        return r0

    def jets(self, t, r0) -> np.ndarray:
        """Jets (N, 3, 4) of position components at (t[i], r0[i]); derivative order last."""
        t = np.atleast_1d(np.asarray(t, float))
        jets, status, err_op = self.try_jets(t, r0)
        bad = np.nonzero(status)[0]
        if bad.size:
            raise self.domain_error(status, err_op, bad[0], t, r0)
        return jets

    def try_jets(self, t, r0):
        """Like :meth:`jets` but returns ``(jets, status, err_op)`` instead of raising."""
        t = np.atleast_1d(np.asarray(t, float))
        r0 = self.index_map(np.asarray(r0, float).reshape(-1, 3))
        tape = self.tape
        return kernel.flow_jets(tape.codes, tape.args, tape.starts, tape.depth, t, r0)

    def domain_error(self, status, err_op, i, t, r0) -> ExprDomainError:
        r0 = np.asarray(r0, float).reshape(-1, 3)
        return ExprDomainError(
            f"{STATUS_MESSAGES[int(status[i])]} at t={float(np.atleast_1d(t)[i])!r}, "
            f"r0={r0[i].tolist()}",
            self.tape.describe(int(err_op[i])))


def kinematics(flow: FlowModel, t: float, r0: Sequence[float]):
    """Position, velocity, acceleration and jerk of the line of flow through r0."""
    r0 = np.asarray(r0, float)
    if not flow.support.contains(r0)[0]:
        raise OutsideSupportError(f"r0={r0.tolist()} lies outside the support")
    j = flow.jets([t], r0)[0]
    return j[:, 0].copy(), j[:, 1].copy(), j[:, 2].copy(), j[:, 3].copy()


@dataclass
class ValidationReport:
    t_window: tuple
    max_speed: float
    argmax_speed: tuple  # (t, r0)
    max_initial_offset: float
    min_separation: float
    collision: bool
    domain_errors: list
    speed_ok: bool
    identity_ok: bool
    passed: bool

    def summary(self) -> str:
        lines = [
            f"window            [{self.t_window[0]:g}, {self.t_window[1]:g}]",
            f"max |v|           {self.max_speed:.6g} at t={self.argmax_speed[0]:g}, r0={list(self.argmax_speed[1])}",
            f"max |r2(t0)-r0|   {self.max_initial_offset:.3g}",
            f"min separation    {self.min_separation:.6g}" + (" (COLLISION)" if self.collision else ""),
        ]
        lines += [f"domain error      {e}" for e in self.domain_errors]
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines)


def default_window(flow: FlowModel, t_max_query: float | None = None) -> tuple[float, float]:
    hi = flow.t0 if t_max_query is None else max(flow.t0, t_max_query)
    return (flow.t0 - 10.0, hi + 10.0)


def _segment_min_distance(d0: np.ndarray, d1: np.ndarray) -> np.ndarray:
    # min over s in [0,1] of |d0 + s (d1 - d0)|, rows are pairs
    dd = d1 - d0
    den = np.sum(dd * dd, axis=-1)
    s = np.where(den > 0, -np.sum(d0 * dd, axis=-1) / np.where(den > 0, den, 1.0), 0.0)
    s = np.clip(s, 0.0, 1.0)
    return np.linalg.norm(d0 + s[..., None] * dd, axis=-1)


def validate_flow(flow: FlowModel, t_window: tuple | None = None, n_time: int = 41,
                  n_space: int = 5) -> ValidationReport:
    """Check the speed bound, identity at t0 and injectivity of P_t on samples."""
    if n_time < 2 or n_space < 2:
        raise ValueError("n_time and n_space must be >= 2")
    window = tuple(t_window) if t_window is not None else default_window(flow)
    ts = np.linspace(window[0], window[1], n_time)
    pts = flow.support.sample(n_space)
    m = len(pts)
    errors = []

    tt = np.repeat(ts, m)
    rr = np.tile(pts, (n_time, 1))
    jets, status, err_op = flow.try_jets(tt, rr)
    bad = np.nonzero(status)[0]
    if bad.size:
        errors.append(f"{bad.size} samples failed; first: {flow.domain_error(status, err_op, bad[0], tt, rr)}")
        jets[bad] = np.nan
    speed = np.linalg.norm(jets[:, :, 1], axis=1)
    if np.all(np.isnan(speed)):
        k = 0
        max_speed = float("nan")
    else:
        k = int(np.nanargmax(speed))
        max_speed = float(speed[k])
    argmax = (float(tt[k]), tuple(float(x) for x in rr[k]))

    try:
        at_t0 = flow.jets(np.full(m, flow.t0), pts)[:, :, 0]
        offset = float(np.max(np.linalg.norm(at_t0 - pts, axis=1)))
    except ExprDomainError as exc:
        errors.append(str(exc))
        offset = float("nan")

    pos = jets[:, :, 0].reshape(n_time, m, 3)
    if m > 1:
        ia, ib = np.triu_indices(m, k=1)
        sep = pos[:, ia, :] - pos[:, ib, :]  # (n_time, pairs, 3)
        seg = _segment_min_distance(sep[:-1], sep[1:])
        min_sep = float(np.nanmin(seg)) if np.isfinite(seg).any() else float("nan")
    else:
        min_sep = float("inf")
    collision = bool(min_sep < flow.singularity_epsilon)

    speed_ok = bool(max_speed <= flow.v1 * (1 + 1e-12))
    identity_ok = bool(offset <= 1e-9 * max(1.0, float(np.abs(pts).max())))
    passed = speed_ok and identity_ok and not collision and not errors
    return ValidationReport(window, max_speed, argmax, offset, min_sep, collision,
                            errors, speed_ok, identity_ok, passed)
