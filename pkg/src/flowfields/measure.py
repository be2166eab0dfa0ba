"""Signed charge/mass measures: finite atoms plus a density on a region.

Integration is a fixed-order, exactly rounded sum (``math.fsum``) over the
atoms followed by the tensor Gauss-Legendre nodes of every cell.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping, Sequence, Union

import numpy as np
from numpy.polynomial.legendre import leggauss

from .dsl import Const, Expr, ExprDomainError, compile_tape, free_vars, parse_expr, to_source
from .flow import FlowModel, SupportRegion
from . import kernel

Density = Union[Expr, Callable[[np.ndarray], np.ndarray], None]


def tensor_gauss_nodes(lo, hi, cells: int, nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite tensor Gauss-Legendre rule on a box; nodes ordered cell-major."""
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    x, w = leggauss(nodes)
    pts_axes, wts_axes = [], []
    for k in range(len(lo)):
        edges = np.linspace(lo[k], hi[k], cells + 1)
        half = 0.5 * (edges[1:] - edges[:-1])
        mid = 0.5 * (edges[1:] + edges[:-1])
        pts_axes.append(mid[:, None] + half[:, None] * x[None, :])   # (cells, nodes)
        wts_axes.append(half[:, None] * w[None, :])
    dim = len(lo)
    # index order: cell_0..cell_{d-1}, node_0..node_{d-1}
    cell_idx = np.indices((cells,) * dim).reshape(dim, -1).T
    node_idx = np.indices((nodes,) * dim).reshape(dim, -1).T
    n_c, n_n = len(cell_idx), len(node_idx)
    pts = np.empty((n_c, n_n, dim))
    wts = np.ones((n_c, n_n))
    for k in range(dim):
        pts[:, :, k] = pts_axes[k][cell_idx[:, k][:, None], node_idx[:, k][None, :]]
        wts *= wts_axes[k][cell_idx[:, k][:, None], node_idx[:, k][None, :]]
    return pts.reshape(-1, dim), wts.reshape(-1)


def _fsum_weighted(w: np.ndarray, f: np.ndarray) -> float:
    return math.fsum((w * f).tolist())


@dataclass(frozen=True)
class ChargeMeasure:
    """Point atoms plus an optional density (AST in x0, y0, z0, or a vectorised callable)."""

    atoms: tuple = ()                       # ((x, y, z), weight) pairs
    density: Density = None
    region: SupportRegion | None = None
    cells: int = 4
    nodes: int = 4
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(
            (tuple(float(c) for c in r0), float(w)) for r0, w in self.atoms))
        object.__setattr__(self, "params", dict(self.params))
        if self.density is not None:
            if self.region is None:
                raise ValueError("a density needs a region")
            if self.region.kind == "points":
                raise ValueError("a density region cannot be a point set")
            if self.cells < 1 or self.nodes < 1:
                raise ValueError("quadrature needs cells >= 1 and nodes >= 1")
            if not callable(self.density):
                extra = free_vars(self.density) - {"x0", "y0", "z0"}
                if extra:
                    raise ValueError(f"density may only depend on x0, y0, z0 (got {sorted(extra)})")

    @classmethod
    def from_spec(cls, atoms: Sequence = (), density: str | None = None,
                  region: SupportRegion | None = None, cells: int = 4, nodes: int = 4,
                  params: Mapping[str, float] | None = None) -> "ChargeMeasure":
        params = dict(params or {})
        ast = parse_expr(density, params) if density is not None else None
        return cls(tuple(atoms), ast, region, cells, nodes, params)

    @property
    def density_source(self) -> str | None:
        if self.density is None or callable(self.density):
            return None
        return to_source(self.density)

    def density_values(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, float).reshape(-1, 3)
        if self.density is None:
            return np.zeros(len(pts))
        if callable(self.density):
            return np.asarray(self.density(pts), float).reshape(-1)
        tape = self._density_tape
        jets, status, err_op = kernel.flow_jets(tape.codes, tape.args, tape.starts, tape.depth,
                                                np.zeros(len(pts)), pts)
        bad = np.nonzero(status)[0]
        if bad.size:
            i = bad[0]
            raise ExprDomainError(f"density undefined at node {pts[i].tolist()}",
                                  tape.describe(int(err_op[i])))
        return jets[:, 0, 0]

    @cached_property
    def _density_tape(self):
        return compile_tape([self.density, Const(0.0), Const(0.0)], self.params)

    @cached_property
    def _quadrature(self) -> tuple[np.ndarray, np.ndarray]:
        if self.density is None:
            return np.zeros((0, 3)), np.zeros(0)
        lo, hi = self.region.bounding_box()
        pts, w = tensor_gauss_nodes(lo, hi, self.cells, self.nodes)
        if self.region.kind == "ball":
            keep = self.region.contains(pts)
            pts, w = pts[keep], w[keep]
        return pts, w

    def quadrature_nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Gauss nodes and weights of the density part (indicator-clipped for balls)."""
        pts, w = self._quadrature
        return pts.copy(), w.copy()

    def atom_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.atoms:
            return np.zeros((0, 3)), np.zeros(0)
        return (np.array([a[0] for a in self.atoms], float),
                np.array([a[1] for a in self.atoms], float))

    def sources(self) -> tuple[np.ndarray, np.ndarray]:
        """All source points and their charges: atoms first, then density nodes."""
        pts, w = self._sources
        return pts.copy(), w.copy()

    @cached_property
    def _sources(self):
        ap, aw = self.atom_arrays()
        qp, qw = self._quadrature
        if len(qp):
            qw = qw * self.density_values(qp)
        return np.vstack([ap, qp]), np.concatenate([aw, qw])

    def integrate_scalar(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        """Integral of a vectorised scalar integrand f(points[N, 3]) -> [N]."""
        pts, w = self.sources()
        if len(pts) == 0:
            return 0.0
        vals = np.asarray(f(pts), float).reshape(-1)
        return _fsum_weighted(w, vals)

    def integrate_vector(self, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """Integral of a vectorised vector integrand f(points[N, 3]) -> [N, k]."""
        pts, w = self.sources()
        vals = np.asarray(f(pts), float)
        vals = vals.reshape(len(pts), -1)
        return np.array([_fsum_weighted(w, vals[:, k]) for k in range(vals.shape[1])])

    def totals(self) -> tuple[float, float]:
        """(total charge, total variation)."""
        _, aw = self.atom_arrays()
        qp, qw = self._quadrature
        rho = self.density_values(qp) if len(qp) else np.zeros(0)
        charge = math.fsum(aw.tolist() + (qw * rho).tolist())
        variation = math.fsum(np.abs(aw).tolist() + (qw * np.abs(rho)).tolist())
        return charge, variation

    def check_inside(self, support: SupportRegion) -> None:
        ap, _ = self.atom_arrays()
        if len(ap) and not np.all(support.contains(ap)):
            raise ValueError("an atom lies outside the flow support")
        if self.region is not None and self.density is not None:
            if support.kind == "points":
                raise ValueError("density region does not fit inside a point-set support")
            corners = self.region.sample(2)
            if not np.all(support.contains(corners)):
                raise ValueError("density region is not inside the flow support")

    def scaled(self, factor: float) -> "ChargeMeasure":
        dens = self.density
        if dens is not None:
            base = dens if callable(dens) else self.density_values

            def dens(pts, _base=base):
                return factor * np.asarray(_base(pts), float)
        return ChargeMeasure(tuple((r, factor * w) for r, w in self.atoms), dens,
                             self.region, self.cells, self.nodes, self.params)


# --------------------------------------------------------------------------
# Transport to a new initial time

def transport(flow: FlowModel, t_new: float, pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, float).reshape(-1, 3)
    return flow.jets(np.full(len(pts), float(t_new)), pts)[:, :, 0]


def _transport_jacobian(flow: FlowModel, t_new: float, pts: np.ndarray) -> np.ndarray:
    h = 1e-6 * np.maximum(1.0, np.abs(pts).max())
    n = len(pts)
    stencil = np.repeat(pts[:, None, :], 6, axis=1)
    for k in range(3):
        stencil[:, 2 * k, k] += h
        stencil[:, 2 * k + 1, k] -= h
    img = transport(flow, t_new, stencil.reshape(-1, 3)).reshape(n, 6, 3)
    jac = np.empty((n, 3, 3))  # [:, i, k] = d P_i / d r0_k
    for k in range(3):
        jac[:, :, k] = (img[:, 2 * k] - img[:, 2 * k + 1]) / (2 * h)
    return jac


def invert_transport(flow: FlowModel, t_new: float, targets, max_iter: int = 50) -> np.ndarray:
    """Solve r2(t_new, r0) = target for r0 by Newton's method with an FD Jacobian."""
    targets = np.asarray(targets, float).reshape(-1, 3)
    if len(targets) == 0:
        return targets.copy()
    r0 = 2.0 * targets - transport(flow, t_new, targets)
    scale = np.maximum(1.0, np.abs(targets).max(axis=1))
    for _ in range(max_iter):
        res = transport(flow, t_new, r0) - targets
        err = np.linalg.norm(res, axis=1)
        if np.all(err <= 4 * np.finfo(float).eps * scale):
            break
        jac = _transport_jacobian(flow, t_new, r0)
        r0 = r0 - np.linalg.solve(jac, res[:, :, None])[:, :, 0]
    return r0


@dataclass(frozen=True)
class ReindexedFlow(FlowModel):
    """The same lines of flow, indexed by positions at a later initial time."""

    base: FlowModel | None = None

    def index_map(self, r0: np.ndarray) -> np.ndarray:
        return invert_transport(self.base, self.t0, r0)


def _transported_bounds(flow: FlowModel, t_new: float, region: SupportRegion):
    img = transport(flow, t_new, region.sample(9))
    return img.min(axis=0), img.max(axis=0)


@dataclass(frozen=True)
class PushforwardMeasure:
    """Charge distribution moved along the flow to the initial time ``t_new``."""

    base: ChargeMeasure
    flow: FlowModel
    t_new: float

    @property
    def atoms(self) -> tuple:
        ap, aw = self.base.atom_arrays()
        if not len(ap):
            return ()
        moved = transport(self.flow, self.t_new, ap)
        return tuple((tuple(p), float(w)) for p, w in zip(moved, aw))

    def integrate_scalar(self, f) -> float:
        return self.base.integrate_scalar(lambda pts: f(transport(self.flow, self.t_new, pts)))

    def integrate_vector(self, f) -> np.ndarray:
        return self.base.integrate_vector(lambda pts: f(transport(self.flow, self.t_new, pts)))

    def density_at(self, pts) -> np.ndarray:
        """Transported density: rho(P^-1 r) / |det DP|, zero off the transported region."""
        pts = np.asarray(pts, float).reshape(-1, 3)
        if self.base.density is None:
            return np.zeros(len(pts))
        back = invert_transport(self.flow, self.t_new, pts)
        inside = self.base.region.contains(back)
        det = np.abs(np.linalg.det(_transport_jacobian(self.flow, self.t_new, back)))
        out = np.zeros(len(pts))
        if inside.any():
            out[inside] = self.base.density_values(back[inside]) / det[inside]
        return out

    def support(self) -> SupportRegion:
        sup = self.flow.support
        if sup.kind == "points":
            return SupportRegion.point_set(transport(self.flow, self.t_new, sup.sample(2)))
        lo, hi = _transported_bounds(self.flow, self.t_new, sup)
        return SupportRegion.box(lo, hi)

    def reindexed_flow(self) -> ReindexedFlow:
        f = self.flow
        return ReindexedFlow(f.exprs, f.params, self.support(), float(self.t_new), f.v1,
                             f.singularity_epsilon, base=f)

    @cached_property
    def _concrete(self) -> ChargeMeasure:
        return self.to_measure()

    def to_measure(self, cells: int | None = None, nodes: int | None = None) -> ChargeMeasure:
        """A concrete measure on the transported support with its own quadrature."""
        b = self.base
        region = None
        dens = None
        if b.density is not None:
            lo, hi = _transported_bounds(self.flow, self.t_new, b.region)
            region = SupportRegion.box(lo, hi)
            dens = self.density_at
        return ChargeMeasure(self.atoms, dens, region,
                             b.cells if cells is None else cells,
                             b.nodes if nodes is None else nodes)

    def sources(self) -> tuple[np.ndarray, np.ndarray]:
        return self._concrete.sources()


def pushforward(measure: ChargeMeasure, flow: FlowModel, t_new: float) -> PushforwardMeasure:
    return PushforwardMeasure(measure, flow, float(t_new))
