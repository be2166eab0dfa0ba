"""Potentials and fields of a moving charge measure, gravity analog, residual diagnostics.

Every quantity is an integral over the sources of a per-source integrand built
from the fundamental fields.  Observers are processed in chunks; each
observer's integral is a compensated sum in the measure's fixed source order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .flow import FlowModel
from .fundamentals import fundamental_arrays, jacobian_arrays, second_time_derivative_e
from .retarded import DEFAULT_TOL, OnMatterError, solve_batch

PAIR_CHUNK = 1 << 16


@dataclass(frozen=True)
class FieldSample:
    r1: np.ndarray
    t: float
    phi: float
    A: np.ndarray
    E: np.ndarray
    B: np.ndarray
    on_matter: bool = False


@dataclass(frozen=True)
class ResidualReport:
    gauge: float
    divB: float
    faradayResidual: np.ndarray
    divE_minus_S: float
    ampereResidual: np.ndarray
    continuity: float
    waveResidualPhi: float
    field_scale: float

    def normalized(self) -> dict:
        """Largest absolute component of each residual divided by the field scale."""
        s = self.field_scale
        return {
            "gauge": abs(self.gauge) / s,
            "divB": abs(self.divB) / s,
            "faraday": float(np.max(np.abs(self.faradayResidual))) / s,
            "divE": abs(self.divE_minus_S) / s,
            "ampere": float(np.max(np.abs(self.ampereResidual))) / s,
            "continuity": abs(self.continuity) / s,
            "wave_phi": abs(self.waveResidualPhi) / s,
        }


def _sources(measure):
    pts, w = measure.sources()
    return np.asarray(pts, float).reshape(-1, 3), np.asarray(w, float).reshape(-1)


def _integrands(f: dict, want: set) -> dict:
    u, z, e, v = f["u"], f["z"], f["e"], f["v"]
    uz = u * z
    out = {}
    if "phi" in want:
        out["phi"] = uz[..., None]
    if "A" in want:
        out["A"] = uz[..., None] * v
    if want & {"E", "B", "Bgrav"}:
        j = jacobian_arrays(f)
        if want & {"E", "B"}:
            uu = u[..., None]
            K = uu * uu * e + 2.0 * j["Du"][..., None] * e + uu * j["De"] + second_time_derivative_e(f, j)
            if "E" in want:
                out["E"] = K
            if "B" in want:
                out["B"] = np.cross(e, K)
        if "Bgrav" in want:
            grad_uz = z[..., None] * j["grad_u"] + u[..., None] * j["grad_z"]
            curl_A = np.cross(grad_uz, v) - (uz * z)[..., None] * np.cross(e, f["a"])
            out["Bgrav"] = -np.cross(e, curl_A)
    return out


def evaluate(flow: FlowModel, measure, r1, t, want=("phi", "A", "E", "B"),
             tol: float = DEFAULT_TOL) -> tuple[dict, np.ndarray, np.ndarray]:
    """Batch evaluation at observers ``r1[M, 3]`` and times ``t[M]``.

    Returns ``(values, on_matter, T_min)``.  Observers closer than the
    singularity epsilon (in delay) to any source get NaN values.
    """
    want = set(want)
    r1 = np.asarray(r1, float).reshape(-1, 3)
    t = np.broadcast_to(np.asarray(t, float), (len(r1),)).copy()
    pts, w = _sources(measure)
    n, m = len(pts), len(r1)
    dims = {"phi": 1, "A": 3, "E": 3, "B": 3, "Bgrav": 3}
    values = {k: np.full((m, dims[k]), np.nan) for k in want}
    on_matter = np.zeros(m, bool)
    T_min = np.full(m, np.inf)
    if n == 0:
        for k in want:
            values[k][:] = 0.0
        return _squeeze(values), on_matter, T_min
    base = flow.index_map(pts)
    chunk = max(1, PAIR_CHUNK // n)
    for lo in range(0, m, chunk):
        hi = min(m, lo + chunk)
        res = solve_batch(flow, r1[lo:hi, None, :], t[lo:hi, None], base[None, :, :], tol,
                          premapped=True)
        T = res.T
        T_min[lo:hi] = T.min(axis=1)
        bad = T_min[lo:hi] < flow.singularity_epsilon
        on_matter[lo:hi] = bad
        good = ~bad
        if not good.any():
            continue
        f = fundamental_arrays(T[good], r1[lo:hi][good][:, None, :] - res.position[good],
                               res.velocity[good], res.acceleration[good], res.jerk[good])
        ints = _integrands(f, want)
        rows = np.arange(lo, hi)[good]
        for k, arr in ints.items():
            weighted = (arr * w[None, :, None]).transpose(0, 2, 1)  # (M', C, N)
            sums = [math.fsum(row) for row in weighted.reshape(-1, n).tolist()]
            values[k][rows] = np.array(sums).reshape(len(rows), -1)
    return _squeeze(values), on_matter, T_min


def _squeeze(values: dict) -> dict:
    if "phi" in values:
        values["phi"] = values["phi"][:, 0]
    return values


def _offenders(flow, measure, r1, t):
    pts, _ = _sources(measure)
    res = solve_batch(flow, np.asarray(r1, float)[None, :], np.asarray([t], float)[:, None],
                      pts[None, :, :])
    return pts[res.T[0] < flow.singularity_epsilon]


def _single(flow, measure, r1, t, want, tol):
    r1 = np.asarray(r1, float)
    vals, on_matter, _ = evaluate(flow, measure, r1[None, :], [t], want, tol)
    if on_matter[0]:
        raise OnMatterError(f"observer r1={r1.tolist()} at t={t!r} is on the matter",
                            sources=_offenders(flow, measure, r1, t))
    return {k: v[0] for k, v in vals.items()}


def potentials(flow: FlowModel, measure, r1, t: float, tol: float = DEFAULT_TOL):
    """Scalar and vector potentials (phi, A) at one spacetime point."""
    vals = _single(flow, measure, r1, t, ("phi", "A"), tol)
    return float(vals["phi"]), vals["A"]


def fields_feynman(flow: FlowModel, measure, r1, t: float, tol: float = DEFAULT_TOL) -> FieldSample:
    vals = _single(flow, measure, r1, t, ("phi", "A", "E", "B"), tol)
    return FieldSample(np.asarray(r1, float), float(t), float(vals["phi"]), vals["A"],
                       vals["E"], vals["B"])


def gravity_fields(flow: FlowModel, mass_measure, r1, t: float, tol: float = DEFAULT_TOL) -> FieldSample:
    """Gravity analog: E is minus the electromagnetic E of the mass measure."""
    vals = _single(flow, mass_measure, r1, t, ("phi", "A", "E", "Bgrav"), tol)
    return FieldSample(np.asarray(r1, float), float(t), float(vals["phi"]), vals["A"],
                       -vals["E"], vals["Bgrav"])


def faraday_tensor(E, B) -> np.ndarray:
    E1, E2, E3 = map(float, E)
    B1, B2, B3 = map(float, B)
    return np.array([
        [0.0, E1, E2, E3],
        [-E1, 0.0, B3, -B2],
        [-E2, -B3, 0.0, B1],
        [-E3, B2, -B1, 0.0],
    ])


# --------------------------------------------------------------------------
# Finite-difference oracles and residuals

def default_step(T_min: float) -> float:
    return 0.005 * max(1.0, T_min)


def _stencil_eval(flow, measure, x0: np.ndarray, offsets: np.ndarray, want, tol):
    pts = x0[None, :] + offsets
    vals, on_matter, _ = evaluate(flow, measure, pts[:, :3], pts[:, 3], want, tol)
    if on_matter.any():
        i = int(np.argmax(on_matter))
        raise OnMatterError(f"stencil point r1={pts[i, :3].tolist()}, t={pts[i, 3]!r} is on the matter",
                            sources=_offenders(flow, measure, pts[i, :3], pts[i, 3]))
    return vals


def _first_offsets(h: float) -> np.ndarray:
    # rows: axis k in (x, y, z, t), step in (h, -h, h/2, -h/2)
    off = np.zeros((16, 4))
    for k in range(4):
        off[4 * k:4 * k + 4, k] = (h, -h, h / 2, -h / 2)
    return off


def _first_derivs(q: np.ndarray, h: float) -> np.ndarray:
    """Richardson central differences from a 16-row stencil; leading axis x, y, z, t."""
    q = q.reshape((4, 4) + q.shape[1:])
    d_h = (q[:, 0] - q[:, 1]) / (2 * h)
    d_h2 = (q[:, 2] - q[:, 3]) / h
    return (4.0 * d_h2 - d_h) / 3.0


def _curl(grad: np.ndarray) -> np.ndarray:
    # grad[i, j] = d F_j / d x_i
    return np.array([grad[1, 2] - grad[2, 1], grad[2, 0] - grad[0, 2], grad[0, 1] - grad[1, 0]])


def _step_for(flow, measure, r1, t, h, tol):
    if h is not None:
        return float(h)
    _, on_matter, T_min = evaluate(flow, measure, np.asarray(r1, float)[None, :], [t], ("phi",), tol)
    if on_matter[0]:
        _single(flow, measure, r1, t, ("phi",), tol)
    return default_step(float(T_min[0]))


def fields_from_potentials_fd(flow: FlowModel, measure, r1, t: float, h: float | None = None,
                              tol: float = DEFAULT_TOL) -> FieldSample:
    """E = -grad phi - dA/dt and B = curl A by Richardson central differences."""
    r1 = np.asarray(r1, float)
    h = _step_for(flow, measure, r1, t, h, tol)
    x0 = np.concatenate([r1, [t]])
    vals = _stencil_eval(flow, measure, x0, _first_offsets(h), ("phi", "A"), tol)
    dphi = _first_derivs(vals["phi"], h)
    dA = _first_derivs(vals["A"], h)
    phi, A = potentials(flow, measure, r1, t, tol)
    return FieldSample(r1, float(t), phi, A, -dphi[:3] - dA[3], _curl(dA[:3]))


def _box2_offsets(h: float) -> np.ndarray:
    # center, then +-h and +-h/2 along each axis
    rows = [np.zeros(4)]
    for k in range(4):
        for s in (h, -h, h / 2, -h / 2):
            r = np.zeros(4)
            r[k] = s
            rows.append(r)
    return np.array(rows)


def _wave_operator(q: np.ndarray, h: float) -> np.ndarray:
    """Richardson second differences combined into laplacian minus d^2/dt^2."""
    c = q[0]
    rest = q[1:].reshape((4, 4) + q.shape[1:])
    d2_h = (rest[:, 0] - 2 * c + rest[:, 1]) / (h * h)
    d2_h2 = (rest[:, 2] - 2 * c + rest[:, 3]) / (h * h / 4)
    d2 = (4.0 * d2_h2 - d2_h) / 3.0
    return d2[0] + d2[1] + d2[2] - d2[3]


def dalembertian(flow: FlowModel, measure, r1, t: float, h: float | None = None,
                 tol: float = DEFAULT_TOL) -> tuple[float, np.ndarray]:
    """Box phi and box A by second differences (zero in vacuum)."""
    r1 = np.asarray(r1, float)
    h = _step_for(flow, measure, r1, t, h, tol)
    x0 = np.concatenate([r1, [t]])
    vals = _stencil_eval(flow, measure, x0, _box2_offsets(h), ("phi", "A"), tol)
    return float(_wave_operator(vals["phi"], h)), _wave_operator(vals["A"], h)


def gauge_residual(flow: FlowModel, measure, r1, t: float, h: float | None = None,
                   tol: float = DEFAULT_TOL) -> tuple[float, float]:
    """(div A + d phi/dt, field scale) at one vacuum point."""
    r1 = np.asarray(r1, float)
    center, on_matter, T_min = evaluate(flow, measure, r1[None, :], [t], ("E",), tol)
    if on_matter[0]:
        _single(flow, measure, r1, t, ("phi",), tol)
    h = default_step(float(T_min[0])) if h is None else float(h)
    vals = _stencil_eval(flow, measure, np.concatenate([r1, [t]]), _first_offsets(h), ("phi", "A"), tol)
    dphi = _first_derivs(vals["phi"], h)
    dA = _first_derivs(vals["A"], h)
    scale = max(float(np.linalg.norm(center["E"][0])), float(T_min[0]) ** -2, 1e-30)
    return float(np.trace(dA[:3]) + dphi[3]), scale


def residuals(flow: FlowModel, measure, r1, t: float, h: float | None = None,
              tol: float = DEFAULT_TOL) -> ResidualReport:
    """Gauge, Maxwell, continuity and wave residuals at a vacuum point."""
    r1 = np.asarray(r1, float)
    center, on_matter, T_min = evaluate(flow, measure, r1[None, :], [t], ("phi", "A", "E", "B"), tol)
    if on_matter[0]:
        _single(flow, measure, r1, t, ("phi",), tol)
    h = default_step(float(T_min[0])) if h is None else float(h)
    x0 = np.concatenate([r1, [t]])

    vals = _stencil_eval(flow, measure, x0, _first_offsets(h), ("phi", "A", "E", "B"), tol)
    d = {k: _first_derivs(v, h) for k, v in vals.items()}
    gauge = float(np.trace(d["A"][:3]) + d["phi"][3])
    divB = float(np.trace(d["B"][:3]))
    faraday = _curl(d["E"][:3]) + d["B"][3]
    divE = float(np.trace(d["E"][:3]))
    ampere = _curl(d["B"][:3]) - d["E"][3]

    # box of the potentials at the center and at +-h along every axis
    box_off = _box2_offsets(h)
    outer = np.zeros((9, 4))
    for k in range(4):
        outer[1 + 2 * k, k] = h
        outer[2 + 2 * k, k] = -h
    all_off = (outer[:, None, :] + box_off[None, :, :]).reshape(-1, 4)
    pv = _stencil_eval(flow, measure, x0, all_off, ("phi", "A"), tol)
    nb = len(box_off)
    box_phi = np.array([_wave_operator(pv["phi"][i * nb:(i + 1) * nb], h) for i in range(9)])
    box_A = np.array([_wave_operator(pv["A"][i * nb:(i + 1) * nb], h) for i in range(9)])
    S = -box_phi
    J = -box_A
    dS_dt = (S[7] - S[8]) / (2 * h)
    divJ = sum((J[1 + 2 * k, k] - J[2 + 2 * k, k]) / (2 * h) for k in range(3))
    continuity = float(dS_dt + divJ)

    E0, B0 = center["E"][0], center["B"][0]
    u_max = 1.0 / float(T_min[0])
    scale = max(float(np.linalg.norm(E0)), float(np.linalg.norm(B0)), u_max * u_max, 1e-30)
    return ResidualReport(gauge, divB, faraday, divE, ampere, continuity, float(box_phi[0]), scale)


# --------------------------------------------------------------------------
# Grids

def grid_points(axes: dict) -> np.ndarray:
    """Rows (x, y, z, t) in t-major order, then x, y, z lexicographic."""
    xs, ys, zs, ts = (np.asarray(axes[k], float) for k in ("x", "y", "z", "t"))
    T, X, Y, Z = np.meshgrid(ts, xs, ys, zs, indexing="ij")
    return np.stack([X.ravel(), Y.ravel(), Z.ravel(), T.ravel()], axis=1)


def evaluate_grid(flow: FlowModel, measure, points: np.ndarray, tol: float = DEFAULT_TOL):
    """Fields on (x, y, z, t) rows; on-matter rows come back as NaN with a flag."""
    points = np.asarray(points, float).reshape(-1, 4)
    vals, on_matter, _ = evaluate(flow, measure, points[:, :3], points[:, 3],
                                  ("phi", "A", "E", "B"), tol)
    return vals, on_matter
