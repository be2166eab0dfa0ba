"""Fundamental fields e, u, z of a flow and their closed-form partial derivatives.

The array helpers (:func:`fundamental_arrays`, :func:`jacobian_arrays`,
:func:`second_time_derivative_e`) work on any leading batch shape and are what
the field evaluators use.  :func:`fd_jacobian` is an independent oracle that
only ever calls the delay solver.
"""
from __future__ import annotations

from dataclasses import dataclass, fields as dc_fields

import numpy as np

from .flow import FlowModel
from .retarded import DEFAULT_TOL, OnMatterError, _check_support, solve_batch


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def fundamental_arrays(T, r12, v, a, jerk) -> dict:
    T = np.asarray(T, float)
    e = r12 / T[..., None]
    u = 1.0 / T
    z = 1.0 / (1.0 - _dot(e, v))
    return dict(T=T, r12=r12, e=e, u=u, z=z, v=v, a=a, jerk=jerk)


def jacobian_arrays(f: dict) -> dict:
    """Closed-form space and time partials; gradients index the derivative axis first."""
    e, u, z, v, a = f["e"], f["u"], f["z"], f["v"], f["a"]
    uu = u[..., None]
    zz = z[..., None]
    ea = _dot(e, a)
    vv = _dot(v, v)
    eye = np.eye(3)
    ei = e[..., :, None]  # derivative axis i, component j broadcast
    grad_T = zz * e
    grad_u = -(z * u * u)[..., None] * e
    grad_tau = -zz * e
    grad_v = -zz[..., None] * ei * a[..., None, :]
    grad_e = (-(u * z)[..., None, None] * ei * e[..., None, :]
              + uu[..., None] * eye
              + (u * z)[..., None, None] * ei * v[..., None, :])
    z2, z3 = z * z, z * z * z
    grad_z = ((-z3 * ea - u * z3 + u * z2 + u * z3 * vv)[..., None] * e
              + (u * z2)[..., None] * v)
    De = -uu * e + (u * z)[..., None] * e - (u * z)[..., None] * v
    return dict(
        grad_T=grad_T,
        grad_u=grad_u,
        grad_v=grad_v,
        grad_tau=grad_tau,
        grad_e=grad_e,
        grad_z=grad_z,
        DT=1.0 - z,
        Du=z * u * u - u * u,
        Dtau=z,
        Dv=zz * a,
        De=De,
        Dz=u * z - 2.0 * u * z2 + z3 * ea + u * z3 - u * z3 * vv,
        Da=zz * f["jerk"],
    )


def second_time_derivative_e(f: dict, j: dict) -> np.ndarray:
    """D^2 e from differentiating De = u(z-1)e - uzv once more in t."""
    e, u, z, v = f["e"], f["u"][..., None], f["z"][..., None], f["v"]
    Du, Dz = j["Du"][..., None], j["Dz"][..., None]
    return (Du * (z - 1.0) * e + u * Dz * e + u * (z - 1.0) * j["De"]
            - Du * z * v - u * Dz * v - u * z * j["Dv"])


@dataclass(frozen=True)
class FundamentalFields:
    T: float
    tau: float
    r12: np.ndarray
    e: np.ndarray
    u: float
    z: float
    v: np.ndarray
    a: np.ndarray
    jerk: np.ndarray


@dataclass(frozen=True)
class FundamentalJacobian:
    grad_T: np.ndarray
    grad_u: np.ndarray
    grad_v: np.ndarray     # [i, j] = d v_j / d x_i
    grad_tau: np.ndarray
    grad_e: np.ndarray     # [i, j] = d e_j / d x_i
    grad_z: np.ndarray
    DT: float
    Du: float
    Dtau: float
    Dv: np.ndarray
    De: np.ndarray
    Dz: float
    Da: np.ndarray

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dc_fields(self)}


IDENTITY_NAMES = ("grad_T", "grad_u", "grad_v", "grad_tau", "grad_e", "grad_z",
                  "DT", "Du", "Dtau", "Dv", "De", "Dz")


def _solve_fields(flow: FlowModel, r1, t, r0, tol) -> dict:
    r1 = np.asarray(r1, float)
    res = solve_batch(flow, r1, t, r0, tol)
    T = res.T
    if np.any(T < flow.singularity_epsilon):
        raise OnMatterError(f"observer r1={np.asarray(r1).tolist()} at t={t!r} is on the matter",
                            sources=np.asarray(r0, float).reshape(-1, 3))
    return fundamental_arrays(T, r1 - res.position, res.velocity, res.acceleration, res.jerk)


def eval_fundamentals(flow: FlowModel, r1, t: float, r0, tol: float = DEFAULT_TOL) -> FundamentalFields:
    _check_support(flow, r0)
    f = _solve_fields(flow, r1, t, r0, tol)
    T = float(f["T"])
    return FundamentalFields(T=T, tau=t - T, r12=f["r12"], e=f["e"], u=float(f["u"]),
                             z=float(f["z"]), v=f["v"], a=f["a"], jerk=f["jerk"])


def analytic_jacobian(flow: FlowModel, r1, t: float, r0, tol: float = DEFAULT_TOL) -> FundamentalJacobian:
    _check_support(flow, r0)
    f = _solve_fields(flow, r1, t, r0, tol)
    j = jacobian_arrays(f)
    return FundamentalJacobian(**{k: (float(v) if np.ndim(v) == 0 else np.asarray(v))
                                  for k, v in j.items()})


def default_fd_step(T: float) -> float:
    return 1e-4 * max(1.0, abs(T))


def fd_jacobian(flow: FlowModel, r1, t: float, r0, h: float | None = None,
                tol: float = DEFAULT_TOL) -> FundamentalJacobian:
    """Central differences of the solved fields with one Richardson level."""
    _check_support(flow, r0)
    r1 = np.asarray(r1, float)
    if h is None:
        h = default_fd_step(float(solve_batch(flow, r1, t, r0, tol).T))
    x = np.concatenate([r1, [t]])
    # stencil rows: axis k, step s in (h, -h, h/2, -h/2)
    steps = np.array([h, -h, h / 2, -h / 2])
    pts = np.repeat(x[None, :], 16, axis=0)
    for k in range(4):
        pts[4 * k:4 * k + 4, k] += steps
    f = _solve_fields(flow, pts[:, :3], pts[:, 3], r0, tol)
    tau = pts[:, 3] - f["T"]
    qty = {"T": f["T"], "u": f["u"], "tau": tau, "v": f["v"], "e": f["e"], "z": f["z"], "a": f["a"]}

    def deriv(q):
        q = q.reshape((4, 4) + q.shape[1:])
        d_h = (q[:, 0] - q[:, 1]) / (2 * h)
        d_h2 = (q[:, 2] - q[:, 3]) / h
        return (4.0 * d_h2 - d_h) / 3.0  # leading axis: x, y, z, t

    d = {k: deriv(v) for k, v in qty.items()}
    return FundamentalJacobian(
        grad_T=d["T"][:3], grad_u=d["u"][:3], grad_v=d["v"][:3], grad_tau=d["tau"][:3],
        grad_e=d["e"][:3], grad_z=d["z"][:3],
        DT=float(d["T"][3]), Du=float(d["u"][3]), Dtau=float(d["tau"][3]),
        Dv=d["v"][3], De=d["e"][3], Dz=float(d["z"][3]), Da=d["a"][3],
    )


def jacobian_defects(analytic: FundamentalJacobian, fd: FundamentalJacobian,
                     names=IDENTITY_NAMES) -> dict:
    """Per-identity max |analytic - fd| / max(1, |analytic|)."""
    out = {}
    for name in names:
        a = np.asarray(getattr(analytic, name), float)
        b = np.asarray(getattr(fd, name), float)
        out[name] = float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(a))))
    return out


def vector_gradients(f: dict) -> dict:
    """Vector forms of the gradients of T, u and z, assembled directly."""
    e, u, z, v, a = f["e"], f["u"][..., None], f["z"][..., None], f["v"], f["a"]
    ea = _dot(e, a)[..., None]
    vv = _dot(v, v)[..., None]
    return dict(
        nabla_T=z * e,
        nabla_u=-z * u * u * e,
        nabla_z=-z ** 3 * ea * e - u * z ** 3 * e + u * z * z * e + u * z * z * v + u * z ** 3 * vv * e,
    )


# the fifteen identities: name -> (closed-form key, finite-difference key)
IDENTITIES = {
    "D_i T": ("grad_T", "grad_T"),
    "D_i u": ("grad_u", "grad_u"),
    "D_i v": ("grad_v", "grad_v"),
    "D_i tau": ("grad_tau", "grad_tau"),
    "D_i e": ("grad_e", "grad_e"),
    "D_i z": ("grad_z", "grad_z"),
    "grad T": ("nabla_T", "grad_T"),
    "grad u": ("nabla_u", "grad_u"),
    "grad z": ("nabla_z", "grad_z"),
    "DT": ("DT", "DT"),
    "Du": ("Du", "Du"),
    "Dtau": ("Dtau", "Dtau"),
    "Dv": ("Dv", "Dv"),
    "De": ("De", "De"),
    "Dz": ("Dz", "Dz"),
}


def identity_defects(flow: FlowModel, r1, t: float, r0, h: float | None = None,
                     tol: float = DEFAULT_TOL) -> dict:
    """Normalized |closed form - FD| for each of the fifteen identities."""
    _check_support(flow, r0)
    f = _solve_fields(flow, r1, t, r0, tol)
    closed = jacobian_arrays(f)
    closed.update(vector_gradients(f))
    fd = fd_jacobian(flow, r1, t, r0, h, tol).as_dict()
    out = {}
    for name, (ck, fk) in IDENTITIES.items():
        a = np.asarray(closed[ck], float)
        b = np.asarray(fd[fk], float)
        out[name] = float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(a))))
    return out
