"""Solver for the light-cone delay T = |r1 - r2(t - T, r0)| and the retarded state."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernel
from .dsl import STATUS_MAXITER
from .flow import FlowModel, OutsideSupportError

DEFAULT_TOL = 1e-12


class RetardedSolveError(RuntimeError):
    """The delay iteration hit its cap (usually a dishonest speed bound v1)."""


class OnMatterError(ValueError):
    """The observer sits on the matter (delay below the singularity epsilon)."""

    def __init__(self, message: str, sources=()):
        self.sources = [tuple(map(float, s)) for s in sources]
        super().__init__(message)


@dataclass(frozen=True)
class RetardedBatch:
    T: np.ndarray       # (N,)
    iters: np.ndarray   # (N,)
    jets: np.ndarray    # (N, 3, 4) at the retarded time

    @property
    def position(self):
        return self.jets[..., 0]

    @property
    def velocity(self):
        return self.jets[..., 1]

    @property
    def acceleration(self):
        return self.jets[..., 2]

    @property
    def jerk(self):
        return self.jets[..., 3]


def solve_batch(flow: FlowModel, r1, t, r0, tol: float = DEFAULT_TOL, *, T_init=None,
                newton: bool = True, maxiter: int | None = None,
                premapped: bool = False) -> RetardedBatch:
    """Solve the delay equation for many (r1, t, r0) triples at once.

    Arrays broadcast against each other; r1 and r0 have a trailing axis of 3.
    Starts from |r1 - r2(t, r0)| unless ``T_init`` is given.  With ``newton``
    each step is a Newton step on g(T) = T - |r1 - r2(t - T)| whenever
    |g'| >= 1e-3, otherwise a plain fixed-point step.  ``premapped`` says r0
    is already in the coordinates the trajectory expressions use.
    """
    if not tol > 0:
        raise ValueError("tol must be > 0")
    r1 = np.asarray(r1, float)
    r0 = np.asarray(r0, float)
    t = np.asarray(t, float)
    shape = np.broadcast_shapes(r1.shape[:-1], r0.shape[:-1], t.shape)
    r1 = np.ascontiguousarray(np.broadcast_to(r1, shape + (3,))).reshape(-1, 3)
    r0 = np.ascontiguousarray(np.broadcast_to(r0, shape + (3,))).reshape(-1, 3)
    t = np.ascontiguousarray(np.broadcast_to(t, shape)).reshape(-1)
    n = t.shape[0]
    if T_init is None:
        T0 = np.full(n, np.nan)
    else:
        T0 = np.ascontiguousarray(np.broadcast_to(np.asarray(T_init, float), shape)).reshape(-1)
    maxiter = flow.max_iterations if maxiter is None else int(maxiter)
    base_r0 = r0 if premapped else flow.index_map(r0)
    tape = flow.tape
    T, iters, status, jets, err_op = kernel.retard(
        tape.codes, tape.args, tape.starts, tape.depth, r1, t, base_r0, T0,
        float(tol), maxiter, bool(newton))
    bad = np.nonzero(status)[0]
    if bad.size:
        i = bad[0]
        if status[i] == STATUS_MAXITER:
            raise RetardedSolveError(
                f"delay iteration exceeded {maxiter} steps at r1={r1[i].tolist()}, t={t[i]!r}, "
                f"r0={r0[i].tolist()}; check the declared speed bound v1={flow.v1}")
        raise flow.domain_error(status, err_op, i, t, base_r0)
    return RetardedBatch(T.reshape(shape), iters.reshape(shape), jets.reshape(shape + (3, 4)))


def iteration_bound(T0: float, tol: float, v1: float) -> int:
    """Worst-case step count of the plain fixed-point iteration started at T0."""
    scale = max(1.0, T0)
    return math.ceil(math.log(tol / scale) / math.log(v1)) + 5


def _check_support(flow: FlowModel, r0) -> None:
    if not flow.support.contains(r0)[0]:
        raise OutsideSupportError(f"r0={list(np.asarray(r0, float))} lies outside the support")


def retarded_time(flow: FlowModel, r1, t: float, r0, tol: float = DEFAULT_TOL, *,
                  T_init: float | None = None, newton: bool = True) -> float:
    _check_support(flow, r0)
    res = solve_batch(flow, r1, t, r0, tol, T_init=T_init, newton=newton)
    return float(res.T)


@dataclass(frozen=True)
class RetardedState:
    T: float
    tau: float
    r12: np.ndarray
    v: np.ndarray
    a: np.ndarray
    jerk: np.ndarray


def retarded_state(flow: FlowModel, r1, t: float, r0, tol: float = DEFAULT_TOL) -> RetardedState:
    _check_support(flow, r0)
    res = solve_batch(flow, r1, t, r0, tol)
    T = float(res.T)
    j = res.jets
    return RetardedState(
        T=T,
        tau=t - T,
        r12=np.asarray(r1, float) - j[:, 0],
        v=j[:, 1].copy(),
        a=j[:, 2].copy(),
        jerk=j[:, 3].copy(),
    )
