"""Seeded verification suites run by ``flowfields verify``."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import fields
from .distrib import BumpTestFunction, uz_field, weak_derivative_pairing
from .fundamentals import identity_defects
from .measure import pushforward
from .retarded import solve_batch
from .scene import Scene

SUITES = ("derivatives", "maxwell", "gauge", "pushforward", "weakderiv")
DEFAULT_TOLS = {
    "derivatives": 1e-5,
    "maxwell": 1e-4,
    "gauge": 1e-6,
    "pushforward": 1e-9,
    "pushforward_density": 1e-3,
    "weakderiv": 1e-3,
}
OBSERVER_PAD = 4.0
TIME_SPAN = 3.0
PUSH_SHIFT = 2.0


@dataclass
class CheckResult:
    name: str
    max_defect: float
    tol: float
    passed: bool


def _tol(scene: Scene, key: str, override: float | None) -> float:
    if override is not None:
        return float(override)
    return float(scene.tolerances.get(key, DEFAULT_TOLS[key]))


def _check(name: str, defects, tol: float) -> CheckResult:
    worst = float(np.max(defects)) if len(defects) else 0.0
    return CheckResult(name, worst, tol, bool(np.isfinite(worst) and worst <= tol))


def sample_sources(scene: Scene, rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniform random initial positions inside the flow support."""
    sup = scene.flow.support
    if sup.kind == "points":
        pts = np.asarray(sup.points, float)
        return pts[rng.integers(0, len(pts), n)]
    lo, hi = sup.bounding_box()
    out = []
    while len(out) < n:
        cand = lo + (hi - lo) * rng.random((4 * n, 3))
        out.extend(cand[sup.contains(cand)])
    return np.array(out[:n])


def sample_observers(scene: Scene, measure, rng: np.random.Generator, n: int,
                     margin: float, flow=None) -> np.ndarray:
    """Rows (x, y, z, t) whose delay to every source is at least ``margin``."""
    flow = scene.flow if flow is None else flow
    lo, hi = flow.support.bounding_box()
    lo, hi = lo - OBSERVER_PAD, hi + OBSERVER_PAD
    t0 = flow.t0
    out = []
    while len(out) < n:
        r1 = lo + (hi - lo) * rng.random((4 * n, 3))
        t = t0 - TIME_SPAN + 2 * TIME_SPAN * rng.random(4 * n)
        _, _, T_min = fields.evaluate(flow, measure, r1, t, ("phi",))
        keep = T_min >= margin
        out.extend(np.column_stack([r1, t])[keep])
    return np.array(out[:n])


def suite_derivatives(scene: Scene, rng, samples: int, tol: float) -> list[CheckResult]:
    flow = scene.flow
    lo, hi = flow.support.bounding_box()
    lo, hi = lo - OBSERVER_PAD, hi + OBSERVER_PAD
    defects: dict[str, list[float]] = {}
    done = 0
    while done < samples:
        r0 = sample_sources(scene, rng, 1)[0]
        r1 = lo + (hi - lo) * rng.random(3)
        t = flow.t0 - TIME_SPAN + 2 * TIME_SPAN * rng.random()
        if float(solve_batch(flow, r1, t, r0).T) <= 0.1:
            continue
        for name, d in identity_defects(flow, r1, t, r0).items():
            defects.setdefault(name, []).append(d)
        done += 1
    return [_check(f"derivatives/{name}", d, tol) for name, d in defects.items()]


_RESIDUAL_KEYS = ("gauge", "divB", "faraday", "divE", "ampere", "continuity", "wave_phi")


def suite_maxwell(scene: Scene, rng, samples: int, tol: float) -> list[CheckResult]:
    flow, q = scene.flow, scene.charge
    obs = sample_observers(scene, q, rng, samples, margin=1.0)
    res = {k: [] for k in _RESIDUAL_KEYS}
    agree = []
    for x in obs:
        r1, t = x[:3], float(x[3])
        for k, v in fields.residuals(flow, q, r1, t).normalized().items():
            res[k].append(v)
        a = fields.fields_feynman(flow, q, r1, t)
        b = fields.fields_from_potentials_fd(flow, q, r1, t)
        scale = max(np.linalg.norm(a.E), np.linalg.norm(a.B), 1e-30)
        agree.append(max(np.abs(a.E - b.E).max(), np.abs(a.B - b.B).max()) / scale)
    checks = [_check(f"maxwell/{k}", v, tol) for k, v in res.items()]
    checks.append(_check("maxwell/feynman_vs_potentials", agree, tol))
    return checks


def suite_gauge(scene: Scene, rng, samples: int, tol: float) -> list[CheckResult]:
    flow, q = scene.flow, scene.charge
    obs = sample_observers(scene, q, rng, samples, margin=1.0)
    defects = []
    for x in obs:
        g, scale = fields.gauge_residual(flow, q, x[:3], float(x[3]))
        defects.append(abs(g) / scale)
    return [_check("gauge/lorenz", defects, tol)]


def suite_pushforward(scene: Scene, rng, samples: int, tol: float | None) -> list[CheckResult]:
    flow, q = scene.flow, scene.charge
    key = "pushforward_density" if q.density is not None else "pushforward"
    tol = _tol(scene, key, tol)
    pf = pushforward(q, flow, flow.t0 + PUSH_SHIFT)
    moved = pf.reindexed_flow()
    obs = sample_observers(scene, q, rng, samples, margin=1.0)
    base, _, _ = fields.evaluate(flow, q, obs[:, :3], obs[:, 3], ("phi", "A", "E"))
    other, on_matter, _ = fields.evaluate(moved, pf, obs[:, :3], obs[:, 3], ("phi", "A", "E"))
    defects = []
    for i in range(len(obs)):
        scale = max(abs(base["phi"][i]), np.linalg.norm(base["A"][i]), np.linalg.norm(base["E"][i]), 1e-30)
        diff = max(abs(base["phi"][i] - other["phi"][i]),
                   np.abs(base["A"][i] - other["A"][i]).max(),
                   np.abs(base["E"][i] - other["E"][i]).max())
        defects.append(np.inf if on_matter[i] else diff / scale)
    return [_check(f"pushforward/t0+{PUSH_SHIFT:g}", defects, tol)]


BUMP_RADIUS = 0.5
BUMP_NODES = 16


def suite_weakderiv(scene: Scene, rng, samples: int, tol: float) -> list[CheckResult]:
    flow, q = scene.flow, scene.charge
    if q.atoms:
        r0 = np.asarray(q.atoms[0][0], float)
    else:
        lo, hi = flow.support.bounding_box()
        r0 = 0.5 * (lo + hi)
    fld = uz_field(flow, r0)
    one = type(q)(atoms=((tuple(r0), 1.0),))
    centers = sample_observers(scene, one, rng, max(1, min(samples, 2)), margin=3.0)
    defects = {axis: [] for axis in (1, 2, 3, 4)}
    for c in centers:
        bump = BumpTestFunction(tuple(c), (BUMP_RADIUS,) * 4)
        for axis in defects:
            defects[axis].append(weak_derivative_pairing(fld, bump, axis, BUMP_NODES, fld.derivative(axis)))
    names = {1: "x", 2: "y", 3: "z", 4: "t"}
    return [_check(f"weakderiv/{names[a]}", d, tol) for a, d in defects.items()]


def run_verify(scene: Scene, suite: str, samples: int = 20, tol: float | None = None,
               seed: int = 0) -> dict:
    """Run one suite (or ``all``) and return a JSON-ready report."""
    if suite != "all" and suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    names = SUITES if suite == "all" else (suite,)
    checks: list[CheckResult] = []
    for name in names:
        rng = np.random.default_rng([seed, SUITES.index(name)])
        if name == "pushforward":
            checks += suite_pushforward(scene, rng, samples, tol)
            continue
        runner = globals()[f"suite_{name}"]
        checks += runner(scene, rng, samples, _tol(scene, name, tol))
    return {
        "scene": scene.name,
        "suite": suite,
        "seed": seed,
        "samples": samples,
        "checks": [asdict(c) for c in checks],
        "passed": all(c.passed for c in checks),
    }


def format_report(report: dict) -> str:
    lines = [f"scene {report['scene']}  suite {report['suite']}  seed {report['seed']}  "
             f"samples {report['samples']}"]
    for c in report["checks"]:
        mark = "PASS" if c["passed"] else "FAIL"
        lines.append(f"{mark}  {c['name']:<34} max {c['max_defect']:.3e}  tol {c['tol']:.1e}")
    lines.append("ALL PASS" if report["passed"] else "FAILED")
    return "\n".join(lines)
