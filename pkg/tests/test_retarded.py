import math

import numpy as np
import pytest

from flowfields.flow import FlowModel, OutsideSupportError
from flowfields.retarded import (
    RetardedSolveError, iteration_bound, retarded_state, retarded_time, solve_batch,
)

from conftest import BOX, EXAMPLE_FLOWS, circular_flow, static_flow, uniform_delay, uniform_flow


def test_static_delay():
    assert retarded_time(static_flow(), [2, 0, 0], 3.7, [0, 0, 0]) == 2.0


def test_observer_on_trajectory():
    flow = uniform_flow()
    assert retarded_time(flow, [1, 0, 0], 2.0, [0, 0, 0]) == 0.0


def test_uniform_closed_form():
    T = retarded_time(uniform_flow(), [1, 0, 0], 0.0, [0, 0, 0])
    assert T == pytest.approx(uniform_delay([1, 0, 0], 0.0, [0, 0, 0], [0.5, 0, 0]), abs=1e-12)
    assert T == pytest.approx(2.0, abs=1e-12)


def test_uniform_random_against_quadratic():
    flow = FlowModel.from_strings("x0 + 0.3 * t", "y0 - 0.4 * t", "z0 + 0.5 * t", support=BOX, v1=0.75)
    rng = np.random.default_rng(11)
    vel = [0.3, -0.4, 0.5]
    for _ in range(200):
        r1, t, r0 = rng.uniform(-10, 10, 3), rng.uniform(-10, 10), rng.uniform(-1, 1, 3)
        assert retarded_time(flow, r1, t, r0) == pytest.approx(uniform_delay(r1, t, r0, vel), rel=1e-12, abs=1e-12)


def test_static_state():
    s = retarded_state(static_flow(), [2, 0, 0], 1.0, [0, 0, 0])
    assert s.tau == -1.0
    assert s.r12.tolist() == [2, 0, 0]
    assert not s.v.any() and not s.a.any()


def test_uniform_state():
    s = retarded_state(uniform_flow(), [1, 0, 0], 0.0, [0, 0, 0])
    assert s.tau == pytest.approx(-2.0)
    assert np.allclose(s.r12, [2, 0, 0])
    assert np.allclose(s.v, [0.5, 0, 0])
    assert s.tau + s.T == 0.0


def test_circular_self_consistency():
    flow = circular_flow()
    rng = np.random.default_rng(5)
    for _ in range(50):
        r1, t = rng.uniform(-5, 5, 3), rng.uniform(-5, 5)
        s = retarded_state(flow, r1, t, [1, 0, 0])
        assert abs(np.linalg.norm(s.r12) - s.T) <= 10 * 1e-12 * max(1.0, s.T)


def test_outside_support():
    with pytest.raises(OutsideSupportError):
        retarded_time(static_flow(), [3, 0, 0], 0.0, [5, 0, 0])


def test_bad_tolerance():
    with pytest.raises(ValueError):
        retarded_time(static_flow(), [3, 0, 0], 0.0, [0, 0, 0], tol=0.0)


def test_dishonest_speed_bound_hits_cap():
    flow = FlowModel.from_strings("x0 + 0.999999 * t", "y0", "z0", support=BOX, v1=0.5)
    with pytest.raises(RetardedSolveError, match="v1"):
        solve_batch(flow, [50, 0, 0], 60.0, [0, 0, 0], newton=False)


@pytest.mark.parametrize("name", sorted(EXAMPLE_FLOWS))
def test_fixed_point_iteration_bound(name):
    make, r0 = EXAMPLE_FLOWS[name]
    flow = make()
    rng = np.random.default_rng(2)
    r1 = rng.uniform(-8, 8, (300, 3))
    t = rng.uniform(-5, 5, 300)
    res = solve_batch(flow, r1, t, np.array(r0), newton=False)
    T0 = np.linalg.norm(r1 - flow.jets(t, np.broadcast_to(r0, (300, 3)))[:, :, 0], axis=1)
    bounds = np.array([iteration_bound(x, 1e-12, flow.v1) for x in T0])
    assert np.all(res.iters <= bounds)


@pytest.mark.parametrize("name", sorted(EXAMPLE_FLOWS))
def test_multistart_uniqueness(name):
    make, r0 = EXAMPLE_FLOWS[name]
    flow = make()
    rng = np.random.default_rng(4)
    r1 = rng.uniform(-8, 8, (100, 3))
    t = rng.uniform(-5, 5, 100)
    T = solve_batch(flow, r1, t, np.array(r0)).T
    for start in (np.zeros(100), 2 * T, np.full(100, 10.0)):
        for newton in (True, False):
            T2 = solve_batch(flow, r1, t, np.array(r0), T_init=start, newton=newton).T
            assert np.all(np.abs(T2 - T) <= 10 * 1e-12 * np.maximum(1.0, T))


def test_continuity_in_observer():
    flow = circular_flow()
    rng = np.random.default_rng(9)
    zmax = 1 / (1 - flow.v1)
    for _ in range(100):
        r1, t = rng.uniform(-5, 5, 3), rng.uniform(-5, 5)
        delta = rng.normal(size=3) * 1e-3
        a = retarded_time(flow, r1, t, [1, 0, 0])
        b = retarded_time(flow, r1 + delta, t, [1, 0, 0])
        assert abs(a - b) <= zmax * np.linalg.norm(delta) + 1e-11


def test_iteration_bound_formula():
    assert iteration_bound(1.0, 1e-12, 0.5) == math.ceil(math.log(1e-12) / math.log(0.5)) + 5
    assert iteration_bound(0.3, 1e-12, 0.5) == iteration_bound(1.0, 1e-12, 0.5)
