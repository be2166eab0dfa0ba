import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowfields.flow import SupportRegion
from flowfields.measure import ChargeMeasure, pushforward, tensor_gauss_nodes

from conftest import circular_flow, static_flow, uniform_flow

UNIT = SupportRegion.box([0, 0, 0], [1, 1, 1])


@pytest.mark.parametrize("cells,nodes", [(1, 1), (2, 3), (4, 4)])
def test_constant_exact(cells, nodes):
    m = ChargeMeasure.from_spec(density="1", region=UNIT, cells=cells, nodes=nodes)
    assert m.integrate_scalar(lambda p: np.ones(len(p))) == pytest.approx(1.0, abs=1e-12)


def test_quadratic_moment():
    m = ChargeMeasure.from_spec(density="1", region=UNIT, cells=2, nodes=2)
    assert m.integrate_scalar(lambda p: p[:, 0] ** 2) == pytest.approx(1 / 3, abs=1e-10)


def test_gauss_rule_against_numpy():
    pts, w = tensor_gauss_nodes([0, 0, 0], [1, 2, 3], 3, 5)
    assert len(pts) == 27 * 125
    assert w.sum() == pytest.approx(6.0)
    assert np.sum(w * pts[:, 0] ** 9 * pts[:, 2] ** 4) == pytest.approx(0.1 * 2 * 3 ** 5 / 5, rel=1e-13)


def test_totals_atoms():
    m = ChargeMeasure(atoms=(((0, 0, 0), 1.0), ((1, 0, 0), -1.0)))
    assert m.totals() == (0.0, 2.0)


def test_totals_constant_density():
    m = ChargeMeasure.from_spec(density="2", region=UNIT)
    assert m.totals() == pytest.approx((2.0, 2.0), abs=1e-12)


def test_totals_odd_density():
    m = ChargeMeasure.from_spec(density="x0", region=SupportRegion.box([-1] * 3, [1] * 3), cells=2)
    q, var = m.totals()
    assert q == pytest.approx(0.0, abs=1e-13)
    assert var == pytest.approx(4.0, abs=1e-12)


def test_ball_indicator():
    ball = SupportRegion.ball([0, 0, 0], 1.0)
    m = ChargeMeasure.from_spec(density="1", region=ball, cells=16, nodes=4)
    # the clipped rule converges slowly; a few digits is all it promises
    assert m.totals()[0] == pytest.approx(4 * np.pi / 3, rel=2e-2)
    pts, _ = m.quadrature_nodes()
    assert ball.contains(pts).all()


def test_callable_density_and_sources_order():
    m = ChargeMeasure(atoms=(((0, 0, 0), 3.0),), density=lambda p: p[:, 0], region=UNIT, cells=1, nodes=2)
    pts, w = m.sources()
    assert pts[0].tolist() == [0, 0, 0] and w[0] == 3.0
    assert w[1:].sum() == pytest.approx(0.5)


def test_density_needs_region():
    with pytest.raises(ValueError):
        ChargeMeasure.from_spec(density="1")


def test_density_variables_restricted():
    with pytest.raises(ValueError):
        ChargeMeasure.from_spec(density="t", region=UNIT)


def test_check_inside():
    m = ChargeMeasure(atoms=(((2, 0, 0), 1.0),))
    with pytest.raises(ValueError):
        m.check_inside(SupportRegion.box([-1] * 3, [1] * 3))


def test_doubling_cells_converges():
    dens = "exp(-(x0**2 + y0**2 + z0**2))"
    region = SupportRegion.box([-1] * 3, [1] * 3)
    a = ChargeMeasure.from_spec(density=dens, region=region, cells=4, nodes=4).totals()[0]
    b = ChargeMeasure.from_spec(density=dens, region=region, cells=8, nodes=4).totals()[0]
    assert abs(a - b) / abs(b) < 1e-6


coef = st.floats(-3, 3)


@settings(max_examples=50, deadline=None)
@given(coef, coef, coef)
def test_linearity(alpha, c1, c2):
    m = ChargeMeasure.from_spec(atoms=[((0.2, 0.1, 0), -0.7)], density="1 + x0 * y0", region=UNIT, cells=2, nodes=3)
    f = lambda p: np.sin(c1 * p[:, 0]) + p[:, 2]
    g = lambda p: np.cos(c2 * p[:, 1])
    lhs = m.integrate_scalar(lambda p: alpha * f(p) + g(p))
    rhs = alpha * m.integrate_scalar(f) + m.integrate_scalar(g)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(coef, coef)
def test_variation_bound(c1, c2):
    m = ChargeMeasure.from_spec(atoms=[((0.5, 0.5, 0.5), -1.3)], density="x0 - 0.5", region=UNIT, cells=2, nodes=3)
    pts, _ = m.sources()
    f = lambda p: np.sin(c1 * p[:, 0] + c2 * p[:, 1])
    assert abs(m.integrate_scalar(f)) <= m.totals()[1] * np.abs(f(pts)).max() + 1e-15


def test_integration_is_deterministic():
    m = ChargeMeasure.from_spec(density="exp(x0) * cos(y0)", region=UNIT, cells=3, nodes=4)
    vals = {m.integrate_scalar(lambda p: p[:, 2] ** 3) for _ in range(5)}
    assert len(vals) == 1


def test_pushforward_static_is_identity():
    m = ChargeMeasure.from_spec(atoms=[((0.5, 0, 0), 2.0)], density="1", region=SupportRegion.box([0, 0, 0], [0.5, 0.5, 0.5]))
    pf = pushforward(m, static_flow(), 3.0)
    assert pf.atoms == m.atoms
    f = lambda p: p[:, 0] * p[:, 1]
    assert pf.integrate_scalar(f) == m.integrate_scalar(f)


def test_pushforward_uniform_atom():
    pf = pushforward(ChargeMeasure(atoms=(((0, 0, 0), 1.0),)), uniform_flow(), 2.0)
    assert pf.atoms == (((1.0, 0.0, 0.0), 1.0),)


def test_pushforward_composes_integrand():
    flow = circular_flow()
    m = ChargeMeasure.from_spec(atoms=[((1, 0, 0), 1.0)])
    pf = pushforward(m, flow, np.pi / 0.6)  # quarter turn
    assert pf.integrate_vector(lambda p: p) == pytest.approx([0, 1, 0], abs=1e-15)


def test_pushforward_density_keeps_total_charge():
    flow = circular_flow(w=0.2)
    m = ChargeMeasure.from_spec(density="27000 * (0.25 - x0**2)**2 * (0.25 - y0**2)**2 * (0.25 - z0**2)**2",
                                region=SupportRegion.box([-0.5] * 3, [0.5] * 3), cells=4, nodes=4)
    moved = pushforward(m, flow, 2.0).to_measure()
    assert moved.totals()[0] == pytest.approx(1.0, rel=1e-4)


def test_reindexed_flow_reproduces_trajectories():
    flow = circular_flow()
    pf = pushforward(ChargeMeasure(atoms=(((1, 0, 0), 1.0),)), flow, 2.0)
    moved = pf.reindexed_flow()
    r_new = np.array(pf.atoms[0][0])
    t = np.linspace(-4, 4, 9)
    a = flow.jets(t, np.tile([1.0, 0, 0], (9, 1)))
    b = moved.jets(t, np.tile(r_new, (9, 1)))
    assert np.allclose(a, b, rtol=1e-13, atol=1e-14)
    assert moved.t0 == 2.0
    assert np.allclose(moved.jets([2.0], r_new[None])[0, :, 0], r_new, atol=1e-15)
