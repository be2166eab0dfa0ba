import sys

import numpy as np
import pytest

from flowfields.flow import FlowModel, SupportRegion
from flowfields.measure import ChargeMeasure

BOX = SupportRegion.box([-1, -1, -1], [1, 1, 1])
UNIT_BALL = SupportRegion.ball([0, 0, 0], 1.0)


def static_flow():
    return FlowModel.from_strings("x0", "y0", "z0", support=BOX, v1=0.1)


def uniform_flow(speed=0.5, v1=0.6):
    return FlowModel.from_strings("x0 + s * t", "y0", "z0", params={"s": speed}, support=BOX, v1=v1)


def circular_flow(w=0.3):
    return FlowModel.from_strings("x0 * cos(w * t) - y0 * sin(w * t)",
                                  "x0 * sin(w * t) + y0 * cos(w * t)", "z0",
                                  params={"w": w}, support=UNIT_BALL, v1=0.35)


def oscillating_flow(amp=0.2):
    return FlowModel.from_strings("x0 + A * sin(t)", "y0", "z0", params={"A": amp}, support=BOX, v1=0.25)


EXAMPLE_FLOWS = {
    "static": (static_flow, (0.0, 0.0, 0.0)),
    "uniform": (uniform_flow, (0.0, 0.0, 0.0)),
    "circular": (circular_flow, (1.0, 0.0, 0.0)),
    "oscillating": (oscillating_flow, (0.0, 0.0, 0.0)),
}


def atom(r0=(0.0, 0.0, 0.0), q=1.0):
    return ChargeMeasure(atoms=((r0, q),))


def uniform_delay(r1, t, r0, vel):
    """Closed-form delay for straight-line motion r2 = r0 + vel*t."""
    d = np.asarray(r1, float) - np.asarray(r0, float) - np.asarray(vel, float) * t
    v = np.asarray(vel, float)
    dv, vv, dd = d @ v, v @ v, d @ d
    return (dv + np.sqrt(dv * dv + (1 - vv) * dd)) / (1 - vv)


@pytest.fixture(params=sorted(EXAMPLE_FLOWS))
def example(request):
    make, r0 = EXAMPLE_FLOWS[request.param]
    return request.param, make(), np.array(r0)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
