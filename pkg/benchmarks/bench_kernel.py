"""Compare the compiled and NumPy kernels on trajectory jets and delay solves.

    python3 benchmarks/bench_kernel.py [--n 20000] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from flowfields.flow import FlowModel, SupportRegion
from flowfields.kernel import backends

FLOWS = {
    "uniform": ("x0 + s * t", "y0", "z0", {"s": 0.5}, 0.6),
    "circular": ("x0 * cos(w * t) - y0 * sin(w * t)", "x0 * sin(w * t) + y0 * cos(w * t)", "z0",
                 {"w": 0.3}, 0.35),
    "oscillating": ("x0 + A * sin(t)", "y0 + A * cos(2 * t) * exp(-t**2 / 50)", "z0", {"A": 0.2}, 0.5),
}


def run(n: int, repeat: int) -> None:
    rng = np.random.default_rng(0)
    r0 = rng.uniform(-1, 1, (n, 3))
    r1 = rng.uniform(-10, 10, (n, 3))
    t = rng.uniform(-5, 5, n)
    T0 = np.full(n, np.nan)
    impls = backends()
    print(f"n = {n}, best of {repeat}; backends: {', '.join(impls)}")
    print(f"{'flow':<12} {'task':<6} " + " ".join(f"{k:>12}" for k in impls) + "     speedup")
    for name, (x, y, z, params, v1) in FLOWS.items():
        flow = FlowModel.from_strings(x, y, z, params=params,
                                      support=SupportRegion.box([-1] * 3, [1] * 3), v1=v1)
        tp = flow.tape
        tasks = {
            "jets": lambda k: k.flow_jets(tp.codes, tp.args, tp.starts, tp.depth, t, r0),
            "delay": lambda k: k.retard(tp.codes, tp.args, tp.starts, tp.depth, r1, t, r0, T0,
                                        1e-12, flow.max_iterations, True),
        }
        for task, fn in tasks.items():
            times = {}
            outs = {}
            for label, k in impls.items():
                outs[label] = fn(k)
                times[label] = min(timeit.repeat(lambda: fn(k), number=1, repeat=repeat))
            if len(outs) == 2:
                a, b = outs["numpy"], outs["compiled"]
                a0, b0 = (a[0], b[0]) if isinstance(a, tuple) else (a, b)
                assert np.allclose(a0, b0, rtol=1e-13, atol=1e-13), f"{name}/{task}: backends disagree"
            speed = times["numpy"] / times["compiled"] if "compiled" in times else float("nan")
            print(f"{name:<12} {task:<6} " + " ".join(f"{times[k] * 1e3:10.2f}ms" for k in impls)
                  + f"  {speed:9.1f}x")


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=20000)
    p.add_argument("--repeat", type=int, default=5)
    a = p.parse_args()
    run(a.n, a.repeat)


if __name__ == "__main__":
    main()
