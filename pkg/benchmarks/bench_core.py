"""Compare the compiled core with the numpy fallback.

    python3 benchmarks/bench_core.py [--repeat 5]
"""
import argparse
import time

import numpy as np

from geokernel import _backend
from geokernel import geometry as G
from geokernel.basis import build, layout
from geokernel.kernels import make_od, pack, KernelMatrix


def timeit(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases():
    rng = np.random.default_rng(0)
    table = pack(KernelMatrix.single(make_od()))
    for m, ic in [(G.sphere(), G.ICSpec("UniformSphere", 20)),
                  (G.poincare(), G.ICSpec("HyperbolicBall", 20, {"D": 5.0}))]:
        X = G.sample_initial(m, ic, rng)
        t0 = np.zeros(20, dtype=np.int64)
        Xs = np.stack([G.sample_initial(m, ic, rng) for _ in range(50)])
        lay = layout([build(0.0, 5.0, 51)])
        args = (m.code, m.radius, m.distance_factor)
        yield m.kind, "field N=20", lambda c: c.field(X, *args, t0, table)
        yield m.kind, "rk4 200 steps", lambda c: c.integrate_rk4(X, *args, t0, table, 0.01, 200)
        yield m.kind, "regression L=50", lambda c: c.regression_vectors(Xs, *args, t0, 0, lay)


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--repeat", type=int, default=5)
    a = p.parse_args()
    cores = _backend.backends()
    names = sorted(cores)
    print(f"{'manifold':10s} {'task':18s} " + " ".join(f"{n + ' [ms]':>15s}" for n in names)
          + "  speedup")
    for kind, task, fn in cases():
        t = {n: timeit(lambda: fn(cores[n]), a.repeat) for n in names}
        sp = t["python"] / t["compiled"] if "compiled" in t else float("nan")
        print(f"{kind:10s} {task:18s} " + " ".join(f"{1e3 * t[n]:15.3f}" for n in names)
              + f"  {sp:6.1f}x")


if __name__ == "__main__":
    main()
