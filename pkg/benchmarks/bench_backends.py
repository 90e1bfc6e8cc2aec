"""numba kernels vs the pure-numpy fallback.

Times the two hot paths -- bulk random draws and whole trajectory batches --
on both backends and checks they agree before reporting a speedup.

    python benchmarks/bench_backends.py [--quick] [--threads N]

The backend is chosen per call here; in normal use NAMBD_DISABLE_JIT=1
switches the whole package to numpy.
"""
import argparse
import time

import numpy as np

from nambd.dynamics import simulate_batch
from nambd.model import DetectorKind, FixedStep, RngKind, SimulatorConfig, make_geometry
from nambd.stochastics import RandomStream, replication_seeds


def best_of(fn, repeat=3):
    fn()  # warm-up (jit compile, caches)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_rng(n):
    print(f"\n-- random draws, n={n:,} --")
    print(f"{'rng':18s} {'kind':8s} {'numba':>10s} {'numpy':>10s} {'speedup':>8s}")
    for kind in (RngKind.MERSENNE_TWISTER, RngKind.BASELINE_LCG):
        for what in ("uniform", "normal"):
            res, out = {}, {}
            for backend in ("numba", "numpy"):
                def go(backend=backend):
                    s = RandomStream(kind, 12345, backend=backend)
                    out[backend] = s.uniforms(n) if what == "uniform" else s.standard_normals(n)
                res[backend] = best_of(go)
            # uniforms are bit-identical; normals may differ by an ulp (libm log/sqrt)
            assert np.allclose(out["numba"], out["numpy"], rtol=1e-15, atol=1e-15), "backends disagree"
            print(f"{kind.value:18s} {what:8s} {res['numba'] * 1e3:8.1f}ms {res['numpy'] * 1e3:8.1f}ms "
                  f"{res['numpy'] / res['numba']:7.1f}x")


def bench_batch(n, threads):
    print(f"\n-- trajectory batches (a=10 b=50 q=100), n={n:,}, threads={threads} --")
    print(f"{'engine':28s} {'D':>5s} {'numba':>10s} {'numpy':>10s} {'speedup':>8s} {'beta':>7s}")
    for det in (DetectorKind.EVENT_TRIGGERED, DetectorKind.TIME_STEPPED):
        cfg = SimulatorConfig(RngKind.MERSENNE_TWISTER, det, FixedStep(0.1))
        for D in (16.0, 64.0):
            geo = make_geometry(10, 50, 100, D)
            seeds = replication_seeds(7, 0, n)
            res, out = {}, {}
            for backend in ("numba", "numpy"):
                def go(backend=backend):
                    out[backend] = simulate_batch(geo, cfg, seeds, backend=backend, threads=threads)
                res[backend] = best_of(go, repeat=1 if backend == "numpy" else 3)
            agree = float(np.mean(out["numba"].outcome == out["numpy"].outcome))
            print(f"{cfg.label():28s} {D:5.0f} {res['numba'] * 1e3:8.1f}ms {res['numpy'] * 1e3:8.1f}ms "
                  f"{res['numpy'] / res['numba']:7.1f}x {out['numba'].reacted.mean():7.4f}"
                  f"  (outcome agreement {agree:.3f})")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--quick", action="store_true", help="smaller sizes")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    bench_rng(200_000 if args.quick else 2_000_000)
    bench_batch(100 if args.quick else 500, args.threads)
