"""Compare the compiled split-step kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--rows 1000] [--points 2048] [--repeat 5]

Times the two per-step kernels on an R x N batch and one full batched
propagation with each backend, and checks that both produce the same field.
"""

import argparse
import timeit

import numpy as np

import qndsoliton.nlse as nlse
from qndsoliton import kernels
from qndsoliton.collision import CollisionSpec, collision_initial
from qndsoliton.nlse import PropagationConfig, propagate_array
from qndsoliton.units import make_grid


def best_of(fn, repeat, number=1):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--rows", type=int, default=1000)
    ap.add_argument("--points", type=int, default=2048)
    ap.add_argument("--steps", type=int, default=50)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    compiled = kernels.compiled_kernels()
    backends = {"python": kernels.python_kernels}
    if compiled is not None:
        backends["cython"] = compiled
    else:
        print("compiled extension not built; timing the numpy fallback only")

    rng = np.random.default_rng(0)
    shape = (args.rows, args.points)
    u = np.ascontiguousarray(rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    factor = np.exp(-0.5j * np.linspace(-100, 100, args.points) ** 2 * 1e-3)

    print(f"batch {args.rows} x {args.points}, best of {args.repeat}")
    print(f"{'kernel':<22}" + "".join(f"{name:>12}" for name in backends) + "   speed-up")
    for label, call in (("kerr_step", lambda k, a: k.kerr_step(a, 1e-3)),
                        ("spectral_multiply", lambda k, a: k.spectral_multiply(a, factor))):
        times = {}
        for name, k in backends.items():
            work = u.copy()
            times[name] = best_of(lambda: call(k, work), args.repeat)
        row = f"{label:<22}" + "".join(f"{1e3 * t:>10.2f}ms" for t in times.values())
        if "cython" in times:
            row += f"   {times['python'] / times['cython']:.2f}x"
        print(row)

    grid = make_grid(args.points, 60.0)
    spec = CollisionSpec(omega0=1.2, fiber_length=5.0)
    u0 = collision_initial(grid, spec).samples
    batch = np.tile(u0, (args.rows, 1)) * (1 + 1e-4 * rng.standard_normal((args.rows, 1)))
    cfg = PropagationConfig(step=1e-3, length=args.steps * 1e-3)
    saved = nlse.kernels
    results, times = {}, {}
    try:
        for name, k in backends.items():
            nlse.kernels = k
            times[name] = best_of(lambda: propagate_array(batch, grid, cfg), max(1, args.repeat // 2))
            results[name] = propagate_array(batch, grid, cfg)
    finally:
        nlse.kernels = saved
    row = f"{f'propagate {args.steps} steps':<22}" + "".join(f"{1e3 * t:>10.1f}ms" for t in times.values())
    if "cython" in times:
        row += f"   {times['python'] / times['cython']:.2f}x"
        diff = float(np.max(np.abs(results["python"] - results["cython"])))
        print(row)
        print(f"max |python - cython| after propagation: {diff:.2e}")
    else:
        print(row)


if __name__ == "__main__":
    main()
