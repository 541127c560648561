"""Time the compiled and numpy energy/gradient kernels on growing grids.

Usage: python3 benchmarks/bench_kernels.py [--repeats 20] [--sizes 64 128 256]
"""
import argparse
import time

import numpy as np

from gllab.energy import coefficients
from gllab.grid import GridSpec, build_gauge_links
from gllab.kernels import energy_grad, line_coeffs


def best_time(fn, repeats):
    fn()  # warm-up (includes compilation for the numba path)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench(dim, n, repeats):
    grid = GridSpec(dim, n * 0.25, n)
    links = build_gauge_links(grid)
    ck, cm = coefficients(links, 0.7)
    rng = np.random.default_rng(0)
    u = rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape)
    d = rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape)
    g = np.empty_like(u)
    rest = (links.hop, links.weight, links.wall, ck, cm)
    rows = []
    for name, call in (
        ("energy+grad", lambda nb: energy_grad(u, *rest, grad=g, use_numba=nb)),
        ("line coeffs", lambda nb: line_coeffs(u, d, *rest, use_numba=nb)),
    ):
        t_nb = best_time(lambda: call(True), repeats)
        t_np = best_time(lambda: call(False), repeats)
        rows.append((dim, n, name, t_nb, t_np))
    return rows


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 256])
    p.add_argument("--sizes3d", type=int, nargs="+", default=[16, 32, 48])
    args = p.parse_args(argv)
    print(f"{'dim':>3} {'n':>5} {'kernel':<12} {'numba ms':>10} {'numpy ms':>10} {'speed-up':>9}")
    jobs = [(2, n) for n in args.sizes] + [(3, n) for n in args.sizes3d]
    for dim, n in jobs:
        for dim_, n_, name, t_nb, t_np in bench(dim, n, args.repeats):
            print(f"{dim_:>3} {n_:>5} {name:<12} {1e3 * t_nb:>10.3f} {1e3 * t_np:>10.3f} "
                  f"{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
