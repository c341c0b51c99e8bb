"""Time the numba and numpy kernels on the two hot loops.

    python3 benchmarks/bench_kernels.py
"""
import time

import numpy as np
from scipy import sparse

from omtnet import _kernels, oracle


def _best(fn, repeat=3):
    fn()  # warm-up (jit compile)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_sampled():
    rng = np.random.default_rng(0)
    d, n_t = 16, 4000
    gens = 0.1 * (rng.normal(size=(n_t, d, d)) + 1j * rng.normal(size=(n_t, d, d)))
    y0 = rng.normal(size=(d, 4)) + 0j
    return {be: _best(lambda be=be: _kernels.rk4_sampled(gens, y0, 1e-3, backend=be))
            for be in ("numba", "numpy")}


def bench_lindblad():
    cfg = oracle.preset_config(n_trunc=5)
    h, jumps, _ = oracle.build_system(cfg)
    heff = h - 0.5j * sum((j.getH() @ j for j in jumps), sparse.csr_matrix(h.shape))
    rho0 = oracle.initial_state(cfg)
    return {be: _best(lambda be=be: _kernels.lindblad_rk4(heff, jumps, rho0, 0.05, 2000,
                                                          100, backend=be))
            for be in ("numba", "numpy")}


def main():
    for name, fn in (("rk4_sampled d=16 n_t=4000", bench_sampled),
                     ("lindblad_rk4 dim=50 2000 steps", bench_lindblad)):
        t = fn()
        print(f"{name:34s} numba {t['numba']:.4f} s  numpy {t['numpy']:.4f} s  "
              f"speed-up {t['numpy'] / t['numba']:.1f}x")


if __name__ == "__main__":
    main()
