"""Time the numba kernels against the pure-numpy fallback.

    python3 benchmarks/bench_backends.py [--n 200000] [--repeat 5]

Each row is the best of ``--repeat`` runs after one warm-up call (which
also triggers numba compilation). Results are checked to agree first.
"""
import argparse
import time

import numpy as np

from sphere_energy import _accel
from sphere_energy.energy import energy_integral
from sphere_energy.kernels import kernel_A_pow
from sphere_energy.measures import UniformSphere


def best_time(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(n, rng):
    P3 = rng.standard_normal((n, 3, 3))
    P3 /= np.linalg.norm(P3, axis=-1, keepdims=True)
    P5 = rng.standard_normal((n, 5, 6))
    P5 /= np.linalg.norm(P5, axis=-1, keepdims=True)
    G5 = _accel.gram_batch(P5)
    return {
        "det 5x5": lambda: _accel.det_batch(G5),
        "adjugate 5x5": lambda: _accel.adjugate_batch(G5),
        "A^2 k=3 d=3": lambda: _accel.vol_pow_batch(P3, "A", 2.0)[0],
        "A^1 k=3 d=3 +grad": lambda: _accel.vol_pow_batch(P3, "A", 1.0, want_grad=True)[2],
        "V^1.5 k=5 d=6": lambda: _accel.vol_pow_batch(P5, "V", 1.5)[0],
        "MC I_A2(sigma) 2e5": lambda: energy_integral(kernel_A_pow(3, 3, 2.0), UniformSphere(3),
                                                      mc_samples=200_000).value,
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _accel.HAS_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")
    rng = np.random.default_rng(0)
    rows = []
    for name, fn in cases(args.n, rng).items():
        with _accel.use_backend("numba"):
            ref = fn()
            t_nb = best_time(fn, args.repeat)
        with _accel.use_backend("numpy"):
            alt = fn()
            t_np = best_time(fn, args.repeat)
        err = float(np.max(np.abs(np.asarray(ref) - np.asarray(alt))))
        rows.append((name, t_np, t_nb, err))
    print(f"{'case':<22}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}{'max diff':>12}")
    for name, t_np, t_nb, err in rows:
        print(f"{name:<22}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>10.1f}{err:>12.1e}")


if __name__ == "__main__":
    main()
