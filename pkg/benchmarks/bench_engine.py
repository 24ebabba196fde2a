"""Sweep-kernel benchmark: jit kernel vs pure-numpy fallback.

Times exhaustive-enumeration sweeps over realistic compiled systems (random
-field chains and strips) under both backends, plus the transfer-matrix
route where it applies.  Honors JOINTGIBBS_DISABLE_NUMBA=1, in which case
only the numpy numbers are reported.

Usage: python benchmarks/bench_engine.py [--repeats N]
"""

import argparse
import time

import numpy as np

from jointgibbs.engine import (
    log_partition_transfer,
    numba_enabled,
    plan_transfer,
    sweep_numba,
    sweep_numpy,
)
from jointgibbs.lattice import Box
from jointgibbs.model import make_rfim
from jointgibbs.quenched import QuenchedEnsemble


def compiled_system(shape, seed):
    rng = np.random.default_rng(seed)
    box = Box.from_shape(*shape)
    eta = {s: int(rng.choice([-1, 1])) for s in box.sites()}
    return QuenchedEnsemble(make_rfim(0.3, 0.5), box, eta).compile()


def time_fn(fn, repeats):
    fn()  # warmup (first numba call pays compilation)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    shapes = [(12,), (16,), (18,), (2, 8), (2, 10), (3, 6)]
    print(f"numba backend enabled: {numba_enabled()}")
    print(f"{'system':>8} {'spins':>6} {'numpy':>12} {'numba':>12} {'speedup':>8}")
    for shape in shapes:
        system = compiled_system(shape, seed=1)
        label = "x".join(str(n) for n in shape)
        t_np = time_fn(lambda: sweep_numpy(system), args.repeats)
        if numba_enabled():
            t_nb = time_fn(lambda: sweep_numba(system), args.repeats)
            logz_np = sweep_numpy(system)[0]
            logz_nb = sweep_numba(system)[0]
            assert abs(logz_np - logz_nb) < 1e-9, "backends disagree"
            print(f"{label:>8} {system.n_sites:>6} {t_np * 1e3:>10.2f}ms "
                  f"{t_nb * 1e3:>10.2f}ms {t_np / t_nb:>7.1f}x")
        else:
            print(f"{label:>8} {system.n_sites:>6} {t_np * 1e3:>10.2f}ms "
                  f"{'-':>12} {'-':>8}")

    print()
    print("transfer matrix vs enumeration (single evaluation):")
    for shape in [(20,), (3, 7), (5, 5)]:
        system = compiled_system(shape, seed=2)
        label = "x".join(str(n) for n in shape)
        plan = plan_transfer(system)
        if plan is None:
            print(f"{label:>8}: no transfer plan")
            continue
        t_tm = time_fn(lambda: log_partition_transfer(system, plan), args.repeats)
        if system.n_sites <= 20:
            t_en = time_fn(lambda: sweep_numpy(system), args.repeats)
            note = f"enumeration {t_en * 1e3:8.2f}ms"
        else:
            note = "enumeration skipped (too large)"
        print(f"{label:>8}: transfer {t_tm * 1e3:8.2f}ms   {note}")


if __name__ == "__main__":
    main()