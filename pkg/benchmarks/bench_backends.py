#!/usr/bin/env python3
"""Time the numba kernels against the pure-numpy fallback.

Both paths run in one process on identical inputs, switched through
``perceptiq.backend.set_backend``.  Run from the repository root:

    python3 benchmarks/bench_backends.py --repeats 5

The numba path is warmed up before timing so compilation cost is not
counted.  Reported numbers are the best of the repeats.
"""

import argparse
import time

import numpy as np
from scipy.ndimage import gaussian_filter

from perceptiq import backend, kernels
from perceptiq.image_io import GrayImage
from perceptiq.loss import LossSpec, probe_descent
from perceptiq.niqe import NssConfig, fit_natural_model, niqe_score
from perceptiq.nss import compute_mscn, fit_aggd, fit_ggd


def textured(seed: int, side: int) -> GrayImage:
    rng = np.random.default_rng(seed)
    acc = np.zeros((side, side))
    for sigma, amp in ((1.0, 0.6), (3.0, 1.0), (8.0, 1.6)):
        layer = gaussian_filter(rng.standard_normal((side, side)), sigma, mode="reflect")
        acc += amp * layer / layer.std()
    acc /= acc.std()
    return GrayImage(np.clip(128.0 + 45.0 * acc, 0.0, 255.0))


def best_of(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def build_tasks():
    cfg = NssConfig(patch=32, window=7, threshold=0.75)
    big = textured(1, 512)
    model = fit_natural_model([textured(10 + i, 96) for i in range(6)], cfg)
    scored = textured(2, 256)

    rng = np.random.default_rng(3)
    sym = rng.standard_normal(1_000_000)
    skew = np.where(rng.random(500_000) < 0.4, -1.0, 1.5) * np.abs(
        rng.standard_normal(500_000)
    )

    probe_cfg = NssConfig(patch=16, window=7, threshold=0.0)
    probe_model = fit_natural_model([textured(20 + i, 96) for i in range(4)], probe_cfg)
    hr = textured(4, 32)
    init = GrayImage(
        np.clip(hr.data + np.random.default_rng(5).normal(0, 15, hr.shape), 0, 255)
    )
    probe_spec = LossSpec(w_mse=10.0, epsilon=0.01)

    return [
        ("local stats, 512x512", lambda: compute_mscn(big, cfg.window)),
        ("niqe score, 256x256", lambda: niqe_score(scored, model)),
        ("ggd fit, 1e6 samples", lambda: fit_ggd(sym)),
        ("aggd fit, 5e5 samples", lambda: fit_aggd(skew)),
        (
            "probe, 2 steps, 32x32",
            lambda: probe_descent(
                init, hr, probe_spec, steps=2, step_size=0.1, natural=probe_model
            ),
        ),
    ]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if not backend.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    backend.set_backend("numba")
    kernels.warm_up()
    tasks = build_tasks()

    results = []
    for name, fn in tasks:
        row = {"task": name}
        for which in ("numba", "numpy"):
            backend.set_backend(which)
            fn()  # one untimed pass so caches and allocations settle
            row[which] = best_of(fn, args.repeats)
        results.append(row)
    backend.set_backend("numba")

    width = max(len(r["task"]) for r in results)
    print(f"{'task':<{width}}  {'numba':>10}  {'numpy':>10}  {'speedup':>7}")
    for r in results:
        ratio = r["numpy"] / r["numba"]
        print(
            f"{r['task']:<{width}}  {r['numba'] * 1e3:>8.2f}ms  "
            f"{r['numpy'] * 1e3:>8.2f}ms  {ratio:>6.1f}x"
        )


if __name__ == "__main__":
    main()
