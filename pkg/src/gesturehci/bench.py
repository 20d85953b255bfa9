"""Time each hot kernel under numba and under plain numpy.

    python3 -m gesturehci.bench [--repeat N]

Both variants are called directly, so the environment flag does not matter
here. The first numba call (compilation) is excluded from the timings.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from . import face_detect as fd
from . import face_features as ff
from . import moe, segmentation, tracking
from ._jit import HAVE_NUMBA
from .imaging import integral


def _time(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def _cases(rng):
    mask = rng.random((192, 256)) < 0.5
    yield "label 8-conn (256x192)", segmentation._label_numba, segmentation._label_numpy, (mask, True)

    cascade = fd.Cascade(
        [
            fd.Stage([fd.WeakClassifier(f, 0.0, 1, 1.0) for f in fd.enumerate_features(pos_step=8, size_step=8)[:10]]),
            fd.Stage([fd.WeakClassifier(f, 0.0, -1, 1.0) for f in fd.enumerate_features(pos_step=8, size_step=8)[10:40]], -1.0),
        ]
    )
    ii = integral(rng.integers(0, 256, (192, 256)))
    xs = np.arange(0, 256 - 48 + 1, 2, dtype=np.int64)
    ys = np.arange(0, 192 - 48 + 1, 2, dtype=np.int64)
    tables = fd._cascade_tables(cascade, 2.0)
    yield "haar scan, 40 weak, 48px", fd._scan_numba, fd._scan_numpy, (ii.astype(np.float64), xs, ys, 48, *tables)

    F = rng.standard_normal((1500, 1024))
    order = np.ascontiguousarray(np.argsort(F, axis=0, kind="stable"))
    fs = np.ascontiguousarray(np.take_along_axis(F, order, axis=0))
    y = np.where(rng.random(1500) < 0.3, 1, -1)
    w = np.full(1500, 1.0 / 1500)
    yield "stump search 1500x1024", fd._stump_search_numba, fd._stump_search_numpy, (fs, order, y, w)

    frame = rng.integers(0, 256, (192, 256, 3)).astype(np.uint8)
    bidx = tracking.bin_image(frame)
    ref = rng.random(512)
    ref /= ref.sum()
    px, py = rng.uniform(20, 230, 100), rng.uniform(20, 170, 100)
    yield "particle weights, N=100", tracking._similarity_numba, tracking._similarity_numpy, (bidx, px, py, 40.0, 50.0, ref)

    a = rng.standard_normal((60, 60))
    yield "jacobi 60x60", ff._jacobi_numba, ff._jacobi_numpy, (a @ a.T, 1e-10, 100)

    m = moe.init_model(17, 5, 3, 20, 40, 0)
    X = rng.standard_normal((250, 17))
    Y = moe.one_hot(rng.integers(1, 6, 250))
    order = np.arange(250)

    def epoch(kernel):
        def run():
            c = m.copy()
            kernel(c.omega, c.w, c.xi, c.zeta, X, Y, order, 0.9, 0.4)

        return run

    yield "MoE epoch, 250 samples", epoch(moe._epoch_numba), epoch(moe._epoch_numpy), None


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="python3 -m gesturehci.bench")
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    rng = np.random.default_rng(0)
    if not HAVE_NUMBA:
        print("numba is not installed; only the numpy column is meaningful")
    print(f"{'kernel':28s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}")
    for name, fast, slow, call_args in _cases(rng):
        f = fast if call_args is None else (lambda fn=fast, a=call_args: fn(*a))
        s = slow if call_args is None else (lambda fn=slow, a=call_args: fn(*a))
        f()  # compile
        tf, ts = _time(f, args.repeat), _time(s, args.repeat)
        print(f"{name:28s} {tf * 1e3:10.3f} {ts * 1e3:10.3f} {ts / tf:8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
