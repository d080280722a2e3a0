"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--epoch]

``--epoch`` also times one training epoch of CAnet-J on a 10k-sample
dataset under each backend (each in a fresh interpreter, since the backend
is chosen at import).
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from canet import _kernels_py

try:
    from canet import _ckernels
except ImportError:
    _ckernels = None


def cases(rng):
    z = rng.normal(size=(512, 128))
    da = rng.normal(size=z.shape)
    w = rng.normal(size=(2048, 128))
    g = rng.normal(size=w.shape)
    mask = (rng.random(w.shape) > 0.5).astype(float)
    aods = rng.uniform(-1.5, 1.5, size=(2000, 60))
    gains = rng.normal(size=aods.shape) + 1j * rng.normal(size=aods.shape)
    p = rng.normal(size=(2, 512, 8, 32))
    h = rng.normal(size=(2, 512, 32))
    dy = rng.normal(size=(2, 512, 8))
    x = rng.uniform(-1, 1, size=512 * 16)

    def adam(mod, masked):
        m, v, param = np.zeros_like(w), np.zeros_like(w), w.copy()
        return lambda: mod.adam_update(param, g, m, v, mask if masked else None, 1e-3, 0.9, 0.999, 1e-7, 1)

    return {
        "selu 512x128": lambda mod: (lambda: mod.selu(z)),
        "selu_grad 512x128": lambda mod: (lambda: mod.selu_grad(z, da)),
        "adam 2048x128": lambda mod: adam(mod, False),
        "adam masked 2048x128": lambda mod: adam(mod, True),
        "quantize 8192": lambda mod: (lambda: mod.quantize(x, 4)),
        "synthesize 2000x60->32": lambda mod: (lambda: mod.synthesize(aods, gains, 32, 0.5)),
        "pilot_apply 512x8x32": lambda mod: (lambda: mod.pilot_apply(p[0], p[1], h[0], h[1])),
        "pilot_grad 512x8x32": lambda mod: (lambda: mod.pilot_grad(dy[0], dy[1], h[0], h[1])),
    }


def best_of(fn, repeat):
    number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-6)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


EPOCH_SNIPPET = """
import time
from canet import BACKEND
from canet.channel import ScmConfig, generate_dataset
from canet.frameworks import TrainConfig, build_framework, fit
ds = generate_dataset(ScmConfig(n_ant=32, seed=0), 10_000)
fw = build_framework("CAnetJ", 32, 6, 24, seed=0)
t = time.perf_counter()
fit(fw, ds, TrainConfig(epochs=1))
print(BACKEND, time.perf_counter() - t)
"""


def epoch_times():
    out = {}
    for pure in ("1", "0"):
        env = dict(os.environ, CANET_PURE_PYTHON=pure)
        res = subprocess.run([sys.executable, "-c", EPOCH_SNIPPET], env=env, capture_output=True, text=True, check=True)
        backend, seconds = res.stdout.split()
        out[backend] = float(seconds)
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--epoch", action="store_true")
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':26s} {'numpy [us]':>12s} {'cython [us]':>12s} {'speedup':>8s}")
    for name, make in cases(rng).items():
        t_py = best_of(make(_kernels_py), args.repeat)
        if _ckernels is None:
            print(f"{name:26s} {t_py * 1e6:12.1f} {'n/a':>12s}")
            continue
        t_c = best_of(make(_ckernels), args.repeat)
        print(f"{name:26s} {t_py * 1e6:12.1f} {t_c * 1e6:12.1f} {t_py / t_c:7.2f}x")
    if args.epoch:
        times = epoch_times()
        print("\nCAnet-J epoch, 8k training samples:")
        for backend, seconds in times.items():
            print(f"  {backend:7s} {seconds:.2f} s")


if __name__ == "__main__":
    main()
