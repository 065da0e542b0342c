"""Compare the compiled kernel backend against the pure-Python fallback.

Times each kernel on a large buffer, then a full training epoch per
backend (in subprocesses, since the backend is fixed at import).  Run
from the repo root:

    python3 benchmarks/bench_backends.py [--size 1000000] [--repeats 20]
"""

import argparse
import subprocess
import sys
import time

import numpy as np

from eaucal.kernels import available_backends, load_backend


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _kernel_calls(mod, size):
    rng = np.random.default_rng(0)
    x = rng.uniform(0.1, 2.0, size)
    y = rng.uniform(0.1, 2.0, size)
    g = rng.uniform(-1.0, 1.0, size)
    acc = np.zeros(size)
    t = mod.tanh(x)
    s = mod.sigmoid(x)
    return [
        ("tanh", lambda: mod.tanh(x)),
        ("sigmoid", lambda: mod.sigmoid(x)),
        ("relu", lambda: mod.relu(x)),
        ("exp", lambda: mod.exp(x)),
        ("log", lambda: mod.log(x)),
        ("sqrt", lambda: mod.sqrt(x)),
        ("clamp", lambda: mod.clamp(x, 0.5, 1.5)),
        ("add", lambda: mod.add(x, y)),
        ("mul", lambda: mod.mul(x, y)),
        ("scale", lambda: mod.scale(x, 1.5)),
        ("acc_add", lambda: mod.acc_add(acc, g)),
        ("acc_scaled", lambda: mod.acc_scaled(acc, g, 1.5)),
        ("acc_prod", lambda: mod.acc_prod(acc, g, y)),
        ("acc_tanh", lambda: mod.acc_tanh(acc, g, t)),
        ("acc_sigmoid", lambda: mod.acc_sigmoid(acc, g, s)),
        ("acc_relu", lambda: mod.acc_relu(acc, g, x)),
        ("acc_clamp", lambda: mod.acc_clamp(acc, g, x, 0.5, 1.5)),
    ]


_EPOCH_SNIPPET = """
import time
from eaucal.config import load_config
from eaucal.datasets import SynthConfig, generate_scenes
from eaucal import kernels, training
scenes = generate_scenes(SynthConfig(n_scenes=64, n_shifted=0, horizon_steps=12, seed=1))
cfg = load_config(overrides=(
    ("experiment.task", "trajectory"), ("model.hidden", "32"),
    ("optimizer.epochs", "1"), ("optimizer.batch_size", "32"),
))
training.train_trajectory(cfg, scenes)  # warm caches
t0 = time.perf_counter()
training.train_trajectory(cfg, scenes)
print(f"{kernels.BACKEND} {time.perf_counter() - t0:.4f}")
"""


def bench_training_epoch():
    out = []
    for backend in available_backends():
        proc = subprocess.run([sys.executable, "-c", _EPOCH_SNIPPET],
                              env={"EAUCAL_BACKEND": backend, "PATH": "/usr/bin:/bin"},
                              capture_output=True, text=True, check=True)
        name, seconds = proc.stdout.split()
        out.append((name, float(seconds)))
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=1_000_000)
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args()

    backends = available_backends()
    print(f"backends: {', '.join(backends)}")
    if "c" not in backends:
        print("compiled backend unavailable; timing python only")

    mods = {b: load_backend(b) for b in backends}
    names = [n for n, _ in _kernel_calls(mods[backends[0]], 1)]
    timings = {b: dict() for b in backends}
    for b in backends:
        for name, call in _kernel_calls(mods[b], args.size):
            timings[b][name] = _time(call, args.repeats)

    print(f"\nper-kernel best-of-{args.repeats}, {args.size:,} float64 elements")
    header = f"{'kernel':<12}" + "".join(f"{b:>12}" for b in backends)
    if len(backends) > 1:
        header += f"{'speedup':>10}"
    print(header)
    for name in names:
        line = f"{name:<12}" + "".join(f"{timings[b][name] * 1e3:>10.2f}ms" for b in backends)
        if len(backends) > 1:
            line += f"{timings['python'][name] / timings['c'][name]:>9.2f}x"
        print(line)

    print("\nfull training epoch (64 scenes, horizon 12, hidden 32)")
    for name, seconds in bench_training_epoch():
        print(f"{name:<12}{seconds * 1e3:>10.1f}ms")


if __name__ == "__main__":
    main()
