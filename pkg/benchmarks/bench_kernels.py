"""Benchmark the numba kernels against the pure-numpy fallback.

Covers the three hot paths (conv forward, conv backward, full per-agent
forward+backward+update) plus an end-to-end world run per backend. The
end-to-end comparison re-executes this script in a subprocess with
GRIDLIFE_BACKEND set, since the backend is chosen at import.

Run from the repository root:
    python benchmarks/bench_kernels.py
"""

import os
import subprocess
import sys
import time

import numpy as np

from gridlife import kernels, nn
from gridlife.agent import agent_init, agent_predict, compute_loss, agent_learn
from gridlife.config import ExperimentConfig
from gridlife.experiment import run_experiment

E2E_CONFIG = dict(n_cells=50, seed=0, width=30, height=30, epochs=10)


def timeit(fn, repeats):
    fn()  # warmup (JIT compile / cache load)
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench_conv(repeats=2000):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(3, 3, nn.WIDTH))
    k = rng.normal(size=(nn.WIDTH, nn.WIDTH, 3, 3))
    b = rng.normal(size=nn.WIDTH)
    d_out = rng.normal(size=(3, 3, nn.WIDTH))
    rows = []
    for name, fwd, bwd in (("numpy", kernels.conv2d_forward_numpy, kernels.conv2d_backward_numpy),
                           ("numba", kernels.conv2d_forward_numba, kernels.conv2d_backward_numba)):
        tf = timeit(lambda: fwd(x, k, b), repeats)
        tb = timeit(lambda: bwd(x, k, d_out), repeats)
        rows.append((name, tf, tb))
    return rows


def bench_agent_step(repeats=300):
    rng = np.random.default_rng(1)
    x = rng.uniform(size=(3, 3, 9))
    target = rng.uniform(size=(3, 3, 9))
    rows = []
    for name in ("numpy", "numba"):
        kernels.use_backend(name)
        agent = agent_init(0, 0, 0.01, 0.9)

        def one_step():
            pred, tape = agent_predict(agent, x)
            loss, d = compute_loss(pred, target)
            agent_learn(agent, tape, d, loss)

        rows.append((name, timeit(one_step, repeats)))
    return rows


def run_e2e():
    cfg = ExperimentConfig(**E2E_CONFIG)
    run_experiment(cfg)  # warm
    t0 = time.perf_counter()
    result = run_experiment(cfg)
    dt = time.perf_counter() - t0
    print(f"{kernels.ACTIVE_BACKEND}\t{dt:.3f}\t{result.avg_cell_loss:.12f}")


def main():
    if "--e2e-worker" in sys.argv:
        run_e2e()
        return

    if not kernels.NUMBA_AVAILABLE:
        print("numba not importable; nothing to compare")
        return

    print(f"conv 3x3 ({nn.WIDTH}->{nn.WIDTH} channels on a 3x3 window)")
    conv_rows = bench_conv()
    base_f = dict((n, tf) for n, tf, _ in conv_rows)["numpy"]
    base_b = dict((n, tb) for n, _, tb in conv_rows)["numpy"]
    for name, tf, tb in conv_rows:
        print(f"  {name:6s} forward {tf * 1e6:8.1f} us ({base_f / tf:4.1f}x)   "
              f"backward {tb * 1e6:8.1f} us ({base_b / tb:4.1f}x)")

    print("full agent update (forward + loss + backward + sgd + recolor)")
    step_rows = bench_agent_step()
    base = dict(step_rows)["numpy"]
    for name, t in step_rows:
        print(f"  {name:6s} {t * 1e6:8.1f} us ({base / t:4.1f}x)")
    kernels.use_backend("numba" if kernels.NUMBA_AVAILABLE else "numpy")

    print(f"end-to-end run {E2E_CONFIG} (seconds; avg loss shown to confirm agreement)")
    for backend in ("numpy", "numba"):
        env = dict(os.environ, GRIDLIFE_BACKEND=backend)
        out = subprocess.run([sys.executable, __file__, "--e2e-worker"],
                             env=env, capture_output=True, text=True, check=True)
        name, dt, loss = out.stdout.strip().split("\t")
        print(f"  {name:6s} {float(dt):7.3f} s   avg_cell_loss {loss}")


if __name__ == "__main__":
    main()
