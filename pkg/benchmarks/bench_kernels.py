"""Compare the compiled and pure-Python kernels.

    python3 benchmarks/bench_kernels.py [--steps N] [--repeat R]

Measures three things per backend: the bare physics step on a packed scene,
a full environment step (physics, reward and bounds), and the midpoint
quadrature used by the oracle check. Also confirms both backends produce the
same trajectory bit for bit.
"""
import argparse
import timeit

import numpy as np

from pushcost import _backend
from pushcost.config import default_config
from pushcost.envs import Environment, layout
from pushcost.sim import Action, Simulator


def bench_physics(kernels, steps, rng_seed=0):
    spec = default_config("friction").task
    world, _ = layout(spec, 0)

    sim = Simulator(world, spec.sim, kernels)
    actions = np.random.default_rng(rng_seed).integers(0, len(Action), size=steps)
    state0 = world.pose_vector()

    def run():
        s = state0
        for a in actions:
            s, _ = sim.step_arrays(s, int(a))
        return s

    return run


def bench_env(kernels, steps, task="mass"):
    spec = default_config(task).task
    actions = np.random.default_rng(1).integers(0, len(Action), size=steps)

    def run():
        env = Environment(spec, kernels=kernels)
        env.reset(0)
        total = 0.0
        for a in actions:
            tr = env.step(int(a))
            total += tr.reward
            if tr.done:
                env.reset(0)
        return total

    return run


def bench_quadrature(kernels, n=4096):
    return lambda: kernels.radial_moment_midpoint(0.4, 1.3, n)


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    compiled = _backend.compiled_kernels()
    backends = [("python", _backend.python_kernels)]
    if compiled is None:
        print("compiled extension not built; only the Python kernels are timed")
    else:
        backends.insert(0, ("cython", compiled))

    rows = {}
    for name, k in backends:
        rows[name] = (
            best(bench_physics(k, args.steps), args.repeat) / args.steps,
            best(bench_env(k, args.steps), args.repeat) / args.steps,
            best(bench_quadrature(k), args.repeat),
        )

    print(f"{'backend':<8} {'physics step':>14} {'env step':>12} {'quad n=4096':>13}")
    for name, (p, e, q) in rows.items():
        print(f"{name:<8} {p * 1e6:>11.1f} us {e * 1e6:>9.1f} us {q * 1e3:>10.2f} ms")
    if compiled is not None:
        c, py = rows["cython"], rows["python"]
        print(f"speedup  {py[0] / c[0]:>13.1f}x {py[1] / c[1]:>11.1f}x {py[2] / c[2]:>12.1f}x")
        a = bench_physics(compiled, 500)()
        b = bench_physics(_backend.python_kernels, 500)()
        same = np.array_equal(a, b)
        print(f"trajectories identical after 500 steps: {same}")


if __name__ == "__main__":
    main()
