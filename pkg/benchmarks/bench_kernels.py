"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--points 20000]

Times the Ferguson grid objective and the GRU forward/backward scans at
desk-scale sizes, checks that both backends agree, and prints one row per
kernel with the speedup of the compiled version.
"""
import argparse
import time

import numpy as np

from coldhardy import kernels
from coldhardy.ferguson import DEFAULT_GRID, _pack, expand_grid
from coldhardy.synthgen import SynthSpec, generate_corpus


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def ferguson_cases(n_points, n_seasons):
    sc = generate_corpus(SynthSpec(n_cultivars=1, seasons_per_cultivar=(n_seasons,), seed=1))
    tmean, starts, target = _pack(sc.corpus[0].seasons)
    points, _ = expand_grid(DEFAULT_GRID)
    points = points[np.random.default_rng(0).permutation(len(points))[:n_points]]
    points = np.ascontiguousarray(points)
    one_season = np.ascontiguousarray(tmean[:starts[1]])

    def sse(backend):
        return lambda: kernels.get_backend(backend)[1](tmean, starts, target, points)

    def sim(backend):
        return lambda: kernels.get_backend(backend)[0](one_season, points[:256])

    return {
        f"ferguson grid_sse ({n_points} pts x {n_seasons} seasons)": (sse, 1e-12),
        "ferguson simulate (256 pts x 1 season)": (sim, 0.0),
    }


def gru_cases(batch, hidden, days=251):
    rng = np.random.default_rng(0)
    xp = rng.normal(size=(days, batch, 3 * hidden))
    u_t = rng.normal(scale=hidden ** -0.5, size=(hidden, 3 * hidden))
    b_hn = rng.normal(scale=0.1, size=hidden)
    h0 = np.zeros((batch, hidden))
    dout = rng.normal(size=(days, batch, hidden))
    u = np.ascontiguousarray(u_t.T)

    def fwd(backend):
        f, _ = kernels.get_gru_backend(backend)
        return lambda: f(xp, u_t, b_hn, h0)[0]

    def bwd(backend):
        f, b = kernels.get_gru_backend(backend)
        out, z, r, n, uh = f(xp, u_t, b_hn, h0)
        h_prev = np.concatenate([h0[None], out[:-1]])
        return lambda: b(dout, h_prev, z, r, n, uh, u)[0]

    tag = f"B={batch}, H={hidden}, T={days}"
    return {f"gru forward ({tag})": (fwd, 1e-12), f"gru backward ({tag})": (bwd, 1e-10)}


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3, help="timed runs per kernel (best kept)")
    parser.add_argument("--points", type=int, default=20000, help="Ferguson grid rows")
    parser.add_argument("--seasons", type=int, default=8, help="Ferguson seasons")
    parser.add_argument("--hidden", type=int, default=128, help="GRU hidden size")
    args = parser.parse_args(argv)

    try:
        kernels.get_backend("cython")
    except ImportError:
        parser.exit(1, "compiled extension not built; run pip install -e . first\n")

    cases = {}
    cases.update(ferguson_cases(args.points, args.seasons))
    for batch in (1, 12):
        cases.update(gru_cases(batch, args.hidden))

    print(f"{'kernel':52s} {'numpy s':>9s} {'cython s':>9s} {'speedup':>8s}")
    for name, (make, tol) in cases.items():
        t_py, out_py = best_of(make("python"), args.repeat)
        t_cy, out_cy = best_of(make("cython"), args.repeat)
        if not np.allclose(out_py, out_cy, rtol=tol, atol=tol):
            raise SystemExit(f"{name}: backends disagree")
        print(f"{name:52s} {t_py:9.4f} {t_cy:9.4f} {t_py / t_cy:7.1f}x")


if __name__ == "__main__":
    main()
