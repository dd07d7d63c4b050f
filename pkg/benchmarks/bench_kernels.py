"""Numba vs pure-numpy timings for the accelerated kernels.

    python3 benchmarks/bench_kernels.py            # both paths, side by side
    python3 benchmarks/bench_kernels.py --repeat 5

The path is chosen with VQ_DISABLE_NUMBA, exactly as in production runs; the
two halves run in separate interpreters so nothing leaks between them.
Results of both paths are checked for equality before timing is reported.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

CASES = {
    # name: (kernel, kwargs)
    "fock_H N=6 n_max=3": ("sparse", dict(n_sites=6, n_max=3)),
    "fock_H N=8 n_max=2": ("sparse", dict(n_sites=8, n_max=2)),
    "pair_sector N=48": ("pair", dict(n_modes=48)),
    "pair_sector N=64": ("pair", dict(n_modes=64)),
}


def _child(repeat: int) -> None:
    import numpy as np

    from vqemit import _accel, _kernels
    from vqemit.model import ModelParams, sparse_hamiltonian
    from vqemit.polaron import solve_polaron

    out = {"numba": _accel.use_numba(), "cases": {}}
    for name, (kind, kw) in CASES.items():
        if kind == "sparse":
            p = ModelParams(n_sites=kw["n_sites"], g=0.4)
            fn = lambda: sparse_hamiltonian(p, kw["n_max"])  # noqa: E731
        else:
            sol = solve_polaron(ModelParams(n_sites=kw["n_modes"], g=0.4))
            fn = lambda: _kernels.pair_sector_dense(sol.modes.omega_k, sol.f_k, sol.delta_r)  # noqa: E731
        t0 = time.perf_counter()
        res = fn()  # first call includes compilation (or cache load)
        first = time.perf_counter() - t0
        times = []
        for _ in range(repeat):
            t0 = time.perf_counter()
            fn()
            times.append(time.perf_counter() - t0)
        dense = res.toarray() if hasattr(res, "toarray") else np.asarray(res)
        out["cases"][name] = {
            "first": first,
            "best": min(times),
            "checksum": float(np.abs(dense).sum()),
            "frob": float(np.linalg.norm(dense)),
        }
    print(json.dumps(out))


def _run(disable: bool, repeat: int) -> dict:
    env = dict(os.environ, VQ_DISABLE_NUMBA="1" if disable else "0")
    res = subprocess.run(
        [sys.executable, __file__, "--child", "--repeat", str(repeat)],
        env=env, capture_output=True, text=True, check=True,
    )
    return json.loads(res.stdout.strip().splitlines()[-1])


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args(argv)
    if args.child:
        _child(args.repeat)
        return 0
    fast = _run(False, args.repeat)
    slow = _run(True, args.repeat)
    if not fast["numba"]:
        print("numba is not available; both columns use numpy")
    print(f"{'case':<22}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}{'numba 1st':>12}  match")
    ok = True
    for name in CASES:
        a, b = slow["cases"][name], fast["cases"][name]
        match = abs(a["frob"] - b["frob"]) <= 1e-10 * max(1.0, a["frob"])
        ok &= match
        print(f"{name:<22}{a['best']:>12.4f}{b['best']:>12.4f}{a['best'] / b['best']:>10.1f}"
              f"{b['first']:>12.3f}  {'yes' if match else 'NO'}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
