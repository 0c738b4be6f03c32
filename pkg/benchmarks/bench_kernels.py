"""Compare the compiled and pure-Python transport kernels.

Builds a Hitchin-family connection on a mesh, extracts the per-piece data
of the four generator loops and times both kernels on identical input.

    python3 benchmarks/bench_kernels.py [--h 0.05] [--repeat 3]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from conflimit import _kernels_py
from conflimit.connection import _piece_data, assemble_connection, generator_paths
from conflimit.higgs import HiggsData, Parameters
from conflimit.surface import build_octagon_surface, triangulate
from conflimit.vortex import solve_vortex

try:
    from conflimit import _kernels
except ImportError:  # extension not built
    _kernels = None


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--h", type=float, default=0.05, help="target edge length")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    surface = build_octagon_surface(1.0)
    mesh = triangulate(surface, args.h)
    data = HiggsData.hitchin(1.0)
    params = Parameters(1.0, 1.0)
    field, _ = solve_vortex(mesh, data, 1.0)
    conn = assemble_connection(mesh, data, params, field)
    hb, R2 = params.hbar, params.R**2
    al, be = data.alpha_coeff, data.beta_coeff
    consts = (float(field.singular_coefficient), float(field.cutoff_radius),
              complex(al / hb), complex(be / hb),
              complex(hb * R2 * np.conj(be)), complex(hb * R2 * np.conj(al)))
    pieces = [_piece_data(conn, p) for p in generator_paths(surface)]
    n_pieces = sum(len(p[0]) for p in pieces)

    def run(kernel):
        return [kernel(*p, *consts)[0] for p in pieces]

    print(f"mesh: {mesh.n_classes} vertices, {n_pieces} path pieces over 4 loops")
    t_py, ref = _time(lambda: run(_kernels_py.transport_pieces), args.repeat)
    print(f"pure python : {t_py:9.4f} s")
    if _kernels is None:
        print("compiled    : not built")
        return 0
    t_c, out = _time(lambda: run(_kernels.transport_pieces), args.repeat)
    diff = max(float(np.max(np.abs(a - b))) for a, b in zip(ref, out))
    print(f"compiled    : {t_c:9.4f} s   speed-up {t_py / t_c:6.1f}x   max |diff| {diff:.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
