"""Regenerate the bundled random-hull mesh fixtures (needs scipy).

Usage: python3 scripts/make_fixtures.py [--seed3 N] [--seed2 N]
"""
import argparse
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay

from divbasis.mesh import build_mesh, save_mesh

DATA = Path(__file__).resolve().parents[1] / "src" / "divbasis" / "data"


def random_hull(dim: int, npts: int, seed: int):
    pts = np.random.default_rng(seed).random((npts, dim))
    tri = Delaunay(pts)
    return build_mesh(pts, tri.simplices)


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed3", type=int, default=1)
    ap.add_argument("--seed2", type=int, default=0)
    args = ap.parse_args()
    save_mesh(random_hull(3, 20, args.seed3), DATA / "cube20.mesh")
    save_mesh(random_hull(2, 50, args.seed2), DATA / "hull2d.mesh")


if __name__ == "__main__":
    main()
