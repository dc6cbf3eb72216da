"""Versioned on-disk cache of reference bases (``.npz``, no pickles).

Stored arrays, in this order: ``format`` (the string ``divbasis-basis``),
``format_version``, ``dim``, ``degree``, ``H``, ``degree_offsets``, ``N``,
``C``, ``Q``.  The quadrature rule is rebuilt from ``(degree, dim)``; it is
deterministic, and ``Q`` is checked against its size on load.
"""
from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .divfree import DivFreeRefBasis, build_divfree_ref, divfree_offsets
from .orthopoly import OrthoPolyBasis, build_orthopoly, degree_offsets
from .quadrature import simplex_rule

__all__ = ["FORMAT", "FORMAT_VERSION", "BasisFileError", "save_basis", "load_basis",
           "cache_file", "cached_basis"]

log = logging.getLogger(__name__)

FORMAT = "divbasis-basis"
FORMAT_VERSION = 1


class BasisFileError(ValueError):
    pass


class BasisVersionError(BasisFileError):
    pass


def save_basis(ref: DivFreeRefBasis, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    o = ref.ortho
    with open(path, "wb") as fh:
        np.savez(fh, format=np.array(FORMAT), format_version=np.array(FORMAT_VERSION),
                 dim=np.array(ref.dim), degree=np.array(ref.degree), H=o.H,
                 degree_offsets=np.array(o.degree_offsets), N=ref.N, C=ref.C, Q=o.Q)
    return path


def _frozen(a) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


def load_basis(path) -> DivFreeRefBasis:
    path = Path(path)
    try:
        z = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise BasisFileError(f"{path}: not a basis file ({exc})") from None
    with z:
        if "format" not in z.files or str(z["format"]) != FORMAT:
            raise BasisFileError(f"{path}: not a {FORMAT} file")
        version = int(z["format_version"])
        if version != FORMAT_VERSION:
            raise BasisVersionError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
        d, k = int(z["dim"]), int(z["degree"])
        offs = tuple(int(v) for v in z["degree_offsets"])
        if offs != degree_offsets(k, d):
            raise BasisFileError(f"{path}: degree offsets do not match (d={d}, k={k})")
        quad = simplex_rule(k, d)
        Q, H, N, C = (_frozen(z[name]) for name in ("Q", "H", "N", "C"))
    p = offs[-1]
    n = divfree_offsets(k, d)[-1]
    if Q.shape != (quad.npoints, p) or H.shape != (p, max(p - 1, 0)) or N.shape != (d * p, n):
        raise BasisFileError(f"{path}: array shapes inconsistent with (d={d}, k={k})")
    ortho = OrthoPolyBasis(d, k, Q, H, offs, quad)
    return DivFreeRefBasis(d, k, N, C, ortho, divfree_offsets(k, d))


def cache_file(path, d: int, k: int) -> Path:
    """A ``.npz`` path is used as is; anything else is a directory holding one file per ``(d, k)``."""
    path = Path(path)
    if path.suffix == ".npz":
        return path
    return path / f"divfree_d{d}_k{k}.npz"


def cached_basis(d: int, k: int, path=None) -> tuple[DivFreeRefBasis, bool]:
    """Load the reference basis from the cache or build and store it; returns ``(basis, hit)``."""
    if path is None:
        return build_divfree_ref(build_orthopoly(k, d)), False
    file = cache_file(path, d, k)
    if file.exists():
        try:
            ref = load_basis(file)
        except BasisVersionError as exc:
            log.warning("%s; rebuilding", exc)
        else:
            if (ref.dim, ref.degree) == (d, k):
                return ref, True
            log.warning("%s holds (d=%d, k=%d), wanted (d=%d, k=%d); rebuilding",
                        file, ref.dim, ref.degree, d, k)
    ref = build_divfree_ref(build_orthopoly(k, d))
    save_basis(ref, file)
    return ref, False
