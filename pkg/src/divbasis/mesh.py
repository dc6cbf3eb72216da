"""Simplicial meshes: generators, text I/O, oriented faces and element geometry.

Conventions (the global face numbering depends on them):

* elements are reordered to positive orientation on construction;
* local face ``g`` of an element is the face opposite its local vertex ``g``;
* faces are keyed by their ascending node tuple and sorted by that key;
  side 0 (``e+``) is the lower element index, side 1 (``e-``) the higher one
  or ``-1`` on the boundary;
* each face is parameterized from its lowest-numbered node, so both adjacent
  elements see the same face coordinates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

__all__ = [
    "SimplicialMesh",
    "FaceFrame",
    "ElementGeometry",
    "MeshFormatError",
    "build_mesh",
    "gen_uniform_square",
    "gen_lshape_graded",
    "load_mesh",
    "save_mesh",
    "load_fixture",
    "mesh_from_spec",
    "element_geometry",
    "face_frame",
]


class MeshFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ElementGeometry:
    nodes: np.ndarray          # (d+1, d)
    jacobian: np.ndarray       # F = d(reference)/d(physical)
    edges: np.ndarray          # inverse of F, columns X_{j+1} - X_0
    volume: float
    normals: np.ndarray        # (d+1, d) outward unit normal of local face g
    measures: np.ndarray       # (d+1,)


@dataclass(frozen=True)
class FaceFrame:
    """Shared affine parameterization ``x = origin + tangents @ t`` of one face."""

    face: int
    origin: np.ndarray         # (d,)
    tangents: np.ndarray       # (d, d-1)
    elements: tuple[int, ...]
    _element_maps: tuple[tuple[np.ndarray, np.ndarray], ...]

    def to_physical(self, t) -> np.ndarray:
        t = np.atleast_2d(np.asarray(t, dtype=float))
        return self.origin + t @ self.tangents.T

    def to_element_reference(self, side: int, t) -> np.ndarray:
        """Reference coordinates, in the adjacent element ``side``, of face points ``t``."""
        x0, F = self._element_maps[side]
        return (self.to_physical(t) - x0) @ F.T


@dataclass(frozen=True)
class SimplicialMesh:
    dim: int
    nodes: np.ndarray            # (n_v, d)
    elements: np.ndarray         # (n_e, d+1), positively oriented
    faces: np.ndarray            # (n_f, d) ascending node indices
    face_elements: np.ndarray    # (n_f, 2); column 1 is -1 on boundary faces
    face_local: np.ndarray       # (n_f, 2) local face index in each adjacent element
    element_faces: np.ndarray    # (n_e, d+1) face id of local face g
    face_normals: np.ndarray     # (n_f, 2, d) outward normal seen from each side
    face_measures: np.ndarray    # (n_f,)
    volumes: np.ndarray          # (n_e,)

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]

    @property
    def boundary_mask(self) -> np.ndarray:
        return self.face_elements[:, 1] < 0

    @property
    def interior_faces(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_mask)

    @property
    def boundary_faces(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_mask)

    def element_nodes(self, e: int) -> np.ndarray:
        return self.nodes[self.elements[e]]

    def diameters(self) -> np.ndarray:
        X = self.nodes[self.elements]
        diff = X[:, :, None, :] - X[:, None, :, :]
        return np.sqrt((diff ** 2).sum(axis=-1)).reshape(len(X), -1).max(axis=1)

    def locate(self, x, tol: float = 1e-12) -> tuple[int, np.ndarray]:
        """Element containing point ``x`` and the point's reference coordinates there."""
        x = np.asarray(x, dtype=float)
        X0 = self.nodes[self.elements[:, 0]]
        E = np.transpose(self.nodes[self.elements[:, 1:]] - X0[:, None, :], (0, 2, 1))
        s = np.linalg.solve(E, (x - X0)[:, :, None])[:, :, 0]
        lam = np.column_stack([1.0 - s.sum(axis=1), s])
        worst = lam.min(axis=1)
        e = int(np.argmax(worst))
        if worst[e] < -tol:
            raise ValueError(f"point {x.tolist()} lies outside the mesh")
        return e, s[e]


def _signed_det(X: np.ndarray) -> np.ndarray:
    E = X[:, 1:] - X[:, :1]
    return np.linalg.det(E)


def element_geometry(mesh: SimplicialMesh | np.ndarray, e: int | None = None) -> ElementGeometry:
    """Nodes, Jacobian ``F = E^{-1}``, volume, outward normals and face measures.

    Accepts a mesh and element index, or a ``(d+1, d)`` node array.
    """
    X = np.asarray(mesh.element_nodes(e) if isinstance(mesh, SimplicialMesh) else mesh, dtype=float)
    d = X.shape[1]
    E = (X[1:] - X[0]).T
    det = float(np.linalg.det(E))
    scale = float(np.abs(E).max())
    if abs(det) <= 1e-12 * scale ** d:
        raise ValueError(f"degenerate element{'' if e is None else f' {e}'}: |det| = {abs(det):.3e}")
    F = np.linalg.inv(E)
    vol = abs(det) / math.factorial(d)
    # barycentric gradients: rows of F for vertices 1..d, minus their sum for vertex 0
    grads = np.vstack([-F.sum(axis=0), F])
    glen = np.linalg.norm(grads, axis=1)
    normals = -grads / glen[:, None]
    measures = d * vol * glen
    return ElementGeometry(X, F, E, vol, normals, measures)


def build_mesh(nodes, elements) -> SimplicialMesh:
    """Validate, orient and index a simplicial mesh."""
    nodes = np.ascontiguousarray(nodes, dtype=float)
    elements = np.array(elements, dtype=np.int64)
    if nodes.ndim != 2 or elements.ndim != 2:
        raise ValueError("nodes and elements must be 2-D arrays")
    nv, d = nodes.shape
    if elements.shape[1] != d + 1:
        raise ValueError(f"{d}-D mesh needs {d + 1} nodes per element, got {elements.shape[1]}")
    if elements.size and (elements.min() < 0 or elements.max() >= nv):
        raise ValueError("element node index out of range")
    if any(len(set(row)) != d + 1 for row in elements.tolist()):
        raise ValueError("element with repeated node index")

    det = _signed_det(nodes[elements])
    flip = det < 0
    if d >= 2:
        elements[flip, -2], elements[flip, -1] = elements[flip, -1], elements[flip, -2].copy()
    elif np.any(flip):
        elements[flip] = elements[flip][:, ::-1]

    ne = elements.shape[0]
    keys: dict[tuple[int, ...], list[tuple[int, int]]] = {}
    for e, row in enumerate(elements.tolist()):
        for g in range(d + 1):
            key = tuple(sorted(row[:g] + row[g + 1:]))
            keys.setdefault(key, []).append((e, g))
    ordered = sorted(keys)
    nf = len(ordered)
    faces = np.array(ordered, dtype=np.int64).reshape(nf, d)
    face_elements = np.full((nf, 2), -1, dtype=np.int64)
    face_local = np.full((nf, 2), -1, dtype=np.int64)
    element_faces = np.zeros((ne, d + 1), dtype=np.int64)
    for f, key in enumerate(ordered):
        adj = sorted(keys[key])
        if len(adj) > 2:
            raise ValueError(f"face {key} is shared by {len(adj)} elements")
        for side, (e, g) in enumerate(adj):
            face_elements[f, side] = e
            face_local[f, side] = g
            element_faces[e, g] = f

    geoms = [element_geometry(nodes[elements[e]]) for e in range(ne)]
    volumes = np.array([g.volume for g in geoms])
    face_normals = np.zeros((nf, 2, d))
    face_measures = np.zeros(nf)
    for f in range(nf):
        for side in range(2):
            e = face_elements[f, side]
            if e >= 0:
                face_normals[f, side] = geoms[e].normals[face_local[f, side]]
        face_measures[f] = geoms[face_elements[f, 0]].measures[face_local[f, 0]]
    for arr in (nodes, elements, faces, face_elements, face_local, element_faces,
                face_normals, face_measures, volumes):
        arr.setflags(write=False)
    return SimplicialMesh(d, nodes, elements, faces, face_elements, face_local,
                          element_faces, face_normals, face_measures, volumes)


def face_frame(mesh: SimplicialMesh, f: int) -> FaceFrame:
    verts = mesh.nodes[mesh.faces[f]]
    origin = verts[0]
    tangents = (verts[1:] - origin).T
    maps = []
    elems = tuple(int(e) for e in mesh.face_elements[f] if e >= 0)
    for e in elems:
        X = mesh.element_nodes(e)
        maps.append((X[0], np.linalg.inv((X[1:] - X[0]).T)))
    return FaceFrame(f, origin, tangents.reshape(mesh.dim, mesh.dim - 1), elems, tuple(maps))


# -- generators ------------------------------------------------------------------

def gen_uniform_square(n: int) -> SimplicialMesh:
    """``2 n**2`` right triangles on the unit square, every cell cut along its rising diagonal."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    t = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(t, t, indexing="xy")
    nodes = np.column_stack([xx.ravel(), yy.ravel()])
    elems = []
    for j in range(n):
        for i in range(n):
            a = j * (n + 1) + i
            b, c, dd = a + 1, a + n + 2, a + n + 1
            elems.append((a, b, c))
            elems.append((a, c, dd))
    return build_mesh(nodes, elems)


def _lshape_ring(m: int) -> np.ndarray:
    """Unit L-infinity ring around the re-entrant corner, ``6 m + 1`` points, counter-clockwise
    from the edge ``y = 1, x > 1`` to the edge ``x = 1, y > 1``."""
    corners = np.array([[1, 0], [1, -1], [0, -1], [-1, -1], [-1, 0], [-1, 1], [0, 1]], dtype=float)
    pts = [corners[0]]
    for a, b in zip(corners[:-1], corners[1:]):
        for s in range(1, m + 1):
            pts.append(a + (b - a) * s / m)
    return np.array(pts)


def gen_lshape_graded(levels: int = 20, ratio: float = 0.5, per_edge: int = 4) -> SimplicialMesh:
    """L-shaped domain ``[0,2]^2 minus [1,2]^2`` graded geometrically toward ``(1, 1)``.

    Rings at L-infinity distance ``ratio**i`` (``i = 0..levels``) from the
    corner are joined by split quadrilaterals; the innermost ring is fanned
    to the corner.  Element count is ``6 * per_edge * (2 * levels + 1)``.
    """
    if levels < 1:
        raise ValueError(f"need levels >= 1, got {levels}")
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")
    if per_edge < 1:
        raise ValueError(f"need per_edge >= 1, got {per_edge}")
    corner = np.array([1.0, 1.0])
    ring = _lshape_ring(per_edge)
    nr = ring.shape[0]
    nodes = [corner[None, :]]
    for i in range(levels + 1):
        pts = corner + ratio ** i * ring
        if i == 0:
            pts = np.round(pts, 15)
        nodes.append(pts)
    nodes = np.vstack(nodes)

    def idx(i: int, t: int) -> int:
        return 1 + i * nr + t

    elems = []
    for i in range(levels):
        for t in range(nr - 1):
            a, b = idx(i, t), idx(i, t + 1)
            c, dd = idx(i + 1, t + 1), idx(i + 1, t)
            elems.append((a, b, c))
            elems.append((a, c, dd))
    for t in range(nr - 1):
        elems.append((0, idx(levels, t), idx(levels, t + 1)))
    return build_mesh(nodes, elems)


# -- file I/O --------------------------------------------------------------------

def save_mesh(mesh: SimplicialMesh, path) -> None:
    """Text format: ``dim n_v n_e``, node rows (17 significant digits), 1-based element rows."""
    lines = [f"{mesh.dim} {mesh.nodes.shape[0]} {mesh.n_elements}"]
    lines += [" ".join(f"{v:.17g}" for v in row) for row in mesh.nodes]
    lines += [" ".join(str(i + 1) for i in row) for row in mesh.elements]
    Path(path).write_text("\n".join(lines) + "\n")


def parse_mesh(text: str, source: str = "<string>") -> SimplicialMesh:
    rows = [(no, ln.split()) for no, ln in enumerate(text.splitlines(), start=1)]
    rows = [(no, toks) for no, toks in rows if toks and not toks[0].startswith("#")]
    if not rows:
        raise MeshFormatError(f"{source}: empty mesh file")
    no, head = rows[0]
    try:
        d, nv, ne = (int(t) for t in head)
    except ValueError:
        raise MeshFormatError(f"{source}:{no}: header must be 'dim n_v n_e'") from None
    if d < 1 or nv < 0 or ne < 0:
        raise MeshFormatError(f"{source}:{no}: invalid header values")
    if len(rows) != 1 + nv + ne:
        raise MeshFormatError(
            f"{source}: expected {1 + nv + ne} data lines, found {len(rows)}")
    nodes = np.empty((nv, d))
    for r, (no, toks) in enumerate(rows[1:1 + nv]):
        if len(toks) != d:
            raise MeshFormatError(f"{source}:{no}: node row needs {d} coordinates")
        try:
            nodes[r] = [float(t) for t in toks]
        except ValueError:
            raise MeshFormatError(f"{source}:{no}: bad coordinate") from None
    elems = np.empty((ne, d + 1), dtype=np.int64)
    for r, (no, toks) in enumerate(rows[1 + nv:]):
        if len(toks) != d + 1:
            raise MeshFormatError(f"{source}:{no}: element row needs {d + 1} indices")
        try:
            ids = [int(t) for t in toks]
        except ValueError:
            raise MeshFormatError(f"{source}:{no}: bad node index") from None
        if min(ids) < 1 or max(ids) > nv:
            raise MeshFormatError(f"{source}:{no}: node index out of range 1..{nv}")
        elems[r] = [i - 1 for i in ids]
    try:
        return build_mesh(nodes, elems)
    except ValueError as exc:
        raise MeshFormatError(f"{source}: {exc}") from None


def load_mesh(path) -> SimplicialMesh:
    path = Path(path)
    return parse_mesh(path.read_text(), str(path))


FIXTURES = {"cube20": "cube20.mesh", "hull2d": "hull2d.mesh"}


def load_fixture(name: str) -> SimplicialMesh:
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; available: {sorted(FIXTURES)}")
    text = resources.files("divbasis.data").joinpath(FIXTURES[name]).read_text()
    return parse_mesh(text, name)


def mesh_from_spec(spec: str) -> SimplicialMesh:
    """``square8``, ``square:N``, ``lshape[:levels[:ratio[:per_edge]]]``, a fixture name or a file path."""
    if spec == "square8":
        return gen_uniform_square(2)
    head, _, rest = spec.partition(":")
    if head == "square" and rest:
        return gen_uniform_square(int(rest))
    if head == "lshape":
        args = [a for a in rest.split(":") if a] if rest else []
        kw = {}
        if len(args) > 0:
            kw["levels"] = int(args[0])
        if len(args) > 1:
            kw["ratio"] = float(args[1])
        if len(args) > 2:
            kw["per_edge"] = int(args[2])
        return gen_lshape_graded(**kw)
    if spec in FIXTURES:
        return load_fixture(spec)
    path = Path(spec)
    if path.exists():
        return load_mesh(path)
    raise ValueError(f"unknown mesh spec {spec!r}")
