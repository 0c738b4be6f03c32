"""Flat genus-2 translation surface and its cone-aware triangulation.

The surface is the regular octagon with opposite sides glued by
translation.  Its abelian differential is ``dz`` in the polygon
coordinate, so every corner of the octagon is the same point: a cone
point of total angle 6*pi (a double zero of ``dz``).

The mesh subdivides the eight fan triangles (centre, V_k, V_k+1) into
congruent copies of themselves.  Mesh vertices live in the polygon plane
("copies"); copies that are glued together share one degree of freedom
("class").  All per-vertex fields are indexed by class.
"""
from __future__ import annotations

import configparser
import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

__all__ = [
    "MeshError",
    "TranslationSurface",
    "Mesh",
    "build_octagon_surface",
    "triangulate",
    "laplacian_apply",
    "integrate",
    "gradient",
    "star_laplacian",
    "stiffness_apply",
    "write_surface_config",
    "read_surface_config",
    "write_mesh_csv",
]

TWO_PI = 2.0 * math.pi


class MeshError(RuntimeError):
    """Raised when a triangulation cannot be made Delaunay."""


@dataclass(frozen=True)
class TranslationSurface:
    """Polygon with edges glued by translations.

    ``edge_pairings`` holds ``(i, j, v)`` meaning a point ``x`` on edge ``i``
    is glued to ``x + v`` on edge ``j``.  Edge ``i`` runs from vertex ``i``
    to vertex ``i + 1`` (counter-clockwise).
    """

    polygon_vertices: tuple[complex, ...]
    edge_pairings: tuple[tuple[int, int, complex], ...]
    cone_points: tuple[tuple[int, float], ...]
    genus: int

    @property
    def n_edges(self) -> int:
        return len(self.polygon_vertices)

    def edge(self, i: int) -> tuple[complex, complex]:
        v = self.polygon_vertices
        return v[i], v[(i + 1) % len(v)]

    def partner(self, i: int) -> tuple[int, complex]:
        """Glued edge of ``i`` and the translation taking edge ``i`` onto it."""
        for a, b, t in self.edge_pairings:
            if a == i:
                return b, t
            if b == i:
                return a, -t
        raise KeyError(i)

    def area(self) -> float:
        z = np.asarray(self.polygon_vertices)
        x, y = z.real, z.imag
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def vertex_classes(self) -> list[int]:
        """Identification class of every polygon corner (union-find)."""
        n = self.n_edges
        parent = list(range(n))

        def find(a: int) -> int:
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for i, j, _ in self.edge_pairings:
            # orientation reversing: start of i ~ end of j, end of i ~ start of j
            for a, b in ((i, (j + 1) % n), ((i + 1) % n, j)):
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
        roots = sorted({find(a) for a in range(n)})
        return [roots.index(find(a)) for a in range(n)]

    def corner_angles(self) -> np.ndarray:
        z = np.asarray(self.polygon_vertices)
        prev = np.roll(z, 1) - z
        nxt = np.roll(z, -1) - z
        return np.mod(np.angle(prev / nxt), TWO_PI)

    def gauss_bonnet_defect(self) -> float:
        """Sum over cone points of (2*pi - total angle)."""
        return float(sum(TWO_PI - theta for _, theta in self.cone_points))

    def euler_characteristic(self) -> int:
        n_classes = len(set(self.vertex_classes()))
        return n_classes - len(self.edge_pairings) + 1


def build_octagon_surface(circumradius: float = 1.0) -> TranslationSurface:
    """Regular octagon with opposite sides glued; one cone point of angle 6*pi."""
    if not circumradius > 0:
        raise ValueError("circumradius must be positive")
    verts = tuple(
        complex(circumradius * np.exp(1j * math.pi * (2 * k - 1) / 8)) for k in range(8)
    )
    pairings = []
    for i in range(4):
        mid = 0.5 * (verts[i] + verts[i + 1])
        pairings.append((i, i + 4, -2.0 * mid))
    surf = TranslationSurface(verts, tuple(pairings), (), 2)
    classes = surf.vertex_classes()
    angles = surf.corner_angles()
    cones = tuple(
        (c, float(sum(angles[k] for k in range(8) if classes[k] == c)))
        for c in sorted(set(classes))
    )
    genus = (2 - surf.euler_characteristic()) // 2
    return TranslationSurface(verts, tuple(pairings), cones, genus)


# --------------------------------------------------------------------------
# mesh


@dataclass(eq=False)
class Mesh:
    """Triangulation of a translation surface.

    ``points`` are polygon-plane copies; ``cls[p]`` is the degree of freedom
    of copy ``p``.  ``triangles`` index copies, so triangle geometry is
    always taken in one planar chart.
    """

    surface: TranslationSurface
    points: np.ndarray  # complex, per copy
    cls: np.ndarray  # int, per copy
    triangles: np.ndarray  # (F, 3) copy indices, counter-clockwise
    n_classes: int
    cone_class: int
    h: float  # nominal edge length away from the cone
    cutoff_guard: float = 0.0
    weights: sp.csr_matrix = field(init=False, repr=False)
    vertex_areas: np.ndarray = field(init=False, repr=False)
    face_vertex_areas: np.ndarray = field(init=False, repr=False)
    cone_distance: np.ndarray = field(init=False, repr=False)
    positions: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        self.cls = np.ascontiguousarray(self.cls, dtype=np.int64)
        self._build_operators()

    # geometry -----------------------------------------------------------
    def _build_operators(self) -> None:
        z = self.points[self.triangles]
        cots = _triangle_cotangents(z)
        areas = 0.5 * np.imag(np.conj(z[:, 1] - z[:, 0]) * (z[:, 2] - z[:, 0]))
        if np.any(areas <= 0):
            raise MeshError("degenerate or inverted triangle")
        self.face_areas = areas
        c = self.cls[self.triangles]
        rows, cols, vals = [], [], []
        for k in range(3):
            a, b = c[:, (k + 1) % 3], c[:, (k + 2) % 3]
            rows += [a, b]
            cols += [b, a]
            vals += [0.5 * cots[:, k], 0.5 * cots[:, k]]
        n = self.n_classes
        W = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        ).tocsr()
        W.sum_duplicates()
        W.setdiag(0.0)
        W.eliminate_zeros()
        self.weights = W
        self.face_vertex_areas = _dual_area_portions(z, cots, areas)
        self.vertex_areas = np.bincount(c.ravel(), self.face_vertex_areas.ravel(), minlength=n)
        pos = np.empty(n, dtype=complex)
        pos[self.cls[::-1]] = self.points[::-1]  # first copy wins
        self.positions = pos
        corners = np.asarray(self.surface.polygon_vertices)
        d = np.abs(self.points[:, None] - corners[None, :]).min(axis=1)
        dist = np.full(n, np.inf)
        np.minimum.at(dist, self.cls, d)
        dist[self.cone_class] = 0.0
        self.cone_distance = dist
        self.face_cots = cots

    @property
    def cone_vertex(self) -> int:
        return self.cone_class

    @property
    def cotan_weights(self) -> sp.csr_matrix:
        return self.weights

    @property
    def n_vertices(self) -> int:
        return self.n_classes

    @property
    def n_faces(self) -> int:
        return len(self.triangles)

    def laplacian_matrix(self) -> sp.csr_matrix:
        """Stiffness form ``W - diag(W 1)`` (symmetric, negative semidefinite)."""
        W = self.weights
        return (W - sp.diags(np.asarray(W.sum(axis=1)).ravel())).tocsr()

    def cone_fan_angle(self) -> float:
        z = self.points[self.triangles]
        ang = _triangle_angles(z)
        mask = self.cls[self.triangles] == self.cone_class
        return float(ang[mask].sum())

    def min_cotan_weight(self) -> float:
        return float(self.weights.data.min()) if self.weights.nnz else 0.0

    def euler_characteristic(self) -> int:
        return self.n_classes - self.n_edges() + self.n_faces

    def n_edges(self) -> int:
        return len(self._edge_keys())

    def _edge_keys(self) -> set[frozenset]:
        keys = set()
        canon = self._canonical_copy()
        for t in self.triangles:
            for k in range(3):
                a, b = int(t[(k + 1) % 3]), int(t[(k + 2) % 3])
                keys.add(frozenset((canon(a, b), canon(b, a))))
        return keys

    def _canonical_copy(self):
        """Map an edge copy on a glued side to its representative on sides 0..3."""
        surf = self.surface
        lookup = {_key(p): i for i, p in enumerate(self.points)}
        sides = [surf.edge(i) for i in range(surf.n_edges)]
        tol = 1e-9 * self.h

        def on_side(p: complex) -> list[int]:
            out = []
            for i, (a, b) in enumerate(sides):
                d = b - a
                t = ((p - a) * np.conj(d)).real / abs(d) ** 2
                if -1e-12 <= t <= 1 + 1e-12 and abs((p - a) - t * d) < tol:
                    out.append(i)
            return out

        cache: dict[tuple[int, int], int] = {}

        def canon(a: int, b: int) -> int:
            if (a, b) in cache:
                return cache[(a, b)]
            pa, pb = self.points[a], self.points[b]
            common = set(on_side(pa)) & set(on_side(pb))
            out = a
            for s in common:
                j, v = surf.partner(s)
                if s > j:
                    out = lookup[_key(pa + v)]
            cache[(a, b)] = out
            return out

        return canon

    def regular_mask(self) -> np.ndarray:
        """Classes whose star is centrally symmetric in the flat chart."""
        disp: list[list[complex]] = [[] for _ in range(self.n_classes)]
        z = self.points[self.triangles]
        c = self.cls[self.triangles]
        for k in range(3):
            for m in (1, 2):
                d = z[:, (k + m) % 3] - z[:, k]
                for ci, di in zip(c[:, k], d):
                    disp[ci].append(di)
        tol = 1e-6 * self.h
        out = np.zeros(self.n_classes, dtype=bool)
        for i, ds in enumerate(disp):
            if i == self.cone_class:
                continue
            arr = np.unique(np.round(np.asarray(ds) / tol))
            s = set(arr.tolist())
            out[i] = all(-v in s for v in s)
        return out

    def distance_to_spokes(self) -> np.ndarray:
        """Flat distance from each class to the fan-subdivision seams.

        Seams are the segments from the polygon centre to its corners, where
        two differently oriented lattices meet.
        """
        corners = np.asarray(self.surface.polygon_vertices)
        p = self.positions
        best = np.full(self.n_classes, np.inf)
        for c in corners:
            t = np.clip((p * np.conj(c)).real / abs(c) ** 2, 0.0, 1.0)
            best = np.minimum(best, np.abs(p - t * c))
        return best

    def star_neighbors(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Directed edge copies ``(source class, target class, displacement)``.

        One entry per triangle corner and adjacent edge, so interior edges
        appear twice per direction.
        """
        z = self.points[self.triangles]
        c = self.cls[self.triangles]
        src, dst, dz = [], [], []
        for k in range(3):
            for m in (1, 2):
                src.append(c[:, k])
                dst.append(c[:, (k + m) % 3])
                dz.append(z[:, (k + m) % 3] - z[:, k])
        return np.concatenate(src), np.concatenate(dst), np.concatenate(dz)


def _key(p: complex, scale: float = 1e10) -> tuple[int, int]:
    return (int(round(p.real * scale)), int(round(p.imag * scale)))


def _triangle_angles(z: np.ndarray) -> np.ndarray:
    out = np.empty(z.shape, dtype=float)
    for k in range(3):
        a = z[:, (k + 1) % 3] - z[:, k]
        b = z[:, (k + 2) % 3] - z[:, k]
        out[:, k] = np.abs(np.angle(b / a))
    return out


def _triangle_cotangents(z: np.ndarray) -> np.ndarray:
    out = np.empty(z.shape, dtype=float)
    for k in range(3):
        a = z[:, (k + 1) % 3] - z[:, k]
        b = z[:, (k + 2) % 3] - z[:, k]
        w = np.conj(a) * b
        out[:, k] = w.real / np.abs(w.imag)
    return out


def _dual_area_portions(z: np.ndarray, cots: np.ndarray, areas: np.ndarray) -> np.ndarray:
    """Circumcentric (Voronoi) share of each triangle at each of its corners.

    With these lumped areas the cotangent Laplacian is pointwise consistent
    at every vertex whose star has an isotropic second moment, including
    irregular symmetric stars where the barycentric third is not.  Obtuse
    triangles fall back to barycentric thirds.
    """
    out = np.empty(z.shape, dtype=float)
    for k in range(3):
        e1 = np.abs(z[:, (k + 1) % 3] - z[:, k]) ** 2
        e2 = np.abs(z[:, (k + 2) % 3] - z[:, k]) ** 2
        out[:, k] = 0.125 * (cots[:, (k + 2) % 3] * e1 + cots[:, (k + 1) % 3] * e2)
    obtuse = (cots < 0).any(axis=1)
    out[obtuse] = (areas[obtuse] / 3.0)[:, None]
    return out


def _grading_warp(p: np.ndarray, corners: np.ndarray, radius: float, q: float) -> np.ndarray:
    """Pull points inside ``radius`` of a corner towards it.

    The radial profile ``W(s) = s**e * (e - (e - 1) s)`` fixes the disk
    boundary to first order; ``e`` is chosen so the two innermost rings
    have spacing ratio ``q``.
    """
    if q >= 1.0:
        return p
    e = math.log2(1.0 + 1.0 / q)
    out = p.copy()
    for c in corners:
        d = p - c
        r = np.abs(d)
        m = (r < radius) & (r > 0)
        s = r[m] / radius
        w = s**e * (e - (e - 1.0) * s)
        out[m] = c + d[m] * (w / s)
    return out


def triangulate(
    surface: TranslationSurface,
    target_edge_length: float,
    cone_grading: float = 1.0,
    grading_radius: float | None = None,
) -> Mesh:
    """Subdivide the octagon's fan triangles into a conforming glued mesh.

    Parameters
    ----------
    surface : TranslationSurface
        Must be a centrally symmetric polygon (the built-in octagon).
    target_edge_length : float
        Upper bound for the length of the subdivided polygon sides.
    cone_grading : float in (0, 1]
        Spacing ratio of the innermost rings around the cone point; 1 means
        a uniform mesh.
    grading_radius : float, optional
        Radius of the graded zone around the cone, default 0.45 * side.
    """
    verts = np.asarray(surface.polygon_vertices)
    n_sides = len(verts)
    side = float(np.min(np.abs(np.roll(verts, -1) - verts)))
    if not 0 < target_edge_length < side:
        raise ValueError("target_edge_length must be below the shortest polygon edge")
    if not 0 < cone_grading <= 1:
        raise ValueError("cone_grading must lie in (0, 1]")
    n = max(3, math.ceil(side / target_edge_length - 1e-9))
    centre = 0j

    index: dict[tuple[int, int], int] = {}
    pts: list[complex] = []

    def vid(p: complex) -> int:
        k = _key(p)
        if k not in index:
            index[k] = len(pts)
            pts.append(p)
        return index[k]

    tris = []
    for k in range(n_sides):
        a, b = verts[k], verts[(k + 1) % n_sides]
        grid = {}
        for i in range(n + 1):
            for j in range(n + 1 - i):
                grid[i, j] = vid(centre + (i * (a - centre) + j * (b - centre)) / n)
        for i in range(n):
            for j in range(n - i):
                tris.append((grid[i, j], grid[i + 1, j], grid[i, j + 1]))
                if i + j < n - 1:
                    tris.append((grid[i + 1, j], grid[i + 1, j + 1], grid[i, j + 1]))
    points = np.asarray(pts, dtype=complex)

    # glue copies: union-find over side translations and corners
    parent = np.arange(len(points))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a: int, b: int) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    for i, j, v in surface.edge_pairings:
        a, b = surface.edge(i)
        for t in range(n + 1):
            p = a + (b - a) * t / n
            union(index[_key(p)], index[_key(p + v)])
    roots = np.array([find(a) for a in range(len(points))])
    _, cls = np.unique(roots, return_inverse=True)
    corner_cls = {int(cls[index[_key(v)]]) for v in verts}
    if len(corner_cls) != 1:
        raise MeshError("expected a single cone point")
    cone_class = corner_cls.pop()

    if grading_radius is None:
        grading_radius = 0.45 * side
    points = _grading_warp(points, verts, grading_radius, cone_grading)

    tri = np.asarray(tris, dtype=np.int64)
    tri = _delaunay_flips(points, cls, tri, cone_class)
    return Mesh(
        surface=surface,
        points=points,
        cls=cls,
        triangles=tri,
        n_classes=int(cls.max()) + 1,
        cone_class=cone_class,
        h=side / n,
    )


def _delaunay_flips(points, cls, tri, cone_class, max_rounds: int = 50):
    """Flip interior edges with negative cotangent weight.

    Edges on the polygon boundary are glued to an edge in another chart;
    those cannot be flipped in the planar representation, so a negative
    weight there is reported as an error.
    """
    tri = tri.copy()
    for _ in range(max_rounds):
        z = points[tri]
        cots = _triangle_cotangents(z)
        edge_map: dict[tuple[int, int], list[tuple[int, int]]] = {}
        for f in range(len(tri)):
            for k in range(3):
                a, b = tri[f, (k + 1) % 3], tri[f, (k + 2) % 3]
                edge_map.setdefault((min(a, b), max(a, b)), []).append((f, k))
        flipped = False
        used = set()
        for (a, b), owners in edge_map.items():
            if len(owners) != 2:
                continue
            (f1, k1), (f2, k2) = owners
            if cots[f1, k1] + cots[f2, k2] >= -1e-12 or f1 in used or f2 in used:
                continue
            c, d = tri[f1, k1], tri[f2, k2]
            t1 = (c, d, tri[f1, (k1 + 1) % 3]) if tri[f1, (k1 + 2) % 3] != d else None
            # rebuild both triangles counter-clockwise around the new edge (c, d)
            p, q = tri[f1, (k1 + 1) % 3], tri[f1, (k1 + 2) % 3]
            tri[f1] = (c, q, d)
            tri[f2] = (d, p, c)
            for f in (f1, f2):
                zz = points[tri[f]]
                if np.imag(np.conj(zz[1] - zz[0]) * (zz[2] - zz[0])) < 0:
                    tri[f] = tri[f][::-1]
            used.update((f1, f2))
            flipped = True
            del t1
        if not flipped:
            break
    # glued boundary edges: sum contributions across the gluing
    z = points[tri]
    cots = _triangle_cotangents(z)
    c = cls[tri]
    acc: dict[tuple[int, int], float] = {}
    for f in range(len(tri)):
        for k in range(3):
            a, b = int(c[f, (k + 1) % 3]), int(c[f, (k + 2) % 3])
            key = (min(a, b), max(a, b))
            acc[key] = acc.get(key, 0.0) + 0.5 * cots[f, k]
    bad = [k for k, w in acc.items() if w < -1e-12]
    if bad:
        raise MeshError(f"{len(bad)} edges keep negative cotangent weight after flips")
    return tri


# --------------------------------------------------------------------------
# operators


def stiffness_apply(mesh: Mesh, field: np.ndarray) -> np.ndarray:
    """``sum_j w_ij (f_j - f_i)`` in difference form (exactly zero on constants)."""
    f = np.asarray(field, dtype=float)
    W = mesh.weights
    rows = np.repeat(np.arange(W.shape[0]), np.diff(W.indptr))
    return np.bincount(rows, W.data * (f[W.indices] - f[rows]), minlength=W.shape[0])


def laplacian_apply(mesh: Mesh, field: np.ndarray) -> np.ndarray:
    """Lumped-mass cotangent Laplacian, ``(1/A_i) sum_j w_ij (f_j - f_i)``."""
    return stiffness_apply(mesh, field) / mesh.vertex_areas


def integrate(mesh: Mesh, field: np.ndarray) -> float:
    return float(np.dot(np.asarray(field, dtype=float), mesh.vertex_areas))


def _star_fit(mesh: Mesh, quadratic: bool):
    """Per-class least-squares fit operators on the vertex star."""
    src, dst, dz = mesh.star_neighbors()
    # each edge copy appears once per adjacent triangle; keep unique ones
    kx = np.round(dz.real / (1e-7 * mesh.h)).astype(np.int64)
    ky = np.round(dz.imag / (1e-7 * mesh.h)).astype(np.int64)
    rec = np.unique(np.stack([src, dst, kx, ky], axis=1), axis=0, return_index=True)[1]
    src, dst, dz = src[rec], dst[rec], dz[rec]
    x, y = dz.real, dz.imag
    cols = [x, y] + ([0.5 * x * x, x * y, 0.5 * y * y] if quadratic else [])
    A = np.stack(cols, axis=1)
    order = np.argsort(src, kind="stable")
    src, dst, A = src[order], dst[order], A[order]
    bounds = np.searchsorted(src, np.arange(mesh.n_classes + 1))
    return src, dst, A, bounds


def _apply_fit(mesh: Mesh, f: np.ndarray, quadratic: bool) -> np.ndarray:
    cache_name = "_fit_q" if quadratic else "_fit_l"
    ops = getattr(mesh, cache_name, None)
    if ops is None:
        src, dst, A, bounds = _star_fit(mesh, quadratic)
        pinv = []
        for i in range(mesh.n_classes):
            lo, hi = bounds[i], bounds[i + 1]
            if i == mesh.cone_class or hi - lo < A.shape[1]:
                pinv.append(None)
            else:
                pinv.append(np.linalg.pinv(A[lo:hi]))
        ops = (src, dst, bounds, pinv)
        setattr(mesh, cache_name, ops)
    src, dst, bounds, pinv = ops
    ncoef = 5 if quadratic else 2
    out = np.full((mesh.n_classes, ncoef), np.nan, dtype=f.dtype)
    df = f[dst] - f[src]
    for i, P in enumerate(pinv):
        if P is not None:
            out[i] = P @ df[bounds[i] : bounds[i + 1]]
    return out


def gradient(mesh: Mesh, field: np.ndarray) -> np.ndarray:
    """Complex ``d/dz`` of a per-class field via a quadratic star fit.

    Returns NaN at the cone class, where the flat chart is singular.
    """
    c = _apply_fit(mesh, np.asarray(field), quadratic=True)
    return 0.5 * (c[:, 0] - 1j * c[:, 1])


def _two_ring_operators(mesh: Mesh):
    """Cubic least-squares Laplacian weights on each two-ring, cached on the mesh.

    Two-ring points are developed into the chart by composing edge
    displacements, which is consistent away from the cone.  Classes whose
    two-ring touches the cone get no operator.
    """
    ops = mesh.__dict__.get("_two_ring")
    if ops is not None:
        return ops
    src, dst, dz = mesh.star_neighbors()
    scale = 1e-7 * mesh.h
    kx = np.round(dz.real / scale).astype(np.int64)
    ky = np.round(dz.imag / scale).astype(np.int64)
    keep = np.unique(np.stack([src, dst, kx, ky], axis=1), axis=0, return_index=True)[1]
    src, dst, dz = src[keep], dst[keep], dz[keep]
    order = np.argsort(src, kind="stable")
    src, dst, dz = src[order], dst[order], dz[order]
    bounds = np.searchsorted(src, np.arange(mesh.n_classes + 1))
    cone = mesh.cone_class
    near_cone = np.zeros(mesh.n_classes, dtype=bool)
    near_cone[cone] = True
    near_cone[dst[src == cone]] = True
    rows = []
    for i in range(mesh.n_classes):
        if near_cone[i]:
            rows.append(None)
            continue
        lo, hi = bounds[i], bounds[i + 1]
        pts = {}
        for j, d in zip(dst[lo:hi], dz[lo:hi]):
            pts[(round(d.real / scale), round(d.imag / scale))] = (j, d)
            a, b = bounds[j], bounds[j + 1]
            for k, e in zip(dst[a:b], dz[a:b]):
                w = d + e
                if abs(w) > 1e-9 * mesh.h:
                    pts.setdefault((round(w.real / scale), round(w.imag / scale)), (k, w))
        cls_ = np.array([v[0] for v in pts.values()])
        w = np.array([v[1] for v in pts.values()])
        x, y = w.real, w.imag
        A = np.stack([x, y, 0.5 * x * x, x * y, 0.5 * y * y,
                      x**3, x * x * y, x * y * y, y**3], axis=1)
        P = np.linalg.pinv(A)
        rows.append((cls_, P[2] + P[4]))
    mesh.__dict__["_two_ring"] = rows
    return rows


def star_laplacian(mesh: Mesh, field: np.ndarray) -> np.ndarray:
    """Flat Laplacian from a cubic least-squares fit on each two-ring.

    An independent discretisation of the operator in :func:`laplacian_apply`
    (different stencil, exact on cubics, second order on any star shape).
    NaN where the two-ring reaches the cone.
    """
    f = np.asarray(field, dtype=float)
    out = np.full(mesh.n_classes, np.nan)
    for i, op in enumerate(_two_ring_operators(mesh)):
        if op is not None:
            cls_, wts = op
            out[i] = wts @ (f[cls_] - f[i])
    return out


# --------------------------------------------------------------------------
# file formats


def write_surface_config(surface: TranslationSurface, path: str | Path) -> None:
    cp = configparser.ConfigParser()
    cp["surface"] = {"genus": str(surface.genus)}
    cp["polygon"] = {
        "vertices": json.dumps([[float(z.real), float(z.imag)] for z in surface.polygon_vertices])
    }
    cp["pairings"] = {
        "edges": json.dumps([[i, j, [v.real, v.imag]] for i, j, v in surface.edge_pairings])
    }
    cp["cone_points"] = {"points": json.dumps([[c, a] for c, a in surface.cone_points])}
    with open(path, "w") as fh:
        cp.write(fh)


def read_surface_config(path: str | Path) -> TranslationSurface:
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise FileNotFoundError(path)
    verts = tuple(complex(x, y) for x, y in json.loads(cp["polygon"]["vertices"]))
    pairs = tuple((int(i), int(j), complex(*v)) for i, j, v in json.loads(cp["pairings"]["edges"]))
    cones = tuple((int(c), float(a)) for c, a in json.loads(cp["cone_points"]["points"]))
    return TranslationSurface(verts, pairs, cones, int(cp["surface"]["genus"]))


def write_mesh_csv(mesh: Mesh, vertex_path: str | Path, triangle_path: str | Path) -> None:
    with open(vertex_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["vertex_id", "x", "y", "class_id", "area", "cone_distance"])
        for i, p in enumerate(mesh.points):
            c = int(mesh.cls[i])
            w.writerow([i, repr(float(p.real)), repr(float(p.imag)), c,
                        repr(float(mesh.vertex_areas[c])), repr(float(mesh.cone_distance[c]))])
    with open(triangle_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["triangle_id", "v0", "v1", "v2"])
        for f, t in enumerate(mesh.triangles):
            w.writerow([f, int(t[0]), int(t[1]), int(t[2])])
