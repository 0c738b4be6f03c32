"""Flat connections of the family, their holonomy and the conformal limit.

In the omega-adapted frame the connection is ``d + M dz + N dzbar`` with

    M = [[d_z phi, alpha/hbar], [beta/hbar, -d_z phi]],
    N = [[0, hbar R^2 conj(beta) e^{-2 phi}], [hbar R^2 conj(alpha) e^{2 phi}, 0]].

Its curvature is ``(d_z N - d_zbar M + [M, N]) dz ^ dzbar``; the diagonal
is minus the vortex residual and the off-diagonals vanish identically.

Parallel transport uses the convention ``P' = P A`` so that transports
compose in path order: ``P(gamma1 * gamma2) = P(gamma1) P(gamma2)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
import pathlib

import numpy as np
from scipy.linalg import expm

from . import kernels
from .higgs import HITCHIN, HiggsData, Parameters
from .surface import Mesh, TranslationSurface, gradient
from .vortex import MetricField, background, new_field, solve_vortex

__all__ = [
    "ConnectionField",
    "Path",
    "PathError",
    "assemble_connection",
    "curvature_residual",
    "transport",
    "generator_paths",
    "relator_word",
    "holonomy_generators",
    "relation_defect",
    "evaluate_word",
    "conformal_limit",
    "LimitResult",
]


class PathError(ValueError):
    """A path enters the guard disk around the cone point."""


def _background_dz(z: np.ndarray, corners: np.ndarray, a: float, rc: float) -> np.ndarray:
    """``d/dz`` of ``a chi(r) log r`` at flat points (nearest corner)."""
    z = np.asarray(z, dtype=complex)
    d = z[..., None] - corners
    k = np.argmin(np.abs(d), axis=-1)
    dd = np.take_along_axis(d, k[..., None], axis=-1)[..., 0]
    r = np.abs(dd)
    if a == 0.0:
        return np.zeros_like(z)
    w = 0.5 * rc
    s = np.clip((r - w) / w, 0.0, 1.0)
    chi = 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s * s)
    d1 = np.where((s > 0) & (s < 1), -30.0 * s * s * (1.0 - s) ** 2 / w, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        db = a * (d1 * np.log(r) + chi / r)
        out = db * np.conj(dd) / (2.0 * r)
    return np.where(r >= rc, 0.0, out)


@dataclass(eq=False)
class ConnectionField:
    """Per-vertex coefficient matrices of the connection (``M`` for dz, ``N`` for dzbar)."""

    mesh: Mesh
    data: HiggsData
    params: Parameters
    field: MetricField
    M: np.ndarray
    N: np.ndarray
    frame_note: str = "omega-adapted frame"

    @property
    def dphi(self) -> np.ndarray:
        return self.M[:, 0, 0]

    @property
    def constant(self) -> bool:
        return self.data.family != HITCHIN


def _matrices(data, params, phi, dphi, limit=False):
    n = len(phi)
    hb = params.hbar
    R2 = params.R**2
    al, be = data.alpha_coeff, data.beta_coeff
    M = np.zeros((n, 2, 2), dtype=complex)
    N = np.zeros((n, 2, 2), dtype=complex)
    M[:, 0, 0] = dphi
    M[:, 1, 1] = -dphi
    M[:, 0, 1] = al / hb
    M[:, 1, 0] = be / hb
    if limit:
        N[:, 0, 1] = hb * np.conj(be) * np.exp(-2 * phi)
    else:
        N[:, 0, 1] = hb * R2 * np.conj(be) * np.exp(-2 * phi)
        N[:, 1, 0] = hb * R2 * np.conj(al) * np.exp(2 * phi)
    return M, N


def _phi_and_gradient(mesh: Mesh, field: MetricField):
    phi = field.phi
    corners = np.asarray(mesh.surface.polygon_vertices)
    dpsi = gradient(mesh, field.psi)
    if not np.any(field.psi != field.psi[0]):
        dpsi = np.zeros(mesh.n_classes, dtype=complex)  # constant: exact zero
    dphi = dpsi + _background_dz(mesh.positions, corners, field.singular_coefficient, field.cutoff_radius)
    if field.singular_coefficient != 0:
        dphi[mesh.cone_class] = np.nan
    return phi, dphi


def assemble_connection(mesh: Mesh, data: HiggsData, params: Parameters,
                        field: MetricField) -> ConnectionField:
    """Vertex values of ``M`` and ``N``; ``d_z phi`` from a quadratic star fit.

    The cone vertex carries NaN in the diagonal when the metric is singular
    there (the frame degenerates).
    """
    phi, dphi = _phi_and_gradient(mesh, field)
    M, N = _matrices(data, params, phi, dphi)
    return ConnectionField(mesh, data, params, field, M, N)


def _face_gradients(mesh: Mesh, values: np.ndarray) -> np.ndarray:
    """Constant ``d/dz`` of the piecewise-linear interpolant on every face."""
    z = mesh.points[mesh.triangles]
    f = values[mesh.cls[mesh.triangles]]
    e1, e2 = z[:, 1] - z[:, 0], z[:, 2] - z[:, 0]
    d1, d2 = f[:, 1] - f[:, 0], f[:, 2] - f[:, 0]
    # solve [Re e, Im e] . grad = d for both edges
    det = e1.real * e2.imag - e1.imag * e2.real
    gx = (d1 * e2.imag - d2 * e1.imag) / det
    gy = (e1.real * d2 - e2.real * d1) / det
    return 0.5 * (gx - 1j * gy)


def _face_patch_operators(mesh: Mesh):
    """Least-squares quadratic fit on each face's patch (its vertices' stars).

    Returns per-face pseudo-inverse rows that map patch values to ``d/dx``
    and ``d/dy`` at the face centroid, together with the patch classes.
    Faces touching the cone class get ``None``.
    """
    ops = mesh.__dict__.get("_patch_ops")
    if ops is not None:
        return ops
    src, dst, dz = mesh.star_neighbors()
    order = np.argsort(src, kind="stable")
    src, dst, dz = src[order], dst[order], dz[order]
    bounds = np.searchsorted(src, np.arange(mesh.n_classes + 1))
    tol = 1e-7 * mesh.h
    ops = []
    for f, tri in enumerate(mesh.triangles):
        c = mesh.cls[tri]
        if np.any(c == mesh.cone_class):
            ops.append(None)
            continue
        z = mesh.points[tri]
        cen = z.mean()
        cls_list, disp = [], []
        for k in range(3):
            cls_list.append(c[k])
            disp.append(z[k] - cen)
            lo, hi = bounds[c[k]], bounds[c[k] + 1]
            cls_list.extend(dst[lo:hi])
            disp.extend(z[k] - cen + dz[lo:hi])
        disp = np.asarray(disp)
        key = np.round(disp.real / tol) + 1j * np.round(disp.imag / tol)
        _, idx = np.unique(key, return_index=True)
        idx = np.sort(idx)
        cl = np.asarray(cls_list)[idx]
        x, y = disp[idx].real, disp[idx].imag
        A = np.stack([np.ones_like(x), x, y, 0.5 * x * x, x * y, 0.5 * y * y], axis=1)
        P = np.linalg.pinv(A)
        ops.append((cl, P[1], P[2]))
    mesh.__dict__["_patch_ops"] = ops
    return ops


def curvature_residual(conn: ConnectionField, mesh: Mesh | None = None) -> np.ndarray:
    """Per-face Frobenius norm of ``d_zbar M - d_z N + [N, M]`` at the centroid.

    Derivatives come from a quadratic least-squares fit of the vertex values
    over the face's patch (second order on smooth data); the commutator uses
    the average of the three corner values (the centroid value to second
    order).  Faces with a cone-class vertex are NaN.
    """
    mesh = conn.mesh if mesh is None else mesh
    out = np.full(mesh.n_faces, np.nan)
    ops = _face_patch_operators(mesh)
    M, N = conn.M, conn.N
    if conn.constant:
        # constant coefficients: only the commutator survives, on every face
        F = N[0] @ M[0] - M[0] @ N[0]
        out[:] = float(np.sqrt(np.sum(np.abs(F) ** 2)))
        return out
    for f, op in enumerate(ops):
        if op is None:
            continue
        cl, px, py = op
        if True:
            Mv, Nv = M[cl], N[cl]
            Mx = np.tensordot(px, Mv, axes=1)
            My = np.tensordot(py, Mv, axes=1)
            Nx = np.tensordot(px, Nv, axes=1)
            Ny = np.tensordot(py, Nv, axes=1)
            corners = mesh.cls[mesh.triangles[f]]
            Mf = M[corners].mean(axis=0)
            Nf = N[corners].mean(axis=0)
            dbar_M = 0.5 * (Mx + 1j * My)
            d_N = 0.5 * (Nx - 1j * Ny)
            F = dbar_M - d_N + Nf @ Mf - Mf @ Nf
        out[f] = float(np.sqrt(np.sum(np.abs(F) ** 2)))
    return out


# --------------------------------------------------------------------------
# paths


@dataclass
class Path:
    """Polyline of straight chart segments joined by side gluings.

    ``segments[k] = (start, end)`` in the polygon plane; between segment
    ``k`` and ``k + 1`` the path crosses an identified side, recorded in
    ``crossings`` as ``(exit side, entry side, translation)``.
    """

    segments: list[tuple[complex, complex]]
    crossings: list[tuple[int, int, complex]] = dc_field(default_factory=list)

    def clearance(self, surface: TranslationSurface) -> float:
        corners = np.asarray(surface.polygon_vertices)
        best = math.inf
        for a, b in self.segments:
            d = b - a
            t = np.clip(((corners - a) * np.conj(d)).real / max(abs(d) ** 2, 1e-300), 0, 1)
            best = min(best, float(np.min(np.abs(a + t * d - corners))))
        return best

    def reversed(self) -> "Path":
        segs = [(b, a) for a, b in reversed(self.segments)]
        cr = [(j, i, -v) for i, j, v in reversed(self.crossings)]
        return Path(segs, cr)


def generator_paths(surface: TranslationSurface, basepoint: complex = 0j) -> list[Path]:
    """Loops through ``basepoint`` crossing side ``i`` (exit) to its partner, i = 0..3."""
    out = []
    for i, j, v in surface.edge_pairings:
        a, b = surface.edge(i)
        mid = 0.5 * (a + b)
        out.append(Path([(basepoint, mid), (mid + v, basepoint)], [(i, j, v)]))
    return out


def relator_word(surface: TranslationSurface) -> list[tuple[int, int]]:
    """Surface-group relation read off a small loop around the cone point.

    Walking counter-clockwise around the corners, the loop leaves the polygon
    through a sequence of sides; leaving through the first side of pairing
    ``g`` is generator ``g``, leaving through its partner is ``g`` inverse.
    Returns ``[(generator index, +1 or -1), ...]`` in path order.
    """
    n = surface.n_edges
    first = {i: g for g, (i, j, v) in enumerate(surface.edge_pairings)}
    second = {j: g for g, (i, j, v) in enumerate(surface.edge_pairings)}
    word = []
    k = 0
    for _ in range(n):
        side = (k - 1) % n
        if side in first:
            word.append((first[side], 1))
        else:
            word.append((second[side], -1))
        partner, _ = surface.partner(side)
        k = partner  # end of ``side`` is glued to the start of its partner
        if k == 0:
            break
    return word


def evaluate_word(hols: list[np.ndarray], word: list[tuple[int, int]]) -> np.ndarray:
    P = np.eye(2, dtype=complex)
    for g, e in word:
        P = P @ (hols[g] if e > 0 else np.linalg.inv(hols[g]))
    return P


def relation_defect(hols: list[np.ndarray], surface: TranslationSurface) -> float:
    P = evaluate_word(hols, relator_word(surface))
    return float(np.max(np.abs(P - np.eye(2))))


# --------------------------------------------------------------------------
# transport


def _locate(mesh: Mesh, z: np.ndarray) -> np.ndarray:
    """Index of a triangle (in the chart) containing each point."""
    cache = mesh.__dict__.get("_locator")
    if cache is None:
        t = mesh.points[mesh.triangles]
        e1, e2 = t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]
        det = e1.real * e2.imag - e1.imag * e2.real
        cache = (t[:, 0], e1, e2, det)
        mesh.__dict__["_locator"] = cache
    p0, e1, e2, det = cache
    out = np.empty(len(z), dtype=np.int64)
    for k, p in enumerate(z):
        d = p - p0
        u = (d.real * e2.imag - d.imag * e2.real) / det
        v = (e1.real * d.imag - e1.imag * d.real) / det
        m = np.minimum(np.minimum(u, v), 1.0 - u - v)
        out[k] = int(np.argmax(m))
        if m[out[k]] < -1e-9:
            raise PathError(f"point {p} lies outside the polygon")
    return out


def _segment_pieces(mesh: Mesh, a: complex, b: complex):
    """Split a chart segment at mesh edges; returns piece endpoints and faces."""
    t = mesh.points[mesh.triangles]
    p, q = t, np.roll(t, -1, axis=1)
    d = b - a
    e = q - p
    den = d.real * e.imag - d.imag * e.real
    w = p - a
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (w.real * e.imag - w.imag * e.real) / den
        u = (w.real * d.imag - w.imag * d.real) / den
    ok = (np.abs(den) > 1e-14) & (s > 1e-12) & (s < 1 - 1e-12) & (u >= -1e-12) & (u <= 1 + 1e-12)
    ts = np.unique(np.concatenate([[0.0, 1.0], s[ok]]))
    keep = np.concatenate([[True], np.diff(ts) > 1e-11])
    ts = ts[keep]
    ts[-1] = 1.0
    z = a + ts * d
    faces = _locate(mesh, 0.5 * (z[:-1] + z[1:]))
    return z[:-1], z[1:], faces


def _piece_data(conn: ConnectionField, path: Path):
    """Per-piece endpoint values of ``psi`` and of the star-fit ``d_z psi``."""
    mesh = conn.mesh
    fld = conn.field
    corners = np.asarray(mesh.surface.polygon_vertices)
    dpsi = conn.__dict__.get("_dpsi")
    if dpsi is None:
        dpsi = gradient(mesh, fld.psi)
        conn.__dict__["_dpsi"] = dpsi
    z0s, z1s, fs = [], [], []
    for a, b in path.segments:
        z0, z1, f = _segment_pieces(mesh, a, b)
        z0s.append(z0)
        z1s.append(z1)
        fs.append(f)
    z0 = np.concatenate(z0s)
    z1 = np.concatenate(z1s)
    f = np.concatenate(fs)
    tri = mesh.triangles[f]
    c = mesh.cls[tri]
    if np.any(c == mesh.cone_class):
        raise PathError("path enters a triangle at the cone point")
    l0, l1 = _barycentric(mesh, f, z0), _barycentric(mesh, f, z1)
    psi = fld.psi[c]
    dp = dpsi[c]
    mid = 0.5 * (z0 + z1)
    corner = corners[np.argmin(np.abs(mid[:, None] - corners[None, :]), axis=1)]
    return (z0, z1, corner, np.sum(l0 * psi, axis=1), np.sum(l1 * psi, axis=1),
            np.sum(l0 * dp, axis=1), np.sum(l1 * dp, axis=1))


def _barycentric(mesh: Mesh, faces: np.ndarray, z: np.ndarray) -> np.ndarray:
    t = mesh.points[mesh.triangles[faces]]
    e1, e2 = t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]
    d = z - t[:, 0]
    det = e1.real * e2.imag - e1.imag * e2.real
    u = (d.real * e2.imag - d.imag * e2.real) / det
    v = (e1.real * d.imag - e1.imag * d.real) / det
    return np.stack([1.0 - u - v, u, v], axis=1)


def transport(conn: ConnectionField, path: Path, mesh: Mesh | None = None,
              guard: float | None = None, tol: float = 1e-10, method: str | None = None):
    """Holonomy-style transport along ``path``.

    Constant-coefficient families use the exact product of
    ``expm(M dz + N dzbar)`` over segments; otherwise the path is cut at mesh
    edges and integrated with adaptive RK4 on each piece.

    Returns ``(P, info)`` with ``info`` holding the determinant drift before
    renormalisation and the number of integration steps.  Coefficients
    are interpolated linearly from vertex values on each triangle: ``psi``
    and the quadratic star-fit ``d_z psi``; the singular background and its
    derivative are evaluated exactly.
    """
    mesh = conn.mesh if mesh is None else mesh
    if guard is None:
        guard = 3.0 * conn.field.cutoff_radius
    clear = path.clearance(mesh.surface)
    if clear <= guard:
        raise PathError(f"path clearance {clear:.4g} inside the cone guard {guard:.4g}")
    if method is None:
        method = "exact" if conn.constant else "rk4"
    hb, R2 = conn.params.hbar, conn.params.R**2
    al, be = conn.data.alpha_coeff, conn.data.beta_coeff
    if method == "exact":
        if not conn.constant:
            raise ValueError("exact transport needs constant coefficients")
        M, N = conn.M[0], conn.N[0]
        P = np.eye(2, dtype=complex)
        drift = 0.0
        for a, b in path.segments:
            Q = expm(M * (b - a) + N * np.conj(b - a))
            det = np.linalg.det(Q)
            drift = max(drift, abs(det - 1))
            P = P @ (Q / np.sqrt(det))
        return P, {"det_drift": drift, "steps": len(path.segments), "backend": "expm"}
    z0, z1, corner, psi0, psi1, dpsi0, dpsi1 = _piece_data(conn, path)
    P, drift, steps = kernels.transport_pieces(
        z0, z1, corner, psi0, psi1, dpsi0, dpsi1,
        float(conn.field.singular_coefficient), float(conn.field.cutoff_radius),
        complex(al / hb), complex(be / hb),
        complex(hb * R2 * np.conj(be)), complex(hb * R2 * np.conj(al)), tol,
    )
    return P, {"det_drift": float(drift), "steps": int(steps), "backend": kernels.BACKEND}


def holonomy_generators(conn: ConnectionField, surface: TranslationSurface | None = None,
                        mesh: Mesh | None = None, basepoint: complex = 0j, **kw):
    """Holonomies of the four generator loops and the per-loop transport info."""
    mesh = conn.mesh if mesh is None else mesh
    surface = mesh.surface if surface is None else surface
    hols, infos = [], []
    for path in generator_paths(surface, basepoint):
        P, info = transport(conn, path, mesh, **kw)
        hols.append(P)
        infos.append(info)
    return hols, infos


def holonomy_report(hols, infos, surface, path=None) -> dict:
    rep = {
        "generators": [[[[float(x.real), float(x.imag)] for x in row] for row in H] for H in hols],
        "traces": [[float(np.trace(H).real), float(np.trace(H).imag)] for H in hols],
        "relation_defect": relation_defect(hols, surface),
        "relator": [[g, e] for g, e in relator_word(surface)],
        "det_drift": max(i["det_drift"] for i in infos),
    }
    if path is not None:
        pathlib.Path(path).write_text(json.dumps(rep, indent=2, sort_keys=True) + "\n")
    return rep


# --------------------------------------------------------------------------
# conformal limit


@dataclass
class LimitResult:
    limit: ConnectionField
    R: list[float]
    distance: list[float]
    lower_left_dzbar: list[float]
    slope: float
    fields: list[MetricField] = dc_field(default_factory=list, repr=False)

    def write_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["R", "entrywise_distance", "lower_left_dzbar_norm"])
            for r, d, l in zip(self.R, self.distance, self.lower_left_dzbar):
                w.writerow([repr(r), repr(d), repr(l)])


def limit_connection(mesh: Mesh, data: HiggsData, hbar: complex, phi0: MetricField) -> ConnectionField:
    """The ``R -> 0`` connection assembled directly from ``h_0``.

    ``M0 = [[d log h0, alpha/hbar], [beta/hbar, -d log h0]]`` and
    ``N0 = [[0, hbar conj(beta) h0^{-2}], [0, 0]]`` for the positive-degree
    family; ``N0 = 0`` in degree zero.
    """
    params = Parameters(hbar, 0.0)
    phi, dphi = _phi_and_gradient(mesh, phi0)
    M, N = _matrices(data, params, phi, dphi, limit=data.family == HITCHIN)
    return ConnectionField(mesh, data, params, phi0, M, N)


def reference_metric(mesh: Mesh, data: HiggsData, tolerance: float = 1e-10,
                     cutoff_radius: float | None = None) -> MetricField:
    """``h_0``: the (0, beta) solution at R = 1 (positive degree), else the flat metric."""
    if data.family == HITCHIN:
        f, rep = solve_vortex(mesh, HiggsData.hitchin(0.0), 1.0, tolerance, cutoff_radius=cutoff_radius)
        if not rep.converged:
            raise RuntimeError("reference solve failed: " + rep.message)
        return f
    return new_field(mesh, data, cutoff_radius, np.full(mesh.n_classes, -0.5 * math.log(abs(data.k))))


def conformal_limit(mesh: Mesh, data: HiggsData, hbar: complex, R_list, tolerance: float = 1e-10,
                    cutoff_radius: float | None = None) -> LimitResult:
    """Limit connection and its distance to the family along ``R_list``.

    For each R the field is obtained from the unscaled problem for
    ``(R^2 alpha, beta)`` and shifted by ``log R``; the distances are
    entrywise sup-norms over vertex classes (apex excluded) and the
    lower-left ``dzbar`` column tracks ``|hbar R^2 alpha e^{2 phi_R}|``.
    """
    R_list = [float(r) for r in R_list]
    if any(r <= 0 for r in R_list) or any(b >= a for a, b in zip(R_list, R_list[1:])):
        raise ValueError("R_list must be strictly decreasing positive values")
    phi0 = reference_metric(mesh, data, tolerance, cutoff_radius)
    lim = limit_connection(mesh, data, hbar, phi0)
    dist, low, fields = [], [], []
    keep = np.ones(mesh.n_classes, dtype=bool)
    keep[mesh.cone_class] = False
    warm = None
    for R in R_list:
        if data.family == HITCHIN:
            scaled = HiggsData.hitchin(data.c * R * R)
            ft, rep = solve_vortex(mesh, scaled, 1.0, tolerance, initial=warm, cutoff_radius=phi0.cutoff_radius)
            if not rep.converged:
                raise RuntimeError(f"solve failed at R={R}: {rep.message}")
            warm = ft
            fR = MetricField(mesh, ft.psi + math.log(R), ft.singular_coefficient, ft.cutoff_radius)
        else:
            fR, rep = solve_vortex(mesh, data, R, tolerance, cutoff_radius=phi0.cutoff_radius)
        fields.append(fR)
        conn = assemble_connection(mesh, data, Parameters(hbar, R), fR)
        d = max(np.max(np.abs(conn.M[keep] - lim.M[keep])), np.max(np.abs(conn.N[keep] - lim.N[keep])))
        dist.append(float(d))
        low.append(float(np.max(np.abs(conn.N[:, 1, 0]))))
    slope = float("nan")
    lowa = np.asarray(low)
    if len(R_list) >= 2 and np.all(lowa > 0):
        slope = float(np.polyfit(np.log(R_list), np.log(lowa), 1)[0])
    return LimitResult(lim, R_list, dist, low, slope, fields)
