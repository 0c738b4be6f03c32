"""Newton solver for the R-scaled vortex equation.

Unknown: ``phi = log h`` in the omega-adapted frame, split as

    phi = a * chi(r) * log(r) + psi,

where ``r`` is the flat distance to the cone point, ``chi`` a smooth cutoff
and ``psi`` a bounded correction carried per vertex class.  The equation
solved is

    (1/4) Delta phi = R^2 (|alpha|^2 e^{2 phi} - |beta|^2 e^{-2 phi})

away from the cone.  ``log r`` is flat-harmonic off the apex, so the
background contributes the smooth source ``B = Delta(a chi log r)``,
supported in the cutoff annulus, plus a point charge at the apex that is
exactly the zero of the frame; that charge is *not* cancelled, which is what
makes ``h`` vanish like ``r**a``.

Discretisation: P1 finite elements with the cotangent stiffness matrix.  The
zeroth-order terms use product quadrature: each vertex carries the weights
``m_i^{+-} = int lambda_i exp(+-2 a chi log r) dA``, integrated with
Gauss-Jacobi rules on triangles touching the apex, so the ``r**(-4a)``
source is integrated exactly rather than sampled.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import roots_jacobi, roots_legendre

from .higgs import HITCHIN, HiggsData
from .surface import Mesh, stiffness_apply

__all__ = [
    "MetricField",
    "SolveReport",
    "SolverDivergence",
    "cutoff",
    "background_source",
    "vertex_masses",
    "vortex_residual",
    "solve_vortex",
    "rescale_check",
    "curvature",
    "default_cutoff_radius",
]

PHI_LIMIT = 50.0


class SolverDivergence(RuntimeError):
    """Raised when the iterate leaves the representable range."""


def default_cutoff_radius(mesh: Mesh) -> float:
    """A cutoff whose 3x guard disk still clears the generator loops."""
    verts = np.asarray(mesh.surface.polygon_vertices)
    side = float(np.min(np.abs(np.roll(verts, -1) - verts)))
    return 0.16 * side


# --------------------------------------------------------------------------
# background


def cutoff(r: np.ndarray, rc: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Quintic smoothstep cutoff and its first two radial derivatives.

    ``chi = 1`` for ``r <= rc/2`` and ``chi = 0`` for ``r >= rc``.
    """
    r = np.asarray(r, dtype=float)
    w = 0.5 * rc
    s = np.clip((r - w) / w, 0.0, 1.0)
    chi = 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s * s)
    inside = (s > 0) & (s < 1)
    d1 = np.where(inside, -30.0 * s * s * (1.0 - s) ** 2 / w, 0.0)
    d2 = np.where(inside, -60.0 * s * (1.0 - s) * (1.0 - 2.0 * s) / w**2, 0.0)
    return chi, d1, d2


def background(r: np.ndarray, a: float, rc: float) -> np.ndarray:
    """``a * chi(r) * log r`` (``-inf`` at ``r = 0`` when ``a > 0``)."""
    r = np.asarray(r, dtype=float)
    chi, _, _ = cutoff(r, rc)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a * chi * np.log(r)
    return np.where(chi == 0, 0.0, out)


def background_source(r: np.ndarray, a: float, rc: float) -> np.ndarray:
    """Flat Laplacian of the background away from the apex, in closed form.

    With ``f = a chi log r``: ``f'' + f'/r = a (chi'' log r + chi' log r / r + 2 chi'/r)``;
    only the annulus ``rc/2 < r < rc`` contributes.
    """
    r = np.asarray(r, dtype=float)
    chi, d1, d2 = cutoff(r, rc)
    safe = np.where(r > 0, r, 1.0)
    val = a * (d2 * np.log(safe) + d1 * np.log(safe) / safe + 2.0 * d1 / safe)
    return np.where((d1 != 0) | (d2 != 0), val, 0.0)


# --------------------------------------------------------------------------
# product quadrature


_GL_T = roots_legendre(16)
_GL_S = roots_legendre(12)


def _duffy_rule(gamma: float, n_s: int = 12, n_t: int = 16):
    """Nodes on the unit triangle (collapsed at vertex 0) for ``int s**(gamma+1) g``.

    Returns barycentric (l0, l1, l2), the radial parameter ``s`` and weights
    that already include ``s**(gamma+1)`` and the factor 2 of the unit
    triangle's area normalisation (weights sum to ``2 * int_0^1 s^(g+1) ds``).
    """
    xs, ws = roots_jacobi(n_s, 0.0, gamma + 1.0)
    s = 0.5 * (xs + 1.0)
    ws = ws * 0.5 ** (gamma + 2.0)
    xt, wt = roots_legendre(n_t)
    t = 0.5 * (xt + 1.0)
    wt = 0.5 * wt
    S, T = np.meshgrid(s, t, indexing="ij")
    W = np.outer(ws, wt)
    l0 = 1.0 - S
    l1 = S * (1.0 - T)
    l2 = S * T
    return np.stack([l0.ravel(), l1.ravel(), l2.ravel()], axis=1), S.ravel(), T.ravel(), 2.0 * W.ravel()


def _subdivide(bary: np.ndarray, level: int) -> list[np.ndarray]:
    """Split a triangle (3 barycentric corner rows) into ``4**level`` children."""
    tris = [bary]
    for _ in range(level):
        nxt = []
        for t in tris:
            m01, m12, m20 = 0.5 * (t[0] + t[1]), 0.5 * (t[1] + t[2]), 0.5 * (t[2] + t[0])
            nxt += [np.array([t[0], m01, m20]), np.array([m01, t[1], m12]),
                    np.array([m20, m12, t[2]]), np.array([m01, m12, m20])]
        tris = nxt
    return tris


def vertex_masses(mesh: Mesh, a: float, rc: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-class weights ``int lambda_i g dA`` for ``g = e^{2b}, e^{-2b}, Delta b``.

    ``b`` is the background ``a chi log r``.  Cached on the mesh.
    """
    key = (round(a, 15), round(rc, 15))
    cache = mesh.__dict__.setdefault("_mass_cache", {})
    if key in cache:
        return cache[key]
    n = mesh.n_classes
    A = mesh.vertex_areas
    if a == 0.0:
        out = (A.copy(), A.copy(), np.zeros(n))
        cache[key] = out
        return out

    corners = np.asarray(mesh.surface.polygon_vertices)
    pts = mesh.points
    tri = mesh.triangles
    cls = mesh.cls
    m_plus = np.zeros(n)
    m_minus = np.zeros(n)
    m_src = np.zeros(n)

    is_cone = cls[tri] == mesh.cone_class
    zt = pts[tri]
    rmin = np.abs(zt[:, :, None] - corners[None, None, :]).min(axis=(1, 2))
    edge = np.abs(zt - np.roll(zt, 1, axis=1)).max(axis=1)

    def integrand(x: np.ndarray):
        r = np.abs(x[:, None] - corners[None, :]).min(axis=1)
        b = background(r, a, rc)
        return np.exp(2 * b), np.exp(-2 * b), background_source(r, a, rc)

    # smooth/near-singular triangles: Duffy-Legendre rule with subdivision
    rule0 = _duffy_rule(0.0, 6, 6)
    for f in np.nonzero(~is_cone.any(axis=1))[0]:
        z = zt[f]
        near = rmin[f] < 4.0 * edge[f]
        in_annulus = (rmin[f] < rc) and (rmin[f] + edge[f] > 0.5 * rc)
        if not (near or in_annulus):
            continue
        level = 2 if near else 1
        area = mesh.face_areas[f]
        acc = np.zeros((3, 3))
        for child in _subdivide(np.eye(3), level):
            bary_nodes = rule0[0] @ child  # (q, 3) in parent barycentrics
            x = bary_nodes @ z
            gp, gm, gs = integrand(x)
            w = rule0[3] * (area / 4**level)
            for k, g in enumerate((gp, gm, gs)):
                acc[k] += (w * g) @ bary_nodes
        c = cls[tri[f]]
        np.add.at(m_plus, c, acc[0])
        np.add.at(m_minus, c, acc[1])
        np.add.at(m_src, c, acc[2])
    handled = (~is_cone.any(axis=1)) & ((rmin < 4.0 * edge) | ((rmin < rc) & (rmin + edge > 0.5 * rc)))

    # far triangles: the integrands are smooth; lumped vertex values suffice
    far = ~handled & ~is_cone.any(axis=1)
    r_cls = mesh.cone_distance
    b_cls = background(r_cls, a, rc)
    gp_v, gm_v, gs_v = np.exp(2 * b_cls), np.exp(-2 * b_cls), background_source(r_cls, a, rc)
    third = mesh.face_vertex_areas[far].ravel()
    cf = cls[tri[far]].ravel()
    m_plus += np.bincount(cf, third * gp_v[cf], minlength=n)
    m_minus += np.bincount(cf, third * gm_v[cf], minlength=n)
    m_src += np.bincount(cf, third * gs_v[cf], minlength=n)

    # apex triangles: Gauss-Jacobi in the radial variable absorbs r**gamma
    for f in np.nonzero(is_cone.any(axis=1))[0]:
        k0 = int(np.nonzero(is_cone[f])[0][0])
        order = [(k0 + j) % 3 for j in range(3)]
        z = zt[f][order]
        c = cls[tri[f]][order]
        area = mesh.face_areas[f]
        for sign, target in ((1.0, m_plus), (-1.0, m_minus)):
            gamma = 2.0 * sign * a
            bary, S, T, W = _duffy_rule(gamma)
            x = bary @ z
            rho = np.abs((1.0 - T) * z[1] + T * z[2] - z[0])
            r = S * rho
            chi, _, _ = cutoff(r, rc)
            # e^{2 sign a chi log r} = r^gamma * r^{gamma (chi - 1)}
            with np.errstate(divide="ignore"):
                g = rho**gamma * np.exp(gamma * (chi - 1.0) * np.log(np.where(r > 0, r, 1.0)))
            target[c] += area * (W * g) @ bary
        bary, S, T, W = _duffy_rule(0.0)
        x = bary @ z
        r = np.abs(x - z[0])
        m_src[c] += area * (W * background_source(r, a, rc)) @ bary
    out = (m_plus, m_minus, m_src)
    cache[key] = out
    return out


# --------------------------------------------------------------------------
# fields


@dataclass(eq=False)
class MetricField:
    """``phi = a chi(r) log r + psi`` on the vertex classes of ``mesh``."""

    mesh: Mesh
    psi: np.ndarray
    singular_coefficient: float
    cutoff_radius: float

    @property
    def r_eff(self) -> np.ndarray:
        """Cone distance with the apex replaced by half its shortest edge."""
        mesh = self.mesh
        r = mesh.cone_distance.copy()
        W = mesh.weights
        row = W.getrow(mesh.cone_class).indices
        src = mesh.positions[row]
        corners = np.asarray(mesh.surface.polygon_vertices)
        d = np.abs(src[:, None] - corners[None, :]).min(axis=1)
        r[mesh.cone_class] = 0.5 * d.min() if len(d) else 0.0
        return r

    @property
    def background(self) -> np.ndarray:
        return background(self.r_eff, self.singular_coefficient, self.cutoff_radius)

    @property
    def phi(self) -> np.ndarray:
        return self.background + self.psi

    def phi_at(self, z: np.ndarray, psi_values: np.ndarray) -> np.ndarray:
        """``phi`` at flat points given interpolated ``psi`` there."""
        corners = np.asarray(self.mesh.surface.polygon_vertices)
        r = np.abs(np.asarray(z)[..., None] - corners).min(axis=-1)
        return background(r, self.singular_coefficient, self.cutoff_radius) + psi_values


@dataclass
class SolveReport:
    iterations: int
    final_residual_norm: float
    damping_history: list[float] = dc_field(default_factory=list)
    converged: bool = False
    residual_history: list[float] = dc_field(default_factory=list)
    message: str = ""
    merit_history: list[float] = dc_field(default_factory=list)  # line-search norm per iterate

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(
            {
                "iterations": self.iterations,
                "residual": self.final_residual_norm,
                "damping_history": self.damping_history,
                "converged": self.converged,
            },
            indent=2,
            sort_keys=True,
        )
        if path is not None:
            Path(path).write_text(text + "\n")
        return text


def new_field(mesh: Mesh, data: HiggsData, cutoff_radius: float | None = None,
              psi: np.ndarray | None = None) -> MetricField:
    rc = default_cutoff_radius(mesh) if cutoff_radius is None else float(cutoff_radius)
    if psi is None:
        psi = np.zeros(mesh.n_classes)
    return MetricField(mesh, np.asarray(psi, dtype=float).copy(), data.singular_coefficient, rc)


def _weak_parts(mesh: Mesh, data: HiggsData, R: float, field: MetricField):
    mp, mm, ms = vertex_masses(mesh, field.singular_coefficient, field.cutoff_radius)
    a2 = abs(data.alpha_coeff) ** 2
    b2 = abs(data.beta_coeff) ** 2
    return mp, mm, ms, R * R * a2, R * R * b2


def _weak_residual(mesh, data, R, field, psi=None):
    psi = field.psi if psi is None else psi
    if np.any(~np.isfinite(psi)) or np.max(np.abs(field.background + psi)) > PHI_LIMIT:
        raise SolverDivergence("|phi| exceeded the overflow guard")
    mp, mm, ms, ca, cb = _weak_parts(mesh, data, R, field)
    ep, em = np.exp(2 * psi), np.exp(-2 * psi)
    return 0.25 * (stiffness_apply(mesh, psi) + ms) - (ca * mp * ep - cb * mm * em)


def vortex_residual(mesh: Mesh, data: HiggsData, R: float, field: MetricField) -> np.ndarray:
    """Pointwise residual ``(1/4) Delta phi - R^2(|a|^2 e^{2phi} - |b|^2 e^{-2phi})``.

    The weak (tested) residual divided by the lumped vertex area, so it has
    the units of the continuum expression.
    """
    return _weak_residual(mesh, data, R, field) / mesh.vertex_areas


def solve_vortex(
    mesh: Mesh,
    data: HiggsData,
    R: float,
    tolerance: float = 1e-10,
    max_iter: int = 50,
    initial: MetricField | None = None,
    cutoff_radius: float | None = None,
) -> tuple[MetricField, SolveReport]:
    """Damped Newton iteration on ``psi``.

    Each step solves ``(S/4 - diag(R^2(2|a|^2 m+ e^{2psi} + 2|b|^2 m- e^{-2psi}))) d = -res``
    with ``S`` the cotangent stiffness matrix (symmetric negative definite
    system), followed by Armijo backtracking on the area-weighted residual
    norm.
    """
    R = float(R)
    if R < 0:
        raise ValueError("R must be nonnegative")
    if R == 0 and data.family == HITCHIN:
        raise ValueError("R = 0 admits no solution for a positive-degree line bundle")
    if initial is not None:
        field = MetricField(mesh, initial.psi.copy(), initial.singular_coefficient, initial.cutoff_radius)
        if cutoff_radius is not None and cutoff_radius != field.cutoff_radius:
            raise ValueError("initial field uses a different cutoff radius")
    else:
        field = new_field(mesh, data, cutoff_radius)
    A = mesh.vertex_areas

    if R == 0:
        # flat case: every constant solves; select the R -> 0 limit of the
        # family, -1/2 log|k|, which is also the constant solution for R > 0.
        field.psi[:] = -0.5 * math.log(abs(data.k))
        res = vortex_residual(mesh, data, R, field)
        nrm = float(np.max(np.abs(res)))
        return field, SolveReport(0, nrm, [], nrm <= tolerance, [nrm])

    S = mesh.laplacian_matrix()
    report = SolveReport(0, math.inf)

    def norms(psi):
        w = _weak_residual(mesh, data, R, field, psi)
        return w, float(np.sqrt(np.sum(w * w / A))), float(np.max(np.abs(w / A)))

    try:
        w, l2, sup = norms(field.psi)
    except SolverDivergence as exc:
        report.message = str(exc)
        return field, report
    report.residual_history.append(sup)
    report.merit_history.append(l2)
    mp, mm, _, ca, cb = _weak_parts(mesh, data, R, field)
    for it in range(1, max_iter + 1):
        if sup <= tolerance:
            break
        psi = field.psi
        D = 2 * ca * mp * np.exp(2 * psi) + 2 * cb * mm * np.exp(-2 * psi)
        J = (0.25 * S - sp.diags(D)).tocsc()
        delta = spla.splu(J).solve(-w)
        lam = 1.0
        while True:
            try:
                w_new, l2_new, sup_new = norms(psi + lam * delta)
                ok = l2_new <= (1.0 - 1e-4 * lam) * l2
            except SolverDivergence:
                ok = False
            if ok or lam < 1e-8:
                break
            lam *= 0.5
        if not ok:
            report.message = "line search failed"
            report.iterations = it
            break
        field.psi = psi + lam * delta
        w, l2, sup = w_new, l2_new, sup_new
        report.damping_history.append(lam)
        report.residual_history.append(sup)
        report.merit_history.append(l2)
        report.iterations = it
    report.final_residual_norm = sup
    report.converged = sup <= tolerance
    if not report.converged and not report.message:
        report.message = "maximum iterations reached"
    return field, report


def rescale_check(mesh: Mesh, data: HiggsData, R: float, tolerance: float = 1e-10,
                  cutoff_radius: float | None = None) -> float:
    """Defect ``max |phi_R - (phi~ + log R)|`` between two independent solves.

    ``phi_R`` solves the R-scaled problem for ``(alpha, beta)``; ``phi~`` the
    unscaled problem for ``(R^2 alpha, beta)``.
    """
    if not R > 0:
        raise ValueError("R must be positive")
    if data.family != HITCHIN:
        raise ValueError("rescale_check applies to the positive-degree family")
    f1, r1 = solve_vortex(mesh, data, R, tolerance, cutoff_radius=cutoff_radius)
    scaled = HiggsData.hitchin(data.c * R * R)
    f2, r2 = solve_vortex(mesh, scaled, 1.0, tolerance, cutoff_radius=cutoff_radius)
    if not (r1.converged and r2.converged):
        raise RuntimeError("solver did not converge")
    return float(np.max(np.abs(f1.psi - (f2.psi + math.log(R)))))


def curvature(mesh: Mesh, field: MetricField) -> tuple[np.ndarray, float, float]:
    """Curvature of ``g = e^{-2 phi} |dz|^2`` (the metric ``h^{-2}`` on TX).

    Returns the pointwise curvature ``K = e^{2 phi} Delta phi`` using the
    cotangent Laplacian, the total curvature ``int K dA_g`` and the area of
    ``g``.
    """
    mp, mm, ms = vertex_masses(mesh, field.singular_coefficient, field.cutoff_radius)
    S = mesh.laplacian_matrix()
    lap = (S @ field.psi + ms) / mesh.vertex_areas
    K = np.exp(2 * field.phi) * lap
    total = float(np.sum(S @ field.psi + ms))
    area = float(np.sum(mm * np.exp(-2 * field.psi)))
    return K, total, area


def write_field_csv(field: MetricField, residual: np.ndarray, path: str | Path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["vertex_id", "phi", "psi", "residual"])
        for i, (p, s, r) in enumerate(zip(field.phi, field.psi, residual)):
            w.writerow([i, repr(float(p)), repr(float(s)), repr(float(r))])
