"""Beltrami differentials, the sinh-Gordon identity and extension classes.

For the family with parameters ``(hbar, R)`` the complex structure of the
flat bundle is encoded by

    mu = hbar^2 R^2 (conj(alpha) / beta) e^{2 phi},

a (-1, 1)-form that is a Beltrami differential (``|mu| < 1``) on the valid
parameter domain.  Everything is stored as a coefficient in the single
flat chart ``z``; ``|mu|`` is independent of that choice.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .higgs import HITCHIN, ZERO_DEGREE, HiggsData, InadmissibleError, Parameters, admissible
from .surface import Mesh, star_laplacian
from .vortex import MetricField

__all__ = [
    "BeltramiField",
    "ExtensionClassField",
    "beltrami",
    "sinh_gordon_residual",
    "extension_class",
    "extension_class_projection",
    "oper_transversality",
    "teichmuller_form_check",
    "teichmuller_distance",
    "sinh_gordon_u",
    "beltrami_summary",
]


@dataclass(eq=False)
class BeltramiField:
    mu: np.ndarray
    sup_norm: float
    family: str
    argmax: int

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["vertex_id", "re_mu", "im_mu", "abs_mu"])
            for i, m in enumerate(self.mu):
                w.writerow([i, repr(float(m.real)), repr(float(m.imag)), repr(float(abs(m)))])


@dataclass(eq=False)
class ExtensionClassField:
    omega_coeff: np.ndarray


def _check(params: Parameters, data: HiggsData) -> None:
    if not admissible(params, data):
        raise InadmissibleError(f"inadmissible parameters: |hbar^2 R^2| = {params.t:.6g}")
    if data.beta_coeff == 0:
        raise ValueError("beta must not vanish")


def beltrami(mesh: Mesh, data: HiggsData, params: Parameters, field: MetricField) -> BeltramiField:
    """``mu = hbar^2 R^2 (conj(alpha)/beta) e^{2 phi}`` per vertex class."""
    _check(params, data)
    hb, R = params.hbar, params.R
    coef = hb * hb * R * R * np.conj(data.alpha_coeff) / data.beta_coeff
    mu = coef * np.exp(2.0 * field.phi) * np.ones(mesh.n_classes)
    a = np.abs(mu)
    k = int(np.argmax(a))
    return BeltramiField(mu, float(a[k]), data.family, k)


def sinh_gordon_residual(mesh: Mesh, data: HiggsData, R: float, field: MetricField,
                         reference_metric: MetricField, guard: float | None = None) -> np.ndarray:
    """Residual of ``Delta_{g0} u = 32 R^2 (|alpha beta| / g0) sinh(u / 2)``.

    ``u = log |(alpha/beta) h^2|^2`` and ``g0 = e^{-2 phi_0}`` is the
    curvature -4 reference metric.  The flat Laplacian is taken from a
    quadratic least-squares fit on each vertex star, independent of the
    cotangent operator used by the solver.  Vertices inside the cone guard
    disk (default ``3 * cutoff_radius``) are NaN.
    """
    if data.family != HITCHIN or data.c == 0:
        raise ValueError("sinh-Gordon residual needs the positive-degree family with c != 0")
    if guard is None:
        guard = 3.0 * field.cutoff_radius
    ab = abs(data.alpha_coeff * data.beta_coeff)
    u = 2.0 * math.log(abs(data.alpha_coeff / data.beta_coeff)) + 4.0 * field.phi
    g0 = np.exp(-2.0 * reference_metric.phi)
    lap = star_laplacian(mesh, u)
    res = (lap - 32.0 * R * R * ab * np.sinh(0.5 * u)) / g0
    res = np.where(mesh.cone_distance > guard, res, np.nan)
    return res


def sinh_gordon_u(data: HiggsData, field: MetricField) -> np.ndarray:
    return 2.0 * math.log(abs(data.alpha_coeff / data.beta_coeff)) + 4.0 * field.phi


def extension_class(mesh: Mesh, data: HiggsData, params: Parameters, field: MetricField,
                    mu: BeltramiField) -> ExtensionClassField:
    """Closed form of the extension-class representative in the ``dvbar/conj(nu)`` coframe.

    ``omega = (1 - (|alpha/beta| e^{2 phi})^2) / (1 - |mu|^2) * hbar R^2 conj(beta) e^{-2 phi}``;
    the first factor equals ``1 - |mu|^2 / |hbar^2 R^2|^2`` but stays defined at R = 0.
    """
    if mu.sup_norm >= 1.0:
        raise ValueError("|mu| reaches 1; the coframe degenerates")
    phi = field.phi
    hb, R = params.hbar, params.R
    ratio = abs(data.alpha_coeff / data.beta_coeff) * np.exp(2.0 * phi)
    pref = (1.0 - ratio**2) / (1.0 - np.abs(mu.mu) ** 2)
    return ExtensionClassField(pref * hb * R * R * np.conj(data.beta_coeff) * np.exp(-2.0 * phi))


def _project_dvbar(a: np.ndarray, b: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """``dvbar/conj(nu)`` coefficient of ``a dz + b dzbar`` given ``dv = nu (dz + mu dzbar)``."""
    return (b - a * mu) / (1.0 - np.abs(mu) ** 2)


def extension_class_projection(mesh: Mesh, data: HiggsData, params: Parameters,
                               field: MetricField, mu: BeltramiField) -> np.ndarray:
    """Independent evaluation: project the upper-right connection entry onto the coframe."""
    hb, R = params.hbar, params.R
    a = np.full(mesh.n_classes, data.alpha_coeff / hb)
    b = hb * R * R * np.conj(data.beta_coeff) * np.exp(-2.0 * field.phi)
    return _project_dvbar(a, b, mu.mu)


def oper_transversality(mesh: Mesh, data: HiggsData, params: Parameters, field: MetricField,
                        mu: BeltramiField) -> np.ndarray:
    """Modulus of the ``dvbar`` part of the lower-left entry ``beta/hbar dz + hbar R^2 conj(alpha) e^{2phi} dzbar``."""
    hb, R = params.hbar, params.R
    a = np.full(mesh.n_classes, data.beta_coeff / hb)
    b = hb * R * R * np.conj(data.alpha_coeff) * np.exp(2.0 * field.phi)
    return np.abs(_project_dvbar(a, b, mu.mu))


def teichmuller_distance(t: float) -> float:
    return 0.5 * math.log((1.0 + t) / (1.0 - t))


def teichmuller_form_check(mu: BeltramiField, data: HiggsData, params: Parameters) -> dict:
    """Defect of ``mu = t conj(Q)/|Q|`` with ``Q = conj(hbar)^2 k beta^2``.

    Returns the sup defect ``|mu |Q| - t conj(Q)|``, ``t = |hbar^2 R^2|`` and
    the Teichmuller distance ``0.5 log((1+t)/(1-t))`` along the ray.
    """
    if data.family != ZERO_DEGREE:
        raise ValueError("the geodesic form applies to the degree-zero family")
    Q = np.conj(params.hbar) ** 2 * data.k * data.beta_coeff**2
    t = params.t
    defect = float(np.max(np.abs(mu.mu * abs(Q) - t * np.conj(Q))))
    return {"defect": defect, "t": t, "distance": teichmuller_distance(t),
            "phase": float(np.angle(Q))}


def beltrami_summary(mu: BeltramiField, data: HiggsData, params: Parameters,
                     path: str | Path | None = None) -> dict:
    hb, R = params.hbar, params.R
    if data.family == ZERO_DEGREE:
        inv = hb * hb * R * R
        name = "hbar^2 R^2"
    else:
        inv = hb * hb * R**4
        name = "hbar^2 R^4"
    out = {
        "sup_norm": mu.sup_norm,
        "argmax_vertex": mu.argmax,
        "invariant_name": name,
        "invariant": [float(inv.real), float(inv.imag)],
        "family": mu.family,
    }
    if data.family == ZERO_DEGREE:
        tc = teichmuller_form_check(mu, data, params)
        out.update({"teichmuller_t": tc["t"], "teichmuller_distance": tc["distance"],
                    "teichmuller_defect": tc["defect"]})
    if path is not None:
        Path(path).write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    return out
