"""Real structure preserved at ``|hbar|^2 R^2 = 1`` and reality of holonomy.

The antilinear involution is ``tau(v) = C conj(v)`` with
``C = [[0, e^{-phi}], [e^{phi}, 0]]``; the connection ``d + B`` preserves it
iff ``dC + B C - C conj(B) = 0``.  Splitting ``B = M dz + N dzbar``:

* dz part:    ``d_z C + M C - C conj(N)``
* dzbar part: ``d_zbar C + N C - C conj(M)``

The terms coming from the Higgs field carry the scalar factor
``(1/hbar - conj(hbar) R^2)``; the remaining (Chern) terms cancel between
``dC`` and the ``d phi`` diagonal of ``M``.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .connection import ConnectionField
from .surface import Mesh, gradient
from .vortex import MetricField

__all__ = [
    "RealStructure",
    "real_structure",
    "reality_residual",
    "reality_components",
    "holonomy_reality_check",
    "fixed_set_angle",
    "common_real_conjugator",
    "reduced_words",
]


@dataclass(eq=False)
class RealStructure:
    C: np.ndarray  # (n, 2, 2)
    field: MetricField

    def involution_defect(self) -> float:
        """``max |C conj(C) - I|`` over vertices."""
        P = self.C @ np.conj(self.C)
        return float(np.max(np.abs(P - np.eye(2))))


def real_structure(field: MetricField) -> RealStructure:
    phi = field.phi
    C = np.zeros((len(phi), 2, 2), dtype=complex)
    C[:, 0, 1] = np.exp(-phi)
    C[:, 1, 0] = np.exp(phi)
    return RealStructure(C, field)


def reality_components(conn: ConnectionField, structure: RealStructure,
                       mesh: Mesh | None = None) -> dict[str, np.ndarray]:
    """Per-vertex residual matrices split into Higgs and Chern parts.

    ``dC`` is the quadratic star-fit gradient of the entries of ``C`` (not
    the chain rule through ``d phi``), so the Chern part measures
    discretisation error.  The cone class is NaN.
    """
    mesh = conn.mesh if mesh is None else mesh
    C = structure.C
    M, N = conn.M, conn.N
    Nc = np.conj(N)
    dC = np.zeros_like(C)
    dbC = np.zeros_like(C)
    for i, j in ((0, 1), (1, 0)):
        g = gradient(mesh, C[:, i, j].real)
        dC[:, i, j] = g
        dbC[:, i, j] = np.conj(g)  # entries are real
    # Higgs terms: the off-diagonal parts of M, N
    Mh = M.copy()
    Mh[:, 0, 0] = Mh[:, 1, 1] = 0
    Md = M - Mh
    Mhc, Mdc = np.conj(Mh), np.conj(Md)
    higgs_dz = Mh @ C - C @ Nc
    higgs_dzb = N @ C - C @ Mhc
    chern_dz = dC + Md @ C
    chern_dzb = dbC - C @ Mdc
    nrm = lambda X: np.sqrt(np.sum(np.abs(X) ** 2, axis=(1, 2)))  # noqa: E731
    out = {
        "higgs": np.sqrt(nrm(higgs_dz) ** 2 + nrm(higgs_dzb) ** 2),
        "chern": np.sqrt(nrm(chern_dz) ** 2 + nrm(chern_dzb) ** 2),
    }
    out["total"] = np.sqrt(nrm(higgs_dz + chern_dz) ** 2 + nrm(higgs_dzb + chern_dzb) ** 2)
    for v in out.values():
        v[mesh.cone_class] = np.nan
    return out


def reality_residual(conn: ConnectionField, structure: RealStructure,
                     mesh: Mesh | None = None) -> np.ndarray:
    """Pointwise norm of ``dC + BC - C conj(B)`` (both form components)."""
    return reality_components(conn, structure, mesh)["total"]


def fixed_set_angle(field: MetricField) -> np.ndarray:
    """Angle between the fixed line ``span(1, e^{phi})`` of ``tau`` and ``span(1, 0)``."""
    return np.arctan(np.exp(field.phi))


def reduced_words(n_gen: int, max_len: int):
    """All reduced words of length 1..max_len in generators and inverses."""
    letters = [(g, e) for g in range(n_gen) for e in (1, -1)]
    words = []
    for L in range(1, max_len + 1):
        for w in itertools.product(letters, repeat=L):
            if any(a[0] == b[0] and a[1] == -b[1] for a, b in zip(w, w[1:])):
                continue
            words.append(list(w))
    return words


def common_real_conjugator(hols: list[np.ndarray]) -> tuple[np.ndarray, float]:
    """Least-squares ``Q`` with every ``Q^{-1} A Q`` real; returns ``Q`` and the imaginary mass.

    ``P = conj(Q) Q^{-1}`` satisfies the linear system ``conj(A) P = P A``;
    ``P`` is the right singular vector of the stacked system, scaled so
    ``P conj(P) = I``, and ``Q = Y + conj(P) conj(Y)`` solves ``conj(Q) = P Q``.
    """
    rows = []
    I2 = np.eye(2)
    for A in hols:
        # vec(conj(A) P - P A) = (I kron conj(A) - A^T kron I) vec(P)  (column-major vec)
        rows.append(np.kron(I2, np.conj(A)) - np.kron(A.T, I2))
    K = np.vstack(rows)
    _, _, vh = np.linalg.svd(K)
    P = vh[-1].conj().reshape(2, 2, order="F")
    PP = P @ np.conj(P)
    lam = np.trace(PP).real / 2.0
    if lam <= 0:
        return np.eye(2, dtype=complex), float("inf")
    P = P / np.sqrt(lam)
    best = None
    for Y in (np.eye(2), 1j * np.eye(2), np.array([[1, 1j], [0, 1]])):
        Q = Y + np.conj(P) @ np.conj(Y)
        c = np.linalg.cond(Q)
        if best is None or c < best[1]:
            best = (Q, c)
    Q = best[0]
    Qi = np.linalg.inv(Q)
    mass = max(float(np.max(np.abs((Qi @ A @ Q).imag)) / max(1.0, np.max(np.abs(A)))) for A in hols)
    return Q, mass


def holonomy_reality_check(hols: list[np.ndarray], max_word_length: int = 3,
                           path: str | Path | None = None) -> dict:
    """Imaginary parts of traces over generators and short words, and a common real conjugation."""
    inv = [np.linalg.inv(H) for H in hols]
    gen_im = [abs(float(np.trace(H).imag)) for H in hols]
    per_word = []
    for w in reduced_words(len(hols), max_word_length):
        P = np.eye(2, dtype=complex)
        for g, e in w:
            P = P @ (hols[g] if e > 0 else inv[g])
        per_word.append((w, float(np.trace(P).imag)))
    Q, mass = common_real_conjugator(hols)
    rep = {
        "max_imag_trace_generators": max(gen_im),
        "max_imag_trace_words": max(abs(v) for _, v in per_word),
        "n_words": len(per_word),
        "conjugation_imag_mass": mass,
        "word_imag_traces": [["".join(f"{'abcd'[g]}{'' if e > 0 else '^-1'}" for g, e in w), v]
                             for w, v in per_word],
    }
    if path is not None:
        Path(path).write_text(json.dumps(rep, indent=2, sort_keys=True) + "\n")
    return rep
