"""Pure-Python transport kernel (reference implementation and fallback).

A path is a sequence of straight *pieces*, each inside one mesh triangle.
On a piece the log-metric is

    phi(z(t)) = b(|z - corner|) + (1 - t) psi0 + t psi1,
    d_z phi   = d_z b + (1 - t) dpsi0 + t dpsi1,

with ``b = a chi(r) log r`` the singular background; the correction and its
(independently reconstructed) derivative are linear along the piece.  The
tangential component of ``d_z phi`` is replaced by ``(psi1 - psi0) / 2`` so
that ``2 Re(d_z phi dz/dt) = d phi/dt`` holds exactly along the path; only
the normal component comes from the reconstruction.  This makes the
discrete transport preserve the real structure whenever the continuum one
does.
The connection matrix along the piece is ``A = M dz/dt + N dzbar/dt`` with

    M = [[d phi, m12], [m21, -d phi]],
    N = [[0, n12 e^{-2 phi}], [n21 e^{2 phi}, 0]],

and ``P' = P A`` is integrated with step-doubling RK4.
"""
from __future__ import annotations

import cmath
import math

import numpy as np

__all__ = ["transport_pieces"]


def _background(r: float, a: float, rc: float) -> tuple[float, float]:
    """Background value and radial derivative."""
    if a == 0.0 or r >= rc:
        return 0.0, 0.0
    w = 0.5 * rc
    lr = math.log(r)
    if r <= w:
        return a * lr, a / r
    s = (r - w) / w
    chi = 1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    d1 = -30.0 * s * s * (1.0 - s) * (1.0 - s) / w
    return a * chi * lr, a * (d1 * lr + chi / r)


def _coeff(t, z0, dz, corner, psi0, psi1, dpsi0, dpsi1, a, rc, m12, m21, n12, n21):
    z = z0 + t * dz
    d = z - corner
    r = abs(d)
    b, db = _background(r, a, rc)
    phi = b + (1.0 - t) * psi0 + t * psi1
    dphi = (1.0 - t) * dpsi0 + t * dpsi1
    # keep the normal part of the reconstruction, take the tangential part
    # from psi itself: 2 Re(dphi dz) = d phi / dt along the piece
    dphi = complex(0.5 * (psi1 - psi0), (dphi * dz).imag) / dz
    if db != 0.0:
        dphi += db * d.conjugate() / (2.0 * r)
    e = math.exp(2.0 * phi)
    dzb = dz.conjugate()
    return (dphi * dz, m12 * dz + n12 / e * dzb, m21 * dz + n21 * e * dzb, -dphi * dz)


def _mul(p, a):
    p00, p01, p10, p11 = p
    a00, a01, a10, a11 = a
    return (p00 * a00 + p01 * a10, p00 * a01 + p01 * a11,
            p10 * a00 + p11 * a10, p10 * a01 + p11 * a11)


def _rk4(p, t, h, args):
    k1 = _mul(p, _coeff(t, *args))
    p2 = tuple(p[i] + 0.5 * h * k1[i] for i in range(4))
    am = _coeff(t + 0.5 * h, *args)
    k2 = _mul(p2, am)
    p3 = tuple(p[i] + 0.5 * h * k2[i] for i in range(4))
    k3 = _mul(p3, am)
    p4 = tuple(p[i] + h * k3[i] for i in range(4))
    k4 = _mul(p4, _coeff(t + h, *args))
    return tuple(p[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) for i in range(4))


def transport_pieces(z0, z1, corner, psi0, psi1, dpsi0, dpsi1, a, rc, m12, m21, n12, n21,
                     tol=1e-10):
    """Ordered product of piece transports.

    Array arguments have one entry per piece.  Returns the 2x2 product
    (renormalised to unit determinant per piece), the largest determinant
    drift seen before renormalisation and the number of RK4 steps.
    """
    P = (1.0 + 0j, 0j, 0j, 1.0 + 0j)
    drift = 0.0
    steps = 0
    for k in range(len(z0)):
        dz = complex(z1[k]) - complex(z0[k])
        args = (complex(z0[k]), dz, complex(corner[k]), float(psi0[k]), float(psi1[k]),
                complex(dpsi0[k]), complex(dpsi1[k]), a, rc, m12, m21, n12, n21)
        Q = (1.0 + 0j, 0j, 0j, 1.0 + 0j)
        t, h = 0.0, 1.0
        while t < 1.0:
            h = min(h, 1.0 - t)
            full = _rk4(Q, t, h, args)
            half = _rk4(_rk4(Q, t, 0.5 * h, args), t + 0.5 * h, 0.5 * h, args)
            err = max(abs(full[i] - half[i]) for i in range(4)) / 15.0
            if err <= tol or h < 1e-12:
                Q = tuple(half[i] + (half[i] - full[i]) / 15.0 for i in range(4))
                t += h
                steps += 1
                h = h * min(2.0, 0.9 * (tol / err) ** 0.2) if err > 0 else 2.0 * h
            else:
                h *= max(0.2, 0.9 * (tol / err) ** 0.2)
        det = Q[0] * Q[3] - Q[1] * Q[2]
        drift = max(drift, abs(det - 1.0))
        s = cmath.sqrt(det)
        Q = tuple(q / s for q in Q)
        P = _mul(P, Q)
    out = np.array([[P[0], P[1]], [P[2], P[3]]], dtype=complex)
    return out, drift, steps
