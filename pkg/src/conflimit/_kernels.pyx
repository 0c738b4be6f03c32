# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled transport kernel; same contract as :mod:`conflimit._kernels_py`."""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, exp, fabs, sqrt, pow, fmax, fmin

cnp.import_array()

ctypedef double complex cplx


cdef extern from "<complex.h>" nogil:
    double cabs(cplx)
    cplx conj(cplx)
    double creal(cplx)
    double cimag(cplx)
    cplx csqrt(cplx)


cdef struct Mat:
    cplx a
    cplx b
    cplx c
    cplx d


cdef struct Args:
    cplx z0
    cplx dz
    cplx corner
    double psi0
    double psi1
    cplx dpsi0
    cplx dpsi1
    double a
    double rc
    cplx m12
    cplx m21
    cplx n12
    cplx n21


cdef inline void _background(double r, double a, double rc, double* b, double* db) nogil:
    cdef double w, lr, s, chi, d1
    if a == 0.0 or r >= rc:
        b[0] = 0.0
        db[0] = 0.0
        return
    w = 0.5 * rc
    lr = log(r)
    if r <= w:
        b[0] = a * lr
        db[0] = a / r
        return
    s = (r - w) / w
    chi = 1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    d1 = -30.0 * s * s * (1.0 - s) * (1.0 - s) / w
    b[0] = a * chi * lr
    db[0] = a * (d1 * lr + chi / r)


cdef inline Mat _coeff(double t, Args* p) nogil:
    cdef cplx z = p.z0 + t * p.dz
    cdef cplx d = z - p.corner
    cdef double r = cabs(d)
    cdef double b, db
    _background(r, p.a, p.rc, &b, &db)
    cdef double phi = b + (1.0 - t) * p.psi0 + t * p.psi1
    cdef cplx dphi = (1.0 - t) * p.dpsi0 + t * p.dpsi1
    cdef cplx tang = 0.5 * (p.psi1 - p.psi0) + 1j * cimag(dphi * p.dz)
    dphi = tang / p.dz
    if db != 0.0:
        dphi = dphi + db * conj(d) / (2.0 * r)
    cdef double e = exp(2.0 * phi)
    cdef cplx dzb = conj(p.dz)
    cdef Mat m
    m.a = dphi * p.dz
    m.b = p.m12 * p.dz + p.n12 / e * dzb
    m.c = p.m21 * p.dz + p.n21 * e * dzb
    m.d = -dphi * p.dz
    return m


cdef inline Mat _mul(Mat p, Mat q) nogil:
    cdef Mat o
    o.a = p.a * q.a + p.b * q.c
    o.b = p.a * q.b + p.b * q.d
    o.c = p.c * q.a + p.d * q.c
    o.d = p.c * q.b + p.d * q.d
    return o


cdef inline Mat _axpy(Mat p, cplx s, Mat k) nogil:
    cdef Mat o
    o.a = p.a + s * k.a
    o.b = p.b + s * k.b
    o.c = p.c + s * k.c
    o.d = p.d + s * k.d
    return o


cdef inline Mat _rk4(Mat p, double t, double h, Args* args) nogil:
    cdef Mat k1 = _mul(p, _coeff(t, args))
    cdef Mat am = _coeff(t + 0.5 * h, args)
    cdef Mat k2 = _mul(_axpy(p, 0.5 * h, k1), am)
    cdef Mat k3 = _mul(_axpy(p, 0.5 * h, k2), am)
    cdef Mat k4 = _mul(_axpy(p, h, k3), _coeff(t + h, args))
    cdef double s = h / 6.0
    cdef Mat o
    o.a = p.a + s * (k1.a + 2.0 * k2.a + 2.0 * k3.a + k4.a)
    o.b = p.b + s * (k1.b + 2.0 * k2.b + 2.0 * k3.b + k4.b)
    o.c = p.c + s * (k1.c + 2.0 * k2.c + 2.0 * k3.c + k4.c)
    o.d = p.d + s * (k1.d + 2.0 * k2.d + 2.0 * k3.d + k4.d)
    return o


cdef inline double _maxdiff(Mat x, Mat y) nogil:
    return fmax(fmax(cabs(x.a - y.a), cabs(x.b - y.b)), fmax(cabs(x.c - y.c), cabs(x.d - y.d)))


def transport_pieces(z0, z1, corner, psi0, psi1, dpsi0, dpsi1, double a, double rc,
                     m12, m21, n12, n21, double tol=1e-10):
    """Ordered product of piece transports (see the pure-Python reference)."""
    cdef cplx[::1] Z0 = np.ascontiguousarray(z0, dtype=np.complex128)
    cdef cplx[::1] Z1 = np.ascontiguousarray(z1, dtype=np.complex128)
    cdef cplx[::1] CO = np.ascontiguousarray(corner, dtype=np.complex128)
    cdef double[::1] P0 = np.ascontiguousarray(psi0, dtype=np.float64)
    cdef double[::1] P1 = np.ascontiguousarray(psi1, dtype=np.float64)
    cdef cplx[::1] D0 = np.ascontiguousarray(dpsi0, dtype=np.complex128)
    cdef cplx[::1] D1 = np.ascontiguousarray(dpsi1, dtype=np.complex128)
    cdef Py_ssize_t n = Z0.shape[0], k
    cdef Args args
    args.a = a
    args.rc = rc
    args.m12 = complex(m12)
    args.m21 = complex(m21)
    args.n12 = complex(n12)
    args.n21 = complex(n21)
    cdef Mat P, Q, full, half, ident
    ident.a = 1.0
    ident.b = 0.0
    ident.c = 0.0
    ident.d = 1.0
    P = ident
    cdef double drift = 0.0, t, h, err
    cdef long steps = 0
    cdef cplx det, s
    with nogil:
        for k in range(n):
            args.z0 = Z0[k]
            args.dz = Z1[k] - Z0[k]
            args.corner = CO[k]
            args.psi0 = P0[k]
            args.psi1 = P1[k]
            args.dpsi0 = D0[k]
            args.dpsi1 = D1[k]
            Q = ident
            t = 0.0
            h = 1.0
            while t < 1.0:
                h = fmin(h, 1.0 - t)
                full = _rk4(Q, t, h, &args)
                half = _rk4(_rk4(Q, t, 0.5 * h, &args), t + 0.5 * h, 0.5 * h, &args)
                err = _maxdiff(full, half) / 15.0
                if err <= tol or h < 1e-12:
                    Q.a = half.a + (half.a - full.a) / 15.0
                    Q.b = half.b + (half.b - full.b) / 15.0
                    Q.c = half.c + (half.c - full.c) / 15.0
                    Q.d = half.d + (half.d - full.d) / 15.0
                    t += h
                    steps += 1
                    if err > 0:
                        h = h * fmin(2.0, 0.9 * pow(tol / err, 0.2))
                    else:
                        h = 2.0 * h
                else:
                    h = h * fmax(0.2, 0.9 * pow(tol / err, 0.2))
            det = Q.a * Q.d - Q.b * Q.c
            drift = fmax(drift, cabs(det - 1.0))
            s = csqrt(det)
            Q.a = Q.a / s
            Q.b = Q.b / s
            Q.c = Q.c / s
            Q.d = Q.d / s
            P = _mul(P, Q)
    out = np.array([[P.a, P.b], [P.c, P.d]], dtype=complex)
    return out, drift, steps
