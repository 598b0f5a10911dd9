# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hybrid integrator core.

Same algorithm as ``_engine_py.run_hybrid``: fixed-step RK4 flow, bisection
of partial steps to locate trigger zero crossings, diagonal state jump at
each crossing, optional delayed-input path. The hot loop runs without the
GIL so sweep workers can share it from threads.
"""

import numpy as np

cimport numpy as cnp

DEF MAXN = 32


cdef inline double _interp(const double* buf, double pos, Py_ssize_t last) noexcept nogil:
    cdef Py_ssize_t i = <Py_ssize_t> pos
    cdef double w
    if i >= last:
        return buf[last]
    w = pos - i
    if w == 0.0:
        return buf[i]
    return (1.0 - w) * buf[i] + w * buf[i + 1]


cdef struct Sys:
    Py_ssize_t n
    const double* A
    const double* br
    const double* bv
    const double* cz
    double dz
    const double* cu
    double du
    const double* rhalf
    Py_ssize_t rlast
    const double* uhist
    double hf
    double delay_fine
    bint has_delay


cdef inline double _rval(Sys* s, double pos) noexcept nogil:
    return _interp(s.rhalf, 2.0 * pos, s.rlast)


cdef inline double _vval(Sys* s, double pos, Py_ssize_t known) noexcept nogil:
    cdef double p = pos - s.delay_fine
    cdef Py_ssize_t i
    cdef double w
    if p <= 0.0:
        return 0.0
    i = <Py_ssize_t> p
    if i >= known:
        return s.uhist[known]
    w = p - i
    if w == 0.0:
        return s.uhist[i]
    return (1.0 - w) * s.uhist[i] + w * s.uhist[i + 1]


cdef inline void _deriv(Sys* s, const double* x, double pos, Py_ssize_t known,
                        double* dx) noexcept nogil:
    cdef Py_ssize_t i, l
    cdef double acc, r, v
    r = _rval(s, pos)
    v = _vval(s, pos, known) if s.has_delay else 0.0
    for i in range(s.n):
        acc = 0.0
        for l in range(s.n):
            acc += s.A[i * s.n + l] * x[l]
        acc += s.br[i] * r
        if s.has_delay:
            acc += s.bv[i] * v
        dx[i] = acc


cdef inline void _rk4(Sys* s, const double* x, double pos, double dt,
                      Py_ssize_t known, double* xout) noexcept nogil:
    cdef double k1[MAXN]
    cdef double k2[MAXN]
    cdef double k3[MAXN]
    cdef double k4[MAXN]
    cdef double tmp[MAXN]
    cdef double h = dt * s.hf
    cdef Py_ssize_t i
    _deriv(s, x, pos, known, k1)
    for i in range(s.n):
        tmp[i] = x[i] + 0.5 * h * k1[i]
    _deriv(s, tmp, pos + 0.5 * dt, known, k2)
    for i in range(s.n):
        tmp[i] = x[i] + 0.5 * h * k2[i]
    _deriv(s, tmp, pos + 0.5 * dt, known, k3)
    for i in range(s.n):
        tmp[i] = x[i] + h * k3[i]
    _deriv(s, tmp, pos + dt, known, k4)
    for i in range(s.n):
        xout[i] = x[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


cdef inline double _trig(Sys* s, const double* x, double pos) noexcept nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t i
    for i in range(s.n):
        acc += s.cz[i] * x[i]
    return acc + s.dz * _rval(s, pos)


def run_hybrid(
    cnp.ndarray[double, ndim=2, mode="c"] A,
    cnp.ndarray[double, ndim=1] br,
    cnp.ndarray[double, ndim=1] bv,
    cnp.ndarray[double, ndim=1] x0,
    cnp.ndarray[double, ndim=2, mode="c"] C,
    cnp.ndarray[double, ndim=1] dr,
    cnp.ndarray[double, ndim=1] cz,
    double dz,
    cnp.ndarray[double, ndim=1] cu,
    double du,
    cnp.ndarray[double, ndim=1] jump,
    bint detect,
    cnp.ndarray[double, ndim=1] r_half,
    double hf,
    Py_ssize_t nf,
    Py_ssize_t record_every,
    double delay_fine,
    double tol_fine,
    Py_ssize_t min_gap,
    cnp.ndarray[double, ndim=2, mode="c"] out,
    cnp.ndarray[double, ndim=1] u_hist,
    cnp.ndarray[double, ndim=1] reset_times,
):
    cdef Py_ssize_t n = A.shape[0]
    if n > MAXN:
        raise ValueError(f"state dimension {n} exceeds compiled limit {MAXN}")

    cdef Sys s
    s.n = n
    s.A = &A[0, 0]
    s.br = &br[0]
    s.bv = &bv[0]
    s.cz = &cz[0]
    s.dz = dz
    s.cu = &cu[0]
    s.du = du
    s.rhalf = &r_half[0]
    s.rlast = r_half.shape[0] - 1
    s.uhist = &u_hist[0]
    s.hf = hf
    s.delay_fine = delay_fine
    s.has_delay = delay_fine > 0.0

    cdef double* uh = &u_hist[0]
    cdef double* rt = &reset_times[0]
    cdef double[:, ::1] outv = out
    cdef const double[:, ::1] cv = C
    cdef const double[:] drv = dr
    cdef const double[:] jv = jump
    cdef Py_ssize_t p = C.shape[0]
    cdef Py_ssize_t cap = reset_times.shape[0]

    cdef double x[MAXN]
    cdef double xn[MAXN]
    cdef double xc[MAXN]
    cdef Py_ssize_t i, j, l, rec
    cdef long long last_reset = -(1 << 60)
    cdef Py_ssize_t n_resets = 0, n_supp = 0
    cdef double z0, z1, lo, hi, zlo, mid, zm, sfrac, r1, acc

    for i in range(n):
        x[i] = x0[i]

    with nogil:
        acc = 0.0
        for i in range(n):
            acc += s.cu[i] * x[i]
        uh[0] = acc + s.du * s.rhalf[0]
        for i in range(p):
            acc = 0.0
            for j in range(n):
                acc += cv[i, j] * x[j]
            outv[i, 0] = acc + drv[i] * s.rhalf[0]
        rec = 1

        for j in range(nf):
            z0 = _trig(&s, x, <double> j)
            _rk4(&s, x, <double> j, 1.0, j, xn)
            z1 = _trig(&s, xn, <double> (j + 1))
            if detect and (z0 * z1 < 0.0 or (z1 == 0.0 and z0 != 0.0)):
                if j - last_reset < min_gap or n_resets >= cap:
                    n_supp += 1
                else:
                    lo = 0.0
                    zlo = z0
                    hi = 1.0
                    while hi - lo > tol_fine:
                        mid = 0.5 * (lo + hi)
                        _rk4(&s, x, <double> j, mid, j, xc)
                        zm = _trig(&s, xc, j + mid)
                        if zm == 0.0:
                            lo = mid
                            hi = mid
                        elif (zm > 0.0) == (zlo > 0.0):
                            lo = mid
                            zlo = zm
                        else:
                            hi = mid
                    sfrac = 0.5 * (lo + hi)
                    _rk4(&s, x, <double> j, sfrac, j, xc)
                    for i in range(n):
                        xc[i] *= jv[i]
                    _rk4(&s, xc, j + sfrac, 1.0 - sfrac, j, xn)
                    rt[n_resets] = (j + sfrac) * hf
                    n_resets += 1
                    last_reset = j
            for i in range(n):
                x[i] = xn[i]
            r1 = _rval(&s, <double> (j + 1))
            acc = 0.0
            for i in range(n):
                acc += s.cu[i] * x[i]
            uh[j + 1] = acc + s.du * r1
            if (j + 1) % record_every == 0:
                for i in range(p):
                    acc = 0.0
                    for l in range(n):
                        acc += cv[i, l] * x[l]
                    outv[i, rec] = acc + drv[i] * r1
                rec += 1

    return n_resets, n_supp
