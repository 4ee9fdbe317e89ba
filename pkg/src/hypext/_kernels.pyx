# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled method-of-lines right-hand side for constant-coefficient systems."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline Py_ssize_t _wrap(Py_ssize_t i, Py_ssize_t n) noexcept nogil:
    if i >= n:
        return i - n
    if i < 0:
        return i + n
    return i


cdef void _derivative(const double[:, :, ::1] u, int axis, double inv_h, int order,
                      double[:, :, ::1] out) noexcept nogil:
    cdef Py_ssize_t nv = u.shape[0], nx = u.shape[1], ny = u.shape[2]
    cdef Py_ssize_t v, i, j, p1, m1, p2, m2
    cdef double w1 = 0.5 * inv_h, w2 = 0.0
    if order == 4:
        w1 = (2.0 / 3.0) * inv_h
        w2 = (-1.0 / 12.0) * inv_h
    if axis == 0:
        for v in range(nv):
            for i in range(nx):
                p1 = _wrap(i + 1, nx)
                m1 = _wrap(i - 1, nx)
                p2 = _wrap(i + 2, nx)
                m2 = _wrap(i - 2, nx)
                for j in range(ny):
                    out[v, i, j] = w1 * (u[v, p1, j] - u[v, m1, j]) + w2 * (u[v, p2, j] - u[v, m2, j])
    else:
        for v in range(nv):
            for i in range(nx):
                for j in range(ny):
                    out[v, i, j] = (w1 * (u[v, i, _wrap(j + 1, ny)] - u[v, i, _wrap(j - 1, ny)])
                                    + w2 * (u[v, i, _wrap(j + 2, ny)] - u[v, i, _wrap(j - 2, ny)]))


def derivative(const double[:, :, ::1] u, int axis, double inv_h, int order):
    """Periodic central difference of every component along ``axis``."""
    out = np.empty((u.shape[0], u.shape[1], u.shape[2]))
    cdef double[:, :, ::1] o = out
    with nogil:
        _derivative(u, axis, inv_h, order, o)
    return out


def rhs(const double[:, :, ::1] u, const double[:, :, ::1] amats, const double[::1] inv_h,
        int order, const double[::1] damping, const double[::1] source, double[:, :, ::1] out):
    """``out = -sum_d amats[d] @ D_d u - damping * u + source`` pointwise."""
    cdef Py_ssize_t nv = u.shape[0], nx = u.shape[1], ny = u.shape[2]
    cdef Py_ssize_t ndir = amats.shape[0], npts = nx * ny
    cdef Py_ssize_t a, b, d, p
    cdef double c
    scratch = np.empty((ndir, nv, nx, ny))
    cdef double[:, :, :, ::1] du = scratch
    # flat views over the grid for the pointwise matrix products
    cdef double[:, :, ::1] duf = scratch.reshape(ndir, nv, npts)
    cdef const double[:, ::1] uf = np.asarray(u).reshape(nv, npts)
    cdef double[:, ::1] of = np.asarray(out).reshape(nv, npts)
    with nogil:
        for d in range(ndir):
            _derivative(u, <int>d, inv_h[d], order, du[d])
        for a in range(nv):
            c = damping[a]
            for p in range(npts):
                of[a, p] = source[a] - c * uf[a, p]
            for d in range(ndir):
                for b in range(nv):
                    c = amats[d, a, b]
                    if c == 0.0:
                        continue
                    for p in range(npts):
                        of[a, p] -= c * duf[d, b, p]
