# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled lattice step kernel (hot path).

Same contract as the pure-numpy fallback in ``_step_py.py``; see that module
for the parameter description. The exponential table is computed by the
caller (vectorized numpy) so both backends share the same transcendental
results; this kernel fuses the map and the neighbor blend into two
cache-friendly passes, with boundary handling peeled off the interior loop.
Compiled with -ffp-contract=off so the arithmetic matches numpy
operation-for-operation (neighbor sums accumulate in the same fixed offset
order in both backends).
"""

from libc.math cimport fabs

cdef double OVERFLOW_LIMIT = 1e100


cpdef long step_kernel(const double[:, ::1] x, const double[:, ::1] e,
                       double lam, double mu_x, double mu_y,
                       const Py_ssize_t[:, ::1] offsets, bint wrap,
                       const double[:, ::1] wx, const double[:, ::1] wy,
                       double[:, ::1] tx, double[:, ::1] ty,
                       double[:, ::1] out_x, double[:, ::1] out_y):
    cdef Py_ssize_t rows = x.shape[0]
    cdef Py_ssize_t cols = x.shape[1]
    cdef Py_ssize_t n_off = offsets.shape[0]
    cdef Py_ssize_t i, j, k, ii, jj
    cdef double ev, txv, tyv, accx, accy
    cdef double sx = 1.0 - mu_x
    cdef double sy = 1.0 - mu_y
    cdef Py_ssize_t off_r[8]
    cdef Py_ssize_t off_c[8]

    for k in range(n_off):
        off_r[k] = offsets[k, 0]
        off_c[k] = offsets[k, 1]

    with nogil:
        # phase 1: pointwise map into the tilde buffers
        for i in range(rows):
            for j in range(cols):
                ev = e[i, j]
                txv = lam * x[i, j] * ev
                tyv = x[i, j] * (1.0 - ev)
                if not (fabs(txv) <= OVERFLOW_LIMIT and fabs(tyv) <= OVERFLOW_LIMIT):
                    return i * cols + j
                tx[i, j] = txv
                ty[i, j] = tyv

        # phase 2, interior: no boundary checks needed
        for i in range(1, rows - 1):
            for j in range(1, cols - 1):
                accx = 0.0
                accy = 0.0
                for k in range(n_off):
                    ii = i + off_r[k]
                    jj = j + off_c[k]
                    accx = accx + tx[ii, jj]
                    accy = accy + ty[ii, jj]
                out_x[i, j] = sx * tx[i, j] + wx[i, j] * accx
                out_y[i, j] = sy * ty[i, j] + wy[i, j] * accy

        # phase 2, border cells
        for i in range(rows):
            if 0 < i < rows - 1:
                _border_cell(tx, ty, wx, wy, out_x, out_y, i, 0,
                             off_r, off_c, n_off, wrap, rows, cols, sx, sy)
                _border_cell(tx, ty, wx, wy, out_x, out_y, i, cols - 1,
                             off_r, off_c, n_off, wrap, rows, cols, sx, sy)
            else:
                for j in range(cols):
                    _border_cell(tx, ty, wx, wy, out_x, out_y, i, j,
                                 off_r, off_c, n_off, wrap, rows, cols, sx, sy)
    return -1


cdef inline void _border_cell(const double[:, ::1] tx, const double[:, ::1] ty,
                              const double[:, ::1] wx, const double[:, ::1] wy,
                              double[:, ::1] out_x, double[:, ::1] out_y,
                              Py_ssize_t i, Py_ssize_t j,
                              Py_ssize_t *off_r, Py_ssize_t *off_c, Py_ssize_t n_off,
                              bint wrap, Py_ssize_t rows, Py_ssize_t cols,
                              double sx, double sy) noexcept nogil:
    cdef Py_ssize_t k, ii, jj
    cdef double accx = 0.0
    cdef double accy = 0.0
    for k in range(n_off):
        ii = i + off_r[k]
        jj = j + off_c[k]
        if wrap:
            if ii < 0:
                ii += rows
            elif ii >= rows:
                ii -= rows
            if jj < 0:
                jj += cols
            elif jj >= cols:
                jj -= cols
        elif ii < 0 or ii >= rows or jj < 0 or jj >= cols:
            continue
        accx = accx + tx[ii, jj]
        accy = accy + ty[ii, jj]
    out_x[i, j] = sx * tx[i, j] + wx[i, j] * accx
    out_y[i, j] = sy * ty[i, j] + wy[i, j] * accy
