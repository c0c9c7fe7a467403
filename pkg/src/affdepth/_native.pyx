# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: union-find component labeling and the normal-equations
conjugate-gradient loop. Mirrors the numpy fallbacks in affdepth.kernels."""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


cdef inline int _find(cnp.int32_t* parent, int i) noexcept nogil:
    cdef int root = i
    cdef int nxt
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        nxt = parent[i]
        parent[i] = root
        i = nxt
    return root


cdef inline void _union(cnp.int32_t* parent, int a, int b) noexcept nogil:
    cdef int ra = _find(parent, a)
    cdef int rb = _find(parent, b)
    if ra == rb:
        return
    if ra < rb:
        parent[rb] = ra
    else:
        parent[ra] = rb


def label_components(cnp.int32_t[:, ::1] labels, int connectivity=4):
    """Same contract as kernels._py_label_components."""
    cdef int h = labels.shape[0]
    cdef int w = labels.shape[1]
    cdef cnp.ndarray[cnp.int32_t, ndim=1] parent_arr = np.arange(h * w, dtype=np.int32)
    cdef cnp.int32_t* parent = <cnp.int32_t*> parent_arr.data
    cdef cnp.ndarray[cnp.int32_t, ndim=2] comp_arr = np.zeros((h, w), dtype=np.int32)
    cdef cnp.int32_t[:, ::1] comp = comp_arr
    cdef int i, j, idx, lab, count, root
    cdef bint diag = connectivity == 8

    with nogil:
        for i in range(h):
            for j in range(w):
                lab = labels[i, j]
                if lab == 0:
                    continue
                idx = i * w + j
                if j > 0 and labels[i, j - 1] == lab:
                    _union(parent, idx, idx - 1)
                if i > 0:
                    if labels[i - 1, j] == lab:
                        _union(parent, idx, idx - w)
                    if diag:
                        if j > 0 and labels[i - 1, j - 1] == lab:
                            _union(parent, idx, idx - w - 1)
                        if j < w - 1 and labels[i - 1, j + 1] == lab:
                            _union(parent, idx, idx - w + 1)

    # second pass: number roots by raster order of first occurrence
    cdef cnp.ndarray[cnp.int32_t, ndim=1] comp_of_root_arr = np.zeros(h * w, dtype=np.int32)
    cdef cnp.int32_t* comp_of_root = <cnp.int32_t*> comp_of_root_arr.data
    count = 0
    with nogil:
        for i in range(h):
            for j in range(w):
                if labels[i, j] == 0:
                    continue
                idx = i * w + j
                root = _find(parent, idx)
                if comp_of_root[root] == 0:
                    count += 1
                    comp_of_root[root] = count
                comp[i, j] = comp_of_root[root]
    return comp_arr, count


def cg_normal(cnp.int32_t[::1] indptr, cnp.int32_t[::1] indices,
              cnp.float64_t[::1] data, cnp.float64_t[::1] weights,
              cnp.float64_t[::1] b, cnp.float64_t[::1] x0,
              double tol, long max_iter):
    """Same contract as kernels._py_cg_normal."""
    cdef int m = b.shape[0]
    cdef int n = x0.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] x_arr = np.array(x0, dtype=np.float64)
    cdef cnp.float64_t[::1] x = x_arr
    cdef cnp.ndarray[cnp.float64_t, ndim=1] rhs_arr = np.zeros(n, dtype=np.float64)
    cdef cnp.float64_t[::1] rhs = rhs_arr
    cdef cnp.ndarray[cnp.float64_t, ndim=1] inv_diag_arr = np.zeros(n, dtype=np.float64)
    cdef cnp.float64_t[::1] inv_diag = inv_diag_arr
    cdef cnp.ndarray[cnp.float64_t, ndim=1] r_arr = np.zeros(n, dtype=np.float64)
    cdef cnp.float64_t[::1] r = r_arr
    cdef cnp.ndarray[cnp.float64_t, ndim=1] z_arr = np.zeros(n, dtype=np.float64)
    cdef cnp.float64_t[::1] z = z_arr
    cdef cnp.ndarray[cnp.float64_t, ndim=1] p_arr = np.zeros(n, dtype=np.float64)
    cdef cnp.float64_t[::1] p = p_arr
    cdef cnp.ndarray[cnp.float64_t, ndim=1] q_arr = np.zeros(n, dtype=np.float64)
    cdef cnp.float64_t[::1] q = q_arr

    cdef int i, k, it
    cdef double s, t, rhs_norm, target, res, rz, rz_new, alpha, pq
    cdef bint converged = False

    with nogil:
        # rhs = A^T W b and diag(A^T W A)
        for i in range(m):
            t = weights[i] * b[i]
            for k in range(indptr[i], indptr[i + 1]):
                rhs[indices[k]] += data[k] * t
                inv_diag[indices[k]] += weights[i] * data[k] * data[k]
        s = 0.0
        for i in range(n):
            s += rhs[i] * rhs[i]
            if inv_diag[i] > 0:
                inv_diag[i] = 1.0 / inv_diag[i]
            else:
                inv_diag[i] = 0.0
        rhs_norm = sqrt(s)
    target = tol * rhs_norm if rhs_norm > 0 else 0.0
    if rhs_norm == 0.0 and m == 0:
        return x_arr, 0, 0.0, True

    _residual(indptr, indices, data, weights, x, rhs, r, q, m, n)
    res = _norm(r, n)
    if res <= target:
        return x_arr, 0, res / rhs_norm if rhs_norm > 0 else 0.0, True

    with nogil:
        for i in range(n):
            z[i] = inv_diag[i] * r[i]
            p[i] = z[i]
    rz = _dot(r, z, n)
    it = 0
    while it < max_iter:
        it += 1
        _at_w_a(indptr, indices, data, weights, p, q, m, n)
        pq = _dot(p, q, n)
        if pq <= 0:
            break
        alpha = rz / pq
        with nogil:
            for i in range(n):
                x[i] += alpha * p[i]
                r[i] -= alpha * q[i]
        if _norm(r, n) <= target:
            _residual(indptr, indices, data, weights, x, rhs, r, q, m, n)
            res = _norm(r, n)
            if res <= target:
                converged = True
                break
            with nogil:
                for i in range(n):
                    z[i] = inv_diag[i] * r[i]
                    p[i] = z[i]
            rz = _dot(r, z, n)
            continue
        with nogil:
            for i in range(n):
                z[i] = inv_diag[i] * r[i]
        rz_new = _dot(r, z, n)
        with nogil:
            for i in range(n):
                p[i] = z[i] + (rz_new / rz) * p[i]
        rz = rz_new

    _residual(indptr, indices, data, weights, x, rhs, r, q, m, n)
    res = _norm(r, n)
    cdef double relres = res / rhs_norm if rhs_norm > 0 else res
    if res <= target:
        converged = True
    return x_arr, it, relres, converged


cdef void _at_w_a(cnp.int32_t[::1] indptr, cnp.int32_t[::1] indices,
                  cnp.float64_t[::1] data, cnp.float64_t[::1] weights,
                  cnp.float64_t[::1] vec, cnp.float64_t[::1] out,
                  int m, int n) noexcept:
    cdef int i, k
    cdef double s
    with nogil:
        for i in range(n):
            out[i] = 0.0
        for i in range(m):
            s = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                s += data[k] * vec[indices[k]]
            s *= weights[i]
            for k in range(indptr[i], indptr[i + 1]):
                out[indices[k]] += data[k] * s


cdef void _residual(cnp.int32_t[::1] indptr, cnp.int32_t[::1] indices,
                    cnp.float64_t[::1] data, cnp.float64_t[::1] weights,
                    cnp.float64_t[::1] x, cnp.float64_t[::1] rhs,
                    cnp.float64_t[::1] r, cnp.float64_t[::1] scratch,
                    int m, int n) noexcept:
    """r = rhs - A^T W A x."""
    cdef int i
    _at_w_a(indptr, indices, data, weights, x, scratch, m, n)
    with nogil:
        for i in range(n):
            r[i] = rhs[i] - scratch[i]


cdef double _dot(cnp.float64_t[::1] a, cnp.float64_t[::1] b, int n) noexcept:
    cdef int i
    cdef double s = 0.0
    with nogil:
        for i in range(n):
            s += a[i] * b[i]
    return s


cdef double _norm(cnp.float64_t[::1] a, int n) noexcept:
    return sqrt(_dot(a, a, n))
