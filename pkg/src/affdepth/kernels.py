"""Hot-loop kernels with a compiled core and numpy fallbacks.

Two implementations ship for each kernel:

* ``affdepth._native`` — Cython, built at install time when a compiler is
  available;
* the ``_py_*`` functions below — numpy/scipy, always available.

The backend is chosen once at import. Set ``AFFDEPTH_PURE=1`` to force the
numpy fallbacks (used by the benchmark to compare both).
"""

from __future__ import annotations

import os

import numpy as np
import scipy.sparse as sp
from scipy import ndimage

try:
    from . import _native
except ImportError:
    _native = None

NATIVE_AVAILABLE = _native is not None
_FORCE_PURE = os.environ.get("AFFDEPTH_PURE", "") not in ("", "0")
USE_NATIVE = NATIVE_AVAILABLE and not _FORCE_PURE


def backend_name() -> str:
    return "native" if USE_NATIVE else "pure"


# ---------------------------------------------------------------------------
# connected-component labeling

_STRUCT_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_STRUCT_8 = np.ones((3, 3), dtype=bool)


def _py_label_components(labels: np.ndarray, connectivity: int = 4):
    """Label maximal connected same-label regions of a non-negative image.

    Returns ``(comp, count)`` where ``comp`` holds component ids 1..count
    (0 on background) numbered by the raster position of each component's
    first pixel.
    """
    labels = np.ascontiguousarray(labels, dtype=np.int32)
    structure = _STRUCT_4 if connectivity == 4 else _STRUCT_8
    comp = np.zeros(labels.shape, dtype=np.int32)
    offset = 0
    for value in np.unique(labels):
        if value == 0:
            continue
        lab, n = ndimage.label(labels == value, structure=structure)
        sel = lab > 0
        comp[sel] = lab[sel] + offset
        offset += n
    if offset == 0:
        return comp, 0
    # renumber components in raster order of their first pixel
    flat = comp.ravel()
    nz = flat > 0
    ids, first = np.unique(flat[nz], return_index=True)
    rank = np.empty(len(ids), dtype=np.int32)
    rank[np.argsort(first, kind="stable")] = np.arange(1, len(ids) + 1, dtype=np.int32)
    lut = np.zeros(int(ids.max()) + 1, dtype=np.int32)
    lut[ids] = rank
    comp = lut[comp]
    return comp, len(ids)


def label_components(labels: np.ndarray, connectivity: int = 4):
    labels = np.ascontiguousarray(labels, dtype=np.int32)
    if USE_NATIVE:
        return _native.label_components(labels, connectivity)
    return _py_label_components(labels, connectivity)


# ---------------------------------------------------------------------------
# preconditioned conjugate gradient on the normal equations

def _py_cg_normal(indptr, indices, data, weights, b, x0, tol, max_iter):
    """Minimize sum_i w_i (A_i . x - b_i)^2 by Jacobi-preconditioned CG.

    Works on the normal equations A^T W A x = A^T W b. Stops once the true
    normal-equation residual is within ``tol`` of ||A^T W b||. Columns with
    no rows keep their ``x0`` value. Returns (x, iterations, relative
    residual, converged).
    """
    m = len(b)
    n = len(x0)
    a = sp.csr_matrix((data, indices, indptr), shape=(m, n))
    x = np.array(x0, dtype=np.float64)

    def at_w_a(vec):
        return a.T @ (weights * (a @ vec))

    rhs = a.T @ (weights * b)
    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0.0 and m == 0:
        return x, 0, 0.0, True
    target = tol * rhs_norm if rhs_norm > 0 else 0.0

    diag = np.asarray(a.multiply(a).T @ weights).ravel()
    inv_diag = np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 0.0)

    r = rhs - at_w_a(x)
    res = float(np.linalg.norm(r))
    if res <= target:
        return x, 0, res / rhs_norm if rhs_norm > 0 else 0.0, True
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        q = at_w_a(p)
        pq = float(p @ q)
        if pq <= 0:
            break
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        if float(np.linalg.norm(r)) <= target:
            # confirm with the true residual; recursive r drifts
            r = rhs - at_w_a(x)
            res = float(np.linalg.norm(r))
            if res <= target:
                converged = True
                break
            z = inv_diag * r
            p = z.copy()
            rz = float(r @ z)
            continue
        z = inv_diag * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    res = float(np.linalg.norm(rhs - at_w_a(x)))
    relres = res / rhs_norm if rhs_norm > 0 else res
    if res <= target:
        converged = True
    return x, it, relres, converged


def cg_normal(indptr, indices, data, weights, b, x0, tol, max_iter):
    indptr = np.ascontiguousarray(indptr, dtype=np.int32)
    indices = np.ascontiguousarray(indices, dtype=np.int32)
    data = np.ascontiguousarray(data, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    if USE_NATIVE:
        return _native.cg_normal(indptr, indices, data, weights, b, x0,
                                 float(tol), int(max_iter))
    return _py_cg_normal(indptr, indices, data, weights, b, x0, float(tol), int(max_iter))
