"""Depth completion as sparse weighted linear least squares.

The energy over per-pixel depths D combines three kinds of residual rows:

* data:        sqrt(w_d) * (D(p) - D_raw(p)) for observed pixels being solved;
* smoothness:  sqrt(w_s) * (D(p) - D(q)) over 4-neighbor pairs;
* normal:      sqrt(w_n * B(p)) * N(p) . (D(q) r(q) - D(p) r(p)) over ordered
               4-neighbor pairs, where r(x) is the viewing ray of pixel x,
               so the residual is linear in the two depths.

Observed pixels outside the solve mask act as fixed (Dirichlet) anchors:
their depths fold into row constants. B down-weights normal rows near
occlusion boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import kernels
from .errors import InvalidInputError
from .geometry import CameraIntrinsics
from .images import BoundaryMap, DepthImage, NormalMap

ROW_DATA = 0
ROW_SMOOTH = 1
ROW_NORMAL = 2


@dataclass(frozen=True)
class EnergyWeights:
    """Relative weights of the data, smoothness, and normal terms."""

    lambda_d: float = 1000.0
    lambda_s: float = 0.001
    lambda_n: float = 1.0

    def __post_init__(self):
        if min(self.lambda_d, self.lambda_s, self.lambda_n) < 0:
            raise InvalidInputError("energy weights must be non-negative")


@dataclass
class SparseSystem:
    """Weighted residual rows ``sqrt(w_i) * (A_i . x - b_i)`` plus the
    pixel <-> unknown index maps."""

    matrix: sp.csr_matrix
    b: np.ndarray
    weights: np.ndarray
    row_kind: np.ndarray
    unknown_map: np.ndarray  # (H, W) int32, -1 where not solved
    unknown_pixels: np.ndarray  # (n, 2) row, col
    shape: tuple

    @property
    def n_unknowns(self) -> int:
        return len(self.unknown_pixels)

    @property
    def n_rows(self) -> int:
        return len(self.b)

    def rows_of_kind(self, kind: int) -> int:
        return int((self.row_kind == kind).sum())

    def gather(self, depth: DepthImage) -> np.ndarray:
        """Unknown vector read out of a depth image."""
        return depth.values[self.unknown_pixels[:, 0], self.unknown_pixels[:, 1]]


@dataclass
class SolveInfo:
    converged: bool
    iterations: int
    relative_residual: float
    n_unconstrained: int
    underdetermined: bool


def boundary_weight(boundary: BoundaryMap, v: int, u: int) -> float:
    """Normal-term down-weight at one pixel: (1 - p_occlusion)^2."""
    p = float(boundary.occlusion[v, u])
    return float(np.clip(1.0 - p, 0.0, 1.0) ** 2)


def boundary_weight_map(boundary: BoundaryMap) -> np.ndarray:
    return np.clip(1.0 - boundary.occlusion, 0.0, 1.0) ** 2


def assemble_system(crop: DepthImage, solve_mask: np.ndarray, normals: NormalMap,
                    boundary: BoundaryMap, k: CameraIntrinsics, w: EnergyWeights,
                    b_placement: str = "pixel") -> SparseSystem:
    """Build the least-squares system for the pixels in ``solve_mask``.

    Rows are emitted only when they touch at least one unknown; pairs of
    two anchors would add constants to the energy without moving the
    minimizer. ``b_placement`` selects the occlusion down-weight of a
    normal row: "pixel" uses B at the row's anchor pixel p, "pair" the
    minimum of B(p) and B(q).
    """
    solve_mask = np.asarray(solve_mask, dtype=bool)
    h, w_img = crop.shape
    if solve_mask.shape != (h, w_img):
        raise InvalidInputError("solve mask shape does not match crop")
    if (k.height, k.width) != (h, w_img):
        raise InvalidInputError("intrinsics image size does not match crop")
    if b_placement not in ("pixel", "pair"):
        raise InvalidInputError("b_placement must be 'pixel' or 'pair'")
    if not solve_mask.any():
        raise InvalidInputError("solve mask is empty")

    unknown_map = np.full((h, w_img), -1, dtype=np.int32)
    vv, uu = np.nonzero(solve_mask)
    unknown_map[vv, uu] = np.arange(len(vv), dtype=np.int32)
    unknown_pixels = np.column_stack((vv, uu)).astype(np.int64)

    observed = crop.valid
    domain = solve_mask | observed
    values = crop.values
    rays = k.ray_grid()
    bmap = boundary_weight_map(boundary)

    rows_i = []  # row index of each entry
    cols = []
    vals = []
    rhs = []
    weights = []
    kinds = []
    n_rows = 0

    def add_rows(cols_a, vals_a, cols_b, vals_b, consts, wts, kind):
        """Append rows with up to two unknown entries each; cols < 0 are
        skipped (that endpoint was folded into the constant)."""
        nonlocal n_rows
        nr = len(consts)
        if nr == 0:
            return
        idx = np.arange(n_rows, n_rows + nr)
        sel_a = cols_a >= 0
        rows_i.append(idx[sel_a])
        cols.append(cols_a[sel_a])
        vals.append(vals_a[sel_a])
        sel_b = cols_b >= 0
        rows_i.append(idx[sel_b])
        cols.append(cols_b[sel_b])
        vals.append(vals_b[sel_b])
        rhs.append(consts)
        weights.append(wts)
        kinds.append(np.full(nr, kind, dtype=np.int8))
        n_rows += nr

    # data rows: observed pixels inside the solve mask
    if w.lambda_d > 0:
        sel = solve_mask & observed
        dv, du = np.nonzero(sel)
        ids = unknown_map[dv, du]
        add_rows(ids, np.ones(len(ids)), np.full(len(ids), -1), np.zeros(len(ids)),
                 values[dv, du], np.full(len(ids), w.lambda_d), ROW_DATA)

    def neighbor_pairs(dvv, duu):
        """(p, q) with q = p + (dvv, duu), both pixels inside the domain."""
        if duu:
            hit = domain[:, :-1] & domain[:, 1:]
        else:
            hit = domain[:-1, :] & domain[1:, :]
        pv, pu = np.nonzero(hit)
        return pv, pu, pv + dvv, pu + duu

    # smoothness rows: unordered 4-neighbor pairs within the domain
    if w.lambda_s > 0:
        for dvv, duu in ((0, 1), (1, 0)):
            pv, pu, qv, qu = neighbor_pairs(dvv, duu)
            id_p = unknown_map[pv, pu]
            id_q = unknown_map[qv, qu]
            keep = (id_p >= 0) | (id_q >= 0)
            pv, pu, qv, qu = pv[keep], pu[keep], qv[keep], qu[keep]
            id_p, id_q = id_p[keep], id_q[keep]
            const = np.zeros(len(pv))
            const += np.where(id_p < 0, -values[pv, pu], 0.0)
            const += np.where(id_q < 0, values[qv, qu], 0.0)
            add_rows(id_p, np.ones(len(pv)), id_q, -np.ones(len(pv)),
                     const, np.full(len(pv), w.lambda_s), ROW_SMOOTH)

    # normal rows: ordered pairs (p, q); N and B evaluated at p
    if w.lambda_n > 0:
        for dvv, duu in ((0, 1), (1, 0)):
            for flip in (False, True):
                pv, pu, qv, qu = neighbor_pairs(dvv, duu)
                if flip:
                    pv, pu, qv, qu = qv, qu, pv, pu
                ok = normals.valid[pv, pu]
                pv, pu, qv, qu = pv[ok], pu[ok], qv[ok], qu[ok]
                id_p = unknown_map[pv, pu]
                id_q = unknown_map[qv, qu]
                keep = (id_p >= 0) | (id_q >= 0)
                pv, pu, qv, qu = pv[keep], pu[keep], qv[keep], qu[keep]
                id_p, id_q = id_p[keep], id_q[keep]
                n_p = normals.vectors[pv, pu]
                c_p = -np.einsum("ij,ij->i", n_p, rays[pv, pu])
                c_q = np.einsum("ij,ij->i", n_p, rays[qv, qu])
                const = np.zeros(len(pv))
                const += np.where(id_p < 0, -c_p * values[pv, pu], 0.0)
                const += np.where(id_q < 0, -c_q * values[qv, qu], 0.0)
                if b_placement == "pixel":
                    b_w = bmap[pv, pu]
                else:
                    b_w = np.minimum(bmap[pv, pu], bmap[qv, qu])
                add_rows(id_p, c_p, id_q, c_q, const,
                         w.lambda_n * b_w, ROW_NORMAL)

    if n_rows:
        rows_cat = np.concatenate(rows_i)
        cols_cat = np.concatenate(cols)
        vals_cat = np.concatenate(vals)
        matrix = sp.csr_matrix((vals_cat, (rows_cat, cols_cat)),
                               shape=(n_rows, len(unknown_pixels)))
        b = np.concatenate(rhs)
        wts = np.concatenate(weights)
        kind = np.concatenate(kinds)
    else:
        matrix = sp.csr_matrix((0, len(unknown_pixels)))
        b = np.zeros(0)
        wts = np.zeros(0)
        kind = np.zeros(0, dtype=np.int8)

    return SparseSystem(matrix, b, wts, kind, unknown_map, unknown_pixels, (h, w_img))


def energy(system: SparseSystem, depth: DepthImage) -> float:
    """Weighted sum of squared residuals of ``depth`` on the system's rows."""
    x = system.gather(depth)
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("depth must be finite on all unknowns")
    r = system.matrix @ x - system.b
    return float((system.weights * r * r).sum())


def energy_gradient(system: SparseSystem, depth: DepthImage) -> np.ndarray:
    """Gradient of :func:`energy` with respect to the unknown vector."""
    x = system.gather(depth)
    r = system.matrix @ x - system.b
    return 2.0 * (system.matrix.T @ (system.weights * r))


def solve(system: SparseSystem, init: DepthImage, tol: float = 1e-6,
          max_iter: int | None = None):
    """Minimize the system energy by preconditioned conjugate gradient.

    Returns ``(DepthImage, SolveInfo)``: solved unknowns are written over a
    copy of ``init`` and marked valid; all other pixels pass through.
    Unknowns touched by no row keep their init value and are counted in
    ``SolveInfo.n_unconstrained``.
    """
    n = system.n_unknowns
    if max_iter is None:
        max_iter = 10 * n
    x0 = system.gather(init)
    x0 = np.where(np.isfinite(x0), x0, 0.0)

    col_touch = np.asarray(system.matrix.multiply(system.matrix).T
                           @ system.weights).ravel()
    n_unconstrained = int((col_touch <= 0).sum())

    a = system.matrix
    x, iters, relres, converged = kernels.cg_normal(
        a.indptr, a.indices, a.data, system.weights, system.b, x0, tol, max_iter)

    out = init.copy()
    out.values[system.unknown_pixels[:, 0], system.unknown_pixels[:, 1]] = x
    out.valid[system.unknown_pixels[:, 0], system.unknown_pixels[:, 1]] = True
    info = SolveInfo(bool(converged), int(iters), float(relres),
                     n_unconstrained, n_unconstrained > 0 or system.n_rows == 0)
    return out, info
