"""Dense numerical kernels: SVD, linear sum assignment, Sinkhorn normalization.

Matrices are plain numpy arrays: 2-D, float64, C-order, finite entries. Helpers
here validate those conventions instead of wrapping arrays in a class.

Everything in this module is a pure function of its inputs and deterministic:
fixed input, fixed output, bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import DivergenceError


class SvdConvergenceError(DivergenceError):
    pass


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and convert input to a 2-D float64 C-contiguous array."""
    m = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"{name} must be nonempty, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


@dataclass
class SvdResult:
    """Economy SVD a = u @ diag(s) @ v.T with s sorted descending.

    u has shape (rows, k), v has shape (cols, k), k = min(rows, cols).
    Columns of u and v are orthonormal. Deterministic sign convention: the
    first nonzero component of each u column is non-negative.
    """

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray


@dataclass
class Assignment:
    """A solved assignment: row i is paired with column perm[i].

    cost is the sum of the selected entries of the cost matrix that was
    passed in (not negated, regardless of the maximize flag).
    """

    perm: np.ndarray
    cost: float


_JACOBI_MAX_SWEEPS = 100
# Convergence: off-diagonal mass of the implicit Gram matrix, relative to
# ||a||_F^2 (which right-rotations preserve).
_JACOBI_TOL = 1e-12


@njit(cache=True)
def _jacobi_core(a, v, max_sweeps, tol):  # pragma: no cover - jitted
    r, c = a.shape
    normf2 = 0.0
    for i in range(r):
        for j in range(c):
            normf2 += a[i, j] * a[i, j]
    if normf2 == 0.0:
        return 0
    for sweep in range(max_sweeps):
        off = 0.0
        for p in range(c - 1):
            for q in range(p + 1, c):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for i in range(r):
                    ap = a[i, p]
                    aq = a[i, q]
                    alpha += ap * ap
                    beta += aq * aq
                    gamma += ap * aq
                off += gamma * gamma
                if gamma == 0.0 or alpha == 0.0 or beta == 0.0:
                    continue
                zeta = (beta - alpha) / (2.0 * gamma)
                sgn = 1.0 if zeta >= 0.0 else -1.0
                t = sgn / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                cs = 1.0 / math.sqrt(1.0 + t * t)
                sn = cs * t
                for i in range(r):
                    tmp = a[i, p]
                    a[i, p] = cs * tmp - sn * a[i, q]
                    a[i, q] = sn * tmp + cs * a[i, q]
                for i in range(c):
                    tmp = v[i, p]
                    v[i, p] = cs * tmp - sn * v[i, q]
                    v[i, q] = sn * tmp + cs * v[i, q]
        if math.sqrt(off) <= tol * normf2:
            return sweep + 1
    return -1


def _complete_basis(u: np.ndarray, cols_needed) -> None:
    # Fill the listed (zero singular value) columns of u with unit vectors
    # orthogonal to every other column. Deterministic: walk canonical basis
    # vectors in index order.
    r = u.shape[0]
    for k in cols_needed:
        for cand in range(r):
            w = np.zeros(r)
            w[cand] = 1.0
            w -= u @ (u.T @ w)
            nrm = math.sqrt(float(np.sum(w * w)))
            if nrm > 0.5:
                u[:, k] = w / nrm
                break


def _fix_signs(u: np.ndarray, v: np.ndarray) -> None:
    # First component of each u column with magnitude above threshold must be
    # non-negative; v flips with u so the product is unchanged.
    for k in range(u.shape[1]):
        col = u[:, k]
        idx = np.flatnonzero(np.abs(col) > 1e-12)
        lead = col[idx[0]] if idx.size else col[0]
        if lead < 0.0:
            u[:, k] = -u[:, k]
            v[:, k] = -v[:, k]


def svd(a) -> SvdResult:
    """One-sided Jacobi SVD (economy), deterministic.

    Raises SvdConvergenceError if the sweep cap is hit before the
    off-diagonal mass drops below tolerance.
    """
    a = as_matrix(a, "svd input")
    r, c = a.shape
    transposed = r < c
    work = np.ascontiguousarray(a.T.copy() if transposed else a.copy())
    rows, cols = work.shape
    vmat = np.eye(cols)
    sweeps = _jacobi_core(work, vmat, _JACOBI_MAX_SWEEPS, _JACOBI_TOL)
    if sweeps < 0:
        raise SvdConvergenceError(
            f"jacobi svd did not converge in {_JACOBI_MAX_SWEEPS} sweeps "
            f"for a {r}x{c} matrix"
        )
    s = np.sqrt(np.sum(work * work, axis=0))
    order = np.argsort(-s, kind="stable")
    s = s[order]
    work = work[:, order]
    vmat = vmat[:, order]
    umat = np.zeros_like(work)
    tiny = np.max(s) * 1e-15 if s.size else 0.0
    dead = []
    for k in range(cols):
        if s[k] > tiny and s[k] > 0.0:
            umat[:, k] = work[:, k] / s[k]
        else:
            dead.append(k)
    if dead:
        _complete_basis(umat, dead)
    if transposed:
        umat, vmat = vmat, umat
    _fix_signs(umat, vmat)
    return SvdResult(u=umat, s=s, v=vmat)


def svd_complex(a) -> SvdResult:
    """One-sided Jacobi SVD for complex matrices: a = u @ diag(s) @ v.conj().T.

    Same sweep scheme as the real version with a phase rotation folded in.
    Intended for small blocks (channel counts), so this runs in plain numpy.
    Phase convention: the first significant component of each u column is
    real and non-negative.
    """
    m = np.ascontiguousarray(np.asarray(a, dtype=np.complex128))
    if m.ndim != 2:
        raise ValueError(f"svd input must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m.real)) or not np.all(np.isfinite(m.imag)):
        raise ValueError("svd input contains non-finite entries")
    r, c = m.shape
    transposed = r < c
    work = (m.conj().T if transposed else m).copy()
    rows, cols = work.shape
    vmat = np.eye(cols, dtype=np.complex128)
    normf2 = float(np.sum(np.abs(work) ** 2))
    converged = normf2 == 0.0
    for _ in range(_JACOBI_MAX_SWEEPS):
        if converged:
            break
        off = 0.0
        for p in range(cols - 1):
            for q in range(p + 1, cols):
                alpha = float(np.real(np.vdot(work[:, p], work[:, p])))
                beta = float(np.real(np.vdot(work[:, q], work[:, q])))
                gamma = np.vdot(work[:, p], work[:, q])
                g = abs(gamma)
                off += g * g
                if g == 0.0 or alpha == 0.0 or beta == 0.0:
                    continue
                phase = np.conj(gamma) / g
                zeta = (beta - alpha) / (2.0 * g)
                sgn = 1.0 if zeta >= 0.0 else -1.0
                t = sgn / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                cs = 1.0 / math.sqrt(1.0 + t * t)
                sn = cs * t
                # 2x2 right-rotation with the phase applied to column q
                cp = work[:, p].copy()
                cq = phase * work[:, q]
                work[:, p] = cs * cp - sn * cq
                work[:, q] = sn * cp + cs * cq
                vp = vmat[:, p].copy()
                vq = phase * vmat[:, q]
                vmat[:, p] = cs * vp - sn * vq
                vmat[:, q] = sn * vp + cs * vq
        if math.sqrt(off) <= _JACOBI_TOL * normf2:
            converged = True
    if not converged:
        raise SvdConvergenceError(
            f"jacobi svd did not converge in {_JACOBI_MAX_SWEEPS} sweeps "
            f"for a {r}x{c} complex matrix"
        )
    s = np.sqrt(np.sum(np.abs(work) ** 2, axis=0))
    order = np.argsort(-s, kind="stable")
    s = s[order]
    work = work[:, order]
    vmat = vmat[:, order]
    umat = np.zeros_like(work)
    tiny = (np.max(s) * 1e-15) if s.size else 0.0
    for k in range(cols):
        if s[k] > tiny and s[k] > 0.0:
            umat[:, k] = work[:, k] / s[k]
        else:
            # complete with a canonical vector orthogonal to the live columns
            for cand in range(rows):
                w = np.zeros(rows, dtype=np.complex128)
                w[cand] = 1.0
                w -= umat @ (umat.conj().T @ w)
                nrm = math.sqrt(float(np.real(np.vdot(w, w))))
                if nrm > 0.5:
                    umat[:, k] = w / nrm
                    break
    if transposed:
        umat, vmat = vmat, umat
    for k in range(umat.shape[1]):
        col = umat[:, k]
        idx = np.flatnonzero(np.abs(col) > 1e-12)
        lead = col[idx[0]] if idx.size else col[0]
        mag = abs(lead)
        if mag > 0.0:
            rot = np.conj(lead) / mag
            umat[:, k] = umat[:, k] * rot
            vmat[:, k] = vmat[:, k] * rot
    return SvdResult(u=umat, s=s, v=vmat)


@njit(cache=True)
def _jv_solve(cost):  # pragma: no cover - jitted
    # Shortest augmenting path assignment with dual potentials.
    # Returns (row_to_col, u, v) with u[i] + v[j] <= cost[i, j] at optimum.
    n = cost.shape[0]
    INF = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)  # p[j]: row (1-based) matched to col j
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, INF)
        used = np.zeros(n + 1, dtype=np.bool_)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = INF
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    row_to_col = np.full(n, -1, dtype=np.int64)
    for j in range(1, n + 1):
        if p[j] != 0:
            row_to_col[p[j] - 1] = j - 1
    u_out = np.empty(n)
    v_out = np.empty(n)
    for i in range(n):
        u_out[i] = u[i + 1]
        v_out[i] = v[i + 1]
    return row_to_col, u_out, v_out


@njit(cache=True)
def _kuhn(row, forbidden_col, row_ptr, col_idx, fixed_row, col_used,
          col_owner, row_match, visited):  # pragma: no cover - jitted
    # Recursive augmenting search for `row` on the tight graph, avoiding
    # fixed rows, used cols, and forbidden_col. Flips matches on success.
    for pos in range(row_ptr[row], row_ptr[row + 1]):
        j = col_idx[pos]
        if j == forbidden_col or col_used[j] or visited[j]:
            continue
        visited[j] = True
        owner = col_owner[j]
        if owner < 0 or (not fixed_row[owner] and _kuhn(
                owner, forbidden_col, row_ptr, col_idx, fixed_row,
                col_used, col_owner, row_match, visited)):
            row_match[row] = j
            col_owner[j] = row
            return True
    return False


@njit(cache=True)
def _lex_refine(cost, u, v, row_to_col, tol):  # pragma: no cover - jitted
    # Any optimal assignment lives on tight edges (reduced cost <= tol).
    # Fix rows in order to their smallest tight column that still allows a
    # perfect matching of the remaining rows; the running matching is
    # repaired by augmenting-path reroutes instead of being rebuilt.
    n = cost.shape[0]
    counts = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        for j in range(n):
            if cost[i, j] - u[i] - v[j] <= tol:
                counts[i + 1] += 1
    row_ptr = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        row_ptr[i + 1] = row_ptr[i] + counts[i + 1]
    col_idx = np.empty(row_ptr[n], dtype=np.int64)
    fill = row_ptr.copy()
    for i in range(n):
        for j in range(n):
            if cost[i, j] - u[i] - v[j] <= tol:
                col_idx[fill[i]] = j
                fill[i] += 1
    row_match = row_to_col.copy()
    col_owner = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        col_owner[row_match[i]] = i
    fixed_row = np.zeros(n, dtype=np.bool_)
    col_used = np.zeros(n, dtype=np.bool_)
    visited = np.zeros(n, dtype=np.bool_)
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        done = False
        for pos in range(row_ptr[i], row_ptr[i + 1]):
            j = col_idx[pos]
            if col_used[j]:
                continue
            if row_match[i] == j:
                done = True
            else:
                # force i -> j: evict j's owner and let it reroute
                owner = col_owner[j]
                old_j = row_match[i]
                row_match[i] = j
                col_owner[j] = i
                col_owner[old_j] = -1
                if owner >= 0:
                    row_match[owner] = -1
                    for jj in range(visited.shape[0]):
                        visited[jj] = False
                    if _kuhn(owner, j, row_ptr, col_idx, fixed_row,
                             col_used, col_owner, row_match, visited):
                        done = True
                    else:
                        # revert
                        row_match[owner] = j
                        col_owner[j] = owner
                        row_match[i] = old_j
                        col_owner[old_j] = i
                else:
                    done = True
            if done:
                fixed_row[i] = True
                col_used[j] = True
                out[i] = j
                break
        if not done:
            # should be unreachable: current matching edge is always tight
            out[i] = row_match[i]
            fixed_row[i] = True
            col_used[row_match[i]] = True
    return out


def linear_sum_assignment(cost, maximize: bool = False) -> Assignment:
    """Optimal assignment on a square cost matrix.

    Ties are broken toward the lexicographically smallest perm vector, so
    repeated runs are bit-identical. cost in the result is the sum of the
    selected entries of the matrix as passed in.
    """
    c = as_matrix(cost, "cost")
    n, ncols = c.shape
    if n != ncols:
        raise ValueError(f"cost matrix must be square, got {n}x{ncols}")
    work = -c if maximize else c
    work = np.ascontiguousarray(work)
    row_to_col, u, v = _jv_solve(work)
    tol = 1e-8 * (1.0 + float(np.max(np.abs(work))))
    perm = _lex_refine(work, u, v, row_to_col, tol)
    total = float(c[np.arange(n), perm].sum())
    return Assignment(perm=perm, cost=total)


def sinkhorn(scores, tau: float, iters: int) -> np.ndarray:
    """Doubly stochastic projection of exp(scores / tau) by alternating
    row and column normalization, computed entirely in log domain.

    Output entries are floored at 1e-30 so downstream logs are safe.
    """
    s = as_matrix(scores, "scores")
    n, m = s.shape
    if n != m:
        raise ValueError(f"scores must be square, got {n}x{m}")
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if iters < 1:
        raise ValueError(f"iters must be >= 1, got {iters}")
    y = s / tau
    for _ in range(iters):
        y = y - _logsumexp(y, axis=1)
        y = y - _logsumexp(y, axis=0)
    return np.maximum(np.exp(y), 1e-30)


def _logsumexp(y: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(y, axis=axis, keepdims=True)
    return m + np.log(np.sum(np.exp(y - m), axis=axis, keepdims=True))


def hard_project(ds) -> Assignment:
    """Round a doubly stochastic matrix to the permutation carrying the most
    mass (assignment on -ds); ties fall to the lexicographic rule."""
    d = as_matrix(ds, "ds")
    if d.shape[0] != d.shape[1]:
        raise ValueError(f"ds must be square, got {d.shape[0]}x{d.shape[1]}")
    if np.any(d < 0):
        raise ValueError("ds must be non-negative")
    return linear_sum_assignment(d, maximize=True)
