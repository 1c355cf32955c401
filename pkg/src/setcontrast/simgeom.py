"""Similarity geometry: pairwise similarity triples, a symmetric
eigensolver (cyclic Jacobi), and sorted spectrum products.

The eigensolver is deliberately self-contained so its gradient rule and
tie behavior stay under our control; numpy is used for storage and
vector arithmetic only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from . import tensor as T
from .errors import (
    ContractError,
    ConvergenceError,
    DegenerateInputError,
    ShapeError,
)

Array = np.ndarray

# below this gap neighbouring eigenvalues count as degenerate and the
# gradient rule degrades to a subgradient choice
DEGENERATE_EIGENGAP = 1e-8


@dataclass(frozen=True)
class SimilarityTriple:
    """Inter-set matrix S plus the two intra-set matrices S_A, S_B.

    ``mode`` is "euclidean" (entries are distances, zero diagonals on
    S_A/S_B) or "cosine" (entries are cosine similarities, unit
    diagonals). All three may be tape-tracked Tensors.
    """

    s: T.Tensor
    s_a: T.Tensor
    s_b: T.Tensor
    mode: str


@dataclass(frozen=True)
class EigenDecomposition:
    values: Array   # (n,), sorted descending
    vectors: Array  # (n, n), columns matched to values


def _as_matrix(m) -> Array:
    a = m.data if isinstance(m, T.Tensor) else np.asarray(m, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {a.shape}")
    return a


def _off_norm(a: Array) -> float:
    # sum only the off-diagonal squares; total-minus-diagonal cancels
    # catastrophically once the matrix is nearly diagonal
    off = np.array(a)
    np.fill_diagonal(off, 0.0)
    return float(np.linalg.norm(off))


def sym_eigen(m, max_sweeps: int = 50) -> EigenDecomposition:
    """Full eigendecomposition of a symmetric matrix via cyclic Jacobi
    rotations.

    Input asymmetry up to 1e-9 (relative) is tolerated and symmetrized
    away; sweeps run until the off-diagonal Frobenius norm drops below
    1e-12 * ||M||_F or the sweep budget is exhausted.
    """
    a = _as_matrix(m)
    n = a.shape[0]
    scale = float(np.linalg.norm(a))
    if float(np.abs(a - a.T).max(initial=0.0)) > 1e-9 * max(1.0, scale):
        raise ContractError("sym_eigen: matrix is not symmetric within 1e-9")
    a = (a + a.T) / 2.0
    if n == 1:
        return EigenDecomposition(np.array([a[0, 0]]), np.eye(1))

    target = 1e-12 * scale
    # entries below this can all be left in place without pushing the
    # off-diagonal norm above target
    skip = target / np.sqrt(n * (n - 1))
    # stack A with V^T so each rotation is two column and two row updates:
    # A <- J^T A J and V <- V J, the latter as V^T <- J^T V^T
    h = np.hstack([a, np.eye(n)])
    sweeps = 0
    while _off_norm(h[:, :n]) > target:
        if sweeps >= max_sweeps:
            raise ConvergenceError(
                f"sym_eigen: off-diagonal norm {_off_norm(h[:, :n]):.3e} above "
                f"{target:.3e} after {max_sweeps} sweeps"
            )
        for p in range(n - 1):
            hp = h[p]
            for q in range(p + 1, n):
                apq = hp[q]
                if abs(apq) <= skip and abs(h[q, p]) <= skip:
                    continue
                theta = (h[q, q] - hp[p]) / (2.0 * apq)
                sign = 1.0 if theta >= 0.0 else -1.0
                t = sign / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                cp = h[:, p]
                cq = h[:, q]
                new_p = c * cp - s * cq
                new_q = s * cp + c * cq
                h[:, p] = new_p
                h[:, q] = new_q
                hq = h[q]
                new_rp = c * hp - s * hq
                new_rq = s * hp + c * hq
                h[p] = new_rp
                h[q] = new_rq
                hp = h[p]
                hp[q] = 0.0
                h[q, p] = 0.0
        sweeps += 1
    vals = np.diag(h[:, :n]).copy()
    order = np.argsort(-vals, kind="stable")
    return EigenDecomposition(vals[order], h[:, n:].T[:, order].copy())


def min_eigengap(values: Array) -> float:
    """Smallest gap between neighbouring sorted eigenvalues (inf for n=1)."""
    vals = np.sort(np.asarray(values, dtype=np.float64))
    if vals.size < 2:
        return float("inf")
    return float(np.min(np.diff(vals)))


def eigenvalue_gradient(decomp: EigenDecomposition, upstream) -> Array:
    """Pull an upstream gradient on the sorted eigenvalues back to the
    matrix: d lambda_i / dM = u_i u_i^T. For degenerate spectra this is
    one valid subgradient; callers detect that case via min_eigengap."""
    up = np.asarray(upstream, dtype=np.float64).reshape(-1)
    u = decomp.vectors
    if up.shape[0] != u.shape[1]:
        raise ShapeError("eigenvalue_gradient: upstream length mismatch")
    g = (u * up[None, :]) @ u.T
    return (g + g.T) / 2.0


def eigvals(m) -> T.Tensor:
    """Differentiable sorted-descending eigenvalues, shape (n, 1).

    Flags "degenerate-eigenvalues" on the active tape when neighbouring
    eigenvalues are closer than the degeneracy gap.
    """
    mt = T.as_tensor(m)
    dec = sym_eigen(mt.data)
    tape = T.active_tape(mt)
    if tape is not None and min_eigengap(dec.values) < DEGENERATE_EIGENGAP:
        tape.flags.add("degenerate-eigenvalues")

    def vjp(g):
        return (eigenvalue_gradient(dec, g[:, 0]),)

    return T.custom_op((mt,), dec.values.reshape(-1, 1), vjp)


def eig_dot(values_a, values_b, sense: str) -> float:
    """Extremal sum of eigenvalue products over pairings.

    "min": descending against ascending; "max": descending against
    descending (classical rearrangement pairings).
    """
    la = np.asarray(values_a, dtype=np.float64).reshape(-1)
    lb = np.asarray(values_b, dtype=np.float64).reshape(-1)
    if la.shape != lb.shape:
        raise ShapeError(f"eig_dot: lengths differ, {la.shape} vs {lb.shape}")
    if sense not in ("min", "max"):
        raise ContractError(f"eig_dot: sense must be 'min' or 'max', got {sense!r}")
    la = np.sort(la)[::-1]
    lb = np.sort(lb)
    if sense == "max":
        lb = lb[::-1]
    return float(la @ lb)


def pairwise_distances(z_a, z_b, mode: str = "euclidean") -> SimilarityTriple:
    """Build the (S, S_A, S_B) triple from two embedding sets.

    Euclidean mode stores unsquared distances from explicit difference
    norms; cosine mode row-normalizes and stores inner products. Both
    keep the tape alive when the embeddings are tracked.
    """
    za, zb = T.as_tensor(z_a), T.as_tensor(z_b)
    if za.shape[1] != zb.shape[1]:
        raise ShapeError(
            f"pairwise_distances: feature dims differ, {za.shape} vs {zb.shape}"
        )
    if mode == "euclidean":
        s = T.pairwise_dist(za, zb)
        s_a = T.pairwise_dist(za, za)
        s_b = T.pairwise_dist(zb, zb)
    elif mode == "cosine":
        if np.any((za.data * za.data).sum(axis=1) == 0.0) or np.any(
            (zb.data * zb.data).sum(axis=1) == 0.0
        ):
            raise DegenerateInputError("cosine similarity undefined for zero rows")
        na = T.row_l2_normalize(za)
        nb = T.row_l2_normalize(zb)
        s = T.matmul(na, T.transpose(nb))
        s_a = T.matmul(na, T.transpose(na))
        s_b = T.matmul(nb, T.transpose(nb))
    else:
        raise ContractError(f"unknown similarity mode {mode!r}")
    return SimilarityTriple(s=s, s_a=s_a, s_b=s_b, mode=mode)
