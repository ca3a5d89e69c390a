"""Blockwise column-pivoted QR of the transposed eigenvector matrix.

The pivot unit is a block of d consecutive columns, so the permutation has
Kronecker structure (block permutation times identity) and the relative
order of columns inside each block survives. Exactly K pivot rounds run:
round t picks the block column with the largest residual Frobenius norm
(recomputed from scratch each round), swaps it into position t, and zeroes
its subdiagonal with d Householder reflections.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteError, ValidationError, ZeroVectorError
from .linalg import householder_reflector


@dataclass(frozen=True)
class BlockCpqrFactors:
    """Q, R, and the block permutation of a blockwise CPQR.

    r is stored with the permutation undone (block column j corresponds to
    node j), so q @ r reconstructs the input directly and downstream block
    reads need no index translation. perm lists, per pivot position, the
    original block-column index placed there; pivots is its leading K
    entries. rank_deficient flags rounds where a residual column vanished
    and an identity reflector was substituted.
    """

    q: np.ndarray
    r: np.ndarray
    pivots: np.ndarray
    perm: np.ndarray
    d: int
    rank_deficient: bool = False

    @property
    def block_rows(self):
        return self.q.shape[0] // self.d

    @property
    def block_cols(self):
        return self.r.shape[1] // self.d


def apply_block_permutation(m, perm, inverse=False):
    """Permute a matrix by blocks of d columns, d inferred from widths.

    Forward: block column j of the output is block column perm[j] of the
    input. inverse=True applies the opposite direction, so applying one
    after the other is the identity.

    Args:
        m: array whose column count is a multiple of len(perm).
        perm: permutation of 0..n-1 as an integer array.
        inverse: apply the inverse permutation instead.

    Returns:
        Permuted copy of m.

    Raises:
        ValidationError: perm is not a bijection on 0..n-1, or the column
            count of m is not divisible by len(perm).
    """
    m = np.asarray(m)
    perm = np.asarray(perm, dtype=np.int64)
    n = perm.size
    if n < 1 or m.ndim != 2 or m.shape[1] % n != 0:
        raise ValidationError("column count must be a positive multiple of len(perm)")
    if not np.array_equal(np.sort(perm), np.arange(n)):
        raise ValidationError("perm must be a bijection on 0..n-1")
    if inverse:
        inv = np.empty(n, dtype=np.int64)
        inv[perm] = np.arange(n)
        perm = inv
    d = m.shape[1] // n
    cols = (perm[:, None] * d + np.arange(d)[None, :]).ravel()
    return m[:, cols].copy()


def blockwise_cpqr(x, d):
    """Factor x = q @ r with greedy blockwise column pivoting.

    Args:
        x: (K*d, n*d) array with n >= K, entries finite.
        d: block dimension.

    Returns:
        BlockCpqrFactors. q is (K*d, K*d) orthogonal; r is (K*d, n*d) with
        the permutation undone; applying factors.perm to r's block columns
        recovers the working form whose leading K*d square is upper
        triangular.

    Raises:
        NonFiniteError: x contains NaN or Inf.
        ValidationError: shapes incompatible with the block dimension.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError("x must be a 2-d array")
    if d < 1 or x.shape[0] % d or x.shape[1] % d:
        raise ValidationError("both dimensions of x must be multiples of d")
    if not np.isfinite(x).all():
        raise NonFiniteError("x contains NaN or Inf entries")
    big_k = x.shape[0] // d
    n = x.shape[1] // d
    if n < big_k:
        raise ValidationError("x must have at least as many block columns as block rows")

    w = x.copy()
    q = np.eye(big_k * d)
    perm = np.arange(n, dtype=np.int64)
    rank_deficient = False

    for t in range(big_k):
        lo = t * d
        # Residual Frobenius norm of every unfixed block column, taken over
        # the rows at and below the current diagonal block.
        seg = w[lo:, lo:]
        col_sq = (seg * seg).sum(axis=0)
        rho_sq = col_sq.reshape(n - t, d).sum(axis=1)
        j_star = t + int(np.argmax(rho_sq))
        if j_star != t:
            lhs = slice(lo, lo + d)
            rhs = slice(j_star * d, (j_star + 1) * d)
            w[:, lhs], w[:, rhs] = w[:, rhs].copy(), w[:, lhs].copy()
            perm[[t, j_star]] = perm[[j_star, t]]
        for col in range(lo, lo + d):
            target = w[col:, col].copy()
            try:
                refl = householder_reflector(target)
            except ZeroVectorError:
                rank_deficient = True
                continue
            w[col:, col:] = refl @ w[col:, col:]
            q[:, col:] = q[:, col:] @ refl

    inv = np.empty(n, dtype=np.int64)
    inv[perm] = np.arange(n)
    r = apply_block_permutation(w, inv)
    return BlockCpqrFactors(
        q=q,
        r=r,
        pivots=perm[:big_k].copy(),
        perm=perm,
        d=d,
        rank_deficient=rank_deficient,
    )
