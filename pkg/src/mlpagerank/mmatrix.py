"""Triplet representations of M-matrices, GTH elimination, and partial inverses.

An M-matrix M never enters these routines directly.  It is passed as a
*triplet*: the nonnegative off-diagonal magnitudes N (N_ij = -M_ij, zero
diagonal) together with a nonnegative sum vector, either row sums (M 1 = sums)
or column sums (1^T M = sums^T).  The implied diagonal is reconstructed from
nonnegative additions only, which is what makes the factorization accurate
componentwise regardless of how close M is to singularity.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from itertools import product

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.csgraph

ROW = "row"
COL = "col"


class ReducibleMatrixError(ValueError):
    """Off-diagonal sparsity pattern is not strongly connected."""


class SingularPivotError(ArithmeticError):
    """A pivot vanished during elimination."""


def _assertions_enabled():
    return os.environ.get("GTH_ASSERT_NONNEG", "0") == "1"


@dataclass(frozen=True)
class TripletMMatrix:
    """(offdiag, sums, orientation) encoding of an M-matrix.

    offdiag is the nonnegative matrix of negated off-diagonal entries with a
    zero diagonal; sums holds row sums (orientation=ROW) or column sums
    (orientation=COL).  The diagonal M_ii = sums_i + sum of the other entries
    in row/column i is never materialized by subtraction.
    """

    offdiag: np.ndarray
    sums: np.ndarray
    orientation: str = ROW

    def __post_init__(self):
        off = np.asarray(self.offdiag, dtype=np.float64)
        sums = np.asarray(self.sums, dtype=np.float64)
        n = off.shape[0]
        if off.shape != (n, n):
            raise ValueError("offdiag must be square")
        if sums.shape != (n,):
            raise ValueError("sums length must match offdiag")
        if (np.diag(off) != 0.0).any():
            raise ValueError("offdiag must have a zero diagonal")
        if (off < 0.0).any() or (sums < 0.0).any():
            raise ValueError("offdiag and sums must be nonnegative")
        if self.orientation not in (ROW, COL):
            raise ValueError(f"unknown orientation {self.orientation!r}")
        object.__setattr__(self, "offdiag", off)
        object.__setattr__(self, "sums", sums)

    @property
    def n(self):
        return self.offdiag.shape[0]

    def materialize(self):
        """Dense M with the implied diagonal (for tests and diagnostics)."""
        if self.orientation == ROW:
            diag = self.sums + self.offdiag.sum(axis=1)
        else:
            diag = self.sums + self.offdiag.sum(axis=0)
        return np.diag(diag) - self.offdiag

    def transpose(self):
        flipped = ROW if self.orientation == COL else COL
        return TripletMMatrix(self.offdiag.T.copy(), self.sums.copy(), flipped)


def check_irreducible(offdiag):
    """Raise ReducibleMatrixError naming an unreachable index set."""
    n = offdiag.shape[0]
    if n == 1:
        return
    pattern = scipy.sparse.csr_matrix(offdiag != 0.0)
    ncomp, labels = scipy.sparse.csgraph.connected_components(
        pattern, directed=True, connection="strong"
    )
    if ncomp > 1:
        stranded = [int(i) + 1 for i in np.nonzero(labels == labels[0])[0]]
        raise ReducibleMatrixError(
            f"matrix is reducible; indices {stranded} form a closed component"
        )


@dataclass(frozen=True)
class GTHFactors:
    """LU factors from GTH elimination: unit lower L, upper M-matrix factor U."""

    lower: np.ndarray
    upper: np.ndarray

    @property
    def pivots(self):
        return np.diag(self.upper)

    @property
    def n(self):
        return self.lower.shape[0]


def gth_factor(T, check=True):
    """GTH LU factorization of the triplet matrix, natural pivot order.

    At step k the pivot is rebuilt from the running sums and the remaining
    off-diagonal entries; all updates add nonnegative quantities.  Raises
    SingularPivotError if a pivot vanishes and, when ``check`` is set,
    ReducibleMatrixError on a reducible sparsity pattern.
    """
    if check:
        check_irreducible(T.offdiag)
    n = T.n
    N = T.offdiag.copy()
    sig = T.sums.copy()
    by_row = T.orientation == ROW
    assert_on = _assertions_enabled()
    L = np.eye(n)
    U = np.zeros((n, n))
    for k in range(n):
        if by_row:
            d = sig[k] + N[k, k + 1 :].sum()
        else:
            d = sig[k] + N[k + 1 :, k].sum()
        if assert_on:
            assert d >= 0.0 and (N >= 0.0).all() and (sig >= 0.0).all(), (
                "GTH nonnegativity violated"
            )
        if d <= 0.0:
            raise SingularPivotError(f"zero pivot at step {k + 1}")
        U[k, k] = d
        U[k, k + 1 :] = -N[k, k + 1 :]
        L[k + 1 :, k] = -N[k + 1 :, k] / d
        if k < n - 1:
            N[k + 1 :, k + 1 :] += np.outer(N[k + 1 :, k], N[k, k + 1 :]) / d
            np.fill_diagonal(N[k + 1 :, k + 1 :], 0.0)
            if by_row:
                sig[k + 1 :] += N[k + 1 :, k] * (sig[k] / d)
            else:
                sig[k + 1 :] += N[k, k + 1 :] * (sig[k] / d)
    return GTHFactors(lower=L, upper=U)


def gth_solve(F, b):
    """Solve LUx = b by substitution.

    The strict parts of L and U are nonpositive, so for b >= 0 both sweeps
    only add nonnegative terms (plus one division by the positive pivot).
    Accepts a vector or a matrix of stacked right-hand sides.
    """
    b = np.asarray(b, dtype=np.float64)
    squeeze = b.ndim == 1
    y = np.array(b, ndmin=2, copy=True).T if squeeze else b.copy()
    n = F.n
    if y.shape[0] != n:
        raise ValueError(f"rhs has {y.shape[0]} rows, expected {n}")
    G = -F.lower  # nonnegative below the diagonal
    for k in range(1, n):
        y[k] += G[k, :k] @ y[:k]
    piv = F.pivots
    if (piv == 0.0).any():
        raise SingularPivotError("zero pivot in factors")
    W = -F.upper  # nonnegative above the diagonal
    x = np.empty_like(y)
    for k in range(n - 1, -1, -1):
        x[k] = (y[k] + W[k, k + 1 :] @ x[k + 1 :]) / piv[k]
    return x[:, 0] if squeeze else x


def _null_elimination(N):
    """Elimination multipliers and pivots for a zero-sum ROW triplet.

    Returns (multipliers m[i, k] = N_ik^(k) / d_k for i > k, pivots d_1..d_{n-1}).
    """
    n = N.shape[0]
    N = N.copy()
    mult = np.zeros((n, n))
    piv = np.empty(n - 1)
    for k in range(n - 1):
        d = N[k, k + 1 :].sum()
        if d <= 0.0:
            raise SingularPivotError(f"zero pivot at step {k + 1} (reducible input?)")
        piv[k] = d
        mult[k + 1 :, k] = N[k + 1 :, k] / d
        N[k + 1 :, k + 1 :] += np.outer(N[k + 1 :, k], N[k, k + 1 :]) / d
        np.fill_diagonal(N[k + 1 :, k + 1 :], 0.0)
    return mult, piv


def null_vector(T, check=True):
    """Positive t with t^T L1 = 0 for a zero-row-sum triplet (ROW, sums = 0).

    GTH elimination followed by the subtraction-free back-recursion
    t_n = 1, t_k = sum_{i>k} t_i m_ik; normalized so t[n-1] = 1.
    """
    if T.orientation != ROW:
        raise ValueError("null_vector expects a ROW-oriented triplet")
    if (T.sums != 0.0).any():
        raise ValueError("null_vector expects sums identically zero")
    if check:
        check_irreducible(T.offdiag)
    mult, _ = _null_elimination(T.offdiag)
    n = T.n
    t = np.zeros(n)
    t[n - 1] = 1.0
    for k in range(n - 2, -1, -1):
        t[k] = t[k + 1 :] @ mult[k + 1 :, k]
    return t


@dataclass(frozen=True)
class PartialInverse:
    """Decomposition M^{-1} = 1 z^T + S.

    The rank-1 part carries the blow-up as M approaches singularity; S stays
    bounded and acts like M^{-1} on zero-sum row vectors.
    """

    z: np.ndarray
    S: np.ndarray

    @property
    def rank_one_part(self):
        return np.ones((len(self.z), 1)) @ self.z[None, :]

    def inverse(self):
        return self.rank_one_part + self.S


def partial_inverse(T, check=True):
    """Tree-split partial inverse of a ROW triplet with sums w >= 0, w != 0.

    z is assembled subtraction-free: the null profile t of L1 = M - diag(w)
    scaled by det(L1 leading minor) / det(M), both read off GTH pivots.  S is
    then M^{-1} - 1 z^T in working precision, which is accurate away from
    singularity (S only feeds diagnostics).
    """
    if T.orientation != ROW:
        raise ValueError("partial_inverse expects a ROW-oriented triplet")
    if (T.sums == 0.0).all():
        raise ValueError("sums identically zero: M is singular")
    if check:
        check_irreducible(T.offdiag)
    n = T.n
    if n == 1:
        z = np.array([1.0 / T.sums[0]])
        return PartialInverse(z=z, S=np.zeros((1, 1)))
    mult, piv_l1 = _null_elimination(T.offdiag)
    t = np.zeros(n)
    t[n - 1] = 1.0
    for k in range(n - 2, -1, -1):
        t[k] = t[k + 1 :] @ mult[k + 1 :, k]
    F = gth_factor(T, check=False)
    piv_m = F.pivots
    scale = 1.0
    for k in range(n - 1):
        scale *= piv_l1[k] / piv_m[k]
    scale /= piv_m[n - 1]
    z = t * scale
    minv = gth_solve(F, np.eye(n))
    return PartialInverse(z=z, S=minv - z[None, :])


# ---------------------------------------------------------------------------
# Spanning-tree oracles (all-minors matrix tree theorem), for n <= 6.
# ---------------------------------------------------------------------------

TREE_ORACLE_LIMIT = 6


def triplet_weights(T):
    """Weight table W[i-1][j] = w_{i,j} (j = 0..n) from a ROW triplet."""
    if T.orientation != ROW:
        raise ValueError("tree oracles expect ROW orientation")
    n = T.n
    W = np.zeros((n, n + 1))
    W[:, 0] = T.sums
    W[:, 1:] = T.offdiag
    return W


def _forest_sum(W, n, absent, roots, reach_from=None):
    """Sum of weight products over parent maps of {1..n}\\absent.

    Each remaining node picks one outgoing edge; the map must be acyclic with
    every path ending in `roots`, and node `reach_from` (if given) must reach
    the designated root.  Works for float or object (symbolic) weights.
    """
    movers = [i for i in range(1, n + 1) if i not in absent]
    choices = [[j for j in range(0, n + 1) if j != i] for i in movers]
    total = None
    for combo in product(*choices):
        parent = dict(zip(movers, combo))
        ok = True
        for start in movers:
            seen = set()
            cur = start
            while cur in parent:
                if cur in seen:
                    ok = False
                    break
                seen.add(cur)
                cur = parent[cur]
            if not ok or cur not in roots:
                ok = False
                break
        if ok and reach_from is not None:
            src, dst = reach_from
            if src != dst:
                cur = src
                while cur in parent and cur != dst:
                    cur = parent[cur]
                ok = cur == dst
        if not ok:
            continue
        term = None
        for i in movers:
            w = W[i - 1][parent[i]]
            term = w if term is None else term * w
        if term is None:  # n == 0 side of an empty product
            term = 1
        total = term if total is None else total + term
    return 0 if total is None else total


def _check_oracle_size(n):
    if n > TREE_ORACLE_LIMIT:
        raise ValueError(f"tree oracle limited to n <= {TREE_ORACLE_LIMIT}, got {n}")


def tree_oracle_det(W):
    """det M as the sum over spanning trees pointing towards node 0."""
    W = list(W)
    n = len(W)
    _check_oracle_size(n)
    return _forest_sum(W, n, absent=set(), roots={0})


def tree_oracle_adj(W):
    """adj M entrywise: (k,l) sums over the two-tree families of the theorem."""
    W = list(W)
    n = len(W)
    _check_oracle_size(n)
    adj = np.empty((n, n), dtype=object)
    for k in range(1, n + 1):
        for l in range(1, n + 1):
            adj[k - 1, l - 1] = _forest_sum(
                W, n, absent={l}, roots={0, l}, reach_from=(k, l)
            )
    return adj


def tree_oracle_rs(W):
    """PartialInverse from the exact tree-family split.

    The rank-1 numerators are the terms whose tree towards node 0 is trivial,
    i.e. every node reaches l; the remainder forms S.
    """
    W = list(W)
    n = len(W)
    _check_oracle_size(n)
    det = tree_oracle_det(W)
    z = np.array(
        [
            _forest_sum(W, n, absent={l}, roots={l})
            for l in range(1, n + 1)
        ],
        dtype=np.float64,
    )
    z /= det
    adj = tree_oracle_adj(W).astype(np.float64)
    S = adj / det - np.ones((n, 1)) @ z[None, :]
    return PartialInverse(z=z, S=S)


# ---------------------------------------------------------------------------
# Componentwise inverse stability check (Theorem-style (2n-1)eps bound).
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InverseStabilityReport:
    epsilon: float
    d_offdiag: float
    d_sums: float
    d_inverse: float
    bound: float
    within_bound: bool
    pattern_mismatch: bool


def _cw_max(new, ref):
    """max |new - ref| / |ref| with 0/0 = 0 and x/0 = inf."""
    new = np.asarray(new, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    out = np.zeros(ref.shape)
    nz = ref != 0.0
    out[nz] = np.abs(new[nz] - ref[nz]) / np.abs(ref[nz])
    bad = (~nz) & (new != 0.0)
    if bad.any():
        return np.inf
    return float(out.max()) if out.size else 0.0


def inverse_cw_bound_check(T, T_tilde, epsilon):
    """Compare d(M~^-1, M^-1) with the componentwise bound (2n-1) epsilon."""
    if T.orientation != T_tilde.orientation or T.n != T_tilde.n:
        raise ValueError("triplets must share shape and orientation")
    d_off = _cw_max(T_tilde.offdiag, T.offdiag)
    d_sums = _cw_max(T_tilde.sums, T.sums)
    pattern_mismatch = np.isinf(d_off) or np.isinf(d_sums)
    n = T.n
    eye = np.eye(n)
    minv = gth_solve(gth_factor(T), eye)
    minv_t = gth_solve(gth_factor(T_tilde), eye)
    d_inv = _cw_max(minv_t, minv)
    bound = (2 * n - 1) * float(epsilon)
    return InverseStabilityReport(
        epsilon=float(epsilon),
        d_offdiag=d_off,
        d_sums=d_sums,
        d_inverse=d_inv,
        bound=bound,
        within_bound=bool(d_inv <= bound * (1.0 + 1e-8) or np.isinf(bound)),
        pattern_mismatch=bool(pattern_mismatch),
    )


def plain_lu_solve(A, b):
    """Partial-pivoting dense solve used by the non-GTH Newton baseline."""
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    try:
        lu, piv = scipy.linalg.lu_factor(A)
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise SingularPivotError(str(exc)) from exc
    if (np.diag(lu) == 0.0).any():
        raise SingularPivotError("exactly singular matrix in plain LU")
    return scipy.linalg.lu_solve((lu, piv), b)
