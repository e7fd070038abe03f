"""Compensated-pair (double-double) arithmetic and reference solutions.

A scalar is an unevaluated sum hi + lo of two binary64 values with
|lo| <= ulp(hi)/2, giving roughly 32 significant decimal digits.  The kernels
below are the classical error-free transformations (Dekker split, two-sum,
two-product); vector versions operate on numpy arrays elementwise.

This module stands in for variable-precision arithmetic: it provides the
extended-precision GTH elimination and Newton reference solver that the rest
of the package treats as ground truth (residuals around 1e-28, far beyond
binary64).
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal, getcontext

import numpy as np

from .mmatrix import COL, ROW, SingularPivotError
from . import tensor as tz

MINIMAL = "minimal"
STOCHASTIC = "stochastic"

_SPLITTER = 134217729.0  # 2^27 + 1


def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _quick_two_sum(a, b):
    s = a + b
    return s, b - (s - a)


def _split(a):
    c = _SPLITTER * a
    big = c - a
    hi = c - big
    return hi, a - hi


def _two_prod(a, b):
    p = a * b
    ahi, alo = _split(a)
    bhi, blo = _split(b)
    return p, ((ahi * bhi - p) + ahi * blo + alo * bhi) + alo * blo


def _dd_add(h1, l1, h2, l2):
    s, e = _two_sum(h1, h2)
    t, f = _two_sum(l1, l2)
    e = e + t
    s, e = _quick_two_sum(s, e)
    e = e + f
    return _quick_two_sum(s, e)


def _dd_mul(h1, l1, h2, l2):
    p, e = _two_prod(h1, h2)
    e = e + (h1 * l2 + l1 * h2)
    return _quick_two_sum(p, e)


def _dd_div(h1, l1, h2, l2):
    q1 = h1 / h2
    rh, rl = _dd_add(h1, l1, *_dd_mul(q1, 0.0 * q1, -h2, -l2))
    q2 = rh / h2
    rh, rl = _dd_add(rh, rl, *_dd_mul(q2, 0.0 * q2, -h2, -l2))
    q3 = rh / h2
    qh, ql = _quick_two_sum(q1, q2)
    return _dd_add(qh, ql, q3, 0.0 * q3)


class DD:
    """Array of compensated pairs; shape follows the hi component."""

    __slots__ = ("hi", "lo")

    def __init__(self, hi, lo=None):
        self.hi = np.asarray(hi, dtype=np.float64)
        self.lo = (
            np.zeros_like(self.hi)
            if lo is None
            else np.asarray(lo, dtype=np.float64)
        )

    @classmethod
    def zeros(cls, shape):
        return cls(np.zeros(shape))

    @staticmethod
    def _coerce(other):
        if isinstance(other, DD):
            return other
        return DD(np.asarray(other, dtype=np.float64))

    @property
    def shape(self):
        return self.hi.shape

    def __len__(self):
        return len(self.hi)

    def copy(self):
        return DD(self.hi.copy(), self.lo.copy())

    def __getitem__(self, idx):
        return DD(self.hi[idx], self.lo[idx])

    def __setitem__(self, idx, value):
        value = self._coerce(value)
        self.hi[idx] = value.hi
        self.lo[idx] = value.lo

    def __add__(self, other):
        other = self._coerce(other)
        return DD(*_dd_add(self.hi, self.lo, other.hi, other.lo))

    __radd__ = __add__

    def __neg__(self):
        return DD(-self.hi, -self.lo)

    def __sub__(self, other):
        other = self._coerce(other)
        return DD(*_dd_add(self.hi, self.lo, -other.hi, -other.lo))

    def __rsub__(self, other):
        return self._coerce(other).__sub__(self)

    def __mul__(self, other):
        other = self._coerce(other)
        return DD(*_dd_mul(self.hi, self.lo, other.hi, other.lo))

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        return DD(*_dd_div(self.hi, self.lo, other.hi, other.lo))

    def __rtruediv__(self, other):
        return self._coerce(other).__truediv__(self)

    def abs(self):
        neg = (self.hi < 0.0) | ((self.hi == 0.0) & (self.lo < 0.0))
        sign = np.where(neg, -1.0, 1.0)
        return DD(self.hi * sign, self.lo * sign)

    def to_float(self):
        return self.hi + self.lo

    def max_abs(self):
        a = self.abs()
        return float(np.max(a.hi + a.lo)) if a.hi.size else 0.0

    def __repr__(self):
        return f"DD(hi={self.hi!r}, lo={self.lo!r})"


def dd_sum(v):
    """Pairwise-fold sum of a DD vector (deterministic reduction order)."""
    hi, lo = v.hi.copy(), v.lo.copy()
    m = len(hi)
    if m == 0:
        return DD(0.0)
    while m > 1:
        half = m // 2
        h, l = _dd_add(hi[:half], lo[:half], hi[half : 2 * half], lo[half : 2 * half])
        if m % 2:
            h0, l0 = _dd_add(h[:1], l[:1], hi[m - 1 : m], lo[m - 1 : m])
            h[:1], l[:1] = h0, l0
        hi, lo = h, l
        m = half
    return DD(hi[0], lo[0])


def dd_dot(a, b):
    return dd_sum(a * b)


# ---------------------------------------------------------------------------
# Scalar surface
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class XScalar:
    """One compensated pair; arithmetic keeps ~2^-104 relative error per op."""

    hi: float
    lo: float = 0.0

    @classmethod
    def from_float(cls, value):
        return cls(float(value), 0.0)

    def to_float(self):
        return self.hi + self.lo

    def __add__(self, other):
        return xadd(self, _as_x(other))

    def __sub__(self, other):
        other = _as_x(other)
        return xadd(self, XScalar(-other.hi, -other.lo))

    def __mul__(self, other):
        return xmul(self, _as_x(other))

    def __truediv__(self, other):
        return xdiv(self, _as_x(other))


def _as_x(value):
    return value if isinstance(value, XScalar) else XScalar.from_float(value)


def xadd(a, b):
    h, l = _dd_add(a.hi, a.lo, b.hi, b.lo)
    return XScalar(float(h), float(l))


def xmul(a, b):
    h, l = _dd_mul(a.hi, a.lo, b.hi, b.lo)
    return XScalar(float(h), float(l))


def xdiv(a, b):
    h, l = _dd_div(np.float64(a.hi), np.float64(a.lo), np.float64(b.hi), np.float64(b.lo))
    return XScalar(float(h), float(l))


def dd_to_decimal_strings(v, digits=34):
    """Exact-decimal rendering of a DD vector, rounded to `digits` digits."""
    ctx_prec = getcontext().prec
    getcontext().prec = digits
    try:
        out = [str(+(Decimal(float(h)) + Decimal(float(l)))) for h, l in zip(v.hi, v.lo)]
    finally:
        getcontext().prec = ctx_prec
    return out


# ---------------------------------------------------------------------------
# Extended-precision GTH elimination (same recipe as mmatrix.gth_factor)
# ---------------------------------------------------------------------------


class DDGTHFactors:
    def __init__(self, lower, upper):
        self.lower = lower
        self.upper = upper

    @property
    def n(self):
        return self.lower.shape[0]


def dd_gth_factor(offdiag, sums, orientation=ROW):
    """GTH factorization carried out entirely in pair arithmetic."""
    N = offdiag.copy() if isinstance(offdiag, DD) else DD(np.array(offdiag, dtype=np.float64))
    sig = sums.copy() if isinstance(sums, DD) else DD(np.array(sums, dtype=np.float64))
    n = N.shape[0]
    by_row = orientation == ROW
    L = DD(np.eye(n))
    U = DD.zeros((n, n))
    for k in range(n):
        tail = N[k, k + 1 :] if by_row else N[k + 1 :, k]
        d = dd_sum(tail) + sig[k]
        if d.to_float() <= 0.0:
            raise SingularPivotError(f"zero pivot at step {k + 1}")
        U[k, k] = d
        U[k, k + 1 :] = -N[k, k + 1 :]
        L[k + 1 :, k] = -(N[k + 1 :, k] / d)
        if k < n - 1:
            col = N[k + 1 :, k] / d
            upd = DD(col.hi[:, None], col.lo[:, None]) * DD(
                N.hi[k, k + 1 :][None, :], N.lo[k, k + 1 :][None, :]
            )
            N[k + 1 :, k + 1 :] = N[k + 1 :, k + 1 :] + upd
            rng = np.arange(k + 1, n)
            N.hi[rng, rng] = 0.0
            N.lo[rng, rng] = 0.0
            ratio = sig[k] / d
            if by_row:
                sig[k + 1 :] = sig[k + 1 :] + N[k + 1 :, k] * ratio
            else:
                sig[k + 1 :] = sig[k + 1 :] + N[k, k + 1 :] * ratio
    return DDGTHFactors(L, U)


def dd_gth_solve(F, b):
    """Forward/back substitution in pair arithmetic; b may be DD or float."""
    b = b if isinstance(b, DD) else DD(np.array(b, dtype=np.float64))
    n = F.n
    y = b.copy()
    G = -F.lower
    for k in range(1, n):
        y[k] = y[k] + dd_dot(G[k, :k], y[:k])
    W = -F.upper
    x = DD.zeros(n)
    for k in range(n - 1, -1, -1):
        acc = y[k]
        if k < n - 1:
            acc = acc + dd_dot(W[k, k + 1 :], x[k + 1 :])
        x[k] = acc / F.upper[k, k]
    return x


def dd_gth_solve_transpose(F, b):
    """Solve M^T x = b from the factors of M (U^T forward, L^T back)."""
    b = b if isinstance(b, DD) else DD(np.array(b, dtype=np.float64))
    n = F.n
    W = -F.upper
    y = DD.zeros(n)
    for k in range(n):
        acc = b[k]
        if k > 0:
            acc = acc + dd_dot(W[:k, k], y[:k])
        y[k] = acc / F.upper[k, k]
    G = -F.lower
    x = DD.zeros(n)
    for k in range(n - 1, -1, -1):
        acc = y[k]
        if k < n - 1:
            acc = acc + dd_dot(G[k + 1 :, k], x[k + 1 :])
        x[k] = acc
    return x


def dd_lu_solve(A, b):
    """Dense partial-pivoting LU solve in pair arithmetic."""
    A = A.copy() if isinstance(A, DD) else DD(np.array(A, dtype=np.float64))
    x = b.copy() if isinstance(b, DD) else DD(np.array(b, dtype=np.float64))
    n = A.shape[0]
    for k in range(n):
        col = A[k:, k].abs()
        p = k + int(np.argmax(col.hi + col.lo))
        if (A.hi[p, k] + A.lo[p, k]) == 0.0:
            raise SingularPivotError(f"singular matrix at column {k + 1}")
        if p != k:
            A.hi[[k, p]], A.lo[[k, p]] = A.hi[[p, k]].copy(), A.lo[[p, k]].copy()
            x.hi[[k, p]], x.lo[[k, p]] = x.hi[[p, k]].copy(), x.lo[[p, k]].copy()
        piv = A[k, k]
        for i in range(k + 1, n):
            m = A[i, k] / piv
            A[i, k + 1 :] = A[i, k + 1 :] - DD(m.hi, m.lo) * A[k, k + 1 :]
            x[i] = x[i] - m * x[k]
    out = DD.zeros(n)
    for k in range(n - 1, -1, -1):
        acc = x[k]
        if k < n - 1:
            acc = acc - dd_dot(A[k, k + 1 :], out[k + 1 :])
        out[k] = acc / A[k, k]
    return out


# ---------------------------------------------------------------------------
# Tensor products in pair arithmetic
# ---------------------------------------------------------------------------


def dd_apply_bilinear(B, x, y, vals=None):
    """(Bxy) in pair arithmetic; `vals` overrides the tensor values (as DD)."""
    vv = DD(B.vals) if vals is None else vals
    w = vv * x[B.cols % B.n] * y[B.cols // B.n]
    out = DD.zeros(B.n)
    for i in range(B.n):
        lo, hi_ = B.row_ptr[i], B.row_ptr[i + 1]
        if hi_ > lo:
            out[i] = dd_sum(w[lo:hi_])
    return out


def dd_apply_quadratic(B, x, vals=None):
    return dd_apply_bilinear(B, x, x, vals=vals)


def dd_residual(problem, x):
    """a + Bx^2 - x in pair arithmetic."""
    return DD(problem.a) + dd_apply_quadratic(problem.tensor, x) - x


def _dd_column_sums(P):
    """Pair-precision sums of the unfolding columns of a Tensor3."""
    order = np.argsort(P.cols, kind="stable")
    cols_sorted = P.cols[order]
    vals_sorted = P.vals[order]
    bounds = np.searchsorted(cols_sorted, np.arange(P.n * P.n + 1))
    out = DD.zeros(P.n * P.n)
    for c in range(P.n * P.n):
        lo, hi_ = bounds[c], bounds[c + 1]
        if hi_ > lo:
            out[c] = dd_sum(DD(vals_sorted[lo:hi_]))
    return out


def _dd_segment_sums(weights, keys, n_keys):
    """Sum DD weights into n_keys buckets; keys must be sorted ascending."""
    bounds = np.searchsorted(keys, np.arange(n_keys + 1))
    out = DD.zeros(n_keys)
    for b in range(n_keys):
        lo, hi_ = bounds[b], bounds[b + 1]
        if hi_ > lo:
            out[b] = dd_sum(weights[lo:hi_])
    return out


def dd_contract_left(B, x, vals=None):
    """(Bx:)_{ik} = sum_j b_{ijk} x_j in pair arithmetic."""
    vv = DD(B.vals) if vals is None else vals
    w = vv * x[B.cols % B.n]
    keys = B.rows * B.n + B.cols // B.n  # sorted: storage order is (row, col)
    flat = _dd_segment_sums(w, keys, B.n * B.n)
    return DD(flat.hi.reshape(B.n, B.n), flat.lo.reshape(B.n, B.n))


def dd_contract_right(B, x, vals=None):
    """(B:x)_{ij} = sum_k b_{ijk} x_k in pair arithmetic."""
    vv = DD(B.vals) if vals is None else vals
    perm = np.lexsort((B.cols // B.n, B.cols % B.n, B.rows))
    w = (vv * x[B.cols // B.n])[perm]
    keys = (B.rows * B.n + B.cols % B.n)[perm]
    flat = _dd_segment_sums(w, keys, B.n * B.n)
    return DD(flat.hi.reshape(B.n, B.n), flat.lo.reshape(B.n, B.n))


# ---------------------------------------------------------------------------
# Reference Newton solver
# ---------------------------------------------------------------------------


@dataclass
class ReferenceSolution:
    x_pair: DD
    x: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool
    mode: str

    def decimal_strings(self, digits=34):
        return dd_to_decimal_strings(self.x_pair, digits)


def reference_solution(problem, mode=MINIMAL, tol=1e-28, maxit=200,
                       exact_stochastic=None):
    """Newton in pair arithmetic, the stand-in for an exact solution.

    MINIMAL starts from zero and solves each step with extended GTH on the
    column triplet (subtraction-free); STOCHASTIC starts from v and uses an
    extended partial-pivoting LU.  Residuals are evaluated directly in pair
    arithmetic, so the iteration is self-correcting down to ~1e-30.

    exact_stochastic (default: True for PageRank problems) renormalizes the
    data in pair precision first (1^T v = 1 and unit column sums to ~1e-32),
    which matches how variable-precision references treat the inputs.
    Binary64 data is stochastic only to one ulp, and near alpha = 1/2 the
    solution responds to a sum defect delta like sqrt(delta): the as-stored
    float problem can sit ~1e-8 away from the mathematical one, or lose its
    solution entirely.  Pass exact_stochastic=False to chase the float data
    as stored (sensible only away from alpha = 1/2).
    """
    if mode not in (MINIMAL, STOCHASTIC):
        raise ValueError(f"unknown mode {mode!r}")
    if exact_stochastic is None:
        exact_stochastic = problem.is_pagerank
    n = problem.n
    B = problem.tensor
    a_dd = DD(problem.a)
    vals_dd = None
    v0 = None if problem.v is None else DD(problem.v.copy())
    if exact_stochastic:
        if not problem.is_pagerank:
            raise ValueError("exact_stochastic needs a PageRank problem")
        alpha_dd = DD(problem.alpha)
        v0 = DD(problem.v) / dd_sum(DD(problem.v))
        a_dd = (DD(1.0) - alpha_dd) * v0
        csum = _dd_column_sums(problem.p_tensor)
        vals_dd = DD(problem.p_tensor.vals) * alpha_dd / csum[problem.p_tensor.cols]
        B = problem.p_tensor  # structure only; values come from vals_dd

    def resid(xx):
        return a_dd + dd_apply_quadratic(B, xx, vals=vals_dd) - xx

    if mode == STOCHASTIC:
        if not problem.is_pagerank:
            raise ValueError("stochastic mode needs a PageRank problem")
        x = v0.copy()
    else:
        x = DD.zeros(n)
    r = resid(x)
    iterations = 0
    while r.abs().max_abs() > tol and iterations < maxit:
        C = dd_contract_left(B, x, vals=vals_dd) + dd_contract_right(
            B, x, vals=vals_dd
        )
        if mode == MINIMAL and problem.is_pagerank:
            N = C.copy()
            rng = np.arange(n)
            N.hi[rng, rng] = 0.0
            N.lo[rng, rng] = 0.0
            # column sums of R_x: z = 1 - 2 alpha 1^T x, in pair arithmetic
            z = DD(1.0) - DD(2.0 * problem.alpha) * dd_sum(x)
            if z.to_float() <= 0.0:
                raise SingularPivotError("nonpositive column sums in reference run")
            sums = DD.zeros(n)
            sums.hi[:] = z.hi
            sums.lo[:] = z.lo
            F = dd_gth_factor(N, sums, orientation=COL)
            h = dd_gth_solve(F, r)
        else:
            R = DD(np.eye(n)) - C
            h = dd_lu_solve(R, r)
        x = x + h
        r = resid(x)
        iterations += 1
        if np.abs(x.hi).max() > 1e6:
            raise ArithmeticError("reference iteration diverged")
    res = r.abs().max_abs()
    return ReferenceSolution(
        x_pair=x,
        x=x.to_float(),
        residual_norm=res,
        iterations=iterations,
        converged=bool(res <= tol),
        mode=mode,
    )


# ---------------------------------------------------------------------------
# Extended-precision partial inverse (used by the omega diagnostic near the
# singular limit, where the binary64 subtraction M^{-1} - 1 z^T is meaningless)
# ---------------------------------------------------------------------------


def dd_partial_inverse(offdiag, sums):
    """(z, S) of a ROW triplet computed in pair arithmetic, returned in binary64."""
    offdiag = np.asarray(offdiag, dtype=np.float64)
    sums = np.asarray(sums, dtype=np.float64)
    n = offdiag.shape[0]
    if n == 1:
        return np.array([1.0 / sums[0]]), np.zeros((1, 1))
    # null profile of L1 = M - diag(sums): elimination on the zero-sum triplet
    N = DD(offdiag.copy())
    mult = DD.zeros((n, n))
    piv_l1 = DD.zeros(n - 1)
    for k in range(n - 1):
        d = dd_sum(N[k, k + 1 :])
        if d.to_float() <= 0.0:
            raise SingularPivotError(f"zero pivot at step {k + 1} (reducible input?)")
        piv_l1[k] = d
        mult[k + 1 :, k] = N[k + 1 :, k] / d
        col = N[k + 1 :, k] / d
        upd = DD(col.hi[:, None], col.lo[:, None]) * DD(
            N.hi[k, k + 1 :][None, :], N.lo[k, k + 1 :][None, :]
        )
        N[k + 1 :, k + 1 :] = N[k + 1 :, k + 1 :] + upd
        rng = np.arange(k + 1, n)
        N.hi[rng, rng] = 0.0
        N.lo[rng, rng] = 0.0
    t = DD.zeros(n)
    t[n - 1] = DD(1.0)
    for k in range(n - 2, -1, -1):
        t[k] = dd_dot(t[k + 1 :], mult[k + 1 :, k])
    F = dd_gth_factor(DD(offdiag.copy()), DD(sums.copy()), orientation=ROW)
    scale = DD(1.0)
    for k in range(n - 1):
        scale = scale * (piv_l1[k] / F.upper[k, k])
    scale = scale / F.upper[n - 1, n - 1]
    z = t * scale
    cols = [dd_gth_solve(F, np.eye(n)[:, j]) for j in range(n)]
    S = np.empty((n, n))
    zf = z.to_float()
    for j, cj in enumerate(cols):
        S[:, j] = (cj - z[j]).to_float()
    return zf, S
