"""Sparse order-3 tensors and the contraction products used by the solvers.

An n x n x n tensor B is stored through its first-mode unfolding: entry
b_{ijk} lives in row i, column j + (k-1)*n of an n x n^2 matrix.  All stored
values are nonnegative; the solvers rely on this to keep their nonnegative
code paths free of cancellation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Below this dimension a dense copy of the unfolding is kept for the
# matrix-producing contractions; coordinate data is authoritative either way.
DENSE_LIMIT = 64


class Tensor3:
    """Immutable nonnegative order-3 tensor in coordinate form.

    Entries are kept sorted by (row, unfolding column) with a CSR-style row
    pointer, so one pass over the arrays streams the tensor in a fixed,
    reproducible order.
    """

    __slots__ = ("n", "rows", "cols", "vals", "row_ptr", "_dense")

    def __init__(self, n, entries):
        """Build from an iterable of (i, j, k, value) with 1-based indices.

        Raises ValueError on indices out of range, negative or non-finite
        values, or duplicate (i, j, k) triples (duplicates are rejected, not
        summed, so file round-trips are bit-exact).
        """
        n = int(n)
        if n <= 0:
            raise ValueError("tensor dimension must be positive")
        ent = list(entries)
        rows = np.empty(len(ent), dtype=np.int64)
        cols = np.empty(len(ent), dtype=np.int64)
        vals = np.empty(len(ent), dtype=np.float64)
        for idx, (i, j, k, value) in enumerate(ent):
            if not (1 <= i <= n and 1 <= j <= n and 1 <= k <= n):
                raise ValueError(f"entry ({i},{j},{k}) out of range for n={n}")
            value = float(value)
            if not np.isfinite(value) or value < 0.0:
                raise ValueError(f"entry ({i},{j},{k}) has invalid value {value!r}")
            rows[idx] = i - 1
            cols[idx] = (j - 1) + (k - 1) * n
            vals[idx] = value
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        flat = rows * (n * n) + cols
        if len(flat) > 1 and (np.diff(flat) == 0).any():
            dup = int(np.nonzero(np.diff(flat) == 0)[0][0])
            i, c = int(rows[dup]) + 1, int(cols[dup])
            raise ValueError(
                f"duplicate entry ({i},{c % n + 1},{c // n + 1})"
            )
        self.n = n
        self.rows = rows
        self.cols = cols
        self.vals = vals
        self.row_ptr = np.searchsorted(rows, np.arange(n + 1))
        self._dense = None

    @classmethod
    def from_unfolding(cls, unfolding):
        """Build from a dense n x n^2 first-mode unfolding (zeros dropped)."""
        U = np.asarray(unfolding, dtype=np.float64)
        n = U.shape[0]
        if U.shape != (n, n * n):
            raise ValueError(f"unfolding must be n x n^2, got {U.shape}")
        ii, cc = np.nonzero(U)
        entries = [
            (int(i) + 1, int(c) % n + 1, int(c) // n + 1, U[i, c])
            for i, c in zip(ii, cc)
        ]
        return cls(n, entries)

    @classmethod
    def zeros(cls, n):
        return cls(n, [])

    @property
    def nnz(self):
        return len(self.vals)

    def entries(self):
        """Yield (i, j, k, value) with 1-based indices in storage order."""
        n = self.n
        for r, c, v in zip(self.rows, self.cols, self.vals):
            yield int(r) + 1, int(c) % n + 1, int(c) // n + 1, float(v)

    def unfolding(self):
        """Dense n x n^2 unfolding (cached when n <= DENSE_LIMIT)."""
        if self._dense is not None:
            return self._dense
        U = np.zeros((self.n, self.n * self.n))
        U[self.rows, self.cols] = self.vals
        if self.n <= DENSE_LIMIT:
            self._dense = U
        return U

    def scale(self, factor):
        """Return the tensor scaled by a nonnegative factor."""
        factor = float(factor)
        if factor < 0.0:
            raise ValueError("scale factor must be nonnegative")
        out = Tensor3.__new__(Tensor3)
        out.n = self.n
        out.rows = self.rows
        out.cols = self.cols
        out.vals = self.vals * factor
        out.row_ptr = self.row_ptr
        out._dense = None
        return out

    def __repr__(self):
        return f"Tensor3(n={self.n}, nnz={self.nnz})"


def _check_dim(B, x, name="x"):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (B.n,):
        raise ValueError(f"{name} has shape {x.shape}, expected ({B.n},)")
    return x


def apply_bilinear(B, x, y):
    """(Bxy)_i = sum_{j,k} b_{ijk} x_j y_k.

    Entries are accumulated in storage order, so repeated calls are
    bit-for-bit reproducible; for nonnegative x, y only additions and
    multiplications of nonnegative terms occur.
    """
    x = _check_dim(B, x, "x")
    y = _check_dim(B, y, "y")
    w = B.vals * x[B.cols % B.n] * y[B.cols // B.n]
    return np.bincount(B.rows, weights=w, minlength=B.n)


def apply_quadratic(B, x):
    """(Bx^2)_i = sum_{j,k} b_{ijk} x_j x_k."""
    return apply_bilinear(B, x, x)


def contract_left(B, x):
    """Matrix of y -> Bxy, i.e. (Bx:)_{ik} = sum_j b_{ijk} x_j."""
    x = _check_dim(B, x)
    w = B.vals * x[B.cols % B.n]
    flat = B.rows * B.n + B.cols // B.n
    return np.bincount(flat, weights=w, minlength=B.n * B.n).reshape(B.n, B.n)


def contract_right(B, x):
    """Matrix of y -> Byx, i.e. (B:x)_{ij} = sum_k b_{ijk} x_k."""
    x = _check_dim(B, x)
    w = B.vals * x[B.cols // B.n]
    flat = B.rows * B.n + B.cols % B.n
    return np.bincount(flat, weights=w, minlength=B.n * B.n).reshape(B.n, B.n)


@dataclass(frozen=True)
class StochasticityReport:
    """Outcome of a column-sum check on the unfolding."""

    target: float
    tol: float
    max_deviation: float
    worst_column: tuple[int, int]  # (j, k), 1-based
    ok: bool


def check_stochastic(B, target, tol):
    """Check every unfolding column sums to `target` within `tol`."""
    if tol < 0.0:
        raise ValueError("tol must be nonnegative")
    sums = np.bincount(B.cols, weights=B.vals, minlength=B.n * B.n)
    dev = np.abs(sums - target)
    worst = int(np.argmax(dev))
    j, k = worst % B.n + 1, worst // B.n + 1
    return StochasticityReport(
        target=float(target),
        tol=float(tol),
        max_deviation=float(dev[worst]),
        worst_column=(j, k),
        ok=bool(dev[worst] <= tol),
    )


def read_tensor_text(path):
    """Read the tensor text format: header ``n nnz`` then ``i j k value`` lines."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}:1: expected header 'n nnz'")
        n, nnz = int(header[0]), int(header[1])
        entries = []
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 'i j k value'")
            i, j, k = int(parts[0]), int(parts[1]), int(parts[2])
            value = float(parts[3])
            if value < 0.0:
                raise ValueError(f"{path}:{lineno}: negative value {value}")
            entries.append((i, j, k, value))
    if len(entries) != nnz:
        raise ValueError(f"{path}: header says {nnz} entries, file has {len(entries)}")
    return Tensor3(n, entries)


def write_tensor_text(B, path):
    """Write the tensor text format; values use repr so round-trips are exact."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{B.n} {B.nnz}\n")
        for i, j, k, v in B.entries():
            fh.write(f"{i} {j} {k} {v!r}\n")
