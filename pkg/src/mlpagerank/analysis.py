"""Componentwise error metrics, condition quantities, and perturbation bounds.

Implements the componentwise distance d(x~, x) = max |x~_i - x_i| / |x_i|
(with 0/0 = 0 and b/0 = inf, so it is infinite whenever the zero patterns
disagree), the two condition quantities kappa = max y_i/m_i and
omega = max (S^T m)_i/m_i, the perturbation bounds 2 eps (2 kappa - 1) gamma
and 2 omega gamma eps they enter, the zero-sum perturbation generator used to
probe those bounds, and the limiting-accuracy predictors for Newton at a
stochastic solution.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import tensor as tz
from .mmatrix import (
    COL,
    ROW,
    TripletMMatrix,
    gth_factor,
    gth_solve,
    partial_inverse,
)
from .precision import dd_partial_inverse
from .solvers import Problem

# Below this column-sum level the binary64 subtraction M^{-1} - 1 z^T has no
# correct digits; omega switches to the pair-precision partial inverse.
OMEGA_DD_THRESHOLD = 1e-13


@dataclass(frozen=True)
class CwDistance:
    value: float
    argmax_index: tuple

    def __float__(self):
        return self.value


def _cw_arrays(x_tilde, x):
    x_tilde = np.asarray(x_tilde, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x_tilde.shape != x.shape:
        raise ValueError(f"shape mismatch {x_tilde.shape} vs {x.shape}")
    ratios = np.zeros(x.shape)
    nz = x != 0.0
    ratios[nz] = np.abs(x_tilde[nz] - x[nz]) / np.abs(x[nz])
    ratios[(~nz) & (x_tilde != 0.0)] = np.inf
    if ratios.size == 0:
        return CwDistance(0.0, ())
    flat = int(np.argmax(ratios))
    idx = np.unravel_index(flat, ratios.shape)
    return CwDistance(float(ratios[idx]), tuple(int(i) + 1 for i in idx))


def cw_distance(x_tilde, x):
    """d(x~, x); asymmetric, the second argument is the reference.

    Accepts vectors, matrices, or Tensor3 pairs; for tensors the comparison
    runs over the union of supports (a value appearing against a structural
    zero makes the distance infinite).
    """
    if isinstance(x, tz.Tensor3) or isinstance(x_tilde, tz.Tensor3):
        if x.n != x_tilde.n:
            raise ValueError("tensor dimensions disagree")
        if x.n <= tz.DENSE_LIMIT:
            return _cw_arrays(x_tilde.unfolding(), x.unfolding())
        d = 0.0
        arg = ()
        ref = {(i, j, k): v for i, j, k, v in x.entries()}
        for i, j, k, v in x_tilde.entries():
            base = ref.pop((i, j, k), 0.0)
            if base == 0.0:
                if v != 0.0:
                    return CwDistance(math.inf, (i, j, k))
                continue
            r = abs(v - base) / abs(base)
            if r > d:
                d, arg = r, (i, j, k)
        for (i, j, k), base in ref.items():
            if base != 0.0 and 1.0 > d:
                d, arg = 1.0, (i, j, k)  # entry dropped entirely
        return CwDistance(d, arg)
    return _cw_arrays(x_tilde, x)


def support_cw_distance(x_tilde, x):
    """Like cw_distance but only over the support of x (ignores new nonzeros).

    This is the realized epsilon of a clamped/renormalized perturbation; mass
    created on structural zeros is reported separately by callers.
    """
    x_tilde = np.asarray(x_tilde, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    nz = x != 0.0
    if not nz.any():
        return 0.0
    return float(np.max(np.abs(x_tilde[nz] - x[nz]) / np.abs(x[nz])))


def norm_error(x_tilde, x):
    """e_norm = ||x - x~||_2 / ||x||_2."""
    x_tilde = np.asarray(x_tilde, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    return float(np.linalg.norm(x - x_tilde) / np.linalg.norm(x))


def _minimal_solution_colsum(problem, m):
    """Column-sum level of R_m, subtraction-free for the PageRank view."""
    if problem.is_pagerank:
        omt = problem.one_minus_two_alpha
        return omt if problem.alpha <= 0.5 else -omt
    C = tz.contract_left(problem.tensor, m) + tz.contract_right(problem.tensor, m)
    return 1.0 - C.sum(axis=0)


def _rm_col_triplet(problem, m):
    C = tz.contract_left(problem.tensor, m) + tz.contract_right(problem.tensor, m)
    np.fill_diagonal(C, 0.0)
    sums = _minimal_solution_colsum(problem, m)
    sums = np.full(problem.n, sums) if np.isscalar(sums) else sums
    if (sums < 0.0).any():
        raise ValueError("R_m is not an M-matrix (negative column sums)")
    return TripletMMatrix(C, sums, COL)


def compute_y(problem, m):
    """y = R_m^{-1} a via GTH on the R_m triplet.

    Checks the conclusions it relies on: y >= m up to roundoff, and y shares
    m's zero pattern.
    """
    m = np.asarray(m, dtype=np.float64)
    T = _rm_col_triplet(problem, m)
    y = gth_solve(gth_factor(T, check=False), problem.a)
    if (y < m - 1e-14).any():
        raise ValueError("computed y violates y >= m; is m the minimal solution?")
    zero_m = m == 0.0
    if (y[zero_m] > 1e-14).any() or ((y <= 1e-300) & ~zero_m & (m > 1e-300)).any():
        raise ValueError("y and m zero patterns disagree")
    y = y.copy()
    y[zero_m] = 0.0
    return y


def kappa(m, y):
    """kappa = max over m_i != 0 of y_i / m_i; at least 1."""
    m = np.asarray(m, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if ((m == 0.0) != (y == 0.0)).any():
        raise ValueError("y and m zero patterns disagree")
    nz = m != 0.0
    if not nz.any():
        return 1.0
    return max(float(np.max(y[nz] / m[nz])), 1.0)


def omega(problem, m):
    """omega = max (S^T m)_i / m_i for (R_m^T)^{-1} = 1 z^T + S.

    Away from the singular limit this uses the binary64 partial inverse of
    the ROW triplet of R_m^T; once the column sums drop below
    OMEGA_DD_THRESHOLD the subtraction defining S is carried out in pair
    precision instead (the partial inverse itself stays bounded there).
    """
    m = np.asarray(m, dtype=np.float64)
    T = _rm_col_triplet(problem, m)  # validates sums >= 0
    offdiag_t = T.offdiag.T.copy()
    sums = T.sums
    if float(sums.min()) > OMEGA_DD_THRESHOLD:
        pi = partial_inverse(TripletMMatrix(offdiag_t, sums, ROW), check=False)
        S = pi.S
    else:
        _, S = dd_partial_inverse(offdiag_t, sums)
    z_vec = S.T @ m
    nz = m != 0.0
    val = float(np.max(z_vec[nz] / m[nz]))
    # S = 0 for n = 1, giving omega = 0; anything negative means S lost all
    # accuracy to the subtraction and must not be used.
    if val < 0.0:
        raise ArithmeticError(f"omega came out negative ({val}); S inaccurate?")
    return val


@dataclass(frozen=True)
class BoundReport:
    """One evaluated perturbation bound with its validity flags."""

    kind: str  # "kappa" or "omega"
    epsilon: float
    quantity: float  # kappa or omega
    gamma: float
    bound: float
    discriminant_ok: bool
    spectral_ok: bool | None  # None when no spectral radius was supplied
    @property
    def applicable(self):
        return self.discriminant_ok and self.spectral_ok is not False

    def to_dict(self):
        return {
            "kind": self.kind,
            "epsilon": self.epsilon,
            "quantity": self.quantity,
            "gamma": self.gamma,
            "bound": self.bound,
            "applicable": self.applicable,
        }


def _gamma(eps, n):
    return (1.0 + eps) ** (n - 1) / (1.0 - eps) ** n


def _spectral_flag(eps, rho):
    if rho is None:
        return None
    return bool((1.0 + eps) * rho < 1.0)


def bound_kappa(epsilon, kappa_value, n, rho=None):
    """d(m~, m) <= 2 eps (2 kappa - 1) gamma, valid while
    eps + eps^2 < 1 / (4 gamma^2 (2 kappa - 1)(kappa - 1))."""
    eps = float(epsilon)
    if not 0.0 <= eps < 1.0:
        raise ValueError("epsilon must be in [0, 1)")
    g = _gamma(eps, n)
    denom = 4.0 * g * g * (2.0 * kappa_value - 1.0) * (kappa_value - 1.0)
    disc_ok = True if denom <= 0.0 else (eps + eps * eps) < 1.0 / denom
    return BoundReport(
        kind="kappa",
        epsilon=eps,
        quantity=float(kappa_value),
        gamma=g,
        bound=2.0 * eps * (2.0 * kappa_value - 1.0) * g,
        discriminant_ok=bool(disc_ok),
        spectral_ok=_spectral_flag(eps, rho),
    )


def bound_omega(epsilon, omega_value, n, rho=None):
    """d(m~, m) <= 2 omega gamma eps, valid while eps + eps^2 < 1/(4 gamma^2 omega^2)."""
    eps = float(epsilon)
    if not 0.0 <= eps < 1.0:
        raise ValueError("epsilon must be in [0, 1)")
    g = _gamma(eps, n)
    denom = 4.0 * g * g * omega_value * omega_value
    disc_ok = True if denom <= 0.0 else (eps + eps * eps) < 1.0 / denom
    return BoundReport(
        kind="omega",
        epsilon=eps,
        quantity=float(omega_value),
        gamma=g,
        bound=2.0 * omega_value * g * eps,
        discriminant_ok=bool(disc_ok),
        spectral_ok=_spectral_flag(eps, rho),
    )


def zero_sum_perturb(problem, epsilon, seed):
    """Perturb (v, P) by seeded zero-column-sum noise, clamp, renormalize.

    E = R - (1/n) 1 1^T R with R uniform on the unfolding shape, e likewise
    for v; P~ = P + eps E and v~ = v + eps e are clamped at zero and the
    unfolding columns (and v) renormalized, so the perturbed problem is again
    stochastic to roundoff.  eps = 0 returns the problem unchanged.
    """
    if not problem.is_pagerank:
        raise ValueError("zero_sum_perturb needs a PageRank problem")
    eps = float(epsilon)
    if eps == 0.0:
        return problem
    n = problem.n
    rng = np.random.default_rng(seed)
    R = rng.random((n, n * n))
    E = R - np.ones((n, 1)) @ (R.sum(axis=0)[None, :] / n)
    rvec = rng.random(n)
    e = rvec - rvec.sum() / n
    P1 = problem.p_tensor.unfolding()
    P_tilde = np.maximum(P1 + eps * E, 0.0)
    P_tilde /= P_tilde.sum(axis=0)[None, :]
    v_tilde = np.maximum(problem.v + eps * e, 0.0)
    v_tilde /= v_tilde.sum()
    return Problem.from_pagerank(
        v_tilde,
        tz.Tensor3.from_unfolding(P_tilde),
        problem.alpha,
        one_minus_two_alpha=problem.one_minus_two_alpha,
    )


def realized_epsilon(perturbed, problem):
    """Componentwise size of a zero-sum perturbation over the shared support."""
    d_v = support_cw_distance(perturbed.v, problem.v)
    d_p = support_cw_distance(
        perturbed.p_tensor.unfolding(), problem.p_tensor.unfolding()
    )
    return max(d_v, d_p)


def componentwise_zero_sum_perturb(problem, epsilon, seed, perturb_v=False):
    """Zero-sum perturbation that also respects the componentwise model.

    The additive recipe of zero_sum_perturb hits tiny entries with relative
    changes of order epsilon / entry, far outside the hypotheses of the
    perturbation bounds.  Here each entry moves multiplicatively (at most
    2 epsilon relative) and the zero-sum projection stays inside the support,
    so d(P~, P) <= 2 epsilon with the zero pattern intact.  This is the form
    the bound-validation experiments use; v is left alone unless requested.
    """
    if not problem.is_pagerank:
        raise ValueError("componentwise_zero_sum_perturb needs a PageRank problem")
    eps = float(epsilon)
    if eps == 0.0:
        return problem
    if not 0.0 < eps < 0.25:
        raise ValueError("epsilon must be in (0, 0.25) for a multiplicative model")
    rng = np.random.default_rng(seed)
    U = problem.p_tensor.unfolding()
    delta = eps * (2.0 * rng.random(U.shape) - 1.0) * U
    colsum = U.sum(axis=0)
    safe = np.where(colsum == 0.0, 1.0, colsum)
    delta -= U * (delta.sum(axis=0) / safe)[None, :]
    P_tilde = U + delta
    P_tilde /= np.where(colsum == 0.0, 1.0, P_tilde.sum(axis=0))[None, :]
    v_tilde = problem.v
    if perturb_v:
        dv = eps * (2.0 * rng.random(problem.n) - 1.0) * problem.v
        dv -= problem.v * dv.sum()  # 1^T v = 1
        v_tilde = (problem.v + dv) / (problem.v + dv).sum()
    return Problem.from_pagerank(
        v_tilde,
        tz.Tensor3.from_unfolding(P_tilde),
        problem.alpha,
        one_minus_two_alpha=problem.one_minus_two_alpha,
    )


@dataclass(frozen=True)
class PredictorReport:
    """Limiting-accuracy predictors for Newton at x*."""

    structured: float  # || |R^-1| x* ||_inf
    classical: float  # ||R^-1||_inf ||x*||_inf
    cond: float  # cond_inf(R)

    @property
    def ratio(self):
        return self.classical / self.structured


def limiting_accuracy_predictors(problem, x_star):
    """Compare || |R^{-1}| x* || against ||R^{-1}|| ||x*|| and cond(R).

    R = R_{x*} may have any sign structure here; a plain LU inverse is used.
    """
    x_star = np.asarray(x_star, dtype=np.float64)
    C = tz.contract_left(problem.tensor, x_star) + tz.contract_right(
        problem.tensor, x_star
    )
    R = np.eye(problem.n) - C
    try:
        Rinv = np.linalg.inv(R)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(f"R_x* is singular: {exc}") from exc
    inv_norm = float(np.abs(Rinv).sum(axis=1).max())
    return PredictorReport(
        structured=float(np.abs(np.abs(Rinv) @ x_star).max()),
        classical=inv_norm * float(np.abs(x_star).max()),
        cond=inv_norm * float(np.abs(R).sum(axis=1).max()),
    )


def perturbation_record(epsilon_realized, kappa_report, omega_report, observed_dcw):
    """JSON-ready record for one perturbation trial."""
    return {
        "epsilon_realized": epsilon_realized,
        "kappa": kappa_report.quantity,
        "omega": omega_report.quantity,
        "gamma": omega_report.gamma,
        "bound": omega_report.bound,
        "observed_dcw": observed_dcw,
        "applicable": omega_report.applicable,
    }


def dump_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
