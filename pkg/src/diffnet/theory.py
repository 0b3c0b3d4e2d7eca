"""Closed-form steady-state quantities and regime classification.

The central object is the small-step-size steady-state MSD common to
diffusion and exact diffusion,

    msd = mu / (2K) * trace( (sum_k H_k)^{-1} (sum_k S_k) ),

exact to first order in ``mu``. The order-form comparators below keep the
second-order terms that distinguish the methods:

    bound_ed = mu s2/(K nu) + (d2/n2) mu^2 s2 / (1 - lam)
    bound_d  = mu s2/(K nu) + (d2/n2) mu^2 lam^2 s2 / (1 - lam)
                            + (d2/n2) mu^2 lam^2 b2 / (1 - lam)^2

with d2 = delta^2, n2 = nu^2, s2 the average noise power and b2 the bias.
Every hidden constant is set to one, so these are order-of-magnitude
comparators for orderings and scaling ratios, not certified bounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import InvalidInputError, NumericError
from .problems import ProblemInstance
from .topology import CombinationMatrix

UNIT_EIG_TOL = 1e-8
D1_MARGIN = 1e-10


def theoretical_msd(H_list: np.ndarray, S_list: np.ndarray, mu: float, K: int) -> float:
    """First-order steady-state MSD ``mu/(2K) tr((sum H_k)^{-1} sum S_k)``."""
    H_sum = np.asarray(H_list).sum(axis=0)
    S_sum = np.asarray(S_list).sum(axis=0)
    linalg.check_symmetric(H_sum, tol=1e-9 * max(1.0, float(np.abs(H_sum).max())))
    H_sum = 0.5 * (H_sum + H_sum.T)
    x = linalg.solve_spd(H_sum, S_sum)
    return float(mu / (2.0 * K) * np.trace(x))


def to_db(x: float) -> float:
    return float(10.0 * np.log10(x)) if x > 0 else float("-inf")


def steady_state_bounds(
    nu: float,
    delta: float,
    sigma_sq: float,
    b_sq: float,
    lam: float,
    mu: float,
    K: int,
) -> tuple[float, float]:
    """Order-form steady-state comparators ``(bound_ed, bound_d)`` with all
    hidden constants set to one."""
    if not (0.0 <= lam < 1.0):
        raise InvalidInputError(f"lam must be in [0, 1), got {lam}")
    if nu <= 0:
        raise InvalidInputError("nu must be > 0")
    base = mu * sigma_sq / (K * nu)
    ratio = delta**2 / nu**2
    bound_ed = base + ratio * mu**2 * sigma_sq / (1.0 - lam)
    bound_d = (
        base
        + ratio * mu**2 * lam**2 * sigma_sq / (1.0 - lam)
        + ratio * mu**2 * lam**2 * b_sq / (1.0 - lam) ** 2
    )
    return bound_ed, bound_d


def stepsize_ranges(
    nu: float,
    delta: float,
    beta_max_sq: float,
    lam: float,
    c1c2: float | None = None,
    e1e2: float | None = None,
) -> tuple[float, float]:
    """Largest admissible step sizes ``(mu_bound_ed, mu_bound_d)``.

    Without decomposition constants both are the order form
    ``(1 - lam) nu / (delta^2 + beta_max_sq)`` with constant one. Supplying
    ``c1c2`` (exact diffusion) or ``e1e2`` (diffusion) switches the matching
    bound to its full denominator, ``32 + 16 c1c2 + 8 sqrt(c1c2)`` and
    ``12 + 4 e1e2 + sqrt(6 e1e2)`` respectively.
    """
    if not (0.0 <= lam < 1.0):
        raise InvalidInputError(f"lam must be in [0, 1), got {lam}")
    if nu <= 0:
        raise InvalidInputError("nu must be > 0")
    base = (1.0 - lam) * nu / (delta**2 + beta_max_sq)
    mu_ed = base if c1c2 is None else base / (32.0 + 16.0 * c1c2 + 8.0 * np.sqrt(c1c2))
    mu_d = base if e1e2 is None else base / (12.0 + 4.0 * e1e2 + np.sqrt(6.0 * e1e2))
    return float(mu_ed), float(mu_d)


@dataclass
class ErrorOperatorDecomposition:
    """Diagonalization of the exact-diffusion error propagation operator."""

    c1: float  # squared spectral norm of the left complementary basis
    c2: float  # squared spectral norm of the right complementary basis
    d1_magnitudes: np.ndarray  # |eigenvalues| of the complementary block, sorted descending
    residual: float  # max |X D X^{-1} - B|
    c: float  # scaling constant applied to the complementary right basis


def decompose_error_operator(
    abar: np.ndarray, v: np.ndarray
) -> ErrorOperatorDecomposition:
    """Eigendecomposition of ``B = [[abar, -v], [v @ abar, abar]]``.

    ``B`` propagates the stacked primal/dual errors of exact diffusion. For a
    connected network it has exactly two unit eigenvalues (the consensus
    directions); the complementary invariant subspace carries eigenvalues of
    magnitude strictly below one. Returns the squared spectral norms of the
    complementary left/right bases and the eigenvalue magnitudes. Complex
    arithmetic stays internal; only magnitudes are reported.

    The right complementary basis is scaled by ``c = sqrt(K * c1)`` computed
    from the unit-column-normalized eigenbasis, which pins down an otherwise
    free scaling without changing ``c1 * c2`` or the reconstruction.
    """
    abar = linalg.check_symmetric(abar)
    v = linalg.check_symmetric(v)
    K = abar.shape[0]
    if K < 2:
        raise InvalidInputError("K must be >= 2: a single agent has no complementary block")
    if 2 * K > 2000:
        raise InvalidInputError(f"operator size 2K={2 * K} exceeds the 2000 cost guard")

    B = np.block([[abar, -v], [v @ abar, abar]])
    try:
        eigvals, X = np.linalg.eig(B)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericError(f"eigendecomposition failed: {exc}") from exc
    Xinv = np.linalg.inv(X)

    order = np.argsort(np.abs(eigvals - 1.0))
    unit_idx, rest_idx = order[:2], order[2:]
    worst_unit = float(np.abs(eigvals[unit_idx] - 1.0).max())
    if worst_unit > UNIT_EIG_TOL:
        raise NumericError(
            f"expected two unit eigenvalues, worst deviation {worst_unit:.3e}; "
            "is the network connected?"
        )

    d1 = np.sort(np.abs(eigvals[rest_idx]))[::-1]
    residual = float(np.abs((X * eigvals) @ Xinv - B).max())
    c1 = float(np.linalg.norm(Xinv[rest_idx, :], 2) ** 2)
    c2 = float(np.linalg.norm(X[:, rest_idx], 2) ** 2)
    return ErrorOperatorDecomposition(
        c1=c1, c2=c2, d1_magnitudes=d1, residual=residual, c=float(np.sqrt(K * c1))
    )


def diffusion_decomposition_constants(A: np.ndarray) -> tuple[float, float]:
    """Left/right basis norms ``(e1, e2)`` for the diffusion error operator.

    ``A`` is symmetric, so the complementary basis can be taken orthonormal
    and both norms equal one; they are computed from the eigenbasis rather
    than hard-coded to keep the dual route intact.
    """
    vals, vecs = linalg.sym_eig(A)
    if vals.shape[0] < 2:
        raise InvalidInputError("K must be >= 2")
    rest = vecs[:, 1:]
    e2 = float(np.linalg.norm(rest, 2) ** 2)
    e1 = float(np.linalg.norm(rest.T, 2) ** 2)
    return e1, e2


@dataclass
class Regime:
    """Predicted steady-state ordering of the two methods."""

    winner: str  # "diffusion" | "exact_diffusion" | "similar"
    row: str  # matched scenario description
    thresholds: dict = field(default_factory=dict)


ZERO_TOL = 1e-12


def classify_regime(
    b_sq: float,
    sigma_sq: float,
    lam: float,
    mu: float,
    nu: float,
    delta: float,
    K: int,
    d3: float = 1.0,
    x: float = 1.0,
) -> Regime:
    """Predict which method wins at steady state.

    The decision compares the order-form comparators: a method is declared
    better only when its advantage (difference of the second-order terms) is
    at least as large as the shared first-order term ``mu sigma^2/(K nu)``.
    With bias and noise both present, step sizes below both
    ``d3 (1 - lam)^(2+x)`` (bias side) and ``nu / ((1 + lam) K delta^2)``
    (variance side) count as sufficiently small and give similar performance.
    """
    if not (0.0 <= lam < 1.0):
        raise InvalidInputError(f"lam must be in [0, 1), got {lam}")
    if nu <= 0 or delta <= 0 or K < 1:
        raise InvalidInputError("nu, delta must be > 0 and K >= 1")

    ratio = delta**2 / nu**2
    base = mu * sigma_sq / (K * nu)
    bias_excess = ratio * mu**2 * lam**2 * b_sq / (1.0 - lam) ** 2
    var_excess = (1.0 + lam) * ratio * mu**2 * sigma_sq  # extra variance paid by exact diffusion
    small_bias_mu = d3 * (1.0 - lam) ** (2.0 + x)
    small_var_mu = nu / ((1.0 + lam) * K * delta**2)
    thresholds = {
        "base_term": base,
        "bias_excess": bias_excess,
        "variance_excess": var_excess,
        "small_mu_bias": small_bias_mu,
        "small_mu_variance": small_var_mu,
    }

    if b_sq <= ZERO_TOL and sigma_sq <= ZERO_TOL:
        return Regime("similar", "no gradient noise and no bias: both converge exactly", thresholds)
    if sigma_sq <= ZERO_TOL:
        if lam <= ZERO_TOL:
            return Regime("similar", "bias only, fully mixed network: both converge exactly", thresholds)
        return Regime("exact_diffusion", "bias only (sigma^2 = 0): bias correction wins", thresholds)
    if b_sq <= ZERO_TOL:
        if var_excess >= base:
            return Regime("diffusion", "no bias, moderate step size: exact diffusion pays extra variance", thresholds)
        return Regime("similar", "no bias, small step size or slow mixing", thresholds)

    if mu <= small_bias_mu and mu <= small_var_mu:
        return Regime("similar", "sufficiently small step size: first-order term dominates", thresholds)
    net = bias_excess - var_excess
    if net >= base:
        return Regime("exact_diffusion", "bias term dominant (sparse network): bias correction wins", thresholds)
    if -net >= base:
        return Regime("diffusion", "variance term dominant (dense network)", thresholds)
    return Regime("similar", "second-order terms comparable", thresholds)


@dataclass
class TheoryReport:
    """Bundle of the closed-form quantities for one experiment setting."""

    mu: float
    msd_theory: float
    msd_theory_db: float
    lam: float
    gap: float
    lambda_prime: float
    mu_bound_ed: float
    mu_bound_d: float
    bound_ed: float
    bound_d: float
    regime: Regime
    nu: float
    delta: float
    sigma_sq: float
    b_sq: float
    beta_max_sq: float

    def as_dict(self) -> dict:
        return {
            "mu": self.mu,
            "msd_theory": self.msd_theory,
            "msd_theory_db": self.msd_theory_db,
            "lambda": self.lam,
            "gap": self.gap,
            "lambda_prime": self.lambda_prime,
            "mu_bound_ed": self.mu_bound_ed,
            "mu_bound_d": self.mu_bound_d,
            "bound_ed": self.bound_ed,
            "bound_d": self.bound_d,
            "regime": self.regime.winner,
            "regime_row": self.regime.row,
            "nu": self.nu,
            "delta": self.delta,
            "sigma_sq": self.sigma_sq,
            "b_sq": self.b_sq,
            "beta_max_sq": self.beta_max_sq,
        }


def build_report(problem: ProblemInstance, comb: CombinationMatrix, mu: float) -> TheoryReport:
    """Evaluate all closed-form quantities for a problem/topology/step size."""
    msd = theoretical_msd(problem.H_list, problem.S_list, mu, problem.K)
    bound_ed, bound_d = steady_state_bounds(
        problem.nu, problem.delta, problem.sigma_sq, problem.b_sq, comb.lam, mu, problem.K
    )
    mu_ed, mu_d = stepsize_ranges(problem.nu, problem.delta, problem.beta_max_sq, comb.lam)
    regime = classify_regime(
        problem.b_sq, problem.sigma_sq, comb.lam, mu, problem.nu, problem.delta, problem.K
    )
    return TheoryReport(
        mu=mu, msd_theory=msd, msd_theory_db=to_db(msd),
        lam=comb.lam, gap=comb.gap, lambda_prime=comb.lambda_prime,
        mu_bound_ed=mu_ed, mu_bound_d=mu_d,
        bound_ed=bound_ed, bound_d=bound_d, regime=regime,
        nu=problem.nu, delta=problem.delta, sigma_sq=problem.sigma_sq,
        b_sq=problem.b_sq, beta_max_sq=problem.beta_max_sq,
    )
