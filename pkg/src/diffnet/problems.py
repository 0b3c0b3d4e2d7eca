"""Streaming data models with stochastic gradient oracles.

Two families are provided:

* **Least squares** ("MSE network"): agent ``k`` observes scalar readings
  ``d = u @ w_star_k + noise`` with regressors ``u ~ N(0, diag(lambda_k))``,
  and minimizes ``E (d - u @ w)**2``. The per-sample gradient is
  ``-2 u (d - u @ w)`` and the exact gradient ``2 diag(lambda_k) (w - w_star_k)``.

* **Regularized logistic regression**: agent ``k`` observes features
  ``h ~ N(0, I)`` and labels in ``{-1, +1}`` drawn so that ``+1`` has
  probability ``sigmoid(h @ w_star_k)``, and minimizes
  ``E log(1 + exp(-label * h @ w)) + rho/2 ||w||^2``. The population
  minimizer has no closed form, so a proxy is computed by full-batch gradient
  descent on a frozen evaluation set; all reported quantities (Hessians,
  noise covariances, bias) are measured at that proxy.

Every instance carries the pieces the steady-state analysis needs: the global
minimizer ``w_star``, per-agent Hessians ``H_list`` at ``w_star``, gradient
noise covariances ``S_list``, the bias ``b_sq = mean_k ||grad J_k(w_star)||^2``
and the average noise power ``sigma_sq = mean_k trace(S_k)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, InvalidInputError

MIN_NOISE_SAMPLES = 100_000
MIN_EVAL_SAMPLES = 10_000
PROXY_GRAD_TOL = 1e-10
PROXY_MAX_ITER = 1_000_000


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x)))


@dataclass(frozen=True)
class LsAgentModel:
    """Least-squares agent: local minimizer, regressor covariance diagonal,
    observation noise variance."""

    w_star_k: np.ndarray
    lambda_diag: np.ndarray
    noise_var: float

    def __post_init__(self):
        if np.any(np.asarray(self.lambda_diag) <= 0):
            raise InvalidInputError("regressor covariance diagonal must be positive")
        if self.noise_var < 0:
            raise InvalidInputError("noise variance must be >= 0")


@dataclass(frozen=True)
class LogisticAgentModel:
    """Logistic agent: unit-norm local minimizer and l2 penalty."""

    w_star_k: np.ndarray
    rho: float

    def __post_init__(self):
        if self.rho <= 0:
            raise InvalidInputError("rho must be > 0")
        nrm = float(np.sum(np.asarray(self.w_star_k) ** 2))
        if abs(nrm - 1.0) > 1e-10:
            raise InvalidInputError(f"local minimizer must have unit squared norm, got {nrm}")


@dataclass
class ProblemInstance:
    """Common per-instance data shared by both families."""

    family: str
    K: int
    M: int
    agents: list
    w_star: np.ndarray
    H_list: np.ndarray  # (K, M, M) Hessians at w_star
    S_list: np.ndarray  # (K, M, M) gradient-noise covariances at w_star
    b_sq: float
    sigma_sq: float
    nu: float
    delta: float
    beta_max_sq: float
    deterministic_mode: bool = False

    # ---- vectorized oracle API used by the simulation driver ----
    # W always has shape (..., K, M); data chunks carry matching leading axes.
    # ``gens`` holds one independent generator per data array, so per-index
    # sample values do not depend on the chunking of the draws.

    def draw_chunk(self, gens: tuple[np.random.Generator, ...], n: int):
        raise NotImplementedError

    def stochastic_grads(self, W: np.ndarray, data) -> np.ndarray:
        raise NotImplementedError

    def true_grads(self, W: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass
class LsProblem(ProblemInstance):
    w_loc: np.ndarray = None  # (K, M) stacked local minimizers
    lambda_mat: np.ndarray = None  # (K, M) stacked covariance diagonals
    noise_var: float = 0.1
    _sqrt_lambda: np.ndarray = field(default=None, repr=False)

    def draw_chunk(self, gens, n):
        u = gens[0].standard_normal((n, self.K, self.M)) * self._sqrt_lambda
        v = gens[1].standard_normal((n, self.K)) * math.sqrt(self.noise_var)
        d = (u * self.w_loc).sum(-1) + v  # observed readings, data-only
        return u, d

    def stochastic_grads(self, W, data):
        u, d = data
        return -2.0 * u * (d - (u * W).sum(-1))[..., None]

    def true_grads(self, W):
        return 2.0 * self.lambda_mat * (W - self.w_loc)


@dataclass
class LogisticProblem(ProblemInstance):
    w_loc: np.ndarray = None  # (K, M) unit-norm local minimizers
    rho: float = 0.001
    eval_features: np.ndarray = field(default=None, repr=False)  # (K, N, M)
    eval_labels: np.ndarray = field(default=None, repr=False)  # (K, N) in {-1, +1}
    eval_grads: np.ndarray = None  # (K, M) per-agent empirical gradients at w_star
    proxy_grad_norm: float = float("nan")

    def draw_chunk(self, gens, n):
        h = gens[0].standard_normal((n, self.K, self.M))
        z = gens[1].random((n, self.K))
        labels = np.where(z <= sigmoid((h * self.w_loc).sum(-1)), 1.0, -1.0)
        return h, labels

    def stochastic_grads(self, W, data):
        h, labels = data
        margin = labels * (h * W).sum(-1)
        return (-labels * sigmoid(-margin))[..., None] * h + self.rho * W

    def true_grads(self, W):
        # empirical-risk gradients over the frozen evaluation set; costly,
        # intended for deterministic runs and diagnostics only
        W2 = np.asarray(W)
        flat = W2.reshape(-1, self.K, self.M)
        out = np.empty_like(flat)
        for i, Wi in enumerate(flat):
            for k in range(self.K):
                out[i, k] = _empirical_grad(
                    self.eval_features[k], self.eval_labels[k], Wi[k], self.rho
                )
        return out.reshape(W2.shape)


# ---------------------------------------------------------------------------
# single-sample oracles (unit-test surface; the driver uses the chunked API)
# ---------------------------------------------------------------------------

def ls_stochastic_gradient(
    agent: LsAgentModel,
    w: np.ndarray,
    rng: np.random.Generator,
    deterministic: bool = False,
) -> np.ndarray:
    """One stochastic gradient draw of the least-squares loss at ``w``.

    With ``deterministic=True`` the exact gradient
    ``2 diag(lambda) (w - w_star_k)`` is returned and no randomness is used.
    """
    lam = np.asarray(agent.lambda_diag, dtype=float)
    if deterministic:
        return 2.0 * lam * (np.asarray(w) - agent.w_star_k)
    u = rng.standard_normal(lam.shape[0]) * np.sqrt(lam)
    v = rng.standard_normal() * math.sqrt(agent.noise_var)
    d = u @ agent.w_star_k + v
    return -2.0 * u * (d - u @ np.asarray(w))


def ls_true_gradient(agent: LsAgentModel, w: np.ndarray) -> np.ndarray:
    return 2.0 * np.asarray(agent.lambda_diag) * (np.asarray(w) - agent.w_star_k)


def logistic_stochastic_gradient(
    agent: LogisticAgentModel, w: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """One stochastic gradient draw of the regularized logistic loss at ``w``."""
    M = agent.w_star_k.shape[0]
    h = rng.standard_normal(M)
    z = rng.random()
    label = 1.0 if z <= sigmoid(h @ agent.w_star_k) else -1.0
    return logistic_sample_gradient(agent, w, h, label)


def logistic_sample_gradient(
    agent: LogisticAgentModel, w: np.ndarray, h: np.ndarray, label: float
) -> np.ndarray:
    """Gradient of the per-sample logistic loss for a fixed ``(h, label)``."""
    margin = label * (h @ np.asarray(w))
    return -label * sigmoid(-margin) * h + agent.rho * np.asarray(w)


def logistic_sample_loss(
    agent: LogisticAgentModel, w: np.ndarray, h: np.ndarray, label: float
) -> float:
    m = label * (h @ np.asarray(w))
    # log(1 + exp(-m)) evaluated stably
    loss = np.logaddexp(0.0, -m)
    return float(loss + 0.5 * agent.rho * np.sum(np.asarray(w) ** 2))


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

def ls_global_minimizer(lambda_mat: np.ndarray, w_loc: np.ndarray) -> np.ndarray:
    """Covariance-weighted average of the local minimizers: the unique
    stationary point of the summed least-squares costs."""
    lam = np.asarray(lambda_mat, dtype=float)
    w_loc = np.asarray(w_loc, dtype=float)
    return (lam * w_loc).sum(axis=0) / lam.sum(axis=0)


def make_ls_problem(
    K: int,
    M: int,
    seed: int,
    lambda_range: tuple[float, float] = (1.0, 2.0),
    noise_var: float = 0.1,
    zero_bias: bool = False,
    noise_samples: int = 1_000_000,
    deterministic: bool = False,
) -> LsProblem:
    """Build a least-squares instance.

    Local minimizers are standard Gaussian draws (one shared draw when
    ``zero_bias``), covariance diagonals are uniform on ``lambda_range``, and
    the global minimizer is the covariance-weighted average of the local
    ones. Noise covariances are Monte-Carlo estimates at ``w_star`` with
    ``noise_samples`` draws per agent (skipped, and set to zero, in
    deterministic mode).
    """
    lo, hi = lambda_range
    if K < 1 or M < 1:
        raise InvalidInputError("K and M must be >= 1")
    if not (0 < lo <= hi):
        raise InvalidInputError(f"degenerate lambda_range {lambda_range}")
    if noise_var < 0:
        raise InvalidInputError("noise_var must be >= 0")

    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0]))
    if zero_bias:
        shared = rng.standard_normal(M)
        w_loc = np.tile(shared, (K, 1))
    else:
        w_loc = rng.standard_normal((K, M))
    lam = rng.uniform(lo, hi, size=(K, M))

    w_star = ls_global_minimizer(lam, w_loc)
    agents = [LsAgentModel(w_loc[k].copy(), lam[k].copy(), noise_var) for k in range(K)]
    H_list = np.stack([np.diag(2.0 * lam[k]) for k in range(K)])

    grads_at_star = 2.0 * lam * (w_star - w_loc)
    b_sq = float((grads_at_star**2).sum(axis=1).mean())
    mean_grad = float(np.linalg.norm(grads_at_star.mean(axis=0)))
    if mean_grad > 1e-9:
        raise InvalidInputError(f"global minimizer residual {mean_grad:.3e} exceeds 1e-9")

    if deterministic:
        S_list = np.zeros((K, M, M))
    else:
        S_list = np.empty((K, M, M))
        for k in range(K):
            srng = np.random.default_rng(np.random.SeedSequence([int(seed), 1, k]))
            S_list[k] = estimate_noise_covariance(
                agents[k], w_star, noise_samples, srng, true_grad=grads_at_star[k]
            )
    sigma_sq = float(np.trace(S_list.sum(axis=0)) / K)

    # quadratic-growth constant of the noise second moment:
    # E||s(w)||^2 <= beta_k^2 ||w - w_star||^2 + const, with
    # beta_k^2 = 8 (max(lambda)^2 + max(lambda) * sum(lambda))
    beta_max_sq = float(max(8.0 * (lam[k].max() ** 2 + lam[k].max() * lam[k].sum()) for k in range(K)))

    return LsProblem(
        family="ls", K=K, M=M, agents=agents, w_star=w_star,
        H_list=H_list, S_list=S_list, b_sq=b_sq, sigma_sq=sigma_sq,
        nu=float(2.0 * lam.min()), delta=float(2.0 * lam.max()),
        beta_max_sq=beta_max_sq, deterministic_mode=deterministic,
        w_loc=w_loc, lambda_mat=lam, noise_var=noise_var,
        _sqrt_lambda=np.sqrt(lam),
    )


def _empirical_grad(features: np.ndarray, labels: np.ndarray, w: np.ndarray, rho: float) -> np.ndarray:
    margin = labels * (features @ w)
    coef = -labels * sigmoid(-margin)
    return coef @ features / features.shape[0] + rho * w


def make_logistic_problem(
    K: int,
    M: int,
    seed: int,
    rho: float = 0.001,
    eval_sample_count: int = 200_000,
    noise_samples: int = 100_000,
    zero_bias: bool = False,
) -> LogisticProblem:
    """Build a logistic-regression instance.

    A frozen evaluation set of ``eval_sample_count`` samples per agent defines
    the empirical risk whose minimizer serves as the global-minimizer proxy;
    full-batch gradient descent refines it until the gradient norm drops
    below 1e-10. Hessians, per-agent gradients (for the bias) and noise
    covariances are then measured at the proxy. ``zero_bias`` gives every
    agent the same local minimizer and the same frozen evaluation set, making
    the local risks identical.
    """
    if K < 1 or M < 1:
        raise InvalidInputError("K and M must be >= 1")
    if rho <= 0:
        raise InvalidInputError("rho must be > 0")
    if eval_sample_count < MIN_EVAL_SAMPLES:
        raise InvalidInputError(f"eval_sample_count must be >= {MIN_EVAL_SAMPLES}")

    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0]))
    if zero_bias:
        shared = rng.standard_normal(M)
        w_loc = np.tile(shared, (K, 1))
    else:
        w_loc = rng.standard_normal((K, M))
    w_loc /= np.linalg.norm(w_loc, axis=1, keepdims=True)
    agents = [LogisticAgentModel(w_loc[k].copy(), rho) for k in range(K)]

    N = int(eval_sample_count)
    features = np.empty((K, N, M))
    labels = np.empty((K, N))
    for k in range(K):
        if zero_bias and k > 0:
            features[k] = features[0]
            labels[k] = labels[0]
            continue
        h = rng.standard_normal((N, M))
        z = rng.random(N)
        features[k] = h
        labels[k] = np.where(z <= sigmoid(h @ w_loc[k]), 1.0, -1.0)

    # fixed step from the curvature upper bound rho + max-eig(mean hh^T)/4
    second_moment = sum(features[k].T @ features[k] for k in range(K)) / (K * N)
    step = 1.0 / (rho + float(np.linalg.eigvalsh(second_moment)[-1]) / 4.0)

    w = np.zeros(M)
    grad_norm = float("inf")
    for _ in range(PROXY_MAX_ITER):
        g = np.mean([_empirical_grad(features[k], labels[k], w, rho) for k in range(K)], axis=0)
        grad_norm = float(np.linalg.norm(g))
        if grad_norm <= PROXY_GRAD_TOL:
            break
        w = w - step * g
    else:
        raise ConvergenceError(
            f"proxy solver stuck at gradient norm {grad_norm:.3e} after {PROXY_MAX_ITER} iterations"
        )
    w_star = w

    H_list = np.empty((K, M, M))
    eval_grads = np.empty((K, M))
    for k in range(K):
        margin = features[k] @ w_star
        sp = sigmoid(margin) * sigmoid(-margin)
        Hk = (features[k] * sp[:, None]).T @ features[k] / N
        H_list[k] = 0.5 * (Hk + Hk.T) + rho * np.eye(M)
        eval_grads[k] = _empirical_grad(features[k], labels[k], w_star, rho)

    b_sq = float((eval_grads**2).sum(axis=1).mean())
    mean_grad = float(np.linalg.norm(eval_grads.mean(axis=0)))
    if mean_grad > 1e-7:
        raise InvalidInputError(f"proxy minimizer residual {mean_grad:.3e} exceeds 1e-7")

    S_list = np.empty((K, M, M))
    for k in range(K):
        srng = np.random.default_rng(np.random.SeedSequence([int(seed), 1, k]))
        S_list[k] = estimate_noise_covariance(
            agents[k], w_star, noise_samples, srng, true_grad=eval_grads[k]
        )
    sigma_sq = float(np.trace(S_list.sum(axis=0)) / K)

    eigs = np.linalg.eigvalsh(H_list)
    return LogisticProblem(
        family="logistic", K=K, M=M, agents=agents, w_star=w_star,
        H_list=H_list, S_list=S_list, b_sq=b_sq, sigma_sq=sigma_sq,
        nu=float(eigs.min()), delta=float(eigs.max()),
        beta_max_sq=0.0,  # logistic gradient noise is uniformly bounded
        w_loc=w_loc, rho=rho,
        eval_features=features, eval_labels=labels, eval_grads=eval_grads,
        proxy_grad_norm=grad_norm,
    )


# ---------------------------------------------------------------------------
# noise covariance and bias
# ---------------------------------------------------------------------------

def estimate_noise_covariance(
    agent,
    w_star: np.ndarray,
    sample_count: int,
    rng: np.random.Generator,
    true_grad: np.ndarray | None = None,
    deterministic: bool = False,
) -> np.ndarray:
    """Monte-Carlo estimate of the gradient-noise covariance at ``w_star``.

    Noise is the stochastic gradient minus the reference gradient
    ``true_grad`` (the exact gradient for least squares; the frozen-set
    empirical gradient for logistic; the sample mean when not supplied).
    The symmetrized estimate has its eigenvalues clamped at zero so the
    result is PSD.
    """
    if deterministic:
        M = np.asarray(w_star).shape[0]
        return np.zeros((M, M))
    if sample_count < MIN_NOISE_SAMPLES:
        raise InvalidInputError(f"sample_count must be >= {MIN_NOISE_SAMPLES}")

    w_star = np.asarray(w_star, dtype=float)
    M = w_star.shape[0]
    if true_grad is None and isinstance(agent, LsAgentModel):
        true_grad = ls_true_gradient(agent, w_star)

    outer = np.zeros((M, M))
    mean = np.zeros(M)
    remaining = int(sample_count)
    chunk_size = max(1, min(remaining, int(4_000_000 / max(M, 1))))
    while remaining > 0:
        n = min(chunk_size, remaining)
        if isinstance(agent, LsAgentModel):
            lam = np.asarray(agent.lambda_diag)
            u = rng.standard_normal((n, M)) * np.sqrt(lam)
            v = rng.standard_normal(n) * math.sqrt(agent.noise_var)
            d = u @ agent.w_star_k + v
            g = -2.0 * u * (d - u @ w_star)[:, None]
        else:
            h = rng.standard_normal((n, M))
            z = rng.random(n)
            lab = np.where(z <= sigmoid(h @ agent.w_star_k), 1.0, -1.0)
            margin = lab * (h @ w_star)
            g = (-lab * sigmoid(-margin))[:, None] * h + agent.rho * w_star
        outer += g.T @ g
        mean += g.sum(axis=0)
        remaining -= n

    n_tot = float(sample_count)
    mean /= n_tot
    center = mean if true_grad is None else np.asarray(true_grad, dtype=float)
    second = outer / n_tot
    cov = second - np.outer(center, mean) - np.outer(mean, center) + np.outer(center, center)
    cov = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(cov)
    return (vecs * np.clip(vals, 0.0, None)) @ vecs.T


def compute_bias(instance: ProblemInstance) -> float:
    """Average squared norm of the per-agent gradients at the global
    minimizer; zero exactly when all local minimizers agree."""
    if instance.family == "ls":
        grads = 2.0 * instance.lambda_mat * (instance.w_star - instance.w_loc)
    else:
        grads = instance.eval_grads
    return float((np.asarray(grads) ** 2).sum(axis=1).mean())
