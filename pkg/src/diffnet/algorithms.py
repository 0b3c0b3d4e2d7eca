"""Iteration steppers and run drivers for the decentralized methods.

All steppers act on iterate blocks ``W`` of shape ``(..., K, M)`` — leading
axes, when present, index independent Monte-Carlo runs advanced in lockstep.
``grads`` must be the stochastic (or exact) gradients evaluated at the
current ``state.W``; each stepper returns a new state and leaves its inputs
untouched.

Update rules (``A`` the combination matrix, ``abar = (A + I)/2``,
``v = sqrt(I - abar)``, ``mu`` the step size, ``G`` the gradients):

* diffusion (adapt-then-combine):      ``W <- A (W - mu G)``
* exact diffusion (correction form):   ``psi = W - mu G``;
  ``W <- abar (psi + W - psi_prev)``; ``psi_prev <- psi``
* exact diffusion (primal-dual form):  ``W <- abar (W - mu G) - v Y``;
  ``Y <- Y + v W``
* gradient tracking (adapt-then-combine): an auxiliary variable follows the
  network-average gradient by dynamic consensus; per iteration it costs two
  neighbor exchanges instead of one:
  ``ytrack <- A (ytrack + G - g_prev)``; ``W <- A (W - mu ytrack)``
* centralized SGD baseline:            ``w <- w - (mu/K) sum_k g_k``

All states start at zero. The two exact-diffusion forms generate identical
trajectories for a shared gradient sequence.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DivergenceError, InvalidInputError
from .problems import ProblemInstance
from .topology import CombinationMatrix

METHODS = (
    "diffusion",
    "exact_diffusion",
    "exact_diffusion_pd",
    "gradient_tracking",
    "centralized_sgd",
)


@dataclass
class AlgorithmConfig:
    method: str
    mu: float
    iterations: int
    deterministic: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidInputError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if not self.mu > 0:
            raise InvalidInputError(f"step size must be > 0, got {self.mu}")
        if self.iterations < 1:
            raise InvalidInputError(f"iterations must be >= 1, got {self.iterations}")


@dataclass
class NetworkState:
    """Per-method iterate block; only the fields the active method needs are
    populated."""

    W: np.ndarray
    iteration: int = 0
    psi_prev: np.ndarray | None = None  # exact diffusion, correction form
    y: np.ndarray | None = None  # exact diffusion, primal-dual form
    ytrack: np.ndarray | None = None  # gradient tracking
    g_prev: np.ndarray | None = None  # gradient tracking


def init_state(method: str, shape: tuple[int, ...]) -> NetworkState:
    """All-zero initial state with the field set the method requires."""
    W = np.zeros(shape)
    if method == "exact_diffusion":
        return NetworkState(W=W, psi_prev=np.zeros(shape))
    if method == "exact_diffusion_pd":
        return NetworkState(W=W, y=np.zeros(shape))
    # gradient tracking fills ytrack/g_prev from the first gradients
    return NetworkState(W=W)


def _check_grads(state: NetworkState, grads: np.ndarray) -> np.ndarray:
    grads = np.asarray(grads)
    if grads.shape != state.W.shape:
        raise InvalidInputError(
            f"gradient block shape {grads.shape} does not match iterates {state.W.shape}"
        )
    return grads


def step_diffusion(
    state: NetworkState, comb: CombinationMatrix, grads: np.ndarray, mu: float
) -> NetworkState:
    """One adapt-then-combine diffusion step."""
    grads = _check_grads(state, grads)
    W = np.matmul(comb.A, state.W - mu * grads)
    return replace(state, W=W, iteration=state.iteration + 1)


def step_exact_diffusion(
    state: NetworkState, comb: CombinationMatrix, grads: np.ndarray, mu: float
) -> NetworkState:
    """One exact-diffusion step in adapt / correct / combine form."""
    grads = _check_grads(state, grads)
    psi = state.W - mu * grads
    phi = psi + state.W - state.psi_prev
    W = np.matmul(comb.abar, phi)
    return replace(state, W=W, psi_prev=psi, iteration=state.iteration + 1)


def step_exact_diffusion_pd(
    state: NetworkState, comb: CombinationMatrix, grads: np.ndarray, mu: float
) -> NetworkState:
    """One exact-diffusion step in primal-dual form; ``v`` acts on the agent
    axis, coordinate by coordinate."""
    grads = _check_grads(state, grads)
    W = np.matmul(comb.abar, state.W - mu * grads) - np.matmul(comb.v, state.y)
    y = state.y + np.matmul(comb.v, W)
    return replace(state, W=W, y=y, iteration=state.iteration + 1)


def step_gradient_tracking(
    state: NetworkState, comb: CombinationMatrix, grads: np.ndarray, mu: float
) -> NetworkState:
    """One adapt-then-combine gradient-tracking step.

    ``grads`` must be evaluated at ``state.W``. On the first call the tracker
    is seeded with these gradients; afterwards it is refreshed by dynamic
    consensus before the iterate moves, so the tracker always holds the
    latest gradient information and its agent-average equals that of the
    gradients it has absorbed.
    """
    grads = _check_grads(state, grads)
    if state.ytrack is None:
        ytrack = grads.copy()
    else:
        ytrack = np.matmul(comb.A, state.ytrack + grads - state.g_prev)
    W = np.matmul(comb.A, state.W - mu * ytrack)
    return replace(
        state, W=W, ytrack=ytrack, g_prev=grads.copy(), iteration=state.iteration + 1
    )


def step_centralized_sgd(state: NetworkState, grads: np.ndarray, mu: float) -> NetworkState:
    """Centralized-SGD reference: one shared iterate moved by the agent-average
    gradient. ``state.W`` keeps the shared iterate replicated across the agent
    axis so the oracle and metric surfaces stay uniform."""
    grads = _check_grads(state, grads)
    W = state.W - mu * grads.mean(axis=-2, keepdims=True)
    return replace(state, W=np.broadcast_to(W, state.W.shape).copy(), iteration=state.iteration + 1)


_STEPPERS = {
    "diffusion": step_diffusion,
    "exact_diffusion": step_exact_diffusion,
    "exact_diffusion_pd": step_exact_diffusion_pd,
    "gradient_tracking": step_gradient_tracking,
}


@dataclass
class RunResult:
    msd: np.ndarray  # (iterations,) for run(); (R, iterations) for run_batch()
    final_state: NetworkState
    iterates: np.ndarray | None = None  # optional (iterations, ..., K, M) snapshots


def _chunk_iters(R: int, K: int, M: int) -> int:
    # keep a draw buffer around 30 MB regardless of problem size
    return max(1, min(512, int(4_000_000 / max(1, R * K * M))))


def make_streams(seed) -> tuple[np.random.Generator, ...]:
    """Expand a per-run seed into one independent generator per data array.

    Each array of a data chunk (regressors, observation noise, ...) is drawn
    from its own stream, so the values at a given iteration index do not
    depend on chunk boundaries, batching width, or any other method's
    consumption pattern. Children are derived statelessly (no ``spawn``
    counters), so expanding the same seed twice yields the same streams.
    """
    if isinstance(seed, tuple):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    children = (
        np.random.SeedSequence(entropy=seed.entropy, spawn_key=tuple(seed.spawn_key) + (j,))
        for j in range(2)
    )
    return tuple(np.random.Generator(np.random.PCG64(child)) for child in children)


def run(
    config: AlgorithmConfig,
    problem: ProblemInstance,
    comb: CombinationMatrix,
    rng,
    record_iterates: bool = False,
) -> RunResult:
    """Execute one run; returns per-iteration mean-square deviation
    ``mean_k ||w_k - w_star||^2`` (and optionally full iterate snapshots).

    ``rng`` may be an int seed, a ``SeedSequence``, or a tuple of generators
    from :func:`make_streams`.
    """
    result = run_batch(config, problem, comb, [rng], record_iterates)
    return RunResult(
        msd=result.msd[0],
        final_state=_squeeze_state(result.final_state),
        iterates=None if result.iterates is None else result.iterates[:, 0],
    )


def _squeeze_state(state: NetworkState) -> NetworkState:
    def sq(a):
        return None if a is None else a[0]

    return NetworkState(
        W=state.W[0], iteration=state.iteration, psi_prev=sq(state.psi_prev),
        y=sq(state.y), ytrack=sq(state.ytrack), g_prev=sq(state.g_prev),
    )


def run_batch(
    config: AlgorithmConfig,
    problem: ProblemInstance,
    comb: CombinationMatrix,
    seeds: list,
    record_iterates: bool = False,
) -> RunResult:
    """Advance independent Monte-Carlo runs in lockstep, one per seed.

    A run's sample stream is a pure function of its seed: each data array has
    its own generator (see :func:`make_streams`), so the values at a given
    iteration are independent of the chunked draw layout, of how many runs
    are batched together, and of which method consumes them.
    """
    if problem.K != comb.K:
        raise InvalidInputError(f"problem has K={problem.K} but matrix has K={comb.K}")
    K, M, R = problem.K, problem.M, len(seeds)
    T = config.iterations
    deterministic = config.deterministic or problem.deterministic_mode
    streams = [make_streams(s) for s in seeds]

    state = init_state(config.method, (R, K, M))
    w_star = problem.w_star
    msd = np.empty((R, T))
    snapshots = np.empty((T, R, K, M)) if record_iterates else None

    stepper = _STEPPERS.get(config.method)
    chunk = _chunk_iters(R, K, M)
    done = 0
    while done < T:
        n = min(chunk, T - done)
        data = None
        if not deterministic:
            per_run = [problem.draw_chunk(g, n) for g in streams]
            data = tuple(np.stack(arrs) for arrs in zip(*per_run))  # each (R, n, K, ...)
        for j in range(n):
            i = done + j
            # divergence shows up as inf/nan in the deviation; keep it quiet
            # until the explicit check below
            with np.errstate(over="ignore", invalid="ignore"):
                if deterministic:
                    grads = problem.true_grads(state.W)
                else:
                    slice_i = tuple(arr[:, j] for arr in data)
                    grads = problem.stochastic_grads(state.W, slice_i)
                if stepper is not None:
                    state = stepper(state, comb, grads, config.mu)
                else:
                    state = step_centralized_sgd(state, grads, config.mu)
                msd[:, i] = ((state.W - w_star) ** 2).sum(axis=-1).mean(axis=-1)
            if snapshots is not None:
                snapshots[i] = state.W
            if not np.all(np.isfinite(msd[:, i])):
                raise DivergenceError(
                    f"non-finite iterate in method {config.method!r} at iteration {i + 1} "
                    f"(mu={config.mu})",
                    iteration=i + 1,
                )
        done += n

    return RunResult(msd=msd, final_state=state, iterates=snapshots)
