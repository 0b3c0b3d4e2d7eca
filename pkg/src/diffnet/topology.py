"""Network graphs, combination matrices and their spectral quantities.

The combination matrix ``A`` is symmetric, doubly stochastic, and supported
on the graph edges plus the diagonal. Derived objects:

* ``abar = (A + I)/2`` — the lazier matrix used by exact diffusion,
* ``v`` — the symmetric PSD square root of ``I - abar``; it annihilates the
  consensus direction (``v @ 1 = 0``) and drives the dual update,
* ``lam = max(|lambda2(A)|, |lambda_min(A)|)`` — the mixing parameter; the
  spectral gap is ``1 - lam`` (small gap = sparse, slowly mixing network).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import ConstructionError, InvalidInputError

TOPOLOGY_KINDS = ("line", "cycle", "grid", "complete", "random")


@dataclass(frozen=True)
class Graph:
    """Undirected connected graph over ``K`` agents (no self-loops)."""

    K: int
    edges: tuple[tuple[int, int], ...]
    kind: str

    def __post_init__(self):
        seen = set()
        for a, b in self.edges:
            if a == b:
                raise InvalidInputError(f"self-loop at node {a}")
            if not (0 <= a < self.K and 0 <= b < self.K):
                raise InvalidInputError(f"edge ({a},{b}) out of range for K={self.K}")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise InvalidInputError(f"duplicate edge {key}")
            seen.add(key)
        if not _is_connected(self.K, self.edges):
            raise InvalidInputError("graph is not connected")

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.K, dtype=int)
        for a, b in self.edges:
            deg[a] += 1
            deg[b] += 1
        return deg

    def is_complete(self) -> bool:
        return len(self.edges) == self.K * (self.K - 1) // 2


@dataclass
class CombinationMatrix:
    """Symmetric doubly-stochastic weights plus derived spectral data.

    ``lambda2``/``lambda_min`` are the second-largest and smallest eigenvalues
    of ``A``; for ``K = 1`` there are no secondary modes and both are 0 by
    convention. ``lambda_prime = (1 + lambda2)/2`` equals the second-largest
    eigenvalue of ``abar``.
    """

    A: np.ndarray
    abar: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    lambda2: float
    lambda_min: float
    lam: float
    lambda_prime: float

    @property
    def K(self) -> int:
        return self.A.shape[0]

    @property
    def gap(self) -> float:
        return 1.0 - self.lam


def _is_connected(K: int, edges) -> bool:
    if K <= 1:
        return True
    adj: list[list[int]] = [[] for _ in range(K)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = {0}
    queue = deque([0])
    while queue:
        node = queue.popleft()
        for nxt in adj[node]:
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return len(seen) == K


def build_graph(
    kind: str,
    K: int,
    edge_probability: float | None = None,
    seed: int | None = None,
) -> Graph:
    """Construct a connected graph of the requested family.

    ``grid`` requires ``K`` to be a perfect square (sqrt(K) x sqrt(K) lattice
    with 4-neighbor adjacency). ``random`` draws Erdos-Renyi graphs with the
    given edge probability, rejecting disconnected samples up to 1000 times.
    """
    if kind not in TOPOLOGY_KINDS:
        raise InvalidInputError(f"unknown topology kind {kind!r}; expected one of {TOPOLOGY_KINDS}")
    if K < 1:
        raise InvalidInputError(f"K must be >= 1, got {K}")

    if kind == "line":
        edges = tuple((i, i + 1) for i in range(K - 1))
    elif kind == "cycle":
        if K < 3:
            raise InvalidInputError("cycle requires K >= 3")
        edges = tuple((i, (i + 1) % K) for i in range(K))
    elif kind == "grid":
        side = round(K**0.5)
        if side * side != K:
            raise InvalidInputError(f"grid requires a perfect square K, got {K}")
        edge_list = []
        for r in range(side):
            for c in range(side):
                i = r * side + c
                if c + 1 < side:
                    edge_list.append((i, i + 1))
                if r + 1 < side:
                    edge_list.append((i, i + side))
        edges = tuple(edge_list)
    elif kind == "complete":
        edges = tuple((i, j) for i in range(K) for j in range(i + 1, K))
    else:  # random
        if edge_probability is None or not (0.0 < edge_probability <= 1.0):
            raise InvalidInputError("random graph requires edge_probability in (0, 1]")
        rng = np.random.default_rng(seed)
        for _ in range(1000):
            mask = rng.random((K, K)) < edge_probability
            edges = tuple(
                (i, j) for i in range(K) for j in range(i + 1, K) if mask[i, j]
            )
            if _is_connected(K, edges):
                break
        else:
            raise ConstructionError(
                f"no connected random graph found in 1000 draws (K={K}, p={edge_probability})"
            )
    return Graph(K=K, edges=edges, kind=kind)


def _finalize(A: np.ndarray, graph: Graph) -> CombinationMatrix:
    K = graph.K
    if K == 1:
        return CombinationMatrix(
            A=A, abar=np.ones((1, 1)), v=np.zeros((1, 1)),
            lambda2=0.0, lambda_min=0.0, lam=0.0, lambda_prime=0.0,
        )
    vals, _ = linalg.sym_eig(A)
    lambda2 = float(vals[1])
    lambda_min = float(vals[-1])
    lam = max(abs(lambda2), abs(lambda_min))
    abar = 0.5 * (A + np.eye(K))
    v = linalg.sym_sqrt(np.eye(K) - abar)
    lambda_prime = 0.5 * (1.0 + lambda2)
    abar_vals, _ = linalg.sym_eig(abar)
    if abs(abar_vals[1] - lambda_prime) > 1e-10:
        raise InvalidInputError(
            f"spectral cross-check failed: lambda_prime {lambda_prime} vs {abar_vals[1]}"
        )
    return CombinationMatrix(
        A=A, abar=abar, v=v,
        lambda2=lambda2, lambda_min=lambda_min, lam=lam, lambda_prime=lambda_prime,
    )


def metropolis_weights(graph: Graph) -> CombinationMatrix:
    """Metropolis-Hastings weights: symmetric and doubly stochastic on any
    connected graph.

    Edge weight ``1/(1 + max(deg_l, deg_k))``; the diagonal absorbs the
    remainder so every row sums to one.
    """
    K = graph.K
    deg = graph.degrees()
    A = np.zeros((K, K))
    for a, b in graph.edges:
        w = 1.0 / (1.0 + max(deg[a], deg[b]))
        A[a, b] = w
        A[b, a] = w
    np.fill_diagonal(A, 1.0 - A.sum(axis=1))
    return _finalize(A, graph)


def uniform_weights(graph: Graph) -> CombinationMatrix:
    """Uniform ``1/K`` weights; only valid on a complete graph and gives
    ``lam = 0`` exactly."""
    if not graph.is_complete():
        raise InvalidInputError("uniform weights require a complete graph")
    K = graph.K
    A = np.full((K, K), 1.0 / K)
    comb = _finalize(A, graph)
    # rank-one structure: the secondary spectrum is exactly zero
    comb.lambda2 = 0.0 if K > 1 else comb.lambda2
    comb.lambda_min = 0.0 if K > 1 else comb.lambda_min
    comb.lam = 0.0
    comb.lambda_prime = 0.5 if K > 1 else comb.lambda_prime
    return comb


def spectral_gap_scan(
    kind: str,
    sizes: list[int],
    edge_probability: float | None = None,
    seed: int | None = None,
) -> list[tuple[int, float]]:
    """Spectral gap ``1 - lam`` under Metropolis weights for each size."""
    out = []
    for K in sizes:
        comb = metropolis_weights(build_graph(kind, K, edge_probability, seed))
        out.append((K, comb.gap))
    return out


def cycle_gap_analytic(K: int) -> float:
    """Closed-form Metropolis cycle gap ``(2/3)(1 - cos(2*pi/K))`` (K >= 5).

    For K in {3, 4} the magnitude of the most negative eigenvalue takes over
    and the general circulant expression below is evaluated instead.
    """
    if K < 3:
        raise InvalidInputError("cycle requires K >= 3")
    modes = 1.0 / 3.0 + (2.0 / 3.0) * np.cos(2.0 * np.pi * np.arange(1, K) / K)
    return 1.0 - float(np.abs(modes).max())
