"""Abelian sandpile dynamics on gasket graphs.

Heights live on the non-sink vertices of a :class:`GasketGraph` in canonical
order.  Toppling ``v`` subtracts row ``v`` of the reduced Laplacian (sink row
and column deleted), so chips sent along sink edges vanish.

The default stabilizer first jumps ahead by a provable lower bound on the
odometer and then finishes with ordinary legal topplings.  When the result is
known to be recurrent it instead takes a certified shortcut through the
unique recurrent configuration of the class; see :func:`stabilize`.  The named toppling orders (``fifo``, ``lifo``, ``random``,
``parallel``) are plain reference schedulers used to check the abelian
property.
"""

from __future__ import annotations

import logging
import os
import random
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .gasket import GasketGraph

log = logging.getLogger(__name__)

# termination is guaranteed; the cap only catches implementation bugs
MAX_TOPPLINGS = 10**12

DEBUG = os.environ.get("GASKET_SANDPILE_DEBUG", "") not in ("", "0")

ORDERS = ("fast", "fifo", "lifo", "random", "parallel")


class SandpileError(ValueError):
    pass


class VerificationError(RuntimeError):
    """The engine failed one of its own post-conditions."""


@dataclass(frozen=True, eq=False)
class SandpileConfig:
    graph: GasketGraph
    heights: np.ndarray

    def __post_init__(self):
        h = np.array(self.heights, dtype=np.int64)
        if h.shape != (self.graph.n_vertices,):
            raise SandpileError(f"expected {self.graph.n_vertices} heights, got shape {h.shape}")
        if (h < 0).any():
            raise SandpileError("heights must be non-negative")
        h.setflags(write=False)
        object.__setattr__(self, "heights", h)

    def __eq__(self, other):
        if not isinstance(other, SandpileConfig):
            return NotImplemented
        return _same_graph(self.graph, other.graph) and np.array_equal(self.heights, other.heights)

    def __add__(self, other: "SandpileConfig") -> "SandpileConfig":
        _require_same_graph(self.graph, other.graph)
        return SandpileConfig(self.graph, self.heights + other.heights)

    def is_stable(self) -> bool:
        return bool((self.heights < self.graph.degree).all())

    @property
    def total(self) -> int:
        return int(self.heights.sum())

    def to_json(self) -> dict:
        return {"level": self.graph.level, "sink": self.graph.sink.value, "heights": self.heights.tolist()}


@dataclass(frozen=True)
class BurnReport:
    recurrent: bool
    burn_order: list[int] = field(default_factory=list)


def _same_graph(a: GasketGraph, b: GasketGraph) -> bool:
    return a is b or (a.level == b.level and a.sink is b.sink)


def _require_same_graph(a: GasketGraph, b: GasketGraph) -> None:
    if not _same_graph(a, b):
        raise SandpileError(
            f"graph mismatch: level {a.level}/{a.sink.value} vs level {b.level}/{b.sink.value}"
        )


# -- linear algebra ----------------------------------------------------------


@lru_cache(maxsize=16)
def laplacian(graph: GasketGraph) -> sp.csr_matrix:
    """Reduced graph Laplacian (sink row and column removed), integer entries."""
    indptr, indices, mult = graph.csr
    n = graph.n_vertices
    adj = sp.csr_matrix((mult, indices, indptr), shape=(n, n), dtype=np.int64)
    return (sp.diags(graph.degree, dtype=np.int64) - adj).tocsr()


@lru_cache(maxsize=16)
def _factor(graph: GasketGraph):
    return splu(laplacian(graph).astype(float).tocsc())


def group_order(graph: GasketGraph) -> int:
    """Number of recurrent configurations: det of the reduced Laplacian.

    Fraction-free Gaussian elimination (Bareiss) over Python integers, so the
    result is exact.  Cost is cubic; meant for small graphs.
    """
    a = [[int(x) for x in row] for row in laplacian(graph).toarray()]
    n = len(a)
    if n == 0:
        return 1
    sign, prev = 1, 1
    for k in range(n - 1):
        if a[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if a[i][k] != 0), None)
            if swap is None:
                return 0
            a[k], a[swap] = a[swap], a[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
        prev = a[k][k]
    return sign * a[n - 1][n - 1]


# -- basic configurations ----------------------------------------------------


def max_config(graph: GasketGraph) -> SandpileConfig:
    return SandpileConfig(graph, graph.degree - 1)


def zero_config(graph: GasketGraph) -> SandpileConfig:
    return SandpileConfig(graph, np.zeros(graph.n_vertices, dtype=np.int64))


def topple(config: SandpileConfig, v: int) -> SandpileConfig:
    """Fire vertex ``v`` once; it must hold at least ``degree(v)`` chips."""
    g = config.graph
    if config.heights[v] < g.degree[v]:
        raise SandpileError(f"illegal toppling at vertex {v}: height {config.heights[v]} < degree {g.degree[v]}")
    h = config.heights.copy()
    h[v] -= g.degree[v]
    indptr, indices, mult = g.csr
    sl = slice(indptr[v], indptr[v + 1])
    np.add.at(h, indices[sl], mult[sl])
    return SandpileConfig(g, h)


# -- stabilization -----------------------------------------------------------


def _neighbour_lists(graph: GasketGraph) -> list[list[tuple[int, int]]]:
    indptr, indices, mult = graph.csr
    ind, m = indices.tolist(), mult.tolist()
    return [list(zip(ind[a:b], m[a:b])) for a, b in zip(indptr[:-1].tolist(), indptr[1:].tolist())]


def _relax_reference(graph: GasketGraph, h: list[int], order: str, seed) -> list[int]:
    """Single-toppling reference schedulers (pure Python, small graphs)."""
    deg = graph.degree.tolist()
    nbrs = _neighbour_lists(graph)
    odo = [0] * len(h)
    count = 0

    def fire(v):
        nonlocal count
        h[v] -= deg[v]
        odo[v] += 1
        for u, m in nbrs[v]:
            h[u] += m
        count += 1
        if count > MAX_TOPPLINGS:
            raise VerificationError(f"toppling cap {MAX_TOPPLINGS} exceeded")

    if order == "parallel":
        unstable = [v for v in range(len(h)) if h[v] >= deg[v]]
        while unstable:
            for v in unstable:
                fire(v)
            unstable = [v for v in range(len(h)) if h[v] >= deg[v]]
        return odo

    if order == "random":
        rng = random.Random(seed)
        unstable = {v for v in range(len(h)) if h[v] >= deg[v]}
        while unstable:
            v = rng.choice(sorted(unstable))
            fire(v)
            if h[v] < deg[v]:
                unstable.discard(v)
            for u, _ in nbrs[v]:
                if h[u] >= deg[u]:
                    unstable.add(u)
        return odo

    pending = deque(v for v in range(len(h)) if h[v] >= deg[v])
    queued = set(pending)
    pop = pending.popleft if order == "fifo" else pending.pop
    while pending:
        v = pop()
        queued.discard(v)
        if h[v] < deg[v]:
            continue
        fire(v)
        for u in [v] + [u for u, _ in nbrs[v]]:
            if u not in queued and h[u] >= deg[u]:
                pending.append(u)
                queued.add(u)
    return odo


@lru_cache(maxsize=16)
def _layout(graph: GasketGraph) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Kernel layout: ``(perm, padded neighbour table, degrees)`` in cell-recursive order.

    ``perm[k]`` is the canonical index stored at kernel slot ``k``.  Ordering
    vertices by their cell address keeps neighbours close in memory.
    """
    p, q = graph.keys[:, 0].copy(), graph.keys[:, 1].copy()
    code = np.zeros(graph.n_vertices, dtype=np.int64)
    for k in range(graph.level - 1, -1, -1):
        half = 1 << k
        c = np.where(p >= half, 1, np.where(q >= half, 2, 0))
        p = np.where(c == 1, p - half, p)
        q = np.where(c == 2, q - half, q)
        code = code * 3 + c
    perm = np.argsort(code * 4 + p * 2 + q, kind="stable")
    slot = np.empty_like(perm)
    slot[perm] = np.arange(len(perm))

    indptr, indices, mult = graph.csr
    n = graph.n_vertices
    width = int(max((graph.degree - graph.sink_multiplicity).max(initial=0), 1))
    table = np.full((n, width), n, dtype=np.int64)
    for k, v in enumerate(perm):
        row = np.repeat(slot[indices[indptr[v]:indptr[v + 1]]], mult[indptr[v]:indptr[v + 1]])
        table[k, : len(row)] = row
    return perm, table, graph.degree[perm]


def _relax_fast(graph: GasketGraph, h: np.ndarray) -> np.ndarray:
    from ._kernels import relax_sweep

    odo = np.zeros(len(h), dtype=np.int64)
    if not (h >= graph.degree).any():
        return odo
    # Least action: the true odometer u solves L u = h - h_final with
    # h_final <= degree - 1, and L^{-1} is entrywise non-negative, so
    # u >= L^{-1}(h - (degree - 1)).  Any integer v with 0 <= v <= u may be
    # applied up front (heights can go negative meanwhile); legal topplings
    # from h - L v then need exactly u - v more firings.
    x = _factor(graph).solve((h - (graph.degree - 1)).astype(float))
    jump = np.maximum(np.floor(x), 0).astype(np.int64)
    if jump.any():
        h -= laplacian(graph) @ jump
        odo += jump
    perm, table, degree = _layout(graph)
    work = np.zeros(len(h) + 1, dtype=np.int64)
    work[:-1] = h[perm]
    extra = np.zeros(len(h), dtype=np.int64)
    if relax_sweep(work, table, degree, extra, MAX_TOPPLINGS) < 0:
        raise VerificationError(f"toppling cap {MAX_TOPPLINGS} exceeded")
    h[perm] = work[:-1]
    odo[perm] += extra
    return odo


_PROJECTION_ROUNDS = 16
_BISECTION_STEPS = 6


def _certified_attempt(graph: GasketGraph, h: np.ndarray, guess: np.ndarray, budget: int):
    """Try to reach the recurrent representative of ``h`` from a guessed final profile.

    Returns ``("ok", final)``, or ``("low", None)`` / ``("high", None)`` when the
    guess asked for too few / too many topplings to finish within ``budget``.
    """
    from ._kernels import project_recurrent, relax_sweep

    perm, table, degree = _layout(graph)
    n = graph.n_vertices
    x = _factor(graph).solve((h - guess).astype(float))
    work = np.zeros(n + 1, dtype=np.int64)
    work[:-1] = (h - laplacian(graph) @ np.maximum(np.round(x), 0).astype(np.int64))[perm]
    scratch = np.zeros(n, dtype=np.int64)
    # push every height below its degree, then (mirror image) every height up to zero
    if relax_sweep(work, table, degree, scratch, budget) < 0:
        return "low", None
    work[:-1] = degree - 1 - work[:-1]
    if relax_sweep(work, table, degree, scratch, budget) < 0:
        return "high", None
    work[:-1] = degree - 1 - work[:-1]
    beta = graph.sink_multiplicity[perm].astype(np.int64)
    # one round may need about 2**level passes for the chips to travel in from the corners
    passes = n << (graph.level + 2)
    if project_recurrent(work, table, degree, beta, _PROJECTION_ROUNDS, budget + passes) < 0:
        return "high", None
    final = np.empty(n, dtype=np.int64)
    final[perm] = work[:-1]
    return "ok", final


def _relax_recurrent(graph: GasketGraph, h: np.ndarray, hints=()) -> np.ndarray | None:
    """Odometer via the recurrent representative; only valid if h° is recurrent.

    Every move changes the configuration by an integer combination of
    Laplacian rows, so the class of ``h`` never changes.  A class holds exactly
    one recurrent stable configuration, hence a certified recurrent result
    equals the stabilization of ``h``, and its odometer is the unique integer
    solution of ``L u = h - result`` (checked exactly).

    The guessed final profiles only affect speed: first the ``hints``, then
    constant deficits below ``degree - 1`` (1/3, then a short bisection).
    Returns ``None`` if no guess finishes within budget; ``h`` is then untouched.
    """
    budget = 16 * graph.n_vertices * (graph.level + 1)
    top = graph.degree - 1

    def guesses():
        for profile in hints:
            yield profile
        yield top - 1 / 3
        lo, hi = 0.0, 1.0
        for _ in range(_BISECTION_STEPS):
            mid = (lo + hi) / 2
            status = yield top - mid
            if status == "low":
                lo = mid
            else:
                hi = mid

    gen = guesses()
    guess, status = next(gen), None
    while True:
        status, final = _certified_attempt(graph, h, np.asarray(guess, dtype=float), budget)
        if status == "ok":
            odo = np.round(_factor(graph).solve((h - final).astype(float))).astype(np.int64)
            if (odo >= 0).all() and np.array_equal(laplacian(graph) @ odo, h - final):
                h[:] = final
                return odo
            status = "high"
        try:
            guess = gen.send(status)
        except StopIteration:
            return None


def stabilize(
    config: SandpileConfig,
    order: str = "fast",
    seed=None,
    check: bool | None = None,
    recurrent: bool | None = None,
    hints=(),
) -> tuple[SandpileConfig, np.ndarray]:
    """Return ``(stabilized config, odometer)``.

    ``order`` picks the toppling schedule; every schedule yields the same
    result.  ``check`` (default: the ``GASKET_SANDPILE_DEBUG`` env flag)
    re-verifies ``input - L @ odometer == output`` in exact integers.

    ``recurrent=True`` promises that the result is recurrent, which enables
    the certified shortcut of the fast order.  It is detected automatically
    when ``config >= eta_max`` pointwise; a false promise can give a wrong
    answer, so only pass it when it follows from how the input was built.
    ``hints`` are guessed final height profiles for that shortcut; they only
    affect speed.
    """
    if order not in ORDERS:
        raise SandpileError(f"unknown toppling order {order!r}; expected one of {ORDERS}")
    g = config.graph
    if order == "fast":
        h = config.heights.copy()
        if recurrent is None:
            recurrent = bool((h >= g.degree - 1).all())
        odo = _relax_recurrent(g, h, hints) if recurrent and (h >= g.degree).any() else None
        if odo is None:
            odo = _relax_fast(g, h)
    else:
        h = config.heights.tolist()
        odo = np.array(_relax_reference(g, h, order, seed), dtype=np.int64)
        h = np.array(h, dtype=np.int64)
    if (h >= g.degree).any() or (h < 0).any():
        raise VerificationError("stabilization ended in an unstable or negative configuration")
    if DEBUG if check is None else check:
        _check_laplacian_identity(config, h, odo)
    return SandpileConfig(g, h), odo


def _check_laplacian_identity(config: SandpileConfig, out: np.ndarray, odo: np.ndarray) -> None:
    g = config.graph
    indptr, indices, mult = g.csr
    u = [int(x) for x in odo]
    deg = g.degree.tolist()
    for v in range(g.n_vertices):
        lu = deg[v] * u[v] - sum(int(m) * u[int(j)] for j, m in zip(indices[indptr[v]:indptr[v + 1]], mult[indptr[v]:indptr[v + 1]]))
        if int(config.heights[v]) - lu != int(out[v]):
            raise VerificationError(f"Laplacian identity fails at vertex {v}")


def group_add(a: SandpileConfig, b: SandpileConfig) -> SandpileConfig:
    """The sandpile group operation: pointwise sum, then stabilize."""
    # recurrent plus anything stabilizes to a recurrent configuration; that
    # summand is also the exact answer when the other one is the identity
    recurrent = [c for c in (b, a) if c.is_stable() and is_recurrent(c).recurrent]
    return stabilize(a + b, recurrent=bool(recurrent), hints=[c.heights for c in recurrent])[0]


# -- recurrence ----------------------------------------------------------------


def is_recurrent(config: SandpileConfig) -> BurnReport:
    """Dhar's burning test.

    A vertex burns once its height reaches the number of edges joining it to
    still-unburnt vertices, i.e. ``h[v] >= degree(v) - (edges to burnt/sink)``.
    """
    g = config.graph
    if not config.is_stable():
        raise SandpileError("burning test needs a stable configuration")
    h = config.heights.tolist()
    nbrs = _neighbour_lists(g)
    unburnt_edges = (g.degree - g.sink_multiplicity).tolist()
    burnt = [False] * g.n_vertices
    fire = deque(v for v in range(g.n_vertices) if h[v] >= unburnt_edges[v])
    for v in fire:
        burnt[v] = True
    order = []
    while fire:
        v = fire.popleft()
        order.append(v)
        for u, m in nbrs[v]:
            if burnt[u]:
                continue
            unburnt_edges[u] -= m
            if h[u] >= unburnt_edges[u]:
                burnt[u] = True
                fire.append(u)
    return BurnReport(len(order) == g.n_vertices, order)


def random_recurrent(graph: GasketGraph, seed) -> SandpileConfig:
    """``(eta_max + zeta)°`` with zeta i.i.d. uniform on {0,...,3}."""
    rng = np.random.default_rng(seed)
    zeta = rng.integers(0, 4, size=graph.n_vertices, dtype=np.int64)
    return stabilize(SandpileConfig(graph, graph.degree - 1 + zeta))[0]


# -- identity ----------------------------------------------------------------


def identity(graph: GasketGraph, verify: bool = True, samples: int = 3, seed: int = 0) -> SandpileConfig:
    """Neutral element of the sandpile group.

    Uses ``id = (2*eta_max - (2*eta_max)°)°``.  With ``verify`` the result is
    checked to be stable, recurrent and neutral against ``samples`` random
    recurrent configurations before it is returned.
    """
    two_max = SandpileConfig(graph, 2 * (graph.degree - 1))
    settled, _ = stabilize(two_max)
    ident, _ = stabilize(SandpileConfig(graph, two_max.heights - settled.heights))
    if verify:
        if not ident.is_stable():
            raise VerificationError("identity candidate is not stable")
        if not is_recurrent(ident).recurrent:
            raise VerificationError("identity candidate fails the burning test")
        for k in range(samples):
            r = random_recurrent(graph, seed + k)
            if group_add(ident, r) != r:
                raise VerificationError(f"identity candidate is not neutral (sample seed {seed + k})")
        log.debug("identity on SG_%d/%s verified against %d samples", graph.level, graph.sink.value, samples)
    return ident
