"""Sierpinski gasket approximation graphs SG_n.

Vertices are addressed by integer triangular-lattice coordinates ``(p, q)`` at
resolution ``2**-n``; the Euclidean position of ``(p, q)`` is
``2**-n * (p + q/2, q*sqrt(3)/2)``.  The three outer corners are
``u1 = (0, 0)``, ``u2 = (2**n, 0)`` and ``u3 = (0, 2**n)``.

Every graph carries exactly one abstract sink vertex.  The non-sink vertices
are stored in canonical order (lexicographic by ``(q, p)``), internal edges as
index pairs, and everything touching the sink as ``sink_edges``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Iterable, Sequence

import numpy as np


class GasketError(ValueError):
    """Invalid request against a gasket graph (level, cell, sink)."""


def _max_level() -> int:
    n = 0
    while (3 ** (n + 2) + 3) // 2 <= np.iinfo(np.int64).max:
        n += 1
    return n


# largest level whose vertex count fits a signed 64-bit integer
MAX_LEVEL = _max_level()


class SinkSpec(str, enum.Enum):
    NORMAL = "normal"
    TOP = "top"
    TOP_RIGHT = "top_right"

    @classmethod
    def parse(cls, value: "SinkSpec | str") -> "SinkSpec":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            choices = ", ".join(s.value for s in cls)
            raise GasketError(f"unknown sink {value!r} (expected one of {choices})") from None


# multiplicity of each corner-to-sink edge under normal boundary conditions
NORMAL_SINK_MULTIPLICITY = 2


@dataclass(frozen=True)
class Lattice:
    """The bare vertex/triangle structure of SG_n (no sink)."""

    level: int
    keys: np.ndarray  # (V, 2) int64, canonical (q, p) order
    triangles: np.ndarray  # (3**n, 2) lower-left corners of elementary triangles

    @property
    def side(self) -> int:
        return 1 << self.level

    @cached_property
    def index(self) -> dict[tuple[int, int], int]:
        return {(int(p), int(q)): i for i, (p, q) in enumerate(self.keys)}

    @cached_property
    def triangle_corners(self) -> np.ndarray:
        """(3**n, 3) vertex indices of the corners (lower-left, lower-right, top)."""
        t = self.triangles
        corners = np.stack([t, t + (1, 0), t + (0, 1)], axis=1)
        return lookup(self, corners.reshape(-1, 2)).reshape(-1, 3)

    @cached_property
    def edges(self) -> np.ndarray:
        """(3**(n+1), 2) sorted index pairs; no edge is shared between triangles."""
        c = self.triangle_corners
        pairs = np.concatenate([c[:, [0, 1]], c[:, [0, 2]], c[:, [1, 2]]])
        pairs.sort(axis=1)
        order = np.lexsort((pairs[:, 1], pairs[:, 0]))
        return pairs[order]

    @cached_property
    def corners(self) -> tuple[int, int, int]:
        n = self.side
        return tuple(self.index[k] for k in ((0, 0), (n, 0), (0, n)))

    def position(self) -> np.ndarray:
        """Float Euclidean positions, for rendering only."""
        p, q = self.keys[:, 0].astype(float), self.keys[:, 1].astype(float)
        return np.stack([p + q / 2, q * np.sqrt(3) / 2], axis=1) / self.side


def _key_code(keys: np.ndarray, side: int) -> np.ndarray:
    return keys[..., 1].astype(np.int64) * (side + 1) + keys[..., 0]


def lookup(lat: Lattice, keys: np.ndarray) -> np.ndarray:
    """Vertex indices for an array of (p, q) keys; -1 where no vertex exists."""
    keys = np.asarray(keys, dtype=np.int64)
    side = lat.side
    codes = _key_code(lat.keys, side)
    inside = (keys[..., 0] >= 0) & (keys[..., 1] >= 0) & (keys[..., 0] + keys[..., 1] <= side)
    probe = np.where(inside, _key_code(keys, side), -1)
    pos = np.searchsorted(codes, probe)
    pos = np.clip(pos, 0, len(codes) - 1)
    return np.where(inside & (codes[pos] == probe), pos, -1)


def _check_level(level: int) -> int:
    if isinstance(level, bool) or not isinstance(level, (int, np.integer)):
        raise GasketError(f"level must be an integer, got {level!r}")
    level = int(level)
    if level < 0:
        raise GasketError(f"level must be non-negative, got {level}")
    if level > MAX_LEVEL:
        raise GasketError(f"level {level} exceeds the supported maximum {MAX_LEVEL} (vertex count overflows int64)")
    return level


@lru_cache(maxsize=32)
def lattice(level: int) -> Lattice:
    level = _check_level(level)
    tri = np.zeros((1, 2), dtype=np.int64)
    for k in range(level):
        h = 1 << k
        tri = np.concatenate([tri, tri + (h, 0), tri + (0, h)])
    side = 1 << level
    pts = np.concatenate([tri, tri + (1, 0), tri + (0, 1)])
    codes = np.unique(_key_code(pts, side))
    keys = np.stack([codes % (side + 1), codes // (side + 1)], axis=1)
    return Lattice(level, keys, tri)


@dataclass(frozen=True, eq=False)
class GasketGraph:
    """SG_n plus a sink wiring.

    ``keys`` lists the non-sink vertices in canonical order; ``edges`` rows are
    ``(i, j, multiplicity)`` with ``i < j``; ``sink_edges`` rows are
    ``(i, multiplicity)``.  ``sink_keys`` are the lattice vertices absorbed into
    the sink (empty for normal boundary conditions).
    """

    level: int
    sink: SinkSpec
    keys: np.ndarray
    edges: np.ndarray
    sink_edges: np.ndarray
    sink_keys: tuple[tuple[int, int], ...]

    @property
    def n_vertices(self) -> int:
        return len(self.keys)

    @property
    def side(self) -> int:
        return 1 << self.level

    @cached_property
    def lattice(self) -> Lattice:
        return lattice(self.level)

    @cached_property
    def index(self) -> dict[tuple[int, int], int]:
        return {(int(p), int(q)): i for i, (p, q) in enumerate(self.keys)}

    @cached_property
    def sink_multiplicity(self) -> np.ndarray:
        out = np.zeros(self.n_vertices, dtype=np.int64)
        np.add.at(out, self.sink_edges[:, 0], self.sink_edges[:, 1])
        return out

    @cached_property
    def degree(self) -> np.ndarray:
        deg = self.sink_multiplicity.copy()
        np.add.at(deg, self.edges[:, 0], self.edges[:, 2])
        np.add.at(deg, self.edges[:, 1], self.edges[:, 2])
        return deg

    @cached_property
    def csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Symmetric adjacency as ``(indptr, indices, multiplicities)``."""
        e = self.edges
        src = np.concatenate([e[:, 0], e[:, 1]])
        dst = np.concatenate([e[:, 1], e[:, 0]])
        mult = np.concatenate([e[:, 2], e[:, 2]])
        order = np.lexsort((dst, src))
        src, dst, mult = src[order], dst[order], mult[order]
        indptr = np.zeros(self.n_vertices + 1, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        return np.cumsum(indptr), dst.astype(np.int64), mult.astype(np.int64)

    def adjacency(self, i: int) -> list[tuple[int | str, int]]:
        """Neighbours of vertex ``i`` with multiplicities; the sink appears as ``"sink"``."""
        indptr, indices, mult = self.csr
        out: list[tuple[int | str, int]] = [
            (int(j), int(m)) for j, m in zip(indices[indptr[i]:indptr[i + 1]], mult[indptr[i]:indptr[i + 1]])
        ]
        if self.sink_multiplicity[i]:
            out.append(("sink", int(self.sink_multiplicity[i])))
        return out

    @cached_property
    def full_index(self) -> np.ndarray:
        """Position of each non-sink vertex inside the unsinked lattice ordering."""
        return lookup(self.lattice, self.keys)

    def to_json(self) -> dict:
        return {
            "level": self.level,
            "sink": self.sink.value,
            "vertices": [f"{p},{q}" for p, q in self.keys.tolist()],
            "edges": self.edges.tolist(),
            "sink_edges": self.sink_edges.tolist(),
        }


@lru_cache(maxsize=32)
def _build(level: int, sink: SinkSpec) -> GasketGraph:
    lat = lattice(level)
    side = lat.side
    if sink is SinkSpec.NORMAL:
        sink_keys: tuple[tuple[int, int], ...] = ()
    elif sink is SinkSpec.TOP:
        sink_keys = ((0, side),)
    else:
        if level < 1:
            raise GasketError("top_right sink requires level >= 1 (u2 and u3 are adjacent on SG_0)")
        sink_keys = ((side, 0), (0, side))

    full = lat.edges
    is_sink = np.zeros(len(lat.keys), dtype=bool)
    for k in sink_keys:
        is_sink[lat.index[k]] = True
    keep = np.flatnonzero(~is_sink)
    remap = np.full(len(lat.keys), -1, dtype=np.int64)
    remap[keep] = np.arange(len(keep))

    a, b = full[:, 0], full[:, 1]
    internal = ~is_sink[a] & ~is_sink[b]
    edges = np.stack([remap[a[internal]], remap[b[internal]], np.ones(internal.sum(), dtype=np.int64)], axis=1)

    sink_mult = np.zeros(len(lat.keys), dtype=np.int64)
    if sink is SinkSpec.NORMAL:
        for c in lat.corners:
            sink_mult[c] += NORMAL_SINK_MULTIPLICITY
    else:
        # sink-corner vertices are identified with the sink; their edges are kept
        np.add.at(sink_mult, a[is_sink[b] & ~is_sink[a]], 1)
        np.add.at(sink_mult, b[is_sink[a] & ~is_sink[b]], 1)
    hit = np.flatnonzero(sink_mult[keep])
    sink_edges = np.stack([hit, sink_mult[keep][hit]], axis=1).astype(np.int64)

    return GasketGraph(level, sink, lat.keys[keep], edges.astype(np.int64), sink_edges, sink_keys)


def build_gasket(level: int, sink: SinkSpec | str = SinkSpec.NORMAL) -> GasketGraph:
    """Build SG_``level`` wired to a sink.  Results are cached and immutable."""
    return _build(_check_level(level), SinkSpec.parse(sink))


def vertex_count(level: int) -> int:
    return (3 ** (level + 1) + 3) // 2


def edge_count(level: int) -> int:
    return 3 ** (level + 1)


# -- rotations ---------------------------------------------------------------


def rotate_key(key: tuple[int, int], side: int, direction: str = "ccw") -> tuple[int, int]:
    """Image of a lattice key under the 120 degree rotation about the centroid.

    In barycentric weights ``(side - p - q, p, q)`` on ``(u1, u2, u3)`` the
    counterclockwise turn sends ``u1 -> u2 -> u3 -> u1``.
    """
    p, q = key
    if direction == "ccw":
        return side - p - q, p
    if direction == "cw":
        return q, side - p - q
    raise GasketError(f"direction must be 'ccw' or 'cw', got {direction!r}")


def rotation_map(graph: GasketGraph, direction: str = "ccw") -> np.ndarray:
    """Permutation ``perm`` with ``perm[i]`` the index of the rotated vertex ``i``."""
    if graph.sink is not SinkSpec.NORMAL:
        raise GasketError(f"rotation does not fix the sink of a {graph.sink.value!r} graph")
    p, q = graph.keys[:, 0], graph.keys[:, 1]
    r = graph.side - p - q
    if direction == "ccw":
        img = np.stack([r, p], axis=1)
    elif direction == "cw":
        img = np.stack([q, r], axis=1)
    else:
        raise GasketError(f"direction must be 'ccw' or 'cw', got {direction!r}")
    perm = lookup(graph.lattice, img)
    assert (perm >= 0).all()
    return perm


# -- cells -------------------------------------------------------------------

CellWord = tuple[int, ...]


def parse_word(word: "str | Iterable[int] | None") -> CellWord:
    """Normalise a cell word; strings are digit strings like ``"132"``."""
    if word is None:
        return ()
    letters = tuple(int(c) for c in word)
    if any(c not in (1, 2, 3) for c in letters):
        raise GasketError(f"cell word letters must be 1, 2 or 3, got {word!r}")
    return letters


def format_word(word: Sequence[int]) -> str:
    return "".join(str(c) for c in word)


def cell_box(level: int, word: Sequence[int]) -> tuple[int, int, int]:
    """``(P, Q, S)``: lower-left lattice corner and side of the cell psi_w(SG).

    The letters are applied first to last (psi_w = psi_{w_m} o ... o psi_{w_1}),
    so the last letter selects the depth-1 cell.
    """
    word = parse_word(word)
    if len(word) > level:
        raise GasketError(f"cell below graph resolution: |w| = {len(word)} > level {level}")
    side = 1 << level
    anchors = {1: (0, 0), 2: (side, 0), 3: (0, side)}
    P = Q = 0
    for c in word:
        ap, aq = anchors[c]
        P, Q = (P + ap) // 2, (Q + aq) // 2
    return P, Q, side >> len(word)


def _in_box(keys: np.ndarray, box: tuple[int, int, int], shrink: int = 0) -> np.ndarray:
    P, Q, S = box
    dp, dq = keys[:, 0] - P, keys[:, 1] - Q
    return (dp >= 0) & (dq >= 0) & (dp + dq <= S - shrink)


def cell_vertices(graph: GasketGraph | Lattice, word) -> set[tuple[int, int]]:
    """All lattice vertices inside the closed cell psi_w(SG), cut vertices included."""
    lat = graph.lattice if isinstance(graph, GasketGraph) else graph
    mask = _in_box(lat.keys, cell_box(lat.level, word))
    return {(int(p), int(q)) for p, q in lat.keys[mask]}


def cell_mask(lat: Lattice, word) -> np.ndarray:
    return _in_box(lat.keys, cell_box(lat.level, word))


def corner_multiplicity_array(lat: Lattice, word) -> np.ndarray:
    """Per-vertex count of elementary triangles of the cell having that vertex as a corner."""
    box = cell_box(lat.level, word)
    inside = _in_box(lat.triangles, box, shrink=1)
    return np.bincount(lat.triangle_corners[inside].ravel(), minlength=len(lat.keys)).astype(np.int64)


def corner_multiplicity(graph: GasketGraph | Lattice, word) -> dict[tuple[int, int], int]:
    lat = graph.lattice if isinstance(graph, GasketGraph) else graph
    m = corner_multiplicity_array(lat, word)
    return {(int(p), int(q)): int(c) for (p, q), c in zip(lat.keys, m) if c}


def words(depth: int) -> list[CellWord]:
    """All words of the given depth, in lexicographic order."""
    out: list[CellWord] = [()]
    for _ in range(depth):
        out = [w + (c,) for w in out for c in (1, 2, 3)]
    return out
