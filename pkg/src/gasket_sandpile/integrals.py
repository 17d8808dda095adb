"""Integrals of piecewise constant continuations over gasket cells.

A function ``f`` on the vertices of SG_n is continued to the whole gasket by
the closed-ball rule: a point takes the value of the SG_n vertex within
distance ``2**-(n+1)``, and of the one with the smaller x-coordinate when two
are that close.  Up to a null set, each depth-(n+1) cell then carries the
value of its unique SG_n corner, which gives the exact formula

    integral over psi_w(SG) = 3**-(n+1) * sum_v m_w(v) f(v)

with ``m_w(v)`` the number of level-n elementary triangles of the cell having
``v`` as a corner.  :func:`monte_carlo_integral` samples the ball rule
directly and serves as an independent check.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from decimal import Context, Decimal
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from . import engine
from .constructions import ValueMap, as_number, build_M, build_f
from .gasket import (
    GasketError,
    Lattice,
    SinkSpec,
    build_gasket,
    corner_multiplicity_array,
    format_word,
    lattice,
    lookup,
    parse_word,
)

# extra letters beyond level n+1 when sampling points: keeps them 5 levels inside the owning cell
MC_EXTRA_DEPTH = 6

FAMILIES = ("id", "id_top", "id_two", "M", "f")
_FAMILY_ALIASES = {"id_normal": "id", "id_two_corner": "id_two"}


@dataclass(frozen=True, eq=False)
class ContinuationView:
    """Vertex values of SG_n (all lattice vertices, canonical order)."""

    level: int
    values: np.ndarray

    @property
    def lattice(self) -> Lattice:
        return lattice(self.level)

    @classmethod
    def of(cls, source) -> "ContinuationView":
        """Wrap a :class:`ValueMap` or :class:`SandpileConfig`.

        Corners absorbed into the sink carry no chips and get the value 0.
        """
        if isinstance(source, ContinuationView):
            return source
        if isinstance(source, ValueMap):
            return cls(source.level, source.values)
        if isinstance(source, engine.SandpileConfig):
            g = source.graph
            full = np.zeros(len(g.lattice.keys), dtype=np.int64)
            full[g.full_index] = source.heights
            return cls(g.level, full)
        raise TypeError(f"cannot view {type(source).__name__} as a vertex function")

    @classmethod
    def constant(cls, level: int, c=1) -> "ContinuationView":
        c = as_number(c)
        n = len(lattice(level).keys)
        if isinstance(c, int):
            return cls(level, np.full(n, c, dtype=np.int64))
        vals = np.empty(n, dtype=object)
        vals[:] = [c] * n
        return cls(level, vals)


# -- exact cell integrals -------------------------------------------------------------


def _resolve(view, word) -> tuple[ContinuationView, tuple[int, ...]]:
    view = ContinuationView.of(view)
    word = parse_word(word)
    if len(word) > view.level:
        raise GasketError(f"cell below resolution: |w| = {len(word)} > level {view.level}")
    return view, word


def cell_integral(view, word=()) -> Fraction:
    """Exact integral of the continuation over the cell psi_w(SG)."""
    view, word = _resolve(view, word)
    weights = corner_multiplicity_array(view.lattice, word)
    if view.values.dtype == object:
        total = sum((int(m) * v for m, v in zip(weights.tolist(), view.values.tolist()) if m), Fraction(0))
    else:
        total = int(np.dot(weights, view.values))
    return Fraction(total) / 3 ** (view.level + 1)


# -- the literal ball rule -----------------------------------------------------------


class ResolutionError(RuntimeError):
    """The ball rule found zero or more than two vertices; indicates a bug or a point off SG."""


def _owners(lat: Lattice, P: np.ndarray, Q: np.ndarray, scale_exp: int) -> np.ndarray:
    """Vertex index chosen by the ball rule for integer points ``(P, Q) / 2**scale_exp``."""
    shift = scale_exp - lat.level
    if shift < 1:
        raise ValueError("points must be given at a finer resolution than the lattice")
    f = 1 << shift
    i0, j0 = P >> shift, Q >> shift
    quarter = f * f  # ball radius f/2, compared as 4 * dist^2 <= f^2
    hits = np.zeros(len(P), dtype=np.int64)
    best = np.full(len(P), -1, dtype=np.int64)
    best_x = np.full(len(P), np.iinfo(np.int64).max, dtype=np.int64)
    tie_x = np.zeros(len(P), dtype=bool)
    for di in (-1, 0, 1, 2):
        for dj in (-1, 0, 1, 2):
            i, j = i0 + di, j0 + dj
            idx = lookup(lat, np.stack([i, j], axis=-1))
            dp, dq = P - i * f, Q - j * f
            inside = (idx >= 0) & (4 * (dp * dp + dp * dq + dq * dq) <= quarter)
            x2 = 2 * i + j  # twice the x-coordinate, in lattice units
            hits += inside
            tie_x |= inside & (x2 == best_x)
            better = inside & (x2 < best_x)
            best = np.where(better, idx, best)
            best_x = np.where(better, x2, best_x)
    if (hits == 0).any():
        raise ResolutionError("point outside resolution reach (no SG_n vertex within the ball)")
    if (hits > 2).any():
        raise ResolutionError("more than two SG_n vertices inside the ball")
    if tie_x.any():
        raise ResolutionError("two candidate vertices share an x-coordinate")
    return best


def continuation_at_point(view, point) -> object:
    """Value of the continuation at ``point``.

    ``point`` is ``(s, t)`` in the lattice basis of the unit triangle, i.e. the
    Euclidean point ``(s + t/2, t*sqrt(3)/2)``; entries must be dyadic
    rationals (ints, Fractions or exactly representable floats).
    """
    view = ContinuationView.of(view)
    s, t = (Fraction(c) for c in point)
    exp = view.level + 1
    for c in (s, t):
        den = c.denominator
        if den & (den - 1):
            raise ValueError(f"coordinate {c} is not a dyadic rational")
        exp = max(exp, den.bit_length() - 1)
    scale = 1 << exp
    P = np.array([int(s * scale)], dtype=np.int64)
    Q = np.array([int(t * scale)], dtype=np.int64)
    return view.values[_owners(view.lattice, P, Q, exp)[0]]


def word_point(word: Sequence[int]) -> tuple[Fraction, Fraction]:
    """psi_word(u1) in the lattice basis; letters are applied first to last."""
    anchors = {1: (0, 0), 2: (1, 0), 3: (0, 1)}
    s = t = Fraction(0)
    for c in parse_word(word):
        a, b = anchors[c]
        s, t = (s + a) / 2, (t + b) / 2
    return s, t


@dataclass(frozen=True)
class MonteCarloEstimate:
    value: float
    stderr: float
    samples: int


def monte_carlo_integral(view, word=(), samples: int = 100_000, seed=0) -> MonteCarloEstimate:
    """Sample-mean estimate of :func:`cell_integral` using the ball rule.

    Each sample is psi_u(u1) for a uniform word ``u`` of depth n + 6 whose last
    ``|w|`` letters are ``w``, so psi_u = psi_w o psi_r lands in psi_w(SG).
    """
    view, word = _resolve(view, word)
    if samples < 1:
        raise ValueError("samples must be positive")
    depth = view.level + MC_EXTRA_DEPTH
    rng = np.random.default_rng(seed)
    tail = rng.integers(1, 4, size=(samples, depth - len(word)), dtype=np.int64)
    letters = np.concatenate([tail, np.broadcast_to(np.array(word, dtype=np.int64), (samples, len(word)))], axis=1)
    weights = np.left_shift(1, np.arange(depth, dtype=np.int64))
    P = ((letters == 2) * weights).sum(axis=1)
    Q = ((letters == 3) * weights).sum(axis=1)
    owners = _owners(view.lattice, P, Q, depth)
    vals = np.asarray(view.values[owners], dtype=float)
    scale = 3.0 ** -len(word)
    stderr = float(vals.std(ddof=1) / np.sqrt(samples)) if samples > 1 else float("inf")
    return MonteCarloEstimate(float(vals.mean()) * scale, stderr * scale, samples)


# -- convergence tables --------------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceRow:
    level: int
    cell: tuple[int, ...]
    integral: Fraction
    target: Fraction

    @property
    def abs_error(self) -> Fraction:
        return abs(self.integral - self.target)

    def as_dict(self) -> dict:
        return {
            "level": self.level,
            "cell": format_word(self.cell),
            "integral_num": self.integral.numerator,
            "integral_den": self.integral.denominator,
            "target_num": self.target.numerator,
            "target_den": self.target.denominator,
            "abs_error_decimal": decimal_string(self.abs_error),
        }


CSV_COLUMNS = ("level", "cell", "integral_num", "integral_den", "target_num", "target_den", "abs_error_decimal")


def decimal_string(x: Fraction, digits: int = 20) -> str:
    ctx = Context(prec=digits)
    d = ctx.divide(Decimal(x.numerator), Decimal(x.denominator))
    return f"{d:.{digits - 1}e}"


@lru_cache(maxsize=64)
def identity_values(level: int, sink: str = "normal", verify: bool = True) -> ContinuationView:
    """Continuation view of the engine-computed identity (cached)."""
    return ContinuationView.of(engine.identity(build_gasket(level, sink), verify=verify))


def family_view(family: str, level: int, params: Sequence = ()) -> ContinuationView:
    family = _FAMILY_ALIASES.get(family, family)
    if family == "id":
        return identity_values(level, SinkSpec.NORMAL.value)
    if family == "id_top":
        return identity_values(level, SinkSpec.TOP.value)
    if family == "id_two":
        return identity_values(level, SinkSpec.TOP_RIGHT.value)
    if family == "M":
        return ContinuationView.of(build_M(level, *(params or (2, 2, 2))))
    if family == "f":
        if len(params) not in (3, 6):
            raise ValueError("family f needs parameters a,b,c[,x,y,z]")
        return ContinuationView.of(build_f(level, *params))
    raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")


def family_limit(family: str, params: Sequence = ()) -> Fraction:
    """Weak* limit value (constant density) of a family."""
    family = _FAMILY_ALIASES.get(family, family)
    if family in ("id", "id_two", "M"):
        return Fraction(8, 3)
    if family == "id_top":
        return Fraction(2)
    if family == "f":
        a, b, c = (Fraction(as_number(v)) for v in params[:3])
        return (a + b + c) / 3
    raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")


def min_level(family: str, word=()) -> int:
    family = _FAMILY_ALIASES.get(family, family)
    depth = len(parse_word(word))
    if family in ("id", "id_top", "id_two"):
        return max(depth + 1, 2)
    return max(depth, 1)


def convergence_table(family: str, word=(), levels: Iterable[int] = range(2, 9), params: Sequence = ()) -> list[ConvergenceRow]:
    """One exact row per level: integral over psi_w(SG) and the limiting value."""
    word = parse_word(word)
    target = family_limit(family, params) / 3 ** len(word)
    lo = min_level(family, word)
    rows = []
    for level in levels:
        if level < lo:
            raise GasketError(f"family {family!r} on cell {format_word(word)!r} needs level >= {lo}, got {level}")
        rows.append(ConvergenceRow(level, word, cell_integral(family_view(family, level, params), word), target))
    return rows


def rows_to_csv(rows: Iterable[ConvergenceRow]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row.as_dict())
    return buf.getvalue()


def rows_to_json(rows: Iterable[ConvergenceRow]) -> str:
    return json.dumps([row.as_dict() for row in rows], indent=2) + "\n"
