"""Explicit block-recursive vertex functions on SG_n.

All builders here are pure bookkeeping; none of them runs sandpile dynamics.
A block on SG_n is described by its corner values ``(x, y, z)`` at the
lower-left, lower-right and top corners.  One recursion step splits it into
three blocks on SG_{n-1} whose corners are the outer corners plus the three
cut vertices (bottom-middle, left-middle, right-middle).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from numbers import Integral, Rational
from typing import Callable

import numpy as np

from .gasket import GasketError, GasketGraph, SinkSpec, build_gasket, lookup, rotation_map

Corners = tuple  # (lower-left, lower-right, top)
BlockRule = Callable[[object, object, object], tuple[Corners, Corners, Corners]]

ROTATIONS = ("plus", "minus", "id")


class ConstructionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ValueMap:
    """Real-valued function on the vertices of SG_n, in canonical vertex order.

    ``values`` is an int64 array when every value is an integer and an object
    array of :class:`fractions.Fraction` otherwise.
    """

    graph: GasketGraph
    values: np.ndarray

    def __post_init__(self):
        if len(self.values) != len(self.graph.lattice.keys):
            raise ConstructionError("value count does not match the vertex count")
        self.values.setflags(write=False)

    @property
    def level(self) -> int:
        return self.graph.level

    @property
    def is_integral(self) -> bool:
        return self.values.dtype != object

    def __eq__(self, other):
        if not isinstance(other, ValueMap):
            return NotImplemented
        return self.level == other.level and bool(np.all(self.values == other.values))

    def total(self):
        return sum(self.values.tolist())

    def at(self, key: tuple[int, int]):
        return self.values[self.graph.lattice.index[tuple(key)]]

    def to_json(self) -> dict:
        vals = [v if isinstance(v, int) else _exact_str(v) for v in self.values.tolist()]
        return {"level": self.level, "sink": self.graph.sink.value, "values": vals}


def _exact_str(v: Fraction) -> str:
    """Exact decimal string when the fraction terminates, ``num/den`` otherwise."""
    v = Fraction(v)
    if v.denominator == 1:
        return str(v.numerator)
    den, twos, fives = v.denominator, 0, 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return f"{v.numerator}/{v.denominator}"
    digits = max(twos, fives)
    scaled = abs(v.numerator) * 10**digits // v.denominator
    sign = "-" if v < 0 else ""
    s = str(scaled).rjust(digits + 1, "0")
    return f"{sign}{s[:-digits]}.{s[-digits:]}"


def as_number(v):
    """Normalise a parameter to ``int`` if integral, else an exact ``Fraction``."""
    if isinstance(v, bool):
        raise ConstructionError(f"not a number: {v!r}")
    if isinstance(v, Integral):
        return int(v)
    if isinstance(v, (Rational, float, str)) or hasattr(v, "as_integer_ratio"):
        f = Fraction(v)
        return int(f) if f.denominator == 1 else f
    raise ConstructionError(f"not a number: {v!r}")


def _to_array(values: list) -> np.ndarray:
    if all(isinstance(v, int) for v in values):
        return np.array(values, dtype=np.int64)
    out = np.empty(len(values), dtype=object)
    out[:] = [Fraction(v) for v in values]
    return out


def value_map(level: int, values) -> ValueMap:
    return ValueMap(build_gasket(level, SinkSpec.NORMAL), _to_array([as_number(v) for v in values]))


# -- recursive walker ----------------------------------------------------------

# Inner-label layout of the recursion diagrams: which outer corner or cut value
# lands on each corner of the three sub-blocks.  Cut names: "a" bottom-middle,
# "b" left-middle, "c" right-middle.
BLOCK_LAYOUT = {
    "lower_left": ("x", "a", "b"),
    "lower_right": ("a", "y", "c"),
    "upper": ("b", "c", "z"),
}


def _rule(cut_values: Callable[[object, object, object], tuple]) -> BlockRule:
    def rule(x, y, z):
        a, b, c = cut_values(x, y, z)
        env = {"x": x, "y": y, "z": z, "a": a, "b": b, "c": c}
        return tuple(tuple(env[name] for name in BLOCK_LAYOUT[pos]) for pos in ("lower_left", "lower_right", "upper"))

    return rule


def _m_rule(x, y, z):
    # M_{n+1}(x,y,z) = M_n(x,3,3) | M_n(3,y,2) | M_n(3,2,z)
    return (x, 3, 3), (3, y, 2), (3, 2, z)


def _walk(level: int, corners: Corners, rule: BlockRule) -> list:
    """Fill SG_level by recursing ``rule`` down to elementary triangles.

    Every vertex is written once per elementary triangle it belongs to; the
    writes must agree, which is how cut-value consistency is enforced.
    """
    lat = build_gasket(level).lattice
    index = lat.index
    unset = object()
    values: list = [unset] * len(lat.keys)

    def put(key, v):
        i = index[key]
        old = values[i]
        if old is unset:
            values[i] = v
        elif old != v:
            raise ConstructionError(f"blocks disagree at cut vertex {key}: {old} vs {v}")

    def fill(P, Q, side, x, y, z):
        if side == 1:
            put((P, Q), x)
            put((P + 1, Q), y)
            put((P, Q + 1), z)
            return
        half = side // 2
        ll, lr, up = rule(x, y, z)
        fill(P, Q, half, *ll)
        fill(P + half, Q, half, *lr)
        fill(P, Q + half, half, *up)

    fill(0, 0, lat.side, *corners)
    return values


def _check_positive_level(n: int) -> int:
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 1:
        raise ConstructionError(f"level must be an integer >= 1, got {n!r}")
    return int(n)


def build_M(n: int, x=2, y=2, z=2) -> ValueMap:
    """M_n(x, y, z): corners x, y, z; inner values 3, 3, 2 at every scale."""
    n = _check_positive_level(n)
    corners = tuple(as_number(v) for v in (x, y, z))
    return ValueMap(build_gasket(n), _to_array(_walk(n, corners, _m_rule)))


def build_f(n: int, a, b, c, x=0, y=0, z=0) -> ValueMap:
    """f_n(x, y, z) with cut values a (bottom-middle), b (left-middle), c (right-middle)."""
    n = _check_positive_level(n)
    a, b, c = (as_number(v) for v in (a, b, c))
    corners = tuple(as_number(v) for v in (x, y, z))
    return ValueMap(build_gasket(n), _to_array(_walk(n, corners, _rule(lambda *_: (a, b, c)))))


# -- rotation and block assembly -----------------------------------------------


def rotate_values(vm: ValueMap, tag: str) -> ValueMap:
    """Turn the picture of ``vm`` by 120 degrees.

    ``plus`` turns it counterclockwise: the value at ``v`` moves to ``rho(v)``
    with ``rho`` the counterclockwise automorphism.  ``minus`` turns it
    clockwise; ``id`` returns the map unchanged.
    """
    if tag not in ROTATIONS:
        raise ConstructionError(f"rotation tag must be one of {ROTATIONS}, got {tag!r}")
    if vm.graph.sink is not SinkSpec.NORMAL:
        raise GasketError(f"cannot rotate values on a {vm.graph.sink.value!r} graph")
    if tag == "id":
        return vm
    rho = rotation_map(vm.graph, "ccw")
    out = np.empty_like(vm.values)
    if tag == "plus":
        out[rho] = vm.values
    else:
        out[:] = vm.values[rho]
    return ValueMap(vm.graph, out)


_OFFSETS = {"lower_left": (0, 0), "lower_right": (1, 0), "upper": (0, 1)}


def _place(blocks: dict[str, ValueMap], combine: str) -> ValueMap:
    levels = {b.level for b in blocks.values()}
    if len(levels) != 1:
        raise ConstructionError(f"blocks live on different levels: {sorted(levels)}")
    sub = levels.pop()
    graph = build_gasket(sub + 1)
    lat = graph.lattice
    half = 1 << sub
    object_dtype = any(not b.is_integral for b in blocks.values())
    acc = np.zeros(len(lat.keys), dtype=object if object_dtype else np.int64)
    seen = np.zeros(len(lat.keys), dtype=np.int64)
    for pos, block in blocks.items():
        dp, dq = _OFFSETS[pos]
        target = lookup(lat, block.graph.lattice.keys + (dp * half, dq * half))
        assert (target >= 0).all()
        if combine == "agree":
            clash = (seen[target] > 0) & (acc[target] != block.values)
            if clash.any():
                key = tuple(lat.keys[target[np.flatnonzero(clash)[0]]])
                raise ConstructionError(f"blocks disagree at cut vertex {key}")
            acc[target] = block.values
        else:
            acc[target] = acc[target] + block.values
        seen[target] += 1
    return ValueMap(graph, acc)


def assemble_identity(m: int) -> ValueMap:
    """id_m assembled from M_{m-1}(2,2,2) and its two rotations.

    Lower-left block M, lower-right M^+, upper M^-; all six corner and cut
    values are 2.
    """
    if isinstance(m, bool) or not isinstance(m, (int, np.integer)) or m < 2:
        raise ConstructionError(f"assemble_identity needs m >= 2, got {m!r}")
    block = build_M(int(m) - 1, 2, 2, 2)
    return _place(
        {
            "lower_left": block,
            "lower_right": rotate_values(block, "plus"),
            "upper": rotate_values(block, "minus"),
        },
        combine="agree",
    )


def combine_iota(fa: ValueMap, gb: ValueMap, hc: ValueMap, tags=("id", "id", "id")) -> ValueMap:
    """Three blocks on SG_{n-1} glued into SG_n, summing values at cut vertices."""
    alpha, beta, gamma = tags
    return _place(
        {
            "lower_left": rotate_values(fa, alpha),
            "lower_right": rotate_values(gb, beta),
            "upper": rotate_values(hc, gamma),
        },
        combine="sum",
    )


def to_config(vm: ValueMap):
    """Convert an integral map on a normal-boundary graph to a sandpile config."""
    from .engine import SandpileConfig

    if not vm.is_integral:
        raise ConstructionError("only integer-valued maps can become sandpile configurations")
    return SandpileConfig(vm.graph, vm.values)
