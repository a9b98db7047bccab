"""Exact dyadic scales, rationals, points, and box-counting primitives.

All geometric predicates downstream of this module reduce to integer
comparisons on dyadic rationals, so equality and membership are exact; floats
appear only in diagnostics (exponent fits, energies) where a relative error
around 1e-15 is documented and harmless against the tolerances in use.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import DomainError, DyadicOverflowError, ParseError, ScaleError, ValidationError

SCALE_CAP = 20
_NUM_CAP = 1 << 127


@dataclass(frozen=True, order=True)
class Scale:
    """Dyadic scale delta = 2^-k. Working scales use k >= 1; k = 0 is allowed
    as a covering target. Scales finer than 2^-20 are rejected."""

    k: int

    def __post_init__(self) -> None:
        if not isinstance(self.k, int):
            raise ScaleError(f"scale exponent must be an int, got {self.k!r}")
        if self.k < 0 or self.k > SCALE_CAP:
            raise ScaleError(f"scale exponent k={self.k} outside [0, {SCALE_CAP}]")

    @property
    def delta(self) -> "DyadicRational":
        return DyadicRational(1, self.k)

    def require_even(self) -> None:
        if self.k % 2 != 0:
            raise ScaleError(f"k={self.k} must be even when the sqrt(delta) companion scale is used")

    def coarse(self) -> "Scale":
        """The companion scale sqrt(delta) = 2^-(k/2). Requires even k."""
        self.require_even()
        return Scale(self.k // 2)


class DyadicRational:
    """num / 2^exp in canonical form: exp >= 0, and num odd unless exp == 0.

    Numerators are capped at 128 bits; arithmetic that would exceed the cap
    raises DyadicOverflowError instead of producing a wrong value.

    A hand-rolled immutable slots class: these are constructed in bulk inside
    every exact predicate, so construction stays on a no-copy fast path when
    the inputs are already canonical.
    """

    __slots__ = ("num", "exp")

    num: int
    exp: int

    def __init__(self, num: int, exp: int) -> None:
        if num.__class__ is int and exp.__class__ is int:
            # already canonical: store and return without normalizing
            if exp >= 0 and (num & 1 or (exp == 0 and num)):
                if -_NUM_CAP < num < _NUM_CAP:
                    object.__setattr__(self, "num", num)
                    object.__setattr__(self, "exp", exp)
                    return
                raise DyadicOverflowError(
                    f"numerator magnitude {abs(num).bit_length()} bits exceeds 128-bit envelope"
                )
        elif not isinstance(num, int) or not isinstance(exp, int):
            raise ParseError(f"dyadic rational needs int fields, got ({num!r}, {exp!r})")
        if exp < 0:
            num <<= -exp
            exp = 0
        if num == 0:
            exp = 0
        elif not num & 1:
            # strip all trailing zero bits in one step
            drop = (num & -num).bit_length() - 1
            if drop > exp:
                drop = exp
            num >>= drop
            exp -= drop
        if abs(num) >= _NUM_CAP:
            raise DyadicOverflowError(f"numerator magnitude {abs(num).bit_length()} bits exceeds 128-bit envelope")
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "exp", exp)

    def __setattr__(self, name: str, value: object) -> None:
        raise AttributeError("DyadicRational is immutable")

    def __delattr__(self, name: str) -> None:
        raise AttributeError("DyadicRational is immutable")

    def __eq__(self, other: object) -> bool:
        if other.__class__ is DyadicRational:
            return self.num == other.num and self.exp == other.exp
        return NotImplemented

    def __ne__(self, other: object) -> bool:
        if other.__class__ is DyadicRational:
            return self.num != other.num or self.exp != other.exp
        return NotImplemented

    def __hash__(self) -> int:
        return hash((self.num, self.exp))

    def __reduce__(self):
        return (DyadicRational, (self.num, self.exp))

    @classmethod
    def integer(cls, n: int) -> "DyadicRational":
        return cls(n, 0)

    @classmethod
    def from_pair(cls, pair: Sequence[int]) -> "DyadicRational":
        if len(pair) != 2:
            raise ParseError(f"dyadic pair must have 2 entries, got {pair!r}")
        return cls(int(pair[0]), int(pair[1]))

    def pair(self) -> list[int]:
        return [self.num, self.exp]

    def __add__(self, other: "DyadicRational") -> "DyadicRational":
        e = max(self.exp, other.exp)
        return DyadicRational((self.num << (e - self.exp)) + (other.num << (e - other.exp)), e)

    def __sub__(self, other: "DyadicRational") -> "DyadicRational":
        e = max(self.exp, other.exp)
        return DyadicRational((self.num << (e - self.exp)) - (other.num << (e - other.exp)), e)

    def __mul__(self, other: "DyadicRational") -> "DyadicRational":
        return DyadicRational(self.num * other.num, self.exp + other.exp)

    def __neg__(self) -> "DyadicRational":
        return DyadicRational(-self.num, self.exp)

    def __abs__(self) -> "DyadicRational":
        return DyadicRational(abs(self.num), self.exp)

    def _cmp(self, other: "DyadicRational") -> int:
        lhs = self.num << max(0, other.exp - self.exp)
        rhs = other.num << max(0, self.exp - other.exp)
        return (lhs > rhs) - (lhs < rhs)

    def __lt__(self, other: "DyadicRational") -> bool:
        return self._cmp(other) < 0

    def __le__(self, other: "DyadicRational") -> bool:
        return self._cmp(other) <= 0

    def __gt__(self, other: "DyadicRational") -> bool:
        return self._cmp(other) > 0

    def __ge__(self, other: "DyadicRational") -> bool:
        return self._cmp(other) >= 0

    def mul_pow2(self, j: int) -> "DyadicRational":
        """Exact value * 2^j."""
        return DyadicRational(self.num, self.exp - j)

    def floor_to_int(self, k: int) -> int:
        """floor(value * 2^k), exact (Python >> floors toward -inf)."""
        if k >= self.exp:
            return self.num << (k - self.exp)
        return self.num >> (self.exp - k)

    def floor_to_scale(self, scale: Scale) -> "DyadicRational":
        """Largest multiple of 2^-k that is <= value."""
        return DyadicRational(self.floor_to_int(scale.k), scale.k)

    def is_multiple_of(self, scale: Scale) -> bool:
        return self.exp <= scale.k

    def as_float(self) -> float:
        return math.ldexp(float(self.num), -self.exp)

    def __float__(self) -> float:
        return self.as_float()

    def __repr__(self) -> str:
        return f"Dy({self.num}/2^{self.exp})"


ZERO = DyadicRational(0, 0)
ONE = DyadicRational(1, 0)

_COORD_BOUND = 4
_VALUE_BOUND = 8


def _check_bound(v: DyadicRational, bound: int, what: str) -> None:
    # |num|/2^exp <= bound  <=>  |num| <= bound << exp
    if abs(v.num) > (bound << v.exp):
        raise DomainError(f"{what} {v!r} outside [-{bound}, {bound}]")


def check_value_bound(v: DyadicRational) -> None:
    """1-d working values live in [-8, 8]."""
    _check_bound(v, _VALUE_BOUND, "value")


class DyadicPoint:
    """Planar point with exact dyadic coordinates in [-4, 4]^2.

    Slots class for the same reason as DyadicRational: membership predicates
    construct one per probe.
    """

    __slots__ = ("x", "y")

    x: DyadicRational
    y: DyadicRational

    def __init__(self, x: DyadicRational, y: DyadicRational) -> None:
        if abs(x.num) > (_COORD_BOUND << x.exp):
            raise DomainError(f"x coordinate {x!r} outside [-{_COORD_BOUND}, {_COORD_BOUND}]")
        if abs(y.num) > (_COORD_BOUND << y.exp):
            raise DomainError(f"y coordinate {y!r} outside [-{_COORD_BOUND}, {_COORD_BOUND}]")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __setattr__(self, name: str, value: object) -> None:
        raise AttributeError("DyadicPoint is immutable")

    def __delattr__(self, name: str) -> None:
        raise AttributeError("DyadicPoint is immutable")

    def __eq__(self, other: object) -> bool:
        if other.__class__ is DyadicPoint:
            return self.x == other.x and self.y == other.y
        return NotImplemented

    def __ne__(self, other: object) -> bool:
        if other.__class__ is DyadicPoint:
            return self.x != other.x or self.y != other.y
        return NotImplemented

    def __hash__(self) -> int:
        return hash((self.x, self.y))

    def __repr__(self) -> str:
        return f"DyadicPoint(x={self.x!r}, y={self.y!r})"

    def __reduce__(self):
        return (DyadicPoint, (self.x, self.y))

    @classmethod
    def of(cls, xn: int, xe: int, yn: int, ye: int) -> "DyadicPoint":
        return cls(DyadicRational(xn, xe), DyadicRational(yn, ye))

    def quarter_turn(self) -> "DyadicPoint":
        """Exact rotation by +90 degrees about the origin: (x, y) -> (-y, x)."""
        return DyadicPoint(-self.y, self.x)

    def key(self) -> tuple[int, int, int, int]:
        return (self.x.num, self.x.exp, self.y.num, self.y.exp)


def squared_distance(p: DyadicPoint, q: DyadicPoint) -> DyadicRational:
    dx = p.x - q.x
    dy = p.y - q.y
    return dx * dx + dy * dy


@dataclass(frozen=True)
class PointSet:
    """Finite set of pairwise distinct dyadic points at a working scale."""

    scale: Scale
    points: tuple[DyadicPoint, ...]

    def __post_init__(self) -> None:
        seen: set[tuple[int, int, int, int]] = set()
        for p in self.points:
            key = p.key()
            if key in seen:
                raise ValidationError(f"duplicate point {p}")
            seen.add(key)

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def quarter_turn(self) -> "PointSet":
        return PointSet(self.scale, tuple(p.quarter_turn() for p in self.points))

    def to_json(self) -> dict:
        return {
            "k": self.scale.k,
            "points": [[p.x.num, p.x.exp, p.y.num, p.y.exp] for p in self.points],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PointSet":
        try:
            k = int(obj["k"])
            rows = obj["points"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"point set JSON needs integer 'k' and 'points': {exc}") from exc
        pts = []
        for row in rows:
            if len(row) != 4:
                raise ParseError(f"point row must be [xn, xe, yn, ye], got {row!r}")
            pts.append(DyadicPoint.of(int(row[0]), int(row[1]), int(row[2]), int(row[3])))
        return cls(Scale(k), tuple(pts))


def separation_witness(
    points: Sequence[DyadicPoint], dist: DyadicRational
) -> tuple[DyadicPoint, DyadicPoint] | None:
    """Return a pair at distance < dist, or None if all pairs are >= dist apart.

    Grid-bucketed: any pair closer than dist lands in the same or adjacent
    cells of a grid with side >= dist, so only neighbor buckets are compared.
    Distance comparisons are exact (d^2 < dist^2 on dyadic rationals).
    """
    if dist.num <= 0:
        raise ValidationError("separation distance must be positive")
    n = dist.num
    # largest j with 2^-j >= dist, i.e. side = 2^-j is the smallest power of
    # two cell not below dist
    ceil_log2 = (n - 1).bit_length()
    j = dist.exp - ceil_log2
    d2 = dist * dist
    buckets: dict[tuple[int, int], list[int]] = {}
    for i, p in enumerate(points):
        cell = (p.x.floor_to_int(j), p.y.floor_to_int(j))
        buckets.setdefault(cell, []).append(i)
    for (cx, cy), members in buckets.items():
        for dx_ in (-1, 0, 1):
            for dy_ in (-1, 0, 1):
                other = buckets.get((cx + dx_, cy + dy_))
                if other is None:
                    continue
                for i in members:
                    for jdx in other:
                        if jdx <= i:
                            continue
                        if squared_distance(points[i], points[jdx]) < d2:
                            return (points[i], points[jdx])
    return None


def covering_number(ps: PointSet, target: Scale) -> int:
    """Number of half-open dyadic target-cells [a*d, (a+1)*d) x [b*d, (b+1)*d)
    meeting the set. Exact; target must be at or coarser than the set's scale."""
    if target.k > ps.scale.k:
        raise ScaleError(f"covering target k={target.k} finer than set scale k={ps.scale.k}")
    k = target.k
    return len({(p.x.floor_to_int(k), p.y.floor_to_int(k)) for p in ps.points})


def covering_number_1d(values: Iterable[DyadicRational], target: Scale) -> int:
    """1-d analogue over half-open cells [a*d, (a+1)*d); values in [-8, 8]."""
    k = target.k
    cells = set()
    for v in values:
        check_value_bound(v)
        cells.add(v.floor_to_int(k))
    return len(cells)


@dataclass(frozen=True)
class ExponentFit:
    """Least-squares fit of log2(count) against k = log2(1/delta)."""

    samples: tuple[tuple[int, int], ...]
    slope: float
    intercept: float
    max_residual: float

    def to_json(self) -> dict:
        return {
            "samples": [[k, c] for k, c in self.samples],
            "slope": self.slope,
            "intercept": self.intercept,
            "max_residual": self.max_residual,
        }


def fit_exponent(samples: Sequence[tuple[Scale | int, int]]) -> ExponentFit:
    """Fit count ~ (1/delta)^slope across scales.

    Needs samples at >= 2 distinct scales with positive counts.
    """
    rows: list[tuple[int, int]] = []
    for sc, count in samples:
        k = sc.k if isinstance(sc, Scale) else int(sc)
        if count < 1:
            raise ValidationError(f"count must be >= 1, got {count} at k={k}")
        rows.append((k, int(count)))
    ks = [r[0] for r in rows]
    if len(set(ks)) < 2:
        raise ValidationError("fit needs samples at >= 2 distinct scales")
    ys = [math.log2(c) for _, c in rows]
    n = len(rows)
    mean_k = math.fsum(ks) / n
    mean_y = math.fsum(ys) / n
    var = math.fsum((k - mean_k) ** 2 for k in ks)
    cov = math.fsum((k - mean_k) * (y - mean_y) for k, y in zip(ks, ys))
    slope = cov / var
    intercept = mean_y - slope * mean_k
    max_res = max(abs(y - (slope * k + intercept)) for k, y in zip(ks, ys))
    return ExponentFit(tuple(rows), slope, intercept, max_res)


def samples_to_csv(samples: Sequence[tuple[Scale | int, int]]) -> str:
    lines = ["k,count"]
    for sc, count in samples:
        k = sc.k if isinstance(sc, Scale) else int(sc)
        lines.append(f"{k},{int(count)}")
    return "\n".join(lines) + "\n"


def energy_sum(ps: PointSet, t: float) -> float:
    """sum over ordered pairs p != q of |p-q|^-t, for 0 < t < 2.

    Squared distances are exact dyadics; each term is formed from one float
    power, so the relative error per term is a few ulps (far below 2^-40).
    math.fsum makes the total independent of iteration order.
    """
    if not (0.0 < t < 2.0):
        raise ValidationError(f"energy exponent t={t} outside (0, 2)")
    pts = ps.points
    if len(pts) < 2:
        raise ValidationError("energy needs at least two points")
    terms = []
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            d2 = squared_distance(pts[i], pts[j])
            if d2.num == 0:
                raise ValidationError(f"coincident points {pts[i]} and {pts[j]}")
            terms.append(d2.as_float() ** (-t / 2.0))
    return 2.0 * math.fsum(terms)
