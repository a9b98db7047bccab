"""Dyadic tubes under point-line duality, with exact integer membership.

A tube at scale delta = 2^-k is the union of the lines y = a'x + b' over a
half-open parameter square [a, a+delta) x [b, b+delta) with a, b on the
delta-grid. Writing p = (X/2^m, Y/2^m), a = A*delta, b = B*delta, membership
reduces to integer window tests on W = Y*2^k - A*X - B*2^m:

    x >= 0:  p in T  <=>  0 <= W < X + 2^m
    x <  0:  p in T  <=>  X < W < 2^m

so every predicate here is exact. Families store tubes as packed integer keys
((A + 8*2^k) << (k+4)) | (B + 8*2^k), keeping million-tube configurations
cheap; unpacking materializes DyadicTube values on demand.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

from .core_grid import (
    DyadicPoint,
    DyadicRational,
    PointSet,
    Scale,
    ZERO,
    ONE,
    check_value_bound,
)
from .errors import DomainError, ParseError, ScaleError, ValidationError


def _param_index(v: DyadicRational, scale: Scale, what: str) -> int:
    """Index of a tube parameter on the delta-grid; rejects non-multiples."""
    if not v.is_multiple_of(scale):
        raise ParseError(f"{what} {v!r} is not a multiple of 2^-{scale.k}")
    return v.floor_to_int(scale.k)


def pack_key(a_idx: int, b_idx: int, k: int) -> int:
    off = 1 << (k + 3)
    if not (-off <= a_idx < off) or not (-off <= b_idx < off):
        raise DomainError(f"tube cell ({a_idx}, {b_idx}) at k={k} outside the [-8, 8) parameter domain")
    return ((a_idx + off) << (k + 4)) | (b_idx + off)


def unpack_key(key: int, k: int) -> tuple[int, int]:
    off = 1 << (k + 3)
    return (key >> (k + 4)) - off, (key & ((1 << (k + 4)) - 1)) - off


@dataclass(frozen=True)
class Line:
    """Dual line of a point: (a, b) -> {y = a x + b}."""

    slope: DyadicRational
    intercept: DyadicRational

    def y_at(self, x: DyadicRational) -> DyadicRational:
        return self.slope * x + self.intercept

    def contains(self, p: DyadicPoint) -> bool:
        return p.y == self.y_at(p.x)


def dual_line(p: DyadicPoint) -> Line:
    return Line(p.x, p.y)


@dataclass(frozen=True)
class DyadicTube:
    """Dyadic delta-tube: dual image of one parameter cell."""

    scale: Scale
    a: DyadicRational
    b: DyadicRational

    def __post_init__(self) -> None:
        if self.scale.k < 1:
            raise ScaleError("tubes need a working scale with k >= 1")
        check_value_bound(self.a)
        check_value_bound(self.b)
        a_idx = _param_index(self.a, self.scale, "tube slope")
        b_idx = _param_index(self.b, self.scale, "tube intercept")
        # cell must fit inside [-8, 8): pack_key rejects the overflow
        pack_key(a_idx, b_idx, self.scale.k)

    @classmethod
    def from_indices(cls, scale: Scale, a_idx: int, b_idx: int) -> "DyadicTube":
        """Tube of the cell [a_idx, a_idx+1) x [b_idx, b_idx+1) in delta units.

        Index cells are on-grid by construction, so this skips the
        multiple-of-delta revalidation and only range-checks the cell.
        """
        k = scale.k
        if k < 1:
            raise ScaleError("tubes need a working scale with k >= 1")
        a = DyadicRational(a_idx, k)  # also rejects non-int indices
        b = DyadicRational(b_idx, k)
        pack_key(a_idx, b_idx, k)
        tube = object.__new__(cls)
        object.__setattr__(tube, "scale", scale)
        object.__setattr__(tube, "a", a)
        object.__setattr__(tube, "b", b)
        return tube

    def indices(self) -> tuple[int, int]:
        k = self.scale.k
        return self.a.floor_to_int(k), self.b.floor_to_int(k)

    def key(self) -> int:
        a_idx, b_idx = self.indices()
        return pack_key(a_idx, b_idx, self.scale.k)

    def slope(self) -> DyadicRational:
        return self.a

    def contains(self, p: DyadicPoint) -> bool:
        return tube_contains(self, p)


def _point_ints(p: DyadicPoint) -> tuple[int, int, int]:
    """(X, Y, m) with p = (X/2^m, Y/2^m) at the shared exponent m."""
    m = max(p.x.exp, p.y.exp)
    return p.x.num << (m - p.x.exp), p.y.num << (m - p.y.exp), m


def tube_contains(tube: DyadicTube, p: DyadicPoint) -> bool:
    """Exact membership test; see the module docstring for the derivation."""
    k = tube.scale.k
    a_idx, b_idx = tube.indices()
    x_num, y_num, m = _point_ints(p)
    w = (y_num << k) - a_idx * x_num - (b_idx << m)
    if x_num >= 0:
        return 0 <= w < x_num + (1 << m)
    return x_num < w < (1 << m)


def canonical_tube_through(p: DyadicPoint, slope: DyadicRational, scale: Scale) -> DyadicTube:
    """The tube at the given slope cell whose intercept cell is
    delta*floor((p.y - slope*p.x)/delta); always contains p."""
    k = scale.k
    a_idx = _param_index(slope, scale, "slope")
    x_num, y_num, m = _point_ints(p)
    b_idx = ((y_num << k) - a_idx * x_num) >> m
    return DyadicTube.from_indices(scale, a_idx, b_idx)


@dataclass(frozen=True)
class Window:
    """Half-open parameter window [a_lo, a_hi) x [b_lo, b_hi) restricting
    which tube cells an enumeration may return."""

    a_lo: DyadicRational
    a_hi: DyadicRational
    b_lo: DyadicRational
    b_hi: DyadicRational

    def __post_init__(self) -> None:
        for v in (self.a_lo, self.a_hi, self.b_lo, self.b_hi):
            check_value_bound(v)
        if not (self.a_lo < self.a_hi and self.b_lo < self.b_hi):
            raise ValidationError("window must have positive extent")

    @classmethod
    def of_ints(cls, a_lo: int, a_hi: int, b_lo: int, b_hi: int) -> "Window":
        return cls(
            DyadicRational.integer(a_lo),
            DyadicRational.integer(a_hi),
            DyadicRational.integer(b_lo),
            DyadicRational.integer(b_hi),
        )

    def slope_index_range(self, scale: Scale) -> tuple[int, int]:
        """[lo, hi) of slope cell indices with a in the window."""
        k = scale.k
        lo = -((-self.a_lo).floor_to_int(k))  # ceil
        hi = -((-self.a_hi).floor_to_int(k))
        return lo, hi

    def intercept_index_range(self, scale: Scale) -> tuple[int, int]:
        k = scale.k
        lo = -((-self.b_lo).floor_to_int(k))
        hi = -((-self.b_hi).floor_to_int(k))
        return lo, hi


UNIT_WINDOW = Window(ZERO, ONE, ZERO, ONE)


@dataclass(frozen=True)
class TubeFamily:
    """Deduplicated family of tubes at one scale, as sorted packed keys."""

    scale: Scale
    keys: tuple[int, ...] = field(repr=False)

    @classmethod
    def from_tubes(cls, scale: Scale, tubes: Iterable[DyadicTube]) -> "TubeFamily":
        keys = set()
        for t in tubes:
            if t.scale != scale:
                raise ScaleError(f"tube at k={t.scale.k} in family at k={scale.k}")
            keys.add(t.key())
        return cls(scale, tuple(sorted(keys)))

    @classmethod
    def from_index_pairs(cls, scale: Scale, pairs: Iterable[tuple[int, int]]) -> "TubeFamily":
        k = scale.k
        return cls(scale, tuple(sorted({pack_key(a, b, k) for a, b in pairs})))

    def __len__(self) -> int:
        return len(self.keys)

    def __iter__(self) -> Iterator[DyadicTube]:
        for key in self.keys:
            a_idx, b_idx = unpack_key(key, self.scale.k)
            yield DyadicTube.from_indices(self.scale, a_idx, b_idx)

    def index_pairs(self) -> Iterator[tuple[int, int]]:
        for key in self.keys:
            yield unpack_key(key, self.scale.k)

    def has(self, tube: DyadicTube) -> bool:
        if tube.scale != self.scale:
            return False
        key = tube.key()
        lo, hi = 0, len(self.keys)
        while lo < hi:
            mid = (lo + hi) // 2
            if self.keys[mid] < key:
                lo = mid + 1
            else:
                hi = mid
        return lo < len(self.keys) and self.keys[lo] == key

    def union(self, other: "TubeFamily") -> "TubeFamily":
        if other.scale != self.scale:
            raise ScaleError("union across scales")
        return TubeFamily(self.scale, tuple(sorted(set(self.keys) | set(other.keys))))

    def intersection_size(self, other: "TubeFamily") -> int:
        """Merge walk over the two sorted key tuples."""
        if other.scale != self.scale:
            raise ScaleError("intersection across scales")
        i = j = count = 0
        a, b = self.keys, other.keys
        while i < len(a) and j < len(b):
            if a[i] == b[j]:
                count += 1
                i += 1
                j += 1
            elif a[i] < b[j]:
                i += 1
            else:
                j += 1
        return count

    def slope_set(self) -> tuple[DyadicRational, ...]:
        k = self.scale.k
        seen = sorted({unpack_key(key, k)[0] for key in self.keys})
        return tuple(DyadicRational(a, k) for a in seen)

    def to_json(self) -> dict:
        rows = []
        for a_idx, b_idx in self.index_pairs():
            k = self.scale.k
            a = DyadicRational(a_idx, k)
            b = DyadicRational(b_idx, k)
            rows.append([a.num, a.exp, b.num, b.exp])
        return {"k": self.scale.k, "tubes": rows}

    @classmethod
    def from_json(cls, obj: dict) -> "TubeFamily":
        try:
            k = int(obj["k"])
            rows = obj["tubes"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"tube family JSON needs integer 'k' and 'tubes': {exc}") from exc
        scale = Scale(k)
        tubes = []
        for i, row in enumerate(rows):
            if len(row) != 4:
                raise ParseError(f"tube row {i} must be [a_num, a_exp, b_num, b_exp], got {row!r}")
            a = DyadicRational(int(row[0]), int(row[1]))
            b = DyadicRational(int(row[2]), int(row[3]))
            if not a.is_multiple_of(scale):
                raise ParseError(f"tube row {i}: slope {a!r} is not a multiple of 2^-{k}")
            if not b.is_multiple_of(scale):
                raise ParseError(f"tube row {i}: intercept {b!r} is not a multiple of 2^-{k}")
            tubes.append(DyadicTube(scale, a, b))
        return cls.from_tubes(scale, tubes)


def tubes_through(p: DyadicPoint, scale: Scale, window: Window = UNIT_WINDOW) -> TubeFamily:
    """Every tube cell inside the window whose tube contains p.

    Per slope cell the admissible intercept cells form one contiguous integer
    run, computed exactly from the membership inequalities, so the cost is
    O(#slopes in window) regardless of how many tubes come back.
    """
    k = scale.k
    x_num, y_num, m = _point_ints(p)
    a_lo, a_hi = window.slope_index_range(scale)
    wb_lo, wb_hi = window.intercept_index_range(scale)
    if a_lo >= a_hi:
        raise ValidationError("window contains no slope cells at this scale")
    two_m = 1 << m
    keys = []
    off = 1 << (k + 3)
    for a_idx in range(a_lo, a_hi):
        u = (y_num << k) - a_idx * x_num
        if x_num >= 0:
            b_min = ((u - x_num - two_m) >> m) + 1
            b_max = u >> m
        else:
            b_min = ((u - two_m) >> m) + 1
            b_max = (u - x_num - 1) >> m
        b_min = max(b_min, wb_lo, -off)
        b_max = min(b_max, wb_hi - 1, off - 1)
        base = (a_idx + off) << (k + 4)
        for b_idx in range(b_min, b_max + 1):
            keys.append(base | (b_idx + off))
    return TubeFamily(scale, tuple(keys))


def parent(tube: DyadicTube, coarse: Scale) -> DyadicTube:
    """The coarse tube whose parameter square contains this tube's square."""
    if coarse.k > tube.scale.k:
        raise ScaleError(f"parent scale k={coarse.k} finer than tube scale k={tube.scale.k}")
    d = tube.scale.k - coarse.k
    a_idx, b_idx = tube.indices()
    return DyadicTube.from_indices(coarse, a_idx >> d, b_idx >> d)


def children(tube: DyadicTube, fine: Scale) -> TubeFamily:
    """All fine-scale tubes whose parameter squares tile this tube's square."""
    if fine.k < tube.scale.k:
        raise ScaleError(f"child scale k={fine.k} coarser than tube scale k={tube.scale.k}")
    d = fine.k - tube.scale.k
    a_idx, b_idx = tube.indices()
    pairs = []
    for da in range(1 << d):
        for db in range(1 << d):
            pairs.append(((a_idx << d) + da, (b_idx << d) + db))
    return TubeFamily.from_index_pairs(fine, pairs)


def children_in_family(tube: DyadicTube, family: TubeFamily) -> TubeFamily:
    """Members of the family whose parameter square sits inside this tube's."""
    if family.scale.k < tube.scale.k:
        raise ScaleError("family is coarser than the prospective parent")
    d = family.scale.k - tube.scale.k
    a_idx, b_idx = tube.indices()
    picked = []
    for key in family.keys:
        fa, fb = unpack_key(key, family.scale.k)
        if (fa >> d) == a_idx and (fb >> d) == b_idx:
            picked.append(key)
    return TubeFamily(family.scale, tuple(picked))


def slice_interval(tube: DyadicTube, x0: DyadicRational) -> tuple[DyadicRational, DyadicRational, bool]:
    """Attainable y-values of the tube on the vertical line x = x0, as
    (lo, hi, closed_left); the interval is [lo, hi) for x0 >= 0 and (lo, hi)
    for x0 < 0.

    Endpoints are min/max of (a + u*delta)*x0 + b + v*delta over u, v in
    {0, 1}, written over the common denominator 2^(k + x0.exp)."""
    k = tube.scale.k
    a_idx, b_idx = tube.indices()
    x_num, shift = x0.num, k + x0.exp
    if x_num >= 0:
        lo = DyadicRational(a_idx * x_num + (b_idx << x0.exp), shift)
        hi = DyadicRational((a_idx + 1) * x_num + ((b_idx + 1) << x0.exp), shift)
        return lo, hi, True
    lo = DyadicRational((a_idx + 1) * x_num + (b_idx << x0.exp), shift)
    hi = DyadicRational(a_idx * x_num + ((b_idx + 1) << x0.exp), shift)
    return lo, hi, False


_WITNESS_XS = tuple(DyadicRational.integer(v) for v in (0, 1, -1, 2, -2, 3, -3, 4, -4))


def separating_point(t1: DyadicTube, t2: DyadicTube) -> DyadicPoint | None:
    """A point of t1 outside t2, searched on integer vertical slices.

    Slice endpoints for integer x0 lie on the fine delta-grid, so a nonempty
    difference of slices always contains a half-grid candidate; each candidate
    is confirmed with the exact membership predicate.
    """
    half_exp = t1.scale.k + 1
    for x0 in _WITNESS_XS:
        lo, hi, _ = slice_interval(t1, x0)
        steps = (hi - lo).floor_to_int(half_exp)
        for j in range(steps + 1):
            y = lo + DyadicRational(j, half_exp)
            if abs(y.num) > (4 << y.exp):
                continue
            p = DyadicPoint(x0, y)
            if tube_contains(t1, p) and not tube_contains(t2, p):
                return p
    return None


def cover_by_coarse_tubes(
    fine_family: TubeFamily,
    points: PointSet,
    coarse_slope: DyadicRational,
    coarse: Scale,
    point_cover: TubeFamily,
) -> TubeFamily:
    """Coarse tubes at one slope cell covering every fine tube that meets the
    point set, built by shifting the point cover's intercepts by up to 5
    coarse steps each way. Output size is at most 11x the point cover.

    Correctness hinges on all intercept cells lying on the coarse grid: a
    fine tube through p in (coarse tube j) has parent intercept within 5
    coarse steps of b_j, and the grid makes the strict 6-step bound collapse
    to 5.
    """
    k2 = coarse.k
    if fine_family.scale.k < k2:
        raise ScaleError("fine family must be at or below the coarse scale")
    if point_cover.scale != coarse:
        raise ScaleError("point cover must live at the coarse scale")
    if not coarse_slope.is_multiple_of(coarse):
        raise ValidationError(f"coarse slope {coarse_slope!r} not on the 2^-{k2} grid")
    a2_idx = coarse_slope.floor_to_int(k2)
    for ca, _cb in point_cover.index_pairs():
        if ca != a2_idx:
            raise ValidationError("point cover contains a tube at a different slope cell")
    d = fine_family.scale.k - k2
    for fa, _fb in fine_family.index_pairs():
        if (fa >> d) != a2_idx:
            raise ValidationError("fine family contains a slope outside the coarse slope cell")
    pts = list(points)
    cover_tubes = list(point_cover)
    for p in pts:
        if not any(tube_contains(t, p) for t in cover_tubes):
            raise ValidationError(f"point {p} not covered by the coarse point cover")
    for t in fine_family:
        if not any(tube_contains(t, p) for p in pts):
            raise ValidationError("fine family contains a tube missing the point set")
    out_pairs = set()
    for _ca, cb in point_cover.index_pairs():
        for shift in range(-5, 6):
            out_pairs.add((a2_idx, cb + shift))
    result = TubeFamily.from_index_pairs(coarse, out_pairs)
    result_keys = set(result.keys)
    for fa, fb in fine_family.index_pairs():
        key = pack_key(fa >> d, fb >> d, k2)
        if key not in result_keys:
            raise AssertionError("coarse cover missed a fine tube; shift bound violated")
    return result


@dataclass(frozen=True)
class OrdinaryTube:
    """Euclidean tube (angle, signed offset, width) for comparisons against
    the dyadic model; diagnostic, so floats are fine here."""

    angle: float
    offset: float
    width: float

    def distance(self, px: float, py: float) -> float:
        return abs(-px * math.sin(self.angle) + py * math.cos(self.angle) - self.offset)

    def contains(self, px: float, py: float) -> bool:
        return self.distance(px, py) <= self.width / 2.0


def to_ordinary(tube: DyadicTube, radius: float) -> OrdinaryTube:
    """Containing Euclidean tube on the ball B(0, radius): width (radius+2)*delta
    around the parameter-square center line."""
    if radius <= 0:
        raise ValidationError("radius must be positive")
    delta = tube.scale.delta.as_float()
    a_c = tube.a.as_float() + delta / 2.0
    b_c = tube.b.as_float() + delta / 2.0
    angle = math.atan(a_c)
    return OrdinaryTube(angle, b_c * math.cos(angle), (radius + 2.0) * delta)
