"""Deterministic test-corpus generators.

Everything here is reproducible from (kind, params): pseudorandom choices go
through a 64-bit linear congruential generator with the classic
Numerical-Recipes constants (state * 6364136223846793005 + 1442695040888963407
mod 2^64), seeded explicitly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Sequence

from .additive import QuasiProduct
from .core_grid import DyadicPoint, DyadicRational, PointSet, Scale
from .errors import GeneratorError, ParseError
from .incidence import Configuration
from .tubes import DyadicTube, TubeFamily, pack_key

_MASK64 = (1 << 64) - 1


class Lcg:
    """64-bit LCG; `below(n)` maps the next state multiplicatively onto
    [0, n), which is deterministic and bias-free enough for corpus drawing."""

    MUL = 6364136223846793005
    INC = 1442695040888963407

    def __init__(self, seed: int):
        self.state = (seed ^ 0x9E3779B97F4A7C15) & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state * self.MUL + self.INC) & _MASK64
        return self.state

    def below(self, n: int) -> int:
        if n <= 0:
            raise GeneratorError(f"below({n}) needs n >= 1")
        return (self.next_u64() * n) >> 64


def _digit_fraction(s: float) -> Fraction:
    # repr() round-trips decimal literals like 0.3 exactly, keeping the
    # digit rule free of float-floor artifacts at integer boundaries
    return Fraction(repr(float(s)))


def cantor_line_indices(k: int, s: float) -> list[int]:
    if not (0.0 < s <= 1.0):
        raise GeneratorError(f"cantor dimension s={s} outside (0, 1]")
    fr = _digit_fraction(s)
    vals = [0]
    prev_floor = 0
    for j in range(1, k + 1):
        cur_floor = (j * fr.numerator) // fr.denominator
        if cur_floor > prev_floor:
            vals = [v << 1 for v in vals] + [(v << 1) | 1 for v in vals]
        else:
            vals = [v << 1 for v in vals]
        prev_floor = cur_floor
    return sorted(vals)


def cantor_line(k: int, s: float) -> tuple[DyadicRational, ...]:
    """Self-similar (delta, s)-set in [0, 1) with exactly 2^floor(k*s) values:
    level j branches into both children iff floor(j*s) increments, else keeps
    the left child."""
    Scale(k)  # range check
    return tuple(DyadicRational(v, k) for v in cantor_line_indices(k, s))


def slope_net(k: int, s: float) -> tuple[DyadicRational, ...]:
    """Slope set for tube experiments; alias of the cantor construction."""
    return cantor_line(k, s)


_SIZE_GUARD = 300_000


def grid(k: int) -> PointSet:
    """Full delta-grid of [0, 1)^2."""
    if 4 ** k > _SIZE_GUARD:
        raise GeneratorError(f"full grid at k={k} would have {4**k} points")
    pts = [
        DyadicPoint(DyadicRational(i, k), DyadicRational(j, k))
        for i in range(1 << k)
        for j in range(1 << k)
    ]
    return PointSet(Scale(k), tuple(pts))


def cantor_grid(k: int, s: float, mask: Sequence[Sequence[int]] | None = None) -> PointSet:
    """Product of two cantor lines (box dimension 2s), or, with a mask, the
    2-d digit-restricted set keeping the masked quadrants at every level
    (box dimension log2(len(mask)))."""
    if mask is None:
        line = cantor_line_indices(k, s)
        if len(line) ** 2 > _SIZE_GUARD:
            raise GeneratorError(f"cantor grid would have {len(line)**2} points")
        pts = [
            DyadicPoint(DyadicRational(i, k), DyadicRational(j, k))
            for i in line
            for j in line
        ]
        return PointSet(Scale(k), tuple(pts))
    quads = sorted({(int(m[0]), int(m[1])) for m in mask})
    if not quads or not all(q in {(0, 0), (0, 1), (1, 0), (1, 1)} for q in quads):
        raise GeneratorError(f"mask must be nonempty subset of the four quadrants, got {mask!r}")
    cells = [(0, 0)]
    for _ in range(k):
        if len(cells) * len(quads) > _SIZE_GUARD:
            raise GeneratorError("masked grid too large")
        cells = [(2 * cx + dx, 2 * cy + dy) for cx, cy in cells for dx, dy in quads]
    pts = [
        DyadicPoint(DyadicRational(cx, k), DyadicRational(cy, k)) for cx, cy in sorted(cells)
    ]
    return PointSet(Scale(k), tuple(pts))


def furstenberg_product(k: int, s: float, epsilon: float = 0.25) -> Configuration:
    """Configuration meeting every dichotomy hypothesis by construction.

    Points: D x D with D the s=1/2 cantor line, so |P| = 2^k = delta^-1 and
    the coarse cover N(P, sqrt(delta)) is exactly delta^-1/2. Tube slopes:
    the (delta, s) cantor line; intercepts canonical through each point.
    """
    if k % 2 != 0 or k < 4:
        raise GeneratorError(f"k={k} must be even and >= 4")
    scale = Scale(k)
    line = cantor_line_indices(k, 0.5)
    slopes = cantor_line_indices(k, s)
    off = 1 << (k + 3)
    shift = k + 4
    points = []
    families = []
    for xi in line:
        for yi in line:
            points.append(DyadicPoint(DyadicRational(xi, k), DyadicRational(yi, k)))
            yk = yi << k
            keys = []
            for a_idx in slopes:
                b_idx = (yk - a_idx * xi) >> k
                keys.append(((a_idx + off) << shift) | (b_idx + off))
            families.append(TubeFamily(scale, tuple(keys)))
    return Configuration(PointSet(scale, tuple(points)), tuple(families), s, epsilon)


def quasi_product(k: int, s: float, tau: float, seed: int = 0) -> QuasiProduct:
    """Levels on the (delta, tau) cantor line; each slice a translated copy
    (mod 1) of the (8*delta, s) cantor line, so slice points sit 8*delta
    apart and a slope >= 1 tube crosses a slice in width <= 4*delta: tubes
    meet each slice at most once by construction."""
    if k < 4:
        raise GeneratorError(f"k={k} too coarse for quasi products")
    scale = Scale(k)
    levels = cantor_line(k, tau)
    base = cantor_line_indices(k - 3, s)
    n_cells = 1 << (k - 3)
    rng = Lcg(seed)
    slices = []
    for _b in levels:
        o = rng.below(n_cells)
        vals = sorted((v + o) % n_cells for v in base)
        slices.append(tuple(DyadicRational(v, k - 3) for v in vals))
    return QuasiProduct(scale, s, tau, levels, tuple(slices))


def quasi_product_tubes(qp: QuasiProduct, s_net: float | None = None) -> TubeFamily:
    """Steep tubes (slopes in [1, 2) on a cantor slope net) through every
    point of the quasi product, canonical intercepts."""
    k = qp.scale.k
    s_net = qp.s if s_net is None else s_net
    slope_idx = [(1 << k) + v for v in cantor_line_indices(k, s_net)]
    off = 1 << (k + 3)
    shift = k + 4
    keys = set()
    for b, sl in zip(qp.levels, qp.slices):
        for a_val in sl:
            m = max(a_val.exp, b.exp)
            x_num = a_val.num << (m - a_val.exp)
            y_num = b.num << (m - b.exp)
            yk = y_num << k
            for a_idx in slope_idx:
                b_idx = (yk - a_idx * x_num) >> m
                keys.add(((a_idx + off) << shift) | (b_idx + off))
    return TubeFamily(qp.scale, tuple(sorted(keys)))


@dataclass(frozen=True)
class TripodInstance:
    """Three grid points on one steep tube at well-separated levels."""

    tube: DyadicTube
    points: tuple[DyadicPoint, DyadicPoint, DyadicPoint]

    def levels(self) -> tuple[DyadicRational, DyadicRational, DyadicRational]:
        return (self.points[0].y, self.points[1].y, self.points[2].y)

    def to_json(self) -> dict:
        k = self.tube.scale.k
        return {
            "k": k,
            "tube": [self.tube.a.num, self.tube.a.exp, self.tube.b.num, self.tube.b.exp],
            "points": [[p.x.num, p.x.exp, p.y.num, p.y.exp] for p in self.points],
        }


def collinear_tripod(k: int, seed: int = 0) -> TripodInstance:
    """Draw a slope-[1,2) tube and three delta-grid points on it whose levels
    are pairwise >= 1/4 apart. Deterministic retries: a level interval may
    miss the grid, in which case the next LCG draw is used."""
    rng = Lcg(seed)
    scale = Scale(k)
    n = 1 << k
    quarter = n >> 2
    for _attempt in range(4000):
        a_idx = n + rng.below(n)
        b_idx = rng.below(n)
        lv = sorted(rng.below(n) for _ in range(3))
        if lv[1] - lv[0] < quarter or lv[2] - lv[1] < quarter:
            continue
        tube = DyadicTube.from_indices(scale, a_idx, b_idx)
        pts = []
        for level in lv:
            y = DyadicRational(level, k)
            x_guess = ((level - b_idx) << k) // a_idx
            found = None
            for dx in range(-2, 3):
                xi = x_guess + dx
                p = DyadicPoint(DyadicRational(xi, k), y)
                if tube.contains(p):
                    found = p
                    break
            if found is None:
                break
            pts.append(found)
        if len(pts) == 3:
            return TripodInstance(tube, (pts[0], pts[1], pts[2]))
    raise GeneratorError(f"no tripod found at k={k}, seed={seed}")


_KIND_PARAMS: dict[str, tuple[set[str], set[str]]] = {
    # kind: (required, optional)
    "grid": ({"k"}, set()),
    "cantor_grid": ({"k", "s"}, {"mask"}),
    "slope_net": ({"k", "s"}, set()),
    "furstenberg_product": ({"k", "s"}, {"epsilon"}),
    "quasi_product": ({"k", "s", "tau"}, {"seed"}),
    "collinear_tripod": ({"k"}, {"seed"}),
}


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in _KIND_PARAMS:
            raise ParseError(f"unknown generator kind {self.kind!r}; known: {sorted(_KIND_PARAMS)}")
        required, optional = _KIND_PARAMS[self.kind]
        given = set(self.params)
        missing = required - given
        unknown = given - required - optional
        if missing:
            raise ParseError(f"{self.kind}: missing parameters {sorted(missing)}")
        if unknown:
            raise ParseError(f"{self.kind}: unknown parameters {sorted(unknown)}")

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": dict(sorted(self.params.items()))}

    @classmethod
    def from_json(cls, obj: dict) -> "GeneratorSpec":
        if not isinstance(obj, dict) or "kind" not in obj:
            raise ParseError("generator spec JSON needs a 'kind'")
        params = obj.get("params", {})
        if not isinstance(params, dict):
            raise ParseError("'params' must be an object")
        return cls(str(obj["kind"]), dict(params))

    def build(self) -> Any:
        p = self.params
        k = int(p["k"])
        if self.kind == "grid":
            return grid(k)
        if self.kind == "cantor_grid":
            return cantor_grid(k, float(p["s"]), p.get("mask"))
        if self.kind == "slope_net":
            return slope_net(k, float(p["s"]))
        if self.kind == "furstenberg_product":
            return furstenberg_product(k, float(p["s"]), float(p.get("epsilon", 0.25)))
        if self.kind == "quasi_product":
            return quasi_product(k, float(p["s"]), float(p["tau"]), int(p.get("seed", 0)))
        if self.kind == "collinear_tripod":
            return collinear_tripod(k, int(p.get("seed", 0)))
        raise ParseError(f"unreachable kind {self.kind}")
