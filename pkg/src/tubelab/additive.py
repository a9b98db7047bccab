"""Additive-combinatorial diagnostics on quasi-product configurations.

A quasi product stacks horizontal slices A_b x {b} over a level set B; steep
tubes crossing the slices induce pair graphs whose additive structure
(sumset covers, Balog-Szemeredi-Gowers refinement, Plunnecke-Ruzsa growth,
tripod projections) is measured here. Set arithmetic on dyadic values is
exact; cell counts of non-dyadic projection values go through Fraction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .core_grid import DyadicPoint, DyadicRational, Scale, check_value_bound
from .errors import HypothesisViolation, ParseError, ValidationError
from .tubes import DyadicTube, TubeFamily, tube_contains


@dataclass(frozen=True)
class QuasiProduct:
    """Levels b in B with one horizontal slice A_b x {b} per level."""

    scale: Scale
    s: float
    tau: float
    levels: tuple[DyadicRational, ...]
    slices: tuple[tuple[DyadicRational, ...], ...]

    def __post_init__(self) -> None:
        if len(self.levels) != len(self.slices):
            raise ValidationError("one slice per level required")
        if any(len(sl) == 0 for sl in self.slices):
            raise ValidationError("empty slice")
        for b in self.levels:
            check_value_bound(b)
        for sl in self.slices:
            for a in sl:
                check_value_bound(a)
        if list(self.levels) != sorted(set(self.levels)):
            raise ValidationError("levels must be strictly increasing")

    def points(self) -> list[DyadicPoint]:
        out = []
        for b, sl in zip(self.levels, self.slices):
            for a in sl:
                out.append(DyadicPoint(a, b))
        return out

    def to_json(self) -> dict:
        return {
            "k": self.scale.k,
            "s": self.s,
            "tau": self.tau,
            "levels": [b.pair() for b in self.levels],
            "slices": [
                {"level_index": i, "values": [a.pair() for a in sl]}
                for i, sl in enumerate(self.slices)
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "QuasiProduct":
        try:
            k = int(obj["k"])
            s = float(obj["s"])
            tau = float(obj["tau"])
            level_rows = obj["levels"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"quasi product JSON needs k, s, tau, levels: {exc}") from exc
        levels = tuple(DyadicRational.from_pair(row) for row in level_rows)
        slots: list[tuple[DyadicRational, ...] | None] = [None] * len(levels)
        for entry in obj.get("slices", []):
            idx = int(entry.get("level_index", -1))
            if not (0 <= idx < len(levels)):
                raise ParseError(f"slice references missing level index {idx}")
            if slots[idx] is not None:
                raise ParseError(f"two slices for level index {idx}")
            slots[idx] = tuple(DyadicRational.from_pair(r) for r in entry.get("values", []))
        for i, sl in enumerate(slots):
            if sl is None:
                raise ParseError(f"no slice for level index {i}")
        return cls(Scale(k), s, tau, levels, tuple(slots))  # type: ignore[arg-type]


def sumset_cover(a_values: Sequence[DyadicRational], b_values: Sequence[DyadicRational], target: Scale) -> int:
    """Number of target-cells met by {a + b}; exact."""
    k = target.k
    cells = {(a + b).floor_to_int(k) for a in a_values for b in b_values}
    return len(cells)


def exact_sumset_size(a_values: Sequence[DyadicRational], b_values: Sequence[DyadicRational]) -> int:
    return len({(a + b) for a in a_values for b in b_values})


@dataclass(frozen=True)
class PairGraph:
    """Bipartite relation G between value sets A and B, edges as index pairs,
    with the additive-energy parameter K it is claimed to satisfy."""

    a_values: tuple[DyadicRational, ...]
    b_values: tuple[DyadicRational, ...]
    edges: tuple[tuple[int, int], ...]
    K: float

    def __post_init__(self) -> None:
        na, nb = len(self.a_values), len(self.b_values)
        seen = set()
        for i, j in self.edges:
            if not (0 <= i < na and 0 <= j < nb):
                raise ValidationError(f"edge ({i},{j}) out of range")
            if (i, j) in seen:
                raise ValidationError(f"duplicate edge ({i},{j})")
            seen.add((i, j))
        if self.K <= 0:
            raise ValidationError("K must be positive")

    def restricted_sumset_size(self) -> int:
        return len({self.a_values[i] + self.b_values[j] for i, j in self.edges})

    def restricted_sumset_cover(self, target: Scale) -> int:
        k = target.k
        return len({(self.a_values[i] + self.b_values[j]).floor_to_int(k) for i, j in self.edges})

    def eligibility(self) -> dict:
        """The two Balog-Szemeredi-Gowers hypotheses at this K."""
        na, nb = len(self.a_values), len(self.b_values)
        size_ok = len(self.edges) * self.K >= na * nb
        sum_ok = self.restricted_sumset_size() <= self.K * math.sqrt(na * nb)
        return {
            "edge_count_ok": size_ok,
            "restricted_sum_ok": sum_ok,
            "k_too_large": self.K * self.K >= na * nb,
        }


def restricted_sumset(g: PairGraph, target: Scale) -> int:
    """Number of target-cells met by {a + b : (a, b) an edge of g}; exact."""
    return g.restricted_sumset_cover(target)


def measured_bsg_parameter(
    a_values: Sequence[DyadicRational],
    b_values: Sequence[DyadicRational],
    edges: Sequence[tuple[int, int]],
) -> float:
    """Smallest K making both hypotheses true for this graph."""
    na, nb = len(a_values), len(b_values)
    if not edges:
        raise ValidationError("empty graph has no meaningful K")
    s = len({a_values[i] + b_values[j] for i, j in edges})
    return max(na * nb / len(edges), s / math.sqrt(na * nb))


@dataclass(frozen=True)
class BsgReport:
    a_kept: tuple[int, ...]
    b_kept: tuple[int, ...]
    rounds: int
    c_exponent: float
    component_exponents: tuple[float, float, float, float]
    flags: dict

    def to_json(self) -> dict:
        return {
            "a_kept": list(self.a_kept),
            "b_kept": list(self.b_kept),
            "rounds": self.rounds,
            "c_exponent": self.c_exponent,
            "component_exponents": list(self.component_exponents),
            "flags": self.flags,
        }


def bsg_refine(g: PairGraph) -> BsgReport:
    """Deterministic popularity refinement: repeatedly delete vertices whose
    degree falls below half the side average, then measure the smallest c
    with |A'| >= K^-c |A|, |B'| >= K^-c |B|, |A'+B'| <= K^c sqrt(|A||B|),
    and |G cap (A'xB')| >= K^-c |A||B|."""
    na, nb = len(g.a_values), len(g.b_values)
    alive_a = set(range(na))
    alive_b = set(range(nb))
    edges = set(g.edges)
    rounds = 0
    while True:
        rounds += 1
        cur = [(i, j) for i, j in edges if i in alive_a and j in alive_b]
        if not cur:
            break
        deg_a: dict[int, int] = {}
        deg_b: dict[int, int] = {}
        for i, j in cur:
            deg_a[i] = deg_a.get(i, 0) + 1
            deg_b[j] = deg_b.get(j, 0) + 1
        m = len(cur)
        drop_a = {i for i in alive_a if deg_a.get(i, 0) < m / (2 * len(alive_a))}
        drop_b = {j for j in alive_b if deg_b.get(j, 0) < m / (2 * len(alive_b))}
        if not drop_a and not drop_b:
            break
        alive_a -= drop_a
        alive_b -= drop_b
        if not alive_a or not alive_b:
            break
    kept_a = tuple(sorted(alive_a))
    kept_b = tuple(sorted(alive_b))
    flags = g.eligibility()
    if not kept_a or not kept_b:
        return BsgReport(kept_a, kept_b, rounds, math.inf, (math.inf,) * 4, {**flags, "collapsed": True})
    surviving = [(i, j) for i, j in g.edges if i in alive_a and j in alive_b]
    a_sub = [g.a_values[i] for i in kept_a]
    b_sub = [g.b_values[j] for j in kept_b]
    sum_sub = len({a + b for a in a_sub for b in b_sub})
    root = math.sqrt(na * nb)
    if g.K <= 1.0:
        # every conclusion is either trivially true or vacuous at K <= 1
        return BsgReport(kept_a, kept_b, rounds, 0.0, (0.0, 0.0, 0.0, 0.0), {**flags, "k_at_most_one": True})
    log_k = math.log(g.K)
    comp = (
        math.log(na / len(kept_a)) / log_k,
        math.log(nb / len(kept_b)) / log_k,
        math.log(max(sum_sub / root, 1.0)) / log_k,
        math.log(na * nb / max(len(surviving), 1)) / log_k,
    )
    c = max(0.0, *comp)
    return BsgReport(kept_a, kept_b, rounds, c, comp, flags)


@dataclass(frozen=True)
class PlunneckeReport:
    c0: float
    a_cells: int
    b_cells: int
    sum_ab: int
    sum_bb: int
    diff_bb: int
    bound: float
    ok: bool

    def to_json(self) -> dict:
        return {
            "c0": self.c0,
            "a_cells": self.a_cells,
            "b_cells": self.b_cells,
            "sum_ab": self.sum_ab,
            "sum_bb": self.sum_bb,
            "diff_bb": self.diff_bb,
            "bound": self.bound,
            "ok": self.ok,
        }


def plunnecke_corollary_check(
    a_values: Sequence[DyadicRational],
    b_values: Sequence[DyadicRational],
    scale: Scale,
) -> PlunneckeReport:
    """Floor both sets to the delta-grid, measure C0 = |A+B|/|A| there, and
    verify |B+B| and |B-B| against 4 C0^2 |A| (integer C = ceil(C0) satisfies
    C^2 <= 4 C0^2 for C0 >= 1, so the factor 4 absorbs the rounding)."""
    k = scale.k
    a_grid = sorted({v.floor_to_int(k) for v in a_values})
    b_grid = sorted({v.floor_to_int(k) for v in b_values})
    if not a_grid or not b_grid:
        raise ValidationError("empty set")
    sum_ab = len({a + b for a in a_grid for b in b_grid})
    sum_bb = len({x + y for x in b_grid for y in b_grid})
    diff_bb = len({x - y for x in b_grid for y in b_grid})
    c0 = sum_ab / len(a_grid)
    bound = 4.0 * c0 * c0 * len(a_grid)
    ok = sum_bb <= bound and diff_bb <= bound
    return PlunneckeReport(c0, len(a_grid), len(b_grid), sum_ab, sum_bb, diff_bb, bound, ok)


def tripod_projection(x: float, y: float, b1: float, b2: float, b3: float) -> float:
    """pi_{b1,b2,b3}(x, y) = x + ((b2-b1)/(b3-b2)) * y."""
    if b3 == b2:
        raise ValidationError("b3 == b2 degenerates the projection")
    return x + ((b2 - b1) / (b3 - b2)) * y


def tripod_residual(
    points: Sequence[DyadicPoint],
    b1: DyadicRational,
    b2: DyadicRational,
    b3: DyadicRational,
) -> float:
    """Collinearity defect |a1 + q*a3 - (1+q)*a2| for a_i = pi_{b1,b2,b3}(p_i).

    Zero for exactly collinear points at exact levels b_i; for grid points on
    one steep tube with level gaps >= 1/4 it stays within a small multiple of
    delta (the coefficients q and 1+q are bounded by 4).
    """
    if len(points) != 3:
        raise ValidationError("a tripod has exactly three points")
    f1, f2, f3 = (b1.as_float(), b2.as_float(), b3.as_float())
    a1, a2, a3 = (tripod_projection(p.x.as_float(), p.y.as_float(), f1, f2, f3) for p in points)
    q = (f2 - f1) / (f3 - f2)
    return abs(a1 + q * a3 - (1.0 + q) * a2)


def _fraction(v: DyadicRational) -> Fraction:
    return Fraction(v.num, 1 << v.exp)


def tripod_image_cover(
    pairs: Iterable[tuple[DyadicRational, DyadicRational]],
    b1: DyadicRational,
    b2: DyadicRational,
    b3: DyadicRational,
    target: Scale,
) -> int:
    """Exact delta-cell count of {a1 + ((b2-b1)/(b3-b2)) a3} over the pairs.

    The ratio is rational but not dyadic, so the floor goes through Fraction.
    """
    if b3 == b2:
        raise ValidationError("b3 == b2 degenerates the projection")
    q = _fraction(b2 - b1) / _fraction(b3 - b2)
    k = target.k
    cells = set()
    for a1, a3 in pairs:
        v = (_fraction(a1) + q * _fraction(a3)) * (1 << k)
        cells.add(v.numerator // v.denominator)
    return len(cells)


def slice_multiplicity_violation(qp: QuasiProduct, tubes: TubeFamily) -> HypothesisViolation | None:
    """Steepness hypothesis: no tube may meet two points of one slice."""
    for t in tubes:
        for li, (b, sl) in enumerate(zip(qp.levels, qp.slices)):
            hits = 0
            for a in sl:
                if tube_contains(t, DyadicPoint(a, b)):
                    hits += 1
                    if hits > 1:
                        return HypothesisViolation(
                            "tube_slice_multiplicity",
                            "a tube meets two points of one slice",
                            {"tube_cell": list(t.indices()), "level_index": li},
                        )
    return None


def prune_to_slice_multiplicity(qp: QuasiProduct, tubes: TubeFamily) -> TubeFamily:
    """Drop every tube that meets a slice twice; the surviving family
    satisfies the steepness hypothesis by construction."""
    keep = []
    for t in tubes:
        ok = True
        for b, sl in zip(qp.levels, qp.slices):
            hits = 0
            for a in sl:
                if tube_contains(t, DyadicPoint(a, b)):
                    hits += 1
                    if hits > 1:
                        ok = False
                        break
            if not ok:
                break
        if ok:
            keep.append(t)
    return TubeFamily.from_tubes(tubes.scale, keep)


def best_slice_pair(qp: QuasiProduct, tubes: TubeFamily) -> tuple[int, int]:
    """The level pair joined by the most tubes of the family.

    Ties prefer wider level separation, then lower indices; deterministic.
    Candidate tubes per point come from the exact intercept window (at most
    three intercepts per slope contain a given point), so the scan costs
    O(points * slopes). Raises ValidationError when no tube joins two
    distinct levels.
    """
    k = qp.scale.k
    off = 1 << (k + 3)
    shift = k + 4
    family = set(tubes.keys)
    slope_idx = sorted({key >> shift for key in tubes.keys})
    # key -> (level index, point index) incidences
    hits: dict[int, list[tuple[int, int]]] = {}
    for li, (b, sl) in enumerate(zip(qp.levels, qp.slices)):
        for pi, a_val in enumerate(sl):
            m = max(a_val.exp, b.exp, k)
            x_num = a_val.num << (m - a_val.exp)
            y_num = b.num << (m - b.exp)
            yk = y_num << k
            for packed_a in slope_idx:
                a_idx = packed_a - off
                u = yk - a_idx * x_num
                if x_num >= 0:
                    lo = ((u - x_num - (1 << m)) >> m) + 1
                    hi = u >> m
                else:
                    lo = ((u - (1 << m)) >> m) + 1
                    hi = (u - x_num - 1) >> m
                for b_idx in range(lo, hi + 1):
                    key = (packed_a << shift) | (b_idx + off)
                    if key in family:
                        hits.setdefault(key, []).append((li, pi))
    pair_edges: dict[tuple[int, int], set[tuple[int, int]]] = {}
    for incidences in hits.values():
        for x in range(len(incidences)):
            for y in range(x + 1, len(incidences)):
                (li, pi), (lj, pj) = incidences[x], incidences[y]
                if li != lj:
                    pair_edges.setdefault((li, lj), set()).add((pi, pj))
    if not pair_edges:
        raise ValidationError("no tube joins two distinct levels")

    def rank(item: tuple[tuple[int, int], set]) -> tuple:
        (lo, hi), edges = item
        gap = (qp.levels[hi] - qp.levels[lo]).as_float()
        return (len(edges), gap, -lo, -hi)

    return max(pair_edges.items(), key=rank)[0]


def tube_slice_pairs(
    qp: QuasiProduct, tubes: TubeFamily, level_lo: int, level_hi: int
) -> PairGraph:
    """Pairs (a1, a3) joined by a tube through slices level_lo and level_hi.

    Raises HypothesisViolation if any tube meets two points of one slice
    (checked over every slice, not only the two used).
    """
    n = len(qp.levels)
    if not (0 <= level_lo < n and 0 <= level_hi < n) or level_lo == level_hi:
        raise ValidationError(f"level indices ({level_lo}, {level_hi}) invalid for {n} levels")
    bad = slice_multiplicity_violation(qp, tubes)
    if bad is not None:
        raise bad
    b_lo, slice_lo = qp.levels[level_lo], qp.slices[level_lo]
    b_hi, slice_hi = qp.levels[level_hi], qp.slices[level_hi]
    edges = set()
    for t in tubes:
        i_lo = next((i for i, a in enumerate(slice_lo) if tube_contains(t, DyadicPoint(a, b_lo))), None)
        if i_lo is None:
            continue
        i_hi = next((i for i, a in enumerate(slice_hi) if tube_contains(t, DyadicPoint(a, b_hi))), None)
        if i_hi is None:
            continue
        edges.add((i_lo, i_hi))
    if not edges:
        raise ValidationError("no tube joins the two slices")
    k = measured_bsg_parameter(slice_lo, slice_hi, sorted(edges))
    return PairGraph(tuple(slice_lo), tuple(slice_hi), tuple(sorted(edges)), max(k, 1.0))


def dilate_sumset_sweep(
    values: Sequence[DyadicRational], ratios: Sequence[Fraction], target: Scale
) -> list[tuple[Fraction, int]]:
    """Cell counts of {d1 + r * d2} per dilation ratio r; exact via Fraction."""
    k = target.k
    out = []
    for r in ratios:
        cells = set()
        for d1 in values:
            f1 = _fraction(d1)
            for d2 in values:
                v = (f1 + r * _fraction(d2)) * (1 << k)
                cells.add(v.numerator // v.denominator)
        out.append((r, len(cells)))
    return out
