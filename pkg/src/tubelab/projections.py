"""Directional projection sweeps over finite angle nets.

pi_e(x, y) = x*cos(e) + y*sin(e) for angles e in [0, pi). Projections are a
floating-point diagnostic layered on the exact dyadic core: per-direction
covering counts use a shifted half-open cell convention (a value within 2^-40
of a cell boundary belongs to the lower cell), which keeps counts stable under
the rounding of the projection itself. An audit mode recounts with jittered
cell offsets to bound boundary sensitivity.

Quarter-turn rotations are exact: a rotated net reuses the stored unit
vectors as (c, s) -> (-s, c), so rotating the point set and the net together
reproduces bit-identical projection values.
"""

from __future__ import annotations

import math
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .core_grid import DyadicRational, PointSet, Scale
from .delta_sets import DeltaSetParams, ValidationReport, validate_1d
from .errors import DomainError, ValidationError

__all__ = [
    "DirectionNet",
    "ProjectionSweep",
    "ProjectionEnergy",
    "project",
    "sweep",
    "exceptional_set",
    "exceptional_ratio",
    "projection_energy",
    "sweep_to_csv",
]

# values within this distance of a cell boundary count in the lower cell
BOUNDARY_TOL = 2.0**-40
# audit jitter: far above the boundary tolerance, far below one cell
_AUDIT_JITTERS = (2.0**-20, -(2.0**-20))
# points live in [-4,4]^2, so projected values span less than 12
_SPAN_BOUND = 12.0


def _unit_vector(angle: float) -> tuple[float, float]:
    # snap the two exactly representable right angles so axis projections
    # are exact; everything else takes the library trig values
    if angle == 0.0:
        return 1.0, 0.0
    if angle == math.pi / 2:
        return 0.0, 1.0
    return math.cos(angle), math.sin(angle)


@dataclass(frozen=True)
class DirectionNet:
    """Ordered finite set of directions in [0, pi) with stored unit vectors.

    Vectors are kept alongside the angles so that right-angle rotations can
    be performed exactly (no repeated trig round-off). Order is preserved by
    all derived nets, which keeps per-direction outputs comparable.
    """

    scale: Scale
    angles: tuple[float, ...]
    cosines: tuple[float, ...]
    sines: tuple[float, ...]
    weights: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        n = len(self.angles)
        if len(self.cosines) != n or len(self.sines) != n:
            raise ValidationError("angle and vector tuples must have equal length")
        if self.weights is not None and len(self.weights) != n:
            raise ValidationError("weights length must match angles")
        seen: set[float] = set()
        for a, c, s in zip(self.angles, self.cosines, self.sines):
            if not (math.isfinite(a) and 0.0 <= a < math.pi):
                raise ValidationError(f"angle {a!r} outside [0, pi)")
            if a in seen:
                raise ValidationError(f"duplicate angle {a!r}")
            seen.add(a)
            if abs(c * c + s * s - 1.0) > 1e-9:
                raise ValidationError(f"direction vector for angle {a!r} is not unit length")
        if self.weights is not None:
            for w in self.weights:
                if not (math.isfinite(w) and w > 0.0):
                    raise ValidationError(f"weight {w!r} must be positive and finite")

    def __len__(self) -> int:
        return len(self.angles)

    @classmethod
    def from_angles(
        cls,
        scale: Scale,
        angles: Iterable[float],
        weights: Sequence[float] | None = None,
    ) -> "DirectionNet":
        angs = tuple(float(a) for a in angles)
        vectors = [_unit_vector(a) for a in angs]
        return cls(
            scale,
            angs,
            tuple(v[0] for v in vectors),
            tuple(v[1] for v in vectors),
            None if weights is None else tuple(float(w) for w in weights),
        )

    @classmethod
    def uniform(cls, scale: Scale) -> "DirectionNet":
        """The full delta-net {j*delta : 0 <= j*delta < pi} at the given scale."""
        delta = 2.0 ** (-scale.k)
        count = int(math.pi * (1 << scale.k)) + 1
        angles = [j * delta for j in range(count)]
        while angles and angles[-1] >= math.pi:
            angles.pop()
        return cls.from_angles(scale, angles)

    @classmethod
    def from_slopes(cls, scale: Scale, slopes: Iterable[DyadicRational]) -> "DirectionNet":
        """Directions normal to lines y = a*x + b, i.e. angle atan(a) per slope a.

        Slopes map bi-Lipschitz to angles on any bounded slope range, so a
        separated slope family yields a separated (coarser by the Lipschitz
        factor) angle family.
        """
        return cls.from_angles(scale, (math.atan(a.as_float()) for a in slopes))

    def direction(self, i: int) -> tuple[float, float, float]:
        return (self.angles[i], self.cosines[i], self.sines[i])

    def rotated_quarter(self) -> "DirectionNet":
        """Add pi/2 to every direction (mod pi), rotating vectors exactly.

        (c, s) -> (-s, c), negated back into the upper half plane when the
        angle wraps. Stored angles are float bookkeeping; the vectors carry
        the exact rotation.
        """
        half = math.pi / 2
        angles: list[float] = []
        cos2: list[float] = []
        sin2: list[float] = []
        for a, c, s in zip(self.angles, self.cosines, self.sines):
            if a < half:
                a2, c2, s2 = a + half, -s, c
            else:
                a2, c2, s2 = a - half, s, -c
            if a2 >= math.pi:
                a2 = math.nextafter(math.pi, 0.0)
            angles.append(a2)
            cos2.append(c2)
            sin2.append(s2)
        return DirectionNet(self.scale, tuple(angles), tuple(cos2), tuple(sin2), self.weights)

    def min_separation(self) -> float:
        if len(self.angles) < 2:
            return math.inf
        ordered = sorted(self.angles)
        return min(b - a for a, b in zip(ordered, ordered[1:]))

    def covering_number(self, target: Scale) -> int:
        """Distinct target-scale cells met by the angle set, exact via rationals."""
        step = 1 << target.k
        return len({math.floor(Fraction(a) * step) for a in self.angles})

    def frostman_report(self, t: float, constant: float) -> ValidationReport:
        """Validate the angles, floored to the scale grid, as a (delta,t,C)-set.

        Flooring moves each angle by less than delta, so constants inflate by
        at most 3^t relative to the raw angles; nets built on exact grid
        angles are unaffected.
        """
        step = 1 << self.scale.k
        values = [
            DyadicRational(math.floor(Fraction(a) * step), self.scale.k) for a in self.angles
        ]
        return validate_1d(values, DeltaSetParams(self.scale, t, constant))

    def to_json(self) -> dict:
        obj: dict = {"k": self.scale.k, "angles": list(self.angles)}
        if self.weights is not None:
            obj["weights"] = list(self.weights)
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "DirectionNet":
        from .errors import ParseError

        try:
            scale = Scale(int(obj["k"]))
            angles = [float(a) for a in obj["angles"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"direction net JSON needs 'k' and 'angles': {exc}") from exc
        weights = obj.get("weights")
        return cls.from_angles(scale, angles, weights)


def project(points: PointSet, angle: float) -> tuple[float, ...]:
    """The projected values {x*cos(angle) + y*sin(angle)}, sorted, deduplicated."""
    c, s = _unit_vector(angle)
    return tuple(sorted({p.x.as_float() * c + p.y.as_float() * s for p in points}))


def _coords(points: PointSet) -> tuple[np.ndarray, np.ndarray]:
    n = len(points.points)
    xs = np.fromiter((p.x.as_float() for p in points), dtype=np.float64, count=n)
    ys = np.fromiter((p.y.as_float() for p in points), dtype=np.float64, count=n)
    return xs, ys


def _cell_count(values: np.ndarray, k: int, jitter: float = 0.0) -> int:
    # lower-cell convention: u within BOUNDARY_TOL above floor(u) drops a cell
    u = values * float(1 << k) + jitter
    f = np.floor(u)
    f -= (u - f) < BOUNDARY_TOL
    return int(np.unique(f.astype(np.int64)).size)


@dataclass(frozen=True)
class ProjectionSweep:
    """Per-direction covering counts N(pi_e(K), 2^-k) over a direction net."""

    net: DirectionNet
    target: Scale
    points: PointSet
    counts: tuple[int, ...]
    sensitivities: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        cap = min(len(self.points.points), int(_SPAN_BOUND * (1 << self.target.k)) + 2)
        for c in self.counts:
            if not 1 <= c <= cap:
                raise ValidationError(f"projection count {c} outside [1, {cap}]")
        if self.sensitivities is not None and len(self.sensitivities) != len(self.counts):
            raise ValidationError("sensitivities length must match counts")

    def quantiles(self) -> dict[str, float]:
        data = sorted(self.counts)
        if len(data) == 1:
            q1 = med = q3 = float(data[0])
        else:
            q1, med, q3 = statistics.quantiles(data, n=4, method="inclusive")
        return {
            "min": float(data[0]),
            "q25": q1,
            "median": med,
            "q75": q3,
            "max": float(data[-1]),
        }

    def exceptional_count(self, t: float) -> int:
        """How many directions have N(pi_e(K), delta) <= delta^-t."""
        if not 0.0 < t < 1.0:
            raise DomainError(f"threshold exponent t={t} must lie in (0, 1)")
        threshold = 2.0 ** (self.target.k * t)
        return sum(1 for c in self.counts if c <= threshold)

    def max_sensitivity(self) -> int | None:
        if self.sensitivities is None:
            return None
        return max(self.sensitivities, default=0)

    def to_json(self, thresholds: Sequence[float] = ()) -> dict:
        obj: dict = {
            "k": self.target.k,
            "n_points": len(self.points.points),
            "n_directions": len(self.net),
            "angles": list(self.net.angles),
            "counts": list(self.counts),
            "quantiles": self.quantiles(),
            "exceptional": {str(t): self.exceptional_count(t) for t in thresholds},
        }
        if self.sensitivities is not None:
            obj["max_boundary_sensitivity"] = self.max_sensitivity()
        return obj


def sweep(
    points: PointSet,
    net: DirectionNet,
    target: Scale,
    *,
    threads: int = 1,
    audit: bool = False,
) -> ProjectionSweep:
    """Covering count of the projection per net direction, at the target scale.

    With audit=True each direction is recounted under jittered cell offsets
    and the worst absolute count deviation is recorded per direction.
    """
    if not points.points:
        raise DomainError("cannot sweep an empty point set")
    if len(net) == 0:
        raise DomainError("cannot sweep an empty direction net")
    xs, ys = _coords(points)
    k = target.k

    def one(i: int) -> tuple[int, int]:
        c, s = net.cosines[i], net.sines[i]
        vals = xs * c + ys * s
        count = _cell_count(vals, k)
        spread = 0
        if audit:
            for jit in _AUDIT_JITTERS:
                spread = max(spread, abs(_cell_count(vals, k, jit) - count))
        return count, spread

    indices = range(len(net))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, indices))
    else:
        results = [one(i) for i in indices]
    counts = tuple(r[0] for r in results)
    sens = tuple(r[1] for r in results) if audit else None
    return ProjectionSweep(net, target, points, counts, sens)


def exceptional_set(sw: ProjectionSweep, t: float) -> DirectionNet:
    """The sub-net of directions with N(pi_e(K), delta) <= delta^-t.

    Antitone in -t: smaller t admits fewer directions. May be empty. Stored
    unit vectors are carried over unchanged.
    """
    if not 0.0 < t < 1.0:
        raise DomainError(f"threshold exponent t={t} must lie in (0, 1)")
    threshold = 2.0 ** (sw.target.k * t)
    keep = [i for i, c in enumerate(sw.counts) if c <= threshold]
    net = sw.net
    return DirectionNet(
        net.scale,
        tuple(net.angles[i] for i in keep),
        tuple(net.cosines[i] for i in keep),
        tuple(net.sines[i] for i in keep),
        None if net.weights is None else tuple(net.weights[i] for i in keep),
    )


def exceptional_ratio(sw: ProjectionSweep, t: float) -> float:
    """Measured constant A in: exceptional count <= A * log2(1/delta)^2 * delta^-t."""
    k = sw.target.k
    if k < 1:
        raise DomainError("exceptional ratio needs target scale k >= 1")
    return sw.exceptional_count(t) / (k * k * 2.0 ** (k * t))


@dataclass(frozen=True)
class ProjectionEnergy:
    """Discrete truncated s-energy of the projected set, per net direction."""

    net: DirectionNet
    scale: Scale
    s: float
    energies: tuple[float, ...]
    average: float

    def to_json(self) -> dict:
        return {
            "k": self.scale.k,
            "s": self.s,
            "angles": list(self.net.angles),
            "energies": list(self.energies),
            "average": self.average,
        }


def projection_energy(
    points: PointSet,
    net: DirectionNet,
    s: float,
    *,
    threads: int = 1,
) -> ProjectionEnergy:
    """I_s(e) = (1/n^2) sum_{p != q} min(delta^-s, |pi_e(p) - pi_e(q)|^-s).

    The truncation at delta^-s (delta from the point set's scale) keeps every
    term finite, including coincident projections. Also reports the
    net-average (weighted when the net carries weights).
    """
    n = len(points.points)
    if n < 2:
        raise DomainError("projection energy needs at least two points")
    if len(net) == 0:
        raise DomainError("cannot evaluate energy over an empty direction net")
    if s <= 0.0:
        raise DomainError(f"energy exponent s={s} must be positive")
    xs, ys = _coords(points)
    cap = 2.0 ** (points.scale.k * s)
    block = 1024

    def one(i: int) -> float:
        c, sn = net.cosines[i], net.sines[i]
        vals = xs * c + ys * sn
        # sum over the full matrix, then drop the n diagonal terms (each
        # truncates to cap exactly)
        total = 0.0
        with np.errstate(divide="ignore"):
            for lo in range(0, n, block):
                d = np.abs(vals[lo : lo + block, None] - vals[None, :])
                total += float(np.minimum(d**-s, cap).sum())
        return (total - n * cap) / (n * n)

    indices = range(len(net))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            energies = tuple(pool.map(one, indices))
    else:
        energies = tuple(one(i) for i in indices)
    if net.weights is None:
        average = math.fsum(energies) / len(energies)
    else:
        average = math.fsum(w * e for w, e in zip(net.weights, energies)) / math.fsum(net.weights)
    return ProjectionEnergy(net, points.scale, s, energies, average)


def sweep_to_csv(sw: ProjectionSweep, energy: ProjectionEnergy | None = None) -> str:
    """CSV rows (angle, count, energy); energy column empty when not supplied."""
    if energy is not None and len(energy.energies) != len(sw.counts):
        raise ValidationError("energy report does not match sweep net")
    lines = ["angle,count,energy"]
    for i, (a, c) in enumerate(zip(sw.net.angles, sw.counts)):
        e = "" if energy is None else repr(energy.energies[i])
        lines.append(f"{a!r},{c},{e}")
    return "\n".join(lines) + "\n"
