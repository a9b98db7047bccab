"""Directional projection sweeps, exceptional directions, and truncated
energy sums.

Counting oracles are pure-Python dedupes of floor cells; the energy oracle
is a direct double loop.
"""
from __future__ import annotations

import math

import numpy as np
import pytest

from tubelab.core_grid import DyadicPoint, DyadicRational, PointSet, Scale
from tubelab.errors import DomainError, ValidationError
from tubelab.generators import cantor_grid, grid
from tubelab.projections import (
    DirectionNet,
    exceptional_ratio,
    exceptional_set,
    project,
    projection_energy,
    sweep,
    sweep_to_csv,
)

BOUNDARY_TOL = 2.0**-40


def _segment(k: int) -> PointSet:
    pts = tuple(DyadicPoint.of(i, k, 0, 0) for i in range(1 << k))
    return PointSet(Scale(k), pts)


def _cells(values, k: int) -> int:
    return len({math.floor(v * (1 << k) - BOUNDARY_TOL) for v in values})


# --- project ---


def test_project_axis_directions():
    ps = _segment(4)
    xs = sorted(p.x.as_float() for p in ps.points)
    assert list(project(ps, 0.0)) == xs
    assert project(ps, math.pi / 2) == (0.0,)


def test_project_diagonal_grid():
    ps = grid(3)
    vals = project(ps, math.pi / 4)
    assert min(vals) >= 0.0 and max(vals) <= math.sqrt(2.0)
    oracle = sorted({p.x.as_float() * math.cos(math.pi / 4) + p.y.as_float() * math.sin(math.pi / 4) for p in ps.points})
    assert list(vals) == oracle


# --- sweep ---


def test_sweep_single_point():
    ps = PointSet(Scale(4), (DyadicPoint.of(3, 4, 5, 4),))
    net = DirectionNet.uniform(Scale(4))
    sw = sweep(ps, net, Scale(4))
    assert set(sw.counts) == {1}


def test_sweep_segment_matches_cosine_formula():
    k = 6
    ps = _segment(k)
    angles = [j * math.pi / 16 for j in range(16)]
    net = DirectionNet.from_angles(Scale(k), angles)
    sw = sweep(ps, net, Scale(k))
    for a, count in zip(net.angles, sw.counts):
        span = (2**k - 1) * abs(math.cos(a)) / 2**k * 2**k
        assert max(1, math.floor(span)) - 1 <= count <= math.ceil(span) + 1


def test_sweep_counts_match_projection_dedupe():
    ps = cantor_grid(6, 0.5)
    net = DirectionNet.uniform(Scale(4))
    sw = sweep(ps, net, Scale(6))
    for i, angle in enumerate(net.angles):
        vals = [
            p.x.as_float() * net.cosines[i] + p.y.as_float() * net.sines[i]
            for p in ps.points
        ]
        assert sw.counts[i] == _cells(vals, 6)


def test_sweep_bounded_by_three_source_cells():
    ps = cantor_grid(8, 0.5)
    net = DirectionNet.uniform(Scale(5))
    sw = sweep(ps, net, Scale(8))
    from tubelab.core_grid import covering_number

    n_cells = covering_number(ps, Scale(8))
    assert all(c <= 3 * n_cells for c in sw.counts)


def test_sweep_rotation_covariance():
    ps = cantor_grid(6, 0.5)
    # keep angles below pi/2: the rotated projection then reuses the exact
    # same float products, so counts agree bit for bit
    angles = [j * 2.0**-4 for j in range(20)]
    net = DirectionNet.from_angles(Scale(6), angles)
    sw = sweep(ps, net, Scale(6))
    sw_rot = sweep(ps.quarter_turn(), net.rotated_quarter(), Scale(6))
    assert sw.counts == sw_rot.counts


def test_sweep_thread_determinism():
    ps = cantor_grid(8, 0.5)
    net = DirectionNet.uniform(Scale(5))
    one = sweep(ps, net, Scale(8), threads=1, audit=True)
    many = sweep(ps, net, Scale(8), threads=4, audit=True)
    assert one.counts == many.counts
    assert one.sensitivities == many.sensitivities


def test_sweep_audit_mode():
    ps = cantor_grid(8, 0.5)
    net = DirectionNet.uniform(Scale(4))
    plain = sweep(ps, net, Scale(8))
    audited = sweep(ps, net, Scale(8), audit=True)
    assert plain.sensitivities is None
    assert audited.sensitivities is not None
    assert audited.max_sensitivity() >= 0
    assert plain.counts == audited.counts


def test_sweep_rejects_empty_inputs():
    net = DirectionNet.uniform(Scale(3))
    with pytest.raises(DomainError):
        sweep(PointSet(Scale(4), ()), net, Scale(4))
    empty = DirectionNet(Scale(3), (), (), ())
    with pytest.raises(DomainError):
        sweep(grid(3), empty, Scale(3))


def test_sweep_quantiles_and_json():
    ps = cantor_grid(6, 0.5)
    net = DirectionNet.uniform(Scale(4))
    sw = sweep(ps, net, Scale(6), audit=True)
    q = sw.quantiles()
    assert q["min"] <= q["q25"] <= q["median"] <= q["q75"] <= q["max"]
    obj = sw.to_json(thresholds=(0.5,))
    assert obj["n_directions"] == len(net)
    assert obj["exceptional"]["0.5"] == sw.exceptional_count(0.5)
    assert "max_boundary_sensitivity" in obj


# --- exceptional directions ---


def test_exceptional_antitone():
    ps = cantor_grid(8, 0.5)
    net = DirectionNet.uniform(Scale(5))
    sw = sweep(ps, net, Scale(8))
    prev: set[float] = set()
    for t in (0.2, 0.4, 0.6, 0.8):
        sub = exceptional_set(sw, t)
        cur = set(sub.angles)
        assert prev <= cur
        assert len(sub) == sw.exceptional_count(t)
        prev = cur


def test_exceptional_segment_small_t():
    k = 6
    ps = _segment(k)
    # net containing the exact normal direction
    angles = [j * 2.0**-k for j in range(100)] + [math.pi / 2]
    net = DirectionNet.from_angles(Scale(k), sorted(angles))
    sw = sweep(ps, net, Scale(k))
    sub = exceptional_set(sw, 0.1)
    assert 1 <= len(sub) <= 3  # only near-normal directions collapse


def test_exceptional_empty_for_spread_set():
    ps = grid(4)
    net = DirectionNet.uniform(Scale(4))
    sw = sweep(ps, net, Scale(4))
    assert sw.exceptional_count(0.05) == 0
    assert len(exceptional_set(sw, 0.05)) == 0


def test_exceptional_rejects_bad_threshold():
    ps = grid(3)
    sw = sweep(ps, DirectionNet.uniform(Scale(3)), Scale(3))
    with pytest.raises(DomainError):
        sw.exceptional_count(0.0)
    with pytest.raises(DomainError):
        sw.exceptional_count(1.0)


def test_exceptional_ratio_normalization():
    ps = cantor_grid(8, 0.5)
    net = DirectionNet.uniform(Scale(4))
    sw = sweep(ps, net, Scale(8))
    t = 0.5
    expect = sw.exceptional_count(t) / (8**2 * 2 ** (8 * t))
    assert exceptional_ratio(sw, t) == pytest.approx(expect)


# --- energy ---


def test_energy_normal_direction_closed_form():
    k = 6
    ps = _segment(k)
    net = DirectionNet.from_angles(Scale(k), [math.pi / 2])
    s = 0.5
    rep = projection_energy(ps, net, s)
    n = len(ps.points)
    cap = 2.0 ** (k * s)
    assert rep.energies[0] == pytest.approx(cap * (1.0 - 1.0 / n))
    assert rep.average == pytest.approx(rep.energies[0])


def test_energy_matches_brute_force():
    ps = cantor_grid(4, 0.5)
    net = DirectionNet.from_angles(Scale(4), [0.1, 0.7, 1.3])
    s = 0.75
    rep = projection_energy(ps, net, s)
    cap = 2.0 ** (4 * s)
    pts = [(p.x.as_float(), p.y.as_float()) for p in ps.points]
    n = len(pts)
    for i in range(len(net)):
        c, sn = net.cosines[i], net.sines[i]
        vals = [x * c + y * sn for x, y in pts]
        total = 0.0
        for a in range(n):
            for b in range(n):
                if a == b:
                    continue
                d = abs(vals[a] - vals[b])
                total += cap if d == 0.0 else min(cap, d**-s)
        assert rep.energies[i] == pytest.approx(total / (n * n), rel=1e-9)


def test_energy_thread_determinism():
    ps = cantor_grid(6, 0.5)
    net = DirectionNet.uniform(Scale(3))
    one = projection_energy(ps, net, 1.0, threads=1)
    many = projection_energy(ps, net, 1.0, threads=4)
    assert one.energies == many.energies
    assert one.average == many.average


def test_energy_weighted_average():
    ps = cantor_grid(4, 0.5)
    net = DirectionNet.from_angles(Scale(4), [0.2, 0.9], weights=(3.0, 1.0))
    rep = projection_energy(ps, net, 0.5)
    expect = (3.0 * rep.energies[0] + 1.0 * rep.energies[1]) / 4.0
    assert rep.average == pytest.approx(expect)


def test_energy_rejects_degenerate_inputs():
    net = DirectionNet.uniform(Scale(3))
    one = PointSet(Scale(3), (DyadicPoint.of(0, 0, 0, 0),))
    with pytest.raises(DomainError):
        projection_energy(one, net, 0.5)
    with pytest.raises(DomainError):
        projection_energy(grid(3), net, 0.0)


def test_energy_anticorrelated_with_counts():
    # directions that compress the set have large truncated energy
    ps = cantor_grid(8, 0.5)
    net = DirectionNet.uniform(Scale(4))
    sw = sweep(ps, net, Scale(8))
    rep = projection_energy(ps, net, 0.5)
    counts = np.array(sw.counts, dtype=float)
    energies = np.array(rep.energies)
    ranks_c = np.argsort(np.argsort(counts))
    ranks_e = np.argsort(np.argsort(energies))
    rho = np.corrcoef(ranks_c, ranks_e)[0, 1]
    assert rho < -0.5


# --- DirectionNet ---


def test_uniform_net_shape():
    net = DirectionNet.uniform(Scale(4))
    assert len(net) == int(math.pi * 16) + 1
    assert net.angles[0] == 0.0
    assert all(0.0 <= a < math.pi for a in net.angles)
    assert net.min_separation() == pytest.approx(2.0**-4)


def test_net_from_slopes():
    slopes = [DyadicRational(i, 3) for i in range(8)]
    net = DirectionNet.from_slopes(Scale(3), slopes)
    assert len(net) == 8
    assert list(net.angles) == sorted(math.atan(v.as_float()) for v in slopes)


def test_net_validation_errors():
    with pytest.raises(ValidationError):
        DirectionNet.from_angles(Scale(3), [0.0, 0.0])
    with pytest.raises(ValidationError):
        DirectionNet.from_angles(Scale(3), [-0.1])
    with pytest.raises(ValidationError):
        DirectionNet.from_angles(Scale(3), [math.pi])
    with pytest.raises(ValidationError):
        DirectionNet.from_angles(Scale(3), [0.1, 0.2], weights=(1.0,))
    with pytest.raises(ValidationError):
        DirectionNet.from_angles(Scale(3), [0.1], weights=(0.0,))


def test_net_rotated_quarter_vectors():
    net = DirectionNet.from_angles(Scale(4), [0.0, 0.4, 1.0, 2.0, 3.0])
    rot = net.rotated_quarter()
    for i in range(len(net)):
        c, s = net.cosines[i], net.sines[i]
        c2, s2 = rot.cosines[i], rot.sines[i]
        # exact rotation by a quarter turn, possibly reflected back into
        # the upper half plane
        assert (c2, s2) in ((-s, c), (s, -c))
        assert abs(c2 * c + s2 * s) < 1e-12  # orthogonal
    twice = rot.rotated_quarter()
    assert all(
        (c2, s2) in ((c, s), (-c, -s))
        for c, s, c2, s2 in zip(net.cosines, net.sines, twice.cosines, twice.sines)
    )


def test_net_covering_number():
    net = DirectionNet.uniform(Scale(6))
    assert net.covering_number(Scale(6)) == len(net)
    coarse = net.covering_number(Scale(3))
    assert abs(coarse - int(math.pi * 8) - 1) <= 1


def test_net_frostman_report():
    net = DirectionNet.uniform(Scale(5))
    rep = net.frostman_report(1.0, 4.0)
    assert rep.valid


def test_net_json_roundtrip():
    net = DirectionNet.from_angles(Scale(4), [0.0, 0.5, 1.5], weights=(1.0, 2.0, 0.5))
    again = DirectionNet.from_json(net.to_json())
    assert again == net


# --- CSV ---


def test_sweep_to_csv_format():
    ps = cantor_grid(4, 0.5)
    net = DirectionNet.from_angles(Scale(4), [0.0, 1.0])
    sw = sweep(ps, net, Scale(4))
    text = sweep_to_csv(sw)
    lines = text.strip().split("\n")
    assert lines[0] == "angle,count,energy"
    assert len(lines) == 3
    assert lines[1].endswith(",")  # empty energy column
    rep = projection_energy(ps, net, 0.5)
    text2 = sweep_to_csv(sw, rep)
    row = text2.strip().split("\n")[1].split(",")
    assert float(row[0]) == 0.0
    assert int(row[1]) == sw.counts[0]
    assert float(row[2]) == rep.energies[0]


def test_sweep_to_csv_rejects_mismatched_energy():
    ps = cantor_grid(4, 0.5)
    net = DirectionNet.from_angles(Scale(4), [0.0, 1.0])
    other = DirectionNet.from_angles(Scale(4), [0.5])
    sw = sweep(ps, net, Scale(4))
    rep = projection_energy(ps, other, 0.5)
    with pytest.raises(ValidationError):
        sweep_to_csv(sw, rep)
