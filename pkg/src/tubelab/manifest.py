"""Reproducible experiment runs: build inputs, analyze per scale, emit artifacts.

A manifest names a generator (or an input file), a list of working scales,
the analyses to run at each scale, and an output directory. Reruns write
byte-identical data files; the wall clock lives alone in meta.json so every
other artifact can be hashed or diffed. The manifest's own canonical JSON
hash is stamped into each report.

Artifacts per run directory:
  manifest.json    canonical echo of the manifest
  report_k{K}.json one report per scale
  aggregate.csv    one row per scale, fixed versioned columns
  fit.json         exponent fit of log2(count) against k (needs >= 2 scales)
  sweep_k{K}.csv   per-direction counts, when the sweep analysis runs
  witness.json     machine-readable witness, when a hypothesis fails
  meta.json        timestamp and exit code (the only non-reproducible file)
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from .additive import (
    QuasiProduct,
    best_slice_pair,
    bsg_refine,
    plunnecke_corollary_check,
    tripod_residual,
    tube_slice_pairs,
)
from .core_grid import PointSet, Scale, fit_exponent
from .delta_sets import DeltaSetParams, validate, validate_1d
from .errors import HypothesisViolation, ParseError, ScaleError, TubelabError
from .generators import _KIND_PARAMS, GeneratorSpec, TripodInstance, quasi_product_tubes
from .incidence import (
    Configuration,
    cauchy_schwarz_bound,
    dichotomy_check,
    incidence_report,
    validate_configuration,
)
from .projections import DirectionNet, sweep, sweep_to_csv

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_PARSE = 2
EXIT_HYPOTHESIS = 3
EXIT_INTERNAL = 4

CSV_SCHEMA = "tubelab-1"
CSV_COLUMNS = (
    "schema_version",
    "k",
    "n_points",
    "n_tubes",
    "coarse_tube_count",
    "incidence_count",
    "e_tubes",
    "e_coarse",
    "verdicts",
)

ANALYSES = ("validate", "incidence", "dichotomy", "sweep", "additive")

# what each generator kind builds, for analysis applicability checks
_KIND_SHAPE = {
    "grid": "points",
    "cantor_grid": "points",
    "slope_net": "values",
    "furstenberg_product": "configuration",
    "quasi_product": "quasi_product",
    "collinear_tripod": "tripod",
}

_ANALYSIS_SHAPES = {
    "validate": {"points", "values", "configuration", "quasi_product", "tripod"},
    "incidence": {"configuration"},
    "dichotomy": {"configuration"},
    "sweep": {"points", "configuration", "quasi_product"},
    "additive": {"quasi_product"},
}

# analyses that inspect the coarse scale delta^(1/2)
_NEEDS_EVEN_K = frozenset({"incidence", "dichotomy"})

# residual allowance for collinear tripods, in units of delta
TRIPOD_RESIDUAL_CAP = 16.0


def _natural_params(kind: str | None, params: dict, scale: Scale) -> DeltaSetParams:
    """Frostman profile a generator's point output is expected to meet.

    Constants carry margin over measured worst cases: the full grid needs
    about pi at exponent 2, cantor products stay under 7 at exponent 2s.
    """
    if kind == "grid":
        return DeltaSetParams(scale, 2.0, 4.0)
    if kind == "cantor_grid":
        return DeltaSetParams(scale, 2.0 * float(params["s"]), 8.0)
    return DeltaSetParams(scale, 1.0, 8.0)


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


@dataclass(frozen=True)
class ExperimentManifest:
    """Declarative description of one reproducible run.

    Exactly one of generator_kind and input_path is set. Generator params
    omit k: the manifest's k_range supplies it per scale.
    """

    generator_kind: str | None
    generator_params: dict = field(default_factory=dict)
    input_path: str | None = None
    k_range: tuple[int, ...] = ()
    analyses: tuple[str, ...] = ()
    slack: float = 0.25
    seed: int = 0
    out: str = "out"

    def __post_init__(self) -> None:
        if (self.generator_kind is None) == (self.input_path is None):
            raise ParseError("exactly one of 'generator' and 'input' is required")
        if self.generator_kind is not None:
            if self.generator_kind not in _KIND_SHAPE:
                raise ParseError(
                    f"unknown generator kind {self.generator_kind!r}; "
                    f"known: {sorted(_KIND_SHAPE)}"
                )
            required, optional = _KIND_PARAMS[self.generator_kind]
            given = set(self.generator_params)
            if "k" in given:
                raise ParseError("the manifest's k_range supplies k; drop it from params")
            missing = (required - {"k"}) - given
            unknown = given - required - optional
            if missing:
                raise ParseError(f"{self.generator_kind}: missing parameters {sorted(missing)}")
            if unknown:
                raise ParseError(f"{self.generator_kind}: unknown parameters {sorted(unknown)}")
        if not self.k_range:
            raise ParseError("k_range must be nonempty")
        if list(self.k_range) != sorted(set(self.k_range)):
            raise ParseError("k_range must be strictly increasing")
        for k in self.k_range:
            try:
                Scale(k)
            except ScaleError as exc:
                raise ParseError(str(exc)) from exc
        if not self.analyses:
            raise ParseError("at least one analysis is required")
        for name in self.analyses:
            if name not in ANALYSES:
                raise ParseError(f"unknown analysis {name!r}; known: {list(ANALYSES)}")
        if not 0.0 < self.slack <= 1.0:
            raise ParseError(f"slack {self.slack} must lie in (0, 1]")
        coarse = sorted(set(self.analyses) & _NEEDS_EVEN_K)
        if coarse and any(k % 2 for k in self.k_range):
            raise ParseError(
                f"analyses {coarse} inspect the coarse scale delta^(1/2) and need even k; "
                f"k_range {list(self.k_range)} contains odd values"
            )
        if self.generator_kind is not None:
            shape = _KIND_SHAPE[self.generator_kind]
            for name in self.analyses:
                if shape not in _ANALYSIS_SHAPES[name]:
                    raise ParseError(
                        f"analysis {name!r} does not apply to a "
                        f"{self.generator_kind!r} source (builds {shape})"
                    )

    def to_json(self) -> dict:
        obj: dict = {
            "schema": "tubelab-manifest-1",
            "k_range": list(self.k_range),
            "analyses": list(self.analyses),
            "slack": self.slack,
            "seed": self.seed,
            "out": self.out,
        }
        if self.generator_kind is not None:
            obj["generator"] = {
                "kind": self.generator_kind,
                "params": dict(sorted(self.generator_params.items())),
            }
        else:
            obj["input"] = self.input_path
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentManifest":
        if not isinstance(obj, dict):
            raise ParseError("manifest must be a JSON object")
        schema = obj.get("schema", "tubelab-manifest-1")
        if schema != "tubelab-manifest-1":
            raise ParseError(f"unsupported manifest schema {schema!r}")
        kind = None
        params: dict = {}
        if "generator" in obj:
            gen = obj["generator"]
            if not isinstance(gen, dict) or "kind" not in gen:
                raise ParseError("'generator' needs a 'kind'")
            kind = str(gen["kind"])
            params = gen.get("params", {})
            if not isinstance(params, dict):
                raise ParseError("'generator.params' must be an object")
        path = obj.get("input")
        try:
            k_range = tuple(int(k) for k in obj["k_range"])
            analyses = tuple(str(a) for a in obj["analyses"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"manifest needs 'k_range' and 'analyses': {exc}") from exc
        return cls(
            generator_kind=kind,
            generator_params=dict(params),
            input_path=None if path is None else str(path),
            k_range=k_range,
            analyses=analyses,
            slack=float(obj.get("slack", 0.25)),
            seed=int(obj.get("seed", 0)),
            out=str(obj.get("out", "out")),
        )

    def sha256(self) -> str:
        return hashlib.sha256(canonical_json(self.to_json()).encode()).hexdigest()


def _load_input(path: str) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read input {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"input {path!r} is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ParseError(f"input {path!r} must hold a JSON object")
    if "families" in obj:
        return Configuration.from_json(obj)
    if "levels" in obj:
        return QuasiProduct.from_json(obj)
    if "points" in obj:
        return PointSet.from_json(obj)
    raise ParseError(f"input {path!r} is not a point set, configuration, or quasi-product")


def _shape_of(obj: Any) -> str:
    if isinstance(obj, Configuration):
        return "configuration"
    if isinstance(obj, QuasiProduct):
        return "quasi_product"
    if isinstance(obj, PointSet):
        return "points"
    if isinstance(obj, TripodInstance):
        return "tripod"
    return "values"


def _point_set_of(obj: Any) -> PointSet:
    if isinstance(obj, Configuration):
        return obj.points
    if isinstance(obj, QuasiProduct):
        return PointSet(obj.scale, tuple(obj.points()))
    return obj


def _run_validate(obj: Any, manifest: ExperimentManifest, k: int, section: dict) -> bool:
    shape = _shape_of(obj)
    if shape == "configuration":
        violations = validate_configuration(obj)
        if violations:
            raise violations[0]
        section["hypotheses"] = "ok"
        return True
    if shape == "quasi_product":
        # the defining property: no tube of the natural family meets one
        # slice twice; tube_slice_pairs re-checks it and raises on failure
        tubes = quasi_product_tubes(obj)
        lo, hi = best_slice_pair(obj, tubes)
        graph = tube_slice_pairs(obj, tubes, lo, hi)
        section["levels"] = [lo, hi]
        section["slice_pairs"] = len(graph.edges)
        section["tube_count"] = len(tubes.keys)
        return True
    if shape == "tripod":
        b1, b2, b3 = obj.levels()
        residual = tripod_residual(obj.points, b1, b2, b3) * (1 << k)
        section["residual_over_delta"] = residual
        section["cap"] = TRIPOD_RESIDUAL_CAP
        return residual <= TRIPOD_RESIDUAL_CAP
    if shape == "values":
        s = float(manifest.generator_params.get("s", 1.0))
        report = validate_1d(obj, DeltaSetParams(Scale(k), s, 4.0))
        section["report"] = report.to_json()
        return report.valid
    report = validate(
        obj, _natural_params(manifest.generator_kind, manifest.generator_params, Scale(k))
    )
    section["report"] = report.to_json()
    return report.valid


def _analyze_one(manifest: ExperimentManifest, k: int) -> tuple[dict, dict[str, Any], str | None]:
    """Run all requested analyses at one scale.

    Returns (report json, csv row fields, sweep csv text or None). Raises
    HypothesisViolation when a checked hypothesis fails.
    """
    if manifest.generator_kind is not None:
        params = dict(manifest.generator_params)
        params["k"] = k
        if manifest.generator_kind in ("quasi_product", "collinear_tripod"):
            params.setdefault("seed", manifest.seed)
        spec = GeneratorSpec(manifest.generator_kind, params)
        obj = spec.build()
        source: dict = spec.to_json()
    else:
        obj = _load_input(manifest.input_path)
        if hasattr(obj, "scale") and obj.scale.k != k:
            raise ParseError(
                f"input file is at scale k={obj.scale.k} but the manifest asks for k={k}; "
                "set k_range to the file's scale"
            )
        source = {"input": manifest.input_path}
    shape = _shape_of(obj)
    for name in manifest.analyses:
        if shape not in _ANALYSIS_SHAPES[name]:
            raise ParseError(f"analysis {name!r} does not apply to this input (shape {shape})")

    report: dict = {"k": k, "source": source, "analyses": {}}
    row: dict[str, Any] = {c: "" for c in CSV_COLUMNS}
    row["schema_version"] = CSV_SCHEMA
    row["k"] = k
    if shape in ("points", "configuration", "quasi_product"):
        row["n_points"] = len(_point_set_of(obj).points)
    elif shape == "values":
        row["n_points"] = len(obj)
    verdicts: list[str] = []
    sweep_csv: str | None = None

    for name in ANALYSES:
        if name not in manifest.analyses:
            continue
        section: dict = {}
        if name == "validate":
            ok = _run_validate(obj, manifest, k, section)
        elif name == "incidence":
            inc = incidence_report(obj)
            cs = cauchy_schwarz_bound(obj)
            section["report"] = inc.to_json()
            section["cauchy_schwarz"] = cs.to_json()
            ok = inc.identity_ok and cs.inequality_ok
            row["n_tubes"] = inc.tube_count
            row["coarse_tube_count"] = inc.coarse_tube_count
            row["incidence_count"] = inc.incidence_count
            row["e_tubes"] = repr(inc.e_tubes)
            row["e_coarse"] = repr(inc.e_coarse)
        elif name == "dichotomy":
            rep = dichotomy_check(obj, manifest.slack)
            section["report"] = rep.to_json()
            ok = rep.passed
            if row["e_tubes"] == "":
                row["e_tubes"] = repr(rep.e_tubes)
                row["e_coarse"] = repr(rep.e_coarse)
        elif name == "sweep":
            points = _point_set_of(obj)
            net = DirectionNet.uniform(Scale(k))
            sw = sweep(points, net, Scale(k), audit=True)
            section["summary"] = {
                "n_directions": len(net),
                "quantiles": sw.quantiles(),
                "exceptional": {str(t): sw.exceptional_count(t) for t in (0.25, 0.5, 0.75)},
                "max_boundary_sensitivity": sw.max_sensitivity(),
            }
            sweep_csv = sweep_to_csv(sw)
            ok = True
        else:  # additive
            tubes = quasi_product_tubes(obj)
            lo, hi = best_slice_pair(obj, tubes)
            graph = tube_slice_pairs(obj, tubes, lo, hi)
            section["levels"] = [lo, hi]
            bsg = bsg_refine(graph)
            plun = plunnecke_corollary_check(graph.a_values, graph.b_values, Scale(k))
            section["bsg"] = bsg.to_json()
            section["plunnecke"] = plun.to_json()
            ok = plun.ok and math.isfinite(bsg.c_exponent)
        section["verdict"] = "pass" if ok else "fail"
        report["analyses"][name] = section
        verdicts.append(f"{name}:{'pass' if ok else 'fail'}")

    row["verdicts"] = ";".join(verdicts)
    return report, row, sweep_csv


def _csv_text(rows: list[dict[str, Any]]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for row in rows:
        lines.append(",".join(str(row[c]) for c in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def run(manifest: ExperimentManifest, threads: int = 1) -> int:
    """Execute the manifest, write artifacts, and return the exit code.

    Thread count never changes output bytes: per-scale work is pure and
    results are collected in k order before anything is written.
    """
    out = Path(manifest.out)
    out.mkdir(parents=True, exist_ok=True)
    digest = manifest.sha256()
    started = datetime.now(timezone.utc).isoformat()

    code = EXIT_PASS
    witness: dict | None = None
    reports: list[tuple[int, dict]] = []
    rows: list[dict[str, Any]] = []
    sweeps: list[tuple[int, str]] = []
    try:
        ks = list(manifest.k_range)
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(lambda k: _analyze_one(manifest, k), ks))
        else:
            results = [_analyze_one(manifest, k) for k in ks]
        for k, (report, row, sweep_csv) in zip(ks, results):
            report["manifest_sha256"] = digest
            reports.append((k, report))
            rows.append(row)
            if sweep_csv is not None:
                sweeps.append((k, sweep_csv))
        if any("fail" in row["verdicts"] for row in rows):
            code = EXIT_FAIL
    except HypothesisViolation as exc:
        code = EXIT_HYPOTHESIS
        witness = exc.payload()
    except ParseError:
        raise
    except TubelabError as exc:
        code = EXIT_INTERNAL
        witness = {"error": type(exc).__name__, "message": str(exc)}

    (out / "manifest.json").write_text(canonical_json(manifest.to_json()))
    for k, report in reports:
        (out / f"report_k{k}.json").write_text(canonical_json(report))
    for k, text in sweeps:
        (out / f"sweep_k{k}.csv").write_text(text)
    if rows:
        (out / "aggregate.csv").write_text(_csv_text(rows))
    if witness is not None:
        (out / "witness.json").write_text(canonical_json(witness))

    fit_samples = [
        (row["k"], row["n_tubes"] if row["n_tubes"] != "" else row["n_points"])
        for row in rows
        if row["n_tubes"] != "" or row["n_points"] != ""
    ]
    if len(fit_samples) >= 2:
        fit = fit_exponent(fit_samples)
        quantity = "n_tubes" if any(r["n_tubes"] != "" for r in rows) else "n_points"
        payload = fit.to_json()
        payload["quantity"] = quantity
        (out / "fit.json").write_text(canonical_json(payload))

    (out / "meta.json").write_text(
        canonical_json({"started": started, "exit_code": code, "manifest_sha256": digest})
    )
    return code
