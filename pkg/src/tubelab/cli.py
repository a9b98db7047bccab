"""Command-line harness.

Subcommands build or load an object (point set, tube configuration,
quasi-product, tripod, slope values), run one analysis, and emit JSON or CSV.
The `run` subcommand executes a full experiment manifest.

Exit codes:
  0  requested checks passed
  1  checks ran but a verdict failed
  2  arguments, files, or manifest failed to parse or validate as input
  3  a structural hypothesis failed; a machine-readable witness is printed
  4  internal error

TUBELAB_LOG in {error, warn, info, debug} routes diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from typing import Any, Sequence

from .additive import (
    QuasiProduct,
    best_slice_pair,
    bsg_refine,
    plunnecke_corollary_check,
    tripod_residual,
    tube_slice_pairs,
)
from .core_grid import Scale, fit_exponent
from .delta_sets import DeltaSetParams, validate, validate_1d
from .errors import (
    DomainError,
    HypothesisViolation,
    ParseError,
    ScaleError,
    TubelabError,
)
from .generators import _KIND_PARAMS, GeneratorSpec, TripodInstance, quasi_product_tubes
from .incidence import (
    Configuration,
    cauchy_schwarz_bound,
    dichotomy_check,
    incidence_report,
    validate_configuration,
)
from .manifest import (
    EXIT_FAIL,
    EXIT_HYPOTHESIS,
    EXIT_INTERNAL,
    EXIT_PARSE,
    EXIT_PASS,
    TRIPOD_RESIDUAL_CAP,
    ExperimentManifest,
    _load_input,
    _point_set_of,
    _shape_of,
    canonical_json,
    run as run_manifest,
)
from .projections import DirectionNet, projection_energy, sweep, sweep_to_csv

log = logging.getLogger("tubelab")

_LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


def _setup_logging() -> None:
    name = os.environ.get("TUBELAB_LOG", "warn").lower()
    level = _LOG_LEVELS.get(name, logging.WARNING)
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(message)s")


def _emit(obj: Any, out: str | None) -> None:
    text = canonical_json(obj)
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
        log.info("wrote %s", out)


def _generator_params(args: argparse.Namespace, kind: str) -> dict:
    # flags like --s double as analysis knobs; forward only what the kind takes
    required, optional = _KIND_PARAMS[kind]
    allowed = (required | optional) - {"k"}
    params: dict = {"k": getattr(args, "k", None)}
    for name in ("s", "tau", "seed", "epsilon"):
        value = getattr(args, name, None)
        if value is not None and name in allowed:
            params[name] = value
    return params


def _build_object(args: argparse.Namespace) -> Any:
    if getattr(args, "input", None):
        return _load_input(args.input)
    if getattr(args, "kind", None) is None:
        raise ParseError("either --input FILE or --kind KIND is required")
    if args.k is None:
        raise ParseError("--k is required with --kind")
    return GeneratorSpec(args.kind, _generator_params(args, args.kind)).build()


def _add_source_flags(p: argparse.ArgumentParser, kinds: Sequence[str]) -> None:
    p.add_argument("--input", help="JSON file holding the object to analyze")
    p.add_argument("--kind", choices=list(kinds), help="generator to build instead of --input")
    p.add_argument("--k", type=int, help="working scale exponent (delta = 2^-k)")
    p.add_argument("--s", type=float, help="dimension parameter for generators that take one")
    p.add_argument("--tau", type=float, help="level-set dimension for quasi_product")
    p.add_argument("--seed", type=int, help="generator seed")
    p.add_argument("--epsilon", type=float, help="epsilon for furstenberg_product")


_ALL_KINDS = (
    "grid",
    "cantor_grid",
    "slope_net",
    "furstenberg_product",
    "quasi_product",
    "collinear_tripod",
)


def _object_json(obj: Any) -> dict:
    if isinstance(obj, (list, tuple)):  # slope_net values
        return {"values": [v.pair() for v in obj]}
    return obj.to_json()


def _cmd_gen(args: argparse.Namespace) -> int:
    obj = GeneratorSpec(args.kind, _generator_params(args, args.kind)).build()
    _emit(_object_json(obj), args.out)
    return EXIT_PASS


def _cmd_validate(args: argparse.Namespace) -> int:
    obj = _build_object(args)
    shape = _shape_of(obj)
    if shape == "configuration":
        violations = validate_configuration(obj)
        if violations:
            raise violations[0]
        _emit({"shape": shape, "verdict": "pass"}, args.out)
        return EXIT_PASS
    if shape == "quasi_product":
        tubes = quasi_product_tubes(obj)
        lo, hi = best_slice_pair(obj, tubes)
        graph = tube_slice_pairs(obj, tubes, lo, hi)
        _emit(
            {"shape": shape, "verdict": "pass", "levels": [lo, hi],
             "slice_pairs": len(graph.edges)},
            args.out,
        )
        return EXIT_PASS
    if shape == "tripod":
        b1, b2, b3 = obj.levels()
        k = obj.tube.scale.k
        residual = tripod_residual(obj.points, b1, b2, b3) * (1 << k)
        ok = residual <= TRIPOD_RESIDUAL_CAP
        _emit(
            {
                "shape": shape,
                "residual_over_delta": residual,
                "cap": TRIPOD_RESIDUAL_CAP,
                "verdict": "pass" if ok else "fail",
            },
            args.out,
        )
        return EXIT_PASS if ok else EXIT_FAIL
    s = args.s if args.s is not None else 1.0
    constant = args.constant
    if shape == "values":
        report = validate_1d(obj, DeltaSetParams(Scale(args.k), s, constant))
    else:
        report = validate(obj, DeltaSetParams(obj.scale, s, constant))
    _emit(report.to_json(), args.out)
    return EXIT_PASS if report.valid else EXIT_FAIL


def _require_configuration(obj: Any) -> Configuration:
    if not isinstance(obj, Configuration):
        raise ParseError(f"this analysis needs a tube configuration, got {_shape_of(obj)}")
    return obj


def _cmd_incidence(args: argparse.Namespace) -> int:
    cfg = _require_configuration(_build_object(args))
    inc = incidence_report(cfg)
    cs = cauchy_schwarz_bound(cfg)
    _emit({"report": inc.to_json(), "cauchy_schwarz": cs.to_json()}, args.out)
    return EXIT_PASS if inc.identity_ok and cs.inequality_ok else EXIT_FAIL


def _cmd_dichotomy(args: argparse.Namespace) -> int:
    cfg = _require_configuration(_build_object(args))
    rep = dichotomy_check(cfg, args.slack)
    _emit(rep.to_json(), args.out)
    return EXIT_PASS if rep.passed else EXIT_FAIL


def _cmd_project(args: argparse.Namespace) -> int:
    obj = _build_object(args)
    points = _point_set_of(obj) if _shape_of(obj) != "values" else None
    if points is None:
        raise ParseError("projection needs a point-bearing source")
    k = args.target_k if args.target_k is not None else points.scale.k
    net = DirectionNet.uniform(Scale(k))
    sw = sweep(points, net, Scale(k), threads=args.threads, audit=args.audit)
    energy = None
    if args.energy_s is not None:
        energy = projection_energy(points, net, args.energy_s, threads=args.threads)
    csv_text = sweep_to_csv(sw, energy)
    summary = sw.to_json(thresholds=(0.25, 0.5, 0.75))
    del summary["counts"], summary["angles"]
    if energy is not None:
        summary["energy_average"] = energy.average
    if args.out is None:
        sys.stdout.write(csv_text)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(csv_text)
        sys.stdout.write(canonical_json(summary))
    return EXIT_PASS


def _cmd_additive(args: argparse.Namespace) -> int:
    obj = _build_object(args)
    if not isinstance(obj, QuasiProduct):
        raise ParseError(f"additive analysis needs a quasi-product, got {_shape_of(obj)}")
    tubes = quasi_product_tubes(obj)
    lo, hi = best_slice_pair(obj, tubes)
    graph = tube_slice_pairs(obj, tubes, lo, hi)
    bsg = bsg_refine(graph)
    plun = plunnecke_corollary_check(graph.a_values, graph.b_values, obj.scale)
    _emit(
        {
            "levels": [lo, hi],
            "slice_pairs": len(graph.edges),
            "tube_count": len(tubes.keys),
            "bsg": bsg.to_json(),
            "plunnecke": plun.to_json(),
        },
        args.out,
    )
    return EXIT_PASS if plun.ok and math.isfinite(bsg.c_exponent) else EXIT_FAIL


def _cmd_dim(args: argparse.Namespace) -> int:
    ks = sorted(set(args.k_list))
    if len(ks) < 2:
        raise ParseError("--k must be given at least twice for an exponent fit")
    samples = []
    for k in ks:
        params = _generator_params(args, args.kind)
        params["k"] = k
        obj = GeneratorSpec(args.kind, params).build()
        if isinstance(obj, list):
            count = len(obj)
        elif isinstance(obj, TripodInstance):
            raise ParseError("collinear_tripod has fixed size; nothing to fit")
        else:
            count = len(_point_set_of(obj).points)
        samples.append((k, count))
    fit = fit_exponent(samples)
    _emit(fit.to_json(), args.out)
    return EXIT_PASS


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        with open(args.manifest, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read manifest {args.manifest!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"manifest is not valid JSON: {exc}") from exc
    manifest = ExperimentManifest.from_json(obj)
    if args.out is not None:
        data = manifest.to_json()
        data["out"] = args.out
        manifest = ExperimentManifest.from_json(data)
    log.info("running manifest %s", manifest.sha256()[:12])
    return run_manifest(manifest, threads=args.threads)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tubelab",
        description="Incidence geometry of dyadic tubes at finite scales.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="build a generator instance and print its JSON")
    p.add_argument("--kind", choices=list(_ALL_KINDS), required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--s", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("validate", help="check separation and ball-count conditions")
    _add_source_flags(p, _ALL_KINDS)
    p.add_argument("--constant", type=float, default=8.0, help="Frostman constant C")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("incidence", help="two-scale incidence statistics of a configuration")
    _add_source_flags(p, ("furstenberg_product",))
    p.add_argument("--out")
    p.set_defaults(func=_cmd_incidence)

    p = sub.add_parser("dichotomy", help="many-tubes-or-spread-tubes check")
    _add_source_flags(p, ("furstenberg_product",))
    p.add_argument("--slack", type=float, default=0.25)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_dichotomy)

    p = sub.add_parser("project", help="directional covering sweep, CSV output")
    _add_source_flags(p, ("grid", "cantor_grid", "furstenberg_product", "quasi_product"))
    p.add_argument("--target-k", type=int, help="counting scale (defaults to the set's scale)")
    p.add_argument("--energy-s", type=float, help="also evaluate the truncated s-energy")
    p.add_argument("--audit", action="store_true", help="recount with jittered cell offsets")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_project)

    p = sub.add_parser("additive", help="restricted sumset growth diagnostics")
    _add_source_flags(p, ("quasi_product",))
    p.add_argument("--out")
    p.set_defaults(func=_cmd_additive)

    p = sub.add_parser("dim", help="box-counting exponent fit across scales")
    p.add_argument("--kind", choices=list(_ALL_KINDS), required=True)
    p.add_argument("--k", dest="k_list", type=int, action="append", required=True,
                   help="repeat for each scale, at least twice")
    p.add_argument("--s", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_dim)

    p = sub.add_parser("run", help="execute an experiment manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", help="override the manifest's output directory")
    p.set_defaults(func=_cmd_run)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    _setup_logging()
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except HypothesisViolation as exc:
        sys.stdout.write(canonical_json(exc.payload()))
        sys.stderr.write(f"hypothesis failed: {exc}\n")
        return EXIT_HYPOTHESIS
    except (ParseError, DomainError, ScaleError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_PARSE
    except TubelabError as exc:
        sys.stderr.write(f"internal error: {type(exc).__name__}: {exc}\n")
        return EXIT_INTERNAL


if __name__ == "__main__":
    raise SystemExit(main())
