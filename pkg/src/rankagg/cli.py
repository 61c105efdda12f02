"""Command line entry point: ``rankagg generate | aggregate | evaluate | sweep``.

Exit codes: 0 success, 1 usage error, 2 data validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__, io
from .baselines import aggregate as aggregate_baseline
from .em import EmConfig, fit
from .errors import EvaluationError, NumericalError, SamplingStallError, ValidationError
from .evaluation import (
    ALL_METHODS,
    DEFAULT_GRIDS,
    RAW_COLUMNS,
    SUMMARY_COLUMNS,
    SweepSpec,
    ability_estimation_error,
    positionwise_accuracy,
    run_sweep,
    summarize,
)
from .synth import SynthConfig, gen_dataset

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
METHOD_CHOICES = ("lac", "borda", "bt", "condorcet")

log = logging.getLogger("rankagg")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _sidecar(out: Path, suffix: str) -> Path:
    return out.with_name(out.stem + suffix)


def _em_config(args) -> EmConfig:
    return EmConfig(
        max_iterations=args.max_iterations,
        ll_tolerance=args.ll_tol,
        posterior_tolerance=args.post_tol,
        eps=args.eps,
        rng_seed=args.seed,
    )


def cmd_generate(args) -> int:
    config = SynthConfig(I=args.I, J=args.J, R=args.R, e=args.e, eta=args.eta, seed=args.seed)
    out = Path(args.out)
    manifest = io.RunManifest("generate", asdict(config), args.seed)
    with manifest.timed("generate"):
        synth = gen_dataset(config)
    ability_out = Path(args.ability_out) if args.ability_out else _sidecar(out, ".ability.txt")
    with manifest.timed("write"):
        io.write_dataset(out, synth.dataset)
        io.write_matrices(ability_out, synth.ability)
    manifest.outputs = {"dataset": str(out), "ability": str(ability_out)}
    manifest.write(_sidecar(out, ".manifest.json"))
    ds = synth.dataset
    print(f"wrote {out}: {len(ds.problems)} problems, {len(ds.annotators)} annotators, "
          f"{len(ds.annotations)} annotations, R={ds.R}")
    return EXIT_OK


def cmd_aggregate(args) -> int:
    out = Path(args.out)
    em = _em_config(args)
    manifest = io.RunManifest("aggregate", {"input": args.input, "method": args.method, "em": asdict(em)}, args.seed)
    with manifest.timed("read"):
        dataset = io.read_dataset(args.input)
    outputs = {"predictions": str(out)}
    with manifest.timed("fit"):
        if args.method == "lac":
            result = fit(dataset, em)
            predictions = result.inferred_ranks
        else:
            predictions = aggregate_baseline(dataset, args.method, seed=args.seed)
    with manifest.timed("write"):
        io.write_predictions(out, predictions)
        if args.method == "lac":
            st = result.state
            sidecars = {
                "theta": _sidecar(out, ".theta.txt"),
                "ability": _sidecar(out, ".ability.txt"),
                "difficulty": _sidecar(out, ".difficulty.txt"),
                "log_likelihood": _sidecar(out, ".ll.txt"),
            }
            io.write_vector(sidecars["theta"], st.theta, f"K={st.theta.size} id=theta")
            io.write_matrices(sidecars["ability"], dict(zip(st.annotator_ids, st.ability)))
            io.write_matrices(sidecars["difficulty"], dict(zip(st.problem_ids, st.difficulty)))
            io.write_vector(sidecars["log_likelihood"], result.log_likelihood_trace,
                            f"iterations={result.iterations_used} converged={result.converged}")
            outputs.update({k: str(v) for k, v in sidecars.items()})
            manifest.config["iterations_used"] = result.iterations_used
            manifest.config["converged"] = result.converged
            for it, ll in enumerate(result.log_likelihood_trace, start=1):
                log.info("iteration %d: log-likelihood %.10f", it, ll)
    manifest.outputs = outputs
    manifest.write(_sidecar(out, ".manifest.json"))
    msg = f"wrote {len(predictions)} predictions to {out}"
    if args.method == "lac":
        msg += f" ({result.iterations_used} iterations, converged={result.converged})"
    print(msg)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    predictions = io.read_ranks(args.predictions, ("prediction",))
    if not predictions:
        raise EvaluationError(f"{args.predictions}: no predictions found")
    truth = io.read_ranks(args.truth, ("truth",)) or io.read_ranks(args.truth, ("prediction",))
    if not truth:
        raise EvaluationError(f"{args.truth}: no truth records found")
    metrics = {"accuracy": positionwise_accuracy(predictions, truth), "problems": len(truth)}
    if args.ability_truth:
        if not args.ability_est:
            raise UsageError("--ability-truth requires --ability-est")
        metrics["ability_error"] = ability_estimation_error(
            io.read_matrices(args.ability_truth), io.read_matrices(args.ability_est)
        )
    for k, v in metrics.items():
        print(f"{k}: {v:.6f}" if isinstance(v, float) else f"{k}: {v}")
    if args.out:
        Path(args.out).write_text(json.dumps(metrics, indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


def load_sweep_spec(path) -> SweepSpec:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    param = raw["param"]
    values = tuple(raw.get("values") or DEFAULT_GRIDS[param])
    base = SynthConfig(**raw.get("base", {}))
    em = EmConfig(**raw.get("em", {}))
    methods = tuple(raw.get("methods", ALL_METHODS))
    return SweepSpec(param=param, values=values, base=base, trials=int(raw.get("trials", 5)), methods=methods, em=em)


def cmd_sweep(args) -> int:
    try:
        spec = load_sweep_spec(args.spec)
    except (KeyError, TypeError, ValueError, OSError) as exc:
        raise UsageError(f"bad sweep spec {args.spec}: {exc}") from exc
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = io.RunManifest("sweep", asdict(spec), spec.base.seed)
    with manifest.timed("sweep"):
        rows = run_sweep(spec, workers=args.workers)
    summary = summarize(rows)
    io.write_csv(out_dir / "raw.csv", rows, RAW_COLUMNS)
    io.write_csv(out_dir / "summary.csv", summary, SUMMARY_COLUMNS)
    manifest.outputs = {"raw": str(out_dir / "raw.csv"), "summary": str(out_dir / "summary.csv")}
    manifest.write(out_dir / "manifest.json")
    for row in summary:
        mean = "nan" if row["mean"] is None else f"{100 * row['mean']:.2f}"
        std = "nan" if row["std"] is None else f"{100 * row['std']:.2f}"
        print(f"{row['method']:<10} {row['param']}={row['value']:<6} {mean} ± {std}  (n={row['n']})")
    return EXIT_OK


def _add_em_flags(p: argparse.ArgumentParser) -> None:
    d = EmConfig()
    p.add_argument("--max-iterations", type=int, default=d.max_iterations)
    p.add_argument("--ll-tol", type=float, default=d.ll_tolerance, help="relative log-likelihood change")
    p.add_argument("--post-tol", type=float, default=d.posterior_tolerance, help="max responsibility change")
    p.add_argument("--eps", type=float, default=d.eps, help="probability floor")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rankagg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"rankagg {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = SynthConfig()
    g = sub.add_parser("generate", help="write a synthetic dataset with ground truth")
    g.add_argument("--I", type=int, default=d.I, help="number of problems")
    g.add_argument("--J", type=int, default=d.J, help="number of annotators")
    g.add_argument("--R", type=int, default=d.R, help="items per problem")
    g.add_argument("--e", type=float, default=d.e, help="annotator quality in [0, 1]")
    g.add_argument("--eta", type=float, default=d.eta, help="annotation ratio in (0, 1]")
    g.add_argument("--seed", type=int, default=d.seed)
    g.add_argument("--out", required=True)
    g.add_argument("--ability-out", help="true ability matrices (default: <out stem>.ability.txt)")
    g.set_defaults(func=cmd_generate)

    a = sub.add_parser("aggregate", help="infer one rank per problem")
    a.add_argument("--input", required=True)
    a.add_argument("--method", choices=METHOD_CHOICES, default="lac")
    a.add_argument("--out", required=True)
    a.add_argument("--seed", type=int, default=0)
    _add_em_flags(a)
    a.set_defaults(func=cmd_aggregate)

    e = sub.add_parser("evaluate", help="position-wise accuracy and ability-matrix error")
    e.add_argument("--predictions", required=True)
    e.add_argument("--truth", required=True, help="dataset file with truth records, or a predictions-format file")
    e.add_argument("--ability-truth")
    e.add_argument("--ability-est")
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sweep", help="run a synthetic parameter sweep")
    s.add_argument("--spec", required=True, help="JSON sweep spec")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--workers", type=int, help="parallel cells (default: $RANKAGG_THREADS or CPU count)")
    s.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"rankagg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"rankagg: invalid data ({len(exc.violations)} problem(s)):", file=sys.stderr)
        for v in exc.violations:
            print(f"  {v}", file=sys.stderr)
        return EXIT_DATA
    except EvaluationError as exc:
        print(f"rankagg: evaluation error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, SamplingStallError, FloatingPointError) as exc:
        print(f"rankagg: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"rankagg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"rankagg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
