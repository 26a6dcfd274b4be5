"""Command-line front end: JSON experiment descriptions in, CSV/JSON results out.

Every subcommand reads its parameters from ``--config FILE`` and/or inline
flags (flags win).  A config may hold a list under ``"experiments"``; each
entry is merged over the top-level keys and run independently, in parallel
with ``--jobs N > 1``.  All numbers travel as decimal strings.

Exit codes:
    0  success
    1  a check failed (gap >= tol, estimates disagree, p-dependence)
    2  configuration error
    3  domain or axiom error
    4  fewer than three usable variance ratios
    5  other numerical failure (no convergence, unstable estimate)

With several experiments the largest code wins.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .catalog import mean_from_json
from .errors import (
    AxiomError,
    ConfigError,
    DomainError,
    InsufficientRatiosError,
    MeanIterError,
)
from .gauss import MeanTypeMapping, iterate, superlinearity_check, trace_to_csv, verdict_to_json, verify_limit
from .means import eval_mean
from .precision import PrecisionConfig, Real, default_bits
from .residuum import (
    p_independence_check,
    residuality_probe,
    residuum_analytic,
    residuum_hessian,
    residuum_limit,
)

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_DOMAIN, EXIT_RATIOS, EXIT_NUMERIC = 0, 1, 2, 3, 4, 5
DEFAULT_TOL = "1e-4"

COMMANDS = ("eval", "residuum", "probe-residuality", "p-independence", "iterate", "verify")

# config keys each command needs
_REQUIRED = {
    "eval": ("mean", "x"),
    "residuum": ("mean", "point"),
    "probe-residuality": ("mean", "point"),
    "p-independence": ("mean", "point", "arities"),
    "iterate": ("mapping", "x0"),
    "verify": ("mapping", "x0"),
}


def _loads(text: str) -> Any:
    # floats stay as their decimal text
    return json.loads(text, parse_float=str)


def _dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True)


@dataclass
class ExperimentConfig:
    command: str
    name: str
    params: dict
    precision_bits: int
    digits: int | None
    tol: Real
    out: Path | None
    tol_text: str = DEFAULT_TOL

    @property
    def cfg(self) -> PrecisionConfig:
        return PrecisionConfig.for_bits(self.precision_bits)


@dataclass
class Outcome:
    name: str
    code: int
    stdout: str
    stderr: str = ""


# -- parsing ---------------------------------------------------------------


def _real(v, bits: int, what: str) -> Real:
    if isinstance(v, bool) or not isinstance(v, (int, str)):
        raise ConfigError(f"{what}: expected a decimal string, got {v!r}")
    try:
        return Real(v, bits)
    except (ValueError, TypeError, MeanIterError) as exc:
        raise ConfigError(f"{what}: malformed number {v!r} ({exc})") from None


def _vector(v, bits: int, what: str) -> list[Real]:
    if isinstance(v, str):
        v = [s for s in v.split(",") if s.strip()]
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{what}: expected a nonempty list of decimal strings")
    return [_real(s.strip() if isinstance(s, str) else s, bits, what) for s in v]


def _int(v, what: str, lo: int = 1) -> int:
    try:
        n = int(v) if not isinstance(v, bool) else None
    except (TypeError, ValueError):
        n = None
    if n is None or str(v).strip() != str(n) or n < lo:
        raise ConfigError(f"{what}: expected an integer >= {lo}, got {v!r}")
    return n


def _ints(v, what: str) -> list[int]:
    if isinstance(v, str):
        v = v.split(",")
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{what}: expected a list of integers")
    return [_int(s.strip() if isinstance(s, str) else s, what, 2) for s in v]


def _mean(doc, what="mean"):
    if isinstance(doc, str):
        try:
            doc = _loads(doc)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{what}: malformed JSON ({exc})") from None
    return mean_from_json(doc)


def _mapping(doc) -> MeanTypeMapping:
    if isinstance(doc, str):
        try:
            doc = _loads(doc)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"mapping: malformed JSON ({exc})") from None
    if isinstance(doc, dict) and "means" in doc:
        doc = doc["means"]
    if not isinstance(doc, list):
        raise ConfigError("mapping must be a list of mean specifications")
    try:
        return MeanTypeMapping(tuple(_mean(m, f"mapping[{i}]") for i, m in enumerate(doc)))
    except ValueError as exc:
        if isinstance(exc, MeanIterError):
            raise
        raise ConfigError(f"mapping: {exc}") from None


def validate(exp: ExperimentConfig) -> dict:
    """Parse every parameter of ``exp``; raises ConfigError on the first problem."""
    p, bits = exp.params, exp.precision_bits
    for key in _REQUIRED[exp.command]:
        if key not in p:
            raise ConfigError(f"{exp.command}: missing parameter {key!r}")
    out: dict = {}
    if "mean" in _REQUIRED[exp.command]:
        out["mean"] = _mean(p["mean"])
    if exp.command == "eval":
        out["x"] = _vector(p["x"], bits, "x")
    if "point" in _REQUIRED[exp.command]:
        out["point"] = _real(p["point"], bits, "point")
        out["p"] = _int(p.get("p", 2), "p", 2)
    if exp.command == "probe-residuality":
        radii = _vector(p["radii"], bits, "radii") if "radii" in p else None
        if radii is not None:
            if len(radii) < 6:
                raise ConfigError("radii: the fit needs at least 6 radii")
            if any(r <= 0 for r in radii) or any(b >= a for a, b in zip(radii, radii[1:])):
                raise ConfigError("radii must be positive and strictly decreasing")
        out["radii"] = radii
    if exp.command == "p-independence":
        out["arities"] = _ints(p["arities"], "arities")
    if exp.command in ("iterate", "verify"):
        out["mapping"] = _mapping(p["mapping"])
        out["x0"] = _vector(p["x0"], bits, "x0")
        out["max_iter"] = _int(p.get("max_iter", 64), "max_iter")
        if len(out["x0"]) != out["mapping"].p:
            raise ConfigError(f"x0 has {len(out['x0'])} entries but the mapping has {out['mapping'].p} means")
    return out


def build_experiments(command: str, args: argparse.Namespace) -> list[ExperimentConfig]:
    base: dict = {}
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        try:
            base = _loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON in {args.config}: {exc}") from None
        if not isinstance(base, dict):
            raise ConfigError("config must be a JSON object")
    for key in ("mean", "x", "point", "p", "arities", "radii", "mapping", "x0", "max_iter"):
        val = getattr(args, key, None)
        if val is not None:
            base[key] = val
    entries = base.pop("experiments", None)
    if entries is None:
        entries = [{}]
    if not isinstance(entries, list) or not entries:
        raise ConfigError("'experiments' must be a nonempty list of objects")

    exps = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise ConfigError(f"experiments[{i}] must be an object")
        params = {**base, **entry}
        bits = args.precision_bits if args.precision_bits is not None else params.get("precision_bits")
        bits = _int(bits, "precision_bits", 64) if bits is not None else default_bits()
        digits = args.digits if args.digits is not None else params.get("digits")
        digits = _int(digits, "digits") if digits is not None else None
        tol_text = args.tol if args.tol is not None else params.get("tol", DEFAULT_TOL)
        tol = _real(tol_text, bits, "tol")
        name = str(params.get("name", command if len(entries) == 1 else f"{command}_{i}"))
        out = Path(args.out) if args.out else (Path(params["out"]) if "out" in params else None)
        exps.append(ExperimentConfig(command, name, params, bits, digits, tol, out, str(tol_text)))
    return exps


# -- commands ----------------------------------------------------------------


def cmd_eval(exp: ExperimentConfig, v: dict) -> tuple[int, str]:
    val = eval_mean(v["mean"], v["x"], exp.cfg)
    return EXIT_OK, val.to_decimal(exp.digits)


def cmd_residuum(exp: ExperimentConfig, v: dict) -> tuple[int, str]:
    spec, x, p, cfg, d = v["mean"], v["point"], v["p"], exp.cfg, exp.digits
    estimates, errors = [], {}
    for method, fn in (
        ("analytic", lambda: [residuum_analytic(spec, x, cfg, p)]),
        ("limit_extrapolation", lambda: [residuum_limit(spec, p, x, cfg)]),
        ("hessian_fd", lambda: list(residuum_hessian(spec, p, x, cfg))),
    ):
        try:
            estimates.extend(fn())
        except (DomainError, AxiomError):
            raise
        except MeanIterError as exc:
            errors[method] = str(exc)
    docs = []
    forms = iter(("mixed", "pure"))
    for e in estimates:
        doc = e.to_json(d)
        if e.method == "hessian_fd":
            doc["form"] = next(forms)
        doc["agrees"] = bool(all(e.agrees_with(o) for o in estimates))
        docs.append(doc)
    consistent = not errors and all(doc["agrees"] for doc in docs)
    result = {"x": x.to_decimal(d), "p": p, "mean": spec.name, "estimates": docs, "consistent": consistent}
    if errors:
        result["errors"] = errors
    if not estimates:
        return EXIT_NUMERIC, _dumps(result)
    return (EXIT_OK if consistent else EXIT_CHECK), _dumps(result)


def cmd_probe(exp: ExperimentConfig, v: dict) -> tuple[int, str]:
    rep = residuality_probe(v["mean"], v["p"], v["point"], v["radii"], exp.cfg)
    doc = {"mean": v["mean"].name, "p": v["p"], "x": v["point"].to_decimal(exp.digits), **rep.to_json(exp.digits)}
    return EXIT_OK, _dumps(doc)


def cmd_p_independence(exp: ExperimentConfig, v: dict) -> tuple[int, str]:
    rep = p_independence_check(v["mean"], v["point"], v["arities"], exp.cfg)
    doc = {"mean": v["mean"].name, **rep.to_json(exp.digits)}
    return (EXIT_OK if rep.consistent else EXIT_CHECK), _dumps(doc)


def _write(exp: ExperimentConfig, suffix: str, text: str) -> str | None:
    if exp.out is None:
        return None
    exp.out.mkdir(parents=True, exist_ok=True)
    path = exp.out / f"{exp.name}_{suffix}"
    path.write_text(text)
    return str(path)


def cmd_iterate(exp: ExperimentConfig, v: dict) -> tuple[int, str]:
    trace = iterate(v["mapping"], v["x0"], exp.cfg, v["max_iter"])
    csv_text = trace_to_csv(trace, exp.digits)
    path = _write(exp, "trace.csv", csv_text)
    if path is None:
        return EXIT_OK, csv_text.rstrip("\n")
    sl = superlinearity_check(trace)
    doc = {
        "trace_csv": path,
        "steps": len(trace.states) - 1,
        "terminated_reason": trace.terminated_reason,
        "K": trace.invariant_estimate.to_decimal(exp.digits),
        "final_diameter": trace.diameters[-1].to_decimal(exp.digits),
        "contraction": sl.status,
    }
    return EXIT_OK, _dumps(doc)


def cmd_verify(exp: ExperimentConfig, v: dict) -> tuple[int, str]:
    cfg = exp.cfg
    trace = iterate(v["mapping"], v["x0"], cfg, v["max_iter"])
    trace_path = _write(exp, "trace.csv", trace_to_csv(trace, exp.digits))
    verdict = verify_limit(v["mapping"], v["x0"], cfg, trace=trace)
    doc: dict = {"terminated_reason": trace.terminated_reason, "n_usable_ratios": len(trace.usable_ratios)}
    if trace_path:
        doc["trace_csv"] = trace_path
    if verdict is None:
        doc["verdict"] = None
        doc["passed"] = True
        return EXIT_OK, _dumps(doc)
    vj = verdict_to_json(verdict, exp.digits)
    verdict_path = _write(exp, "verdict.json", _dumps(vj) + "\n")
    if verdict_path:
        doc["verdict_json"] = verdict_path
    passed = bool(verdict.relative_gap < exp.tol)
    doc["verdict"] = vj
    doc["tol"] = exp.tol_text
    doc["passed"] = passed
    return (EXIT_OK if passed else EXIT_CHECK), _dumps(doc)


_HANDLERS = {
    "eval": cmd_eval,
    "residuum": cmd_residuum,
    "probe-residuality": cmd_probe,
    "p-independence": cmd_p_independence,
    "iterate": cmd_iterate,
    "verify": cmd_verify,
}


def _code_for(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (DomainError, AxiomError)):
        return EXIT_DOMAIN
    if isinstance(exc, InsufficientRatiosError):
        return EXIT_RATIOS
    return EXIT_NUMERIC


def run_experiment(exp: ExperimentConfig) -> Outcome:
    try:
        parsed = validate(exp)
        code, text = _HANDLERS[exp.command](exp, parsed)
        return Outcome(exp.name, code, text)
    except MeanIterError as exc:
        return Outcome(exp.name, _code_for(exc), "", f"{exp.name}: {type(exc).__name__}: {exc}")


def run(command: str, args: argparse.Namespace) -> tuple[int, str, str]:
    """Run ``command``; returns ``(exit code, stdout, stderr)``."""
    try:
        exps = build_experiments(command, args)
        # reject malformed input before any computation
        for exp in exps:
            validate(exp)
    except MeanIterError as exc:
        return _code_for(exc), "", f"error: {exc}\n"

    if args.jobs > 1 and len(exps) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = list(pool.map(run_experiment, exps))
    else:
        outcomes = [run_experiment(e) for e in exps]

    code = max(o.code for o in outcomes)
    err = "".join(o.stderr + "\n" for o in outcomes if o.stderr)
    if len(outcomes) == 1:
        out = outcomes[0].stdout
    elif command == "eval":
        out = "\n".join(f"{o.name}\t{o.stdout}" for o in outcomes)
    else:
        out = _dumps(
            [
                {"name": o.name, "exit": o.code, "result": _loads(o.stdout) if o.stdout.startswith(("{", "[")) else o.stdout}
                for o in outcomes
            ]
        )
    return code, (out + "\n") if out else "", err


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON experiment description")
    common.add_argument("--precision-bits", type=int, metavar="N", help="working precision in bits")
    common.add_argument("--digits", type=int, metavar="N", help="significant digits in output (default: round-trip)")
    common.add_argument("--tol", metavar="X", help=f"relative gap tolerance for verify (default {DEFAULT_TOL})")
    common.add_argument("--out", metavar="DIR", help="directory for CSV/JSON result files")
    common.add_argument("--jobs", type=int, default=1, metavar="N", help="parallel workers for experiment lists")

    parser = argparse.ArgumentParser(prog="meaniter", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, *flags):
        sp = sub.add_parser(name, parents=[common], help=help_text)
        for flag in flags:
            dest = flag.lstrip("-").replace("-", "_")
            sp.add_argument(flag, dest=dest, help=_FLAG_HELP[dest])
        return sp

    add("eval", "evaluate a mean at a vector", "--mean", "--x")
    add("residuum", "residuum by all three methods", "--mean", "--point", "--p")
    add("probe-residuality", "fit the residual defect exponent", "--mean", "--point", "--p", "--radii")
    add("p-independence", "compare residua across arities", "--mean", "--point", "--arities")
    add("iterate", "Gauss-iterate a mean-type mapping", "--mapping", "--x0", "--max-iter")
    add("verify", "check the variance-ratio limit", "--mapping", "--x0", "--max-iter")
    return parser


_FLAG_HELP = {
    "mean": "mean specification as JSON, e.g. '{\"family\":\"gini\",\"alpha\":2,\"beta\":1}'",
    "x": "comma-separated decimal vector",
    "point": "diagonal point x",
    "p": "arity (default 2)",
    "radii": "comma-separated decreasing radii",
    "arities": "comma-separated arities, e.g. 2,3,5",
    "mapping": "JSON list of mean specifications",
    "x0": "comma-separated initial vector",
    "max_iter": "iteration cap (default 64)",
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    code, out, err = run(args.command, args)
    sys.stdout.write(out)
    sys.stderr.write(err)
    return code


if __name__ == "__main__":
    sys.exit(main())
