"""Command-line harness: single solves, epsilon sweeps and run audits.

Exit codes: 0 for a converged run (or clean sweep / audit), 1 for
configuration and parse errors, 2 for accuracy stalls (and failed sweep rows
or audit findings), 3 when the iteration cap is hit.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .core import AlgoConstants, ConfigurationError, OuterFunction, H_KINDS, nu_bound, sigma_max_bound, tau_bound
from .oracles import AccuracyFloor, make_oracle
from .problems import PROBLEMS, make_problem
from .solver import CSV_HEADER, EXIT1, EXIT2, MAX_ITERATIONS, IterationRecord, run
from .verify import audit_run

__all__ = ["ExperimentConfig", "SweepReport", "main", "solve_command", "sweep_command", "audit_command",
           "build_parser", "load_config"]

ORACLES = ("exact", "noise", "adversarial", "series", "partial")
FORMATS = ("csv", "json")

log = logging.getLogger("arlda")


class CliError(Exception):
    """Configuration or parse error (exit code 1)."""


@dataclass
class ExperimentConfig:
    problem: str = "lasso1d"
    n: Optional[int] = None
    problem_seed: int = 0
    h: Optional[str] = None
    h_weight: Optional[float] = None
    oracle: str = "exact"
    seed: int = 0
    floor_f: float = 0.0
    floor_g: float = 0.0
    floor_c: float = 0.0
    floor_J: float = 0.0
    epsilon: list = field(default_factory=lambda: [1e-3])
    monotonic: bool = False
    max_iters: Optional[int] = None
    sigma0: Optional[float] = None
    out: Optional[str] = None
    format: str = "csv"
    constants: dict = field(default_factory=dict)

    def validate(self):
        if self.problem not in PROBLEMS:
            raise ConfigurationError(f"unknown problem {self.problem!r}; expected one of {PROBLEMS}")
        if self.h is not None and self.h not in H_KINDS:
            raise ConfigurationError(f"unknown h kind {self.h!r}; expected one of {H_KINDS}")
        if self.oracle not in ORACLES:
            raise ConfigurationError(f"unknown oracle {self.oracle!r}; expected one of {ORACLES}")
        if self.format not in FORMATS:
            raise ConfigurationError(f"unknown format {self.format!r}")
        if not self.epsilon:
            raise ConfigurationError("at least one epsilon is required")
        for e in self.epsilon:
            if not 0 < e < 1:
                raise ConfigurationError(f"accuracy level epsilon={e} must lie in (0, 1)")
        known = {f.name for f in fields(AlgoConstants)}
        unknown = set(self.constants) - known
        if unknown:
            raise ConfigurationError(f"unknown constants {sorted(unknown)}")
        return self

    def build_problem(self):
        spec = make_problem(self.problem, n=self.n, seed=self.problem_seed)
        if self.h is not None or self.h_weight is not None:
            kind = self.h if self.h is not None else spec.h.kind
            spec = spec.with_h(OuterFunction(kind, 1.0 if self.h_weight is None else self.h_weight))
        return spec

    def floor(self):
        return AccuracyFloor(self.floor_f, self.floor_g, self.floor_c, self.floor_J)

    def build_constants(self, epsilon):
        kw = dict(self.constants)
        kw["epsilon"] = epsilon
        kw["monotonic"] = self.monotonic
        if self.max_iters is not None:
            kw["max_iterations"] = self.max_iters
        if self.sigma0 is not None:
            kw["sigma0"] = self.sigma0
        return AlgoConstants(**kw).validate()

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class SweepReport:
    rows: list
    slope: Optional[float]
    all_pass: bool

    def as_dict(self):
        return {"rows": self.rows, "slope": self.slope, "all_pass": self.all_pass}


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def _dumps(obj):
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def records_csv(records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow([_fmt(v) for v in r.csv_row()])
    return buf.getvalue()


def _write(path, text):
    if path is None:
        sys.stdout.write(text)
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)


def _sidecar(path, suffix):
    p = Path(path)
    return str(p.with_name(p.stem + suffix))


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------


def load_config(args):
    """Merge the JSON config file (if any) with command-line flags; flags win."""
    data = {}
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise CliError("config file must hold a JSON object")
    data = {k.replace("-", "_"): v for k, v in data.items()}
    names = {f.name for f in fields(ExperimentConfig)}
    unknown = set(data) - names
    if unknown:
        raise CliError(f"unknown config keys {sorted(unknown)}")
    for name in names:
        val = getattr(args, name, None)
        if val is not None and val is not False:
            data[name] = val
    eps = data.get("epsilon")
    if eps is not None and not isinstance(eps, list):
        data["epsilon"] = [eps]
    try:
        cfg = ExperimentConfig(**data)
        cfg.epsilon = [float(e) for e in cfg.epsilon]
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid config: {exc}") from exc
    return cfg.validate()


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _run_one(cfg, epsilon):
    spec = cfg.build_problem()
    consts = cfg.build_constants(epsilon)
    try:
        oracle = make_oracle(cfg.oracle, spec, seed=cfg.seed, floor=cfg.floor())
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc
    report, records = run(spec, consts, oracle)
    return spec, consts, oracle, report, records


def _status_code(status):
    if status in (EXIT1, EXIT2):
        return 0
    if status == MAX_ITERATIONS:
        return 3
    return 2


def solve_command(cfg):
    """Run one solve; write the per-iteration CSV and a summary JSON."""
    if len(cfg.epsilon) != 1:
        raise ConfigurationError("solve takes exactly one --epsilon")
    spec, consts, oracle, report, records = _run_one(cfg, cfg.epsilon[0])
    summary = {
        "config": cfg.as_dict(),
        "constants": consts.as_dict(),
        "oracle": oracle.describe(),
        "report": report.as_dict(),
        "trace": [r.trace() for r in records],
    }
    if cfg.format == "json":
        _write(cfg.out, _dumps(summary))
    else:
        _write(cfg.out, records_csv(records))
        if cfg.out is not None:
            _write(_sidecar(cfg.out, ".summary.json"), _dumps(summary))
    msg = f"{spec.name}: {report.status}"
    if report.stall_case:
        msg += f" ({report.stall_case}, noisy bound {report.noisy_bound:.3e})" if report.noisy_bound is not None \
            else f" ({report.stall_case})"
    print(f"{msg}, {report.iterations} iterations", file=sys.stderr)
    return _status_code(report.status)


def sweep_command(cfg):
    """One fresh solve per epsilon plus a log-log slope of successful iterations."""
    if len(cfg.epsilon) < 3:
        raise ConfigurationError("sweep needs at least three --epsilon values")
    rows = []
    for eps in cfg.epsilon:
        spec, consts, oracle, report, records = _run_one(cfg, eps)
        led = report.ledger
        row = {
            "epsilon": eps, "status": report.status, "stall_case": report.stall_case,
            "iterations": report.iterations, "successful": led.successful, "unsuccessful": led.unsuccessful,
            "nf": led.counts["f"], "ng": led.counts["g"], "nc": led.counts["c"], "nJ": led.counts["J"],
            "shrinks": led.shrink_events, "tau": None, "tau_pass": None, "nu": None, "nu_pass": None,
        }
        smax = sigma_max_bound(spec, consts)
        if smax is not None and spec.psi_low is not None:
            tau = tau_bound(smax, max(0.0, spec.psi(spec.x0) - spec.psi_low), consts, eps)
            row["tau"], row["tau_pass"] = tau, report.iterations <= tau
        if consts.monotonic and smax is not None:
            nu = nu_bound(consts.eps_maxima, spec.L_h, smax, consts.sigma_min, eps, consts.gamma_eps)
            row["nu"], row["nu_pass"] = nu, led.shrink_events <= math.ceil(nu)
        rows.append(row)
        log.info("epsilon=%g status=%s iterations=%d", eps, report.status, report.iterations)
    fit = [r for r in rows if r["status"] in (EXIT1, EXIT2) and r["successful"] > 0]
    slope = None
    if len(fit) >= 2:
        xs = np.log([1.0 / r["epsilon"] for r in fit])
        ys = np.log([r["successful"] for r in fit])
        slope = float(np.polyfit(xs, ys, 1)[0])
    ok = all(r["status"] in (EXIT1, EXIT2) and r["tau_pass"] is not False and r["nu_pass"] is not False
             for r in rows)
    rep = SweepReport(rows, slope, ok)
    payload = {"config": cfg.as_dict(), "constants": cfg.build_constants(cfg.epsilon[0]).as_dict(), **rep.as_dict()}
    if cfg.format == "json":
        _write(cfg.out, _dumps(payload))
    else:
        cols = list(rows[0])
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow(["" if r[c] is None else (_fmt(r[c]) if not isinstance(r[c], str) else r[c]) for c in cols])
        _write(cfg.out, buf.getvalue())
        if cfg.out is not None:
            _write(_sidecar(cfg.out, ".summary.json"), _dumps(payload))
    slope_txt = "n/a" if slope is None else f"{slope:.3f}"
    print(f"sweep: {len(rows)} rows, slope {slope_txt}, all pass: {ok}", file=sys.stderr)
    return 0 if ok else 2


def _parse_csv(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise CliError(f"{path}: header does not match {','.join(CSV_HEADER)}")
    out = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(CSV_HEADER):
            raise CliError(f"{path}:{i}: expected {len(CSV_HEADER)} fields, got {len(row)}")
        try:
            out.append([float(v) for v in row])
        except ValueError as exc:
            raise CliError(f"{path}:{i}: {exc}") from exc
    return out


def _record_from_trace(d):
    kw = {}
    for f in fields(IterationRecord):
        v = d.get(f.name)
        if f.name in ("x", "s"):
            v = None if v is None else np.asarray(v, dtype=float)
        elif f.name in ("eps_top", "outcome"):
            pass
        elif f.name in ("k", "shrinks", "nf", "ng", "nc", "nJ"):
            v = int(v)
        elif f.name == "accepted":
            v = bool(v)
        else:
            v = math.nan if v is None else float(v)
        kw[f.name] = v
    kw["eps_top"] = kw["eps_top"] or {}
    return IterationRecord(**kw)


def audit_command(run_file, summary_file=None, out=None):
    """Replay the audit on a finished run (its CSV plus summary JSON, or the JSON alone)."""
    run_path = Path(run_file)
    csv_rows = None
    if run_path.suffix == ".csv":
        csv_rows = _parse_csv(run_path)
        summary_file = summary_file or _sidecar(run_path, ".summary.json")
    else:
        summary_file = summary_file or run_file
    try:
        summary = json.loads(Path(summary_file).read_text())
        cfg_data = summary["config"]
        const_data = summary["constants"]
        trace = summary["trace"]
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CliError(f"cannot read run summary {summary_file}: {exc}") from exc
    try:
        records = [_record_from_trace(d) for d in trace]
    except (TypeError, ValueError, KeyError) as exc:
        raise CliError(f"malformed trace in {summary_file}: {exc}") from exc
    if csv_rows is not None:
        if len(csv_rows) != len(records):
            raise CliError(f"{run_file} has {len(csv_rows)} rows but the summary has {len(records)}")
        for rec, row in zip(records, csv_rows):
            expect = [float(v) for v in rec.csv_row()]
            if not np.array_equal(np.array(expect), np.array(row), equal_nan=True):
                raise CliError(f"{run_file}: row k={rec.k} disagrees with the summary")
    cfg = ExperimentConfig(**cfg_data).validate()
    spec = cfg.build_problem()
    consts = replace(AlgoConstants(), **const_data).validate()
    findings = audit_run(spec, consts, records)
    failed = [f for f in findings if not f.passed]
    _write(out, _dumps({"run": str(run_file), "checks": len(findings), "failures": len(failed),
                        "findings": [f.as_dict() for f in findings]}))
    print(f"audit: {len(findings)} checks, {len(failed)} failures", file=sys.stderr)
    return 0 if not failed else 2


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _add_experiment_flags(p):
    p.add_argument("--config", help="JSON file mirroring these flags; flags override it")
    p.add_argument("--problem", choices=PROBLEMS)
    p.add_argument("--n", type=int, help="dimension for problems that accept one")
    p.add_argument("--problem-seed", type=int, dest="problem_seed")
    p.add_argument("--h", choices=H_KINDS, help="replace the problem's outer function")
    p.add_argument("--h-weight", type=float, dest="h_weight")
    p.add_argument("--oracle", choices=ORACLES)
    p.add_argument("--seed", type=int)
    for q in "fgcJ":
        p.add_argument(f"--floor-{q}", type=float, dest=f"floor_{q}", help=f"accuracy floor for {q}")
    p.add_argument("--epsilon", type=float, action="append", help="target accuracy (repeat for sweeps)")
    p.add_argument("--monotonic", action="store_true", default=None, help="never increase the accuracies")
    p.add_argument("--max-iters", type=int, dest="max_iters")
    p.add_argument("--sigma0", type=float)
    p.add_argument("--out", help="output path (stdout when omitted)")
    p.add_argument("--format", choices=FORMATS)


def build_parser():
    parser = _Parser(prog="arlda", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    _add_experiment_flags(sub.add_parser("solve", help="run one solve"))
    _add_experiment_flags(sub.add_parser("sweep", help="solve for several epsilon values"))
    p = sub.add_parser("audit", help="re-check the bounds of a finished run")
    p.add_argument("run", help="run CSV (with its .summary.json alongside) or summary JSON")
    p.add_argument("--summary", help="summary JSON, if not next to the CSV")
    p.add_argument("--out", help="findings JSON path (stdout when omitted)")
    return parser


def _setup_logging():
    level = os.environ.get("ARLDA_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    _setup_logging()
    try:
        args = build_parser().parse_args(argv)
        if args.command == "audit":
            return audit_command(args.run, args.summary, args.out)
        cfg = load_config(args)
        if args.command == "solve":
            return solve_command(cfg)
        return sweep_command(cfg)
    except (CliError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
