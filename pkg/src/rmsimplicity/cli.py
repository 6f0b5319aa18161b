"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .anticoncentration import ConcentrationEstimate, small_ball_matrix
from .arithmetic import LcdQuery, essential_lcd
from .checks import SUITE_TOLERANCE, deterministic_suite
from .ensembles import FAMILIES, EnsembleSpec, read_matrix, sample, write_matrix, write_matrix_csv
from .experiments import ExperimentConfig, ExperimentReport, parse_law, run
from .rng import fresh_seed, stream
from .spectral import SpectralSummary, summarize

__all__ = ["main", "dispatch", "UsageError"]

CONFIG_SCHEMA_HELP = """experiment config (JSON):
  experiment_id  one of gap_simplicity, gap_rect, two_point_real, two_point_complex,
                 real_eig_count, box_lcd, lo_1d, lo_2d, lo_4d, overlap_beta,
                 delocalization, tensorization, linear_relation_repulsion
  n_list         list of sizes
  epsilon_grid   strictly increasing positive radii
  shifts         list of [l1, l2] pairs; complex values as [re, im]
  trials         trial count (>= 1000 for probability rows)
  laws           list of "rademacher", "gaussian", "uniform_pm_k:K" or law objects
  master_seed    integer; a random seed is drawn and printed when absent
  workers        process count
  options        experiment-specific settings (see README)
  schema         1"""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with status 2
        raise UsageError(f"{self.prog}: {message}")


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rml", description="Random-matrix simplicity experiments.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("sample", help="draw one matrix and write it")
    s.add_argument("--family", required=True, choices=FAMILIES)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--law", default="rademacher", help="law name or JSON object")
    s.add_argument("--law-override", help="alias of --law")
    s.add_argument("--n-rows", type=int)
    s.add_argument("--D-size", type=int, dest="D_size")
    s.add_argument("--lam1", type=float, default=0.0)
    s.add_argument("--lam2", type=float, default=0.0)
    s.add_argument("--lam-hat", type=float, default=0.0)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.add_argument("--format", choices=("bin", "csv"), default="bin")

    s = sub.add_parser("spectrum", help="spectral summary of a stored matrix")
    s.add_argument("--matrix", required=True)
    s.add_argument("--method", choices=("auto", "jacobi", "lapack"), default="auto")
    s.add_argument("--csv", action="store_true", help="print a CSV header and row instead of JSON")

    s = sub.add_parser("lcd", help="essential LCD of a vector (CSV, one row per component)")
    s.add_argument("--vector", required=True)
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--gamma", type=float, required=True)
    s.add_argument("--mode", choices=("infimum", "certify"), default="infimum")
    s.add_argument("--K", type=float, default=100.0)
    s.add_argument("--h", type=float)
    s.add_argument("--ambient-count", type=int)
    s.add_argument("--directions", type=int, default=64)

    s = sub.add_parser("smallball", help="P(||Mv|| <= t sqrt(n)) for a matrix family")
    s.add_argument("--config", help="JSON with family, n, law, vector, t, trials, exact (flags override)")
    s.add_argument("--family", choices=FAMILIES)
    s.add_argument("--n", type=int)
    s.add_argument("--law")
    s.add_argument("--law-override")
    s.add_argument("--D-size", type=int, dest="D_size")
    s.add_argument("--vector", help="CSV file with one row")
    s.add_argument("--t", type=float, nargs="+")
    s.add_argument("--trials", type=int)
    s.add_argument("--trials-override", type=int)
    s.add_argument("--exact", action="store_true")
    s.add_argument("--seed", type=int)
    s.add_argument("--out")

    e = sub.add_parser("experiment", help="configured experiments")
    esub = e.add_subparsers(dest="action", parser_class=_Parser)
    r = esub.add_parser("run", help="run an experiment config")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--workers", type=int)
    r.add_argument("--trials-override", type=int)
    r.add_argument("--law-override")
    r.add_argument("--emit-gnuplot", action="store_true")

    s = sub.add_parser("selftest", help="deterministic property suites")
    s.add_argument("--instances", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    return p


def _law_arg(text: str):
    text = text.strip()
    return json.loads(text) if text.startswith("{") else text


class _InputCheck:
    """Context manager turning input-validation errors into usage errors."""

    def __enter__(self):
        return self

    def __exit__(self, typ, exc, tb):
        if typ is not None and issubclass(typ, (ValueError, TypeError, KeyError, OSError)):
            raise UsageError(f"invalid input: {exc}") from exc
        return False


def _seed(arg: int | None) -> int:
    if arg is not None:
        if arg < 0:
            raise UsageError("--seed must be non-negative")
        return arg
    seed = fresh_seed()
    print(f"master seed: {seed}", file=sys.stderr)
    return seed


def _read_rows(path: str) -> np.ndarray:
    with open(path, newline="") as fh:
        data = [[float(x) for x in row if x.strip()] for row in csv.reader(fh) if row]
    if not data:
        raise UsageError(f"{path} holds no vector")
    return np.array(data)


def _cmd_sample(a) -> int:
    with _InputCheck():
        law = parse_law(_law_arg(a.law_override or a.law))
        spec = EnsembleSpec(a.family, a.n, law, n_rows=a.n_rows, D_size=a.D_size, lam1=a.lam1, lam2=a.lam2,
                            lam_hat=a.lam_hat)
    seed = _seed(a.seed)
    m = sample(spec, stream(seed, "cli/sample"), (seed, 0))
    if a.format == "bin":
        write_matrix(a.out, m.data)
    else:
        write_matrix_csv(a.out, m.data)
    print(json.dumps({"family": a.family, "shape": list(m.data.shape), "seed": seed, "out": a.out}))
    return 0


def _cmd_spectrum(a) -> int:
    with _InputCheck():
        m = read_matrix(a.matrix)
    summary, k = summarize(m, a.method)
    if a.csv:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=SpectralSummary.CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerow(summary.csv_row(m.shape, k))
        sys.stdout.write(buf.getvalue())
    else:
        d = summary.to_dict()
        d["gap_index"] = k
        print(json.dumps(d))
    return 0


def _cmd_lcd(a) -> int:
    with _InputCheck():
        v = _read_rows(a.vector)
        if v.shape[0] == 1:
            v = v[0]
        mode = "find_infimum" if a.mode == "infimum" else "certify_lower_bound"
        q = LcdQuery(v, a.alpha, a.gamma, a.K, scan_step=a.h, mode=mode, ambient_count=a.ambient_count,
                     directions=a.directions)
    print(json.dumps(essential_lcd(q).to_json()))
    return 0


def _cmd_smallball(a) -> int:
    conf = {}
    if a.config:
        with _InputCheck():
            conf = json.loads(Path(a.config).read_text())
    get = lambda k, default=None: getattr(a, k) if getattr(a, k, None) is not None else conf.get(k, default)
    family, n = get("family"), get("n")
    if family is None or n is None:
        raise UsageError("smallball needs --family and --n (or a config providing them)")
    with _InputCheck():
        raw = a.law_override or get("law", "rademacher")
        law = parse_law(_law_arg(raw) if isinstance(raw, str) else raw)
        spec = EnsembleSpec(family, int(n), law, D_size=get("D_size"))
        if a.vector:
            v = _read_rows(a.vector)[0]
        elif "vector" in conf:
            v = np.asarray(conf["vector"], dtype=float)
        else:
            raise UsageError("smallball needs --vector")
    ts = get("t", [1.0])
    ts = ts if isinstance(ts, list) else [ts]
    exact = bool(a.exact or conf.get("exact", False))
    trials = a.trials_override or get("trials")
    seed = None if exact else _seed(get("seed"))
    ests = small_ball_matrix(spec, v, ts, trials=trials, exact=exact,
                             rng=None if exact else stream(seed, "cli/smallball"))
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=ConcentrationEstimate.CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for e in ests:
        w.writerow(e.csv_row())
    if a.out:
        Path(a.out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def _cmd_experiment(a) -> int:
    if a.action != "run":
        raise UsageError("usage: rml experiment run --config CFG --out DIR")
    path = Path(a.config)
    if not path.exists():
        raise UsageError(f"config {a.config} not found\n{CONFIG_SCHEMA_HELP}")
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {a.config} is not valid JSON: {exc}\n{CONFIG_SCHEMA_HELP}")
    if a.seed is not None:
        obj["master_seed"] = a.seed
    if obj.get("master_seed") is None:
        obj["master_seed"] = _seed(None)
    workers = a.workers if a.workers is not None else os.environ.get("RML_WORKERS")
    if workers is not None:
        obj["workers"] = int(workers)
    if a.trials_override is not None:
        obj["trials"] = a.trials_override
    if a.law_override is not None:
        obj["laws"] = [_law_arg(a.law_override)]
    try:
        cfg = ExperimentConfig.from_json(obj)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid config: {exc}\n{CONFIG_SCHEMA_HELP}")
    report = run(cfg)
    out = report.write(a.out)
    if a.emit_gnuplot:
        (out / "plot.gp").write_text(gnuplot_script(report))
    print(json.dumps({"out": str(out), "seed": report.seed, "config_hash": report.config_hash,
                      "runtime_s": round(report.runtime_s, 3)}))
    return 0


def gnuplot_script(report: ExperimentReport) -> str:
    """Self-contained gnuplot script with one inline data block per probability series."""
    groups: dict[str, list] = {}
    for r in report.rows:
        if r.p_hat is not None and r.epsilon is not None and r.p_hat > 0:
            groups.setdefault(f"{r.law} n={r.n} {r.series}", []).append(r)
    lines = ["# generated by rml experiment run --emit-gnuplot", "set logscale xy", "set xlabel 'epsilon'",
             "set ylabel 'p_hat'", "set key outside", f"set title '{report.experiment_id}'"]
    plots = []
    for i, (name, rows) in enumerate(groups.items()):
        lines.append(f"$s{i} << EOD")
        lines += [f"{r.epsilon!r} {r.p_hat!r} {r.ci_low!r} {r.ci_high!r}" for r in rows]
        lines.append("EOD")
        plots.append(f"$s{i} using 1:2:3:4 with yerrorlines title '{name}'")
    if plots:
        lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


def _cmd_selftest(a) -> int:
    res = deterministic_suite(a.instances, seed=a.seed)
    ok = True
    for name, v in res.items():
        good = v <= SUITE_TOLERANCE
        ok &= good
        print(f"{'PASS' if good else 'FAIL'} {name}: worst violation {v:.3e}")
    return 0 if ok else 2


_COMMANDS = {
    "sample": _cmd_sample,
    "spectrum": _cmd_spectrum,
    "lcd": _cmd_lcd,
    "smallball": _cmd_smallball,
    "experiment": _cmd_experiment,
    "selftest": _cmd_selftest,
}


def dispatch(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage().strip())
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001 - runtime errors map to exit code 2
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
