"""Run one or more experiment configs and print their summaries.

Usage: python scripts/run_experiment.py configs/gap_simplicity.json [more.json ...] [--out results] [--workers 4]
"""
from __future__ import annotations

import argparse
import json
from pathlib import Path

from rmsimplicity.experiments import ExperimentConfig, run


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("configs", nargs="+")
    p.add_argument("--out", default="results")
    p.add_argument("--workers", type=int)
    p.add_argument("--trials", type=int, help="override the trial count")
    args = p.parse_args()
    for path in args.configs:
        obj = json.loads(Path(path).read_text())
        if args.workers is not None:
            obj["workers"] = args.workers
        if args.trials is not None:
            obj["trials"] = args.trials
        report = run(ExperimentConfig.from_json(obj))
        out = report.write(Path(args.out) / Path(path).stem)
        print(f"{Path(path).stem}: {report.runtime_s:.1f}s -> {out}")
        print(json.dumps(report.report_json()["summary"], indent=2))


if __name__ == "__main__":
    main()
