"""Command line entry point: ``sasakilab --config scenario.toml``.

Exit codes: 0 when every check passes, 1 when a check fails, 2 for usage or
configuration errors.  JSON reports carry ``report_version`` 1 and are
byte-identical for identical (config, seed, samples) unless ``--timing`` adds
the wall time.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from typing import Optional, Sequence

from . import dsl
from .config import TASKS, ConfigError, ScenarioConfig, load_config
from .geometry import GeometryError
from .tasks import RUNNERS, NotApplicable, RunOptions, TaskResult

REPORT_VERSION = 1
EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sasakilab", description="Run a verification scenario and report the checks.")
    p.add_argument("--config", required=True, metavar="PATH", help="scenario file (TOML)")
    p.add_argument("--format", choices=("json", "table"), default="table")
    p.add_argument("--samples", type=_positive_int, metavar="N", help="sample count (default 100)")
    p.add_argument("--seed", type=_u64, metavar="U64", help="sampling seed (default 0)")
    p.add_argument("--tol", type=_positive_float, metavar="REAL", help="override the task's primary tolerance")
    p.add_argument("--task", choices=TASKS, help="task to run; overrides the config")
    p.add_argument("--timing", action="store_true", help="add wall time to the report (breaks byte-identity)")
    return p


def _options(cfg: ScenarioConfig, args) -> RunOptions:
    sampling = cfg.sampling
    samples = args.samples if args.samples is not None else sampling.get("count", 100)
    seed = args.seed if args.seed is not None else sampling.get("seed", 0)
    tol = args.tol if args.tol is not None else sampling.get("tolerance")
    return RunOptions(samples=int(samples), seed=int(seed), tol=tol)


def _clean(obj):
    """Make the report strict JSON: non-finite floats become strings."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else str(obj)
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "item"):  # numpy scalar
        return _clean(obj.item())
    return obj


def _task_entry(res: TaskResult) -> dict:
    return {
        "task": res.task,
        "status": "pass" if res.passed else "fail",
        "checks": [c.to_dict() for c in res.checks],
        "results": res.results,
        "notes": list(res.notes),
    }


def run(cfg: ScenarioConfig, task: str, opt: RunOptions) -> dict:
    """Execute ``task`` and assemble the report dictionary."""
    entries = []
    if task == "all":
        for name, runner in RUNNERS.items():
            try:
                entries.append(_task_entry(runner(cfg, opt)))
            except NotApplicable as exc:
                entries.append({"task": name, "status": "skipped", "reason": str(exc)})
    else:
        try:
            entries.append(_task_entry(RUNNERS[task](cfg, opt)))
        except NotApplicable as exc:
            raise UsageError(f"task {task!r} {exc}") from exc
    ran = [e for e in entries if e["status"] != "skipped"]
    if not ran:
        raise UsageError("no task was applicable to this config")
    status = "pass" if all(e["status"] == "pass" for e in ran) else "fail"
    checks = [dict(c, task=e["task"]) for e in ran for c in e["checks"]]
    report = {
        "report_version": REPORT_VERSION,
        "task": task,
        "inputs": {
            "config": cfg.echo(),
            "samples": opt.samples,
            "seed": opt.seed,
            "tolerance_override": opt.tol,
        },
        "tasks": entries,
        "checks": checks,
        "status": status,
    }
    return _clean(report)


def to_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def to_table(report: dict) -> str:
    rows = [("task", "check", "value", "", "threshold", "result")]
    for c in report["checks"]:
        rows.append((c["task"], c["name"], _fmt(c["value"]), c["relation"], _fmt(c["threshold"]),
                     "pass" if c["passed"] else "FAIL"))
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    for e in report["tasks"]:
        if e["status"] == "skipped":
            lines.append(f"skipped {e['task']}: {e['reason']}")
    for c in report["checks"]:
        if not c["passed"] and c["witness"] is not None:
            lines.append(f"witness {c['task']}/{c['name']}: {json.dumps(c['witness'], sort_keys=True)}")
    for e in report["tasks"]:
        for note in e.get("notes", []):
            lines.append(f"note {e['task']}: {note}")
    lines.append(f"status: {report['status']}")
    if "wall_time_s" in report:
        lines.append(f"wall time: {report['wall_time_s']:.3f} s")
    return "\n".join(lines) + "\n"


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS
    start = time.perf_counter()
    try:
        cfg = load_config(args.config)
        task = args.task or cfg.task
        if task is None:
            raise UsageError("no task given: set `task` in the config or pass --task")
        report = run(cfg, task, _options(cfg, args))
    except (ConfigError, UsageError) as exc:
        print(f"sasakilab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (dsl.DSLError, GeometryError, ValueError) as exc:
        # bad parameter combinations surface while building the geometry
        print(f"sasakilab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.timing:
        report["wall_time_s"] = time.perf_counter() - start
    sys.stdout.write(to_json(report) if args.format == "json" else to_table(report))
    return EXIT_PASS if report["status"] == "pass" else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
