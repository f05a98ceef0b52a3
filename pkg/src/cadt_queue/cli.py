"""Command-line front end: ``cadt-queue --config run.yaml``.

Exit codes: 0 success, 1 invalid config or scenario, 2 numerical failure or
flagged sweep points (all rows are still written), 3 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Any

from cadt_queue.config import FORMATS, MODES, OutputSpec, RunSpec, parse_config
from cadt_queue.errors import ConfigError, NumericalError, ScenarioError
from cadt_queue.metrics import SweepRow, evaluate_point, roc_point, sweep_scenario
from cadt_queue.simulator import run_study

if TYPE_CHECKING:
    from collections.abc import Sequence

    from cadt_queue.simulator import SimReport

__all__ = [
    "CSV_COLUMNS",
    "SIM_COLUMNS",
    "PointResult",
    "build_parser",
    "evaluate_rows",
    "main",
    "render",
    "run",
]

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3

CSV_COLUMNS = (
    "sweep_value",
    "W_nonEm_without",
    "W_plus",
    "W_minus",
    "W_D_with",
    "dW_D",
    "dW_ND",
    "flags",
)
SIM_COLUMNS = ("sim_mean_dW_D", "ci_lo", "ci_hi")


@dataclass(slots=True)
class PointResult:
    """Analytic row and, when simulated, the study report of one evaluation point."""

    row: SweepRow
    sim: SimReport | None = None

    @property
    def flagged(self) -> bool:
        return any(flag.startswith("error") for flag in self.row.flags)


# ── Evaluation ──


def _points(spec: RunSpec) -> list[SweepRow]:
    s = spec.scenario
    sw = spec.sweep
    if sw is None:
        return [SweepRow(sweep_value=None, scenario=s)]
    if sw.is_roc:
        return [
            SweepRow(sweep_value=fpr, scenario=roc_point(s, fpr, tpr), fpr=fpr, tpr=tpr)
            for fpr, tpr in sw.roc_points()
        ]
    return [
        SweepRow(sweep_value=v, scenario=sweep_scenario(s, sw.variable, v)) for v in sw.values()
    ]


def evaluate_rows(spec: RunSpec) -> list[PointResult]:
    """Evaluate every point of ``spec`` in sweep order."""
    points = _points(spec)
    results = []
    for point in points:
        row = point
        if spec.mode in ("analytic", "both"):
            row = evaluate_point(point.sweep_value, point.scenario, fpr=point.fpr, tpr=point.tpr)
        sim = run_study(point.scenario, spec.sim) if spec.simulates else None
        results.append(PointResult(row=row, sim=sim))
        logger.info("Point %s done (%d/%d)", point.sweep_value, len(results), len(points))
    return results


# ── Rendering ──


def _fmt(value: float | None) -> str:
    if value is None:
        return ""
    return f"{value:.6g}"


def _analytic_values(row: SweepRow) -> dict[str, float | None]:
    out: dict[str, float | None] = dict.fromkeys(CSV_COLUMNS[1:-1])
    if row.result is None or row.report is None:
        return out
    without, with_ = row.result.without_cadt, row.result.with_cadt
    out.update(
        W_nonEm_without=without.w_non_em,
        W_plus=with_.w_plus,
        W_minus=with_.w_minus,
        W_D_with=row.report.w_d_with,
        dW_D=row.report.delta_w_d,
        dW_ND=row.report.delta_w_nd,
    )
    return out


def render_csv(results: Sequence[PointResult], spec: RunSpec) -> str:
    """CSV with fixed columns per mode; floats at 6 significant digits."""
    columns = list(CSV_COLUMNS)
    if spec.simulates:
        columns += SIM_COLUMNS
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for res in results:
        values = _analytic_values(res.row)
        line = [_fmt(res.row.sweep_value)]
        line += [_fmt(values[c]) for c in CSV_COLUMNS[1:-1]]
        line.append(";".join(res.row.flags))
        if res.sim is not None:
            d = res.sim.delta_w_d
            line += [_fmt(d.mean), _fmt(d.ci_lo), _fmt(d.ci_hi)]
        writer.writerow(line)
    return buf.getvalue()


def _json_float(value: float | None) -> float | None:
    if value is None or not math.isfinite(value):
        return None
    return value


def _sim_json(report: SimReport) -> dict[str, Any]:
    def est(e: Any) -> dict[str, Any]:
        return {
            "mean": _json_float(e.mean),
            "ci_lo": _json_float(e.ci_lo),
            "ci_hi": _json_float(e.ci_hi),
            "ci68": [_json_float(x) for x in e.ci68],
            "n": e.n,
        }

    return {
        "dW_D": est(report.delta_w_d),
        "dW_ND": est(report.delta_w_nd),
        "W_D": {str(w): est(e) for w, e in report.w_d.items()},
        "W_ND": {str(w): est(e) for w, e in report.w_nd.items()},
        "class_waits": {
            str(w): {str(c): est(e) for c, e in waits.items()}
            for w, waits in report.class_waits.items()
        },
        "subgroup_waits": {
            str(w): {g: est(e) for g, e in waits.items()}
            for w, waits in report.subgroup_waits.items()
        },
        "n_images": report.n_images,
    }


def render_json(results: Sequence[PointResult], spec: RunSpec) -> str:
    """JSON at full precision with the canonical config as ``spec`` header."""
    rows = []
    for res in results:
        row = res.row
        item: dict[str, Any] = {"sweep_value": row.sweep_value, "flags": list(row.flags)}
        if row.fpr is not None:
            item.update(fpr=row.fpr, tpr=row.tpr)
        item.update(_analytic_values(row))
        if row.result is not None:
            item["model"] = str(row.result.model)
            item["class_waits"] = {
                str(w.world): {str(c): v for c, v in w.waits.items()}
                for w in (row.result.without_cadt, row.result.with_cadt)
            }
        if row.report is not None and row.report.stroke is not None:
            item["stroke"] = dataclasses.asdict(row.report.stroke)
        if res.sim is not None:
            item["simulation"] = _sim_json(res.sim)
        rows.append(item)
    return json.dumps({"spec": spec.to_mapping(), "rows": rows}, indent=2) + "\n"


def render(results: Sequence[PointResult], spec: RunSpec) -> str:
    if spec.output.format == "json":
        return render_json(results, spec)
    return render_csv(results, spec)


# ── Entry points ──


def run(spec: RunSpec) -> int:
    """Evaluate ``spec``, write its output and return the exit status.

    Output goes to ``spec.output.path`` or, without a path, to stdout.
    """
    try:
        results = evaluate_rows(spec)
        text = render(results, spec)
        if spec.output.path is None:
            sys.stdout.write(text)
        else:
            Path(spec.output.path).write_text(text, encoding="utf-8")
            logger.info("Wrote %d row(s) to %s", len(results), spec.output.path)
    except (ConfigError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    flagged = [res for res in results if res.flagged]
    if flagged:
        logger.warning("%d of %d point(s) flagged", len(flagged), len(results))
        return EXIT_NUMERICAL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cadt-queue",
        description="Time savings of a CADt device in a radiologist reading queue.",
    )
    parser.add_argument("--config", type=Path, help="flat key-value YAML run config")
    parser.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one config key (repeatable)",
    )
    parser.add_argument("--out", help="output file (default: stdout)")
    parser.add_argument("--format", choices=FORMATS, help="output format")
    parser.add_argument("--seed", type=int, help="simulation seed")
    parser.add_argument("--mode", choices=MODES, help="analytic, simulate or both")
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG"
    )
    return parser


def _configure_logging(verbosity: int) -> None:
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)

    try:
        text = args.config.read_text(encoding="utf-8") if args.config else ""
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO

    overrides = list(args.override)
    if args.seed is not None:
        overrides.append(f"sim.seed={args.seed}")
    if args.mode is not None:
        overrides.append(f"mode={args.mode}")
    try:
        spec = parse_config(text, overrides)
        if args.out is not None or args.format is not None:
            output = OutputSpec(
                path=args.out if args.out is not None else spec.output.path,
                format=args.format or spec.output.format,
            )
            spec = dataclasses.replace(spec, output=output)
    except (ConfigError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return run(spec)


if __name__ == "__main__":
    sys.exit(main())
