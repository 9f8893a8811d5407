"""
Trace CSV, verification JSON and sweep CSV writers.

Floats are written with 17 significant digits so every value round-trips.
"""
import csv
import json
import logging
from pathlib import Path

logger = logging.getLogger(__name__)


def fmt(value):
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    return format(float(value), ".17g")


def trace_header(dim):
    columns = ["n"]
    for prefix in ("x", "z", "y", "t"):
        columns += [f"{prefix}{k}" for k in range(1, dim + 1)]
    return columns + ["a_n", "b_n", "step_norm", "dist_to_p", "A3_gap"]


def trace_rows(trace):
    for rec in trace.iterations:
        row = [str(rec.n)]
        for vec in (rec.x, rec.z, rec.y, rec.t):
            row += [fmt(v) for v in vec]
        row += [fmt(rec.a), fmt(rec.b), fmt(rec.step_norm), fmt(rec.dist_to_p), fmt(rec.A3_gap)]
        yield row


def _open_for_write(path):
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    return path.open("w", newline="")


def write_trace_csv(trace, dim, path):
    with _open_for_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(trace_header(dim))
        writer.writerows(trace_rows(trace))
    logger.info("Wrote %d trace rows to %s", len(trace), path)


def write_report_json(reports, path):
    """reports: mapping check name -> VerifierReport"""
    document = {name: report.to_dict() for name, report in reports.items()}
    with _open_for_write(path) as fh:
        json.dump(document, fh, indent=2, sort_keys=True)
        fh.write("\n")
    logger.info("Wrote verification report to %s", path)


SWEEP_HEADER = ["value", "iterations_to_tol", "final_dist_to_p", "contraction_factor_r"]


def write_sweep_csv(rows, path):
    """rows: (value, iterations or status, final distance or None, r or None)"""
    with _open_for_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_HEADER)
        for value, iterations, dist, r in rows:
            writer.writerow([fmt(value), str(iterations), fmt(dist), fmt(r)])
    logger.info("Wrote %d sweep rows to %s", len(rows), path)
