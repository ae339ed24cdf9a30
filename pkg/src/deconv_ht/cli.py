"""Command-line entry point: ``deconv-ht {simulate,estimate,bootstrap,kernel}``.

Exit status: 0 on success, 1 on estimation or simulation failures, 2 on
usage, config or data errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import os
import sys
import tempfile
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import qp
from .config import ConfigError, RunConfig, load_config
from .deconvolve import CalibrationConstraint, EmptyGroupError, GroupData, fit, fit_joint
from .estimators import PopulationFrame, bootstrap_mse_term, naive_proportions
from .kernels import build_kernel_matrix
from .mixture import CountVector, expected_inverse
from .simulate import Family, ScenarioConfig, SummaryRow, run_table, table_configs

log = logging.getLogger("deconv_ht")

SUMMARY_COLUMNS = ["family", "M0", "alpha", "m_nv", "m_mht", "s_nv", "s_mht", "s_or", "m_m1", "m_m0"]
SUMMARY_HEADER = [SummaryRow.LABELS[c] for c in SUMMARY_COLUMNS]


class DataError(ValueError):
    pass


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return f"{float(x):.17g}"


def atomic_write(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def to_csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def to_text(header, rows, digits: int = 4) -> str:
    def cell(v):
        if isinstance(v, float) or isinstance(v, np.floating):
            return "nan" if math.isnan(v) else f"{v:.{digits}f}"
        return str(v)

    table = [list(header)] + [[cell(v) for v in row] for row in rows]
    widths = [max(len(r[i]) for r in table) for i in range(len(header))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in table) + "\n"


def summary_rows_csv(rows) -> str:
    return to_csv(SUMMARY_HEADER, [[getattr(r, c) for c in SUMMARY_COLUMNS] for r in rows])


def read_summary_csv(text: str) -> list[dict]:
    """Parse a ``simulate`` CSV back into dicts keyed by :class:`SummaryRow` field names."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header != SUMMARY_HEADER:
        raise DataError(f"unexpected header {header}")
    out = []
    for row in reader:
        rec = {}
        for name, raw in zip(SUMMARY_COLUMNS, row):
            rec[name] = raw if name == "family" else (int(raw) if name == "M0" else float(raw))
        out.append(rec)
    return out


# -- data ------------------------------------------------------------------

@dataclass(frozen=True)
class ObservationRecord:
    group: str
    y: int
    covariate: str | None = None
    history: bool = False


def _label_key(label: str):
    try:
        return (0, float(label), label)
    except ValueError:
        return (1, 0.0, label)


def read_records(path, n_outcomes: int) -> list[ObservationRecord]:
    """Observation CSV with columns ``group,y`` and optional ``covariate,history``."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read data {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in lines[0].split(",")]
    for req in ("group", "y"):
        if req not in header:
            raise DataError(f"{path}: line 1: missing column {req!r}")
    unknown = set(header) - {"group", "y", "covariate", "history"}
    if unknown:
        raise DataError(f"{path}: line 1: unknown columns {sorted(unknown)}")
    col = {h: i for i, h in enumerate(header)}
    records, errors = [], []
    for no, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        cells = [c.strip() for c in line.split(",")]
        if len(cells) != len(header):
            errors.append(f"line {no}: expected {len(header)} fields, got {len(cells)}")
            continue
        try:
            y = int(cells[col["y"]])
        except ValueError:
            errors.append(f"line {no}: y is not an integer: {cells[col['y']]!r}")
            continue
        if not 1 <= y <= n_outcomes:
            errors.append(f"line {no}: y={y} outside 1..{n_outcomes}")
            continue
        hist = False
        if "history" in col:
            raw = cells[col["history"]]
            if raw not in ("0", "1"):
                errors.append(f"line {no}: history must be 0 or 1, got {raw!r}")
                continue
            hist = raw == "1"
        group = cells[col["group"]]
        if not group:
            errors.append(f"line {no}: empty group label")
            continue
        cov = cells[col["covariate"]] if "covariate" in col else None
        records.append(ObservationRecord(group, y, cov, hist))
    if errors:
        raise DataError(f"{path}: " + "; ".join(errors))
    if not records:
        raise DataError(f"{path}: no records")
    return records


def _kernel_matrix(cfg: RunConfig):
    return build_kernel_matrix(cfg.grid, cfg.kernel)


def _group_key(rec: ObservationRecord, by_covariate: bool):
    return f"{rec.group}|{rec.covariate}" if by_covariate else rec.group


def _fit_groups(cfg: RunConfig, records, P):
    """Fit one mixture per (group[, covariate]) key; returns keys, GroupData list and fits."""
    by_cov = bool(cfg.calibration)
    if by_cov and any(r.covariate is None for r in records):
        raise DataError("calibration needs a 'covariate' column in the data")
    keys = sorted({_group_key(r, by_cov) for r in records}, key=lambda k: [_label_key(p) for p in k.split("|")])
    J = P.n_outcomes
    groups = []
    for key in keys:
        recs = [r for r in records if _group_key(r, by_cov) == key]
        counts = CountVector.from_observations([r.y for r in recs], J)
        size = sum(1 for r in recs if not r.history)
        groups.append(GroupData(key, counts, size))

    calibrations = []
    if by_cov:
        if cfg.frame is None:
            raise ConfigError("[calibration] needs [population] I")
        for value, prop in cfg.calibration.items():
            coefs = {g.label: 1.0 for g in groups if g.label.split("|", 1)[1] == value}
            if not coefs:
                raise DataError(f"calibration covariate {value!r} does not occur in the data")
            calibrations.append(CalibrationConstraint(coefs, prop * cfg.frame.I))
    if cfg.joint and cfg.frame is None:
        raise ConfigError("[fit] joint = true needs [population] I")
    if cfg.joint or calibrations:
        fits = fit_joint(groups, P, cfg.frame.I if cfg.joint else None, calibrations, cfg.fit)
    else:
        fits = [fit(g.counts, P, cfg.fit) if g.m > 0 and g.counts.total > 0 else None for g in groups]
    return groups, fits


def _outcome_of(key: str) -> str:
    return key.split("|", 1)[0]


def estimate_report(cfg: RunConfig, records):
    P = _kernel_matrix(cfg)
    groups, fits = _fit_groups(cfg, records, P)
    outcomes = sorted({_outcome_of(g.label) for g in groups}, key=_label_key)
    m_out = {o: 0 for o in outcomes}
    inflated = {o: 0.0 for o in outcomes}
    for g, gh in zip(groups, fits):
        o = _outcome_of(g.label)
        m_out[o] += g.m
        if g.m > 0:
            if gh is None:
                raise EmptyGroupError(f"group {g.label!r} has responders but no effort data")
            inflated[o] += g.m * expected_inverse(gh)
    naive = naive_proportions([m_out[o] for o in outcomes])
    total = sum(inflated.values())
    if not total > 0:
        raise EmptyGroupError("no responders")
    mht = [inflated[o] / total for o in outcomes]

    rows = []
    for o, nv, mh in zip(outcomes, naive, mht):
        rows.append(("estimate", o, "m", m_out[o]))
        rows.append(("estimate", o, "naive", float(nv)))
        rows.append(("estimate", o, "mht", float(mh)))
    for g, gh in zip(groups, fits):
        rows.append(("group", g.label, "m", g.m))
        rows.append(("group", g.label, "n_fit", g.counts.total))
        if gh is None:
            rows.append(("group", g.label, "fit", "undefined"))
            continue
        rows.append(("group", g.label, "expected_inverse", expected_inverse(gh)))
        d = gh.diagnostics
        rows.append(("group", g.label, "objective", d.get("objective", float("nan"))))
        rows.append(("group", g.label, "kkt_residual", d.get("kkt_residual", float("nan"))))
        for name, res in sorted(d.get("constraint_residuals", {}).items()):
            rows.append(("constraint", g.label, name, res))
        for s, w in gh.atoms(cfg.fit.report_threshold):
            rows.append(("weight", g.label, fmt(s), w))
    return ["record", "group", "key", "value"], rows


def bootstrap_report(cfg: RunConfig, records, workers=None):
    P = _kernel_matrix(cfg)
    groups, fits = _fit_groups(cfg, records, P)
    frame = cfg.frame or PopulationFrame(1, 1)
    rows, failures = [], 0
    for g, gh in zip(groups, fits):
        if gh is None or g.m == 0:
            continue
        res = bootstrap_mse_term(gh, g.m, frame, P, cfg.bootstrap_K, cfg.bootstrap_seed, cfg.fit, workers)
        failures += res.failures
        rows.append((g.label, g.m, res.K, res.seed, res.failures, res.mse, math.sqrt(res.mse)))
    return ["group", "m", "K", "seed", "failures", "mse", "rmse"], rows


def kernel_report(cfg: RunConfig):
    P = _kernel_matrix(cfg)
    header = ["j"] + [fmt(s) for s in P.grid.points]
    rows = [[j + 1] + list(P.matrix[j]) for j in range(P.n_outcomes)]
    rows.append(["sum"] + list(P.matrix.sum(axis=0)))
    return header, rows


def simulate_configs(cfg: RunConfig, seed=None, reps=None) -> list[ScenarioConfig]:
    sim = cfg.simulate
    for fam in sim.families:
        Family(fam)
    grid = cfg.grid if cfg.grid_explicit else None
    return table_configs(
        sim.I, reps=reps if reps is not None else sim.reps, seed=seed if seed is not None else sim.seed,
        families=sim.families, m0s=sim.m0s, alphas=sim.alphas, pr1=sim.pr1, grid=grid,
        fit=cfg.fit, joint=cfg.joint, normal_group1=sim.normal_group1,
    )


# -- commands ---------------------------------------------------------------

def _emit(args, cfg: RunConfig, header, rows):
    fmt_ = args.format or cfg.output_format
    text = to_csv(header, rows) if fmt_ == "csv" else to_text(header, rows, digits=6)
    path = args.out or cfg.output_path
    if path:
        atomic_write(path, text)
    else:
        sys.stdout.write(text)


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.reps is not None and args.reps < 1:
        raise ConfigError("--reps must be >= 1")
    try:
        configs = simulate_configs(cfg, args.seed, args.reps)
    except ValueError as exc:
        raise ConfigError(f"{args.config}: [simulate]: {exc}") from exc
    rows = run_table(configs)
    csv_text = summary_rows_csv(rows)
    text = to_text(SUMMARY_HEADER, [[getattr(r, c) for c in SUMMARY_COLUMNS] for r in rows])
    path = args.out or cfg.output_path
    if path:
        path = Path(path)
        mirror = path.with_suffix(".txt") if path.suffix != ".txt" else path.with_name(path.name + ".txt")
        atomic_write(path, csv_text)
        atomic_write(mirror, text)
    else:
        sys.stdout.write(csv_text if (args.format or "csv") == "csv" else text)
    return 1 if any(r.error for r in rows) else 0


def cmd_estimate(args) -> int:
    cfg = load_config(args.config)
    records = read_records(args.data, cfg.kernel.support_size)
    header, rows = estimate_report(cfg, records)
    _emit(args, cfg, header, rows)
    return 0


def cmd_bootstrap(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, bootstrap_seed=args.seed)
    records = read_records(args.data, cfg.kernel.support_size)
    header, rows = bootstrap_report(cfg, records)
    _emit(args, cfg, header, rows)
    return 0


def cmd_kernel(args) -> int:
    cfg = load_config(args.config)
    header, rows = kernel_report(cfg)
    _emit(args, cfg, header, rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deconv-ht", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=False):
        p.add_argument("--config", required=True, help="run configuration file")
        if data:
            p.add_argument("--data", required=True, help="observation CSV (group,y[,covariate][,history])")
        p.add_argument("--out", help="output path (default: [output] path, else stdout)")
        p.add_argument("--format", choices=["csv", "text"])
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--reps", type=int, help="override the configured repetitions")

    p = sub.add_parser("simulate", help="run the simulation table; writes CSV plus a .txt mirror")
    common(p)
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("estimate", help="naive and modified HT proportions from observations")
    common(p, data=True)
    p.set_defaults(func=cmd_estimate)
    p = sub.add_parser("bootstrap", help="parametric bootstrap MSE term per group")
    common(p, data=True)
    p.set_defaults(func=cmd_bootstrap)
    p = sub.add_parser("kernel", help="dump the kernel matrix with column sums")
    common(p)
    p.set_defaults(func=cmd_kernel)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (qp.QpError, EmptyGroupError, RuntimeError, ValueError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
