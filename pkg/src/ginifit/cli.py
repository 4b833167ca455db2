"""Command-line entry point: ``ginifit <command> [options]``.

Exit status is 0 on success, 1 on runtime or numerical failure and 2 on
invalid flags or configuration.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import math
import os
import sys
from typing import Sequence

import numpy as np

from . import ingest
from .geometry import GeometryError, Polygon, Rectangle, project_window
from .model.convergence import SCALINGS, Component, convergence_experiment
from .model.fitting import (DEFAULT_BETA_RANGE, FitError, FitResult, fit_beta, fit_pattern,
                            implied_area_km2)
from .model.theory import BETA_MAX, GinibreParams, theoretical_J
from .pattern import PointPattern, read_points_csv, write_points_csv
from .samplers import (InvalidParameterError, SamplerError, Seed, sample_beta_gpp,
                       sample_ppp)
from .summaries import DEFAULT_R_MAX, DEFAULT_STEPS, RadialGrid, SummaryEstimate, estimate_J
from .svgplot import render_j_plot

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

MIN_SITES = 10
PER_KM2 = 1e6
SUPERPOSE_COLUMNS = ("n", "mean_beta_hat", "se_beta_hat", "void_gap_mean", "void_gap_se",
                     "p0_empirical", "p0_poisson", "lambda_total_per_km2", "reps", "failed_fits")
REPORT_COLUMNS = ("operator", "band", "n_sites", "beta_hat", "lambda_per_km2", "residual",
                  "implied_area_km2", "status")
_NUMERIC = {"n_sites", "beta_hat", "lambda_per_km2", "residual", "implied_area_km2"}


class UsageError(Exception):
    """Invalid flags or configuration (exit status 2)."""


class RunError(Exception):
    """Failure while running a command (exit status 1)."""


def _num(v: float) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "" if v is None or not math.isfinite(v) else repr(float(v))


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, np.integer):
        return int(v)
    return v


def _load_toml(path: str, what: str) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {what} {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"{what} {path} is not valid TOML: {exc}") from None


def _parse_floats(text: str, n: int, flag: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        vals = []
    if len(vals) != n or not all(math.isfinite(v) for v in vals):
        raise UsageError(f"{flag} expects {n} comma-separated numbers, got {text!r}")
    return vals


def load_geo_window(path: str) -> Polygon:
    """Read ``vertices = [[lon, lat], ...]`` from a TOML file."""
    cfg = _load_toml(path, "window file")
    verts = cfg.get("vertices")
    if not isinstance(verts, list) or not all(isinstance(v, list) and len(v) == 2 for v in verts):
        raise UsageError(f"{path}: 'vertices' must be a list of [lon, lat] pairs")
    try:
        return Polygon([[float(a), float(b)] for a, b in verts])
    except (GeometryError, TypeError, ValueError) as exc:
        raise UsageError(f"{path}: invalid window polygon: {exc}") from None


def resolve_window(args) -> Rectangle | Polygon:
    """Window in metres from ``--window`` or ``--window-geo``."""
    if getattr(args, "window", None) and getattr(args, "window_geo", None):
        raise UsageError("give either --window or --window-geo, not both")
    if getattr(args, "window", None):
        x0, y0, x1, y1 = _parse_floats(args.window, 4, "--window")
        try:
            return Rectangle(x0, y0, x1, y1)
        except GeometryError as exc:
            raise UsageError(f"--window: {exc}") from None
    if getattr(args, "window_geo", None):
        return project_window(load_geo_window(args.window_geo))[0]
    raise UsageError("a window is required: --window x0,y0,x1,y1 or --window-geo FILE")


def _grid(args) -> RadialGrid:
    if not (args.rmax > 0 and args.nr >= 1):
        raise UsageError("--rmax must be positive and --nr at least 1")
    return RadialGrid.uniform(args.rmax, args.nr)


def _beta_range(args) -> tuple[float, float]:
    lo = DEFAULT_BETA_RANGE[0]
    if not lo < args.beta_max <= BETA_MAX:
        raise UsageError(f"--beta-max must lie in ({lo}, {BETA_MAX}]")
    return lo, args.beta_max


def _spacing(args) -> float | None:
    if args.spacing is not None and not args.spacing > 0:
        raise UsageError("--spacing must be positive")
    return args.spacing


@contextlib.contextmanager
def _output(path: str | None):
    if path in (None, "-"):
        yield sys.stdout
        sys.stdout.flush()
    else:
        buf = io.StringIO()
        yield buf
        try:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(buf.getvalue())
        except OSError as exc:
            raise RunError(f"cannot write {path}: {exc.strerror}") from None


def _read_pattern(path: str, window) -> PointPattern:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            pts = read_points_csv(fh)
    except OSError as exc:
        raise RunError(f"cannot read {path}: {exc.strerror}") from None
    except ValueError as exc:
        raise RunError(f"{path}: {exc}") from None
    try:
        return PointPattern(pts, window)
    except ValueError as exc:
        raise RunError(f"{path}: {exc}") from None


def _info(args, msg: str) -> None:
    # keep stdout clean when it carries the data
    stream = sys.stderr if args.out in (None, "-") else sys.stdout
    print(msg, file=stream)


# -- commands -----------------------------------------------------------------

def cmd_simulate(args) -> int:
    if args.format != "csv":
        raise UsageError("simulate writes point CSV only (--format csv)")
    if args.lambda_per_km2 is None or not args.lambda_per_km2 >= 0:
        raise UsageError("--lambda must be given and non-negative")
    beta = args.beta
    if args.model == "gpp":
        if beta not in (None, 1.0):
            raise UsageError("--model gpp fixes beta = 1; use bgpp for other values")
        beta = 1.0
    elif args.model == "bgpp":
        if beta is None or not 0 < beta <= 1:
            raise UsageError(f"--model bgpp needs --beta in (0, 1], got {beta}")
    w = resolve_window(args)
    lam = args.lambda_per_km2 / PER_KM2
    seed = Seed(args.seed)
    if args.model != "ppp" and lam == 0:
        raise UsageError(f"--model {args.model} needs a positive --lambda")
    try:
        if args.model == "ppp":
            pattern = sample_ppp(lam, w, seed)
        else:
            pattern = sample_beta_gpp(GinibreParams.from_intensity(lam, beta), w, seed)
    except (SamplerError, InvalidParameterError) as exc:
        raise RunError(f"sampler ({args.model}): {exc}") from None
    with _output(args.out) as fh:
        write_points_csv(pattern, fh)
    _info(args, f"points: {len(pattern)}  lambda_hat_per_km2: "
                f"{len(pattern) / w.area() * PER_KM2:.6f}")
    return 0


def cmd_jfun(args) -> int:
    w = resolve_window(args)
    grid, spacing = _grid(args), _spacing(args)
    pattern = _read_pattern(args.input, w)
    if len(pattern) < 2:
        raise RunError(f"J estimation needs at least 2 points; {args.input} has {len(pattern)}")
    try:
        summary = estimate_J(pattern, grid, spacing)
    except ValueError as exc:
        raise RunError(f"estimator: {exc}") from None
    with _output(args.out) as fh:
        summary.to_csv(fh)
    return 0


def _write_fit(args, res: FitResult) -> None:
    d = res.to_dict()
    with _output(args.out) as fh:
        if args.format == "json":
            fh.write(json.dumps(_jsonable(d), indent=2) + "\n")
        else:
            fh.write(",".join(d) + "\n")
            fh.write(",".join(str(v).lower() if isinstance(v, bool) else _num(v)
                              for v in d.values()) + "\n")


def cmd_fit(args) -> int:
    beta_range = _beta_range(args)
    if args.rmin < 0:
        raise UsageError("--rmin must be non-negative")
    if args.summary:
        if args.input:
            raise UsageError("give either --in or --summary, not both")
        if args.lambda_per_km2 is None or not args.lambda_per_km2 > 0:
            raise UsageError("--summary needs a positive --lambda (per km^2)")
        try:
            with open(args.summary, encoding="utf-8", newline="") as fh:
                summary = SummaryEstimate.from_csv(fh)
        except OSError as exc:
            raise RunError(f"cannot read {args.summary}: {exc.strerror}") from None
        except ValueError as exc:
            raise RunError(f"{args.summary}: {exc}") from None
        try:
            res = fit_beta(summary, args.lambda_per_km2 / PER_KM2, args.rmin,
                           args.rmax, beta_range)
        except FitError as exc:
            raise RunError(f"fitter: {exc}") from None
    else:
        if not args.input:
            raise UsageError("fit needs --in POINTS.csv (or --summary with --lambda)")
        w = resolve_window(args)
        grid, spacing = _grid(args), _spacing(args)
        pattern = _read_pattern(args.input, w)
        try:
            res = fit_pattern(pattern, grid, spacing, r_min=args.rmin, beta_range=beta_range)
        except (FitError, ValueError) as exc:
            raise RunError(f"fitter: {exc}") from None
    _write_fit(args, res)
    return 0


def load_superpose_spec(path: str) -> dict:
    """Validate a superposition spec; every problem is reported at once."""
    cfg = _load_toml(path, "spec file")
    problems = []
    comps = []
    raw_comps = cfg.get("components")
    if not isinstance(raw_comps, list) or not raw_comps:
        problems.append("'components' must be a non-empty array of tables")
    else:
        for i, cp in enumerate(raw_comps):
            try:
                comps.append(Component(float(cp["beta"]), float(cp["lambda_per_km2"])))
            except KeyError as exc:
                problems.append(f"components[{i}]: missing key {exc.args[0]!r}")
            except (TypeError, ValueError) as exc:
                problems.append(f"components[{i}]: {exc}")
    n_values = cfg.get("n_values")
    if (not isinstance(n_values, list) or not n_values
            or not all(isinstance(n, int) and not isinstance(n, bool) and n >= 1 for n in n_values)):
        problems.append("'n_values' must be a non-empty list of positive integers")
    scaling = cfg.get("scaling", "equal-share")
    if scaling not in SCALINGS:
        problems.append(f"'scaling' must be one of {', '.join(SCALINGS)}")
    window = cfg.get("window", [0.0, 0.0, 8000.0, 6000.0])
    w = None
    try:
        w = Rectangle(*[float(v) for v in window])
    except (TypeError, ValueError) as exc:
        problems.append(f"'window' must be [x0, y0, x1, y1] in metres: {exc}")
    probe = cfg.get("probe_radius_m", 300.0)
    if not isinstance(probe, (int, float)) or isinstance(probe, bool) or not probe > 0:
        problems.append("'probe_radius_m' must be a positive number")
    unknown = set(cfg) - {"components", "n_values", "scaling", "window", "probe_radius_m"}
    for key in sorted(unknown):
        problems.append(f"unknown key {key!r}")
    if problems:
        raise UsageError(f"{path}: invalid spec\n" + "\n".join(f"  - {p}" for p in problems))
    return {"components": comps, "n_values": n_values, "scaling": scaling,
            "window": w, "probe_radius": float(probe)}


def cmd_superpose(args) -> int:
    if args.reps < 1:
        raise UsageError("--reps must be at least 1")
    spec = load_superpose_spec(args.spec)
    beta_range = _beta_range(args)
    grid, spacing = _grid(args), _spacing(args)
    try:
        rows = convergence_experiment(spec["components"], spec["n_values"], spec["window"],
                                      args.reps, Seed(args.seed), scaling=spec["scaling"],
                                      probe_radius=spec["probe_radius"], grid=grid,
                                      spacing=spacing, beta_range=beta_range)
    except (SamplerError, InvalidParameterError) as exc:
        raise RunError(f"sampler: {exc}") from None
    except ValueError as exc:
        raise RunError(str(exc)) from None
    with _output(args.out) as fh:
        if args.format == "json":
            data = [{k: getattr(r, k) for k in SUPERPOSE_COLUMNS} for r in rows]
            fh.write(json.dumps(_jsonable(data), indent=2) + "\n")
        else:
            fh.write(",".join(SUPERPOSE_COLUMNS) + "\n")
            for r in rows:
                fh.write(",".join(_num(getattr(r, k)) for k in SUPERPOSE_COLUMNS) + "\n")
    return 0


def _load_mapping(spec: str) -> dict:
    if os.path.isfile(spec):
        cfg = _load_toml(spec, "mapping file")
        cfg = cfg.get("columns", cfg)
    else:
        cfg = spec
    try:
        return ingest.parse_mapping(cfg)
    except ingest.IngestError as exc:
        raise UsageError(f"--mapping: {exc}") from None


def _group_keys(records, mode: str) -> list[tuple[str, str | None]]:
    seen = {}
    for r in records:
        key = (r.operator.strip().casefold(), r.band.strip().casefold() if mode == "operator-band" else None)
        seen.setdefault(key, (r.operator, r.band if mode == "operator-band" else None))
    return [seen[k] for k in sorted(seen, key=lambda k: (k[0], k[1] or ""))]


def _fit_group(records, geo, args, grid, spacing, beta_range):
    """One report row; problems degrade to a marked row instead of an exception."""
    row = {"n_sites": 0, "beta_hat": math.nan, "lambda_per_km2": math.nan,
           "residual": math.nan, "implied_area_km2": math.nan, "status": "ok"}
    try:
        pattern, rep = ingest.to_pattern(records, geo, args.dedup_eps)
    except ingest.EmptyPatternError as exc:
        row["status"] = f"skipped: n < {MIN_SITES}"
        return row, exc.report
    row["n_sites"] = len(pattern)
    if len(pattern) < MIN_SITES:
        row["status"] = f"skipped: n < {MIN_SITES}"
        return row, rep
    try:
        res = fit_pattern(pattern, grid, spacing, beta_range=beta_range)
    except (FitError, ValueError) as exc:
        row["status"] = f"skipped: {exc}"
        return row, rep
    row.update(beta_hat=res.beta_hat, lambda_per_km2=res.lambda_per_km2, residual=res.residual,
               implied_area_km2=implied_area_km2(len(pattern), res.lambda_per_km2))
    if res.outside_thinning_range:
        row["status"] = "ok: beta > 1"
    return row, rep


def cmd_report(args) -> int:
    if args.dedup_eps < 0:
        raise UsageError("--dedup-eps must be non-negative")
    mapping = _load_mapping(args.mapping)
    if not args.window_geo:
        raise UsageError("report needs --window-geo FILE")
    geo = load_geo_window(args.window_geo)
    grid, spacing, beta_range = _grid(args), _spacing(args), _beta_range(args)
    try:
        with open(args.sites, "rb") as fh:
            records, parsed = ingest.parse_sites(fh, mapping)
    except OSError as exc:
        raise RunError(f"cannot read {args.sites}: {exc.strerror}") from None
    except ingest.IngestError as exc:
        raise RunError(f"{args.sites}: {exc}") from None
    except UnicodeDecodeError as exc:
        raise RunError(f"{args.sites}: not UTF-8 ({exc.reason})") from None
    rows = []
    for op, band in _group_keys(records, args.group):
        subset = ingest.filter_sites(records, operator=op, band=band)
        row, _ = _fit_group(subset, geo, args, grid, spacing, beta_range)
        rows.append({"operator": op, "band": band if band is not None else "*", **row})
    all_row, all_rep = _fit_group(records, geo, args, grid, spacing, beta_range)
    rows.append({"operator": "ALL", "band": "*", **all_row})
    accounting = ingest.combine_reports(parsed, all_rep)
    notes = []
    if accounting.points_retained == 0:
        notes.append("zero sites retained inside the window")
    window_km2 = project_window(geo)[0].area() / PER_KM2
    with _output(args.out) as fh:
        if args.format == "json":
            doc = {"groups": rows, "ingest": accounting.to_dict(),
                   "window_area_km2": window_km2, "notes": notes}
            fh.write(json.dumps(_jsonable(doc), indent=2) + "\n")
        else:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(REPORT_COLUMNS)
            for r in rows:
                writer.writerow([_num(r[k]) if k in _NUMERIC else r[k] for k in REPORT_COLUMNS])
    info = [f"rows read {accounting.rows_read}, rejected {accounting.rows_rejected}, "
            f"merged {accounting.duplicates_merged}, outside {accounting.points_outside_window}, "
            f"retained {accounting.points_retained}; window {window_km2:.3f} km^2"]
    _info(args, "\n".join(info + [f"note: {n}" for n in notes]))
    return 0


def _theory_curve(spec: str, r: np.ndarray) -> np.ndarray:
    if os.path.isfile(spec):
        try:
            with open(spec, encoding="utf-8") as fh:
                res = FitResult.from_dict(json.load(fh))
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"--theory {spec}: not a fit result ({exc})") from None
        beta, lam = res.beta_hat, res.lambda_hat
    else:
        beta, lam_km2 = _parse_floats(spec, 2, "--theory")
        lam = lam_km2 / PER_KM2
    try:
        params = GinibreParams.from_intensity(lam, beta)
    except ValueError as exc:
        raise UsageError(f"--theory: {exc}") from None
    with np.errstate(over="ignore", divide="ignore"):
        j = theoretical_J(r, params)
    return np.where(j > 0, j, np.nan)


def cmd_plot(args) -> int:
    if not args.out or args.out == "-":
        raise UsageError("plot needs --out FILE.svg")
    try:
        with open(args.input, encoding="utf-8", newline="") as fh:
            summary = SummaryEstimate.from_csv(fh)
    except OSError as exc:
        raise RunError(f"cannot read {args.input}: {exc.strerror}") from None
    except ValueError as exc:
        raise RunError(f"{args.input}: {exc}") from None
    theory = _theory_curve(args.theory, summary.r) if args.theory else None
    svg = render_j_plot(summary.r, summary.j_hat, theory)
    with _output(args.out) as fh:
        fh.write(svg)
    return 0


# -- parser -------------------------------------------------------------------

def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_seed, default=0, help="64-bit master seed (default 0)")
    common.add_argument("--out", default=None, help="output path (default: standard output)")
    common.add_argument("--format", choices=("csv", "json"), default=None)

    win = argparse.ArgumentParser(add_help=False)
    win.add_argument("--window", metavar="X0,Y0,X1,Y1", help="rectangular window in metres")
    win.add_argument("--window-geo", metavar="FILE", help="TOML file with lon/lat polygon vertices")

    est = argparse.ArgumentParser(add_help=False)
    est.add_argument("--rmax", type=float, default=DEFAULT_R_MAX, help="largest radius, metres (default 600)")
    est.add_argument("--nr", type=int, default=DEFAULT_STEPS, help="radial steps (default 512)")
    est.add_argument("--spacing", type=float, default=None,
                     help="empty-space test grid spacing, metres (default: window extent / 100)")

    fitp = argparse.ArgumentParser(add_help=False)
    fitp.add_argument("--beta-max", type=float, default=BETA_MAX, help="upper end of the beta search (default 1.2)")

    parser = argparse.ArgumentParser(prog="ginifit", description="beta-Ginibre modelling of point patterns")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common, win], help="simulate a point pattern")
    p.add_argument("--model", choices=("ppp", "gpp", "bgpp"), required=True)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--lambda", dest="lambda_per_km2", type=float, default=None, help="intensity per km^2")
    p.set_defaults(func=cmd_simulate, default_format="csv", subparser=p)

    p = sub.add_parser("jfun", parents=[common, win, est], help="estimate F, G and J")
    p.add_argument("--in", dest="input", required=True, help="points CSV (x_m,y_m)")
    p.set_defaults(func=cmd_jfun, default_format="csv", subparser=p)

    p = sub.add_parser("fit", parents=[common, win, est, fitp], help="fit beta by minimum contrast on J")
    p.add_argument("--in", dest="input", default=None, help="points CSV (x_m,y_m)")
    p.add_argument("--summary", default=None, help="fit a ready summary CSV instead of a pattern")
    p.add_argument("--lambda", dest="lambda_per_km2", type=float, default=None,
                   help="intensity per km^2, required with --summary")
    p.add_argument("--rmin", type=float, default=0.0, help="smallest radius used in the fit, metres")
    p.set_defaults(func=cmd_fit, default_format="json", subparser=p)

    p = sub.add_parser("superpose", parents=[common, est, fitp], help="superposition experiment")
    p.add_argument("--spec", required=True, help="TOML experiment spec")
    p.add_argument("--reps", type=int, default=20)
    p.set_defaults(func=cmd_superpose, default_format="csv", subparser=p)

    p = sub.add_parser("report", parents=[common, est, fitp], help="per-group fits over a site CSV")
    p.add_argument("--sites", required=True, help="deployment CSV")
    p.add_argument("--mapping", required=True,
                   help="column mapping: TOML file or inline operator=..,band=..,lon=..,lat=..")
    p.add_argument("--window-geo", required=True, metavar="FILE")
    p.add_argument("--group", choices=("operator", "operator-band"), default="operator")
    p.add_argument("--dedup-eps", type=float, default=ingest.DEFAULT_DEDUP_EPS,
                   help="merge sites closer than this, metres (default 1)")
    p.set_defaults(func=cmd_report, default_format="csv", subparser=p)

    p = sub.add_parser("plot", parents=[common], help="SVG plot of an estimated J")
    p.add_argument("--in", dest="input", required=True, help="summary CSV")
    p.add_argument("--theory", default=None, help="BETA,LAMBDA_PER_KM2 or a fit JSON file")
    p.set_defaults(func=cmd_plot, default_format="csv", subparser=p)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.format is None:
        args.format = args.default_format
    try:
        return args.func(args)
    except UsageError as exc:
        args.subparser.print_usage(sys.stderr)
        print(f"ginifit {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except RunError as exc:
        print(f"ginifit {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
