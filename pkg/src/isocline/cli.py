"""Command-line front end.

Three subcommands:

``trace``
    Run one trace from a JSON config and write the trajectory as CSV.
``line-field``
    Evaluate the isocline line field on a chart grid.
``equilibria``
    Trace from many starts, Newton-polish and classify the endpoints.

Exit codes: 0 converged, 1 configuration error, 2 not converged,
3 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from .errors import IsoclineError, PreconditionError
from .geometry import field_norm, line_field_direction, metric_inverse
from .learn import LearnedAtlas
from .manifolds import SYSTEM_NAMES, get_system
from .tracer import (
    AnalyticAtlas,
    PotentialField,
    TracerConfig,
    field_jacobian,
    local_frame,
    newton_polish,
    trace,
)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NOT_CONVERGED = 2
EXIT_NUMERICAL = 3

RESIDUAL_SENTINEL = -1.0
DEDUP_TOL = 1e-4

MANIFOLDS = ("sphere", "pseudosphere", "plane")
POTENTIALS = ("mb", "xyz")
START_FRAMES = ("ambient", "chart", "planar")


class ConfigError(ValueError):
    """Invalid run configuration; ``field`` names the offending entry."""

    def __init__(self, message, field_name=None):
        self.field = field_name
        super().__init__(message)


def system_name(manifold, potential):
    name = f"{manifold}-{potential}"
    if name not in SYSTEM_NAMES:
        raise ConfigError(
            f"no system for manifold {manifold!r} with potential {potential!r}; "
            f"available: {', '.join(SYSTEM_NAMES)}",
            "potential",
        )
    return name


@dataclass
class RunConfig:
    """Everything one ``trace`` run needs.

    ``start_frame`` says how ``start`` is read: an ambient point, a point of
    the chart named ``chart``, or a planar Müller-Brown point carried onto the
    surface by the potential's angle correspondence.
    """

    manifold: str
    potential: str
    start: list
    tau: float
    rho: float
    mode: str = "analytic"
    start_frame: str = "ambient"
    chart: str | None = None
    eta: float = 1e-6
    K: int = 500
    r: float = 0.3
    m: int = 2
    max_steps: int = 100_000
    correction_coeff: float = 1.0
    seed: int = 0
    adaptive: bool = True
    energy_ceiling: float | None = None
    Z0: list | None = None
    output: str | None = None

    REQUIRED = ("manifold", "potential", "start", "tau", "rho")

    def __post_init__(self):
        if self.mode not in ("analytic", "learned"):
            raise ConfigError(f"mode must be 'analytic' or 'learned', got {self.mode!r}", "mode")
        if self.manifold not in MANIFOLDS:
            raise ConfigError(f"manifold must be one of {MANIFOLDS}, got {self.manifold!r}", "manifold")
        if self.potential not in POTENTIALS:
            raise ConfigError(f"potential must be one of {POTENTIALS}, got {self.potential!r}", "potential")
        system_name(self.manifold, self.potential)
        if self.start_frame not in START_FRAMES:
            raise ConfigError(f"start_frame must be one of {START_FRAMES}", "start_frame")
        if self.start_frame == "planar" and self.potential != "mb":
            raise ConfigError("planar starts are only defined for the Müller-Brown potential", "start_frame")
        for name in ("tau", "rho", "eta", "r"):
            _positive(self, name, float)
        for name in ("K", "m", "max_steps"):
            _positive(self, name, int)
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer", "seed")
        if not isinstance(self.adaptive, bool):
            raise ConfigError("adaptive must be true or false", "adaptive")
        if not _is_number(self.correction_coeff):
            raise ConfigError("correction_coeff must be a number", "correction_coeff")
        if self.energy_ceiling is not None and not _is_number(self.energy_ceiling):
            raise ConfigError("energy_ceiling must be a number or null", "energy_ceiling")
        self.start = _vector(self.start, "start")
        if self.Z0 is not None:
            self.Z0 = _vector(self.Z0, "Z0")
        if self.mode == "learned" and self.K <= 2 * self.m + 2:
            raise ConfigError(f"learned charts of dimension m={self.m} need K > {2 * self.m + 2}", "K")
        if self.mode == "learned" and self.start_frame == "chart":
            raise ConfigError("learned runs need an ambient or planar start", "start_frame")

    @property
    def system(self):
        return system_name(self.manifold, self.potential)

    def tracer_config(self):
        return TracerConfig(
            tau=self.tau, rho=self.rho, eta=self.eta, K=self.K, Z0=self.Z0,
            max_steps=self.max_steps, correction_coeff=self.correction_coeff,
            seed=self.seed, adaptive=self.adaptive, energy_ceiling=self.energy_ceiling,
        )

    def with_overrides(self, **kwargs):
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update({k: v for k, v in kwargs.items() if v is not None})
        return RunConfig(**data)


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and np.isfinite(v)


def _positive(cfg, name, kind):
    v = getattr(cfg, name)
    if kind is int:
        ok = isinstance(v, int) and not isinstance(v, bool) and v > 0
    else:
        ok = _is_number(v) and v > 0
    if not ok:
        raise ConfigError(f"{name} must be a positive {'integer' if kind is int else 'number'}, got {v!r}", name)


def _vector(v, name):
    if not isinstance(v, (list, tuple)) or not v or not all(_is_number(c) for c in v):
        raise ConfigError(f"{name} must be a non-empty list of numbers", name)
    return [float(c) for c in v]


def parse_config(text, source="<config>"):
    """Build a :class:`RunConfig` from JSON text.

    Raises
    ------
    ConfigError
        With the JSON line and column for syntax errors, or the field name
        for missing, unknown or invalid entries.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a JSON object")
    known = {f.name for f in fields(RunConfig)}
    for key in data:
        if key not in known:
            raise ConfigError(f"{source}: unknown field {key!r}", key)
    for key in RunConfig.REQUIRED:
        if key not in data:
            raise ConfigError(f"{source}: missing required field {key!r}", key)
    try:
        return RunConfig(**data)
    except ConfigError as exc:
        raise ConfigError(f"{source}: field {exc.field!r}: {exc}", exc.field) from None


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, source=str(path))


def _resolve_start(system, cfg, start):
    start = np.asarray(start, dtype=float)
    if cfg.start_frame == "planar":
        if system.planar_to_ambient is None:
            raise ConfigError("this system has no planar correspondence", "start_frame")
        return None, system.planar_to_ambient(start)
    if cfg.start_frame == "chart":
        charts = {c.chart_id: c for c in system.charts}
        chart_id = cfg.chart or system.charts[0].chart_id
        if chart_id not in charts:
            raise ConfigError(f"unknown chart {chart_id!r}; available: {', '.join(charts)}", "chart")
        return charts[chart_id], start
    return None, start


def run_trace(cfg, start=None):
    """Trace once; returns the :class:`Trajectory` and the analytic system."""
    system = get_system(cfg.system)
    chart, x0 = _resolve_start(system, cfg, cfg.start if start is None else start)
    if cfg.mode == "learned":
        provider = LearnedAtlas(system.manifold, K=cfg.K, r=cfg.r, m=cfg.m, eta=cfg.eta, seed=cfg.seed)
        fieldp = PotentialField(system, pushforward=True)
    else:
        provider = AnalyticAtlas(system.charts)
        fieldp = PotentialField(system)
    if chart is None and len(x0) != system.manifold.ambient_dim:
        raise ConfigError(
            f"start has {len(x0)} components; ambient points of {cfg.manifold} have "
            f"{system.manifold.ambient_dim}",
            "start",
        )
    return trace(cfg.tracer_config(), provider, fieldp, x0, chart=chart), system


def _fmt(v):
    return repr(float(v))


def write_trajectory_csv(traj, path):
    """Trajectory CSV: step, chart_id, p_i, x_i, field_norm, kernel_residual, energy."""
    if not traj.records:
        raise ValueError("empty trajectory")
    m = len(traj.records[0].point)
    n = len(traj.records[0].ambient)
    header = ["step", "chart_id"] + [f"p_{i + 1}" for i in range(m)] + [f"x_{i + 1}" for i in range(n)]
    header += ["field_norm", "kernel_residual", "energy"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for rec in traj.records:
            row = [str(rec.step), rec.chart_id]
            row += [_fmt(v) for v in rec.point] + [_fmt(v) for v in rec.ambient]
            row += [_fmt(rec.field_norm), _fmt(rec.kernel_residual)]
            row.append("" if rec.energy is None else _fmt(rec.energy))
            writer.writerow(row)


def cmd_trace(args):
    cfg = load_config(args.config).with_overrides(seed=args.seed, output=args.out)
    try:
        traj, _ = run_trace(cfg)
    except PreconditionError as exc:
        raise ConfigError(str(exc), "start") from None
    except IsoclineError as exc:
        traj = getattr(exc, "trajectory", None)
        if traj is not None and traj.records and cfg.output:
            write_trajectory_csv(traj, cfg.output)
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if cfg.output:
        write_trajectory_csv(traj, cfg.output)
    last = traj.final
    print(f"status: {traj.status}")
    print(f"steps: {last.step}")
    print(f"chart: {last.chart_id} point: {' '.join(_fmt(v) for v in last.point)}")
    print(f"ambient: {' '.join(_fmt(v) for v in last.ambient)}")
    print(f"field_norm: {_fmt(last.field_norm)}")
    if traj.converged:
        return EXIT_OK
    if traj.status == "numerical_error":
        print(traj.message, file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_NOT_CONVERGED


def parse_grid(spec):
    """``x0,x1,y0,y1,nx,ny`` to the row-major list of grid points (x fastest)."""
    parts = spec.split(",")
    if len(parts) != 6:
        raise ConfigError(f"grid spec needs 6 comma-separated values, got {spec!r}", "grid")
    try:
        x0, x1, y0, y1 = (float(v) for v in parts[:4])
        nx, ny = int(parts[4]), int(parts[5])
    except ValueError:
        raise ConfigError(f"malformed grid spec {spec!r}", "grid") from None
    if nx < 1 or ny < 1:
        raise ConfigError("grid counts must be positive", "grid")
    xs = np.linspace(x0, x1, nx)
    ys = np.linspace(y0, y1, ny)
    return [np.array([x, y]) for y in ys for x in xs]


def line_field_at(chart, fieldp, p):
    """``(L, residual)`` at chart point ``p``; ``L`` is g-aligned with the field.

    Returns ``(None, RESIDUAL_SENTINEL)`` where the line field is undefined.
    """
    try:
        frame = local_frame(chart, fieldp, p)
        Y, A = frame.covariant()
        Z, residual = line_field_direction(A)
    except (IsoclineError, np.linalg.LinAlgError, FloatingPointError):
        return None, RESIDUAL_SENTINEL
    if Z @ frame.g @ Y < 0:
        Z = -Z
    return Z, residual


def cmd_line_field(args):
    name = system_name(args.manifold, args.potential)
    system = get_system(name)
    chart = system.charts[0]
    fieldp = PotentialField(system)
    points = parse_grid(args.grid)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["p_1", "p_2", "L_1", "L_2", "residual"])
        flagged = 0
        with np.errstate(all="ignore"):
            for p in points:
                L, res = line_field_at(chart, fieldp, p)
                if L is None:
                    flagged += 1
                    L = (float("nan"), float("nan"))
                writer.writerow([_fmt(p[0]), _fmt(p[1]), _fmt(L[0]), _fmt(L[1]), _fmt(res)])
    print(f"wrote {len(points)} rows to {args.out} ({flagged} flagged) in chart {chart.chart_id}")
    return EXIT_OK


def _chart_gradient(system, chart):
    def grad(p):
        x = chart.param(p)
        return chart.jac_param(p).T @ system.energy_gradient(x)[1]

    return grad


def _locate_chart(system, x):
    atlas = AnalyticAtlas(system.charts)
    return atlas.initial(x)


def classify(eigenvalues, tol=1e-8):
    scale = max(np.max(np.abs(eigenvalues)), 1e-300)
    pos = int(np.sum(eigenvalues > tol * scale))
    neg = int(np.sum(eigenvalues < -tol * scale))
    if pos + neg < len(eigenvalues):
        return "degenerate"
    if neg == 0:
        return "sink"
    if pos == 0:
        return "source"
    return "saddle"


def polish_equilibrium(system, x):
    """Newton-refine an endpoint on the in-chart energy gradient and classify it."""
    chart, p = _locate_chart(system, x)
    grad = _chart_gradient(system, chart)
    p = newton_polish(grad, p)
    if not chart.contains(p):
        chart, p = _locate_chart(system, chart.param(p))
        grad = _chart_gradient(system, chart)
    H = field_jacobian(grad, p, 1e-5)
    eig = np.linalg.eigvalsh(0.5 * (H + H.T))
    g = chart.metric(p)
    X = -metric_inverse(g) @ grad(p)
    ambient = np.asarray(chart.param(p), dtype=float)
    return {
        "chart_id": chart.chart_id,
        "chart_point": [float(v) for v in p],
        "ambient_point": [float(v) for v in ambient],
        "field_norm": field_norm(X, g),
        "energy": float(system.energy(ambient)),
        "hessian_eigenvalues": [float(v) for v in eig],
        "classification": classify(eig),
    }


def _trace_endpoints(job):
    """Worker: trace from one start in both orientations; returns converged ambient endpoints."""
    cfg, index, start = job
    cfg = cfg.with_overrides(seed=cfg.seed + index)
    ends = []
    numerical = False
    for sign in (1.0, -1.0):
        try:
            run_cfg = cfg
            if sign < 0:
                reverse = _reverse_direction(cfg, start)
                if reverse is None:
                    continue
                run_cfg = cfg.with_overrides(Z0=reverse)
            traj, _ = run_trace(run_cfg, start=start)
        except PreconditionError:
            system = get_system(cfg.system)
            chart, x0 = _resolve_start(system, cfg, start)
            ends.append(np.asarray(x0 if chart is None else chart.param(x0), dtype=float).tolist())
            break
        except IsoclineError:
            numerical = True
            continue
        if traj.converged:
            ends.append(traj.final.ambient.tolist())
        elif traj.status == "numerical_error":
            numerical = True
    return index, ends, numerical


def _reverse_direction(cfg, start):
    """Negated initial field direction in the start chart, for the backward trace."""
    system = get_system(cfg.system)
    chart, x0 = _resolve_start(system, cfg, start)
    if cfg.mode == "learned":
        # the start chart is only known once it has been learned inside the run
        return None
    if chart is None:
        chart, x0 = AnalyticAtlas(system.charts).initial(x0)
    X = PotentialField(system).field(chart, x0)
    if not np.linalg.norm(X) > 0:
        return None
    return [float(-v) for v in X]


def load_starts(spec):
    """Starts from a JSON file (list of points) or an ``x0,x1,y0,y1,nx,ny`` grid spec."""
    if spec.count(",") == 5:
        try:
            return parse_grid(spec)
        except ConfigError:
            pass
    try:
        with open(spec, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"starts {spec!r} is neither a grid spec nor a readable file ({exc.strerror})",
                          "starts") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{spec}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}", "starts") from None
    if not isinstance(data, list) or not data:
        raise ConfigError(f"{spec}: starts must be a non-empty list of points", "starts")
    return [np.asarray(_vector(v, f"starts[{i}]")) for i, v in enumerate(data)]


def find_equilibria(cfg, starts, workers=1):
    """Trace, polish and deduplicate; returns ``(equilibria, n_converged, n_numerical)``."""
    jobs = [(cfg, i, s) for i, s in enumerate(starts)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_trace_endpoints, jobs))
    else:
        results = [_trace_endpoints(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    system = get_system(cfg.system)
    found = []
    n_conv = 0
    n_num = 0
    for index, ends, numerical in results:
        n_num += numerical
        n_conv += bool(ends)
        for x in ends:
            try:
                eq = polish_equilibrium(system, np.asarray(x))
            except (IsoclineError, np.linalg.LinAlgError) as exc:
                log.warning("polish failed for start %d: %s", index, exc)
                continue
            amb = np.asarray(eq["ambient_point"])
            dup = next((e for e in found if np.linalg.norm(np.asarray(e["ambient_point"]) - amb) < DEDUP_TOL),
                       None)
            if dup is not None:
                if index not in dup["start_indices"]:
                    dup["start_indices"].append(index)
                continue
            eq["start_indices"] = [index]
            found.append(eq)
    return found, n_conv, n_num


def cmd_equilibria(args):
    cfg = load_config(args.config).with_overrides(seed=args.seed)
    starts = load_starts(args.starts)
    found, n_conv, n_num = find_equilibria(cfg, starts, workers=args.workers)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(found, fh, indent=2)
        fh.write("\n")
    counts = {}
    for eq in found:
        counts[eq["classification"]] = counts.get(eq["classification"], 0) + 1
    summary = ", ".join(f"{v} {k}" for k, v in sorted(counts.items()))
    print(f"{len(found)} equilibria ({summary or 'none'}) from {n_conv}/{len(starts)} converged starts")
    if n_conv == 0:
        return EXIT_NUMERICAL if n_num == len(starts) else EXIT_NOT_CONVERGED
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="isocline", description="Locate equilibria by tracing isoclines.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("trace", help="trace one isocline from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("line-field", help="write the line field on a chart grid as CSV")
    p.add_argument("--manifold", required=True, choices=MANIFOLDS)
    p.add_argument("--potential", required=True, choices=POTENTIALS)
    p.add_argument("--grid", required=True, help="x0,x1,y0,y1,nx,ny")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_line_field)

    p = sub.add_parser("equilibria", help="multi-start search for equilibria")
    p.add_argument("--config", required=True)
    p.add_argument("--starts", required=True, help="JSON file of points or x0,x1,y0,y1,nx,ny")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_equilibria)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IsoclineError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
