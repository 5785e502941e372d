"""Command-line front end: ``bhacs {minimize,verify,glue,chern,scan,plot}``.

Exit codes: 0 success (converged / constraints pass), 2 optimizer stall or
iteration limit, 1 any error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, build_seed
from .geometry import PAIRS, Grid
from .snapshot import SnapshotFormatError, parse_metric_spec, read_snapshot, write_snapshot

log = logging.getLogger("bhacs")

EXIT_OK, EXIT_ERROR, EXIT_STALL = 0, 1, 2
PERIOD_NAMES = [f"p{a + 1}{b + 1}" for a, b in PAIRS]


class _Out:
    def __init__(self, quiet: bool):
        self.quiet = quiet

    def __call__(self, *args):
        if not self.quiet:
            print(*args, flush=True)


def _thread_limit(threads: int | None):
    if threads is None:
        env = os.environ.get("BHACS_THREADS", "").strip()
        threads = int(env) if env else None
    if threads is None:
        return nullcontext()
    if threads < 1:
        raise ValueError("thread count must be positive")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=threads)


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    return cfg


def _out_dir(args, cfg: RunConfig) -> Path:
    out = Path(args.out or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fmt(x: float) -> str:
    return f"{x:.6e}"


def _write_periods_csv(path: Path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration"] + PERIOD_NAMES)
        for it, p in rows:
            w.writerow([it] + [repr(float(v)) for v in p])


# ---------------------------------------------------------------------------
# subcommands


def cmd_minimize(args, out) -> int:
    from .energy import residual_strong, residual_weak, TestBattery
    from .minimize import minimize, write_trace_csv
    from .topology import periods

    cfg = _load_config(args)
    metric = parse_metric_spec(cfg.metric)
    J0 = build_seed(cfg)
    outdir = _out_dir(args, cfg)
    flat = metric.is_flat
    period_rows = []
    meta = {"command": "minimize", "seed": cfg.seed, "config": cfg.to_text()}

    def checkpoint(it, J):
        p = periods(J, metric) if flat else np.full(6, np.nan)
        if period_rows and period_rows[-1][0] == it:
            period_rows.pop()
        period_rows.append((it, p))
        write_snapshot(outdir / f"checkpoint_{it:06d}.bhacs", J, metric,
                       {**meta, "iteration": it}, periods=p)

    if flat:
        period_rows.append((0, periods(J0, metric)))
    res = minimize(J0, metric, cfg.optimizer(), checkpoint=checkpoint)
    J = res.J_final.values
    final_periods = period_rows[-1][1] if period_rows else np.full(6, np.nan)
    last = res.rows[-1]
    write_snapshot(outdir / "final.bhacs", J, metric, {**meta, "status": res.status,
                                                       "grad_tol": cfg.grad_tol},
                   e2=last.e2, e1=last.e1, periods=final_periods)
    write_trace_csv(res.rows, outdir / "trace.csv")
    if flat:
        _write_periods_csv(outdir / "periods.csv", period_rows)
    strong = residual_strong(J, metric) if metric.is_constant else float("nan")
    weak = residual_weak(J, metric, TestBattery(Grid(cfg.n), cfg.weak_tests)) if metric.is_constant else float("nan")
    summary = {
        "status": res.status,
        "iterations": res.iterations,
        "e2": last.e2,
        "e1": last.e1,
        "grad_norm": last.grad_norm,
        "residual_commutator": last.residual_commutator,
        "residual_strong": strong,
        "residual_weak_max": weak,
    }
    summary.update({k: float(v) for k, v in zip(PERIOD_NAMES, final_periods)})
    with open(outdir / "summary.txt", "w") as fh:
        for k, v in summary.items():
            fh.write(f"{k} = {v}\n")
    out(f"status: {res.status} ({res.message})")
    for k, v in summary.items():
        if k != "status":
            out(f"{k}: {v}")
    return EXIT_OK if res.converged else EXIT_STALL


def cmd_verify(args, out) -> int:
    from .acs import constraint_residuals
    from .energy import TestBattery, energy_e1, energy_e2, residual_strong, residual_weak
    from .topology import periods

    snap = read_snapshot(args.snapshot)
    metric = parse_metric_spec(snap.metric_spec)
    J = snap.J
    sq, skew, iso = constraint_residuals(J, metric)
    worst = float(max(sq.max(), skew.max(), iso.max()))
    out(f"grid: n = {snap.n}, metric = {snap.metric_spec}")
    out(f"violation |J^2+id|: {_fmt(float(sq.max()))}")
    out(f"violation |gJ+J^T g|: {_fmt(float(skew.max()))}")
    out(f"violation |J^T g J-g|: {_fmt(float(iso.max()))}")
    ok = worst <= args.tol
    rep = energy_e2(J, metric, residuals=False, densities=False)
    out(f"e2: {_fmt(rep.e2)}")
    out(f"e1: {_fmt(energy_e1(J, metric))}")
    out(f"residual_commutator: {_fmt(rep.residual_commutator)}")
    if metric.is_constant:
        out(f"residual_strong: {_fmt(residual_strong(J, metric))}")
        out(f"residual_weak_max: {_fmt(residual_weak(J, metric, TestBattery(Grid(snap.n), args.tests)))}")
    if metric.is_flat:
        out("periods: " + " ".join(f"{k}={v:+.6f}" for k, v in zip(PERIOD_NAMES, periods(J, metric))))
    header_gap = abs(rep.e2 - snap.e2)
    out(f"header e2 mismatch: {_fmt(header_gap)}")
    out("constraints: " + ("pass" if ok else f"FAIL (worst {worst:.3g} > {args.tol:g})"))
    return EXIT_OK if ok else EXIT_ERROR


def cmd_chern(args, out) -> int:
    from .topology import periods

    snap = read_snapshot(args.snapshot)
    metric = parse_metric_spec(snap.metric_spec)
    p = periods(snap.J, metric)
    for k, v in zip(PERIOD_NAMES, p):
        out(f"{k} {v:+.9f}")
    if args.out:
        d = Path(args.out)
        d.mkdir(parents=True, exist_ok=True)
        _write_periods_csv(d / "periods.csv", [(0, p)])
    return EXIT_OK


def cmd_scan(args, out) -> int:
    from .minimize import concentration_scan

    cfg = _load_config(args)
    snap = read_snapshot(args.snapshot)
    metric = parse_metric_spec(snap.metric_spec)
    radii = tuple(float(r) for r in args.radii.split(",")) if args.radii else cfg.radii
    eps0 = args.eps0 if args.eps0 is not None else cfg.scan_eps0
    rep = concentration_scan(snap.J, metric, radii, eps0, stride=cfg.scan_stride or None)
    out(f"centers: {len(rep.centers)}, radii: {list(rep.radii)}, eps0: {eps0:g}")
    out(f"max F per radius: {[float(v) for v in rep.f_values.max(axis=0)]}")
    out(f"flagged: {rep.flagged}")
    if args.out:
        d = Path(args.out)
        d.mkdir(parents=True, exist_ok=True)
        with open(d / "scan.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i1", "i2", "i3", "i4"] + [f"F_r{r:g}" for r in rep.radii])
            for c, row in zip(rep.centers, rep.f_values):
                w.writerow(list(c) + [repr(float(v)) for v in row])
    return EXIT_OK


def cmd_glue(args, out) -> int:
    from .glue import GlueProfile, MollifierKernel, glue

    cfg = _load_config(args)
    outer = read_snapshot(args.outer)
    inner = read_snapshot(args.inner)
    if outer.n != inner.n or outer.metric_spec != inner.metric_spec:
        raise ValueError("outer and inner snapshots differ in grid or metric")
    metric = parse_metric_spec(outer.metric_spec)
    profile = GlueProfile.build(args.j or cfg.glue_j)
    center = tuple(int(c) for c in args.center.split(",")) if args.center else (
        tuple(cfg.glue_center) if cfg.glue_center else (outer.n // 2,) * 4)
    res = glue(outer.J, inner.J, profile, MollifierKernel(), center, args.scale or cfg.glue_scale,
               metric, eps0=cfg.glue_eps0, closeness=cfg.glue_closeness)
    outdir = _out_dir(args, cfg)
    write_snapshot(outdir / "glued.bhacs", res.J_glued.values, metric,
                   {"command": "glue", "outer": str(args.outer), "inner": str(args.inner),
                    "annulus_energy": res.annulus_energy})
    out(f"annulus_energy: {_fmt(res.annulus_energy)}")
    out(f"mu_neighborhood: {_fmt(res.mu_neighborhood)}")
    out(f"measured_constant: {res.constant:.6g}")
    out(f"w14_distance: {_fmt(res.w14_distance)}")
    out(f"ring_points: {res.ring_points}, mollified_points: {res.mollified_points}")
    return EXIT_OK


PLOT_TEMPLATE = """# gnuplot script generated by bhacs plot
set terminal pngcairo size 1000,700
set output '{png}'
set datafile separator ','
set multiplot layout {rows},1
set logscale y
set xlabel 'iteration'
set title 'energy trace'
$trace << EOD
{trace}
EOD
plot $trace using 1:2 skip 1 with lines title 'e2', \\
     $trace using 1:4 skip 1 with lines title '|grad|', \\
     $trace using 1:6 skip 1 with lines title 'commutator residual'
{periods_block}unset multiplot
"""

PERIODS_TEMPLATE = """unset logscale y
set title 'Chern periods'
$periods << EOD
{periods}
EOD
plot {curves}
"""


def cmd_plot(args, out) -> int:
    trace = Path(args.trace).read_text().strip()
    if not trace.startswith("iteration"):
        raise ValueError(f"{args.trace} is not a trace CSV")
    periods_block = ""
    if args.periods:
        ptxt = Path(args.periods).read_text().strip()
        curves = ", \\\n     ".join(f"$periods using 1:{k + 2} skip 1 with linespoints title '{name}'"
                                    for k, name in enumerate(PERIOD_NAMES))
        periods_block = PERIODS_TEMPLATE.format(periods=ptxt, curves=curves)
    target = Path(args.output)
    script = PLOT_TEMPLATE.format(png=target.with_suffix(".png").name, rows=2 if args.periods else 1,
                                  trace=trace, periods_block=periods_block)
    target.write_text(script)
    out(f"wrote {target}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    def common_flags(parser, suppress: bool):
        # subcommands repeat the global flags without overriding values given before them
        kw = {"default": argparse.SUPPRESS} if suppress else {}
        parser.add_argument("--config", metavar="PATH", help="key = value configuration file", **kw)
        parser.add_argument("--out", metavar="DIR", help="output directory (overrides config 'output')", **kw)
        parser.add_argument("--threads", type=int, metavar="N",
                            help="BLAS thread limit (default: $BHACS_THREADS)", **kw)
        parser.add_argument("--quiet", action="store_true", help="suppress informational output", **kw)
        return parser

    common = common_flags(argparse.ArgumentParser(add_help=False), suppress=True)
    p = common_flags(argparse.ArgumentParser(prog="bhacs", description=__doc__.splitlines()[0]), False)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("minimize", parents=[common], help="minimize E2 from a configured seed")
    s.set_defaults(func=cmd_minimize)

    s = sub.add_parser("verify", parents=[common], help="report constraints, energies and residuals")
    s.add_argument("snapshot")
    s.add_argument("--tol", type=float, default=1e-9)
    s.add_argument("--tests", type=int, default=32, help="size of the weak-residual test battery")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("glue", parents=[common], help="glue an inner snapshot into an outer one")
    s.add_argument("outer")
    s.add_argument("inner")
    s.add_argument("--j", type=int)
    s.add_argument("--scale", type=float)
    s.add_argument("--center", help="grid indices i1,i2,i3,i4")
    s.set_defaults(func=cmd_glue)

    s = sub.add_parser("chern", parents=[common], help="print the six Chern periods")
    s.add_argument("snapshot")
    s.set_defaults(func=cmd_chern)

    s = sub.add_parser("scan", parents=[common], help="energy concentration scan")
    s.add_argument("snapshot")
    s.add_argument("--radii", help="comma separated radii")
    s.add_argument("--eps0", type=float)
    s.set_defaults(func=cmd_scan)

    s = sub.add_parser("plot", parents=[common], help="emit a gnuplot script for a trace CSV")
    s.add_argument("trace")
    s.add_argument("--periods", help="periods CSV written by minimize")
    s.add_argument("-o", "--output", default="plot.gp")
    s.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    out = _Out(args.quiet)
    try:
        with _thread_limit(args.threads):
            return args.func(args, out)
    except (ConfigError, SnapshotFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError, RuntimeError, ArithmeticError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
