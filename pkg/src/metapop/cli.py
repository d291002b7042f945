"""Command line entry point: ``metapop validate|analyze|simulate|sweep|critical|graph|figures``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .closed_forms import critical_dispersion
from .config import ModelConfig, bundled_config_path, bundled_names, load_config
from .dispersion import validate_stochasticity
from .errors import NumericalError, ValidationError
from .graph import to_adjacency_text, to_dot, z_transformed_graph
from .linalg import l1_norm_matrix
from .model import AnalysisReport, analyze, simulate

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3


def _num(x) -> str:
    # shortest round-trip repr keeps CSV output bitwise reproducible
    return repr(float(x))


def resolve_config(spec: str) -> ModelConfig:
    """Load a config file, or a bundled config by name."""
    path = Path(spec)
    if not path.exists():
        if spec in bundled_names():
            path = bundled_config_path(spec)
        else:
            raise ValidationError(
                f"{spec}: no such file or bundled config (bundled: {', '.join(bundled_names())})"
            )
    return load_config(path)


def thread_count() -> int:
    raw = os.environ.get("METAPOP_THREADS", "0").strip() or "0"
    try:
        k = int(raw)
    except ValueError:
        raise ValidationError(f"METAPOP_THREADS must be an integer, got {raw!r}") from None
    if k < 0:
        raise ValidationError("METAPOP_THREADS must be >= 0")
    return k if k > 0 else (os.cpu_count() or 1)


def _open_out(path):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", newline="", encoding="utf-8"), True


def _write_rows(path, header, rows):
    fh, close = _open_out(path)
    try:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        w.writerows(rows)
    finally:
        if close:
            fh.close()


# -- reports -------------------------------------------------------------------

def report_items(rep: AnalysisReport) -> list:
    """Flat (key, value) pairs in a fixed order."""
    items = [("r", rep.r), ("R0", rep.R0), ("R0_hat", rep.R0_hat)]
    items += [(f"local_R0[{i}]", v) for i, v in enumerate(rep.local_R0, start=1)]
    items += [(f"local_R0_hat[{i}]", v) for i, v in enumerate(rep.local_R0_hat, start=1)]
    items += [(f"local_r[{i}]", v) for i, v in enumerate(rep.local_r, start=1)]
    items += [("alpha", rep.alpha), ("beta", rep.beta), ("upper_bound", rep.upper_bound)]
    items += [("P_irreducible", rep.P_irreducible), ("N_bar_irreducible", rep.N_bar_irreducible)]
    if rep.newborn_distribution is not None:
        items += [(f"newborn_distribution[{i}]", v)
                  for i, v in enumerate(rep.newborn_distribution, start=1)]
    items += [("dispersion_free_R0", rep.dispersion_free_R0), ("amplified", rep.amplified)]
    return items


def report_dict(rep: AnalysisReport) -> dict:
    return {
        "r": rep.r,
        "R0": rep.R0,
        "R0_hat": rep.R0_hat,
        "local_R0": list(rep.local_R0),
        "local_R0_hat": list(rep.local_R0_hat),
        "local_r": list(rep.local_r),
        "alpha": rep.alpha,
        "beta": rep.beta,
        "upper_bound": rep.upper_bound,
        "P_irreducible": rep.P_irreducible,
        "N_bar_irreducible": rep.N_bar_irreducible,
        "newborn_distribution": None if rep.newborn_distribution is None
        else list(rep.newborn_distribution),
        "dispersion_free_R0": rep.dispersion_free_R0,
        "amplified": rep.amplified,
    }


def report_text(name: str, rep: AnalysisReport) -> str:
    def fmt(v):
        if isinstance(v, bool):
            return "yes" if v else "no"
        return f"{v:.10g}"

    lines = [f"model: {name}"] if name else []
    for key, value in report_items(rep):
        if key == "amplified":
            continue
        lines.append(f"{key}: {fmt(value)}")
    lines.append(f"dispersion amplification: {'YES' if rep.amplified else 'NO'}")
    return "\n".join(lines) + "\n"


# -- commands ------------------------------------------------------------------

def cmd_validate(args) -> int:
    cfg = resolve_config(args.config)
    model = cfg.build_model()
    dev = float(np.abs(model.D.sum(axis=0) - 1.0).max())
    print(f"model: {cfg.name}")
    print(f"stages: {cfg.m}")
    print(f"patches: {cfg.n}")
    print(f"survival norm: {l1_norm_matrix(model.S):.10g}")
    print(f"dispersal column deviation: {dev:.3g} "
          f"({'ok' if validate_stochasticity(model.D) else 'FAIL'})")
    print(f"initial population: {'yes' if cfg.initial is not None else 'no'}")
    print("valid")
    return EXIT_OK


def cmd_analyze(args) -> int:
    cfg = resolve_config(args.config)
    rep = analyze(cfg.build_model())
    if args.json:
        sys.stdout.write(json.dumps(report_dict(rep), indent=2) + "\n")
    elif args.csv:
        rows = [(k, v if isinstance(v, bool) else _num(v)) for k, v in report_items(rep)]
        _write_rows(None, ["quantity", "value"], rows)
    else:
        sys.stdout.write(report_text(cfg.name, rep))
    return EXIT_OK


def trajectory_rows(cfg: ModelConfig, steps: int, x0=None):
    x0 = cfg.initial if x0 is None else x0
    if x0 is None:
        raise ValidationError("initial: config has no [[initial]] population to simulate")
    traj = simulate(cfg.build_model(), x0, steps)
    m, n = cfg.m, cfg.n
    rows = []
    for t, x in enumerate(traj):
        grand = x.sum()
        for i in range(n):
            block = x[i * m:(i + 1) * m]
            total = block.sum()
            for k in range(m):
                rows.append((t, i + 1, k + 1, _num(block[k]), _num(total), _num(grand)))
    return rows


SIM_HEADER = ["t", "patch", "stage", "count", "patch_total", "grand_total"]


def cmd_simulate(args) -> int:
    if args.steps < 0:
        raise ValidationError("--steps must be >= 0")
    cfg = resolve_config(args.config)
    _write_rows(args.out, SIM_HEADER, trajectory_rows(cfg, args.steps))
    return EXIT_OK


def sweep_rows(cfg: ModelConfig, param: str, a: float, b: float, points: int, threads=None):
    if points < 1:
        raise ValidationError("--points must be >= 1")
    lo, hi = min(a, b), max(a, b)
    values = [lo] if points == 1 or lo == hi else list(np.linspace(lo, hi, points))
    # fail fast on a bad path before spinning up workers
    cfg.with_value(param, float(values[0]))

    def point(v):
        rep = analyze(cfg.with_value(param, float(v)).build_model())
        return (_num(v), _num(rep.R0), _num(rep.R0_hat), _num(rep.r))

    workers = min(threads or thread_count(), len(values))
    if workers <= 1:
        return [point(v) for v in values]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(point, values))


def cmd_sweep(args) -> int:
    cfg = resolve_config(args.config)
    rows = sweep_rows(cfg, args.param, args.start, args.stop, args.points)
    _write_rows(args.out, ["param", "R0", "R0_hat", "r"], rows)
    return EXIT_OK


def cmd_critical(args) -> int:
    cfg = resolve_config(args.config)
    lo, hi = args.bracket
    cfg.with_value(args.param, float(lo))
    value = critical_dispersion(lambda v: cfg.with_value(args.param, float(v)).build_model(),
                                (lo, hi), xtol=args.xtol)
    print(_num(value))
    return EXIT_OK


def cmd_graph(args) -> int:
    if not args.rho > 0:
        raise ValidationError("--rho must be positive")
    cfg = resolve_config(args.config)
    g = z_transformed_graph(cfg.build_model(), args.rho)
    text = to_adjacency_text(g) if args.format == "adjacency" else to_dot(g, cfg.name or "G")
    fh, close = _open_out(args.out)
    try:
        fh.write(text)
    finally:
        if close:
            fh.close()
    return EXIT_OK


def write_figure_data(outdir, points: int = 101, steps: int = 40) -> list:
    """Regenerate the CSV data behind the two-patch example figures."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    amp = load_config(bundled_config_path("example_3_3"))
    goby = load_config(bundled_config_path("goby_section4"))
    jobs = [
        ("example_3_3_r0_vs_d.csv", ["param", "R0", "R0_hat", "r"],
         lambda: sweep_rows(amp, "parameters.d", 0.0, 1.0, points)),
        ("example_3_3_trajectory.csv", SIM_HEADER, lambda: trajectory_rows(amp, steps)),
        ("goby_r0_vs_d.csv", ["param", "R0", "R0_hat", "r"],
         lambda: sweep_rows(goby, "parameters.d", 0.0, 1.0, points)),
        ("goby_trajectory_d_half.csv", SIM_HEADER,
         lambda: trajectory_rows(goby.with_value("parameters.d", "1/2"), steps)),
        ("goby_trajectory_d_three_quarters.csv", SIM_HEADER,
         lambda: trajectory_rows(goby.with_value("parameters.d", "3/4"), steps)),
    ]
    written = []
    for name, header, make in jobs:
        _write_rows(outdir / name, header, make())
        written.append(outdir / name)
    return written


def cmd_figures(args) -> int:
    for path in write_figure_data(args.outdir, args.points, args.steps):
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="metapop", description="Stage-structured metapopulation analysis.")
    sub = p.add_subparsers(dest="command", required=True)
    cfg_help = "config file, or the name of a bundled config"

    s = sub.add_parser("validate", help="check a config and print a summary")
    s.add_argument("config", help=cfg_help)
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("analyze", help="growth rate and net reproductive numbers")
    s.add_argument("config", help=cfg_help)
    fmt = s.add_mutually_exclusive_group()
    fmt.add_argument("--json", action="store_true")
    fmt.add_argument("--csv", action="store_true")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("simulate", help="project the initial population forward")
    s.add_argument("config", help=cfg_help)
    s.add_argument("--steps", type=int, default=20)
    s.add_argument("--out", default=None, help="CSV path (default stdout)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="R0, R0_hat and r over a parameter range")
    s.add_argument("config", help=cfg_help)
    s.add_argument("--param", required=True, help="dotted path, e.g. parameters.d")
    s.add_argument("--from", dest="start", type=float, required=True)
    s.add_argument("--to", dest="stop", type=float, required=True)
    s.add_argument("--points", type=int, default=101)
    s.add_argument("--out", default=None, help="CSV path (default stdout)")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("critical", help="parameter value where R0 crosses 1")
    s.add_argument("config", help=cfg_help)
    s.add_argument("--param", required=True, help="dotted path, e.g. parameters.d")
    s.add_argument("--bracket", nargs=2, type=float, default=(0.0, 1.0), metavar=("A", "B"))
    s.add_argument("--xtol", type=float, default=1e-12)
    s.set_defaults(func=cmd_critical)

    s = sub.add_parser("graph", help="z-transformed signal-flow graph at a given rho")
    s.add_argument("config", help=cfg_help)
    s.add_argument("--rho", type=float, required=True)
    s.add_argument("--format", choices=("dot", "adjacency"), default="dot")
    s.add_argument("--out", default=None, help="output path (default stdout)")
    s.set_defaults(func=cmd_graph)

    s = sub.add_parser("figures", help="write the CSV data for the example figures")
    s.add_argument("--outdir", default="figures")
    s.add_argument("--points", type=int, default=101)
    s.add_argument("--steps", type=int, default=40)
    s.set_defaults(func=cmd_figures)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        tag = f" [{exc.condition}]" if exc.condition != "input" else ""
        print(f"error{tag}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
