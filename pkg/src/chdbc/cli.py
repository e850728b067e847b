"""Command-line entry point: ``chdbc run | conditions | convergence | compare``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .convergence import ConvergenceError, RefinementLadder, interp_space, refine_and_measure
from .energy import refined_bound, stability_bound, timestep_condition
from .stepper import SCHEMES, SimulationError, run

log = logging.getLogger("chdbc")

TRACE_COLUMNS = (
    "step",
    "time",
    "mass",
    "energy_Jd",
    "ledger",
    "diss_bulk",
    "diss_b0",
    "diss_bK",
    "U0",
    "UK",
    "min_U",
    "max_U",
    "fp_iters",
)
LEDGER_COLUMNS = ("step", "time", "mass_drift", "energy_ledger", "neumann_ledger")


def fmt(value) -> str:
    """17 significant digits, enough to round-trip any binary64 value."""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return format(float(value), ".17g")


class _LedgerWriter:
    """Observer that streams trace, ledger and snapshot rows while a run proceeds.

    Ledgers are accumulated in the same order as :func:`chdbc.energy.energy_ledger`
    so the streamed values agree with the post-hoc ones bit for bit.
    """

    def __init__(self, cfg: RunConfig, trace_fh, ledger_fh, snap_fh, stride: int, n_steps: int):
        self.cfg = cfg
        self.dt = cfg.dt
        self.x = cfg.grid().x
        self.trace = csv.writer(trace_fh, lineterminator="\n")
        self.ledger = csv.writer(ledger_fh, lineterminator="\n")
        self.snap = csv.writer(snap_fh, lineterminator="\n") if snap_fh else None
        self.stride = stride
        self.n_steps = n_steps
        self.trace.writerow(TRACE_COLUMNS)
        self.ledger.writerow(LEDGER_COLUMNS)
        if self.snap:
            self.snap.writerow(("step", "time", "x", "U"))
        self.cum = 0.0
        self.cum_sym = 0.0
        self.max_abs_ledger = 0.0
        self.max_mass_drift = 0.0
        self.max_iters = 0

    def __call__(self, n, U_ext, P, rec):
        if n == 0:
            self.J0, self.Jbar0, self.M0 = rec.energy, rec.neumann_energy, rec.mass
        else:
            self.cum += rec.diss_b0 + rec.diss_bK + rec.diss_bulk
            self.cum_sym += rec.diss_bulk_sym
        e_ledger = rec.energy + self.cum * self.dt - self.J0
        n_ledger = rec.neumann_energy + self.cum_sym * self.dt - self.Jbar0
        ledger = n_ledger if self.cfg.scheme == "neumann" else e_ledger
        drift = rec.mass - self.M0
        self.max_abs_ledger = max(self.max_abs_ledger, abs(ledger))
        self.max_mass_drift = max(self.max_mass_drift, abs(drift))
        self.max_iters = max(self.max_iters, rec.fp_iters)
        self.trace.writerow(
            [
                fmt(v)
                for v in (
                    rec.step,
                    rec.time,
                    rec.mass,
                    rec.energy,
                    ledger,
                    rec.diss_bulk,
                    rec.diss_b0,
                    rec.diss_bK,
                    rec.U0,
                    rec.UK,
                    rec.min_U,
                    rec.max_U,
                    rec.fp_iters,
                )
            ]
        )
        self.ledger.writerow([fmt(v) for v in (rec.step, rec.time, drift, e_ledger, n_ledger)])
        if self.snap and (n % self.stride == 0 or n == self.n_steps):
            for xk, uk in zip(self.x, U_ext[1:-1]):
                self.snap.writerow((fmt(rec.step), fmt(rec.time), fmt(xk), fmt(uk)))


def _outputs(cfg: RunConfig, out_dir: Path):
    def pick(path, suffix):
        return Path(path) if path else out_dir / f"{cfg.name}_{suffix}.csv"

    return pick(cfg.trace_path, "trace"), pick(cfg.ledger_path, "ledger"), pick(cfg.snapshot_path, "snapshots")


def run_command(cfg: RunConfig, out_dir: Path = Path("."), snapshots: bool = True) -> int:
    """Run a configuration and write its CSV outputs; returns the exit status."""
    trace_p, ledger_p, snap_p = _outputs(cfg, out_dir)
    for p in (trace_p, ledger_p, snap_p):
        p.parent.mkdir(parents=True, exist_ok=True)
    params = cfg.params()
    with open(trace_p, "w", encoding="utf-8", newline="") as tf, open(
        ledger_p, "w", encoding="utf-8", newline=""
    ) as lf, (open(snap_p, "w", encoding="utf-8", newline="") if snapshots else _Null()) as sf:
        writer = _LedgerWriter(cfg, tf, lf, sf if snapshots else None, cfg.stride, cfg.steps)
        try:
            run(cfg.initial_state(), params, cfg.steps, observers=[writer])
        except SimulationError as exc:
            print(f"error: {exc}", file=sys.stderr)
            print(f"partial trace with {exc.trace.steps_completed} steps written to {trace_p}", file=sys.stderr)
            return 1
    print(f"trace: {trace_p}")
    print(f"ledger: {ledger_p}")
    if snapshots:
        print(f"snapshots: {snap_p}")
    print(f"steps: {cfg.steps}")
    print(f"max_abs_ledger: {fmt(writer.max_abs_ledger)}")
    print(f"max_mass_drift: {fmt(writer.max_mass_drift)}")
    print(f"max_fp_iters: {writer.max_iters}")
    return 0


class _Null:
    def __enter__(self):
        return None

    def __exit__(self, *exc):
        return False


def conditions_report(cfg: RunConfig) -> dict[str, object]:
    """A priori bounds and the solvability condition for a configuration."""
    grid = cfg.grid()
    params = cfg.params()
    U0 = cfg.initial_state()
    bounds = stability_bound(U0, grid, params.pot, cfg.gamma)
    refined = refined_bound(cfg.ic, grid, params.pot, cfg.gamma)
    cond = timestep_condition(bounds, params.pot, cfg.gamma, cfg.dt, grid.L)
    return {
        "B0": bounds.B0,
        "B0_tilde": bounds.B0_tilde,
        "refined_bound": refined.value,
        "tcon_lhs": cond.lhs,
        "tcon_margin": cond.margin,
        "tcon_status": "satisfied" if cond.satisfied else "not satisfied",
        "closed_form_lhs": cond.closed_form_lhs,
        "closed_form_margin": 1.0 - cond.closed_form_lhs,
        "closed_form_status": "satisfied" if cond.closed_form_satisfied else "not satisfied",
    }


def conditions_command(cfg: RunConfig, csv_path: Path | None = None) -> int:
    rows = conditions_report(cfg)
    lines = ["quantity,value"] + [f"{k},{v if isinstance(v, str) else fmt(v)}" for k, v in rows.items()]
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if csv_path:
        Path(csv_path).write_text(text, encoding="utf-8")
    return 0


def convergence_command(
    cfg: RunConfig,
    levels: int,
    reference_factor: int | None = 4,
    scheme: str | None = None,
    csv_path: Path | None = None,
) -> int:
    """Self-convergence ladder whose base level is the configuration itself.

    The final time is ``cfg.steps * cfg.dt``.
    """
    ladder = RefinementLadder(cfg.K, cfg.dt, levels, cfg.steps * cfg.dt, reference_factor)
    try:
        report = refine_and_measure(ladder, cfg.params(), cfg.ic, scheme=scheme or cfg.scheme)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    lines = ["level,K,dt,error,order"]
    for m, (K, dt, e) in enumerate(zip(report.K, report.dt, report.errors)):
        order = report.orders[m] if m < len(report.orders) else float("nan")
        lines.append(",".join((str(m), str(K), fmt(dt), fmt(e), fmt(order))))
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    print(f"# scheme={report.scheme} reference_K={report.reference_K} finest_order={fmt(report.finest_order())}")
    if not report.monotone:
        print("# warning: errors are not monotone along the ladder")
    if csv_path:
        Path(csv_path).write_text(text, encoding="utf-8")
    return 0


def _on_grid(values, K_from: int, grid_to):
    """Restrict a final state onto the nodes of ``grid_to``."""
    from .grid import Grid

    src = Grid(grid_to.L, K_from)
    if K_from % grid_to.K == 0:
        return np.asarray(values)[:: K_from // grid_to.K]
    return interp_space(values, src, grid_to.x)


COMPARE_FIELDS = ("mass", "energy", "U0", "UK", "min_U", "max_U")


def compare_command(cfg_a: RunConfig, cfg_b: RunConfig, csv_path: Path | None = None) -> int:
    """Run two configurations from their initial data and write a joint trace.

    Both must share ``L``, ``dt`` and ``steps``.  The final-state difference is
    measured on the coarser grid (injection when the node sets nest, linear
    interpolation otherwise).
    """
    for key in ("L", "dt", "steps"):
        if getattr(cfg_a, key) != getattr(cfg_b, key):
            print(f"error: configurations differ in {key}", file=sys.stderr)
            return 2
    traces = []
    for cfg in (cfg_a, cfg_b):
        try:
            traces.append(run(cfg.initial_state(), cfg.params(), cfg.steps))
        except SimulationError as exc:
            print(f"error in {cfg.name}: {exc}", file=sys.stderr)
            return 1
    ta, tb = traces
    coarse, fine = sorted(((cfg_a, ta), (cfg_b, tb)), key=lambda p: p[0].K)
    ua = coarse[1].final_state[1:-1]
    ub = _on_grid(fine[1].final_state[1:-1], fine[0].K, coarse[0].grid())
    diff = float(np.max(np.abs(ua - ub)))
    header = ["step", "time"] + [f"a_{f}" for f in COMPARE_FIELDS] + [f"b_{f}" for f in COMPARE_FIELDS]
    lines = [",".join(header)]
    for ra, rb in zip(ta.records, tb.records):
        row = [fmt(ra.step), fmt(ra.time)]
        row += [fmt(getattr(ra, f)) for f in COMPARE_FIELDS]
        row += [fmt(getattr(rb, f)) for f in COMPARE_FIELDS]
        lines.append(",".join(row))
    text = "\n".join(lines) + "\n"
    if csv_path:
        Path(csv_path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    print(f"final_linf_difference,{fmt(diff)}")
    return 0


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chdbc", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a configuration and write CSV outputs")
    p.add_argument("config")
    p.add_argument("--steps", type=int, help="override the number of steps")
    p.add_argument("--out-dir", type=Path, default=Path("."))
    p.add_argument("--no-snapshots", action="store_true")

    p = sub.add_parser("conditions", help="print a priori bounds and the time-step condition")
    p.add_argument("config")
    p.add_argument("--csv", type=Path)

    p = sub.add_parser("convergence", help="self-convergence ladder from the configured base level")
    p.add_argument("config")
    p.add_argument("--levels", type=int, required=True)
    p.add_argument(
        "--reference-factor",
        type=int,
        default=4,
        help="reference run this many times finer than the finest level; 0 uses the finest level",
    )
    p.add_argument("--scheme", choices=SCHEMES)
    p.add_argument("--csv", type=Path)

    p = sub.add_parser("compare", help="run two configurations side by side")
    p.add_argument("config_a")
    p.add_argument("config_b")
    p.add_argument("--steps", type=int)
    p.add_argument("--csv", type=Path)
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        if args.command == "run":
            cfg = load_config(args.config)
            if args.steps is not None:
                cfg = replace(cfg, steps=args.steps)
            return run_command(cfg, args.out_dir, snapshots=not args.no_snapshots)
        if args.command == "conditions":
            return conditions_command(load_config(args.config), args.csv)
        if args.command == "convergence":
            ref = args.reference_factor or None
            return convergence_command(load_config(args.config), args.levels, ref, args.scheme, args.csv)
        cfg_a, cfg_b = load_config(args.config_a), load_config(args.config_b)
        if args.steps is not None:
            cfg_a, cfg_b = replace(cfg_a, steps=args.steps), replace(cfg_b, steps=args.steps)
        return compare_command(cfg_a, cfg_b, args.csv)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
