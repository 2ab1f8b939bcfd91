"""Command-line entry point.

Exit codes: 0 all verdicts pass, 2 a statistical verdict failed,
1 configuration or numerical error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .control import enumerate_stationary, value_function
from .errors import MfgLabError
from .experiments import ScenarioConfig, build_grid, build_spec, replay_row, run_scenario
from .field import (
    export_field_csv_slice,
    load_field_binary,
    save_field_binary,
    solve_field,
    stable_time_grid,
)

EXIT_OK, EXIT_ERROR, EXIT_VERDICT = 0, 1, 2


def _add_common(p):
    p.add_argument("--seed", type=int, default=None, help="override run.seed")
    p.add_argument("--out-dir", default=".", help="directory for CSV/plot artifacts")
    p.add_argument("--plots", action="store_true", help="emit SVG plots (needs matplotlib)")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads; results are independent of this")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mfglab",
                                 description="mean-field selection experiments")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario config (E1-E6)")
    p.add_argument("config")
    _add_common(p)

    p = sub.add_parser("oc-enumerate", help="multi-start shooting on a config's model")
    p.add_argument("config")
    _add_common(p)

    p = sub.add_parser("oc-value", help="value of the limit control problem at nu0")
    p.add_argument("config")
    p.add_argument("--nu0", type=float, default=None)
    _add_common(p)

    p = sub.add_parser("field", help="decoupling-field operations")
    fsub = p.add_subparsers(dest="field_command", required=True)
    ps = fsub.add_parser("solve", help="solve and save the field binary")
    ps.add_argument("config")
    ps.add_argument("--N", type=int, default=None)
    ps.add_argument("--eps", type=float, default=None)
    ps.add_argument("--out", required=True)
    _add_common(ps)
    pe = fsub.add_parser("export", help="CSV slice of a saved field")
    pe.add_argument("binary")
    pe.add_argument("--time-index", type=int, default=0)
    pe.add_argument("--out", required=True)
    _add_common(pe)

    p = sub.add_parser("replay", help="re-run one report row and compare")
    p.add_argument("config")
    p.add_argument("report_csv")
    p.add_argument("--row", type=int, default=0)
    _add_common(p)
    return ap


def _load_config(path: str, seed_override) -> ScenarioConfig:
    cfg = ScenarioConfig.from_file(path)
    if seed_override is not None:
        raw = dict(cfg.raw)
        raw["run.seed"] = str(seed_override)
        return ScenarioConfig.from_text(
            "".join(f"{k} = {v}\n" for k, v in raw.items()))
    return cfg


def _maybe_plot(rep, out_dir):
    try:
        import matplotlib
        matplotlib.use("svg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("plots requested but matplotlib is not installed; skipping",
              file=sys.stderr)
        return
    xcol = rep.columns[0]
    ycols = [c for c in rep.columns[3:] if any(
        isinstance(r[c], float) for r in rep.rows)]
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = [str(r[xcol]) for r in rep.rows]
    for c in ycols:
        ys = [r[c] if isinstance(r[c], float) else np.nan for r in rep.rows]
        ax.plot(xs, ys, marker="o", label=c)
    ax.set_xlabel(xcol)
    ax.legend(fontsize=8)
    ax.set_title(f"scenario {rep.scenario}")
    path = os.path.join(out_dir, f"{rep.scenario}_{rep.config_hash}.svg")
    fig.savefig(path)
    plt.close(fig)
    print(f"wrote {path}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except MfgLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def _dispatch(args) -> int:
    if args.command == "run":
        cfg = _load_config(args.config, args.seed)
        rep = run_scenario(cfg)
        os.makedirs(args.out_dir, exist_ok=True)
        csv_path = os.path.join(args.out_dir,
                                f"{rep.scenario}_{rep.config_hash}.csv")
        rep.write_csv(csv_path)
        print(rep.summary())
        print(f"wrote {csv_path}")
        if args.plots:
            _maybe_plot(rep, args.out_dir)
        return EXIT_OK if rep.passed else EXIT_VERDICT

    if args.command == "oc-enumerate":
        cfg = _load_config(args.config, args.seed)
        spec = build_spec(cfg)
        sset = enumerate_stationary(spec, 0.0, spec.nu0, threads=args.threads)
        print(f"{len(sset.solutions)} stationary solution(s), "
              f"min cost {sset.min_cost:.8g}, multiplicity {sset.multiplicity}")
        for s in sset.solutions:
            print(f"  eta0 {np.array2string(s.eta0, precision=6)}  "
                  f"m_T {np.array2string(s.m[-1], precision=6)}  "
                  f"cost {s.cost:.8g}  {s.classification}")
        return EXIT_OK

    if args.command == "oc-value":
        cfg = _load_config(args.config, args.seed)
        spec = build_spec(cfg)
        nu0 = spec.nu0 if args.nu0 is None else np.full(spec.dim, args.nu0)
        v = value_function(spec, 0.0, nu0)
        print(f"v(0, {np.array2string(nu0, precision=6)}) = {v:.10g}")
        return EXIT_OK

    if args.command == "field":
        if args.field_command == "solve":
            if (args.N is None) == (args.eps is None):
                print("error: pass exactly one of --N / --eps", file=sys.stderr)
                return EXIT_ERROR
            cfg = _load_config(args.config, args.seed)
            spec = build_spec(cfg)
            grid = build_grid(cfg, spec)
            tgrid = stable_time_grid(spec, grid, N=args.N, eps=args.eps)
            fld = solve_field(spec, grid, tgrid, N=args.N, eps=args.eps)
            save_field_binary(fld, args.out)
            print(f"wrote {args.out} ({tgrid.steps} levels, grid {grid.shape})")
            return EXIT_OK
        fld = load_field_binary(args.binary)
        export_field_csv_slice(fld, args.out, time_index=args.time_index)
        print(f"wrote {args.out}")
        return EXIT_OK

    if args.command == "replay":
        cfg = _load_config(args.config, args.seed)
        ok = replay_row(cfg, args.report_csv, args.row)
        print("replay match" if ok else "replay MISMATCH")
        return EXIT_OK if ok else EXIT_VERDICT

    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
