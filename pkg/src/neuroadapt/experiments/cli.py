"""Command-line entry point: ``neuroadapt <command> ...``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .. import analysis as an
from ..errors import ConfigError, DimensionError, InvalidKineticsError, NumericalError
from ..integrator import read_csv
from ..model import list_presets
from .config import list_scenarios, load_scenario
from .scenarios import run_scenario

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2


def _run(args, task):
    cfg = load_scenario(args.config).with_overrides(seed=args.seed, dt_ms=args.dt)
    out = Path(args.out_dir) / cfg.name if args.out_dir else Path("runs") / cfg.name
    res = run_scenario(cfg, out, task=task)
    s = res.summary
    print(f"{cfg.name}: {task} done in {s['wall_time_ms'] / 1e3:.1f} s -> {out}")
    for name, err in (s.get("rel_errors") or {}).items():
        print(f"  {name:>18s} final={s['params_final'][name]:.6g} "
              f"true={s['params_true'][name]:.6g} rel_err={err:.3g}")
    if "landscape" in s:
        print(f"  max cost jump between {s['landscape']['max_jump_interval']}")
    print(f"  spikes: {s['spikes']}")
    return EXIT_OK


def _diagnose(args):
    """Re-derive diagnostics from an ``estimates.csv`` or a run directory."""
    path = Path(args.trajectory)
    run_dir = path if path.is_dir() else path.parent
    est = run_dir / "estimates.csv"
    if not est.exists():
        raise ConfigError(f"no estimates.csv in {run_dir}")
    report = {}
    diag = run_dir / "diagnostics.json"
    if diag.exists():
        d = json.loads(diag.read_text())
        blocks = d.get("neurons") or [d]
        report["pe"] = [b["pe"]["is_pe"] if b.get("pe") else None for b in blocks]
        report["p_bounds"] = [b["p_bounds"]["passed"] if b.get("p_bounds") else None
                              for b in blocks]
        report["P_positive_definite"] = [b.get("P_positive_definite") for b in blocks]
    names, data = read_csv(est)
    t = data[:, names.index("t")]
    est_cols = [k for k, n in enumerate(names) if "true:" + n in names]
    err = np.column_stack([data[:, k] - data[:, names.index("true:" + names[k])]
                           for k in est_cols])
    if t.size > 1:
        report["rate_fit"] = an.convergence_rate_fit(t, err).to_dict()
    report["final_abs_error"] = float(np.linalg.norm(err[-1]))
    print(json.dumps(an._jsonable(report), indent=2))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="neuroadapt",
                                description="Run estimation scenarios for conductance-based models.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("simulate", "simulate the plant only"),
                        ("estimate", "simulate and run the configured estimator"),
                        ("landscape", "output-error cost landscape")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config", help="shipped scenario name or path to a YAML file")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--dt", type=float, default=None, help="integration step in ms")
        sp.add_argument("--out-dir", default=None)
    d = sub.add_parser("diagnose", help="diagnostics of a finished estimation run")
    d.add_argument("trajectory", help="run directory or a CSV file inside it")
    sub.add_parser("list-presets", help="list model presets")
    sub.add_parser("list-scenarios", help="list shipped scenarios")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "list-presets":
            print("\n".join(list_presets()))
            return EXIT_OK
        if args.command == "list-scenarios":
            print("\n".join(list_scenarios()))
            return EXIT_OK
        if args.command == "diagnose":
            return _diagnose(args)
        return _run(args, args.command)
    except (ConfigError, DimensionError, InvalidKineticsError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
