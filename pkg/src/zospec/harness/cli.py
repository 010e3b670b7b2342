"""Command line entry point: ``zospec {coeff,spectrum,fit,np,verify,export}``.

Exit codes: 0 success, 1 criterion failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from ..asymptotics import (
    DirectionFunction,
    closed_form_coefficient,
    default_bounds,
    phase_volume_mc,
    power_hamiltonian,
)
from ..npelast import LamePoint, NPError, lame_to_kappa, np_essential_spectrum, np_predicted_order
from ..quantize import write_operator
from ..spectra import CountSamples, FitError, auto_window, fit_power_law
from .config import ConfigError, load_config, model_fields
from .experiment import level_t_grid, run_level
from .verify import verify_suite

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _pair(text: str) -> tuple[float, float]:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected 'lo,hi'")
    return parts[0], parts[1]


def cmd_coeff(args) -> int:
    if args.model:
        cfg = load_config(args.model)
        a2, h, d = model_fields(cfg)
        mc = cfg.mc
    else:
        d = args.d
        a2, h = DirectionFunction.constant(d, np.eye(d)), DirectionFunction.constant(d, 1.0)
        mc = {}
    if args.method == "closed":
        rep = closed_form_coefficient(a2, h, d)
    else:
        rep = phase_volume_mc(
            power_hamiltonian(a2, h), d, args.samples or mc.get("samples", 1_000_000),
            default_bounds(a2, h), seed=args.seed if args.seed is not None else mc.get("seed", 0),
            streams=mc.get("streams", 4),
        )
    print(rep.to_json())
    return EXIT_OK


def cmd_spectrum(args) -> int:
    cfg = load_config(args.model)
    L = args.L if args.L is not None else cfg.ladder[-1][0]
    n = args.n if args.n is not None else cfg.ladder[-1][1]
    lv = run_level(cfg.model, L, n, cfg.window)
    text = lv.samples.to_csv()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    summary = {"model": cfg.model.model_id, "L": L, "n": n, "floor": lv.floor,
               "fit": None if lv.fit is None else lv.fit.to_dict(), "C_ratio": lv.C_ratio,
               "note": lv.note}
    print(json.dumps(summary, sort_keys=True), file=sys.stderr)
    return EXIT_OK


def cmd_fit(args) -> int:
    samples = CountSamples.from_csv(Path(args.samples).read_text())
    try:
        if args.window in (None, "auto"):
            if args.floor is None:
                print("--floor is required with an automatic window", file=sys.stderr)
                return EXIT_USAGE
            fit = auto_window(samples, args.floor)
        else:
            fit = fit_power_law(samples, _pair(args.window))
    except FitError as exc:
        print(f"fit failed: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(fit.to_json())
    return EXIT_OK


def cmd_np(args) -> int:
    if args.field:
        cfg = load_config(args.field) if Path(args.field).suffix else None
        field = cfg.kappa if cfg else None
        if field is None:
            print("field file needs a [kappa] section", file=sys.stderr)
            return EXIT_USAGE
        out = {"essential_spectrum": np_essential_spectrum(field, args.samples)}
        try:
            rec = np_predicted_order(field)
            out.update({"theta": rec.theta, "depends_on": rec.depends_on})
        except NPError as exc:
            out["order_error"] = str(exc)
    else:
        if args.lam is None or args.mu is None:
            print("give --lambda and --mu, or --field", file=sys.stderr)
            return EXIT_USAGE
        k = lame_to_kappa(LamePoint(args.lam, args.mu))
        out = {"kappa": k, "essential_spectrum": [[-k, -k], [0.0, 0.0], [k, k]]}
    print(json.dumps(out, sort_keys=True))
    return EXIT_OK


def cmd_verify(args) -> int:
    overrides = {}
    for item in args.override or []:
        key, _, val = item.partition("=")
        if not val:
            print(f"override must be key=value, got {item!r}", file=sys.stderr)
            return EXIT_USAGE
        overrides[key] = float(val)
    only = [int(v) for v in args.only.split(",")] if args.only else None
    ok, _ = verify_suite(only, overrides, args.json)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_export(args) -> int:
    cfg = load_config(args.model)
    L = args.L if args.L is not None else cfg.ladder[-1][0]
    n = args.n if args.n is not None else cfg.ladder[-1][1]
    op = cfg.model.operator(L, n)
    write_operator(op, args.out)
    print(json.dumps({"out": str(args.out), "size": op.size, "storage": op.storage}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="zospec", description="Spectral accumulation laboratory")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("coeff", help="predicted coefficient")
    c.add_argument("--method", choices=("closed", "mc"), default="closed")
    c.add_argument("--d", type=int, default=3, choices=(1, 2, 3))
    c.add_argument("--model", help="INI model file (a2/g and h fields)")
    c.add_argument("--samples", type=int)
    c.add_argument("--seed", type=int)
    c.set_defaults(func=cmd_coeff)

    s = sub.add_parser("spectrum", help="assemble, solve and count one grid level")
    s.add_argument("--model", required=True)
    s.add_argument("--L", type=float)
    s.add_argument("--n", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_spectrum)

    f = sub.add_parser("fit", help="power-law fit of counting samples")
    f.add_argument("--samples", required=True, help="CSV with columns t,n,flagged")
    f.add_argument("--window", default="auto", help="'lo,hi' or 'auto'")
    f.add_argument("--floor", type=float, help="resolution floor for the automatic window")
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("np", help="elastic Neumann-Poincare symbol data")
    e.add_argument("--lambda", dest="lam", type=float)
    e.add_argument("--mu", type=float)
    e.add_argument("--field", help="INI file with a [kappa] section")
    e.add_argument("--samples", type=int, default=1000)
    e.set_defaults(func=cmd_np)

    v = sub.add_parser("verify", help="run the acceptance checks")
    v.add_argument("--only", help="comma-separated criterion numbers")
    v.add_argument("--json", help="write the JSON report here")
    v.add_argument("--override", action="append", help="key=value, e.g. c1.reference_C=0.05")
    v.set_defaults(func=cmd_verify)

    x = sub.add_parser("export", help="write an assembled operator in the binary layout")
    x.add_argument("--model", required=True)
    x.add_argument("--L", type=float)
    x.add_argument("--n", type=int)
    x.add_argument("--out", required=True)
    x.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, NPError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
