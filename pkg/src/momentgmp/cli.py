"""Command-line entry point: ``momentgmp {decompose,rates,sweep,hausdorff,replay}``.

Every command that writes files also writes ``<out>.manifest.json`` with the
argument vector and the fully resolved configuration; ``momentgmp replay``
re-runs a manifest.  Exit codes: 0 success, 1 error, 2 soft failure
(decomposition not certified).
"""
from __future__ import annotations

import argparse
import json
import os
import platform
import sys
import warnings
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .conic import SolverSettings

EXIT_OK, EXIT_ERROR, EXIT_SOFT = 0, 1, 2


class CLIError(Exception):
    pass


def _orders(text: str) -> list[int]:
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..")
        return list(range(int(lo), int(hi) + 1, 2))
    return [int(v) for v in text.split(",") if v]


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _manifest(args, argv, inputs, config) -> dict:
    return {
        "command": args.command,
        "argv": list(argv),
        "inputs": [str(p) for p in inputs],
        "config": config,
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "threads": os.environ.get("MOMENTGMP_THREADS", "default"),
    }


def _settings(args) -> SolverSettings:
    return SolverSettings(eps=args.tol, max_iter=args.max_iter)


def _add_common(p, tol=1e-8):
    p.add_argument("--tol", type=float, default=tol, help="solver tolerance (relative residuals)")
    p.add_argument("--max-iter", type=int, default=200000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output path prefix (or CSV file)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="momentgmp", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    d = sub.add_parser("decompose", help="decompose a homogeneous tensor")
    d.add_argument("tensor", help="homogeneous polynomial JSON")
    d.add_argument("--mode", choices=["positive", "signed"], default="positive")
    d.add_argument("--order", type=int, default=None, help="relaxation order (default 12 for quartics)")
    d.add_argument("--psi-halfdeg", type=int, default=None, help="half degree d' of the trace objective")
    d.add_argument("--scale", default="1", help="rescaling factor, or 'auto'")
    d.add_argument("--L", type=float, default=None, help="total-variation cap (signed mode)")
    d.add_argument("--use-kernel", action="store_true", help="add catalecticant-kernel rows")
    d.add_argument("--rank-tol", type=float, default=1e-6)
    d.add_argument("--merge-tol", type=float, default=1e-6)
    d.add_argument("--no-polish", action="store_true", help="skip the local refinement of atoms")
    _add_common(d)

    r = sub.add_parser("rates", help="tabulate kappa * ell^-theta")
    r.add_argument("inputs", nargs="?", default=None, help="rate-inputs JSON")
    r.add_argument("--preset", choices=["ball", "box1", "box2", "generic"], default=None)
    r.add_argument("--gamma", type=float, default=None)
    r.add_argument("--theta", type=float, default=None)
    r.add_argument("--ell0", type=float, default=None)
    r.add_argument("--n", type=int, default=None)
    r.add_argument("--deg", type=int, default=None)
    r.add_argument("--kappa", type=float, default=None)
    r.add_argument("--max-order", type=int, default=40)
    r.add_argument("--step", type=int, default=2)
    _add_common(r)

    s = sub.add_parser("sweep", help="solve the hierarchy for several orders")
    s.add_argument("instance", help="GMP instance JSON")
    s.add_argument("--orders", type=_orders, default=[2, 4, 6, 8], help="e.g. 2,4,6 or 2..8")
    s.add_argument("--reference", type=float, default=None, help="known optimal value")
    s.add_argument("--grid", type=int, default=None, help="compute a grid reference (n <= 2)")
    _add_common(s)

    h = sub.add_parser("hausdorff", help="sampled Hausdorff-distance estimate")
    h.add_argument("instance", help="GMP instance JSON (objective ignored)")
    h.add_argument("--k", type=int, default=2, help="degree of the sampled objectives")
    h.add_argument("--orders", type=_orders, default=[2, 4, 6, 8])
    h.add_argument("--samples", type=int, default=50)
    h.add_argument("--grid", type=int, default=2001)
    _add_common(h)

    rp = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    rp.add_argument("manifest")
    return ap


# -- commands -----------------------------------------------------------------------


def cmd_decompose(args, argv) -> int:
    from .poly import load_polynomial
    from .tensor import DecompositionConfig, Mode, NotCertified, decompose, default_config, suggest_scale

    try:
        F = load_polynomial(args.tensor)
    except (OSError, ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise CLIError(f"cannot read tensor {args.tensor}: {exc}") from exc
    if not F.is_homogeneous() or F.is_zero():
        raise CLIError("tensor must be a nonzero homogeneous polynomial")
    d = F.degree
    scale = suggest_scale(F) if args.scale == "auto" else float(args.scale)
    cfg = default_config(d)
    if args.order is not None:
        cfg.order = args.order
        cfg.psi_halfdeg = args.order // 2
    if args.psi_halfdeg is not None:
        cfg.psi_halfdeg = args.psi_halfdeg
    cfg = DecompositionConfig(**{**asdict(cfg), "scale": scale, "L": args.L, "use_kernel": args.use_kernel,
                                 "rank_tol": args.rank_tol, "merge_tol": args.merge_tol, "eps": args.tol,
                                 "max_iter": args.max_iter, "seed": args.seed, "polish": not args.no_polish})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NotCertified)
        atoms, diag = decompose(F, d, Mode(args.mode), cfg)
    if args.out:
        prefix = Path(args.out)
        _write_json(prefix.with_name(prefix.name + ".atoms.json"), atoms.to_json())
        _write_json(prefix.with_name(prefix.name + ".diagnostics.json"), diag.to_json())
        _write_json(prefix.with_name(prefix.name + ".manifest.json"),
                    _manifest(args, argv, [args.tensor], {**asdict(cfg), "mode": args.mode, "degree": d}))
    else:
        json.dump(atoms.to_json(), sys.stdout, indent=1)
        sys.stdout.write("\n")
    print(f"{atoms.rank} atoms, extraction residual {diag.extraction_residual:.3g}, "
          f"reconstruction error {diag.reconstruction_error:.3g}, status {diag.status}", file=sys.stderr)
    if not diag.certified:
        print("not certified: " + "; ".join(diag.messages), file=sys.stderr)
        return EXIT_SOFT
    return EXIT_OK


def resolve_rates(args) -> tuple[float, float, float, dict]:
    """(kappa, theta, first order, resolved config) from JSON plus flags."""
    from .rates import PsatzConstants, RateInputs, SlotRate, ell_threshold, kappa_theta

    cfg = {}
    if args.inputs:
        try:
            with open(args.inputs) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise CLIError(f"cannot read rate inputs {args.inputs}: {exc}") from exc
    for key in ("preset", "gamma", "theta", "ell0", "n", "deg", "kappa"):
        val = getattr(args, key)
        if val is not None:
            cfg[key] = val
    degrees = [int(v) for v in cfg.get("active_degrees", [])]
    try:
        if "slots" in cfg:
            slots = []
            for s in cfg["slots"]:
                ps = PsatzConstants.from_preset(s.get("preset", "generic"), s.get("n"), s.get("deg"),
                                                s.get("gamma", 1.0), s.get("theta"), s.get("ell0", 0.0))
                slots.append(SlotRate(s["f_max"], s.get("h_star_max", 0.0), s["hw_min"], ps))
            inputs = RateInputs(tuple(slots), cfg["t_dot_w"], cfg.get("v1", 0.0), tuple(degrees))
            kappa, theta = kappa_theta(inputs)
            ell0 = [s.psatz.ell0 for s in slots]
        else:
            preset = cfg.get("preset", "generic")
            if preset == "generic" and "theta" not in cfg:
                raise CLIError("the generic preset needs --theta")
            ps = PsatzConstants.from_preset(preset, cfg.get("n"), cfg.get("deg"), cfg.get("gamma", 1.0),
                                            cfg.get("theta"), cfg.get("ell0", 0.0))
            if "kappa" in cfg:
                kappa, theta = float(cfg["kappa"]), ps.theta
            else:
                inputs = RateInputs((SlotRate(cfg.get("f_max", 1.0), cfg.get("h_star_max", 0.0),
                                              cfg.get("hw_min", 1.0), ps),),
                                    cfg.get("t_dot_w", 1.0), cfg.get("v1", 0.0))
                kappa, theta = kappa_theta(inputs)
            ell0 = [ps.ell0]
    except (KeyError, ValueError, TypeError) as exc:
        raise CLIError(f"invalid rate inputs: {exc}") from exc
    start = ell_threshold(ell0, degrees)
    return kappa, theta, start, {**cfg, "kappa": kappa, "theta": theta, "start": start}


def cmd_rates(args, argv) -> int:
    from .rates import rate_table

    kappa, theta, start, cfg = resolve_rates(args)
    rows = rate_table(kappa, theta, start, args.max_order, args.step)
    lines = ["ell,bound"] + [f"{ell},{bound!r}" for ell, bound in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        _write_json(out.with_name(out.name + ".manifest.json"),
                    _manifest(args, argv, [args.inputs] if args.inputs else [],
                              {**cfg, "max_order": args.max_order, "step": args.step}))
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _load_instance(path):
    from .gmp import GMPInstance

    try:
        return GMPInstance.load(path)
    except (OSError, ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise CLIError(f"cannot read instance {path}: {exc}") from exc


def cmd_sweep(args, argv) -> int:
    from .experiments import gap_sweep, reference_optimum

    inst = _load_instance(args.instance)
    ref = args.reference
    if ref is None and args.grid:
        ref = reference_optimum(inst, args.grid)
    try:
        res = gap_sweep(inst, args.orders, ref, _settings(args))
    except ValueError as exc:
        raise CLIError(str(exc)) from exc
    _emit_csv(args, argv, res.to_csv, [args.instance],
              {"orders": args.orders, "reference": ref, "tol": args.tol, "max_iter": args.max_iter})
    return EXIT_OK


def cmd_hausdorff(args, argv) -> int:
    from .experiments import hausdorff_sweep, write_hausdorff_csv

    inst = _load_instance(args.instance)
    if min(args.orders) < args.k:
        raise CLIError(f"every order must be >= k = {args.k}")
    rows = hausdorff_sweep(inst, args.k, args.orders, args.samples, args.grid, args.seed, _settings(args))
    _emit_csv(args, argv, lambda fh: write_hausdorff_csv(rows, fh), [args.instance],
              {"k": args.k, "orders": args.orders, "samples": args.samples, "grid": args.grid,
               "tol": args.tol, "max_iter": args.max_iter})
    return EXIT_OK


def _emit_csv(args, argv, writer, inputs, config) -> None:
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", newline="") as fh:
            writer(fh)
        _write_json(out.with_name(out.name + ".manifest.json"), _manifest(args, argv, inputs, config))
    else:
        writer(sys.stdout)


def cmd_replay(args, argv) -> int:
    try:
        with open(args.manifest) as fh:
            m = json.load(fh)
        inner = m["argv"]
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise CLIError(f"cannot read manifest {args.manifest}: {exc}") from exc
    return main(inner)


COMMANDS = {
    "decompose": cmd_decompose,
    "rates": cmd_rates,
    "sweep": cmd_sweep,
    "hausdorff": cmd_hausdorff,
    "replay": cmd_replay,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    try:
        return COMMANDS[args.command](args, argv)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # noqa: BLE001 - any failure maps to exit code 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
