"""
Command-line front end.

    photon-bec steady   [param flags] [--out FILE]
    photon-bec g2       [param flags] [--tau-max-ns T] [--tau-points N] [--ordering O]
    photon-bec sweep    [param flags] [--n-min A --n-max B --n-points N | --n-list ...]
    photon-bec oracle   [param flags] [--seed S] [--t-end-ns T]
    photon-bec spectrum {critical-number, curve, fit} ...

Parameters come from a preset, then ``--params FILE``, then per-key flags,
each layer overriding the previous one; ``--target-n`` finally sets the pump.
Exit codes: 0 success, 1 invalid input, 2 numerical failure or exceeded
tolerance, 3 I/O error.  Failures print a JSON object to stderr.
"""

from __future__ import annotations

import argparse
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from ._io import json_text, write_text
from .core import CONFIG_KEYS, ConvergenceError, ModelParams, ValidationError, \
    dye_cavity_params, load_params, validate

__all__ = ["main", "build_parser", "PRESETS", "resolve_params"]

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3
ORACLE_MAX_M = 2000

_SMALL = dict(M=100.0, kappa=1.0, gamma_down=0.0, B_em=0.05, B_abs=0.0025)


def _preset_fig4():
    return dye_cavity_params(), 17100.0


def _preset_m100():
    return ModelParams(**_SMALL), 20.0


def _preset_below():
    return ModelParams(gamma_up=0.005, **_SMALL), None


def _preset_trivial():
    return ModelParams(M=1.0, kappa=1.0, gamma_up=1.0, gamma_down=0.1, B_em=0.5, B_abs=0.25), None


# name -> (params, default target photon number or None)
PRESETS = {
    "fig4": _preset_fig4,
    "m100": _preset_m100,
    "below-threshold": _preset_below,
    "trivial": _preset_trivial,
}


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage, which is reserved here
    def error(self, message):
        raise ValidationError("arguments", message)


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def _add_param_flags(p: argparse.ArgumentParser, preset: str):
    g = p.add_argument_group("model parameters")
    g.add_argument("--preset", choices=sorted(PRESETS), default=preset,
                   help=f"base parameter set (default {preset})")
    g.add_argument("--params", type=Path, help="key = value parameter file")
    for key, field in CONFIG_KEYS.items():
        g.add_argument(_flag(key), dest=field, type=float, default=None)
    g.add_argument("--gamma-up", dest="gamma_up", type=float, help="alias of --gamma-up-GHz")
    g.add_argument("--target-n", type=float, default=None,
                   help="set the pump so the mean-field photon number is this value")
    p.add_argument("--out", type=Path, help="output file (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="photon-bec", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("steady", help="mean-field and moment steady state as JSON")
    _add_param_flags(p, "fig4")

    p = sub.add_parser("g2", help="g2(tau) CSV plus damped-oscillation fit JSON")
    _add_param_flags(p, "fig4")
    p.add_argument("--tau-max-ns", type=float, default=30.0)
    p.add_argument("--tau-points", type=int, default=601)
    p.add_argument("--ordering", choices=("normal", "direct"), default="normal")
    p.add_argument("--method", choices=("closed_form", "ode"), default="closed_form")
    p.add_argument("--fit-out", type=Path,
                   help="fit JSON file (default: next to --out, or stdout)")

    p = sub.add_parser("sweep", help="oscillation frequency versus photon number CSV")
    _add_param_flags(p, "fig4")
    p.add_argument("--n-min", type=float, default=2000.0)
    p.add_argument("--n-max", type=float, default=25000.0)
    p.add_argument("--n-points", type=int, default=50)
    p.add_argument("--n-list", type=float, nargs="+", help="explicit photon numbers")
    p.add_argument("--ordering", choices=("normal", "direct"), default="normal")

    p = sub.add_parser("oracle", help="compare the closure with the exact small-M solution")
    _add_param_flags(p, "m100")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--t-end-ns", type=float, default=20000.0,
                   help="length of the stochastic trajectory")
    p.add_argument("--tau-points", type=int, default=201)

    p = sub.add_parser("spectrum", help="equilibrium spectrum tools")
    ssub = p.add_subparsers(dest="spectrum_command", required=True, parser_class=_Parser)
    for name, helptext in (("critical-number", "critical photon number"),
                           ("curve", "spectrum CSV"),
                           ("fit", "fit the condensate number to a spectrum CSV")):
        q = ssub.add_parser(name, help=helptext)
        q.add_argument("--T-K", dest="T", type=float, default=300.0)
        q.add_argument("--Omega-rad-per-ns", dest="Omega", type=float, default=2 * math.pi * 40)
        q.add_argument("--out", type=Path)
        if name == "critical-number":
            continue
        q.add_argument("--lambda-c-nm", dest="lambda_c", type=float, default=571.3)
        q.add_argument("--resolution-nm", type=float, default=0.2)
        if name == "curve":
            q.add_argument("--n-condensate", type=float, default=10000.0)
            q.add_argument("--wl-min", type=float, default=555.0)
            q.add_argument("--wl-max", type=float, default=575.0)
            q.add_argument("--wl-step", type=float, default=0.02)
        else:
            q.add_argument("--data", type=Path, required=True,
                           help="CSV with header wavelength_nm,intensity")
    return parser


def resolve_params(args) -> ModelParams:
    """Preset, then parameter file, then flags, then ``--target-n``."""
    from .meanfield import pump_for_target_n

    params, target = PRESETS[args.preset]()
    if args.params is not None:
        params = load_params(args.params)
        target = None
    changes = {f: getattr(args, f) for f in CONFIG_KEYS.values() if getattr(args, f) is not None}
    if changes:
        params = params.replace(**changes)
    if "gamma_up" in changes:
        target = None
    if args.target_n is not None:
        target = args.target_n
    validate(params)
    if target is not None:
        params = params.replace(gamma_up=pump_for_target_n(params, target))
    return params


def _emit(path, text: str):
    if path is None:
        sys.stdout.write(text)
    else:
        write_text(path, text)


def _params_dict(p: ModelParams) -> dict:
    return {k: getattr(p, f) for k, f in CONFIG_KEYS.items() if getattr(p, f) is not None}


def cmd_steady(args) -> int:
    from .meanfield import steady_state
    from .moments import g2_zero, moment_steady_state

    params = resolve_params(args)
    mf = steady_state(params)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        mom = moment_steady_state(params)
    n_pos = mom.n > 0
    out = {
        "params": _params_dict(params),
        "mean_field": {"n": mf.n, "m_up": mf.m_up},
        **mom.to_dict(),
        "var_n": mom.var_n,
        "cov_nm": mom.cov,
        "var_m": mom.var_m,
        "g2_zero": {
            "normal": g2_zero(mom, "normal") if n_pos else None,
            "direct": g2_zero(mom, "direct") if n_pos else None,
        },
    }
    _emit(args.out, json_text(out))
    return EXIT_OK


def cmd_g2(args) -> int:
    from .correlations import coupling_matrix, eigen, g2_curve
    from .fitting import fit_g2
    from .moments import moment_steady_state

    if args.tau_points < 2 or not args.tau_max_ns > 0:
        raise ValidationError("tau", "need --tau-points >= 2 and --tau-max-ns > 0")
    params = resolve_params(args)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        mom = moment_steady_state(params)
    tau = np.linspace(0.0, args.tau_max_ns, args.tau_points)
    curve = g2_curve(params, mom, tau, ordering=args.ordering, method=args.method)
    fit = fit_g2(curve)
    ev = eigen(coupling_matrix(params, mom))
    report = {
        "params": _params_dict(params),
        "fit": fit.to_dict(),
        "eigen": {"lambda_real": ev.lambda_real, "lambda_imag": ev.lambda_imag,
                  "regime": ev.regime, "tau_c": ev.tau_c},
    }
    _emit(args.out, curve.to_csv())
    fit_path = args.fit_out
    if fit_path is None and args.out is not None:
        fit_path = args.out.with_name(args.out.stem + "_fit.json")
    if fit_path is not None or args.out is not None:
        _emit(fit_path, json_text(report))
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .fitting import sweep_omega2

    params = resolve_params(args)
    if args.n_list:
        n_list = args.n_list
    else:
        if args.n_points < 1:
            raise ValidationError("n_points", "must be at least 1")
        n_list = np.linspace(args.n_min, args.n_max, args.n_points)
    table = sweep_omega2(params, n_list, ordering=args.ordering)
    _emit(args.out, table.to_csv())
    return EXIT_OK


def cmd_oracle(args) -> int:
    from .validation import run_oracle_checks

    params = resolve_params(args)
    if params.M > ORACLE_MAX_M:
        raise ValidationError("M", f"oracle comparison is capped at M <= {ORACLE_MAX_M}")
    report = run_oracle_checks(params, seed=args.seed, t_end=args.t_end_ns,
                               tau_points=args.tau_points)
    _emit(args.out, json_text(report))
    return EXIT_OK if report["passed"] else EXIT_NUMERIC


def cmd_spectrum(args) -> int:
    from . import spectrum as sp

    if args.spectrum_command == "critical-number":
        n_c = sp.critical_number(args.T, args.Omega)
        _emit(args.out, json_text({"T_K": args.T, "Omega_rad_per_ns": args.Omega,
                                   "critical_number": n_c}))
        return EXIT_OK
    trap = sp.TrapModel(T=args.T, Omega=args.Omega, lambda_c=args.lambda_c)
    if args.spectrum_command == "curve":
        if not (args.wl_step > 0 and args.wl_max > args.wl_min):
            raise ValidationError("grid", "need --wl-max > --wl-min and --wl-step > 0")
        count = int(round((args.wl_max - args.wl_min) / args.wl_step)) + 1
        grid = args.wl_min + args.wl_step * np.arange(count)
        curve = sp.spectrum_curve(trap, args.n_condensate, args.resolution_nm, grid)
        _emit(args.out, curve.to_csv())
        return EXIT_OK
    data = _read_spectrum(args.data, args.resolution_nm)
    n_fit = sp.fit_spectrum(data, trap)
    _emit(args.out, json_text({"n_condensate": n_fit,
                               "critical_number": sp.critical_number(args.T, args.Omega)}))
    return EXIT_OK


def _read_spectrum(path: Path, resolution: float):
    from .spectrum import SpectrumCurve

    text = path.read_text()
    header = text.splitlines()[0].strip() if text else ""
    if header != "wavelength_nm,intensity":
        raise ValidationError("data", f"expected header 'wavelength_nm,intensity', got {header!r}")
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return SpectrumCurve(arr[:, 0], arr[:, 1], resolution)


_COMMANDS = {
    "steady": cmd_steady,
    "g2": cmd_g2,
    "sweep": cmd_sweep,
    "oracle": cmd_oracle,
    "spectrum": cmd_spectrum,
}


def _fail(code: int, exc: BaseException) -> int:
    err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    field = getattr(exc, "field", None)
    if field is not None:
        err["field"] = field
    sys.stderr.write(json_text(err))
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return _COMMANDS[args.command](args)
    except ValidationError as exc:
        return _fail(EXIT_INVALID, exc)
    except (ConvergenceError, ZeroDivisionError, FloatingPointError) as exc:
        return _fail(EXIT_NUMERIC, exc)
    except OSError as exc:
        return _fail(EXIT_IO, exc)
    except ValueError as exc:
        # malformed config or data files
        return _fail(EXIT_INVALID, exc)


if __name__ == "__main__":
    sys.exit(main())
