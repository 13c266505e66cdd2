"""Command-line front end: ``tachyon-gr <subcommand> [flags]``.

Exit codes: 0 success, 1 verification failure, 2 invalid input, 3 numerical
failure.  A flat key-value config file (``--config``) may hold one section
per subcommand; flags override file values.
"""

from __future__ import annotations

import argparse
import configparser
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import defaults
from . import kinematics as kin
from . import linfield as lf
from . import orbits as orb
from . import verify as ver
from .geodesic import ConservedCharges, integrate, normalized_state
from .spacetime import (
    CylindricalPowerLaw, QuadratureError, RobertsonWalker, Schwarzschild, SmoothedCylinder, point,
)

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3


class InputError(ValueError):
    pass


# --------------------------------------------------------------------------
# serialisation
# --------------------------------------------------------------------------

def fmt(x) -> str:
    return format(float(x), ".17g")


def dumps(obj, indent: int = 1, _level: int = 0) -> str:
    """JSON with every float written to 17 significant digits; non-finite floats become null."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        return "[" + ", ".join(dumps(v, indent, _level + 1) for v in obj) + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj) if math.isfinite(obj) else "null"
    return json.dumps(obj)


def _open_out(path: Optional[str]):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", newline=""), True


def _emit_text(text: str, path: Optional[str]) -> None:
    fh, own = _open_out(path)
    try:
        fh.write(text if text.endswith("\n") else text + "\n")
    finally:
        if own:
            fh.close()


def _threads() -> int:
    raw = os.environ.get("TACHYON_GR_THREADS")
    if raw is None:
        return min(4, os.cpu_count() or 1)
    try:
        n = int(raw)
    except ValueError:
        raise InputError(f"TACHYON_GR_THREADS must be an integer, got {raw!r}")
    if n < 1:
        raise InputError("TACHYON_GR_THREADS must be at least 1")
    return n


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def _positive(x: str) -> float:
    v = float(x)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {x}")
    return v


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--output", "-o", help="output path (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default=None)
    p.add_argument("--grav-constant", type=_positive, default=1.0,
                   help="value of G applied at input/output (internally G = 1)")


def _add_source(p: argparse.ArgumentParser) -> None:
    p.add_argument("--shape", choices=lf.SHAPES, default="top_hat")
    p.add_argument("--R", type=_positive, default=1.0, help="top_hat / poly_cutoff radius")
    p.add_argument("--sigma", type=_positive, default=1.0, help="gaussian width")
    p.add_argument("--k", type=int, default=2, help="poly_cutoff exponent")
    p.add_argument("--b0", type=float, default=1.0, help="envelope amplitude")
    p.add_argument("--n", type=int, choices=(2, 3), default=2)
    p.add_argument("--flow-speed", type=float, default=2.0, help="sets the energy density to b/v^2")
    p.add_argument("--axial-pressure", action="store_true",
                   help="cylinder only: give the flow an axial pressure envelope equal to b")
    p.add_argument("--points", type=int, default=None, help="radial grid points")


def build_parser(debug: bool = False) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tachyon-gr", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="key-value config file with one section per subcommand")
    parser.add_argument("--print-defaults", action="store_true", help="print the numerical defaults and exit")
    parser.add_argument("--seed", type=int, default=0)
    sub = parser.add_subparsers(dest="command")

    g = sub.add_parser("geodesic", help="integrate one geodesic and write the trajectory")
    g.add_argument("--metric", choices=("rw", "schwarzschild", "cylinder", "smoothed"), default="schwarzschild")
    g.add_argument("--scale-model", choices=("power_law", "exponential"), default="power_law")
    g.add_argument("--rate", type=float, default=0.0)
    g.add_argument("--curvature", type=int, choices=(-1, 0, 1), default=0)
    g.add_argument("--curvature-radius", type=float, default=math.inf)
    g.add_argument("--a0", type=float, default=1.0)
    g.add_argument("--rs", type=float, default=1.0)
    g.add_argument("--a", type=float, default=1.0)
    g.add_argument("--b", type=float, default=1.0)
    g.add_argument("--c", type=float, default=1.0)
    g.add_argument("--alpha", type=float, default=1.0)
    g.add_argument("--eps-smooth", type=float, default=1e-3)
    g.add_argument("--t0", type=float, default=1.0)
    g.add_argument("--r0", type=float, default=10.0)
    g.add_argument("--theta0", type=float, default=math.pi / 2)
    g.add_argument("--x30", type=float, default=0.0, help="phi (spherical) or z (cylindrical)")
    g.add_argument("--velocity", type=float, nargs=3, default=(-2.0, 0.0, 0.0), metavar=("DR", "DTHETA", "DX3"))
    g.add_argument("--Q", type=int, choices=(-1, 0, 1), default=-1)
    g.add_argument("--tau-end", type=float, default=10.0)
    g.add_argument("--tol", type=_positive, default=None)
    _add_common(g)

    d = sub.add_parser("deflect", help="deflection angles by a point mass")
    d.add_argument("--rs", type=_positive, default=1.0)
    d.add_argument("--b", type=_positive, nargs="+", default=[1e3])
    d.add_argument("--v", type=float, nargs="+", default=[2.0])
    d.add_argument("--Q", type=int, choices=(-1, 0, 1), default=-1)
    _add_common(d)

    f = sub.add_parser("field", help="solve the weak field of a circulating source")
    _add_source(f)
    _add_common(f)

    o = sub.add_parser("orbit", help="bound-orbit search (n = 2) or no-bound verdict (n = 3)")
    _add_source(o)
    o.set_defaults(b0=1e-4)
    o.add_argument("--gamma", type=float, default=1.0, help="n = 3: energy constant")
    o.add_argument("--L", type=float, default=1.0, help="n = 3: angular momentum")
    o.add_argument("--oscillations", type=int, default=10)
    _add_common(o)

    s = sub.add_parser("spectrum", help="beta-decay endpoint spectra")
    s.add_argument("--E0", type=_positive, default=10.0)
    s.add_argument("--m", type=_positive, default=1.0)
    s.add_argument("--points", type=int, default=101)
    _add_common(s)

    c = sub.add_parser("cosmo", help="temperature of an expanding tachyon gas")
    c.add_argument("--T1", type=_positive, default=1e-2, help="temperature at a1 in units of the mass")
    c.add_argument("--a1", type=_positive, default=1.0)
    c.add_argument("--m", type=_positive, default=1.0)
    c.add_argument("--a-end", type=_positive, default=1.3)
    c.add_argument("--points", type=int, default=31)
    _add_common(c)

    k = sub.add_parser("causality", help="exchange times and packet sizes between receding frames")
    k.add_argument("--x0", type=_positive, default=1.0)
    k.add_argument("--v", type=float, default=0.6)
    k.add_argument("--V", type=float, default=2.0)
    k.add_argument("--decay-rate", type=_positive, default=1.0)
    _add_common(k)

    v = sub.add_parser("verify", help="run the reproduction suite")
    v.add_argument("--only", action="append", choices=ver.GROUPS, help="criterion group (repeatable)")
    v.add_argument("--json-report", help="write the machine-readable report here")
    if debug:
        v.add_argument("--mutate-g-prefactor", type=float, default=None, help=argparse.SUPPRESS)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.Namespace:
    pre, _ = parser.parse_known_args(argv)
    if not pre.config:
        return parser.parse_args(argv)
    cfg = configparser.ConfigParser(interpolation=None)
    cfg.optionxform = str
    try:
        with open(pre.config) as fh:
            cfg.read_file(fh)
    except OSError as exc:
        raise InputError(f"cannot read config {pre.config!r}: {exc.strerror}")
    except configparser.Error as exc:
        raise InputError(f"malformed config: {exc}")
    subs = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for section in cfg.sections():
        if section not in subs.choices:
            raise InputError(f"config section [{section}] names no subcommand")
    if pre.command in cfg:
        sp = subs.choices[pre.command]
        actions = {a.dest: a for a in sp._actions if a.dest != "help"}
        values = {}
        for key, raw in cfg[pre.command].items():
            dest = key.replace("-", "_")
            if dest not in actions:
                raise InputError(f"unknown config key {key!r} in [{pre.command}]")
            act = actions[dest]
            try:
                if isinstance(act, argparse._StoreTrueAction):
                    val = cfg[pre.command].getboolean(key)
                elif act.nargs in ("+", "*") or isinstance(act.nargs, int):
                    val = [act.type(x) if act.type else x for x in raw.split()]
                else:
                    val = act.type(raw) if act.type else raw
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise InputError(f"config key {key!r}: {exc}")
            if act.choices is not None and val not in act.choices:
                raise InputError(f"config key {key!r}: {val!r} not in {list(act.choices)}")
            values[dest] = val
        sp.set_defaults(**values)
    return parser.parse_args(argv)


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def _metric(a):
    if a.metric == "rw":
        return RobertsonWalker(a.scale_model, a.rate, a.curvature, a.curvature_radius, a.a0)
    if a.metric == "schwarzschild":
        return Schwarzschild(a.rs)
    if a.metric == "cylinder":
        return CylindricalPowerLaw(a.a, a.b, a.c, a.alpha)
    return SmoothedCylinder(a.a, a.b, a.c, a.alpha, a.eps_smooth)


def cmd_geodesic(a) -> int:
    spec = _metric(a)
    p = point(spec, a.t0, a.r0, a.theta0, a.x30)
    s0 = normalized_state(spec, p, a.velocity, a.Q)
    traj = integrate(spec, s0, (0.0, a.tau_end), tol=a.tol)
    if a.format == "json":
        _emit_text(dumps({"status": traj.status, "message": traj.message, "steps": len(traj.tau),
                          "max_q_drift": traj.max_q_drift, "charge_drift": traj.charge_drift,
                          "final_state": traj.states[-1].tolist()}), a.output)
    else:
        fh, own = _open_out(a.output)
        try:
            traj.to_csv(fh)
        finally:
            if own:
                fh.close()
    return EXIT_OK if traj.status != "step_underflow" else EXIT_NUMERIC


def cmd_deflect(a) -> int:
    # G enters only through r_s = 2 G M; the flag rescales the given r_s
    rs = a.rs * a.grav_constant
    setups = [orb.ScatteringSetup(rs, v, b, a.Q) for v in a.v for b in a.b]
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        rows = list(pool.map(orb.deflection_row, setups))
    if a.format == "json":
        _emit_text(dumps([r.__dict__ for r in rows]), a.output)
    else:
        buf = io.StringIO()
        orb.write_deflection_csv(rows, buf)
        _emit_text(buf.getvalue(), a.output)
    return EXIT_OK


def _envelope(a) -> lf.SourceEnvelope:
    return lf.SourceEnvelope(a.shape, a.b0, a.n, R=None if a.shape == "gaussian" else a.R,
                             sigma=a.sigma if a.shape == "gaussian" else None,
                             k=a.k if a.shape == "poly_cutoff" else None)


def _profile(a) -> lf.FieldProfile:
    env = _envelope(a)
    if a.axial_pressure and a.n != 2:
        raise InputError("--axial-pressure applies only to n = 2")
    grid = lf.default_grid(env.scale, a.points) if a.points else None
    stress = lf.build_stress(env, flow_speed=a.flow_speed, t33=env if a.axial_pressure else None, grid=grid)
    return lf.solve_fg(stress, G=a.grav_constant)


def cmd_field(a) -> int:
    prof = _profile(a)
    if a.format == "json":
        _emit_text(dumps({"n": prof.n, "asymptotic_coeff": prof.asymptotic_coeff,
                          "gauge_residual": lf.gauge_residual(prof), "tail_exponent": lf.tail_exponent(prof),
                          "meta": prof.meta}), a.output)
    elif a.output in (None, "-"):
        buf = io.StringIO()
        buf.write("r,f,g,V0,V3\n")
        for ri, row in zip(prof.r, prof.values):
            buf.write(",".join(fmt(x) for x in (ri, *row)) + "\n")
        sys.stdout.write(buf.getvalue())
    else:
        prof.to_csv(a.output)
    return EXIT_OK


def cmd_orbit(a) -> int:
    prof = _profile(a)
    if a.n == 3:
        verdict = orb.spherical_bound_analysis(prof, ConservedCharges(charge_gamma=a.gamma, L=a.L, Q=-1))
        out = {"no_bound_possible": verdict.no_bound_possible, "reason": verdict.reason,
               "two_E": verdict.two_E, "well_minimum": verdict.curve.well_minimum}
        _emit_text(dumps(out), a.output)
        return EXIT_OK
    found = orb.bound_orbit_search(prof)
    if not found.found:
        _emit_text(dumps({"found": False, "margin": found.margin, "message": found.message}), a.output)
        return EXIT_NUMERIC
    rep = orb.bound_orbit_report(prof, found, oscillations=a.oscillations)
    rep.pop("trajectory")
    rep = {"found": True, **rep}
    _emit_text(dumps(rep), a.output)
    return EXIT_OK


def cmd_spectrum(a) -> int:
    if a.points < 2:
        raise InputError("--points must be at least 2")
    table = kin.spectrum_table(a.E0, a.m, a.points)
    if a.format == "json":
        _emit_text(dumps({h: table[:, i] for i, h in enumerate(kin.SPECTRUM_HEADER)}), a.output)
    else:
        buf = io.StringIO()
        kin.write_table(kin.SPECTRUM_HEADER, table, buf)
        _emit_text(buf.getvalue(), a.output)
    return EXIT_OK


def cmd_cosmo(a) -> int:
    if a.points < 2:
        raise InputError("--points must be at least 2")
    if not a.a_end > a.a1:
        raise InputError("--a-end must exceed --a1")
    table = kin.cosmo_table(kin.GasState(a.T1 * a.m, a.a1, "fermi", a.m), (a.a1, a.a_end), a.points)
    if a.format == "json":
        _emit_text(dumps({h: table[:, i] for i, h in enumerate(kin.COSMO_HEADER)}), a.output)
    else:
        buf = io.StringIO()
        kin.write_table(kin.COSMO_HEADER, table, buf)
        _emit_text(buf.getvalue(), a.output)
    return EXIT_OK


def cmd_causality(a) -> int:
    res = kin.exchange_times(kin.ExchangeScenario(a.x0, a.v, a.V))
    pk = kin.packet_size_transform(a.V, a.decay_rate, a.v)
    out = {"dt_earth": res.dt_earth, "dt_ship": res.dt_ship, "reversed": res.reversed,
           "dx_rest": pk.dx_rest, "dx_boosted": pk.dx_boosted, "diverges": pk.diverges}
    if a.format == "csv":
        _emit_text(",".join(out) + "\n" + ",".join(
            str(v).lower() if isinstance(v, bool) else fmt(v) for v in out.values()), a.output)
    else:
        _emit_text(dumps(out), a.output)
    return EXIT_OK


def cmd_verify(a) -> int:
    def show(res):
        print(ver.format_line(res), flush=True)

    mutate = getattr(a, "mutate_g_prefactor", None)
    if mutate is not None:
        with lf._perturbed_g_prefactor(mutate):
            report = ver.verify_suite(a.seed, a.only, progress=show)
    else:
        report = ver.verify_suite(a.seed, a.only, progress=show)
    n_pass = sum(c["passed"] for c in report["criteria"])
    print(f"{n_pass}/{len(report['criteria'])} criteria passed")
    if a.json_report:
        Path(a.json_report).write_text(dumps(report) + "\n")
    return EXIT_OK if report["all_passed"] else EXIT_FAIL


COMMANDS = {
    "geodesic": cmd_geodesic, "deflect": cmd_deflect, "field": cmd_field, "orbit": cmd_orbit,
    "spectrum": cmd_spectrum, "cosmo": cmd_cosmo, "causality": cmd_causality, "verify": cmd_verify,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser(debug=bool(os.environ.get("TACHYON_GR_DEBUG")))
    try:
        args = _apply_config(parser, argv)
    except InputError as exc:
        print(f"tachyon-gr: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as exc:       # argparse reports its own usage errors
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    if args.print_defaults:
        width = max(map(len, defaults.DEFAULTS))
        for key, val in defaults.DEFAULTS.items():
            print(f"{key:<{width}}  {val!r}")
        return EXIT_OK
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_INPUT
    try:
        return COMMANDS[args.command](args)
    except (InputError, ValueError, TypeError) as exc:
        print(f"tachyon-gr {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ArithmeticError, QuadratureError, RuntimeError) as exc:
        print(f"tachyon-gr {args.command}: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(run())
