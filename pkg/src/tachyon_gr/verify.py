"""Built-in reproduction suite.

Each criterion is a deterministic function of the seed returning a
:class:`CriterionResult`; failures are collected, never raised.
"""

from __future__ import annotations

import math
import time
import traceback
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from . import kinematics as kin
from . import linfield as lf
from . import orbits as orb
from .geodesic import ConservedCharges, integrate, normalized_state
from .spacetime import (
    CylindricalPowerLaw, RobertsonWalker, Schwarzschild, SmoothedCylinder,
    einstein_tensor, point, smoothed_source_integrals,
)


@dataclass
class CriterionResult:
    number: int
    group: str
    title: str
    anchor: str
    passed: bool
    runtime: float
    limit: float
    checks: dict = field(default_factory=dict)
    error: Optional[str] = None

    def as_dict(self) -> dict:
        return {
            "number": self.number, "group": self.group, "title": self.title, "anchor": self.anchor,
            "passed": self.passed, "runtime_s": self.runtime, "runtime_limit_s": self.limit,
            "checks": _jsonable(self.checks), "error": self.error,
        }


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    return x


def _check(value, ok: bool) -> dict:
    return {"value": value, "ok": bool(ok)}


SHAPES = (
    ("top_hat", lambda n, b0=1.0: lf.SourceEnvelope.top_hat(1.0, b0, n)),
    ("gaussian", lambda n, b0=1.0: lf.SourceEnvelope.gaussian(1.0, b0, n)),
    ("poly_cutoff", lambda n, b0=1.0: lf.SourceEnvelope.poly_cutoff(1.0, 3, b0, n)),
)


# --------------------------------------------------------------------------
# criteria
# --------------------------------------------------------------------------

def c01_light_bending(rng) -> dict:
    s = orb.ScatteringSetup(1.0, 1.0, 1e3, 0)
    num = orb.deflection_angle(s, "numeric")
    rel = abs(num / (2e-3) - 1)
    return {"chi_light": _check(s.chi, s.chi == 2.0),
            "numeric_vs_first_order_rel": _check(rel, rel < 5e-3)}


def c02_tachyon_bending(rng) -> dict:
    out = {
        "chi_v2": _check(orb.chi_factor(-1, 2.0), orb.chi_factor(-1, 2.0) == 1.25),
        "chi_v1e3": _check(orb.chi_factor(-1, 1e3), 1 < orb.chi_factor(-1, 1e3) < 1.001),
        "chi_v_near_1": _check(orb.chi_factor(-1, 1 + 1e-6), 1.999 < orb.chi_factor(-1, 1 + 1e-6) <= 2),
    }
    for v in (2.0, 5.0):
        p = orb.error_scaling(-1, v)["exponent"]
        out[f"error_exponent_v{v:g}"] = _check(p, abs(p - 2.0) <= 0.2)
    return out


def c03_vacuum_cylinder(rng) -> dict:
    out = {}
    for alpha in (0.1, 1.0, 2.0):
        spec = CylindricalPowerLaw(1.0, 1.0, 1.0, alpha)
        worst = 0.0
        for _ in range(100):
            p = point(spec, rng.uniform(-10, 10), rng.uniform(0.05, 20.0), rng.uniform(0, 2 * math.pi),
                      rng.uniform(-10, 10))
            worst = max(worst, float(np.max(np.abs(einstein_tensor(spec, p).G))))
        out[f"max_abs_G_alpha{alpha:g}"] = _check(worst, worst < 1e-12)
    return out


def c04_smoothed_recovery(rng) -> dict:
    a = b = c = 1.0
    alpha = eps = 1e-3
    I = smoothed_source_integrals(SmoothedCylinder(a, b, c, alpha, eps))
    e00 = abs(I["I00"] / (-(a / (2 * b)) * alpha) - 1)
    e33 = abs(I["I33"] / (-(c / (2 * b)) * alpha) - 1)
    er = abs(I["I33"] / I["I00"] / (c / a) - 1)
    return {"I00": I["I00"], "I33": I["I33"],
            "I00_rel_err": _check(e00, e00 < 1e-2),
            "I33_rel_err": _check(e33, e33 < 1e-2),
            "ratio_rel_err": _check(er, er < 5e-3)}


def c05_multipoles(rng) -> dict:
    out = {}
    for name, make in SHAPES:
        for n in (2, 3):
            env = make(n)
            stress = lf.build_stress(env)
            prof = lf.solve_fg(stress)
            mom = lf.virial_moments(stress)
            gauge = lf.gauge_residual(prof)
            m0 = float(np.max(np.abs(mom["zeroth"]))) / mom["scale"]
            m1 = float(np.max(np.abs(mom["first"]))) / mom["scale"]
            tail = lf.tail_exponent(prof)
            key = f"{name}_n{n}"
            out[f"{key}_gauge"] = _check(gauge, gauge < 1e-8)
            out[f"{key}_zeroth"] = _check(m0, m0 < 1e-9)
            out[f"{key}_first"] = _check(m1, m1 < 1e-9)
            out[f"{key}_tail"] = _check(tail, abs(tail + n) < 0.01 * n)
    return out


def c06_f_zero(rng) -> dict:
    out = {}
    for name, make in SHAPES:
        for n in (2, 3):
            ident = lf.f_zero_identity(make(n))
            ref = ident["from_b"]
            err = max(abs(ident["f0"] / ref - 1), abs(ident["from_g"] / ref - 1))
            out[f"{name}_n{n}"] = _check(err, err < 1e-6)
    b0, R = 1.0, 1.0
    f0 = lf.f_zero_identity(lf.SourceEnvelope.top_hat(R, b0, 2))["f0"]
    err = abs(f0 / (4 * math.pi * b0 * R * R) - 1)
    out["top_hat_n2_closed_form"] = _check(err, err < 1e-6)
    return out


def c07_spherical_no_bound(rng) -> dict:
    bad = 0
    min_two_E = math.inf
    count = 0
    for name, make in SHAPES:
        env = make(3, 1e-2)
        prof = lf.solve(env, flow_speed=2.0)
        for _ in range(1000):
            ch = ConservedCharges(charge_gamma=rng.uniform(0.0, 5.0), L=rng.uniform(0.0, 5.0), Q=-1)
            verdict = orb.spherical_bound_analysis(prof, ch)
            count += 1
            bad += not verdict.no_bound_possible
            min_two_E = min(min_two_E, verdict.two_E)
    return {"tuples": count, "bound_verdicts": _check(bad, bad == 0),
            "min_two_E": _check(min_two_E, min_two_E > 0)}


def c08_cylindrical_bound(rng) -> dict:
    env = lf.SourceEnvelope.top_hat(1.0, 1e-4, 2)
    prof = lf.solve(env, flow_speed=2.0)
    found = orb.bound_orbit_search(prof)
    if not found.found:
        return {"found": _check(False, False), "margin": found.margin}
    rep = orb.bound_orbit_report(prof, found, oscillations=10)
    return {
        "found": _check(True, True),
        "charges": rep["charges"], "r_peri": rep["r_peri"], "r_apo": rep["r_apo"],
        "oscillations": _check(rep["oscillations"], rep["oscillations"] >= 10),
        "confined": _check([rep["r_min"], rep["r_max"]], rep["confined"]),
        "q_drift": _check(rep["max_q_drift"], rep["max_q_drift"] < 1e-6),
    }


CATALOG_FAMILIES = (
    RobertsonWalker("power_law", 0.5, 0),
    RobertsonWalker("exponential", 0.1, 1, 10.0),
    RobertsonWalker("power_law", 0.5, -1, 10.0),
    Schwarzschild(1.0),
    CylindricalPowerLaw(1.0, 1.0, 1.0, 0.1),
    CylindricalPowerLaw(1.0, 1.0, 1.0, 1.0),
    CylindricalPowerLaw(1.0, 1.0, 1.0, 2.0),
    SmoothedCylinder(1.0, 1.0, 1.0, 0.5, 0.3),
)


def catalog_launches(rng, per_family: int = 4, families=CATALOG_FAMILIES):
    """Random tachyon launches (spec, state, tau_end) across the exact metric families.

    Cylinder launches start moving outward.
    """
    out = []
    for spec in families:
        made = 0
        while made < per_family:
            if isinstance(spec, RobertsonWalker):
                p = point(spec, rng.uniform(1.0, 2.0), rng.uniform(1.0, 4.0), rng.uniform(0.5, 2.6),
                          rng.uniform(0, 2 * math.pi))
            elif isinstance(spec, Schwarzschild):
                p = point(spec, 0.0, rng.uniform(5.0, 20.0), rng.uniform(0.5, 2.6), rng.uniform(0, 2 * math.pi))
            else:
                p = point(spec, 0.0, rng.uniform(0.5, 3.0), rng.uniform(0, 2 * math.pi), rng.uniform(-1, 1))
            d = rng.normal(size=3)
            d *= rng.uniform(1.0, 2.5) / np.linalg.norm(d)
            r = p.coords[1]
            if spec.chart == "spherical":
                d[1:] /= r
                d[2] /= math.sin(p.coords[2])
            else:
                d[0] = abs(d[0])
                d[1] /= r
            try:
                s0 = normalized_state(spec, p, d, -1)
            except ValueError:
                continue
            out.append((spec, s0, 5.0))
            made += 1
    return out


def c09_q_conservation(rng) -> dict:
    worst = 0.0
    ratios = []
    redrawn = 0
    for spec, s0, tau in catalog_launches(rng):
        t1 = integrate(spec, s0, (0.0, tau), tol=1e-10)
        while t1.status != "completed":
            # runs into a singular boundary are not smooth trajectories; draw again
            redrawn += 1
            spec, s0, tau = catalog_launches(rng, families=[spec], per_family=1)[0]
            t1 = integrate(spec, s0, (0.0, tau), tol=1e-10)
        d1 = t1.max_q_drift
        d2 = integrate(spec, s0, (0.0, tau), tol=5e-11).max_q_drift
        worst = max(worst, d1)
        ratios.append(d1 / d2 if d2 > 0 else math.inf)
    ratios = np.array(ratios)
    return {"max_q_drift": _check(worst, worst < 5e-9),
            "halving_ratio_min": _check(float(ratios.min()), ratios.min() >= 4.0),
            "halving_ratio_median": float(np.median(ratios)),
            "trajectories": len(ratios), "redrawn_singular_runs": redrawn}


def c10_causality(rng) -> dict:
    vs = np.linspace(-0.99, 0.99, 100)
    Vs = np.linspace(1.01, 20.0, 100)
    mismatches = 0
    flips = 0
    for v in vs:
        for V in Vs:
            res = kin.exchange_times(kin.ExchangeScenario(1.0, float(v), float(V)))
            mismatches += res.reversed != (v * V > 1)
            mismatches += res.reversed != (res.dt_ship < 0)
            if v > 0:
                flips += kin.exchange_times(kin.ExchangeScenario(1.0, float(-v), float(V))).reversed
    exact = [(0.5, 2.0), (0.25, 4.0), (0.125, 8.0), (0.0625, 16.0)]
    flagged = all(kin.packet_size_transform(V, 1.0, v).diverges for v, V in exact)
    false_flags = sum(kin.packet_size_transform(float(V), 1.0, float(v)).diverges
                      for v in vs for V in Vs if abs(1 - v * V) > 1e-9)
    return {"reverse_mismatches": _check(mismatches, mismatches == 0),
            "approach_reversals": _check(flips, flips == 0),
            "divergence_at_vV_1": _check(flagged, flagged),
            "divergence_false_flags": _check(false_flags, false_flags == 0)}


def c11_spectra(rng) -> dict:
    E0, m = 10.0, 1.0
    Ee = E0 - m
    vals = [kin.beta_spectrum(kin.SpectrumModel(v, E0, m if v != "massless" else 0.0), Ee)
            for v in ("massless", "bradyonic", "tachyonic")]
    ref = [m * m, 0.0, math.sqrt(2) * m * m]
    ok = all(abs(a - b) <= 1e-12 * max(1.0, abs(b)) for a, b in zip(vals, ref))
    out = {"triple_point": _check(vals, ok)}
    for v in ("massless", "bradyonic", "tachyonic"):
        model = kin.SpectrumModel(v, E0, m if v != "massless" else 0.0)
        slope, label = kin.numeric_endpoint_slope(model)
        out[f"slope_{v}"] = _check([slope, label], label == kin.endpoint_slope(model))
    slope, _ = kin.numeric_endpoint_slope(kin.SpectrumModel("tachyonic", E0, m))
    out["tachyonic_slope_minus_m"] = _check(slope, abs(slope + m) < 1e-3)
    return out


def c12_cosmology(rng) -> dict:
    a1, T1, m = 1.0, 1e-2, 1.0
    a_end = brentq(lambda a: 2 * (a1 / a) ** 2 - 1, a1, 2 * a1, xtol=1e-15, rtol=1e-15)
    out = {"closed_form_endpoint": _check(a_end, abs(a_end - math.sqrt(2)) < 1e-9)}
    full = kin.gas_evolution(kin.GasState(T1, a1, "fermi", m), (a1, 1.3), "full_ode", points=31)
    closed = kin.closed_form_temperature(np.linspace(a1, 1.3, 31), T1, a1)
    n = len(full.a)
    T_full = np.zeros(31)
    T_full[:n] = full.T
    dev = float(np.max(np.abs(T_full - closed) / T1))
    out["full_vs_closed_form"] = _check(dev, dev < 0.02)
    out["full_ode_T_zero_at"] = full.a_end
    hot = kin.gas_evolution(kin.GasState(1e4, 1.0, "fermi", m), (1.0, 10.0), "full_ode", points=21)
    slope = float(np.polyfit(np.log(hot.a), np.log(hot.rho), 1)[0])
    eos = float(np.max(np.abs(hot.rho / (3 * hot.P) - 1)))
    out["relativistic_exponent"] = _check(slope, abs(slope + 4) <= 0.05)
    out["relativistic_rho_3P"] = _check(eos, eos < 1e-3)
    return out


def c13_closed_universe(rng) -> dict:
    R = 10.0
    spec = RobertsonWalker("exponential", 0.0, 1, R)
    worst = 0.0
    for _ in range(100):
        p = point(spec, 0.0, rng.uniform(0.1, 0.9) * R, rng.uniform(0.3, 2.8), rng.uniform(0, 2 * math.pi))
        d = rng.normal(size=3)
        d *= rng.uniform(1.05, 5.0) / np.linalg.norm(d)
        r = p.coords[1]
        B = 1 / (1 - (r / R) ** 2)
        d[0] /= math.sqrt(B)
        d[1:] /= r
        d[2] /= math.sin(p.coords[2])
        s0 = normalized_state(spec, p, d, -1)
        traj = integrate(spec, s0, (0.0, 3 * R))
        worst = max(worst, float(traj.states[:, 1].max()) / R)
    return {"max_r_over_R": _check(worst, worst <= 1.0)}


CRITERIA: list[tuple[int, str, str, str, float, Callable]] = [
    (1, "deflection", "light bending", "first-order deflection, light value 2", 1.0, c01_light_bending),
    (2, "deflection", "tachyon bending limits", "first-order deflection factor 2 + Q/(v gamma)^2", 10.0,
     c02_tachyon_bending),
    (3, "vacuum", "vacuum cylinder", "power-law cylinder exponents solve the vacuum equations", 1.0,
     c03_vacuum_cylinder),
    (4, "smoothed", "smoothed cylinder source recovery", "smoothed-cylinder source integrals", 5.0,
     c04_smoothed_recovery),
    (5, "multipoles", "conservation and multipole suppression",
     "vanishing zeroth and first stress moments; gauge relation; r^-n tail", 20.0, c05_multipoles),
    (6, "f0", "f(0) identity", "axis value of f from g and from the flow envelope", 5.0, c06_f_zero),
    (7, "spherical", "spherical no-bound theorem", "spherical flow: no bound tachyon orbits", 5.0,
     c07_spherical_no_bound),
    (8, "cylindrical", "cylindrical bound orbit", "cylindrical flow: bound tachyon orbits exist", 60.0,
     c08_cylindrical_bound),
    (9, "qconservation", "Q conservation", "velocity norm g(u,u) = Q along geodesics", 30.0,
     c09_q_conservation),
    (10, "causality", "causality diagnostics", "exchange-time reversal for receding frames", 1.0,
     c10_causality),
    (11, "spectra", "beta spectra", "endpoint shapes of the electron spectrum", 1.0, c11_spectra),
    (12, "cosmology", "tachyon-gas cosmology", "temperature against scale factor of a tachyon gas", 60.0,
     c12_cosmology),
    (13, "closed_universe", "closed-universe containment", "tachyons confined by a closed universe", 30.0,
     c13_closed_universe),
]

GROUPS = sorted({c[1] for c in CRITERIA})


def run_criterion(entry, seed: int) -> CriterionResult:
    number, group, title, anchor, limit, fn = entry
    rng = np.random.default_rng([seed, number])
    t0 = time.perf_counter()
    try:
        checks = fn(rng)
        error = None
    except Exception as exc:  # a failing criterion must not abort the suite
        checks = {}
        error = "".join(traceback.format_exception_only(type(exc), exc)).strip()
    runtime = time.perf_counter() - t0
    ok = error is None and all(v["ok"] for v in checks.values() if isinstance(v, dict) and "ok" in v)
    checks["runtime"] = _check(runtime, runtime < limit)
    return CriterionResult(number, group, title, anchor, bool(ok and runtime < limit), runtime, limit,
                           checks, error)


def verify_suite(seed: int = 0, only: Optional[list[str]] = None, numbers: Optional[list[int]] = None,
                 progress: Optional[Callable[[CriterionResult], None]] = None) -> dict:
    """Run the selected criteria (all by default) and return a JSON-ready report."""
    if only:
        unknown = set(only) - set(GROUPS)
        if unknown:
            raise ValueError(f"unknown criterion group(s): {', '.join(sorted(unknown))}")
    results = []
    for entry in CRITERIA:
        if only and entry[1] not in only:
            continue
        if numbers and entry[0] not in numbers:
            continue
        res = run_criterion(entry, seed)
        results.append(res)
        if progress:
            progress(res)
    return {"seed": seed, "all_passed": all(r.passed for r in results),
            "criteria": [r.as_dict() for r in results]}


def format_line(res: CriterionResult) -> str:
    tag = "PASS" if res.passed else "FAIL"
    failed = [k for k, v in res.checks.items() if isinstance(v, dict) and not v.get("ok", True)]
    extra = f"  failed: {', '.join(failed)}" if failed else ""
    if res.error:
        extra += f"  error: {res.error}"
    return f"{tag}  [{res.number:2d}] {res.title:<40s} {res.runtime:7.2f}s{extra}"
