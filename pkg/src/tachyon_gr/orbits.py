"""Scattering and bound orbits.

Deflection by a Schwarzschild mass for all three causal classes, and the
effective-potential analysis of the weak fields of circulating sources:
spherical (no bound tachyon orbits) and cylindrical (bound spirals).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq, minimize_scalar

from . import defaults
from .geodesic import (
    ConservedCharges, GeodesicState, first_integrals, integrate, normalized_state,
    radial_turning_points,
)
from .spacetime import LinearizedStatic, point


class CaptureError(ArithmeticError):
    """The orbit has no outer turning point: the particle falls in."""


# --------------------------------------------------------------------------
# deflection
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ScatteringSetup:
    """Asymptotic data of a scattering orbit.

    ``v`` is the speed at infinity: above 1 for Q = -1, below 1 for Q = +1 and
    ignored for Q = 0.  The charges follow from gamma^2 = Q + v^2 gamma^2 and
    L = b v gamma.
    """

    r_s: float
    v: float
    b: float
    Q: int

    def __post_init__(self):
        if self.Q not in (-1, 0, 1):
            raise ValueError("Q must be -1, 0 or +1")
        if not self.r_s > 0 or not self.b > 0:
            raise ValueError("r_s and b must be positive")
        if self.Q == -1 and not self.v > 1:
            raise ValueError("a tachyon needs v > 1")
        if self.Q == 1 and not 0 < self.v < 1:
            raise ValueError("a massive particle needs 0 < v < 1")

    @property
    def v2g2(self) -> float:
        """v^2 gamma^2; infinite for light."""
        if self.Q == 0:
            return math.inf
        return self.v * self.v / abs(1 - self.v * self.v)

    @property
    def charge_gamma(self) -> float:
        return math.sqrt(self.Q + self.v2g2) if self.Q else math.inf

    @property
    def chi(self) -> float:
        return chi_factor(self.Q, self.v)


def chi_factor(Q: int, v: float) -> float:
    """2 + Q / (v^2 gamma^2): 2 for light, below 2 for tachyons, above for bradyons."""
    if Q == 0:
        return 2.0
    return 2.0 + Q * abs(1 - v * v) / (v * v)


def _orbit_cubic(setup: ScatteringSetup) -> tuple[float, float, float]:
    """Coefficients (r_s, c1, c0) of P(u) = r_s u^3 - u^2 + c1 u + c0 = u'^2."""
    c0 = 1.0 / setup.b ** 2
    c1 = 0.0 if setup.Q == 0 else setup.Q * setup.r_s * c0 / setup.v2g2
    return setup.r_s, c1, c0


def turning_u(setup: ScatteringSetup) -> float:
    """Smallest positive root of the orbit cubic; raises CaptureError when absent."""
    rs, c1, c0 = _orbit_cubic(setup)
    P = lambda u: ((rs * u - 1.0) * u + c1) * u + c0
    dP = lambda u: (3 * rs * u - 2.0) * u + c1
    roots = np.roots([rs, -1.0, c1, c0])
    real = sorted(x.real for x in roots if abs(x.imag) <= 1e-9 * abs(x) and x.real > 0)
    if not real:
        raise CaptureError("no turning point: orbit is captured")
    u = real[0]
    for _ in range(4):
        d = dP(u)
        if d == 0:
            break
        u -= P(u) / d
    # a double root means the orbit spirals onto the unstable circular orbit
    if dP(u) >= -1e-12 * abs(u):
        raise CaptureError("grazing the unstable circular orbit")
    return float(u)


def deflection_angle(setup: ScatteringSetup, method: str = "analytic") -> float:
    """Total deflection; ``analytic`` is the first-order (r_s/b) chi."""
    if method == "analytic":
        return setup.r_s / setup.b * setup.chi
    if method != "numeric":
        raise ValueError(f"unknown method {method!r}")
    rs, c1, c0 = _orbit_cubic(setup)
    u1 = turning_u(setup)
    # P(u) = (u1 - u) q(u) with q(u) = -r_s u^2 + (1 - r_s u1) u + c0/u1;
    # u = u1 (1 - t^2) removes the inverse square root at the turning point.
    k = 1.0 - rs * u1
    k0 = c0 / u1

    def integrand(t):
        u = u1 * (1.0 - t * t)
        return 1.0 / math.sqrt(-rs * u * u + k * u + k0)

    val, _ = quad(integrand, 0.0, 1.0, epsabs=0.0, epsrel=defaults.get("deflection_quad_epsrel"),
                  limit=200)
    return 4.0 * math.sqrt(u1) * val - math.pi


@dataclass(frozen=True)
class DeflectionRow:
    Q: int
    v: float
    b: float
    rs: float
    chi_analytic: float
    delta_phi_numeric: float      # nan when captured
    delta_phi_analytic: float
    abs_err: float


DEFLECT_HEADER = ["Q", "v", "b", "rs", "chi_analytic", "delta_phi_numeric", "delta_phi_analytic", "abs_err"]


def deflection_row(setup: ScatteringSetup) -> DeflectionRow:
    ana = deflection_angle(setup, "analytic")
    try:
        num = deflection_angle(setup, "numeric")
    except CaptureError:
        num = math.nan
    return DeflectionRow(setup.Q, setup.v, setup.b, setup.r_s, setup.chi, num, ana, abs(num - ana))


def write_deflection_csv(rows: Sequence[DeflectionRow], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(DEFLECT_HEADER)
    for row in rows:
        w.writerow([row.Q] + [format(float(getattr(row, k)), ".17g") for k in DEFLECT_HEADER[1:]])


def error_scaling(Q: int, v: float, r_s: float = 1.0, b0: float = 1e2, doublings: int = 5) -> dict:
    """Fit |numeric - analytic| ~ C (r_s/b)^p over successive doublings of b."""
    bs = b0 * 2.0 ** np.arange(doublings)
    errs = np.array([deflection_row(ScatteringSetup(r_s, v, b, Q)).abs_err for b in bs])
    x = np.log(r_s / bs)
    p, logC = np.polyfit(x, np.log(errs), 1)
    C = errs / (r_s / bs) ** 2
    return {"exponent": float(p), "C": C.tolist(), "b": bs.tolist(), "abs_err": errs.tolist()}


# --------------------------------------------------------------------------
# effective potentials of weak fields
# --------------------------------------------------------------------------

@dataclass
class EffectivePotentialCurve:
    r: np.ndarray
    U: np.ndarray
    centrifugal: np.ndarray
    script_E: Optional[float] = None
    well_minimum: Optional[tuple[float, float]] = None
    interior: bool = False          # minimum strictly inside the grid

    @property
    def total(self) -> np.ndarray:
        return self.U + self.centrifugal


def _refine_minimum(fn, r: np.ndarray, tot: np.ndarray) -> tuple[tuple[float, float], bool]:
    i = int(np.argmin(tot))
    if i == 0 or i == len(r) - 1:
        return (float(r[i]), float(tot[i])), False
    res = minimize_scalar(fn, bracket=(r[i - 1], r[i], r[i + 1]), method="golden", tol=1e-10)
    if r[i - 1] <= res.x <= r[i + 1] and res.fun <= tot[i]:
        return (float(res.x), float(res.fun)), True
    return (float(r[i]), float(tot[i])), True


def _cyl_U(profile, gam2: float, kap2: float, r=None):
    vals = profile.values if r is None else profile.sample(r)
    f, V0, V3 = vals[..., 0], vals[..., 2], vals[..., 3]
    return (gam2 + kap2) * (V0 + V3) + 0.5 * (gam2 - kap2) * f


def cylindrical_effective_potential(profile, charge_gamma: float, kappa: float, L: float,
                                    script_E: Optional[float] = None) -> EffectivePotentialCurve:
    """U(r) = (gamma^2 + kappa^2)(V0 + V3) + (gamma^2 - kappa^2) f/2 plus L^2/2r^2."""
    if profile.n != 2:
        raise ValueError("the cylindrical effective potential needs an n = 2 profile")
    g2, k2 = charge_gamma ** 2, kappa ** 2
    r = profile.r
    U = _cyl_U(profile, g2, k2)
    cent = 0.5 * L * L / (r * r)
    fn = lambda x: float(_cyl_U(profile, g2, k2, x)) + 0.5 * L * L / (x * x)
    if script_E is None:
        script_E = 0.5 * (g2 - k2 + 1)
    mini, interior = _refine_minimum(fn, r, U + cent)
    return EffectivePotentialCurve(r, U, cent, script_E, mini, interior)


def spherical_effective_potential(profile, charge_gamma: float, L: float) -> EffectivePotentialCurve:
    """gamma^2 A(r)/2 + L^2/2r^2 with A = 2 V0 + 3f/2."""
    if profile.n != 3:
        raise ValueError("the spherical analysis needs an n = 3 profile")
    g2 = charge_gamma ** 2
    r = profile.r
    A = 2 * profile.values[:, 2] + 1.5 * profile.values[:, 0]
    U = 0.5 * g2 * A
    cent = 0.5 * L * L / (r * r)

    def fn(x):
        v = profile.sample(x)
        return 0.5 * g2 * (2 * v[2] + 1.5 * v[0]) + 0.5 * L * L / (x * x)
    mini, interior = _refine_minimum(fn, r, U + cent)
    return EffectivePotentialCurve(r, U, cent, 0.5 * (g2 + 1), mini, interior)


@dataclass
class BoundVerdict:
    no_bound_possible: bool
    reason: str
    two_E: float
    curve: EffectivePotentialCurve


def spherical_bound_analysis(profile, charges: ConservedCharges) -> BoundVerdict:
    """Decide whether tachyon charges can give a bound orbit in a spherical weak field.

    With Q = -1, 2E = gamma^2 + 1 > 0 while the potential vanishes at infinity,
    so r-dot^2 stays positive far out.  The check scans the sampled radial law
    for an allowed region closed on both sides.
    """
    if charges.Q != -1:
        raise ValueError("out of scope: only tachyon charges (Q = -1) are analysed")
    gam = charges.charge_gamma or 0.0
    L = charges.L or 0.0
    curve = spherical_effective_potential(profile, gam, L)
    two_E = gam * gam + 1.0
    allowed = 0.5 * two_E - curve.total >= 0
    if two_E <= 0:
        return BoundVerdict(False, "2E is not positive", two_E, curve)
    if not allowed[-1]:
        return BoundVerdict(False, "radial motion forbidden at the outer grid edge", two_E, curve)
    # an allowed run that ends before the outer edge would be a trapped region
    edges = np.flatnonzero(np.diff(allowed.astype(int)) == -1)
    if edges.size:
        r_out = float(curve.r[edges[0]])
        return BoundVerdict(False, f"allowed region closes at r = {r_out:.6g}", two_E, curve)
    return BoundVerdict(True, "2E > 0 exceeds the potential at large r; every allowed region is open",
                        two_E, curve)


# --------------------------------------------------------------------------
# bound orbits in the cylindrical field
# --------------------------------------------------------------------------

@dataclass
class BoundOrbit:
    found: bool
    charge_gamma: float = math.nan
    kappa: float = math.nan
    L: float = math.nan
    script_E: float = math.nan
    r_peri: float = math.nan
    r_apo: float = math.nan
    margin: float = math.nan        # E minus the well minimum of the effective potential
    message: str = ""

    def charges(self) -> ConservedCharges:
        return ConservedCharges(charge_gamma=self.charge_gamma, L=self.L, kappa=self.kappa,
                                script_E=self.script_E, Q=-1)


def bound_initial_state(profile, orbit: BoundOrbit) -> GeodesicState:
    """Tachyon state at apocentre (r-dot = 0) carrying the orbit's charges.

    dt is fixed by g(u, u) = -1, so the energy constant is recomputed from it.
    """
    spec = LinearizedStatic(profile, 2)
    r = orbit.r_apo
    (A, B, C, D), _ = spec.perturbations(r)
    p = point(spec, 0.0, r, 0.0, 0.0)
    return normalized_state(spec, p, (0.0, orbit.L * math.exp(C) / (r * r), orbit.kappa * math.exp(D)), -1)


def _candidate(profile, gam: float, L: float, apo_factor: float, r_cap: float):
    """Solve for kappa so that the orbit's apocentre sits at apo_factor times the well minimum."""
    g2 = gam * gam

    def margin(kap):
        curve = cylindrical_effective_potential(profile, gam, kap, L)
        r_star, u_star = curve.well_minimum
        if not curve.interior:
            return math.nan, curve
        r_apo = min(apo_factor * r_star, r_cap)
        u_apo = float(_cyl_U(profile, g2, kap * kap, r_apo)) + 0.5 * L * L / r_apo ** 2
        return 0.5 * (g2 - kap * kap + 1) - u_apo, curve

    kaps = np.linspace(0.0, defaults.get("bound_search_gamma_max"), defaults.get("bound_search_gamma_steps"))
    vals = [margin(k)[0] for k in kaps]
    for k0, k1, m0, m1 in zip(kaps[:-1], kaps[1:], vals[:-1], vals[1:]):
        if np.isfinite(m0) and np.isfinite(m1) and m0 * m1 < 0:
            kap = brentq(lambda k: margin(k)[0], k0, k1, xtol=1e-14, rtol=1e-14)
            return kap, margin(kap)[1]
    return None, None


def bound_orbit_search(profile, apo_factor: float = 2.0) -> BoundOrbit:
    """Search (gamma, kappa, L) for a tachyon orbit trapped by the cylindrical well.

    For each gamma and L on a coarse grid, kappa is refined by root finding so
    that 2E = gamma^2 - kappa^2 + 1 puts the apocentre at ``apo_factor`` times
    the radius of the potential minimum.  The first candidate with both turning
    points inside the sampled grid (apocentre below half its outer edge) is
    returned, with turning points recomputed from the charges of the
    normalised launch state.
    """
    if profile.n != 2:
        raise ValueError("bound orbit search needs an n = 2 profile")
    r = profile.r
    if not np.any(profile.values):
        return BoundOrbit(False, message="zero field: no well")
    r_cap = defaults.get("bound_apo_fraction") * r[-1]
    gammas = np.linspace(0.0, defaults.get("bound_search_gamma_max"), defaults.get("bound_search_gamma_steps"))[1:]
    scale = profile.scale
    Ls = np.geomspace(1e-4 * scale, 1e1 * scale, defaults.get("bound_search_L_count"))
    spec = LinearizedStatic(profile, 2)
    best = -math.inf
    for gam in gammas:
        for L in Ls:
            kap, curve = _candidate(profile, gam, L, apo_factor, r_cap)
            if kap is None:
                if curve is not None:
                    best = max(best, curve.script_E - curve.well_minimum[1])
                continue
            trial = BoundOrbit(True, gam, kap, L, curve.script_E, math.nan,
                               min(apo_factor * curve.well_minimum[0], r_cap))
            try:
                s0 = bound_initial_state(profile, trial)
            except ValueError:
                continue
            ch = first_integrals(spec, s0)
            tps = radial_turning_points(ch, spec, (r[0] * 1.0001, r_cap))
            crossings = [tp.r for tp in tps if not tp.tangency]
            if len(crossings) != 2:
                continue
            peri, apo = crossings
            if peri <= 10 * r[0]:
                continue
            final = cylindrical_effective_potential(profile, ch.charge_gamma, ch.kappa, ch.L, ch.script_E)
            return BoundOrbit(True, ch.charge_gamma, ch.kappa, ch.L, ch.script_E, peri, apo,
                              ch.script_E - final.well_minimum[1], "bound orbit found")
    return BoundOrbit(False, margin=best, message="search budget exhausted")


def bound_orbit_report(profile, orbit: BoundOrbit, oscillations: int = 10,
                       tol: Optional[float] = None) -> dict:
    """Integrate a found orbit for the requested number of radial oscillations."""
    spec = LinearizedStatic(profile, 2)
    s0 = bound_initial_state(profile, orbit)
    # radial period estimate from the harmonic approximation of the well
    period = _radial_period(profile, orbit)
    traj = integrate(spec, s0, (0.0, period * (oscillations + 0.75)), tol=tol)
    rr = traj.states[:, 1]
    # radial oscillations: count pericentre passages (local minima of r)
    minima = int(np.sum((rr[1:-1] < rr[:-2]) & (rr[1:-1] <= rr[2:])))
    lo = orbit.r_peri * (1 - 1e-3)
    hi = orbit.r_apo * (1 + 1e-3)
    return {
        "charges": {"charge_gamma": orbit.charge_gamma, "kappa": orbit.kappa, "L": orbit.L,
                    "script_E": orbit.script_E},
        "r_peri": orbit.r_peri,
        "r_apo": orbit.r_apo,
        "oscillations": minima,
        "r_min": float(rr.min()),
        "r_max": float(rr.max()),
        "confined": bool(rr.min() >= lo and rr.max() <= hi),
        "max_q_drift": traj.max_q_drift,
        "charge_drift": traj.charge_drift,
        "status": traj.status,
        "steps": int(len(traj.tau)),
        "tau_end": float(traj.tau[-1]),
        "trajectory": traj,
    }


def _radial_period(profile, orbit: BoundOrbit) -> float:
    """2 times the integral of dr / r-dot between the turning points."""
    g2, k2, L = orbit.charge_gamma ** 2, orbit.kappa ** 2, orbit.L
    a, b = orbit.r_peri, orbit.r_apo

    def rdot2(r):
        return 2 * orbit.script_E - 2 * float(_cyl_U(profile, g2, k2, r)) - L * L / (r * r)

    # r = mid - half cos(phi) keeps the integrand finite at both ends
    mid, half = 0.5 * (a + b), 0.5 * (b - a)

    def integrand(ph):
        r = mid - half * math.cos(ph)
        v = rdot2(r)
        return half * math.sin(ph) / math.sqrt(v) if v > 0 else 0.0
    val, _ = quad(integrand, 0.0, math.pi, limit=200)
    return 2 * val


def write_bound_report(report: dict, path) -> None:
    out = {k: v for k, v in report.items() if k != "trajectory"}
    Path(path).write_text(json.dumps(out, indent=1))
