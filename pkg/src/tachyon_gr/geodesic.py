"""Geodesic integration, causal classification and first integrals.

The affine parameter tau is real for every causal class: the state is
normalised so that g(u, u) = Q with Q = +1 (bradyon), 0 (light) or -1
(tachyon).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq, minimize_scalar

from . import defaults
from .spacetime import (
    SPHERICAL, CylindricalPowerLaw, DomainError, LinearizedStatic, MetricSpec,
    RobertsonWalker, Schwarzschild, SmoothedCylinder, SpacetimePoint,
    christoffel, cylinder_functions, metric_components,
)


@dataclass(frozen=True)
class GeodesicState:
    point: SpacetimePoint
    velocity: tuple[float, float, float, float]
    q_class: int

    def __post_init__(self):
        object.__setattr__(self, "velocity", tuple(float(v) for v in self.velocity))
        if self.q_class not in (-1, 0, 1):
            raise ValueError("q_class must be -1, 0 or +1")

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.point.coords, self.velocity])


@dataclass(frozen=True)
class ConservedCharges:
    """First integrals of a geodesic; entries that do not apply are None.

    charge_gamma : energy-like constant
    L            : total angular momentum per unit mass
    M            : azimuthal angular momentum (spherical charts)
    kappa        : linear momentum along the cylinder axis
    script_E     : constant of the radial equation
    Q            : causal class
    """

    charge_gamma: Optional[float] = None
    L: Optional[float] = None
    M: Optional[float] = None
    kappa: Optional[float] = None
    script_E: Optional[float] = None
    Q: int = -1


def invariant(spec: MetricSpec, x: Sequence[float], u: Sequence[float]) -> float:
    g = metric_components(spec, np.asarray(x, dtype=float))
    u = np.asarray(u, dtype=float)
    return float(np.diag(g) @ (u * u))


def classify(state: GeodesicState, spec: MetricSpec, tol: Optional[float] = None) -> int:
    """Causal class (+1, 0, -1) from the sign of g(u, u)."""
    u = np.asarray(state.velocity)
    if not np.any(u):
        raise ValueError("velocity must not vanish")
    tol = defaults.get("classify_tol") if tol is None else tol
    val = invariant(spec, state.point.coords, u)
    if abs(val) < tol:
        return 0
    return 1 if val > 0 else -1


def normalized_state(spec: MetricSpec, p: SpacetimePoint, spatial: Sequence[float], Q: int,
                     future: bool = True) -> GeodesicState:
    """Complete (dr, dtheta, dx3) with the dt fixing g(u, u) = Q."""
    g = np.diag(metric_components(spec, p))
    sp = np.asarray(spatial, dtype=float)
    dt2 = (Q - g[1:] @ (sp * sp)) / g[0]
    if dt2 < 0:
        raise ValueError(f"no real dt gives g(u,u) = {Q} for these spatial velocities")
    dt = math.sqrt(dt2) * (1 if future else -1)
    return GeodesicState(p, (dt, *sp), Q)


# --------------------------------------------------------------------------
# first integrals
# --------------------------------------------------------------------------

def _angular(r2_factor: float, th: float, dth: float, dph: float) -> tuple[float, float]:
    """M and L for an angular block r2_factor * (dtheta^2 + sin^2 dphi^2)."""
    s2 = math.sin(th) ** 2
    M = r2_factor * s2 * dph
    if s2 == 0.0:
        if dph != 0.0:
            raise DomainError("sin(theta) = 0 with nonzero azimuthal motion")
        return 0.0, abs(r2_factor * dth)
    return M, math.sqrt((r2_factor * dth) ** 2 + M * M / s2)


def first_integrals(spec: MetricSpec, state: GeodesicState) -> ConservedCharges:
    x = np.asarray(state.point.coords)
    u = np.asarray(state.velocity)
    t, r, th, _ = x
    dt, dr, dth, d3 = u
    Q = state.q_class
    if isinstance(spec, RobertsonWalker):
        A, _ = spec.scale(t)
        B, _ = spec.spatial(r)
        M, L = _angular(A * r * r, th, dth, d3)
        two_E = A * A * B * dr * dr + L * L / (r * r)
        return ConservedCharges(L=L, M=M, script_E=0.5 * two_E, Q=Q)
    if isinstance(spec, Schwarzschild):
        A = 1 - spec.r_s / r
        M, L = _angular(r * r, th, dth, d3)
        gam = A * dt
        return ConservedCharges(charge_gamma=gam, L=L, M=M, script_E=0.5 * (gam * gam - Q), Q=Q)
    if isinstance(spec, (CylindricalPowerLaw, SmoothedCylinder)):
        (A, _, _), _, (C, _, _) = cylinder_functions(spec, r)
        return ConservedCharges(charge_gamma=A * dt, L=r * r * dth, kappa=C * d3, Q=Q)
    if isinstance(spec, LinearizedStatic):
        (A, B, C, D), _ = spec.perturbations(r)
        gam = dt * math.exp(A)
        if spec.n == 2:
            kap = d3 * math.exp(-D)
            L = r * r * dth * math.exp(-C)
            return ConservedCharges(charge_gamma=gam, L=L, kappa=kap,
                                    script_E=0.5 * (gam * gam - kap * kap - Q), Q=Q)
        M, L = _angular(r * r * math.exp(-C), th, dth, d3)
        return ConservedCharges(charge_gamma=gam, L=L, M=M, script_E=0.5 * (gam * gam - Q), Q=Q)
    raise TypeError(f"unsupported metric spec {type(spec).__name__}")


def _charge_vector(spec, x, u, Q) -> dict[str, float]:
    c = first_integrals(spec, GeodesicState(SpacetimePoint(spec.chart, tuple(x)), tuple(u), Q))
    out = {}
    for name in ("charge_gamma", "L", "M", "kappa", "script_E"):
        v = getattr(c, name)
        if v is not None:
            out[name] = v
    return out


# --------------------------------------------------------------------------
# radial law and turning points
# --------------------------------------------------------------------------

def radial_function(charges: ConservedCharges, spec: MetricSpec, r: float) -> float:
    """A quantity with the sign of dr/dtau^2 at radius r (zero at turning points)."""
    Q = charges.Q
    L2 = (charges.L or 0.0) ** 2
    if isinstance(spec, RobertsonWalker):
        # A^2 dr^2 = (2E - L^2/r^2) / B; time drops out of the sign
        k = 0.0 if spec.curvature == 0 else spec.curvature / spec.curvature_radius ** 2
        return (2 * charges.script_E - L2 / (r * r)) * (1 - k * r * r)
    if isinstance(spec, Schwarzschild):
        A = 1 - spec.r_s / r
        return charges.charge_gamma ** 2 - A * (Q + L2 / (r * r))
    if isinstance(spec, (CylindricalPowerLaw, SmoothedCylinder)):
        (A, _, _), (B, _, _), (C, _, _) = cylinder_functions(spec, r)
        k2 = (charges.kappa or 0.0) ** 2
        return (charges.charge_gamma ** 2 / A - k2 / C - L2 / (r * r) - Q) / B
    if isinstance(spec, LinearizedStatic):
        (A, _, _, D), _ = spec.perturbations(r)
        gam2 = charges.charge_gamma ** 2
        if spec.n == 2:
            k2 = (charges.kappa or 0.0) ** 2
            return 2 * charges.script_E - gam2 * A - k2 * D - L2 / (r * r)
        return 2 * charges.script_E - gam2 * A - L2 / (r * r)
    raise TypeError(f"unsupported metric spec {type(spec).__name__}")


class TurningPoint(NamedTuple):
    r: float
    tangency: bool = False


def radial_turning_points(charges: ConservedCharges, spec: MetricSpec,
                          r_range: tuple[float, float], samples: Optional[int] = None,
                          rel_tol: Optional[float] = None) -> list[TurningPoint]:
    """Roots of the radial law inside ``r_range`` found by scan plus bisection."""
    samples = samples or defaults.get("turning_scan_samples")
    rel_tol = rel_tol or defaults.get("turning_bisect_rel")
    lo, hi = map(float, r_range)
    if not 0 < lo < hi:
        raise ValueError("r_range must satisfy 0 < lo < hi")
    grid = np.geomspace(lo, hi, samples) if hi / lo > 10 else np.linspace(lo, hi, samples)
    vals = np.array([radial_function(charges, spec, r) for r in grid])
    xtol = rel_tol * (hi - lo)
    fn = lambda r: radial_function(charges, spec, r)
    roots: list[TurningPoint] = []
    for i in range(samples - 1):
        a, b = vals[i], vals[i + 1]
        if a == 0.0:
            roots.append(TurningPoint(float(grid[i])))
        elif a * b < 0:
            roots.append(TurningPoint(brentq(fn, grid[i], grid[i + 1], xtol=xtol, rtol=1e-15)))
    if vals[-1] == 0.0:
        roots.append(TurningPoint(float(grid[-1])))
    # grazing roots: local extremum of the radial law that touches zero without crossing
    scale = np.max(np.abs(vals)) or 1.0
    for i in range(1, samples - 1):
        a, b, c = vals[i - 1], vals[i], vals[i + 1]
        if a * b <= 0 or b * c <= 0:
            continue
        if abs(b) <= abs(a) and abs(b) <= abs(c):
            res = minimize_scalar(lambda r: abs(fn(r)), bracket=(grid[i - 1], grid[i], grid[i + 1]),
                                  method="golden", tol=1e-12)
            if lo <= res.x <= hi and abs(fn(res.x)) < 1e-10 * scale:
                roots.append(TurningPoint(float(res.x), True))
    return sorted(roots)


# --------------------------------------------------------------------------
# integration
# --------------------------------------------------------------------------

@dataclass
class Trajectory:
    spec: MetricSpec
    tau: np.ndarray
    states: np.ndarray           # shape (N, 8): coordinates then velocities
    q_class: int
    q_residual: np.ndarray
    charge_drift: dict[str, float]
    status: str                  # "completed", "domain_exit" or "step_underflow"
    message: str = ""
    _interp: Optional[CubicHermiteSpline] = field(default=None, repr=False)

    @property
    def max_q_drift(self) -> float:
        return float(np.max(np.abs(self.q_residual)))

    @property
    def max_charge_drift(self) -> float:
        return max(self.charge_drift.values(), default=0.0)

    def state_at(self, tau: float) -> np.ndarray:
        """Dense output by cubic Hermite interpolation between accepted steps."""
        if self._interp is None:
            self._interp = _hermite(self)
        return self._interp(tau)

    def final_state(self) -> GeodesicState:
        x = self.states[-1]
        return GeodesicState(SpacetimePoint(self.spec.chart, tuple(x[:4])), tuple(x[4:]), self.q_class)

    def to_csv(self, path_or_file) -> None:
        header = ["tau", "t", "r", "theta", "phi_or_z", "dt", "dr", "dtheta", "dphi_or_dz", "q_residual"]
        own = isinstance(path_or_file, str) or hasattr(path_or_file, "__fspath__")
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for tau, row, q in zip(self.tau, self.states, self.q_residual):
                w.writerow([format(float(v), ".17g") for v in (tau, *row, q)])
        finally:
            if own:
                fh.close()


def _hermite(traj: Trajectory) -> CubicHermiteSpline:
    derivs = np.array([_full_rhs(traj.spec, s) for s in traj.states])
    tau = traj.tau
    if tau[-1] < tau[0]:
        return CubicHermiteSpline(tau[::-1], traj.states[::-1], derivs[::-1])
    return CubicHermiteSpline(tau, traj.states, derivs)


def _full_rhs(spec: MetricSpec, y: np.ndarray) -> np.ndarray:
    x, u = y[:4], y[4:]
    gam = christoffel(spec, x)
    acc = -np.einsum("lmn,m,n->l", gam, u, u)
    return np.concatenate([u, acc])


def _guard_events(spec: MetricSpec, active: list[int]):
    events = []
    ir = active.index(1)

    def ev(fn):
        fn.terminal = True
        fn.direction = -1
        events.append(fn)

    if isinstance(spec, Schwarzschild):
        r_stop = spec.r_s * (1 + defaults.get("horizon_guard"))
        ev(lambda tau, y: y[ir] - r_stop)
    elif isinstance(spec, RobertsonWalker):
        if spec.curvature == 1:
            r_stop = spec.curvature_radius * (1 - defaults.get("closure_guard"))
            ev(lambda tau, y: r_stop - y[ir])
        if spec.scale_model == "power_law" and spec.rate != 0:
            ev(lambda tau, y: y[0])
    elif isinstance(spec, CylindricalPowerLaw):
        r_axis = defaults.get("axis_guard")
        ev(lambda tau, y: y[ir] - r_axis)
    elif isinstance(spec, LinearizedStatic):
        grid = spec.profile.r
        ev(lambda tau, y: y[ir] - grid[0])
        ev(lambda tau, y: grid[-1] - y[ir])
    if not isinstance(spec, LinearizedStatic):
        ev(lambda tau, y: y[ir])
    return events


def is_equatorial(spec: MetricSpec, state: GeodesicState) -> bool:
    return (spec.chart == SPHERICAL and state.point.theta == math.pi / 2
            and state.velocity[2] == 0.0)


def integrate(spec: MetricSpec, s0: GeodesicState, tau_span: tuple[float, float],
              tol: Optional[float] = None, max_step: float = math.inf) -> Trajectory:
    """Integrate the geodesic equation with an adaptive Dormand-Prince 5(4) pair.

    Equatorial initial data on spherical charts are integrated as the reduced
    (t, r, phi) system.  The run stops early at the domain guards (horizon,
    closed-universe radius, big bang, edge of a sampled field profile).
    """
    tol = defaults.get("integrate_tol") if tol is None else tol
    if tol <= 0:
        raise ValueError("tol must be positive")
    y0_full = s0.vector
    metric_components(spec, y0_full[:4])   # rejects invalid starting points
    if not np.all(np.isfinite(y0_full)):
        raise ValueError("initial state must be finite")

    active = [0, 1, 3] if is_equatorial(spec, s0) else [0, 1, 2, 3]
    idx = active + [4 + i for i in active]
    frozen = y0_full.copy()

    def expand(y):
        full = frozen.copy()
        full[idx] = y
        return full

    nan = np.full(len(idx), np.nan)

    def rhs(tau, y):
        # a trial stage outside the chart is rejected by the step controller
        try:
            return _full_rhs(spec, expand(y))[idx]
        except DomainError:
            return nan

    events = _guard_events(spec, active)
    sol = solve_ivp(rhs, tau_span, y0_full[idx], method="RK45", rtol=tol, atol=tol,
                    events=events or None, max_step=max_step)

    states = np.array([expand(y) for y in sol.y.T])
    tau = sol.t
    if sol.status == 1:
        status, message = "domain_exit", "stopped at a domain guard"
    elif sol.status == -1:
        status, message = "step_underflow", sol.message
    else:
        status, message = "completed", ""

    Q = s0.q_class
    q_res = np.array([invariant(spec, s[:4], s[4:]) - Q for s in states])
    c0 = _charge_vector(spec, states[0, :4], states[0, 4:], Q)
    drift = {k: 0.0 for k in c0}
    for s in states[1:]:
        c = _charge_vector(spec, s[:4], s[4:], Q)
        for k, v in c.items():
            drift[k] = max(drift[k], abs(v - c0[k]))
    return Trajectory(spec, tau, states, Q, q_res, drift, status, message)
