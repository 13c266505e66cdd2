"""Special-relativistic tachyon calculators.

Exchange-time reversal and wave-packet size between receding frames,
on-shell state counting, beta-decay endpoint spectra, oscillation phases and
the expansion of a tachyon-dominated universe.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import quad, solve_ivp

from . import defaults


# --------------------------------------------------------------------------
# exchange times and wave packets
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ExchangeScenario:
    """Ship at x0 receding with speed v (negative: approaching); tachyon speed V > 1."""

    x0: float
    v: float
    V: float

    def __post_init__(self):
        if not -1 < self.v < 1:
            raise ValueError("ship speed must satisfy |v| < 1")
        if not self.V > 1:
            raise ValueError("tachyon speed must satisfy V > 1")
        if not self.x0 > 0:
            raise ValueError("x0 must be positive")


@dataclass(frozen=True)
class ExchangeTimes:
    dt_earth: float
    dt_ship: float
    reversed: bool


def exchange_times(sc: ExchangeScenario) -> ExchangeTimes:
    """Emission-to-reception interval in the Earth and Ship frames."""
    dt_earth = sc.x0 / (sc.V - sc.v)
    lg = 1 / math.sqrt(1 - sc.v * sc.v)
    dt_ship = lg * (1 - sc.v * sc.V) * dt_earth
    return ExchangeTimes(dt_earth, dt_ship, sc.v * sc.V > 1)


@dataclass(frozen=True)
class PacketSize:
    dx_rest: float
    dx_boosted: float
    diverges: bool


def packet_size_transform(V: float, decay_rate: float, v: float,
                          threshold: Optional[float] = None) -> PacketSize:
    """Length V/Gamma of a decaying tachyon packet and its size V/[gamma Gamma |1 - vV|] seen from speed v."""
    if not decay_rate > 0:
        raise ValueError("decay rate must be positive")
    if not V > 1 or not -1 < v < 1:
        raise ValueError("need V > 1 and |v| < 1")
    threshold = defaults.get("packet_divergence_threshold") if threshold is None else threshold
    lg = 1 / math.sqrt(1 - v * v)
    gap = abs(1 - v * V)
    dx_rest = V / decay_rate
    dx = math.inf if gap == 0 else V / (lg * decay_rate * gap)
    return PacketSize(dx_rest, dx, gap < threshold)


# --------------------------------------------------------------------------
# phase space and spectra
# --------------------------------------------------------------------------

def on_shell_density(E0: float, m: float) -> float:
    """States per unit volume on the shell E = E0 of a tachyon of mass m: E0 p0 / 2 pi^2."""
    if E0 < 0:
        raise ValueError("E0 must be non-negative")
    return E0 * math.hypot(E0, m) / (2 * math.pi ** 2)


VARIANTS = ("massless", "bradyonic", "tachyonic")


@dataclass(frozen=True)
class SpectrumModel:
    variant: str
    E0: float
    m: float = 0.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown spectrum variant {self.variant!r}")
        if self.variant != "massless" and not self.m > 0:
            raise ValueError("massive variants need m > 0")
        if not self.E0 > 0:
            raise ValueError("E0 must be positive")
        if self.variant == "bradyonic" and self.m >= self.E0:
            raise ValueError("bradyonic mass must lie below E0")

    @property
    def endpoint(self) -> float:
        return self.E0 - self.m if self.variant == "bradyonic" else self.E0


def beta_spectrum(model: SpectrumModel, Ee):
    """Unnormalised electron spectrum from the neutrino phase-space factor."""
    Ee = np.asarray(Ee, dtype=float)
    if np.any(Ee < 0) or np.any(Ee > model.endpoint):
        raise ValueError(f"Ee outside the support [0, {model.endpoint!r}]")
    x = model.E0 - Ee
    if model.variant == "massless":
        out = x * x
    elif model.variant == "bradyonic":
        out = x * np.sqrt(np.maximum(x * x - model.m ** 2, 0.0))
    else:
        out = x * np.sqrt(x * x + model.m ** 2)
    return out if out.ndim else float(out)


def endpoint_slope(model: SpectrumModel) -> str:
    """How the spectrum meets its endpoint: ``zero``, ``infinite`` or ``finite``."""
    return {"massless": "zero", "bradyonic": "infinite", "tachyonic": "finite"}[model.variant]


def numeric_endpoint_slope(model: SpectrumModel, h: float = 1e-4) -> tuple[float, str]:
    """Least-squares slope on [endpoint - h, endpoint] and a classification.

    The window is shrunk tenfold: a slope that shrinks with it is ``zero``,
    one that grows is ``infinite`` and one that settles is ``finite``.
    """
    def fit(w):
        E = np.linspace(model.endpoint - w, model.endpoint, 41)
        return float(np.polyfit(E, beta_spectrum(model, E), 1)[0])

    s1, s2 = fit(h), fit(h / 10)
    scale = max(model.E0, model.m)
    if abs(s2) < 1e-3 * scale and abs(s2) < 0.5 * abs(s1):
        label = "zero"
    elif abs(s2) > 2 * abs(s1):
        label = "infinite"
    else:
        label = "finite"
    return s2, label


SPECTRUM_HEADER = ["Ee", "massless", "bradyonic", "tachyonic"]


def spectrum_table(E0: float, m: float, points: int = 101) -> np.ndarray:
    """Columns Ee and the three spectra; the bradyonic one is 0 beyond its endpoint."""
    Ee = np.linspace(0.0, E0, points)
    mm = SpectrumModel("massless", E0)
    tm = SpectrumModel("tachyonic", E0, m)
    cols = [Ee, beta_spectrum(mm, Ee)]
    if 0 < m < E0:
        bm = SpectrumModel("bradyonic", E0, m)
        inside = Ee <= bm.endpoint
        b = np.zeros_like(Ee)
        b[inside] = beta_spectrum(bm, Ee[inside])
    else:
        b = np.zeros_like(Ee)
    cols += [b, beta_spectrum(tm, Ee)]
    return np.column_stack(cols)


@dataclass(frozen=True)
class OscillationPhases:
    bradyonic: float
    tachyonic: float
    fractional_difference: float


def oscillation_phase(m2: float, k_or_omega: float, baseline: float,
                      elapsed: Optional[float] = None) -> OscillationPhases:
    """Small-mass phases: -(m^2/2k) t for a bradyon, +(m^2/2 omega) x for a tachyon.

    ``elapsed`` defaults to the baseline (x = t).
    """
    if m2 < 0:
        raise ValueError("m2 is a squared mass and must be non-negative")
    if k_or_omega <= math.sqrt(m2):
        raise ValueError("expansion needs k (or omega) well above the mass")
    t = baseline if elapsed is None else elapsed
    brad = -m2 / (2 * k_or_omega) * t
    tach = m2 / (2 * k_or_omega) * baseline
    diff = 0.0 if brad == 0 else abs(abs(tach) - abs(brad)) / abs(brad)
    return OscillationPhases(brad, tach, diff)


# --------------------------------------------------------------------------
# tachyon gas
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GasState:
    T: float
    a_scale: float
    statistics: str = "fermi"
    m: float = 1.0

    def __post_init__(self):
        if self.statistics not in ("fermi", "bose"):
            raise ValueError("statistics must be 'fermi' or 'bose'")
        if not self.T > 0 or not self.a_scale > 0:
            raise ValueError("T and a_scale must be positive")
        if not self.m >= 0:
            raise ValueError("m must be non-negative")


def gas_moments(T: float, m: float, statistics: str = "fermi") -> tuple[float, float, float]:
    """rho, P and d(rho)/dT of a single-species tachyon gas at zero chemical potential.

    With E = sqrt(p^2 - m^2) the integrals over p >= m become, in x = E/T,
        rho   = T^3/2pi^2 int x^2 p f dx
        P     = T/6pi^2   int p^3 f dx
        rho_T = T^3/2pi^2 int x^3 p f(1 -+ f) dx / T
    """
    _bose_pressure_guard(statistics)
    eps = defaults.get("gas_quad_epsrel")

    def p(x):
        return math.hypot(x * T, m)

    def f(x):
        return math.exp(-x) / (1.0 + math.exp(-x))

    def df(x):
        # -T df/dE = f (1 - f)
        fx = f(x)
        return fx * (1.0 - fx)

    def q(fn):
        val, _ = quad(fn, 0.0, 40.0, epsabs=0.0, epsrel=eps, limit=200)
        tail, _ = quad(fn, 40.0, math.inf, epsabs=0.0, epsrel=eps, limit=200)
        return val + tail

    c = 1 / (2 * math.pi ** 2)
    rho = c * T ** 3 * q(lambda x: x * x * p(x) * f(x))
    P = c * T / 3 * q(lambda x: p(x) ** 3 * f(x))
    # d rho / dT at fixed m: from x^2 p f with E = xT held as the integration variable
    rho_T = c * T ** 2 * q(lambda x: x ** 3 * p(x) * df(x))
    return rho, P, rho_T


def _bose_pressure_guard(statistics: str) -> None:
    if statistics == "bose":
        # Bose occupation diverges as T/E at E -> 0 and the p^3 weight stays
        # finite there (p -> m), so the pressure integral diverges logarithmically.
        raise ValueError("Bose statistics give a divergent pressure for a tachyon gas "
                         "(occupation ~ T/E at the E = 0 edge of the shell)")


def fermi_low_T_ratio() -> float:
    """T*^2 / m^2 = (ln 2 / 6 pi^2) / (3 zeta(3) / 4 pi^2): ratio of the low-T P/T and rho/T^3 coefficients."""
    zeta3 = 1.2020569031595942
    return (math.log(2) / 6) / (1.5 * zeta3 / 2)


def gas_exponents(T: float, m: float, statistics: str = "fermi", rel_step: float = 1e-3) -> tuple[float, float]:
    """Local logarithmic slopes d ln rho / d ln T and d ln P / d ln T."""
    hi = gas_moments(T * (1 + rel_step), m, statistics)
    lo = gas_moments(T * (1 - rel_step), m, statistics)
    dl = math.log((1 + rel_step) / (1 - rel_step))
    return math.log(hi[0] / lo[0]) / dl, math.log(hi[1] / lo[1]) / dl


@dataclass
class GasCurve:
    a: np.ndarray
    T: np.ndarray
    rho: np.ndarray
    P: np.ndarray
    mode: str
    status: str                 # "completed" or "domain_end"
    a_end: float = math.nan     # where T reaches zero, when it does
    conservation_residual: Optional[np.ndarray] = None


def closed_form_temperature(a, T1: float, a1: float):
    """(T/T1)^2 = 2 (a1/a)^2 - 1; NaN beyond a = a1 sqrt 2."""
    a = np.asarray(a, dtype=float)
    y = 2 * (a1 / a) ** 2 - 1
    # a = a1 sqrt 2 itself may round to y = -eps; that is the endpoint T = 0
    y = np.where(np.abs(y) <= 4 * np.finfo(float).eps, 0.0, y)
    with np.errstate(invalid="ignore"):
        return np.where(y >= 0, T1 * np.sqrt(np.abs(y)), np.nan)


def gas_evolution(initial: GasState, a_span: tuple[float, float], mode: str = "full_ode",
                  points: int = 101, tol: Optional[float] = None) -> GasCurve:
    """Temperature against scale factor for a tachyon-dominated expansion.

    ``full_ode`` integrates d(rho a^3)/da = -3 P a^2 for y = T^2, which stays
    smooth as T -> 0, alongside the work integral of 3 P a^2 so that the
    comoving energy balance can be checked at every output point.
    ``low_T_closed_form`` evaluates the leading-order low-temperature relation.
    """
    a0, a1 = map(float, a_span)
    if not 0 < a0 < a1:
        raise ValueError("a_span must satisfy 0 < a_start < a_end")
    a_grid = np.linspace(a0, a1, points)
    m, stat = initial.m, initial.statistics

    if mode == "low_T_closed_form":
        if stat != "fermi":
            raise ValueError("the closed form assumes Fermi statistics")
        T = closed_form_temperature(a_grid, initial.T, initial.a_scale)
        a_end = initial.a_scale * math.sqrt(2)
        status = "domain_end" if a1 > a_end else "completed"
        nan = np.full_like(a_grid, np.nan)
        return GasCurve(a_grid, T, nan, nan.copy(), mode, status, a_end if status == "domain_end" else math.nan)
    if mode != "full_ode":
        raise ValueError(f"unknown mode {mode!r}")
    if initial.a_scale != a0:
        raise ValueError("full_ode starts at the initial state's scale factor")

    tol = defaults.get("gas_ode_tol") if tol is None else tol
    rho0, _, _ = gas_moments(initial.T, m, stat)
    E0 = rho0 * a0 ** 3

    def rhs(a, y):
        T2 = y[0]
        if T2 <= 0:
            return [0.0, 0.0]
        T = math.sqrt(T2)
        rho, P, rho_T = gas_moments(T, m, stat)
        return [-6 * T * (rho + P) / (a * rho_T), 3 * P * a * a]

    def cold(a, y):
        return y[0]
    cold.terminal = True
    cold.direction = -1

    sol = solve_ivp(rhs, (a0, a1), [initial.T ** 2, 0.0], method="RK45", rtol=tol, atol=tol * initial.T ** 2,
                    t_eval=a_grid, events=cold, dense_output=False)
    a_out = sol.t
    T_out = np.sqrt(np.maximum(sol.y[0], 0.0))
    rho = np.empty_like(a_out)
    P = np.empty_like(a_out)
    for i, T in enumerate(T_out):
        rho[i], P[i] = (gas_moments(T, m, stat)[:2]) if T > 0 else (0.0, 0.0)
    residual = (rho * a_out ** 3 + sol.y[1] - E0) / E0
    if sol.status == 1:
        a_end = float(sol.t_events[0][0])
        return GasCurve(a_out, T_out, rho, P, mode, "domain_end", a_end, residual)
    return GasCurve(a_out, T_out, rho, P, mode, "completed", math.nan, residual)


COSMO_HEADER = ["a", "T_full", "T_closed_form", "rho", "P"]


def cosmo_table(initial: GasState, a_span: tuple[float, float], points: int = 101) -> np.ndarray:
    """Full-ODE and closed-form temperatures on one grid.

    Past the cold end of the full ODE the gas stays at T = 0 (a fixed point), so
    T, rho and P are written as zero there; the closed form is NaN past a1 sqrt 2.
    """
    full = gas_evolution(initial, a_span, "full_ode", points)
    grid = np.linspace(a_span[0], a_span[1], points)
    out = np.full((points, 5), np.nan)
    out[:, 0] = grid
    n = len(full.a)
    out[:n, 1], out[:n, 3], out[:n, 4] = full.T, full.rho, full.P
    if full.status == "domain_end":
        out[n:, [1, 3, 4]] = 0.0
    out[:, 2] = closed_form_temperature(grid, initial.T, initial.a_scale)
    return out


def write_table(header: Sequence[str], rows: np.ndarray, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format(float(v), ".17g") for v in row])
