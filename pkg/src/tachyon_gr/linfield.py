"""Linearised field of static, conserved, circulating sources.

The source is the n-dimensional spatial stress

    T_ij = delta_ij a(r) + D_ij b(r),   D_ij = delta_ij - n x_i x_j / r^2,

with a non-negative flow envelope b(r) and the isotropic part a(r) fixed by
the conservation law r^n a' = (n - 1)(r^n b)'.  The spatial metric
perturbation is h_ij = delta_ij f(r) + D_ij g(r); h_00 = 4 V0 and, for the
cylinder, h_33 = 4 V3.  All radial integrals of the three envelope families
are available in closed form, so the fields are exact up to rounding.
"""

from __future__ import annotations

import contextlib
import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicHermiteSpline
from scipy.special import betainc, beta as beta_fn, exp1, gamma as gamma_fn, gammainc, gammaincc, roots_legendre

from . import defaults

SHAPES = ("top_hat", "gaussian", "poly_cutoff")

# debug hook: scales the prefactor of the traceless field g only
_G_PREFACTOR_SCALE = 1.0


@contextlib.contextmanager
def _perturbed_g_prefactor(scale: float):
    global _G_PREFACTOR_SCALE
    old = _G_PREFACTOR_SCALE
    _G_PREFACTOR_SCALE = scale
    try:
        yield
    finally:
        _G_PREFACTOR_SCALE = old


def _ball_area(n: int) -> float:
    return 2 * math.pi if n == 2 else 4 * math.pi


# --------------------------------------------------------------------------
# envelopes
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SourceEnvelope:
    """Radial envelope b(r) >= 0.

    shape ``top_hat`` uses ``R``; ``gaussian`` uses ``sigma`` (b0 exp(-r^2/2 sigma^2));
    ``poly_cutoff`` uses ``R`` and integer ``k`` (b0 (1 - r^2/R^2)^k inside R).
    """

    shape: str
    b0: float = 1.0
    n: int = 2
    R: Optional[float] = None
    sigma: Optional[float] = None
    k: Optional[int] = None

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown envelope shape {self.shape!r}")
        if self.n not in (2, 3):
            raise ValueError("n must be 2 or 3")
        if not (self.b0 >= 0 and math.isfinite(self.b0)):
            raise ValueError("amplitude b0 must be finite and non-negative")
        if self.shape == "gaussian":
            if not (self.sigma and self.sigma > 0 and math.isfinite(self.sigma)):
                raise ValueError("gaussian envelope needs sigma > 0")
        else:
            if not (self.R and self.R > 0 and math.isfinite(self.R)):
                raise ValueError(f"{self.shape} envelope needs R > 0")
        if self.shape == "poly_cutoff":
            if self.k is None or int(self.k) != self.k or not 1 <= self.k <= 12:
                raise ValueError("poly_cutoff needs an integer exponent 1 <= k <= 12")

    @classmethod
    def top_hat(cls, R: float, b0: float = 1.0, n: int = 2) -> "SourceEnvelope":
        return cls("top_hat", b0, n, R=R)

    @classmethod
    def gaussian(cls, sigma: float, b0: float = 1.0, n: int = 2) -> "SourceEnvelope":
        return cls("gaussian", b0, n, sigma=sigma)

    @classmethod
    def poly_cutoff(cls, R: float, k: int, b0: float = 1.0, n: int = 2) -> "SourceEnvelope":
        return cls("poly_cutoff", b0, n, R=R, k=int(k))

    def scaled(self, factor: float) -> "SourceEnvelope":
        return replace(self, b0=self.b0 * factor)

    @property
    def scale(self) -> float:
        return self.sigma if self.shape == "gaussian" else self.R

    @property
    def breakpoints(self) -> list[float]:
        if self.shape == "gaussian":
            return [self.sigma, 4 * self.sigma, 12 * self.sigma]
        return [self.R]

    def params(self) -> dict:
        out = {"shape": self.shape, "b0": self.b0, "n": self.n}
        for key in ("R", "sigma", "k"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        return out

    # -- pointwise values ------------------------------------------------

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.shape == "top_hat":
            return np.where(r < self.R, self.b0, 0.0)
        if self.shape == "gaussian":
            return self.b0 * np.exp(-r * r / (2 * self.sigma ** 2))
        u = np.clip(1 - (r / self.R) ** 2, 0.0, None)
        return self.b0 * u ** self.k

    # -- radial integrals ------------------------------------------------

    def moment(self, m: float, r):
        """Integral of s^m b(s) over (0, r)."""
        r = np.asarray(r, dtype=float)
        if self.shape == "top_hat":
            rho = np.minimum(r, self.R)
            return self.b0 * rho ** (m + 1) / (m + 1)
        if self.shape == "gaussian":
            a = (m + 1) / 2
            x = r * r / (2 * self.sigma ** 2)
            return self.b0 * 0.5 * (2 * self.sigma ** 2) ** a * gamma_fn(a) * gammainc(a, x)
        a = (m + 1) / 2
        x = np.minimum(r / self.R, 1.0) ** 2
        return self.b0 * 0.5 * self.R ** (m + 1) * beta_fn(a, self.k + 1) * betainc(a, self.k + 1, x)

    def total_moment(self, m: float) -> float:
        return float(self.upper_moment(m, 0.0))

    def upper_moment(self, m: float, r):
        """Integral of s^m b(s) over (r, inf)."""
        r = np.asarray(r, dtype=float)
        if self.shape == "top_hat":
            rho = np.minimum(r, self.R)
            return self.b0 * (self.R ** (m + 1) - rho ** (m + 1)) / (m + 1)
        if self.shape == "gaussian":
            a = (m + 1) / 2
            x = r * r / (2 * self.sigma ** 2)
            return self.b0 * 0.5 * (2 * self.sigma ** 2) ** a * gamma_fn(a) * gammaincc(a, x)
        a = (m + 1) / 2
        x = np.minimum(r / self.R, 1.0) ** 2
        return self.b0 * 0.5 * self.R ** (m + 1) * beta_fn(a, self.k + 1) * betainc(self.k + 1, a, 1 - x)

    def tail_inverse(self, r):
        """Integral of b(s)/s over (r, inf); logarithmically divergent at r -> 0."""
        r = np.asarray(r, dtype=float)
        if self.shape == "top_hat":
            return self.b0 * np.log(self.R / np.minimum(r, self.R))
        if self.shape == "gaussian":
            return 0.5 * self.b0 * exp1(r * r / (2 * self.sigma ** 2))
        x = np.minimum(r / self.R, 1.0) ** 2
        return 0.5 * self.b0 * _log_tail(x, self.k)

    def tail_log(self, r):
        """Integral of s ln(s) b(s) over (r, inf)."""
        r = np.asarray(r, dtype=float)
        if self.shape == "top_hat":
            rho = np.minimum(r, self.R)

            def F(s):
                return s * s * (0.5 * np.log(s) - 0.25)
            return self.b0 * (F(self.R) - F(rho))
        if self.shape == "gaussian":
            s2 = self.sigma ** 2
            x = r * r / (2 * s2)
            return 0.5 * self.b0 * s2 * ((math.log(2 * s2) + np.log(x)) * np.exp(-x) + exp1(x))
        K = self.k + 1
        x = np.minimum(r / self.R, 1.0) ** 2
        one_minus = (1 - x) ** K
        log_int = (np.log(x) * one_minus + _log_tail(x, K)) / K
        return self.b0 * 0.5 * self.R ** 2 * (math.log(self.R) * one_minus / K + 0.5 * log_int)


def _log_tail(x, k: int):
    """Integral of (1-u)^k / u over (x, 1) for integer k >= 0."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        out = -np.log(x)
    w = 1 - x
    term = np.ones_like(x)
    for i in range(1, k + 1):
        term = term * w
        out = out - term / i
    return np.where(x >= 1.0, 0.0, out)


# --------------------------------------------------------------------------
# stress profile
# --------------------------------------------------------------------------

def default_grid(scale: float, points: Optional[int] = None) -> np.ndarray:
    points = points or defaults.get("grid_points")
    return np.geomspace(defaults.get("grid_inner") * scale, defaults.get("grid_outer") * scale, points)


@dataclass(frozen=True)
class StressProfile:
    """Conserved static stress of a circulating flow.

    ``t00`` is the energy-density envelope; ``t33`` the axial pressure
    envelope (cylinder only).  Either may be None.
    """

    b: SourceEnvelope
    grid: np.ndarray
    a_of_r: np.ndarray
    t00: Optional[SourceEnvelope] = None
    t33: Optional[SourceEnvelope] = None

    @property
    def n(self) -> int:
        return self.b.n

    def a(self, r):
        """Isotropic part fixed by conservation with a(inf) = 0."""
        n = self.n
        return (n - 1) * self.b(r) - n * (n - 1) * self.b.tail_inverse(r)

    def potential_part(self, r):
        """a - (n-1) b: the non-positive, non-decreasing well."""
        n = self.n
        return -n * (n - 1) * self.b.tail_inverse(r)

    def tensor(self, x: np.ndarray) -> np.ndarray:
        """T_ij at a Cartesian point x (length n)."""
        x = np.asarray(x, dtype=float)
        r = float(np.linalg.norm(x))
        n = self.n
        D = np.eye(n) - n * np.outer(x, x) / (r * r)
        return np.eye(n) * float(self.a(r)) + D * float(self.b(r))

    def kinetic_tensor(self, x: np.ndarray) -> np.ndarray:
        """Flow part (delta_ij - x_i x_j / r^2) b(r); orthogonal to x."""
        x = np.asarray(x, dtype=float)
        r2 = float(x @ x)
        return (np.eye(len(x)) - np.outer(x, x) / r2) * float(self.b(math.sqrt(r2)))


def build_stress(envelope: SourceEnvelope, flow_speed: Optional[float] = None,
                 t00: Optional[SourceEnvelope] = None, t33: Optional[SourceEnvelope] = None,
                 grid: Optional[np.ndarray] = None) -> StressProfile:
    """Complete a flow envelope into a conserved stress profile.

    With ``flow_speed`` v and no explicit ``t00`` the energy density is taken
    as b / v^2 (the ratio of energy density to pressure of a free flow).
    """
    if t33 is not None and envelope.n != 2:
        raise ValueError("an axial pressure envelope only applies to the cylinder (n = 2)")
    for other in (t00, t33):
        if other is not None and other.n != envelope.n:
            raise ValueError("all envelopes must share the same n")
    if t00 is None and flow_speed is not None:
        if flow_speed == 0:
            raise ValueError("flow_speed must be nonzero")
        t00 = envelope.scaled(1.0 / flow_speed ** 2)
    grid = default_grid(envelope.scale) if grid is None else np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0) or grid[0] <= 0:
        raise ValueError("grid must be positive and strictly increasing")
    n = envelope.n
    a = (n - 1) * envelope(grid) - n * (n - 1) * envelope.tail_inverse(grid)
    return StressProfile(envelope, grid, a, t00, t33)


# --------------------------------------------------------------------------
# sampled radial functions and the field profile
# --------------------------------------------------------------------------

class SampledFunction:
    """Values and derivatives on a grid, cubic Hermite interpolation in between."""

    def __init__(self, r: np.ndarray, values: np.ndarray, derivatives: np.ndarray):
        self.r = np.asarray(r, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.derivatives = np.asarray(derivatives, dtype=float)
        self._spline = CubicHermiteSpline(self.r, self.values, self.derivatives)
        self._dspline = self._spline.derivative()

    def __call__(self, r):
        return self._spline(r)

    def derivative(self, r):
        return self._dspline(r)

    def __add__(self, other: "SampledFunction") -> "SampledFunction":
        return SampledFunction(self.r, self.values + other.values, self.derivatives + other.derivatives)


FIELD_NAMES = ("f", "g", "V0", "V3")


@dataclass
class FieldProfile:
    r: np.ndarray
    values: np.ndarray          # shape (N, 4): f, g, V0, V3
    derivatives: np.ndarray     # shape (N, 4)
    n: int
    asymptotic_coeff: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.derivatives = np.asarray(self.derivatives, dtype=float)
        if np.any(np.diff(self.r) <= 0):
            raise ValueError("grid must be strictly increasing")
        self._spline = CubicHermiteSpline(self.r, self.values, self.derivatives)
        self._dspline = self._spline.derivative()

    @classmethod
    def from_functions(cls, r, n: int, f=None, g=None, V0=None, V3=None, derivatives=None,
                       meta: Optional[dict] = None) -> "FieldProfile":
        """Profile from callables; derivatives are callables or centred differences."""
        r = np.asarray(r, dtype=float)
        fns = [f, g, V0, V3]
        vals = np.column_stack([np.zeros_like(r) if fn is None else np.asarray(fn(r), dtype=float)
                                * np.ones_like(r) for fn in fns])
        ders = np.zeros_like(vals)
        for j, fn in enumerate(fns):
            if fn is None:
                continue
            if derivatives and derivatives[j] is not None:
                ders[:, j] = derivatives[j](r)
            else:
                h = 1e-6 * r
                ders[:, j] = (np.asarray(fn(r + h)) - np.asarray(fn(r - h))) / (2 * h)
        coeff = float(vals[-1, 1] * r[-1] ** n)
        return cls(r, vals, ders, n, coeff, dict(meta or {}))

    def sample(self, r: float) -> np.ndarray:
        return self._spline(r)

    def sample_derivative(self, r: float) -> np.ndarray:
        return self._dspline(r)

    def function(self, name: str) -> SampledFunction:
        j = FIELD_NAMES.index(name)
        return SampledFunction(self.r, self.values[:, j], self.derivatives[:, j])

    def __getattr__(self, name):
        if name in FIELD_NAMES:
            return self.values[:, FIELD_NAMES.index(name)]
        raise AttributeError(name)

    def lensing_potential(self, r=None):
        """V0 + V3, the potential that deflects light travelling along the 3-axis."""
        if r is None:
            return self.values[:, 2] + self.values[:, 3]
        v = self.sample(r)
        return v[..., 2] + v[..., 3]

    @property
    def scale(self) -> float:
        return float(self.meta.get("scale", math.sqrt(self.r[0] * self.r[-1])))

    # -- export / import ------------------------------------------------

    def to_csv(self, path) -> None:
        """CSV ``r,f,g,V0,V3`` plus a JSON sidecar next to it."""
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["r", *FIELD_NAMES])
            for ri, row in zip(self.r, self.values):
                w.writerow([format(float(v), ".17g") for v in (ri, *row)])
        side = {
            "n": self.n,
            "asymptotic_coeff": self.asymptotic_coeff,
            "conventions": {
                "h00": "4 V0", "h33": "4 V3", "hij": "delta_ij f + D_ij g",
                "g_prefactor": "-16 pi G / (n + 2)", "units": "c = 1, lengths in source units",
            },
            "meta": self.meta,
            "derivatives": {name: [float(v) for v in self.derivatives[:, j]]
                            for j, name in enumerate(FIELD_NAMES)},
        }
        sidecar_path(path).write_text(json.dumps(side, indent=1))

    @classmethod
    def from_csv(cls, path) -> "FieldProfile":
        path = Path(path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if rows[0] != ["r", *FIELD_NAMES]:
            raise ValueError(f"unexpected header {rows[0]!r}")
        data = np.array([[float(v) for v in row] for row in rows[1:]])
        side = json.loads(sidecar_path(path).read_text())
        ders = np.column_stack([side["derivatives"][name] for name in FIELD_NAMES])
        return cls(data[:, 0], data[:, 1:], ders, int(side["n"]), float(side["asymptotic_coeff"]),
                   side.get("meta", {}))


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_suffix(path.suffix + ".json")


# --------------------------------------------------------------------------
# field solution
# --------------------------------------------------------------------------

def g_prefactor(n: int, G: float = 1.0) -> float:
    return -16 * math.pi * G / (n + 2) * _G_PREFACTOR_SCALE


def exact_fg(env: SourceEnvelope, r, G: float = 1.0):
    """f, g, f', g' at radii r from the closed-form radial integrals."""
    n = env.n
    r = np.asarray(r, dtype=float)
    M = env.moment(n + 1, r)
    K = env.tail_inverse(r)
    c = g_prefactor(n, G)
    g = c * (M / r ** n + r * r * K)
    dg = c * (-n * M / r ** (n + 1) + 2 * r * K)
    f = 8 * math.pi * G * (n - 1) * (env.upper_moment(1, r) - r * r * K)
    # both terms underflow together far outside the source; f is non-negative
    f = np.maximum(f, 0.0)
    df = -16 * math.pi * G * (n - 1) * r * K
    return f, g, df, dg


def exact_potential(env: Optional[SourceEnvelope], r, G: float = 1.0, r_ref: Optional[float] = None):
    """Poisson potential V with laplacian(V) = 4 pi G rho, and V'.

    n = 3: V -> -G M / r.  n = 2: V = 2 G lambda ln(r / r_ref) outside the
    source, r_ref defaulting to the envelope scale.
    """
    r = np.asarray(r, dtype=float)
    if env is None:
        return np.zeros_like(r), np.zeros_like(r)
    if env.n == 3:
        M2 = env.moment(2, r)
        V = -4 * math.pi * G * (M2 / r + env.upper_moment(1, r))
        return V, 4 * math.pi * G * M2 / (r * r)
    r_ref = env.scale if r_ref is None else r_ref
    M1 = env.moment(1, r)
    lr = math.log(r_ref)
    V = 4 * math.pi * G * (np.log(r / r_ref) * M1 + env.tail_log(r) - lr * env.upper_moment(1, r))
    return V, 4 * math.pi * G * M1 / r


def newtonian_potentials(stress: StressProfile, G: float = 1.0) -> tuple[SampledFunction, SampledFunction]:
    """(V0, V3) on the stress grid.  V3 vanishes identically for n = 3."""
    if stress.t00 is None:
        raise ValueError("stress profile has no energy-density envelope (t00)")
    r = stress.grid
    r_ref = stress.b.scale
    V0, dV0 = exact_potential(stress.t00, r, G, r_ref)
    if stress.n == 3:
        V3, dV3 = np.zeros_like(r), np.zeros_like(r)
    else:
        V3, dV3 = exact_potential(stress.t33, r, G, r_ref)
    return SampledFunction(r, V0, dV0), SampledFunction(r, V3, dV3)


def lensing_potential(V0: SampledFunction, V3: SampledFunction) -> SampledFunction:
    return V0 + V3


def solve_fg(stress: StressProfile, G: float = 1.0) -> FieldProfile:
    """Solve the linearised field equations for f, g (and V0, V3 when available)."""
    env = stress.b
    r = stress.grid
    f, g, df, dg = exact_fg(env, r, G)
    if stress.t00 is not None:
        V0, V3 = newtonian_potentials(stress, G)
        pot = [V0.values, V3.values]
        dpot = [V0.derivatives, V3.derivatives]
    else:
        pot = [np.zeros_like(r)] * 2
        dpot = [np.zeros_like(r)] * 2
    values = np.column_stack([f, g, *pot])
    ders = np.column_stack([df, dg, *dpot])
    if not np.all(np.isfinite(values)) or not np.all(np.isfinite(ders)):
        bad = int(np.argmax(~np.all(np.isfinite(values), axis=1) | ~np.all(np.isfinite(ders), axis=1)))
        raise FloatingPointError(f"non-finite field value near r = {r[bad]!r}")
    meta = {
        "envelope": env.params(),
        "t00": stress.t00.params() if stress.t00 else None,
        "t33": stress.t33.params() if stress.t33 else None,
        "G": G,
        "scale": env.scale,
    }
    return FieldProfile(r, values, ders, stress.n, float(g[-1] * r[-1] ** stress.n), meta)


def solve(envelope: SourceEnvelope, G: float = 1.0, **kwargs) -> FieldProfile:
    """Convenience: :func:`build_stress` followed by :func:`solve_fg`."""
    return solve_fg(build_stress(envelope, **kwargs), G)


# --------------------------------------------------------------------------
# checks and identities
# --------------------------------------------------------------------------

def gauge_residual(profile: FieldProfile) -> float:
    """max |r^n f' - (n-1)(r^n g)'| relative to max |r^n f'| over the grid."""
    n = profile.n
    r = profile.r
    f_, g_ = profile.values[:, 0], profile.values[:, 1]
    df, dg = profile.derivatives[:, 0], profile.derivatives[:, 1]
    lhs = r ** n * df
    rhs = (n - 1) * (n * r ** (n - 1) * g_ + r ** n * dg)
    scale = np.max(np.abs(lhs)) or 1.0
    return float(np.max(np.abs(lhs - rhs)) / scale)


def field_equation_residuals(env: SourceEnvelope, r, G: float = 1.0, h: Optional[float] = None):
    """Residuals of the radial field equations by centred second differences.

        f'' + (n-1) f'/r           - 16 pi G a = 0
        g'' + (n-1) g'/r - 2n g/r^2 - 16 pi G b = 0

    Returned relative to 16 pi G (|a| + b0) at each point.
    """
    n = env.n
    r = np.asarray(r, dtype=float)
    h = 1e-3 * r if h is None else h
    fm, gm, _, _ = exact_fg(env, r - h, G)
    f0, g0, _, _ = exact_fg(env, r, G)
    fp, gp, _, _ = exact_fg(env, r + h, G)
    f2, g2 = (fp - 2 * f0 + fm) / h ** 2, (gp - 2 * g0 + gm) / h ** 2
    f1, g1 = (fp - fm) / (2 * h), (gp - gm) / (2 * h)
    a = (n - 1) * env(r) - n * (n - 1) * env.tail_inverse(r)
    b = env(r)
    src = 16 * math.pi * G
    res_f = f2 + (n - 1) * f1 / r - src * a
    res_g = g2 + (n - 1) * g1 / r - 2 * n * g0 / r ** 2 - src * b
    scale = src * (np.abs(a) + env.b0)
    return res_f / scale, res_g / scale


def _radial_quad(fn, env: SourceEnvelope, lo: float = 0.0) -> float:
    pts = [p for p in env.breakpoints if p > lo]
    edges = [lo, *pts, math.inf]
    total = 0.0
    for x0, x1 in zip(edges[:-1], edges[1:]):
        val, _ = quad(fn, x0, x1, epsabs=0.0, epsrel=1e-13, limit=400)
        total += val
    return total


def f_zero_identity(profile_or_env, G: float = 1.0) -> dict[str, float]:
    """The three expressions that must agree for f(0).

    ``f0``      the solved field f on the axis (evaluated at r = 1e-12 scale),
    ``from_g``  -n(n-1) times the integral of g(r)/r,
    ``from_b``  16 pi G (n-1)/2 times the integral of r b(r).
    """
    env = profile_or_env if isinstance(profile_or_env, SourceEnvelope) else _envelope_of(profile_or_env)
    n = env.n
    f0 = float(exact_fg(env, 1e-12 * env.scale, G)[0])
    from_g = -n * (n - 1) * _radial_quad(lambda r: float(exact_fg(env, r, G)[1]) / r, env)
    from_b = 16 * math.pi * G * (n - 1) / 2 * _radial_quad(lambda r: r * float(env(r)), env)
    return {"f0": f0, "from_g": from_g, "from_b": from_b}


def _envelope_of(profile: FieldProfile) -> SourceEnvelope:
    p = dict(profile.meta["envelope"])
    return SourceEnvelope(**p)


def virial_moments(stress: StressProfile, kinetic_only: bool = False, angular_nodes: int = 16) -> dict:
    """Zeroth (n x n) and first (n x n x n) spatial moments of T_ij.

    Radial integrals by adaptive quadrature, angular ones by a product
    Gauss-Legendre / trapezoid rule that is exact for the polynomials
    involved.  ``kinetic_only`` drops the potential (isotropic) part, giving
    a non-conserved source whose moments do not vanish.
    """
    env, n = stress.b, stress.n
    if kinetic_only:
        # T = n (delta - x x / r^2) b = delta (n-1) b + D b
        iso = lambda r: (n - 1) * float(env(r))
    else:
        iso = lambda r: float(stress.a(r))
    trace = lambda r: float(env(r))

    nodes, weights = _angular_rule(n, angular_nodes)
    eye = np.eye(n)
    D_avg = np.einsum("w,wij->ij", weights, eye - n * np.einsum("wi,wj->wij", nodes, nodes))
    Dk_avg = np.einsum("w,wk,wij->kij", weights, nodes, eye - n * np.einsum("wi,wj->wij", nodes, nodes))
    n_avg = np.einsum("w,wk->k", weights, nodes)

    Ra0 = _radial_quad(lambda r: r ** (n - 1) * iso(r), env)
    Rb0 = _radial_quad(lambda r: r ** (n - 1) * trace(r), env)
    Ra1 = _radial_quad(lambda r: r ** n * iso(r), env)
    Rb1 = _radial_quad(lambda r: r ** n * trace(r), env)
    zeroth = Ra0 * eye * weights.sum() + Rb0 * D_avg
    first = Ra1 * np.einsum("k,ij->kij", n_avg, eye) + Rb1 * Dk_avg
    scale = _ball_area(n) * (_radial_quad(lambda r: r ** (n - 1) * abs(iso(r)), env) + Rb0)
    return {"zeroth": zeroth, "first": first, "scale": scale}


def _angular_rule(n: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Unit vectors and weights integrating over the (n-1)-sphere."""
    phi = 2 * math.pi * (np.arange(2 * m) + 0.5) / (2 * m)
    if n == 2:
        return np.column_stack([np.cos(phi), np.sin(phi)]), np.full(2 * m, 2 * math.pi / (2 * m))
    mu, w = roots_legendre(m)
    st = np.sqrt(1 - mu * mu)
    P, MU = np.meshgrid(phi, mu)
    ST = np.sqrt(1 - MU * MU)
    nodes = np.column_stack([(ST * np.cos(P)).ravel(), (ST * np.sin(P)).ravel(), MU.ravel()])
    weights = (np.outer(w, np.full(2 * m, 2 * math.pi / (2 * m)))).ravel()
    del st
    return nodes, weights


def tail_exponent(profile: FieldProfile, lo_factor: float = 1e2) -> float:
    """Log-log slope of |g| between lo_factor * scale and the outer grid edge."""
    r = profile.r
    g_ = np.abs(profile.values[:, 1])
    mask = (r >= lo_factor * profile.scale) & (g_ > 0)
    slope, _ = np.polyfit(np.log(r[mask]), np.log(g_[mask]), 1)
    return float(slope)


def metric_displacement_identity(n: int, x: np.ndarray, dx: np.ndarray) -> tuple[float, float]:
    """Both sides of  dx_i D_ij dx_j = sum(dx_i^2) - n dr^2  at a point."""
    x = np.asarray(x, dtype=float)
    dx = np.asarray(dx, dtype=float)
    r = np.linalg.norm(x)
    D = np.eye(n) - n * np.outer(x, x) / (r * r)
    dr = float(x @ dx) / r
    return float(dx @ D @ dx), float(dx @ dx - n * dr * dr)


# --------------------------------------------------------------------------
# line sources
# --------------------------------------------------------------------------

def lorentz_gamma(v: float) -> float:
    """1/sqrt|1 - v^2|, finite for every v != +-1."""
    d = abs(1 - v * v)
    if d == 0:
        raise ValueError("lorentz factor is infinite at |v| = 1")
    return 1 / math.sqrt(d)


def line_source_force(strength: float, r: float, kind: str = "mass_line", v: float = 0.0,
                      regime: str = "exact", tdot: float = 1.0, zdot: float = 1.0,
                      G: float = 1.0) -> float:
    """Radial acceleration d^2 r / dtau^2 of a test particle near a line source.

    exact regime (static cylinder solution), ``strength`` = mass per unit length m:
      mass_line     -4 G m gamma(v) tdot^2 / r
      tachyon_line  -4 G m gamma(v) (tdot^2 + v^2 zdot^2) / r
    weak regime (edge of a circulating flow), ``strength`` = pressure per length P:
      -2 G P / r
    """
    if r <= 0:
        raise ValueError(f"field point r = {r!r} must be positive")
    if regime == "weak":
        return -2 * G * strength / r
    if regime != "exact":
        raise ValueError(f"unknown regime {regime!r}")
    lam = strength * (1.0 if v == 0 else lorentz_gamma(v))
    if kind == "mass_line":
        return -4 * G * lam * tdot * tdot / r
    if kind == "tachyon_line":
        return -4 * G * lam * (tdot * tdot + v * v * zdot * zdot) / r
    raise ValueError(f"unknown source kind {kind!r}")


def line_pressure(m: float, v: float) -> float:
    """Pressure per unit length m gamma v^2 of a line flow of speed v."""
    return m * lorentz_gamma(v) * v * v


def coordinate_acceleration(force: float, test_gamma: float) -> float:
    """d^2 r / dt^2 for a test particle of Lorentz factor ``test_gamma``."""
    return force / test_gamma ** 2


def circle_binding_diagnostic(G: float, M: float, V: float, tube_radius: float) -> float:
    """G M V / r for a tachyon loop; reported only, compared with pi by the caller."""
    return G * M * V / tube_radius
