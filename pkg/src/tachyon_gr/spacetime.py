"""Metric families, Christoffel symbols and Einstein tensors.

Conventions: geometric units (c = G = 1), signature (+, -, -, -), coordinates
(t, r, theta, phi) on the spherical chart and (t, r, theta, z) on the
cylindrical chart.  The Ricci tensor carries the sign for which the static
cylinder formulas below hold, i.e. ``G = -(R_std - g R_std / 2)`` relative to
the MTW convention; the field equation then reads ``G = -8 pi G T``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, NamedTuple, Union

import numpy as np
from scipy.integrate import quad

from . import defaults

SPHERICAL = "spherical"
CYLINDRICAL = "cylindrical"


class DomainError(ValueError):
    """A point lies outside the validity domain of a metric chart."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to converge; ``partial`` holds the estimate."""

    def __init__(self, message: str, partial: float):
        super().__init__(message)
        self.partial = partial


# --------------------------------------------------------------------------
# metric specifications
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RobertsonWalker:
    """Homogeneous isotropic universe, A(t) = a(t)^2 and B(r) = 1/(1 - eps r^2/R^2).

    ``scale_model`` is ``"power_law"`` (a = a0 t^p, needs t > 0) or
    ``"exponential"`` (a = a0 exp(H t)); ``rate`` holds p or H respectively.
    """

    scale_model: str = "power_law"
    rate: float = 0.0
    curvature: int = 0
    curvature_radius: float = math.inf
    a0: float = 1.0

    def __post_init__(self):
        if self.scale_model not in ("power_law", "exponential"):
            raise ValueError(f"scale_model must be power_law or exponential, got {self.scale_model!r}")
        if self.curvature not in (-1, 0, 1):
            raise ValueError(f"curvature must be -1, 0 or +1, got {self.curvature!r}")
        if self.curvature != 0 and not (0 < self.curvature_radius < math.inf):
            raise ValueError("curvature_radius must be positive and finite when curvature != 0")
        if self.a0 <= 0:
            raise ValueError("a0 must be positive")

    @property
    def chart(self) -> str:
        return SPHERICAL

    def scale(self, t: float) -> tuple[float, float]:
        """Return A(t) = a(t)^2 and dA/dt."""
        if self.scale_model == "power_law":
            if self.rate == 0.0:
                return self.a0 ** 2, 0.0
            if t <= 0:
                raise DomainError(f"t = {t!r}: power-law scale factor needs t > 0")
            A = self.a0 ** 2 * t ** (2 * self.rate)
            return A, 2 * self.rate * A / t
        A = self.a0 ** 2 * math.exp(2 * self.rate * t)
        return A, 2 * self.rate * A

    def spatial(self, r: float) -> tuple[float, float]:
        """Return B(r) and dB/dr."""
        if self.curvature == 0:
            return 1.0, 0.0
        k = self.curvature / self.curvature_radius ** 2
        den = 1.0 - k * r * r
        if den <= 0:
            raise DomainError(f"r = {r!r} reaches the curvature pole at R = {self.curvature_radius!r}")
        return 1.0 / den, 2 * k * r / den ** 2


@dataclass(frozen=True)
class Schwarzschild:
    r_s: float = 1.0

    def __post_init__(self):
        if self.r_s <= 0:
            raise ValueError("r_s must be positive")

    @property
    def chart(self) -> str:
        return SPHERICAL


def vacuum_exponents(alpha: float) -> tuple[float, float]:
    """Exponents (beta, gamma_exp) making the static cylinder a vacuum solution."""
    if alpha == -2:
        raise ValueError("alpha = -2 is excluded")
    return alpha * alpha / (alpha + 2), -2 * alpha / (alpha + 2)


@dataclass(frozen=True)
class CylindricalPowerLaw:
    """Static cylinder ds^2 = a r^alpha dt^2 - b r^beta dr^2 - r^2 dtheta^2 - c r^gamma dz^2."""

    a: float = 1.0
    b: float = 1.0
    c: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        if min(self.a, self.b, self.c) <= 0:
            raise ValueError("a, b, c must be positive")
        if self.alpha == -2:
            raise ValueError("alpha = -2 is excluded")

    @property
    def chart(self) -> str:
        return CYLINDRICAL

    @property
    def beta(self) -> float:
        return vacuum_exponents(self.alpha)[0]

    @property
    def gamma_exp(self) -> float:
        return vacuum_exponents(self.alpha)[1]


@dataclass(frozen=True)
class SmoothedCylinder:
    """The power-law cylinder with r replaced by s = sqrt(r^2 + eps_smooth^2)."""

    a: float = 1.0
    b: float = 1.0
    c: float = 1.0
    alpha: float = 1e-3
    eps_smooth: float = 1e-3

    def __post_init__(self):
        if min(self.a, self.b, self.c) <= 0:
            raise ValueError("a, b, c must be positive")
        if self.alpha == -2:
            raise ValueError("alpha = -2 is excluded")
        if self.eps_smooth <= 0:
            raise ValueError("eps_smooth must be positive")

    @property
    def chart(self) -> str:
        return CYLINDRICAL

    @property
    def beta(self) -> float:
        return vacuum_exponents(self.alpha)[0]

    @property
    def gamma_exp(self) -> float:
        return vacuum_exponents(self.alpha)[1]


@dataclass(frozen=True)
class LinearizedStatic:
    """Weak-field metric of a static circulating source.

    ``profile`` is a :class:`tachyon_gr.linfield.FieldProfile`.  For n = 2 the
    chart is cylindrical, for n = 3 spherical.
    """

    profile: Any
    n: int = 2

    def __post_init__(self):
        if self.n not in (2, 3):
            raise ValueError("symmetry n must be 2 or 3")
        if getattr(self.profile, "n", self.n) != self.n:
            raise ValueError("profile dimension does not match n")

    @property
    def chart(self) -> str:
        return CYLINDRICAL if self.n == 2 else SPHERICAL

    def perturbations(self, r: float) -> tuple[np.ndarray, np.ndarray]:
        """Return (A, B, C, D) and their r-derivatives at r.

        For n = 3 the fourth entry repeats C (the angular block is isotropic).
        """
        f, g, V0, V3 = self.profile.sample(r)
        df, dg, dV0, dV3 = self.profile.sample_derivative(r)
        if self.n == 2:
            vals = np.array([2 * V0 + 2 * V3 + f, 2 * V0 - 2 * V3 - g,
                             2 * V0 - 2 * V3 + g, 2 * V0 + 2 * V3 - f])
            ders = np.array([2 * dV0 + 2 * dV3 + df, 2 * dV0 - 2 * dV3 - dg,
                             2 * dV0 - 2 * dV3 + dg, 2 * dV0 + 2 * dV3 - df])
        else:
            C = 2 * V0 - 0.5 * f + g
            dC = 2 * dV0 - 0.5 * df + dg
            vals = np.array([2 * V0 + 1.5 * f, 2 * V0 - 0.5 * f - 2 * g, C, C])
            ders = np.array([2 * dV0 + 1.5 * df, 2 * dV0 - 0.5 * df - 2 * dg, dC, dC])
        return vals, ders


MetricSpec = Union[RobertsonWalker, Schwarzschild, CylindricalPowerLaw,
                   SmoothedCylinder, LinearizedStatic]

CATALOG_TYPES = (RobertsonWalker, Schwarzschild, CylindricalPowerLaw, SmoothedCylinder)


@dataclass(frozen=True)
class SpacetimePoint:
    chart: str
    coords: tuple[float, float, float, float]

    def __post_init__(self):
        if self.chart not in (SPHERICAL, CYLINDRICAL):
            raise ValueError(f"unknown chart {self.chart!r}")
        object.__setattr__(self, "coords", tuple(float(x) for x in self.coords))
        if len(self.coords) != 4:
            raise ValueError("a spacetime point needs 4 coordinates")

    @property
    def t(self) -> float:
        return self.coords[0]

    @property
    def r(self) -> float:
        return self.coords[1]

    @property
    def theta(self) -> float:
        return self.coords[2]


def point(spec: MetricSpec, t: float, r: float, theta: float = math.pi / 2,
          x3: float = 0.0) -> SpacetimePoint:
    """Build a point on the natural chart of ``spec``."""
    return SpacetimePoint(spec.chart, (t, r, theta, x3))


# --------------------------------------------------------------------------
# diagonal metric components and their analytic gradients
# --------------------------------------------------------------------------

def _coords(spec: MetricSpec, p: SpacetimePoint | np.ndarray | tuple) -> np.ndarray:
    if isinstance(p, SpacetimePoint):
        if p.chart != spec.chart:
            raise DomainError(f"point chart {p.chart!r} does not match metric chart {spec.chart!r}")
        return np.asarray(p.coords, dtype=float)
    return np.asarray(p, dtype=float)


def _check_domain(spec: MetricSpec, x: np.ndarray, allow_axis: bool = False) -> None:
    t, r, th = x[0], x[1], x[2]
    if not np.all(np.isfinite(x)):
        raise DomainError(f"non-finite coordinates {x.tolist()!r}")
    if r < 0 or (r == 0 and not allow_axis):
        raise DomainError(f"r = {r!r}: radial coordinate must be positive")
    if spec.chart == SPHERICAL and not (0 < th < math.pi):
        raise DomainError(f"theta = {th!r}: polar angle must lie in (0, pi)")
    if isinstance(spec, Schwarzschild) and r <= spec.r_s:
        raise DomainError(f"r = {r!r} is not outside the horizon r_s = {spec.r_s!r}")
    if isinstance(spec, RobertsonWalker) and spec.curvature == 1 and r >= spec.curvature_radius:
        raise DomainError(f"r = {r!r} is not inside the closed-universe radius R = {spec.curvature_radius!r}")


def diagonal_metric(spec: MetricSpec, p, *, check: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal entries g_mm and their analytic gradients dg[k, m] = d_k g_mm."""
    x = _coords(spec, p)
    if check:
        _check_domain(spec, x)
    t, r, th, _ = x
    g = np.zeros(4)
    dg = np.zeros((4, 4))

    if isinstance(spec, RobertsonWalker):
        A, dA = spec.scale(t)
        B, dB = spec.spatial(r)
        s2 = math.sin(th) ** 2
        sc2 = 2 * math.sin(th) * math.cos(th)
        g[:] = (1.0, -A * B, -A * r * r, -A * r * r * s2)
        dg[0, 1], dg[1, 1] = -dA * B, -A * dB
        dg[0, 2], dg[1, 2] = -dA * r * r, -2 * A * r
        dg[0, 3], dg[1, 3], dg[2, 3] = -dA * r * r * s2, -2 * A * r * s2, -A * r * r * sc2
    elif isinstance(spec, Schwarzschild):
        A = 1.0 - spec.r_s / r
        dA = spec.r_s / (r * r)
        s2 = math.sin(th) ** 2
        g[:] = (A, -1.0 / A, -r * r, -r * r * s2)
        dg[1, 0] = dA
        dg[1, 1] = dA / (A * A)
        dg[1, 2] = -2 * r
        dg[1, 3], dg[2, 3] = -2 * r * s2, -r * r * 2 * math.sin(th) * math.cos(th)
    elif isinstance(spec, (CylindricalPowerLaw, SmoothedCylinder)):
        (A, dA, _), (B, dB, _), (C, dC, _) = cylinder_functions(spec, r)
        g[:] = (A, -B, -r * r, -C)
        dg[1, :] = (dA, -dB, -2 * r, -dC)
    elif isinstance(spec, LinearizedStatic):
        (A, B, C, D), (dA, dB, dC, dD) = spec.perturbations(r)
        if spec.n == 2:
            g[:] = (1 + A, -1 + B, (-1 + C) * r * r, -1 + D)
            dg[1, :] = (dA, dB, 2 * r * (-1 + C) + dC * r * r, dD)
        else:
            s2 = math.sin(th) ** 2
            ang = (-1 + C) * r * r
            dang = 2 * r * (-1 + C) + dC * r * r
            g[:] = (1 + A, -1 + B, ang, ang * s2)
            dg[1, :] = (dA, dB, dang, dang * s2)
            dg[2, 3] = ang * 2 * math.sin(th) * math.cos(th)
    else:
        raise TypeError(f"unsupported metric spec {type(spec).__name__}")
    return g, dg


def cylinder_functions(spec: CylindricalPowerLaw | SmoothedCylinder, r: float):
    """(value, first, second) r-derivatives of A, B, C for the cylinder families."""
    exps = (spec.alpha, spec.beta, spec.gamma_exp)
    coefs = (spec.a, spec.b, spec.c)
    out = []
    if isinstance(spec, CylindricalPowerLaw):
        for k, p in zip(coefs, exps):
            v = k * r ** p
            out.append((v, p * v / r, p * (p - 1) * v / (r * r)))
    else:
        e2 = spec.eps_smooth ** 2
        s2 = r * r + e2
        for k, p in zip(coefs, exps):
            v = k * s2 ** (p / 2)
            d1 = p * r * v / s2
            d2 = p * v * (s2 + (p - 2) * r * r) / (s2 * s2)
            out.append((v, d1, d2))
    return out


def metric_components(spec: MetricSpec, p) -> np.ndarray:
    """g_{mu nu} at ``p`` as a 4x4 symmetric array (diagonal for every family)."""
    g, _ = diagonal_metric(spec, p)
    return np.diag(g)


# --------------------------------------------------------------------------
# Christoffel symbols
# --------------------------------------------------------------------------

def _diagonal_christoffel(g: np.ndarray, dg: np.ndarray) -> np.ndarray:
    gam = np.zeros((4, 4, 4))
    for lam in range(4):
        inv = 0.5 / g[lam]
        for mu in range(4):
            # Gamma^l_{l mu} = d_mu g_ll / 2 g_ll
            gam[lam, lam, mu] += dg[mu, lam] * inv
            if mu != lam:
                gam[lam, mu, lam] += dg[mu, lam] * inv
                # Gamma^l_{mu mu} = -d_l g_mm / 2 g_ll
                gam[lam, mu, mu] -= dg[lam, mu] * inv
    return gam


def _linearized_christoffel(spec: LinearizedStatic, x: np.ndarray) -> np.ndarray:
    """First-order connection of the weak-field metric (second-order terms dropped)."""
    r, th = x[1], x[2]
    (A, B, C, D), (dA, dB, dC, dD) = spec.perturbations(r)
    gam = np.zeros((4, 4, 4))
    gam[0, 0, 1] = gam[0, 1, 0] = 0.5 * dA
    gam[1, 0, 0] = 0.5 * dA
    gam[1, 1, 1] = -0.5 * dB
    gam[2, 2, 1] = gam[2, 1, 2] = 1.0 / r - 0.5 * dC
    gam[1, 2, 2] = -r * (1 + B - C) + 0.5 * r * r * dC
    if spec.n == 2:
        gam[3, 3, 1] = gam[3, 1, 3] = -0.5 * dD
        gam[1, 3, 3] = 0.5 * dD
    else:
        s, c = math.sin(th), math.cos(th)
        gam[3, 3, 1] = gam[3, 1, 3] = 1.0 / r - 0.5 * dC
        gam[1, 3, 3] = s * s * gam[1, 2, 2]
        gam[2, 3, 3] = -s * c
        gam[3, 3, 2] = gam[3, 2, 3] = c / s
    return gam


def christoffel(spec: MetricSpec, p) -> np.ndarray:
    """Gamma^lambda_{mu nu} as an array indexed [lambda, mu, nu]."""
    x = _coords(spec, p)
    if isinstance(spec, LinearizedStatic):
        _check_domain(spec, x)
        return _linearized_christoffel(spec, x)
    g, dg = diagonal_metric(spec, x)
    return _diagonal_christoffel(g, dg)


def _fd_step(x: float) -> float:
    return max(defaults.get("fd_step_abs"), defaults.get("fd_step_rel") * abs(x))


def numeric_christoffel(spec: MetricSpec, p) -> np.ndarray:
    """Christoffel symbols from centred differences of :func:`metric_components`."""
    x = _coords(spec, p)
    g = metric_components(spec, x)
    ginv = np.linalg.inv(g)
    dg = np.zeros((4, 4, 4))      # dg[k] = d_k g
    for k in range(4):
        h = _fd_step(x[k])
        xp, xm = x.copy(), x.copy()
        xp[k] += h
        xm[k] -= h
        dg[k] = (metric_components(spec, xp) - metric_components(spec, xm)) / (2 * h)
    # Gamma^l_{mn} = g^{ls} (d_m g_sn + d_n g_sm - d_s g_mn) / 2
    term = dg.transpose(1, 0, 2) + dg.transpose(1, 2, 0) - dg
    return 0.5 * np.einsum("ls,smn->lmn", ginv, term)


# --------------------------------------------------------------------------
# Einstein tensor
# --------------------------------------------------------------------------

class EinsteinTensor(NamedTuple):
    G: np.ndarray
    numeric: bool


def cylinder_einstein_diagonal(A, dA, d2A, B, dB, C, dC, d2C, r) -> np.ndarray:
    """G_00, G_11, G_22, G_33 of the static cylinder ansatz diag(A, -B, -r^2, -C)."""
    G00 = A / (2 * B) * (d2C / C - dC ** 2 / (2 * C * C) - dB * dC / (2 * B * C)
                         + dC / (r * C) - dB / (r * B))
    G11 = -dC / (2 * r * C) - dA / (2 * r * A) - dA * dC / (4 * A * C)
    G22 = r * r / (2 * B) * (-d2A / A + dA ** 2 / (2 * A * A) + dA * dB / (2 * A * B)
                             - d2C / C + dC ** 2 / (2 * C * C) - dA * dC / (2 * A * C)
                             + dB * dC / (2 * B * C))
    G33 = C / (2 * B) * (-d2A / A + dA ** 2 / (2 * A * A) + dA * dB / (2 * A * B)
                         - dA / (r * A) + dB / (r * B))
    return np.array([G00, G11, G22, G33])


def smoothed_einstein_diagonal(spec: SmoothedCylinder, r: float) -> np.ndarray:
    al = spec.alpha
    e2 = spec.eps_smooth ** 2
    s2 = r * r + e2
    (A, _, _), (B, _, _), (C, _, _) = cylinder_functions(spec, r)
    w = e2 / (s2 * s2)
    G00 = -A / (2 * B) * al * (al + 4) / (al + 2) * w
    G11 = -0.5 * al * al / (al + 2) * w
    return np.array([G00, G11, r * r / B * G11, C / A * G00])


def numeric_einstein(spec: MetricSpec, p) -> np.ndarray:
    """Einstein tensor from centred differences of the analytic connection."""
    x = _coords(spec, p)
    gam = christoffel(spec, x)
    dgam = np.zeros((4, 4, 4, 4))    # dgam[k] = d_k Gamma
    for k in range(4):
        h = _fd_step(x[k])
        xp, xm = x.copy(), x.copy()
        xp[k] += h
        xm[k] -= h
        dgam[k] = (christoffel(spec, xp) - christoffel(spec, xm)) / (2 * h)
    ric = (np.einsum("llmn->mn", dgam)
           - np.einsum("nlml->mn", dgam)
           + np.einsum("lls,smn->mn", gam, gam)
           - np.einsum("lns,sml->mn", gam, gam))
    ric = -ric
    g = metric_components(spec, x)
    scalar = np.einsum("mn,mn->", np.linalg.inv(g), ric)
    G = ric - 0.5 * g * scalar
    return 0.5 * (G + G.T)


def einstein_tensor(spec: MetricSpec, p) -> EinsteinTensor:
    """Einstein tensor, analytic for the cylinder families, numeric otherwise."""
    x = _coords(spec, p)
    if isinstance(spec, CylindricalPowerLaw):
        _check_domain(spec, x)
        fa, fb, fc = cylinder_functions(spec, x[1])
        d = cylinder_einstein_diagonal(*fa, *fb[:2], *fc, x[1])
        return EinsteinTensor(np.diag(d), False)
    if isinstance(spec, SmoothedCylinder):
        _check_domain(spec, x, allow_axis=True)
        return EinsteinTensor(np.diag(smoothed_einstein_diagonal(spec, x[1])), False)
    return EinsteinTensor(numeric_einstein(spec, x), True)


# --------------------------------------------------------------------------
# smoothed cylinder source integrals
# --------------------------------------------------------------------------

def _radial_integral(integrand, eps: float, r_max: float, epsabs: float) -> tuple[float, float]:
    # split on decades of eps so the peak near r ~ eps is resolved
    edges = [0.0]
    x = eps
    while x < r_max:
        edges.append(x)
        x *= 10.0
    edges.append(r_max)
    total, err = 0.0, 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, e, *rest = quad(integrand, lo, hi, epsabs=epsabs * 1e-3, epsrel=1e-12,
                             limit=200, full_output=1)
        total += val
        err += e
        if len(rest) > 1 and e > epsabs:
            raise QuadratureError(f"quadrature did not converge on [{lo!r}, {hi!r}]: {rest[1]}", total)
    return total, err


def smoothed_source_integrals(spec: SmoothedCylinder) -> dict[str, float]:
    """Integrals of r G_00 and r G_33 over r in (0, inf).

    The finite part runs to 10^3 max(1, eps); the power-law tail beyond it is
    added in closed form (the integrand there is exactly r * const * s^p).
    """
    al = spec.alpha
    if al == 0:
        return {"I00": 0.0, "I33": 0.0}
    eps = spec.eps_smooth
    r_max = defaults.get("smoothed_quad_outer") * max(1.0, eps)
    epsabs = defaults.get("smoothed_quad_epsabs")
    beta, gexp = spec.beta, spec.gamma_exp
    k = al * (al + 4) / (al + 2) * eps * eps

    def g00(r):
        return r * smoothed_einstein_diagonal(spec, r)[0]

    def g33(r):
        return r * smoothed_einstein_diagonal(spec, r)[3]

    out = {}
    for key, fn, coef, p in (("I00", g00, -spec.a / (2 * spec.b) * k, al - beta - 4),
                             ("I33", g33, -spec.c / (2 * spec.b) * k, gexp - beta - 4)):
        body, _ = _radial_integral(fn, eps, r_max, epsabs)
        s_max = math.hypot(r_max, eps)
        tail = -coef * s_max ** (p + 2) / (p + 2)
        out[key] = body + tail
    return out


def is_lorentzian(spec: MetricSpec, p) -> bool:
    g = metric_components(spec, p)
    signs = np.sign(np.diag(g))
    return bool(np.linalg.det(g) < 0 and signs[0] > 0 and np.all(signs[1:] < 0))
