"""Exact density of the ratio of two jointly Gaussian random variables.

For (v, w) bivariate normal the density of x = w/v has a closed form built
from a confluent hypergeometric function of the quadratic/linear/constant
exponent coefficients (a, b, c) and the covariance determinant d.  The
equal-variance family (var v = var w = t, correlation rho) additionally has
an elementary erf closed form, used as the primary evaluation path because
it stays finite where the raw 1F1 factor overflows; closed-form first and
second derivatives in x and the derivative in t are assembled from the
absolute-moment integrals in `specfun`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as _special

from .specfun import hyp1f1_half_scaled, moment_recurrence, scaled_moments

TWO_PI = 2.0 * math.pi
_SQRT_PI = math.sqrt(math.pi)

__all__ = [
    "GeneralGaussianSpec",
    "EqualVarSpec",
    "AbcCoefficients",
    "abc_general",
    "abc_equal_var",
    "density_general",
    "density_general_hyp",
    "density_equal_var",
    "density_equal_var_hyp",
    "density_scaled",
    "density_limit_t_inf",
    "derivatives",
    "integrate_density",
]


@dataclass(frozen=True)
class GeneralGaussianSpec:
    """Means, variances and covariance of (v, w); x = w / v."""

    nu_v: float
    nu_w: float
    sigma2_v: float
    sigma2_w: float
    gamma: float

    def __post_init__(self):
        for name in ("nu_v", "nu_w", "sigma2_v", "sigma2_w", "gamma"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.sigma2_v <= 0.0 or self.sigma2_w <= 0.0:
            raise ValueError("variances must be positive")
        if self.det <= 0.0:
            raise ValueError("covariance matrix must be positive definite")

    @property
    def det(self) -> float:
        return self.sigma2_v * self.sigma2_w - self.gamma * self.gamma


@dataclass(frozen=True)
class EqualVarSpec:
    """Equal-variance family: var v = var w = t, correlation rho."""

    nu_v: float
    nu_w: float
    rho: float
    t: float

    def __post_init__(self):
        for name in ("nu_v", "nu_w", "rho", "t"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not -1.0 < self.rho < 1.0:
            raise ValueError(f"correlation must satisfy |rho| < 1, got {self.rho}")
        if self.t <= 0.0:
            raise ValueError(f"variance t must be positive, got {self.t}")

    def to_general(self) -> GeneralGaussianSpec:
        return GeneralGaussianSpec(
            nu_v=self.nu_v,
            nu_w=self.nu_w,
            sigma2_v=self.t,
            sigma2_w=self.t,
            gamma=self.rho * self.t,
        )


@dataclass(frozen=True)
class AbcCoefficients:
    """Exponent coefficients: quadratic a(x) > 0, linear b(x), constant c, det d."""

    a: object
    b: object
    c: float
    d: float


def abc_general(spec: GeneralGaussianSpec, x):
    """Exponent coefficients of the general-covariance ratio density."""
    x = np.asarray(x, dtype=float)
    det = spec.det
    two_det = 2.0 * det
    a = (spec.sigma2_w - 2.0 * spec.gamma * x + spec.sigma2_v * x * x) / two_det
    b = (
        spec.sigma2_w * spec.nu_v
        - spec.gamma * spec.nu_w
        + (spec.sigma2_v * spec.nu_w - spec.gamma * spec.nu_v) * x
    ) / two_det
    c = (
        spec.sigma2_w * spec.nu_v**2
        - 2.0 * spec.gamma * spec.nu_w * spec.nu_v
        + spec.sigma2_v * spec.nu_w**2
    ) / two_det
    if a.ndim == 0:
        return AbcCoefficients(a=float(a), b=float(b), c=c, d=det)
    return AbcCoefficients(a=a, b=b, c=c, d=det)


def abc_equal_var(spec: EqualVarSpec, x):
    """Exponent coefficients of the equal-variance family."""
    x = np.asarray(x, dtype=float)
    nv, nw, r, t = spec.nu_v, spec.nu_w, spec.rho, spec.t
    denom = 2.0 * (1.0 - r * r) * t
    a = (1.0 - 2.0 * r * x + x * x) / denom
    b = (nv - r * nw + (nw - r * nv) * x) / denom
    c = (nv * nv - 2.0 * r * nw * nv + nw * nw) / denom
    d = (1.0 - r * r) * t * t
    if a.ndim == 0:
        return AbcCoefficients(a=float(a), b=float(b), c=c, d=d)
    return AbcCoefficients(a=a, b=b, c=c, d=d)


def _density_stable(a, b, c, d):
    """h = e^-c/(2 pi sqrt(d) a) 1F1(1; 1/2; b^2/a), factored through erf.

    1F1(1; 1/2; z) = 1 + sqrt(pi z) e^z erf(sqrt z) turns the product into
    e^-c + sqrt(pi) beta erf(beta) e^(z - c) with beta = b/sqrt(a); z - c <= 0
    always (Cauchy-Schwarz on the exponent quadratic form), so nothing
    overflows however sharp the density.
    """
    beta = b / np.sqrt(a)
    z = beta * beta
    core = np.exp(-c) + _SQRT_PI * beta * _special.erf(beta) * np.exp(z - c)
    return core / (TWO_PI * np.sqrt(d) * a)


def density_general(spec: GeneralGaussianSpec, x):
    """Density of w/v for general covariance; scalars or arrays in x."""
    x_arr = np.asarray(x, dtype=float)
    co = abc_general(spec, x_arr)
    out = _density_stable(np.asarray(co.a), np.asarray(co.b), co.c, co.d)
    if x_arr.ndim == 0:
        return float(out)
    return out


def density_general_hyp(spec: GeneralGaussianSpec, x) -> float:
    """Direct 1F1 form of the general density (cross-check path; scalar x).

    The exponents are combined as exp(z - c) with z = b^2/a <= c, so the
    evaluation stays finite even when both factors are out of double range.
    """
    co = abc_general(spec, float(x))
    z = co.b * co.b / co.a
    return math.exp(z - co.c) / (TWO_PI * math.sqrt(co.d) * co.a) * hyp1f1_half_scaled(
        1.0, 0.5, z
    )


def _h_erf_raw(x, t, nu_v, nu_w, rho):
    """Elementary erf closed form of the equal-variance density; broadcasts."""
    q = x * x - 2.0 * rho * x + 1.0
    lin = nu_v * (1.0 - rho * x) + nu_w * (x - rho)
    one_m_r2 = 1.0 - rho * rho
    gauss = np.exp(-((nu_w - nu_v * x) ** 2) / (2.0 * t * q)) / np.sqrt(TWO_PI * t * q)
    term1 = gauss * (lin / q) * _special.erf(lin / np.sqrt(2.0 * t * one_m_r2 * q))
    term2 = (
        np.sqrt(one_m_r2)
        / (np.pi * q)
        * np.exp((-(nu_v**2) + 2.0 * nu_v * nu_w * rho - nu_w**2) / (2.0 * t * one_m_r2))
    )
    return term1 + term2


def density_equal_var(spec: EqualVarSpec, x):
    """Equal-variance ratio density via the erf closed form (primary path)."""
    x_arr = np.asarray(x, dtype=float)
    out = _h_erf_raw(x_arr, spec.t, spec.nu_v, spec.nu_w, spec.rho)
    if x_arr.ndim == 0:
        return float(out)
    return out


def density_equal_var_hyp(spec: EqualVarSpec, x) -> float:
    """1F1 form of the equal-variance density (cross-check path; scalar x)."""
    co = abc_equal_var(spec, float(x))
    z = co.b * co.b / co.a
    return math.exp(z - co.c) / (TWO_PI * math.sqrt(co.d) * co.a) * hyp1f1_half_scaled(
        1.0, 0.5, z
    )


def density_scaled(spec: EqualVarSpec, x):
    """Evaluate through the scaling identity h(x, t; nv, nw, r) = h(x, t/nv^2; 1, nw/nv, r)."""
    if spec.nu_v == 0.0:
        raise ValueError("scaling identity requires nu_v != 0")
    reduced = EqualVarSpec(
        nu_v=1.0,
        nu_w=spec.nu_w / spec.nu_v,
        rho=spec.rho,
        t=spec.t / spec.nu_v**2,
    )
    return density_equal_var(reduced, x)


def density_limit_t_inf(rho: float, x):
    """Large-variance limit: sqrt(1-rho^2) / (pi (x^2 - 2 rho x + 1))."""
    if not -1.0 < rho < 1.0:
        raise ValueError(f"correlation must satisfy |rho| < 1, got {rho}")
    x_arr = np.asarray(x, dtype=float)
    out = math.sqrt(1.0 - rho * rho) / (np.pi * (x_arr * x_arr - 2.0 * rho * x_arr + 1.0))
    if x_arr.ndim == 0:
        return float(out)
    return out


def _derivs_raw(x, t, nu_v, nu_w, rho):
    """(h_t, h_x, h_xx) for the equal-variance family; broadcasts over arrays.

    Assembled from the moment integrals: with Lam_n = e^(-b^2/a) L_n(a, b),

      h_t  = e^(z-c)/(2 pi) [A_t Lam2 + B_t Lam1 + C_t Lam0]
      h_x  = e^(z-c)/(2 pi) [A_x Lam2 + B_x Lam1]
      h_xx = e^(z-c)/(2 pi) [(A_xx + F_xx W2 + E_xx W4) Lam2 + (F_xx W1 + E_xx W3) Lam1]

    where the order-3 and order-4 moments were eliminated by the recurrence
    weights W1..W4.
    """
    x = np.asarray(x, dtype=float)
    one_m_r2 = 1.0 - rho * rho
    s32 = one_m_r2**1.5
    s52 = one_m_r2**2.5
    t2 = t * t
    t3 = t2 * t

    denom = 2.0 * one_m_r2 * t
    a = (1.0 - 2.0 * rho * x + x * x) / denom
    b = (nu_v - rho * nu_w + (nu_w - rho * nu_v) * x) / denom
    c = (nu_v * nu_v - 2.0 * rho * nu_w * nu_v + nu_w * nu_w) / denom

    coef_at = (1.0 + x * x - 2.0 * x * rho) / (2.0 * t3 * s32)
    coef_bt = -(nu_v + nu_w * x - (nu_w + nu_v * x) * rho) / (t3 * s32)
    coef_ct = (nu_v**2 + nu_w**2 - 2.0 * nu_v * nu_w * rho + 2.0 * t * (rho * rho - 1.0)) / (
        2.0 * t3 * s32
    )
    coef_ax = (rho - x) / (t2 * s32)
    coef_bx = (nu_w - nu_v * rho) / (t2 * s32)
    coef_exx = (x - rho) ** 2 / (t3 * s52)
    coef_fxx = 2.0 * (x - rho) * (-nu_w + nu_v * rho) / (t3 * s52)
    coef_axx = ((nu_w - nu_v * rho) ** 2 + t * (rho * rho - 1.0)) / (t3 * s52)

    w1, w2, w3, w4 = moment_recurrence(a, b)
    lam0, lam1, lam2 = scaled_moments(a, b)

    z = b * b / a
    pref = np.exp(z - c) / TWO_PI

    h_t = pref * (coef_at * lam2 + coef_bt * lam1 + coef_ct * lam0)
    h_x = pref * (coef_ax * lam2 + coef_bx * lam1)
    h_xx = pref * (
        (coef_axx + coef_fxx * w2 + coef_exx * w4) * lam2 + (coef_fxx * w1 + coef_exx * w3) * lam1
    )
    return h_t, h_x, h_xx


def derivatives(spec: EqualVarSpec, x):
    """Closed-form (h_t, h_x, h_xx) of the equal-variance density.

    The coefficient assembly divides by nu_v, so the zero-mean-denominator
    case is rejected; use the stationary form there instead.
    """
    if spec.nu_v == 0.0:
        raise ValueError("derivative closed forms require nu_v != 0")
    x_arr = np.asarray(x, dtype=float)
    h_t, h_x, h_xx = _derivs_raw(x_arr, spec.t, spec.nu_v, spec.nu_w, spec.rho)
    if x_arr.ndim == 0:
        return float(h_t), float(h_x), float(h_xx)
    return h_t, h_x, h_xx


def _adaptive_simpson(f, lo, hi, tol, max_depth=40):
    """Recursive adaptive Simpson on [lo, hi]."""

    def simpson(a, fa, m, fm, b, fb):
        return (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(a, fa, m, fm, b, fb, whole, tol, depth):
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        flm = f(lm)
        frm = f(rm)
        left = simpson(a, fa, lm, flm, m, fm)
        right = simpson(m, fm, rm, frm, b, fb)
        if depth >= max_depth or abs(left + right - whole) <= 15.0 * tol:
            return left + right + (left + right - whole) / 15.0
        half = 0.5 * tol
        return recurse(a, fa, lm, flm, m, fm, left, half, depth + 1) + recurse(
            m, fm, rm, frm, b, fb, right, half, depth + 1
        )

    m = 0.5 * (lo + hi)
    fa, fm, fb = f(lo), f(m), f(hi)
    whole = simpson(lo, fa, m, fm, hi, fb)
    return recurse(lo, fa, m, fm, hi, fb, whole, tol, 0)


def integrate_density(spec, tol: float = 1e-9) -> float:
    """Total mass of the ratio density over the real line.

    Compactifies with x = tan(u) and integrates adaptively; the transformed
    integrand is smooth because the density decays like 1/x^2.
    """
    if isinstance(spec, EqualVarSpec):
        dens = lambda x: density_equal_var(spec, x)
    elif isinstance(spec, GeneralGaussianSpec):
        dens = lambda x: density_general(spec, x)
    else:
        raise TypeError(f"unsupported spec type {type(spec).__name__}")

    def g(u):
        cu = math.cos(u)
        if cu == 0.0:
            return 0.0
        x = math.tan(u)
        return dens(x) / (cu * cu)

    half_pi = 0.5 * math.pi
    # panel breaks at 0 and at the sharp-peak location nu_w/nu_v so a narrow
    # mode cannot hide inside one coarse panel
    breaks = {-half_pi, 0.0, half_pi}
    if spec.nu_v != 0.0:
        breaks.add(math.atan(spec.nu_w / spec.nu_v))
    pts = sorted(breaks)
    per_panel = tol / (len(pts) - 1)
    return sum(
        _adaptive_simpson(g, lo, hi, per_panel) for lo, hi in zip(pts[:-1], pts[1:])
    )
