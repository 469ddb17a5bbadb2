"""Evolution equation of the equal-variance ratio density in the variance t.

The density h(x, t) satisfies h_t = d/dx[D(x,t) h_x] + C(x,t) h_x + S(t) h
with a rational diffusion coefficient D = P3(x) / (Q1(x) + t Q2(x)), a
rational convection coefficient C defined by C = G_x - dD/dx, and an
x-independent source S(t).  The denominator cubic can vanish at up to three
real points where D and C blow up; callers must keep clear of those roots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ratio_density import EqualVarSpec, density_equal_var, derivatives

# denominator magnitudes below EPS_DENOM * (largest term) count as singular
EPS_DENOM = 1e-12
# default half-width of the exclusion tube around each real denominator root
TUBE_HALF_WIDTH = 1e-3

__all__ = [
    "PdeCoefficients",
    "GCoefficients",
    "OperatorSpec",
    "SingularPointError",
    "polynomials",
    "polynomial_coefficients",
    "cubic_real_roots",
    "pde_coefficients",
    "g_coefficients",
    "diffusion_x_derivative",
    "residual",
    "positivity_interval",
    "singular_mask",
]


class SingularPointError(ArithmeticError):
    """Evaluation point too close to a real root of the denominator cubic."""


@dataclass(frozen=True)
class PdeCoefficients:
    """Diffusion D, convection C, source S at one (x, t)."""

    D: float
    C: float
    S: float


@dataclass(frozen=True)
class GCoefficients:
    """Coefficients of h_t = S h + G_x h_x + G_xx h_xx at one (x, t)."""

    G_x: float
    G_xx: float


@dataclass(frozen=True)
class OperatorSpec:
    """Equal-variance parameters with the evolution operator frozen at t0."""

    params: EqualVarSpec
    t0: float

    def __post_init__(self):
        if self.params.nu_v == 0.0:
            raise ValueError("operator requires nu_v != 0")
        if not (math.isfinite(self.t0) and self.t0 > 0.0):
            raise ValueError(f"t0 must be finite and positive, got {self.t0}")

    def at_t0(self) -> EqualVarSpec:
        return EqualVarSpec(self.params.nu_v, self.params.nu_w, self.params.rho, self.t0)


def _poly_terms(nu_v, nu_w, rho, x):
    """P1, P2, P3, Q1, Q2 evaluated from the factored forms; broadcasts."""
    q = 1.0 + x * x - 2.0 * x * rho
    r2m1 = rho * rho - 1.0
    wmvx = nu_w - nu_v * x

    p1 = 2.0 * wmvx * wmvx * (nu_v + nu_w * x - (nu_w + nu_v * x) * rho) * r2m1
    p2 = q * (
        nu_w * (rho - x) * (3.0 * x * x - 6.0 * x * rho + 11.0 * rho * rho - 8.0)
        + nu_v
        * (
            2.0
            - 9.0 * x * x
            + 10.0 * x * rho
            + 3.0 * x**3 * rho
            - 5.0 * rho * rho
            - x * rho**3
        )
    )
    p3 = (
        q
        * q
        * (
            nu_w * (1.0 - x * x + 2.0 * x * rho - 2.0 * rho * rho)
            + nu_v * (rho + x * (-2.0 + x * rho))
        )
    )
    q1 = 2.0 * (1.0 - rho * rho) * wmvx * wmvx * (nu_w - nu_v * rho)
    q2 = 2.0 * r2m1 * (
        nu_w * (1.0 + 4.0 * x * x - 8.0 * x * rho + 3.0 * rho * rho)
        - nu_v * (rho + x * (3.0 * x * x - 5.0 * x * rho + rho * rho))
    )
    return p1, p2, p3, q1, q2


def polynomials(spec: EqualVarSpec, x):
    """(P1, P2, P3, Q1, Q2) at x, from the factored closed forms."""
    x_arr = np.asarray(x, dtype=float)
    vals = _poly_terms(spec.nu_v, spec.nu_w, spec.rho, x_arr)
    if x_arr.ndim == 0:
        return tuple(float(v) for v in vals)
    return vals


def polynomial_coefficients(spec: EqualVarSpec) -> dict:
    """Expanded coefficient arrays (ascending degree) of P1..Q2 and derivatives."""
    return _poly_coeff_arrays(spec.nu_v, spec.nu_w, spec.rho)


def _poly_coeff_arrays(nv: float, nw: float, r: float) -> dict:
    pm = np.polynomial.polynomial.polymul
    quad = np.array([1.0, -2.0 * r, 1.0])  # 1 - 2 r x + x^2
    wmvx2 = np.array([nw * nw, -2.0 * nv * nw, nv * nv])  # (nu_w - nu_v x)^2

    p1 = 2.0 * (r * r - 1.0) * pm(wmvx2, np.array([nv - nw * r, nw - nv * r]))
    inner2 = np.array(
        [
            nw * (11.0 * r**3 - 8.0 * r) + nv * (2.0 - 5.0 * r * r),
            nw * (8.0 - 17.0 * r * r) + nv * (10.0 * r - r**3),
            9.0 * r * nw - 9.0 * nv,
            -3.0 * nw + 3.0 * r * nv,
        ]
    )
    p2 = pm(quad, inner2)
    p3 = pm(
        pm(quad, quad),
        np.array([nw * (1.0 - 2.0 * r * r) + nv * r, 2.0 * nw * r - 2.0 * nv, -nw + nv * r]),
    )
    q1 = 2.0 * (1.0 - r * r) * (nw - nv * r) * wmvx2
    q2 = 2.0 * (r * r - 1.0) * np.array(
        [
            nw * (1.0 + 3.0 * r * r) - nv * r,
            -8.0 * nw * r - nv * r * r,
            4.0 * nw + 5.0 * nv * r,
            -3.0 * nv,
        ]
    )
    pd = np.polynomial.polynomial.polyder
    return {
        "p1": p1,
        "p2": p2,
        "p3": p3,
        "q1": q1,
        "q2": q2,
        "dp3": pd(p3),
        "dq1": pd(q1),
        "dq2": pd(q2),
    }


def cubic_real_roots(spec: EqualVarSpec, t: float) -> np.ndarray:
    """Sorted real roots of the denominator Q1(x) + t Q2(x).

    The leading coefficient vanishes when nu_v == 0, degenerating the cubic;
    near-zero leading coefficients (relative to the largest) are trimmed
    before root finding, and roots are polished with one Newton step.
    """
    if t <= 0.0:
        raise ValueError(f"t must be positive, got {t}")
    co = polynomial_coefficients(spec)
    den = np.zeros(4)
    den[: co["q1"].size] += co["q1"]
    den += t * co["q2"]
    scale = np.max(np.abs(den))
    if scale == 0.0:
        raise ValueError("denominator is identically zero")
    trimmed = den.copy()
    while trimmed.size > 1 and abs(trimmed[-1]) < 1e-14 * scale:
        trimmed = trimmed[:-1]
    if trimmed.size <= 1:
        return np.array([])
    roots = np.polynomial.polynomial.polyroots(trimmed)
    real = roots[np.abs(roots.imag) <= 1e-8 * (1.0 + np.abs(roots))].real
    if real.size:
        # one Newton polish against the untrimmed cubic
        pv = np.polynomial.polynomial.polyval
        dden = np.polynomial.polynomial.polyder(den)
        slope = pv(real, dden)
        step = np.where(slope != 0.0, pv(real, den) / np.where(slope == 0.0, 1.0, slope), 0.0)
        real = real - step
    return np.sort(real)


def singular_mask(spec: EqualVarSpec, t: float, x, half_width: float = TUBE_HALF_WIDTH):
    """Boolean mask of points within half_width of a real denominator root."""
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    roots = cubic_real_roots(spec, t)
    mask = np.zeros(x_arr.shape, dtype=bool)
    for r in roots:
        mask |= np.abs(x_arr - r) < half_width
    return mask


def _coeffs_raw(nu_v, nu_w, rho, t, x, co=None):
    """(D, C, S, denom, denom_scale) arrays; C uses the quotient-rule form."""
    if co is None:
        co = _poly_coeff_arrays(nu_v, nu_w, rho)
    pv = np.polynomial.polynomial.polyval
    p1 = pv(x, co["p1"])
    p2 = pv(x, co["p2"])
    p3 = pv(x, co["p3"])
    q1 = pv(x, co["q1"])
    q2 = pv(x, co["q2"])
    dp3 = pv(x, co["dp3"])
    dq1 = pv(x, co["dq1"])
    dq2 = pv(x, co["dq2"])

    den = q1 + t * q2
    den_scale = np.maximum(np.abs(q1), np.abs(t * q2))

    # callers reject den inside the singular tube after the fact
    with np.errstate(divide="ignore", invalid="ignore"):
        diff = p3 / den
        conv = (
            (p1 + t * p2) / (t * den) - dp3 / den + p3 * (dq1 + t * dq2) / (den * den)
        )
    src = (nu_v * nu_v + nu_w * nu_w - 2.0 * rho * nu_v * nu_w) / (
        2.0 * t * t * (1.0 - rho * rho)
    ) - 1.0 / t
    return diff, conv, src, den, den_scale


def pde_coefficients(spec: EqualVarSpec, x) -> PdeCoefficients:
    """Diffusion/convection/source coefficients at scalar x and t = spec.t."""
    xf = float(x)
    d, c, s, den, scale = _coeffs_raw(spec.nu_v, spec.nu_w, spec.rho, spec.t, xf)
    if abs(den) <= EPS_DENOM * scale:
        raise SingularPointError(
            f"x = {xf} is within the singular tube of the denominator cubic"
        )
    return PdeCoefficients(D=float(d), C=float(c), S=float(s))


def diffusion_x_derivative(spec: EqualVarSpec, x):
    """Analytic d/dx of the diffusion coefficient via the quotient rule."""
    co = polynomial_coefficients(spec)
    pv = np.polynomial.polynomial.polyval
    x_arr = np.asarray(x, dtype=float)
    p3 = pv(x_arr, co["p3"])
    dp3 = pv(x_arr, co["dp3"])
    den = pv(x_arr, co["q1"]) + spec.t * pv(x_arr, co["q2"])
    dden = pv(x_arr, co["dq1"]) + spec.t * pv(x_arr, co["dq2"])
    out = dp3 / den - p3 * dden / (den * den)
    if x_arr.ndim == 0:
        return float(out)
    return out


def g_coefficients(spec: EqualVarSpec, x) -> GCoefficients:
    """First/second-derivative coefficients of the evolution identity.

    Assembled directly from the moment-coefficient formulas (independent of
    the rational closed forms): with C_xx = A_xx + F_xx W2 + E_xx W4 and
    D_xx = F_xx W1 + E_xx W3,

        G_x  = (A_t D_xx - B_t C_xx) / (A_x D_xx - B_x C_xx)
        G_xx = (A_x B_t - A_t B_x) / (A_x D_xx - B_x C_xx)
    """
    from .specfun import moment_recurrence

    nv, nw, r, t = spec.nu_v, spec.nu_w, spec.rho, spec.t
    xf = float(x)
    one_m_r2 = 1.0 - r * r
    s32 = one_m_r2**1.5
    s52 = one_m_r2**2.5
    t2, t3 = t * t, t**3

    denom = 2.0 * one_m_r2 * t
    a = (1.0 - 2.0 * r * xf + xf * xf) / denom
    b = (nv - r * nw + (nw - r * nv) * xf) / denom

    coef_at = (1.0 + xf * xf - 2.0 * xf * r) / (2.0 * t3 * s32)
    coef_bt = -(nv + nw * xf - (nw + nv * xf) * r) / (t3 * s32)
    coef_ax = (r - xf) / (t2 * s32)
    coef_bx = (nw - nv * r) / (t2 * s32)
    coef_exx = (xf - r) ** 2 / (t3 * s52)
    coef_fxx = 2.0 * (xf - r) * (-nw + nv * r) / (t3 * s52)
    coef_axx = ((nw - nv * r) ** 2 + t * (r * r - 1.0)) / (t3 * s52)

    w1, w2, w3, w4 = moment_recurrence(a, b)
    cxx = coef_axx + coef_fxx * w2 + coef_exx * w4
    dxx = coef_fxx * w1 + coef_exx * w3

    den = coef_ax * dxx - coef_bx * cxx
    scale = max(abs(coef_ax * dxx), abs(coef_bx * cxx))
    if abs(den) <= EPS_DENOM * scale:
        raise SingularPointError(f"x = {xf} is singular for the derivative elimination")
    return GCoefficients(
        G_x=(coef_at * dxx - coef_bt * cxx) / den,
        G_xx=(coef_ax * coef_bt - coef_at * coef_bx) / den,
    )


def residual(spec: EqualVarSpec, x) -> float:
    """h_t - (d/dx[D h_x] + C h_x + S h) at scalar x; ~0 away from singular tubes."""
    coeffs = pde_coefficients(spec, x)
    d_x = diffusion_x_derivative(spec, x)
    h = density_equal_var(spec, x)
    h_t, h_x, h_xx = derivatives(spec, x)
    return h_t - (coeffs.D * h_xx + (d_x + coeffs.C) * h_x + coeffs.S * h)


def positivity_interval(
    op: OperatorSpec,
    window: tuple[float, float],
    n_probe: int = 201,
    t_decades: tuple[float, float] = (-6.0, 2.0),
    n_t: int = 33,
):
    """Probe D(x, t) > 0 on the window across a log-spaced t set.

    Returns (all_positive, first_violating_x); points inside singular tubes
    are skipped.
    """
    lo, hi = window
    if not lo < hi:
        raise ValueError(f"window must be increasing, got {window}")
    xs = np.linspace(lo, hi, n_probe)
    ts = np.logspace(t_decades[0], t_decades[1], n_t)
    ts = np.append(ts, op.t0)
    co = polynomial_coefficients(op.params)
    for t in ts:
        d, _, _, den, scale = _coeffs_raw(
            op.params.nu_v, op.params.nu_w, op.params.rho, float(t), xs, co=co
        )
        ok = np.abs(den) > EPS_DENOM * np.maximum(scale, 1e-300)
        bad = ok & (d <= 0.0)
        if np.any(bad):
            return False, float(xs[np.argmax(bad)])
    return True, None
