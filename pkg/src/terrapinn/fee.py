"""Closed-form blade-soil interaction force model.

Passive-wedge earth-pressure force balance for a flat blade cutting soil,
with velocity-dependent scaling of the soil-tool friction angle and
adhesion, numeric selection of the failure-plane angle, and exact
analytic gradients with respect to every model parameter.

All angles are in radians.  Configuration boundaries (files, tables) use
degrees and convert on the way in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Velocity scaling rate for the soil-tool friction/adhesion sign flip, s/m.
# Chosen so the tanh transition completes within |i_b.v| ~ 0.1 m/s, fast
# relative to commanded forward velocities of 0.3-1.0 m/s.
VELOCITY_RATE = 20.0

# Guard band around {0, pi} for eta, beta, rho, rad.  Inside the band the
# coefficients blow up; callers get a typed error instead of a huge float.
EPS_SINGULARITY = 1e-3

# Validity limits for the failure-plane angle, rad.
BETA_LIMIT_LO = math.radians(11.5)
BETA_LIMIT_HI = math.radians(34.5)

_HALF_PI = math.pi / 2.0


class SingularGeometryError(ValueError):
    """Wedge geometry too close to a coefficient singularity."""


def _check_angle_regular(name: str, value: float) -> None:
    if min(abs(value), abs(value - math.pi)) < EPS_SINGULARITY:
        raise SingularGeometryError(
            f"{name}={value:.6g} rad is within {EPS_SINGULARITY} of a singularity"
        )


# ---------------------------------------------------------------------------
# Parameter containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SoilParams:
    """Intrinsic soil material values.

    phi: internal friction angle, rad; c: cohesion, Pa; delta: soil-tool
    friction angle, rad; c_a: soil-tool adhesion, Pa; gamma: moist unit
    weight, N/m^3.
    """

    phi: float
    c: float
    delta: float
    c_a: float
    gamma: float

    def __post_init__(self):
        if not 0.0 <= self.phi < _HALF_PI:
            raise ValueError(f"phi must be in [0, pi/2), got {self.phi}")
        if not 0.0 <= self.delta < _HALF_PI:
            raise ValueError(f"delta must be in [0, pi/2), got {self.delta}")
        if self.c < 0.0:
            raise ValueError(f"c must be >= 0, got {self.c}")
        if self.c_a < 0.0:
            raise ValueError(f"c_a must be >= 0, got {self.c_a}")
        if not self.gamma > 0.0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")


@dataclass(frozen=True)
class ToolGeometry:
    """Blade geometry: rho is the soil-tool angle, alpha the surface
    inclination (both rad), w the tool width in m."""

    rho: float
    alpha: float
    w: float

    def __post_init__(self):
        if not math.radians(2.0) < self.rho < math.radians(178.0):
            raise ValueError(f"rho must be in (2 deg, 178 deg), got {self.rho} rad")
        if abs(self.alpha) > math.radians(30.0):
            raise ValueError(f"|alpha| must be <= 30 deg, got {self.alpha} rad")
        if not 0.0 < self.w <= 3.164:
            raise ValueError(f"w must be in (0, 3.164] m, got {self.w}")


@dataclass(frozen=True)
class CutState:
    """Engagement state: depth of cut d (m), surcharge force q (N), blade
    velocity v = (v_x, v_z) (m/s), and the unit vector i_b pointing up
    along the blade face."""

    d: float
    q: float
    v: tuple[float, float]
    i_b: tuple[float, float]

    def __post_init__(self):
        if self.q < 0.0:
            raise ValueError(f"q must be >= 0, got {self.q}")
        norm = math.hypot(self.i_b[0], self.i_b[1])
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"i_b must be a unit vector, |i_b|={norm}")


@dataclass(frozen=True)
class FeeTheta:
    """Full parameter vector consumed by the force model.

    A theta is well-posed when eta = delta_eff + rho + phi + beta lies in
    (2 deg, 178 deg) and beta within [11.5 deg, 34.5 deg]; violations are
    reported by the force operations (SingularGeometryError near {0, pi})
    rather than at construction, so near-singular inputs can be probed.
    """

    soil: SoilParams
    tool: ToolGeometry
    cut: CutState
    beta: float
    delta_d: float = 0.0

    def __post_init__(self):
        dp = self.cut.d + self.delta_d
        if not 0.0 <= dp <= 0.660:
            raise ValueError(f"d + delta_d must be in [0, 0.660] m, got {dp}")

    @property
    def depth_total(self) -> float:
        return self.cut.d + self.delta_d

    @property
    def delta_eff(self) -> float:
        t = float(tanh_factor(self.cut.i_b[0], self.cut.i_b[1],
                              self.cut.v[0], self.cut.v[1]))
        return t * self.soil.delta

    @property
    def eta(self) -> float:
        return self.delta_eff + self.tool.rho + self.soil.phi + self.beta


@dataclass(frozen=True)
class FeeCoefficients:
    """Dimensionless force coefficients and the composite angle eta (rad)."""

    n_gamma: float
    n_c: float
    n_q: float
    n_a: float
    eta: float


@dataclass(frozen=True)
class ForceXZ:
    """Force decomposed along the travel (x) and vertical (z) axes, N."""

    f_x: float
    f_z: float

    def magnitude(self) -> float:
        return math.hypot(self.f_x, self.f_z)


def blade_up_vector(rho: float) -> tuple[float, float]:
    """Unit vector pointing up along the blade face for soil-tool angle rho.

    Oriented so that forward horizontal travel gives i_b . v < 0, which
    puts the friction/adhesion scaling at its full positive value.
    """
    return (-math.cos(rho), math.sin(rho))


# ---------------------------------------------------------------------------
# Array-valued core (shared by the scalar API, the failure-angle solver and
# the differentiable network layer, which mirrors the operation order here)
# ---------------------------------------------------------------------------

def tanh_factor(i_bx, i_bz, v_x, v_z, c1: float = VELOCITY_RATE):
    """Velocity scaling factor tanh(-c1 * (i_b . v)); odd in (i_b . v)."""
    s = i_bx * v_x + i_bz * v_z
    return np.tanh(-c1 * s)


def coefficient_arrays(rho, beta, phi, alpha, delta_eff):
    """Force coefficients (n_gamma, n_c, n_q, n_a, eta) for array inputs.

    No singularity checking; callers are responsible for keeping eta,
    beta, rho away from {0, pi}.
    """
    eta = delta_eff + rho + phi + beta
    apb = alpha + phi + beta
    sin_eta = np.sin(eta)
    sin_apb = np.sin(apb)
    cot_rho = np.cos(rho) / np.sin(rho)
    cot_beta = np.cos(beta) / np.sin(beta)
    n_gamma = (cot_rho + cot_beta) * sin_apb / (2.0 * sin_eta)
    n_c = np.cos(phi) / (np.sin(beta) * sin_eta)
    n_q = sin_apb / sin_eta
    n_a = -np.cos(rho + phi + beta) / (np.sin(rho) * sin_eta)
    return n_gamma, n_c, n_q, n_a, eta


def force_terms_arrays(n_gamma, n_c, n_q, n_a, gamma, c, q, c_a_eff, w, dp):
    """Raw (unclamped) force magnitude from coefficients and linear factors."""
    term_gamma = gamma * dp ** 2 * w * n_gamma
    term_c = c * dp * w * n_c
    term_q = q * n_q
    term_a = c_a_eff * w * n_a
    return term_gamma + term_c + term_q + term_a


def force_xz_arrays(phi, c, delta, c_a, gamma, rho, alpha, w, d, q,
                    v_x, v_z, i_bx, i_bz, beta, delta_d,
                    c1: float = VELOCITY_RATE):
    """Vectorized force model: returns (f_x, f_z, f, eta).

    f is the scalar magnitude clamped at zero from below; the passive
    failure derivation assumes the blade pushes on the wedge, so a
    negative magnitude signals an invalid regime rather than tension.
    """
    t = tanh_factor(i_bx, i_bz, v_x, v_z, c1)
    delta_eff = t * delta
    c_a_eff = t * c_a
    n_gamma, n_c, n_q, n_a, eta = coefficient_arrays(rho, beta, phi, alpha, delta_eff)
    dp = d + delta_d
    f_raw = force_terms_arrays(n_gamma, n_c, n_q, n_a, gamma, c, q, c_a_eff, w, dp)
    f = np.maximum(f_raw, 0.0)
    psi = _HALF_PI - rho - delta_eff + alpha
    f_x = f * np.cos(psi)
    f_z = f * np.sin(psi)
    return f_x, f_z, f, eta


def ngamma_arrays(rho, beta, phi, alpha, delta_eff):
    """Wedge-weight coefficient only (used by the failure-angle solver)."""
    return coefficient_arrays(rho, beta, phi, alpha, delta_eff)[0]


def dngamma_dbeta_arrays(rho, beta, phi, alpha, delta_eff):
    """Exact partial derivative of n_gamma with respect to beta, 1/rad."""
    eta = delta_eff + rho + phi + beta
    apb = alpha + phi + beta
    sin_eta = np.sin(eta)
    sin_apb = np.sin(apb)
    sin_beta = np.sin(beta)
    cot_rho = np.cos(rho) / np.sin(rho)
    cot_beta = np.cos(beta) / sin_beta
    cot_eta = np.cos(eta) / sin_eta
    n_gamma = (cot_rho + cot_beta) * sin_apb / (2.0 * sin_eta)
    dg = (-1.0 / sin_beta ** 2) * sin_apb / 2.0 \
        + (cot_rho + cot_beta) * np.cos(apb) / 2.0
    return dg / sin_eta - n_gamma * cot_eta


# ---------------------------------------------------------------------------
# Scalar public API
# ---------------------------------------------------------------------------

def shear_strength(c: float, phi: float, sigma_n: float) -> float:
    """Soil shear strength tau = c + sigma_n * tan(phi), N.

    Raises ValueError if phi is outside [0, pi/2) or c, sigma_n negative.
    """
    if not 0.0 <= phi < _HALF_PI:
        raise ValueError(f"phi must be in [0, pi/2), got {phi}")
    if c < 0.0:
        raise ValueError(f"c must be >= 0, got {c}")
    if sigma_n < 0.0:
        raise ValueError(f"sigma_n must be >= 0, got {sigma_n}")
    return c + sigma_n * math.tan(phi)


def effective_tool_params(delta: float, c_a: float, i_b: tuple[float, float],
                          v: tuple[float, float],
                          c1: float = VELOCITY_RATE) -> tuple[float, float]:
    """Velocity-scaled soil-tool friction angle and adhesion.

    Both outputs flip sign with the relative sliding direction of the
    wedge along the blade face and saturate at (delta, c_a) for strongly
    negative i_b . v.
    """
    if c1 <= 0.0:
        raise ValueError(f"c1 must be > 0, got {c1}")
    t = float(tanh_factor(i_b[0], i_b[1], v[0], v[1], c1))
    return t * delta, t * c_a


def fee_coefficients(theta: FeeTheta, c1: float = VELOCITY_RATE) -> FeeCoefficients:
    """Force coefficients for theta, using the velocity-scaled friction angle.

    Raises SingularGeometryError when eta, beta or rho falls inside the
    guard band around {0, pi}.
    """
    t = float(tanh_factor(theta.cut.i_b[0], theta.cut.i_b[1],
                          theta.cut.v[0], theta.cut.v[1], c1))
    delta_eff = t * theta.soil.delta
    eta = delta_eff + theta.tool.rho + theta.soil.phi + theta.beta
    _check_angle_regular("eta", eta)
    _check_angle_regular("beta", theta.beta)
    _check_angle_regular("rho", theta.tool.rho)
    n_gamma, n_c, n_q, n_a, eta = coefficient_arrays(
        theta.tool.rho, theta.beta, theta.soil.phi, theta.tool.alpha, delta_eff)
    return FeeCoefficients(float(n_gamma), float(n_c), float(n_q),
                           float(n_a), float(eta))


def fee_force(theta: FeeTheta, c1: float = VELOCITY_RATE) -> float:
    """Scalar force magnitude required to shear the soil, N (>= 0)."""
    return fee_force_xz(theta, c1).magnitude()


def fee_force_xz(theta: FeeTheta, c1: float = VELOCITY_RATE) -> ForceXZ:
    """Force decomposed along x and z.

    The decomposition angle uses the velocity-scaled friction angle, the
    same effective value that enters the coefficients.
    """
    fee_coefficients(theta, c1)  # singularity check
    f_x, f_z, _, _ = force_xz_arrays(
        theta.soil.phi, theta.soil.c, theta.soil.delta, theta.soil.c_a,
        theta.soil.gamma, theta.tool.rho, theta.tool.alpha, theta.tool.w,
        theta.cut.d, theta.cut.q, theta.cut.v[0], theta.cut.v[1],
        theta.cut.i_b[0], theta.cut.i_b[1], theta.beta, theta.delta_d, c1)
    return ForceXZ(float(f_x), float(f_z))


_INV_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def solve_beta_star(soil: SoilParams, tool: ToolGeometry, cut: CutState,
                    interval: tuple[float, float],
                    grid_points: int = 256, tol: float = 1e-8,
                    c1: float = VELOCITY_RATE) -> float:
    """Failure-plane angle minimizing the wedge-weight coefficient, rad.

    Coarse grid scan over the interval followed by golden-section
    refinement.  Returns the endpoint when the minimum lies at a boundary.
    The default tol is tighter than strictly needed so that interior
    minima satisfy |d n_gamma / d beta| < 1e-5 at the returned point.
    """
    lo, hi = interval
    if not 0.0 < lo <= hi < math.pi:
        raise ValueError(f"interval must lie inside (0, pi), got {interval}")
    if hi - lo < tol:
        return 0.5 * (lo + hi)
    t = float(tanh_factor(cut.i_b[0], cut.i_b[1], cut.v[0], cut.v[1], c1))
    delta_eff = t * soil.delta

    betas = np.linspace(lo, hi, max(grid_points, 2))
    values = ngamma_arrays(tool.rho, betas, soil.phi, tool.alpha, delta_eff)
    if not np.all(np.isfinite(values)):
        raise SingularGeometryError(
            "n_gamma is singular on the search interval")
    k = int(np.argmin(values))

    def f(b: float) -> float:
        return float(ngamma_arrays(tool.rho, b, soil.phi, tool.alpha, delta_eff))

    # Bracket around the grid minimum; a boundary grid minimum may still
    # hide an interior one within one grid cell, so keep the neighbors.
    a = betas[max(k - 1, 0)]
    b = betas[min(k + 1, len(betas) - 1)]
    x1 = b - _INV_GOLDEN * (b - a)
    x2 = a + _INV_GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > tol:
        if f1 < f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INV_GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INV_GOLDEN * (b - a)
            f2 = f(x2)
    best = 0.5 * (a + b)
    # Prefer an exact endpoint when the boundary value is the true minimum.
    for endpoint in (lo, hi):
        if f(endpoint) <= f(best):
            best = endpoint
    return float(best)


def dngamma_dbeta(theta: FeeTheta, c1: float = VELOCITY_RATE) -> float:
    """Exact d n_gamma / d beta at theta, 1/rad."""
    fee_coefficients(theta, c1)  # singularity check
    t = float(tanh_factor(theta.cut.i_b[0], theta.cut.i_b[1],
                          theta.cut.v[0], theta.cut.v[1], c1))
    return float(dngamma_dbeta_arrays(theta.tool.rho, theta.beta,
                                      theta.soil.phi, theta.tool.alpha,
                                      t * theta.soil.delta))


# Order of the parameter axis in gradient outputs.
FEE_PARAM_NAMES = ("phi", "c", "delta", "c_a", "gamma", "rho", "alpha",
                   "w", "d", "q", "v_x", "v_z", "beta", "delta_d")


def force_xz_gradient_arrays(phi, c, delta, c_a, gamma, rho, alpha, w, d, q,
                             v_x, v_z, i_bx, i_bz, beta, delta_d,
                             c1: float = VELOCITY_RATE):
    """Analytic Jacobian of (f_x, f_z) for array inputs.

    Returns (f_x, f_z, jac) where jac has shape (2, 14) + broadcast shape,
    rows (f_x, f_z), columns ordered as FEE_PARAM_NAMES.  The zero clamp
    on the magnitude zeroes the gradient wherever the raw force is
    non-positive.
    """
    s = i_bx * v_x + i_bz * v_z
    t = np.tanh(-c1 * s)
    dt_ds = -c1 * (1.0 - t ** 2)
    delta_eff = t * delta
    c_a_eff = t * c_a

    eta = delta_eff + rho + phi + beta
    apb = alpha + phi + beta
    rpb = rho + phi + beta
    sin_eta, cos_eta = np.sin(eta), np.cos(eta)
    sin_apb, cos_apb = np.sin(apb), np.cos(apb)
    sin_rpb, cos_rpb = np.sin(rpb), np.cos(rpb)
    sin_beta, cos_beta = np.sin(beta), np.cos(beta)
    sin_rho, cos_rho = np.sin(rho), np.cos(rho)
    cot_rho = cos_rho / sin_rho
    cot_beta = cos_beta / sin_beta
    cot_eta = cos_eta / sin_eta

    n_gamma = (cot_rho + cot_beta) * sin_apb / (2.0 * sin_eta)
    n_c = np.cos(phi) / (sin_beta * sin_eta)
    n_q = sin_apb / sin_eta
    n_a = -cos_rpb / (sin_rho * sin_eta)

    dp = d + delta_d
    term_gamma = gamma * dp ** 2 * w * n_gamma
    term_c = c * dp * w * n_c
    term_q = q * n_q
    term_a = c_a_eff * w * n_a
    f_raw = term_gamma + term_c + term_q + term_a

    cg = gamma * dp ** 2 * w   # multiplies n_gamma
    cc = c * dp * w            # multiplies n_c
    ca = c_a_eff * w           # multiplies n_a

    # Numerator partials of the coefficients (eta held fixed).
    dg_gamma_dphi = (cot_rho + cot_beta) * cos_apb / 2.0
    dg_gamma_dbeta = (-1.0 / sin_beta ** 2) * sin_apb / 2.0 + dg_gamma_dphi
    dg_gamma_drho = (-1.0 / sin_rho ** 2) * sin_apb / 2.0
    dg_c_dphi = -np.sin(phi) / sin_beta
    dg_c_dbeta = -np.cos(phi) * cos_beta / sin_beta ** 2
    dg_a_dphi = sin_rpb / sin_rho
    dg_a_drho = sin_rpb / sin_rho + cos_rpb * cos_rho / sin_rho ** 2

    def with_eta(numerators, deta):
        """Total dF_raw for a parameter given numerator partials and deta/dx."""
        num_g, num_c_, num_q_, num_a = numerators
        out = (cg * num_g + cc * num_c_ + q * num_q_ + ca * num_a) / sin_eta
        return out - cot_eta * deta * f_raw

    zero = np.zeros_like(f_raw)
    dt_dvx = dt_ds * i_bx
    dt_dvz = dt_ds * i_bz

    df = {
        "phi": with_eta((dg_gamma_dphi, dg_c_dphi, cos_apb, dg_a_dphi), 1.0),
        "c": dp * w * n_c,
        "delta": -cot_eta * t * f_raw,
        "c_a": t * w * n_a,
        "gamma": dp ** 2 * w * n_gamma,
        "rho": with_eta((dg_gamma_drho, zero, zero, dg_a_drho), 1.0),
        "alpha": (cg * dg_gamma_dphi + q * cos_apb) / sin_eta,
        "w": gamma * dp ** 2 * n_gamma + c * dp * n_c + c_a_eff * n_a,
        "d": gamma * 2.0 * dp * w * n_gamma + c * w * n_c,
        "q": n_q + zero,
        "v_x": -cot_eta * delta * dt_dvx * f_raw + w * n_a * c_a * dt_dvx,
        "v_z": -cot_eta * delta * dt_dvz * f_raw + w * n_a * c_a * dt_dvz,
        "beta": with_eta((dg_gamma_dbeta, dg_c_dbeta, cos_apb, dg_a_dphi), 1.0),
        "delta_d": gamma * 2.0 * dp * w * n_gamma + c * w * n_c,
    }

    psi = _HALF_PI - rho - delta_eff + alpha
    cos_psi, sin_psi = np.cos(psi), np.sin(psi)
    dpsi = {
        "rho": -1.0, "alpha": 1.0, "delta": -t,
        "v_x": -delta * dt_dvx, "v_z": -delta * dt_dvz,
    }

    active = f_raw > 0.0
    f = np.maximum(f_raw, 0.0)
    f_x = f * cos_psi
    f_z = f * sin_psi

    shape = np.broadcast(f_raw, cos_psi).shape
    jac = np.zeros((2, len(FEE_PARAM_NAMES)) + shape)
    for j, name in enumerate(FEE_PARAM_NAMES):
        dfdx = np.where(active, df[name], 0.0)
        dpsidx = dpsi.get(name, 0.0)
        jac[0, j] = dfdx * cos_psi - f * sin_psi * dpsidx
        jac[1, j] = dfdx * sin_psi + f * cos_psi * dpsidx
    return f_x, f_z, jac


def fee_gradient(theta: FeeTheta, c1: float = VELOCITY_RATE) -> dict[str, tuple[float, float]]:
    """Gradient of (f_x, f_z) with respect to every element of theta.

    Returns a mapping from parameter name (FEE_PARAM_NAMES) to the pair
    (d f_x / d p, d f_z / d p).
    """
    fee_coefficients(theta, c1)  # singularity check
    _, _, jac = force_xz_gradient_arrays(
        theta.soil.phi, theta.soil.c, theta.soil.delta, theta.soil.c_a,
        theta.soil.gamma, theta.tool.rho, theta.tool.alpha, theta.tool.w,
        theta.cut.d, theta.cut.q, theta.cut.v[0], theta.cut.v[1],
        theta.cut.i_b[0], theta.cut.i_b[1], theta.beta, theta.delta_d, c1)
    return {name: (float(jac[0, j]), float(jac[1, j]))
            for j, name in enumerate(FEE_PARAM_NAMES)}
