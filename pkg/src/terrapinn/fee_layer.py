"""Differentiable force-model layer built from autodiff primitives.

The forward arithmetic mirrors fee.force_xz_arrays / fee.dngamma_dbeta_arrays
term for term (same operation order), so values agree bit-for-bit with the
plain-array implementation wherever the guard mask is inactive.  Keep the
two in sync when touching either.
"""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .fee import EPS_SINGULARITY, VELOCITY_RATE

_HALF_PI = math.pi / 2.0


def eta_of(phi: Tensor, delta_eff: Tensor, rho: Tensor, beta: Tensor) -> Tensor:
    return ad.add(ad.add(ad.add(delta_eff, rho), phi), beta)


def valid_eta_mask(eta_data: np.ndarray, guard: float = EPS_SINGULARITY) -> np.ndarray:
    """Samples whose composite angle admits a finite, passive-regime force."""
    return (eta_data > guard) & (eta_data < math.pi - guard)


def force_layer(phi: Tensor, c: Tensor, delta: Tensor, c_a: Tensor,
                gamma: Tensor, rho: Tensor, alpha: Tensor, w: Tensor,
                d: Tensor, q: Tensor, v_x: Tensor, v_z: Tensor,
                i_bx: Tensor, i_bz: Tensor, beta: Tensor, delta_d: Tensor,
                c1: float = VELOCITY_RATE):
    """Batched differentiable force evaluation.

    Returns (f_x, f_z, valid, eta): forces in N, valid a boolean array
    flagging samples whose eta stayed inside the guard band (invalid
    samples contribute exactly zero force and zero gradient), and eta the
    composite angle tensor actually used.

    Unlike the plain-array path this clamps the total depth of cut at
    zero: the estimated residual depth may push d' negative, which is
    outside the model's regime and must not produce a pulling force.
    """
    s = ad.add(ad.mul(i_bx, v_x), ad.mul(i_bz, v_z))
    t = ad.tanh(ad.mul(s, -c1))
    delta_eff = ad.mul(t, delta)
    c_a_eff = ad.mul(t, c_a)

    eta = eta_of(phi, delta_eff, rho, beta)
    valid = valid_eta_mask(eta.data)
    eta_safe = ad.where(valid, eta, ad.constant(np.full_like(eta.data, _HALF_PI)))

    apb = ad.add(ad.add(alpha, phi), beta)
    sin_eta = ad.sin(eta_safe)
    sin_apb = ad.sin(apb)
    cot_rho = ad.div(ad.cos(rho), ad.sin(rho))
    cot_beta = ad.div(ad.cos(beta), ad.sin(beta))
    n_gamma = ad.div(ad.mul(ad.add(cot_rho, cot_beta), sin_apb),
                     ad.mul(sin_eta, 2.0))
    n_c = ad.div(ad.cos(phi), ad.mul(ad.sin(beta), sin_eta))
    n_q = ad.div(sin_apb, sin_eta)
    n_a = ad.div(ad.mul(ad.cos(ad.add(ad.add(rho, phi), beta)), -1.0),
                 ad.mul(ad.sin(rho), sin_eta))

    dp = ad.relu(ad.add(d, delta_d))  # no engagement below the surface line
    term_gamma = ad.mul(ad.mul(ad.mul(gamma, ad.power(dp, 2.0)), w), n_gamma)
    term_c = ad.mul(ad.mul(ad.mul(c, dp), w), n_c)
    term_q = ad.mul(q, n_q)
    term_a = ad.mul(ad.mul(c_a_eff, w), n_a)
    f_raw = ad.add(ad.add(ad.add(term_gamma, term_c), term_q), term_a)
    f = ad.relu(f_raw)

    psi = ad.add(ad.sub(ad.sub(ad.constant(_HALF_PI), rho), delta_eff), alpha)
    zero = ad.constant(np.zeros_like(eta.data))
    f_x = ad.where(valid, ad.mul(f, ad.cos(psi)), zero)
    f_z = ad.where(valid, ad.mul(f, ad.sin(psi)), zero)
    return f_x, f_z, valid, eta


def dngamma_dbeta_layer(rho: Tensor, beta: Tensor, phi: Tensor,
                        alpha: Tensor, delta_eff: Tensor,
                        valid: np.ndarray) -> Tensor:
    """Differentiable d n_gamma / d beta; invalid samples evaluate to zero.

    Callers who want gradient flow restricted to beta must pass phi,
    alpha, delta_eff (and rho) already wrapped in stop_gradient.
    """
    eta = eta_of(phi, delta_eff, rho, beta)
    eta_safe = ad.where(valid, eta, ad.constant(np.full_like(eta.data, _HALF_PI)))
    apb = ad.add(ad.add(alpha, phi), beta)
    sin_eta = ad.sin(eta_safe)
    sin_apb = ad.sin(apb)
    sin_beta = ad.sin(beta)
    cot_rho = ad.div(ad.cos(rho), ad.sin(rho))
    cot_beta = ad.div(ad.cos(beta), sin_beta)
    cot_eta = ad.div(ad.cos(eta_safe), sin_eta)
    n_gamma = ad.div(ad.mul(ad.add(cot_rho, cot_beta), sin_apb),
                     ad.mul(sin_eta, 2.0))
    dg = ad.add(ad.div(ad.mul(ad.div(ad.constant(-1.0), ad.power(sin_beta, 2.0)),
                              sin_apb), ad.constant(2.0)),
                ad.div(ad.mul(ad.add(cot_rho, cot_beta), ad.cos(apb)),
                       ad.constant(2.0)))
    out = ad.sub(ad.div(dg, sin_eta), ad.mul(n_gamma, cot_eta))
    zero = ad.constant(np.zeros_like(out.data))
    return ad.where(valid, out, zero)
