"""Independent reference implementations used only by the test suite.

Everything here is written as a separate code path from the package:
high-precision mpmath scalar evaluation, exhaustive grid searches, and
naive looped versions of the network layers.  Expected values frozen
into the tests were generated with these functions.
"""

import math

import mpmath as mp
import numpy as np

mp.mp.dps = 50


# ---------------------------------------------------------------------------
# High-precision scalar force model (mpmath, 50 digits)
# ---------------------------------------------------------------------------

def mp_shear_strength(c, phi, sigma_n):
    return mp.mpf(c) + mp.mpf(sigma_n) * mp.tan(mp.mpf(phi))


def mp_tanh_factor(i_b, v, c1):
    s = mp.mpf(i_b[0]) * mp.mpf(v[0]) + mp.mpf(i_b[1]) * mp.mpf(v[1])
    return mp.tanh(-mp.mpf(c1) * s)


def mp_coefficients(rho, beta, phi, alpha, delta_eff):
    rho, beta, phi, alpha, delta_eff = map(mp.mpf, (rho, beta, phi, alpha, delta_eff))
    eta = delta_eff + rho + phi + beta
    apb = alpha + phi + beta
    n_gamma = (mp.cot(rho) + mp.cot(beta)) * mp.sin(apb) / (2 * mp.sin(eta))
    n_c = mp.cos(phi) / (mp.sin(beta) * mp.sin(eta))
    n_q = mp.sin(apb) / mp.sin(eta)
    n_a = -mp.cos(rho + phi + beta) / (mp.sin(rho) * mp.sin(eta))
    return n_gamma, n_c, n_q, n_a, eta


def mp_force(phi, c, delta, c_a, gamma, rho, alpha, w, d, q, v, i_b, beta,
             delta_d, c1):
    """Scalar force magnitude, clamped at zero, with velocity-scaled delta/c_a."""
    t = mp_tanh_factor(i_b, v, c1)
    delta_eff = t * mp.mpf(delta)
    c_a_eff = t * mp.mpf(c_a)
    n_gamma, n_c, n_q, n_a, _ = mp_coefficients(rho, beta, phi, alpha, delta_eff)
    dp = mp.mpf(d) + mp.mpf(delta_d)
    f = (mp.mpf(gamma) * dp ** 2 * mp.mpf(w) * n_gamma
         + mp.mpf(c) * dp * mp.mpf(w) * n_c
         + mp.mpf(q) * n_q
         + c_a_eff * mp.mpf(w) * n_a)
    return f if f > 0 else mp.mpf(0)


def mp_force_xz(phi, c, delta, c_a, gamma, rho, alpha, w, d, q, v, i_b, beta,
                delta_d, c1):
    f = mp_force(phi, c, delta, c_a, gamma, rho, alpha, w, d, q, v, i_b, beta,
                 delta_d, c1)
    t = mp_tanh_factor(i_b, v, c1)
    psi = mp.pi / 2 - mp.mpf(rho) - t * mp.mpf(delta) + mp.mpf(alpha)
    return f * mp.cos(psi), f * mp.sin(psi)


# ---------------------------------------------------------------------------
# Brute-force float64 path with exhaustive failure-angle grid
# ---------------------------------------------------------------------------

BETA_GRID_STEP_DEG = 0.001


def grid_coefficients(rho, beta, phi, alpha, delta_eff):
    eta = delta_eff + rho + phi + beta
    apb = alpha + phi + beta
    n_gamma = (1.0 / np.tan(rho) + 1.0 / np.tan(beta)) * np.sin(apb) / (2.0 * np.sin(eta))
    n_c = np.cos(phi) / (np.sin(beta) * np.sin(eta))
    n_q = np.sin(apb) / np.sin(eta)
    n_a = -np.cos(rho + phi + beta) / (np.sin(rho) * np.sin(eta))
    return n_gamma, n_c, n_q, n_a, eta


def grid_beta_star(rho, phi, alpha, delta_eff, beta_lo, beta_hi,
                   step_deg=BETA_GRID_STEP_DEG):
    """Exhaustive grid argmin of the wedge-weight coefficient."""
    n = int(round((beta_hi - beta_lo) / math.radians(step_deg))) + 1
    betas = np.linspace(beta_lo, beta_hi, n)
    n_gamma = grid_coefficients(rho, betas, phi, alpha, delta_eff)[0]
    return float(betas[int(np.argmin(n_gamma))])


def grid_force(phi, c, delta, c_a, gamma, rho, alpha, w, d, q, v, i_b,
               delta_d, c1, beta_lo, beta_hi, step_deg=BETA_GRID_STEP_DEG):
    """Force magnitude with the failure angle solved by exhaustive grid."""
    s = i_b[0] * v[0] + i_b[1] * v[1]
    t = math.tanh(-c1 * s)
    delta_eff = t * delta
    c_a_eff = t * c_a
    beta = grid_beta_star(rho, phi, alpha, delta_eff, beta_lo, beta_hi, step_deg)
    n_gamma, n_c, n_q, n_a, _ = grid_coefficients(rho, beta, phi, alpha, delta_eff)
    dp = d + delta_d
    f = gamma * dp * dp * w * n_gamma + c * dp * w * n_c + q * n_q + c_a_eff * w * n_a
    return max(f, 0.0), beta


# ---------------------------------------------------------------------------
# Naive looped layer references
# ---------------------------------------------------------------------------

def loop_temporal_conv(x, weights, bias, stride):
    """x: (T, C_in); weights: (C_out, C_in, K); returns (L, C_out)."""
    t_len, c_in = x.shape
    c_out, _, k = weights.shape
    l_out = (t_len - k) // stride + 1
    out = np.zeros((l_out, c_out))
    for i in range(l_out):
        for o in range(c_out):
            acc = bias[o]
            for tap in range(k):
                for ch in range(c_in):
                    acc += weights[o, ch, tap] * x[i * stride + tap, ch]
            out[i, o] = acc
    return out


def loop_dense(x, weights, bias):
    """x: (n_in,); weights: (n_in, n_out)."""
    n_in, n_out = weights.shape
    out = np.zeros(n_out)
    for j in range(n_out):
        acc = bias[j]
        for i in range(n_in):
            acc += x[i] * weights[i, j]
        out[j] = acc
    return out


def loop_attention(x, wq, wk, wv, wo, n_heads):
    """Single-sample multi-head self-attention; x: (L, N)."""
    l_len, n_model = x.shape
    d_head = n_model // n_heads
    q = x @ wq
    k = x @ wk
    v = x @ wv
    out = np.zeros((l_len, n_model))
    for h in range(n_heads):
        sl = slice(h * d_head, (h + 1) * d_head)
        scores = q[:, sl] @ k[:, sl].T / math.sqrt(d_head)
        att = np.zeros_like(scores)
        for i in range(l_len):
            row = scores[i] - scores[i].max()
            e = np.exp(row)
            att[i] = e / e.sum()
        out[:, sl] = att @ v[:, sl]
    return out @ wo


def reference_adam(param, grads, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """Apply a sequence of gradients to one parameter array; returns history."""
    p = param.astype(float).copy()
    m = np.zeros_like(p)
    v = np.zeros_like(p)
    history = [p.copy()]
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        p = p - lr * m_hat / (np.sqrt(v_hat) + eps)
        history.append(p.copy())
    return history


def central_difference(f, x, h):
    """Central finite difference of a scalar function at scalar x."""
    return (f(x + h) - f(x - h)) / (2.0 * h)
