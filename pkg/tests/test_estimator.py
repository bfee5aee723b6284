"""Estimator wiring and loss-semantics tests.

The loss checks construct head outputs directly (predict_from_heads) so
expected values are hand-computable; network-path tests force weights.
"""

import math

import numpy as np
import pytest

from terrapinn import autodiff as ad
from terrapinn import fee, losses, model, normalize
from terrapinn.normalize import ESTIMATED_PARAM_ORDER, Normalizer

RAD = math.radians


def make_normalizer(fx=5e3, fz=800.0):
    return Normalizer(obs_mean=np.zeros(9), obs_std=np.ones(9),
                      force_scale=np.array([fx, fz]))


def make_model(**overrides):
    cfg = model.ModelConfig(**overrides)
    return model.PinnModel(cfg, make_normalizer())


def known_batch(b, d=0.2, v_x=0.5, v_z=0.0, q=0.0):
    return {
        "c_a": np.full(b, 200.0), "gamma": np.full(b, 17e3),
        "rho": np.full(b, RAD(80)), "alpha": np.zeros(b),
        "w": np.full(b, 3.164), "d": np.full(b, float(d)),
        "q": np.full(b, float(q)), "v_x": np.full(b, float(v_x)),
        "v_z": np.full(b, float(v_z)),
    }


def heads_tensor(rows):
    return ad.tensor(np.asarray(rows, dtype=float), requires_grad=True)


# ---------------------------------------------------------------------------
# forward wiring
# ---------------------------------------------------------------------------

def test_zero_weights_heads_equal_clipped_biases():
    m = make_model()
    for name in m.store.names():
        m.store[name].data[:] = 0.0
    bias = np.array([0.7, -0.2, 0.3, 1.4, 0.5, 0.25, -0.5])
    m.store["head.b"].data[:] = bias

    b = 4
    obs = np.random.default_rng(0).normal(0, 1, (b, 60, 9))
    out = m.forward(obs, m.normalizer.normalize_known(known_batch(b)))

    for j, name in enumerate(ESTIMATED_PARAM_ORDER):
        lo, hi = normalize.norm_range(name)
        pre_phys = bias[j] * (hi - lo) + lo
        lim_lo, lim_hi = normalize.limits(name)
        want = np.clip(pre_phys, -np.inf if lim_lo is None else lim_lo,
                       np.inf if lim_hi is None else lim_hi)
        assert np.allclose(out["post"][name].data, want, atol=0)
    # residual head is the bias times the residual scale
    assert np.allclose(out["f_r"][0].data, 0.25 * m.normalizer.residual_scale[0], atol=0)
    assert np.allclose(out["f_r"][1].data, -0.5 * m.normalizer.residual_scale[1], atol=0)


def test_fee_passthrough_bit_for_bit():
    # theta head forced to a ground truth, residual forced to zero:
    # the predicted force must equal the plain-array force exactly.
    m = make_model()
    for name in m.store.names():
        m.store[name].data[:] = 0.0
    truth = {"phi": RAD(30), "c": 4e3, "delta": RAD(15), "beta": RAD(24),
             "delta_d": 0.01}
    for j, name in enumerate(ESTIMATED_PARAM_ORDER):
        m.store["head.b"].data[j] = normalize.normalize_param(name, truth[name])

    b = 3
    known = known_batch(b, d=0.22, v_x=0.6)
    obs = np.random.default_rng(1).normal(0, 1, (b, 60, 9))
    out = m.forward(obs, m.normalizer.normalize_known(known))

    # the head round-trips through min-max scaling; compare at the
    # round-tripped theta, which is the value the layer actually consumed
    rt = {name: normalize.denormalize_param(
        name, normalize.normalize_param(name, truth[name]))
        for name in truth}
    i_bx, i_bz = -np.cos(known["rho"]), np.sin(known["rho"])
    fx, fz, _, _ = fee.force_xz_arrays(
        np.full(b, rt["phi"]), np.full(b, rt["c"]), np.full(b, rt["delta"]),
        known["c_a"], known["gamma"], known["rho"], known["alpha"], known["w"],
        known["d"], known["q"], known["v_x"], known["v_z"], i_bx, i_bz,
        np.full(b, rt["beta"]), np.full(b, rt["delta_d"]))
    assert np.array_equal(out["f_hat"][0].data, fx)
    assert np.array_equal(out["f_hat"][1].data, fz)
    assert np.array_equal(out["f_fee"][0].data, fx)
    # round-trip stays within 1e-12 of the original truth
    for name, value in truth.items():
        assert rt[name] == pytest.approx(value, rel=1e-12, abs=1e-15)


def test_clip_invariant_on_wild_heads():
    m = make_model()
    rng = np.random.default_rng(2)
    b = 64
    heads = heads_tensor(rng.uniform(-4, 4, (b, 7)))
    out = m.predict_from_heads(heads, m.normalizer.normalize_known(known_batch(b)))
    for name in ESTIMATED_PARAM_ORDER:
        lo, hi = normalize.limits(name)
        vals = out["post"][name].data
        if lo is not None:
            assert np.all(vals >= lo)
        if hi is not None:
            assert np.all(vals <= hi)


def test_normalization_round_trips():
    norm = Normalizer(obs_mean=np.arange(9.0), obs_std=np.linspace(0.5, 2, 9),
                      force_scale=np.array([3e3, 700.0]))
    rng = np.random.default_rng(3)
    obs = rng.normal(0, 5, (10, 9))
    assert np.allclose(norm.denormalize_obs(norm.normalize_obs(obs)), obs,
                       rtol=1e-12, atol=1e-12)
    f = rng.normal(0, 2e4, (10, 2))
    assert np.allclose(norm.denormalize_force(norm.normalize_force(f)), f,
                       rtol=1e-12, atol=1e-12)
    assert np.allclose(norm.denormalize_residual(norm.normalize_residual(f)), f,
                       rtol=1e-12, atol=1e-12)
    for name in normalize.PARAM_TABLE:
        lo, hi = normalize.norm_range(name)
        vals = rng.uniform(lo, hi, 32)
        back = normalize.denormalize_param(name, normalize.normalize_param(name, vals))
        assert np.allclose(back, vals, rtol=1e-12, atol=1e-15)


def test_degenerate_channel_rejected():
    rows = np.random.default_rng(0).normal(0, 1, (100, 9))
    rows[:, 4] = 7.5
    with pytest.raises(normalize.DegenerateChannelError):
        Normalizer.from_training_data(rows, np.ones((10, 2)))


def test_pinn_forward_shapes_and_types():
    m = make_model()
    obs = np.random.default_rng(4).normal(0, 1, (60, 9))
    kn = m.normalizer.normalize_known(known_batch(1))
    ests, f_fee, f_hat = model.pinn_forward(obs, kn, m)
    assert len(ests) == len(f_fee) == len(f_hat) == 1
    est = ests[0]
    assert est.zeta == est.phi - est.delta
    assert isinstance(f_hat[0], fee.ForceXZ)


# ---------------------------------------------------------------------------
# loss semantics
# ---------------------------------------------------------------------------

def exact_stationary_beta_norm(m, known):
    """Head-scale beta whose through-the-pipeline stationarity term is
    exactly zero (bisect the sign change, then scan neighboring floats)."""
    rho = known["rho"][0]
    alpha = known["alpha"][0]
    i_bx, i_bz = -np.cos(rho), np.sin(rho)
    t = float(np.tanh(-m.config.velocity_rate
                      * (i_bx * known["v_x"][0] + i_bz * known["v_z"][0])))
    phi = normalize.denormalize_param("phi", 0.5)
    delta = normalize.denormalize_param("delta", 0.5)
    delta_eff = t * delta
    lo, hi = normalize.norm_range("beta")
    g_lo, g_hi = normalize.norm_range("dngamma_dbeta")
    target = (0.0 - g_lo) * (1.0 / (g_hi - g_lo))

    def term(bn):
        beta = bn * (hi - lo) + lo
        g = float(fee.dngamma_dbeta_arrays(rho, beta, phi, alpha, delta_eff))
        return abs((g - g_lo) * (1.0 / (g_hi - g_lo)) - target)

    def g_of(bn):
        beta = bn * (hi - lo) + lo
        return float(fee.dngamma_dbeta_arrays(rho, beta, phi, alpha, delta_eff))

    a, b = 0.2, 0.9
    assert g_of(a) < 0 < g_of(b)
    while np.nextafter(a, b) < b:
        mid = 0.5 * (a + b)
        if g_of(mid) < 0:
            a = mid
        else:
            b = mid
    candidates = [a, b]
    for _ in range(8):
        candidates.append(np.nextafter(candidates[-2], 0.0))
        candidates.append(np.nextafter(candidates[-1], 1.0))
    best = min(candidates, key=term)
    assert term(best) == 0.0, "no exactly-stationary float beta found"
    return float(best), float(phi), float(delta)


def perfect_outputs(m, b=3):
    """Head batch whose every loss term is exactly zero, plus its target."""
    known = known_batch(b, d=0.2, v_x=0.0, v_z=-1.05)  # saturated tanh: t = 1
    kn = m.normalizer.normalize_known(known)
    beta_n, _, _ = exact_stationary_beta_norm(m, known)
    heads = heads_tensor(np.tile([0.5, 0.5, 0.5, beta_n, 0.5, 0.0, 0.0], (b, 1)))
    out = m.predict_from_heads(heads, kn)
    target = np.stack([out["f_hat"][0].data, out["f_hat"][1].data], axis=1)
    return heads, out, target


def test_perfect_prediction_loss_exactly_zero():
    m = make_model()
    _, out, target = perfect_outputs(m)
    total, comps = losses.loss_total(out, target, m.normalizer)
    assert float(total.data) == 0.0
    assert all(v == 0.0 for v in comps.values())


def test_limit_violation_term_exact():
    m = make_model()
    b = 1
    known = known_batch(b)
    kn = m.normalizer.normalize_known(known)
    lo_n, hi_n = normalize.normalized_limits("phi")
    eps = 0.25
    heads = heads_tensor([[hi_n + eps, 0.5, 0.5, 0.5, 0.5, 0.0, 0.0]])
    out = m.predict_from_heads(heads, kn)
    terms = losses.limit_losses(out)
    assert float(terms["phi"].data) == eps
    weights = losses.LossWeights()
    weighted = weights.limit_weight("phi") * float(terms["phi"].data)
    assert weighted == weights.limit_weight("phi") * eps
    # lower-side violation as well
    heads2 = heads_tensor([[lo_n - eps, 0.5, 0.5, 0.5, 0.5, 0.0, 0.0]])
    out2 = m.predict_from_heads(heads2, kn)
    assert float(losses.limit_losses(out2)["phi"].data) == eps


def test_beta_limit_weight_is_ten():
    w = losses.LossWeights()
    assert w.limit_weight("beta") == 10.0
    assert w.limit_weight("eta") == 10.0
    assert w.limit_weight("phi") == 1.0
    assert (w.force, w.residual, w.delta_d_mse, w.grad_ngamma) == (
        0.5, 3e-2, 5e-3, 0.2)


def _masked_batch(m):
    """3-sample batch: sample 1 violates the eta limit (huge phi + delta)."""
    b = 3
    known = known_batch(b, d=0.2, v_x=0.0, v_z=-1.05)
    kn = m.normalizer.normalize_known(known)
    rows = np.tile([0.5, 0.5, 0.5, 0.5, 0.5, 0.1, -0.2], (b, 1))
    rows[1, 0] = 2.4   # phi ~ 84 deg
    rows[1, 2] = 2.6   # delta ~ 73 deg -> eta far beyond its upper limit
    heads = heads_tensor(rows)
    out = m.predict_from_heads(heads, kn)
    assert list(out["mask_force"]) == [True, False, True]
    return heads, out, known, kn


def test_masked_sample_excluded_from_force_loss():
    m = make_model()
    heads, out, known, kn = _masked_batch(m)
    weights = losses.LossWeights()
    target = np.stack([out["f_hat"][0].data + np.array([500.0, 9e9, -300.0]),
                       out["f_hat"][1].data + np.array([100.0, -9e9, 50.0])],
                      axis=1)
    term = losses.force_loss(out, target, m.normalizer, weights)
    # hand oracle: mean over the two unmasked samples of |dx|/sx + |dz|/sz
    sx, sz = m.normalizer.force_scale
    want = np.mean([500.0 / sx + 100.0 / sz, 300.0 / sx + 50.0 / sz])
    assert float(term.data) == pytest.approx(want, rel=1e-12)


def test_masked_sample_force_change_is_invisible():
    m = make_model()
    heads, out, known, kn = _masked_batch(m)
    base_target = np.stack([out["f_hat"][0].data, out["f_hat"][1].data], axis=1)
    perturbed = base_target.copy()
    perturbed[1] += np.array([123456.0, -654321.0])

    def run(target):
        heads2, out2, _, _ = _masked_batch(m)
        total, _ = losses.loss_total(out2, target, m.normalizer)
        total.backward()
        return float(total.data), heads2.grad.copy()

    loss_a, grad_a = run(base_target)
    loss_b, grad_b = run(perturbed)
    assert loss_a == loss_b
    assert np.array_equal(grad_a, grad_b)


def test_all_samples_masked_gives_zero_force_term():
    m = make_model()
    b = 2
    known = known_batch(b, d=0.2, v_x=0.0, v_z=-1.05)
    kn = m.normalizer.normalize_known(known)
    rows = np.tile([2.4, 0.5, 2.6, 0.5, 0.5, 0.0, 0.0], (b, 1))
    out = m.predict_from_heads(heads_tensor(rows), kn)
    assert not out["mask_force"].any()
    term = losses.force_loss(out, np.full((b, 2), 1e9), m.normalizer,
                             losses.LossWeights())
    assert float(term.data) == 0.0


def test_residual_loss_masked_by_depth():
    m = make_model()
    b = 2
    known = known_batch(b, d=0.0, v_x=0.5)
    known["d"] = np.array([0.2, -0.1])  # second sample: blade above ground
    kn = m.normalizer.normalize_known(known)
    rows = np.tile([0.5, 0.5, 0.5, 0.5, 0.5, 0.3, -0.4], (b, 1))
    out = m.predict_from_heads(heads_tensor(rows), kn)
    assert list(out["mask_residual"]) == [True, False]
    term = losses.residual_loss(out, losses.LossWeights())
    assert float(term.data) == pytest.approx(0.3 + 0.4, rel=1e-12)


def test_grad_ngamma_flows_only_into_beta_head():
    m = make_model()
    b = 3
    known = known_batch(b)
    kn = m.normalizer.normalize_known(known)
    heads = heads_tensor(np.tile([0.6, 0.4, 0.5, 0.35, 0.5, 0.1, 0.2], (b, 1)))
    out = m.predict_from_heads(heads, kn)
    term = losses.grad_ngamma_loss(out, losses.LossWeights())
    term.backward()
    grad = heads.grad
    beta_col = ESTIMATED_PARAM_ORDER.index("beta")
    assert np.all(grad[:, beta_col] != 0.0)
    other = np.delete(grad, beta_col, axis=1)
    assert np.array_equal(other, np.zeros_like(other))


def test_grad_ngamma_value_matches_plain_arrays():
    m = make_model()
    b = 2
    known = known_batch(b, v_x=0.0, v_z=-1.05)
    kn = m.normalizer.normalize_known(known)
    heads = heads_tensor(np.tile([0.5, 0.5, 0.5, 0.3, 0.5, 0.0, 0.0], (b, 1)))
    out = m.predict_from_heads(heads, kn)
    term = losses.grad_ngamma_loss(out, losses.LossWeights())

    beta = float(out["post"]["beta"].data[0])
    phi = float(out["post"]["phi"].data[0])
    delta = float(out["post"]["delta"].data[0])
    g = float(fee.dngamma_dbeta_arrays(known["rho"][0], beta, phi,
                                       known["alpha"][0], 1.0 * delta))
    lo, hi = normalize.norm_range("dngamma_dbeta")
    want = abs((g - lo) / (hi - lo) - normalize.normalize_param("dngamma_dbeta", 0.0))
    assert float(term.data) == pytest.approx(want, rel=1e-12)


def test_delta_d_loss_quadratic_in_violation():
    m = make_model()
    b = 1
    kn = m.normalizer.normalize_known(known_batch(b))
    for offset in (0.0, 0.125, -0.25):
        heads = heads_tensor([[0.5, 0.5, 0.5, 0.5, 0.5 + offset, 0.0, 0.0]])
        out = m.predict_from_heads(heads, kn)
        assert float(losses.delta_d_loss(out).data) == offset * offset


def test_loss_total_is_weighted_sum():
    m = make_model()
    heads, out, known, kn = _masked_batch(m)
    target = np.stack([out["f_hat"][0].data + 1000.0,
                       out["f_hat"][1].data - 200.0], axis=1)
    weights = losses.LossWeights()
    total, comps = losses.loss_total(out, target, m.normalizer, weights)
    want = (weights.force * comps["force"]
            + weights.residual * comps["residual"]
            + weights.delta_d_mse * comps["delta_d"]
            + weights.grad_ngamma * comps["grad_ngamma"]
            + sum(weights.limit_weight(n) * comps[f"limit_{n}"]
                  for n in losses.LIMIT_REGULARIZED))
    assert float(total.data) == pytest.approx(want, rel=1e-12)
