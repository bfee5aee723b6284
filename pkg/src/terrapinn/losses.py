"""Training losses for the estimator.

Five terms: force reconstruction (MAE), residual-force regularization
(MAE), limit-violation penalties (one-sided ReLU per parameter),
residual-depth regularization (MSE), and failure-angle stationarity
(MAE on d n_gamma / d beta, gradient restricted to the beta head).
Every term is computed on normalized values.

Masking: the force MAE averages only over samples whose eta and beta
limit constraints hold (pre-clip) and whose force-layer evaluation was
regular; the residual MAE averages only over samples with positive total
depth of cut; the stationarity term skips singular samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import normalize
from .autodiff import Tensor

# Parameters regularized to stay within their limits; keys are loss names,
# values the parameter-table row supplying ranges and limits.
LIMIT_REGULARIZED = {
    "phi": "phi", "c": "c", "delta": "delta", "beta": "beta",
    "eta": "eta", "zeta": "zeta", "delta_d": "delta_d", "d_prime": "d",
}


@dataclass
class LossWeights:
    force: float = 0.5
    residual: float = 3e-2
    delta_d_mse: float = 5e-3
    grad_ngamma: float = 0.2
    limit_default: float = 1.0
    # eta and beta violations feed singularities in the force layer, so
    # their restoring weight is an order of magnitude higher
    limit_overrides: dict = field(default_factory=lambda: {"eta": 10.0, "beta": 10.0})
    w_xz: tuple[float, float] = (1.0, 1.0)
    w_grad: float = 1.0

    def limit_weight(self, name: str) -> float:
        return self.limit_overrides.get(name, self.limit_default)


def masked_mean(values: Tensor, mask: np.ndarray) -> Tensor:
    """Mean of values over mask; exactly zero when every sample is masked."""
    mask = np.asarray(mask, dtype=bool)
    count = int(mask.sum())
    if count == 0:
        return ad.constant(0.0)
    return ad.mul(ad.tensor_sum(ad.mul(values, mask.astype(float))), 1.0 / count)


def _abs_weighted_xz(x: Tensor, z: Tensor, w_xz) -> Tensor:
    return ad.add(ad.mul(ad.absolute(x), w_xz[0]), ad.mul(ad.absolute(z), w_xz[1]))


def force_loss(outputs: dict, target_f: np.ndarray, normalizer, weights) -> Tensor:
    """Weighted MAE between predicted and measured force, normalized scale."""
    target = np.asarray(target_f, dtype=float)
    inv_x, inv_z = 1.0 / normalizer.force_scale
    # same reciprocal multiply on both sides: a perfect prediction gives an
    # exactly zero error, not a 1-ulp residue
    err_x = ad.sub(ad.mul(outputs["f_hat"][0], inv_x), target[:, 0] * inv_x)
    err_z = ad.sub(ad.mul(outputs["f_hat"][1], inv_z), target[:, 1] * inv_z)
    per_sample = _abs_weighted_xz(err_x, err_z, weights.w_xz)
    return masked_mean(per_sample, outputs["mask_force"])


def residual_loss(outputs: dict, weights) -> Tensor:
    """Weighted MAE of the normalized residual force toward zero."""
    f_r_norm = outputs["f_r_norm"]
    per_sample = _abs_weighted_xz(f_r_norm[:, 0], f_r_norm[:, 1], weights.w_xz)
    return masked_mean(per_sample, outputs["mask_residual"])


def _normalized_chi(outputs: dict, name: str) -> Tensor:
    if name in ("phi", "c", "delta", "beta", "delta_d"):
        return outputs["heads_norm"][name]
    lo, hi = normalize.norm_range(LIMIT_REGULARIZED[name])
    source = {"eta": "eta_pre", "zeta": "zeta_pre", "d_prime": "d_prime_pre"}[name]
    return ad.mul(ad.sub(outputs[source], lo), 1.0 / (hi - lo))


def limit_losses(outputs: dict) -> dict[str, Tensor]:
    """Per-parameter one-sided violation penalties on the normalized scale,
    averaged over the batch (unweighted; weighting happens in loss_total)."""
    out = {}
    for name, row in LIMIT_REGULARIZED.items():
        chi = _normalized_chi(outputs, name)
        lo_n, hi_n = normalize.normalized_limits(row)
        terms = []
        if lo_n is not None:
            terms.append(ad.relu(ad.sub(lo_n, chi)))
        if hi_n is not None:
            terms.append(ad.relu(ad.sub(chi, hi_n)))
        total = terms[0] if len(terms) == 1 else ad.add(terms[0], terms[1])
        out[name] = ad.mean(total)
    return out


def delta_d_loss(outputs: dict) -> Tensor:
    """MSE of the normalized residual depth toward a zero-depth target."""
    target = float(normalize.normalize_param("delta_d", 0.0))
    err = ad.sub(outputs["heads_norm"]["delta_d"], target)
    return ad.mean(ad.mul(err, err))


def grad_ngamma_loss(outputs: dict, weights) -> Tensor:
    """MAE of the normalized wedge-coefficient slope toward zero.

    The model wires this tensor so gradients reach only the beta head;
    singular samples are masked out entirely.
    """
    lo, hi = normalize.norm_range("dngamma_dbeta")
    target = float(normalize.normalize_param("dngamma_dbeta", 0.0))
    g_norm = ad.mul(ad.sub(outputs["g_ngamma"], lo), 1.0 / (hi - lo))
    per_sample = ad.mul(ad.absolute(ad.sub(g_norm, target)), weights.w_grad)
    return masked_mean(per_sample, outputs["fee_valid"])


def loss_total(outputs: dict, target_f: np.ndarray, normalizer,
               weights: LossWeights | None = None) -> tuple[Tensor, dict[str, float]]:
    """Weighted sum of all terms; also returns per-term values for logging."""
    weights = weights or LossWeights()
    terms: dict[str, Tensor] = {
        "force": force_loss(outputs, target_f, normalizer, weights),
        "residual": residual_loss(outputs, weights),
        "delta_d": delta_d_loss(outputs),
        "grad_ngamma": grad_ngamma_loss(outputs, weights),
    }
    lambdas = {
        "force": weights.force,
        "residual": weights.residual,
        "delta_d": weights.delta_d_mse,
        "grad_ngamma": weights.grad_ngamma,
    }
    for name, term in limit_losses(outputs).items():
        terms[f"limit_{name}"] = term
        lambdas[f"limit_{name}"] = weights.limit_weight(name)

    total = None
    for name, term in terms.items():
        weighted = ad.mul(term, lambdas[name])
        total = weighted if total is None else ad.add(total, weighted)
    components = {name: float(term.data) for name, term in terms.items()}
    components["total"] = float(total.data)
    return total, components
