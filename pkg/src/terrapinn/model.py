"""End-to-end parameter estimator.

Observation windows pass through a temporal convolution, a stacked
attention encoder, and an integration network that merges the latent
state with the known model parameters.  A linear head emits the unknown
parameter estimates and a residual force; estimates are clamped to the
physical limits table and pushed through the differentiable force layer,
whose output plus the residual is the predicted interaction force.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from . import fee, fee_layer, normalize, serialize
from .autodiff import Tensor
from .layers import Dense, EncoderStack, TemporalConv
from .normalize import ESTIMATED_PARAM_ORDER, KNOWN_PARAM_ORDER, Normalizer
from .optim import ParamStore

N_KNOWN = len(KNOWN_PARAM_ORDER)
N_ESTIMATED = len(ESTIMATED_PARAM_ORDER)
N_HEAD = N_ESTIMATED + 2  # residual force x, z


@dataclass
class ModelConfig:
    window_length: int = 60
    obs_channels: int = 9
    conv_positions: int = 4
    conv_channels: int = 32
    encoder_blocks: int = 2
    attention_heads: int = 4
    feedforward_width: int = 64
    integration_width: int = 20
    integration_layers: int = 2
    init_seed: int = 0
    velocity_rate: float = fee.VELOCITY_RATE

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return cls(**data)


@dataclass
class EstimatedParams:
    """Post-clip estimates in physical units, plus derived quantities."""

    phi: float
    c: float
    delta: float
    beta: float
    delta_d: float
    f_r: fee.ForceXZ
    d_prime: float
    eta: float
    zeta: float


def _clip_bounds(name: str) -> tuple[float, float]:
    lo, hi = normalize.limits(name)
    return (-math.inf if lo is None else lo, math.inf if hi is None else hi)


class PinnModel:
    """Parameter store plus architecture config for the estimator network."""

    def __init__(self, config: ModelConfig, normalizer: Normalizer):
        self.config = config
        self.normalizer = normalizer
        self.store = ParamStore()
        rng = np.random.default_rng(config.init_seed)

        stride = config.window_length // config.conv_positions
        self.conv = TemporalConv(self.store, "conv", config.obs_channels,
                                 config.conv_channels, stride, stride, rng)
        if self.conv.out_length(config.window_length) != config.conv_positions:
            raise ValueError("window length must be divisible by conv_positions")
        self.encoder = EncoderStack(self.store, "encoder",
                                    config.encoder_blocks, config.conv_channels,
                                    config.attention_heads,
                                    config.feedforward_width, rng)
        flat = config.conv_positions * config.conv_channels
        self.integration: list[Dense] = []
        n_in = flat + N_KNOWN
        for i in range(config.integration_layers):
            self.integration.append(Dense(self.store, f"integration.{i}", n_in,
                                          config.integration_width, rng,
                                          activation="softplus"))
            n_in = config.integration_width
        self.head = Dense(self.store, "head", n_in, N_HEAD, rng,
                          activation="linear")
        # start the parameter heads mid normalization range (valid eta) and
        # the residual at zero; small head weights keep the start there
        self.head.w.data *= 0.01
        self.head.b.data[:N_ESTIMATED] = 0.5

    # -- forward --------------------------------------------------------------

    def forward(self, obs_norm: np.ndarray, known_norm: np.ndarray) -> dict:
        """Batched forward pass on normalized inputs.

        obs_norm: (B, T, 9); known_norm: (B, 9).  Returns a dict of graph
        tensors and data-level masks consumed by the losses and by
        pinn_forward; forces are in newtons.
        """
        obs_norm = np.asarray(obs_norm, dtype=float)
        known_norm = np.asarray(known_norm, dtype=float)
        if obs_norm.ndim != 3 or obs_norm.shape[1:] != (self.config.window_length,
                                                        self.config.obs_channels):
            raise ValueError(f"expected (B, {self.config.window_length}, "
                             f"{self.config.obs_channels}) observations, "
                             f"got {obs_norm.shape}")
        b_size = obs_norm.shape[0]

        x = self.conv.forward(ad.tensor(obs_norm))
        x = self.encoder.forward(x)
        x = ad.reshape(x, (b_size, -1))
        h = ad.concat([x, ad.tensor(known_norm)], axis=1)
        for layer in self.integration:
            h = layer.forward(h)
        out = self.head.forward(h)
        return self.predict_from_heads(out, known_norm)

    def predict_from_heads(self, out: Tensor, known_norm: np.ndarray) -> dict:
        """Clip, force-layer, and derived-quantity stage after the head.

        out: (B, 7) tensor of raw head outputs on the normalized scale.
        Split out so synthetic head outputs can be pushed through the
        physics stage directly.
        """
        # pre-clip heads, normalized scale
        heads_norm = {name: out[:, j] for j, name in enumerate(ESTIMATED_PARAM_ORDER)}
        f_r_norm = out[:, N_ESTIMATED:N_HEAD]

        # physical pre-clip values and hard-clamped estimates
        pre, post = {}, {}
        for name in ESTIMATED_PARAM_ORDER:
            lo, hi = normalize.norm_range(name)
            pre[name] = ad.add(ad.mul(heads_norm[name], hi - lo), lo)
            post[name] = ad.clip(pre[name], *_clip_bounds(name))

        known = self.normalizer.denormalize_known(known_norm)
        kc = {name: ad.constant(known[name]) for name in KNOWN_PARAM_ORDER}
        i_bx = ad.constant(-np.cos(known["rho"]))
        i_bz = ad.constant(np.sin(known["rho"]))

        f_fee_x, f_fee_z, fee_valid, eta_used = fee_layer.force_layer(
            post["phi"], post["c"], post["delta"], kc["c_a"], kc["gamma"],
            kc["rho"], kc["alpha"], kc["w"], kc["d"], kc["q"],
            kc["v_x"], kc["v_z"], i_bx, i_bz, post["beta"], post["delta_d"],
            c1=self.config.velocity_rate)

        res_scale = self.normalizer.residual_scale
        f_r_x = ad.mul(f_r_norm[:, 0], res_scale[0])
        f_r_z = ad.mul(f_r_norm[:, 1], res_scale[1])
        f_hat_x = ad.add(f_fee_x, f_r_x)
        f_hat_z = ad.add(f_fee_z, f_r_z)

        # derived pre-clip quantities for the limit losses
        t = np.tanh(-self.config.velocity_rate
                    * (-np.cos(known["rho"]) * known["v_x"]
                       + np.sin(known["rho"]) * known["v_z"]))
        delta_eff_pre = ad.mul(pre["delta"], t)
        eta_pre = fee_layer.eta_of(pre["phi"], delta_eff_pre,
                                   ad.constant(known["rho"]), pre["beta"])
        zeta_pre = ad.sub(pre["phi"], pre["delta"])
        d_prime_pre = ad.add(pre["delta_d"], known["d"])

        # stationarity term at the clamped estimate; gradient flows only
        # through beta, everything else is severed
        g_ngamma = fee_layer.dngamma_dbeta_layer(
            ad.constant(known["rho"]), post["beta"],
            ad.stop_gradient(post["phi"]), ad.constant(known["alpha"]),
            ad.mul(ad.stop_gradient(post["delta"]), t), fee_valid)

        beta_lims = normalize.limits("beta")
        eta_lims = normalize.limits("eta")
        beta_ok = (pre["beta"].data >= beta_lims[0]) & (pre["beta"].data <= beta_lims[1])
        eta_ok = (eta_pre.data >= eta_lims[0]) & (eta_pre.data <= eta_lims[1])

        return {
            "heads_norm": heads_norm,          # pre-clip, normalized scale
            "pre": pre,                        # pre-clip, physical units
            "post": post,                      # clamped, physical units
            "f_r_norm": f_r_norm,
            "f_r": (f_r_x, f_r_z),
            "f_fee": (f_fee_x, f_fee_z),
            "f_hat": (f_hat_x, f_hat_z),
            "eta_pre": eta_pre,
            "zeta_pre": zeta_pre,
            "d_prime_pre": d_prime_pre,
            "g_ngamma": g_ngamma,
            "fee_valid": fee_valid,
            "eta_used": eta_used,
            "mask_force": beta_ok & eta_ok & fee_valid,
            "mask_residual": (known["d"] + post["delta_d"].data) > 0.0,
            "known": known,
        }

    # -- persistence ------------------------------------------------------------

    def save(self, path, optimizer=None, extra_meta: dict | None = None) -> None:
        arrays = {f"param.{name}": p.data for name, p in self.store.items()}
        if optimizer is not None:
            arrays.update(optimizer.state_arrays())
        meta = {
            "kind": "terrapinn-checkpoint",
            "config": self.config.to_dict(),
            "normalizer": self.normalizer.to_dict(),
        }
        if extra_meta:
            meta.update(extra_meta)
        serialize.save_arrays(path, arrays, meta)

    @classmethod
    def load(cls, path) -> "PinnModel":
        arrays, meta = serialize.load_arrays(path)
        if meta is None or meta.get("kind") != "terrapinn-checkpoint":
            raise ValueError(f"{path} is not an estimator checkpoint")
        if meta.get("format_version", 0) > serialize.FORMAT_VERSION:
            raise ValueError("checkpoint written by a newer format version")
        model = cls(ModelConfig.from_dict(meta["config"]),
                    Normalizer.from_dict(meta["normalizer"]))
        params = {name[len("param."):]: arr for name, arr in arrays.items()
                  if name.startswith("param.")}
        model.store.load_arrays(params)
        return model


def pinn_forward(window_norm: np.ndarray, known_norm: np.ndarray,
                 model: PinnModel) -> tuple[list[EstimatedParams],
                                            list[fee.ForceXZ],
                                            list[fee.ForceXZ]]:
    """Inference wrapper: returns (estimates, fee forces, total forces).

    Inputs must already be normalized (window (B, T, 9) or (T, 9); known
    parameter vectors to match).  Forces are in newtons.
    """
    window_norm = np.asarray(window_norm, dtype=float)
    known_norm = np.asarray(known_norm, dtype=float)
    if window_norm.ndim == 2:
        window_norm = window_norm[None]
    if known_norm.ndim == 1:
        known_norm = known_norm[None]
    out = model.forward(window_norm, known_norm)

    post = {name: out["post"][name].data for name in ESTIMATED_PARAM_ORDER}
    t = np.tanh(-model.config.velocity_rate
                * (-np.cos(out["known"]["rho"]) * out["known"]["v_x"]
                   + np.sin(out["known"]["rho"]) * out["known"]["v_z"]))
    estimates, f_fee, f_hat = [], [], []
    for i in range(window_norm.shape[0]):
        d_prime = float(out["known"]["d"][i] + post["delta_d"][i])
        eta = float(t[i] * post["delta"][i] + out["known"]["rho"][i]
                    + post["phi"][i] + post["beta"][i])
        estimates.append(EstimatedParams(
            phi=float(post["phi"][i]), c=float(post["c"][i]),
            delta=float(post["delta"][i]), beta=float(post["beta"][i]),
            delta_d=float(post["delta_d"][i]),
            f_r=fee.ForceXZ(float(out["f_r"][0].data[i]),
                            float(out["f_r"][1].data[i])),
            d_prime=d_prime, eta=eta,
            zeta=float(post["phi"][i] - post["delta"][i])))
        f_fee.append(fee.ForceXZ(float(out["f_fee"][0].data[i]),
                                 float(out["f_fee"][1].data[i])))
        f_hat.append(fee.ForceXZ(float(out["f_hat"][0].data[i]),
                                 float(out["f_hat"][1].data[i])))
    return estimates, f_fee, f_hat
