"""Normalization of observations, model parameters, and forces.

Parameter scaling is min-max over calibrated ranges; the table below also
carries the hard physical limits used for output clipping and the limit
regularization losses.  Angles are tabulated in degrees (the config
boundary) and converted to radians by the accessors; everything internal
runs in radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# name: (norm_lo, norm_hi, limit_lo, limit_hi); None marks an unbounded side.
# Angle rows are degrees, converted by the accessors below.
PARAM_TABLE: dict[str, tuple[float, float, float | None, float | None]] = {
    "phi":     (17.0, 45.0, 0.0, 90.0),
    "c":       (0.0, 10e3, 0.0, None),
    "delta":   (11.0, 35.0, 0.0, 90.0),
    "c_a":     (0.0, 10e3, 0.0, None),
    "gamma":   (14e3, 22e3, 0.0, None),
    "rho":     (2.0, 178.0, 2.0, 178.0),
    "alpha":   (-10.0, 10.0, -30.0, 30.0),
    "w":       (0.0, 3.164, 0.0, 3.164),
    "d":       (0.0, 0.3, 0.0, 0.660),
    "delta_d": (-5e-2, 5e-2, -5e-2, 5e-2),
    "q":       (0.0, 10e3, 0.0, None),
    "v_x":     (0.0, 1.0, -2.0, 2.0),
    "v_z":     (-1.0, 1.0, -2.0, 2.0),
    "beta":    (11.5, 34.5, 11.5, 34.5),
    "dngamma_dbeta": (-10.0, 10.0, None, None),
    "eta":     (2.0, 178.0, 2.0, 178.0),
    "zeta":    (11.0, 35.0, 0.0, None),
}

ANGLE_PARAMS = frozenset({"phi", "delta", "rho", "alpha", "beta", "eta", "zeta"})

# Known parameters fed to the integration network, read at the final
# window timestep; order matters for the input vector.
KNOWN_PARAM_ORDER = ("c_a", "gamma", "rho", "alpha", "w", "d", "q", "v_x", "v_z")

# Unknown parameters estimated by the network head, in head-output order.
ESTIMATED_PARAM_ORDER = ("phi", "c", "delta", "beta", "delta_d")

# Observation channels, in column order: blade x/z position, chassis z
# position, chassis x velocity, blade z velocity, chassis z velocity,
# commanded blade relative z, commanded blade absolute z, commanded
# chassis x velocity.
OBS_CHANNELS = ("p_x_b", "p_z_b", "p_z_c", "v_x_c", "v_z_b", "v_z_c",
                "u_z_r", "u_z_a", "u_x_c")

MACHINE_LIMIT_X = 20e3  # N, tractive
MACHINE_LIMIT_Z = 30e3  # N, penetrative


def _to_internal(name: str, value: float | None) -> float | None:
    if value is None:
        return None
    return math.radians(value) if name in ANGLE_PARAMS else value


def norm_range(name: str) -> tuple[float, float]:
    """Min-max normalization range in internal units (radians for angles)."""
    lo, hi, _, _ = PARAM_TABLE[name]
    return _to_internal(name, lo), _to_internal(name, hi)


def limits(name: str) -> tuple[float | None, float | None]:
    """Hard limits in internal units; None for an unbounded side."""
    _, _, lo, hi = PARAM_TABLE[name]
    return _to_internal(name, lo), _to_internal(name, hi)


def normalize_param(name: str, value):
    lo, hi = norm_range(name)
    return (value - lo) / (hi - lo)


def denormalize_param(name: str, value):
    lo, hi = norm_range(name)
    return value * (hi - lo) + lo


def normalized_limits(name: str) -> tuple[float | None, float | None]:
    """Hard limits expressed on the normalized scale of the same parameter."""
    lo, hi = limits(name)
    return (None if lo is None else float(normalize_param(name, lo)),
            None if hi is None else float(normalize_param(name, hi)))


class DegenerateChannelError(ValueError):
    """A statistics channel has (near-)zero variance."""


@dataclass
class Normalizer:
    """Dataset-dependent statistics plus the static parameter table.

    Observations are standardized to zero mean / unit variance with
    statistics from the training split only.  Forces scale per axis; the
    residual force scale is pinned at 10% of the force scale.
    """

    obs_mean: np.ndarray       # (9,)
    obs_std: np.ndarray        # (9,)
    force_scale: np.ndarray    # (2,), N

    RESIDUAL_FRACTION = 0.1

    @property
    def residual_scale(self) -> np.ndarray:
        return self.RESIDUAL_FRACTION * self.force_scale

    @classmethod
    def from_training_data(cls, obs_rows: np.ndarray,
                           forces: np.ndarray) -> "Normalizer":
        """obs_rows: (N, 9) stacked observation rows; forces: (M, 2)."""
        obs_rows = np.asarray(obs_rows, dtype=float)
        forces = np.asarray(forces, dtype=float)
        if obs_rows.ndim != 2 or obs_rows.shape[1] != len(OBS_CHANNELS):
            raise ValueError(f"expected (N, {len(OBS_CHANNELS)}) observations")
        mean = obs_rows.mean(axis=0)
        std = obs_rows.std(axis=0)
        bad = np.nonzero(std < 1e-9)[0]
        if bad.size:
            names = [OBS_CHANNELS[i] for i in bad]
            raise DegenerateChannelError(
                f"observation channels with near-zero variance: {names}")
        scale = np.sqrt(np.mean(forces ** 2, axis=0))
        scale = np.maximum(scale, 1e-9)
        return cls(obs_mean=mean, obs_std=std, force_scale=scale)

    # -- observations -------------------------------------------------------

    def normalize_obs(self, obs: np.ndarray) -> np.ndarray:
        return (np.asarray(obs, dtype=float) - self.obs_mean) / self.obs_std

    def denormalize_obs(self, obs: np.ndarray) -> np.ndarray:
        return np.asarray(obs, dtype=float) * self.obs_std + self.obs_mean

    # -- forces ---------------------------------------------------------------

    def normalize_force(self, f: np.ndarray) -> np.ndarray:
        return np.asarray(f, dtype=float) / self.force_scale

    def denormalize_force(self, f: np.ndarray) -> np.ndarray:
        return np.asarray(f, dtype=float) * self.force_scale

    def normalize_residual(self, f: np.ndarray) -> np.ndarray:
        return np.asarray(f, dtype=float) / self.residual_scale

    def denormalize_residual(self, f: np.ndarray) -> np.ndarray:
        return np.asarray(f, dtype=float) * self.residual_scale

    # -- known-parameter vectors ---------------------------------------------

    def normalize_known(self, values: dict[str, np.ndarray]) -> np.ndarray:
        """Stack KNOWN_PARAM_ORDER into a normalized (..., 9) array."""
        cols = [normalize_param(name, np.asarray(values[name], dtype=float))
                for name in KNOWN_PARAM_ORDER]
        return np.stack(cols, axis=-1)

    def denormalize_known(self, array: np.ndarray) -> dict[str, np.ndarray]:
        array = np.asarray(array, dtype=float)
        return {name: denormalize_param(name, array[..., j])
                for j, name in enumerate(KNOWN_PARAM_ORDER)}

    # -- serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "obs_channels": list(OBS_CHANNELS),
            "obs_mean": self.obs_mean.tolist(),
            "obs_std": self.obs_std.tolist(),
            "force_scale": self.force_scale.tolist(),
            "residual_fraction": self.RESIDUAL_FRACTION,
            "param_table_deg": {k: list(v) for k, v in PARAM_TABLE.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Normalizer":
        table = data.get("param_table_deg")
        if table is not None:
            for name, row in table.items():
                if tuple(row) != tuple(PARAM_TABLE[name]):
                    raise ValueError(
                        f"stored parameter table for {name!r} does not match "
                        f"this software version: {row} vs {PARAM_TABLE[name]}")
        return cls(obs_mean=np.asarray(data["obs_mean"], dtype=float),
                   obs_std=np.asarray(data["obs_std"], dtype=float),
                   force_scale=np.asarray(data["force_scale"], dtype=float))
