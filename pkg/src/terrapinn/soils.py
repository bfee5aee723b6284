"""Soil-type presets driven by relative density.

Four default soil types with material properties interpolated linearly
in relative density I_d over [0, 100]: friction angle and cohesion rise
with density (stronger particle interlocking), unit weight rises with
compaction.  Sand and gravel are cohesionless.  Endpoints are artifact
defaults chosen inside the estimator's normalization ranges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

SOIL_TYPES = ("Clay", "Loam", "Sand", "Gravel")

# per-type property endpoints at I_d = 0 and I_d = 100
_ENDPOINTS: dict[str, dict[str, tuple[float, float]]] = {
    "Clay":   {"phi_deg": (17.0, 25.0), "c": (3e3, 10e3), "gamma": (14e3, 19e3)},
    "Loam":   {"phi_deg": (20.0, 32.0), "c": (2e3, 8e3),  "gamma": (14e3, 18e3)},
    "Sand":   {"phi_deg": (28.0, 42.0), "c": (0.0, 0.0),  "gamma": (14e3, 19e3)},
    "Gravel": {"phi_deg": (32.0, 45.0), "c": (0.0, 0.0),  "gamma": (16e3, 21e3)},
}


def soil_props_from_density(soil_type: str, i_d: float) -> tuple[float, float, float]:
    """(phi [rad], c [Pa], gamma [N/m^3]) for a soil type at relative
    density i_d in [0, 100]."""
    if soil_type not in _ENDPOINTS:
        raise ValueError(f"unknown soil type {soil_type!r}; "
                         f"expected one of {SOIL_TYPES}")
    if not 0.0 <= i_d <= 100.0:
        raise ValueError(f"relative density must be in [0, 100], got {i_d}")
    frac = i_d / 100.0
    ends = _ENDPOINTS[soil_type]

    def lerp(lo, hi):
        return lo + frac * (hi - lo)

    phi = math.radians(lerp(*ends["phi_deg"]))
    c = lerp(*ends["c"])
    gamma = lerp(*ends["gamma"])
    return phi, c, gamma


@dataclass(frozen=True)
class SoilConfig:
    """One episode's soil: a type plus its relative density."""

    soil_type: str
    i_d: float

    def __post_init__(self):
        soil_props_from_density(self.soil_type, self.i_d)  # validates

    @property
    def properties(self) -> tuple[float, float, float]:
        return soil_props_from_density(self.soil_type, self.i_d)
