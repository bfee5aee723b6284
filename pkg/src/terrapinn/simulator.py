"""2D bladed-vehicle earthmoving simulator.

Two rigid bodies (chassis, blade) move in the x-z plane over a
heightfield.  Motorized and locked spring-damper constraints drive the
chassis forward velocity, hold its height to a four-point terrain average
(suspension), and position the blade relative to the chassis; constraint
forces are clamped to machine limits.  Soil resists the blade with the
passive-wedge failure force; advancing the blade through engaged soil
shears it, lowering the heightfield and (in default mode) accumulating
the removed mass as surcharge on the blade.

Two physics modes: FEE_PURE exerts only the wedge-model reaction with
surcharge disabled; DEFAULT adds the heuristics of a production soil
engine (surcharge contribution reduced by 10x, failure angle from the
surcharge pile extent, penetration and contact forces, and bounded force
transients on shear events).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import fee
from .soils import SoilConfig

GRAVITY = 9.81


class SimMode(str, enum.Enum):
    FEE_PURE = "fee_pure"
    DEFAULT = "default"


class InstabilityError(RuntimeError):
    """A state left its sanity bounds; the configuration needs retuning."""


@dataclass(frozen=True)
class SimConfig:
    """Tuned constants; angles carry a _deg suffix and convert at use."""

    dt: float = 1.0 / 60.0
    chassis_mass: float = 5000.0
    blade_mass: float = 400.0
    blade_width: float = 3.164
    blade_height: float = 0.660
    blade_offset_x: float = 2.5          # blade edge ahead of chassis center
    suspension_sample_offsets: tuple = (-1.2, -0.4, 0.4, 1.2)

    motor_gain: float = 2e5              # N per m/s of velocity error
    motor_limit: float = 20e3            # N, tractive
    chassis_z_stiffness: float = 2e6
    chassis_z_zeta: float = 1.0
    blade_z_stiffness: float = 1e6
    blade_z_zeta: float = 0.6
    blade_z_limit: float = 30e3          # N, penetrative
    blade_x_stiffness: float = 1e6
    blade_x_zeta: float = 0.6
    blade_x_limit: float = 20e3
    blade_rel_lo: float = -0.3           # m, commanded reach below surface
    blade_rel_hi: float = 1.0            # m, above

    rho_deg: float = 80.0
    alpha_deg: float = 0.0
    c_a: float = 200.0
    delta_deg: float = 10.0
    delta_deg_fee_pure: float = 15.0     # override for observable z forces
    beta_interval_deg: tuple = (11.5, 34.5)

    heightfield_x0: float = -5.0
    heightfield_x1: float = 15.0
    heightfield_dx: float = 0.05

    velocity_filter_window: int = 10

    # anti-stall controller
    controller_k_v: float = 0.004
    controller_c_vx: float = 0.3
    controller_delta_dz_max: float = 0.05

    # default-mode heuristics
    surcharge_factor: float = 0.1
    repose_deg: float = 35.0
    penetration_stiffness: float = 2e4   # N / m^3, static tip support
    penetration_damping: float = 2e4     # N s / m^3
    contact_damping: float = 3e3         # N s / m^3
    shear_quantum_volume: float = 0.05   # m^3 between force transients
    transient_tau: float = 0.04          # s, impulse time constant
    transient_amp_x: float = 5e3         # N
    transient_amp_z: float = 10e3        # N

    # sanity bounds for instability detection
    max_abs_velocity: float = 20.0
    max_abs_z: float = 5.0

    def to_dict(self) -> dict:
        out = {}
        for name, value in self.__dict__.items():
            out[name] = list(value) if isinstance(value, tuple) else value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        kwargs = dict(data)
        for name in ("suspension_sample_offsets", "beta_interval_deg"):
            if name in kwargs:
                kwargs[name] = tuple(kwargs[name])
        return cls(**kwargs)


@dataclass
class VehicleState:
    chassis_x: float = 0.0
    chassis_z: float = 0.0
    chassis_vx: float = 0.0
    chassis_vz: float = 0.0
    blade_x: float = 0.0       # leading edge
    blade_z: float = 0.0       # bottom edge
    blade_vx: float = 0.0
    blade_vz: float = 0.0


@dataclass
class ControllerState:
    """Anti-stall integrator: current depth offset and its targets."""

    v_target: float
    d_target: float
    delta_dz: float = 0.0

    def limits(self, delta_dz_max: float) -> tuple[float, float]:
        return 0.0, self.d_target + delta_dz_max


def anti_stall_update(ctrl: ControllerState, e_vx: float,
                      cfg: SimConfig) -> tuple[ControllerState, float]:
    """One gain-scheduled integral update; returns (state', u_z_r).

    The depth offset integrates the excess of the velocity error over the
    allowed threshold e_vmin = v_target * c_vx, clamped to
    [0, d_target + delta_dz_max]; the relative blade command is the
    remaining depth of cut.
    """
    if ctrl.v_target <= 0.0:
        raise ValueError("anti-stall controller requires a positive velocity target")
    k_dp = cfg.controller_k_v / ctrl.v_target
    e_vmin = ctrl.v_target * cfg.controller_c_vx
    raw = k_dp * (e_vx - e_vmin) + ctrl.delta_dz
    lo, hi = ctrl.limits(cfg.controller_delta_dz_max)
    new = replace(ctrl, delta_dz=min(max(raw, lo), hi))
    u_z_r = -(new.d_target - new.delta_dz)
    return new, u_z_r


class Heightfield:
    """Piecewise-constant terrain heights on a uniform x grid."""

    def __init__(self, x0: float, x1: float, dx: float, initial: float = 0.0):
        self.x0 = x0
        self.dx = dx
        n = int(round((x1 - x0) / dx))
        self.h = np.full(n, float(initial))

    def _index(self, x: float) -> int:
        i = int(math.floor((x - self.x0) / self.dx))
        return min(max(i, 0), len(self.h) - 1)

    def height_at(self, x: float) -> float:
        return float(self.h[self._index(x)])

    def cut_swept(self, x_from: float, x_to: float, z: float) -> float:
        """Level every cell fully swept in (x_from, x_to] down to z.

        A cell is cut when its right edge has been passed by the blade
        edge.  Returns the removed cross-sectional area (m^2).
        """
        if x_to <= x_from:
            return 0.0
        i_from = self._index(x_from)
        i_to = self._index(x_to)
        removed = 0.0
        for i in range(i_from, i_to):
            right_edge = self.x0 + (i + 1) * self.dx
            if right_edge <= x_to and self.h[i] > z:
                removed += (self.h[i] - z) * self.dx
                self.h[i] = z
        return removed

    def total_area_below(self, reference: float = 0.0) -> float:
        """Cross-sectional area removed relative to a flat reference."""
        return float(np.sum(np.maximum(reference - self.h, 0.0)) * self.dx)


@dataclass
class StepResult:
    observation: np.ndarray        # (9,) channels per normalize.OBS_CHANNELS
    force: fee.ForceXZ             # measured chassis-blade constraint force
    theta: dict                    # pseudo-ground-truth parameter snapshot
    sheared_volume: float          # m^3 removed this step


@dataclass
class EpisodeRecord:
    soil: SoilConfig
    mode: SimMode
    v_target: float
    d_target: float
    seed: int
    dt: float
    observations: np.ndarray       # (T, 9)
    forces: np.ndarray             # (T, 2)
    theta: dict[str, np.ndarray]   # per-step ground-truth columns
    removed_mass: float            # kg, total heightfield mass removed
    surcharge_mass: float          # kg, accumulated on the blade

    THETA_COLUMNS = ("phi", "c", "delta", "c_a", "gamma", "rho", "alpha",
                     "w", "d", "q", "v_x", "v_z", "beta")

    @property
    def n_steps(self) -> int:
        return self.observations.shape[0]


class _Transient:
    """Critically damped force impulse a(t/tau)e^(1 - t/tau) per axis."""

    def __init__(self, amp_x: float, amp_z: float, tau: float):
        self.amp = np.array([amp_x, amp_z])
        self.tau = tau
        self.t = 0.0

    def advance(self, dt: float) -> np.ndarray:
        self.t += dt
        scale = (self.t / self.tau) * math.exp(1.0 - self.t / self.tau)
        return self.amp * scale

    @property
    def expired(self) -> bool:
        return self.t > 8.0 * self.tau


class BladedVehicleSim:
    """One deterministic simulation instance; strictly single-threaded."""

    def __init__(self, cfg: SimConfig, soil: SoilConfig, mode: SimMode,
                 seed: int = 0):
        self.cfg = cfg
        self.soil = soil
        self.mode = SimMode(mode)
        self.rng = np.random.default_rng(seed)
        self.terrain = Heightfield(cfg.heightfield_x0, cfg.heightfield_x1,
                                   cfg.heightfield_dx)
        self.state = VehicleState(blade_x=cfg.blade_offset_x, blade_z=0.0)
        self.phi, self.c, self.gamma = soil.properties
        self.delta = math.radians(cfg.delta_deg_fee_pure
                                  if self.mode is SimMode.FEE_PURE
                                  else cfg.delta_deg)
        self.rho = math.radians(cfg.rho_deg)
        self.alpha = math.radians(cfg.alpha_deg)
        self.i_b = fee.blade_up_vector(self.rho)
        self.surcharge = 0.0           # N (weight of accumulated soil)
        self.removed_mass = 0.0        # kg
        self.surcharge_mass = 0.0      # kg
        self._v_buffer: list[tuple[float, float]] = []
        self._transients: list[_Transient] = []
        self._volume_since_event = 0.0
        self._singular_flags = 0
        # constraint damping coefficients from the damping ratios
        self._c_cz = 2.0 * cfg.chassis_z_zeta * math.sqrt(
            cfg.chassis_z_stiffness * cfg.chassis_mass)
        self._c_bz = 2.0 * cfg.blade_z_zeta * math.sqrt(
            cfg.blade_z_stiffness * cfg.blade_mass)
        self._c_bx = 2.0 * cfg.blade_x_zeta * math.sqrt(
            cfg.blade_x_stiffness * cfg.blade_mass)

    # -- helpers ---------------------------------------------------------------

    def filtered_velocity(self) -> tuple[float, float]:
        """Windowed average of (chassis x velocity, blade z velocity)."""
        if not self._v_buffer:
            return 0.0, 0.0
        window = self._v_buffer[-self.cfg.velocity_filter_window:]
        arr = np.asarray(window)
        return float(arr[:, 0].mean()), float(arr[:, 1].mean())

    def depth_of_cut(self) -> float:
        """Signed depth: surface height at the blade edge minus bottom edge."""
        return self.terrain.height_at(self.state.blade_x) - self.state.blade_z

    def _beta(self, d: float, v_filt: tuple[float, float]) -> float:
        lo, hi = (math.radians(b) for b in self.cfg.beta_interval_deg)
        if self.mode is SimMode.FEE_PURE:
            soil = fee.SoilParams(self.phi, self.c, self.delta,
                                  self.cfg.c_a, self.gamma)
            tool = fee.ToolGeometry(self.rho, self.alpha, self.cfg.blade_width)
            cut = fee.CutState(max(d, 0.0), 0.0, v_filt, self.i_b)
            return fee.solve_beta_star(soil, tool, cut, (lo, hi))
        # default mode: wedge top-surface length matches the surcharge
        # pile extent, pile shape set by the repose angle
        if d <= 1e-6:
            return hi
        area = self.surcharge / (self.gamma * self.cfg.blade_width)
        extent = math.sqrt(2.0 * area / math.tan(math.radians(self.cfg.repose_deg)))
        cot_beta = extent / d - 1.0 / math.tan(self.rho)
        beta = math.atan2(1.0, cot_beta)
        return min(max(beta, lo), hi)

    def soil_reaction(self, d: float, v_filt: tuple[float, float]
                      ) -> tuple[fee.ForceXZ, float]:
        """Wedge-model threshold force at the current cut, and the failure
        angle used.  Zero when the blade is not engaged."""
        if d <= 0.0:
            return fee.ForceXZ(0.0, 0.0), self._beta(d, v_filt)
        beta = self._beta(d, v_filt)
        q_eff = (self.surcharge * self.cfg.surcharge_factor
                 if self.mode is SimMode.DEFAULT else 0.0)
        fx, fz, _, _ = fee.force_xz_arrays(
            self.phi, self.c, self.delta, self.cfg.c_a, self.gamma,
            self.rho, self.alpha, self.cfg.blade_width, d, q_eff,
            v_filt[0], v_filt[1], self.i_b[0], self.i_b[1], beta, 0.0)
        eta = fee.tanh_factor(self.i_b[0], self.i_b[1], *v_filt) * self.delta \
            + self.rho + self.phi + beta
        if min(abs(eta), abs(eta - math.pi)) < fee.EPS_SINGULARITY:
            # unreachable with the artifact's fixed blade geometry; treat
            # the soil as unsheared with no model force this step
            self._singular_flags += 1
            return fee.ForceXZ(0.0, 0.0), beta
        return fee.ForceXZ(float(fx), float(fz)), beta

    # -- stepping ----------------------------------------------------------------

    def step(self, u_x: float, u_z_r: float) -> StepResult:
        """Advance one tick under a velocity command and a relative blade
        position command; returns the observation, the measured
        chassis-blade constraint force, and the ground-truth snapshot."""
        cfg, st = self.cfg, self.state
        dt = cfg.dt

        u_z_r = min(max(u_z_r, cfg.blade_rel_lo), cfg.blade_rel_hi)

        # suspension: terrain average under the chassis commands its height
        z_cmd = float(np.mean([self.terrain.height_at(st.chassis_x + off)
                               for off in cfg.suspension_sample_offsets]))

        # constraint forces (commanded outputs clamped to machine limits)
        f_motor = cfg.motor_gain * (u_x - st.chassis_vx)
        f_motor = min(max(f_motor, -cfg.motor_limit), cfg.motor_limit)

        f_cz = (cfg.chassis_z_stiffness * (z_cmd - st.chassis_z)
                - self._c_cz * st.chassis_vz + cfg.chassis_mass * GRAVITY)

        blade_x_target = st.chassis_x + cfg.blade_offset_x
        f_bx = (cfg.blade_x_stiffness * (blade_x_target - st.blade_x)
                + self._c_bx * (st.chassis_vx - st.blade_vx))
        f_bx = min(max(f_bx, -cfg.blade_x_limit), cfg.blade_x_limit)

        # the depth command references the level-ground surface; the
        # chassis-relative constraint executes it within the machine reach
        rel_target = min(max(u_z_r - st.chassis_z, cfg.blade_rel_lo),
                         cfg.blade_rel_hi)
        u_z_a = st.chassis_z + rel_target   # resolved absolute blade target
        # the penetrative limit budgets the interaction force; static weight
        # support is fed forward outside the clamp
        f_bz_pd = (cfg.blade_z_stiffness * (u_z_a - st.blade_z)
                   + self._c_bz * (st.chassis_vz - st.blade_vz))
        f_bz_pd = min(max(f_bz_pd, -cfg.blade_z_limit), cfg.blade_z_limit)
        f_bz = f_bz_pd + cfg.blade_mass * GRAVITY

        # soil reaction on the blade: the failure threshold opposes the
        # advance while the blade is engaged and moving forward
        d = self.depth_of_cut()
        v_filt = self.filtered_velocity()
        reaction, beta = self.soil_reaction(d, v_filt)
        advance_gate = min(max(st.blade_vx / 0.02, 0.0), 1.0)
        f_soil_x = -reaction.f_x * advance_gate
        f_soil_z = -reaction.f_z * advance_gate

        if self.mode is SimMode.DEFAULT and d > 0.0:
            # penetration resistance: static tip support plus viscous
            # contact damping between the heightfield and the tool
            f_soil_z += cfg.penetration_stiffness * cfg.blade_width * d * d
            f_soil_z -= cfg.penetration_damping * cfg.blade_width * d * st.blade_vz
            f_soil_x -= cfg.contact_damping * cfg.blade_width * d * st.blade_vx

        transient = np.zeros(2)
        if self.mode is SimMode.DEFAULT:
            for tr in self._transients:
                transient += tr.advance(dt)
            self._transients = [tr for tr in self._transients if not tr.expired]

        # semi-implicit integration
        ax_c = (f_motor - f_bx) / cfg.chassis_mass
        az_c = (f_cz - f_bz - cfg.chassis_mass * GRAVITY) / cfg.chassis_mass
        ax_b = (f_bx + f_soil_x + transient[0]) / cfg.blade_mass
        az_b = (f_bz + f_soil_z + transient[1]
                - cfg.blade_mass * GRAVITY) / cfg.blade_mass

        st.chassis_vx += ax_c * dt
        st.chassis_vz += az_c * dt
        st.blade_vx += ax_b * dt
        st.blade_vz += az_b * dt
        prev_edge = st.blade_x
        st.chassis_x += st.chassis_vx * dt
        st.chassis_z += st.chassis_vz * dt
        st.blade_x += st.blade_vx * dt
        st.blade_z += st.blade_vz * dt

        self._check_stability()

        # shear: every cell fully swept by the advancing engaged blade is
        # cut down to the bottom edge
        removed_area = self.terrain.cut_swept(prev_edge, st.blade_x, st.blade_z)
        sheared_volume = removed_area * cfg.blade_width
        if sheared_volume > 0.0:
            mass = sheared_volume * self.gamma / GRAVITY
            self.removed_mass += mass
            if self.mode is SimMode.DEFAULT:
                self.surcharge_mass += mass
                self.surcharge += sheared_volume * self.gamma
                self._volume_since_event += sheared_volume
                if self._volume_since_event >= cfg.shear_quantum_volume:
                    self._volume_since_event -= cfg.shear_quantum_volume
                    self._transients.append(_Transient(
                        self.rng.uniform(0.5, 1.0) * cfg.transient_amp_x
                        * self.rng.choice((-1.0, 1.0)),
                        self.rng.uniform(0.5, 1.0) * cfg.transient_amp_z
                        * self.rng.choice((-1.0, 1.0)),
                        cfg.transient_tau))

        # measurement: chassis-blade constraint force, static weight removed,
        # including the transient disturbance acting at the constraint
        measured = fee.ForceXZ(f_bx + transient[0], f_bz_pd + transient[1])

        self._v_buffer.append((st.chassis_vx, st.blade_vz))

        v_bar = self.filtered_velocity()
        d_now = self.depth_of_cut()
        observation = np.array([
            st.blade_x, st.blade_z, st.chassis_z,
            st.chassis_vx, st.blade_vz, st.chassis_vz,
            u_z_r, u_z_a, u_x,
        ])
        theta = {
            "phi": self.phi, "c": self.c, "delta": self.delta,
            "c_a": self.cfg.c_a, "gamma": self.gamma, "rho": self.rho,
            "alpha": self.alpha, "w": cfg.blade_width, "d": d_now,
            "q": self.surcharge, "v_x": v_bar[0], "v_z": v_bar[1],
            "beta": beta,
        }
        return StepResult(observation, measured, theta, sheared_volume)

    def _check_stability(self) -> None:
        st = self.state
        speeds = (st.chassis_vx, st.chassis_vz, st.blade_vx, st.blade_vz)
        if any(not math.isfinite(v) or abs(v) > self.cfg.max_abs_velocity
               for v in speeds):
            raise InstabilityError(f"velocity out of bounds: {speeds}")
        if abs(st.chassis_z) > self.cfg.max_abs_z or abs(st.blade_z) > self.cfg.max_abs_z:
            raise InstabilityError(
                f"height out of bounds: chassis_z={st.chassis_z}, "
                f"blade_z={st.blade_z}")


def run_episode(soil: SoilConfig, mode: SimMode, v_target: float,
                d_target: float, seed: int, cfg: SimConfig | None = None,
                duration: float = 10.0) -> EpisodeRecord:
    """Drive one data-collection episode with the anti-stall controller."""
    cfg = cfg or SimConfig()
    sim = BladedVehicleSim(cfg, soil, mode, seed=seed)
    ctrl = ControllerState(v_target=v_target, d_target=d_target)
    n_steps = int(round(duration / cfg.dt))

    observations = np.zeros((n_steps, 9))
    forces = np.zeros((n_steps, 2))
    theta_cols = {name: np.zeros(n_steps) for name in EpisodeRecord.THETA_COLUMNS}

    for k in range(n_steps):
        e_vx = ctrl.v_target - sim.state.chassis_vx
        ctrl, u_z_r = anti_stall_update(ctrl, e_vx, cfg)
        result = sim.step(u_x=v_target, u_z_r=u_z_r)
        observations[k] = result.observation
        forces[k] = (result.force.f_x, result.force.f_z)
        for name in EpisodeRecord.THETA_COLUMNS:
            theta_cols[name][k] = result.theta[name]

    return EpisodeRecord(
        soil=soil, mode=SimMode(mode), v_target=v_target, d_target=d_target,
        seed=seed, dt=cfg.dt, observations=observations, forces=forces,
        theta=theta_cols, removed_mass=sim.removed_mass,
        surcharge_mass=sim.surcharge_mass)
