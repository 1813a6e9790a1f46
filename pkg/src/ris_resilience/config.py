"""Configuration dataclasses, unit conversions and validation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np


class ConfigError(ValueError):
    """Raised for structurally invalid configurations."""


def dbm_to_watt(x_dbm: float) -> float:
    return 10.0 ** ((x_dbm - 30.0) / 10.0)


def watt_to_dbm(x_w: float) -> float:
    return 10.0 * math.log10(x_w) + 30.0


def is_perfect_square(m: int) -> bool:
    r = math.isqrt(m)
    return r * r == m


@dataclass(frozen=True)
class SystemConfig:
    """Radio, geometry and timing parameters of one deployment.

    Powers are configured in dBm and converted to watts once, here; every
    downstream computation works in linear SI units (W, Hz, bit/s, m, s).
    """

    num_aps: int = 2
    antennas_per_ap: int = 4
    num_users: int = 4
    num_ris_elements: int = 100          # must be a perfect square (planar grid)
    bandwidth_hz: float = 10e6
    noise_power_dbm: float = -100.0
    max_tx_power_dbm: float = 32.0       # per AP
    wavelength_m: float = 0.1
    coherence_time_s: float = 0.2
    desired_recovery_time_s: float = 0.15
    per_subproblem_time_s: float = 0.01  # budgeted compute time per sub-iteration
    qos_rate_bps: tuple[float, ...] | float = 6e6   # scalar or one entry per user
    area_half_width_m: float = 500.0
    user_circle_radius_m: float = 250.0
    shadowing_std_db: float = 8.0
    pathloss_exponent_direct: float = 3.5
    pathloss_exponent_ris: float = 2.2
    pathloss_ref_db: float = 30.0
    ap_height_m: float = 10.0
    ris_height_m: float = 5.0
    user_height_m: float = 1.5
    ris_channel_mode: str = "los"        # "los" | "correlated"
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("num_aps", "antennas_per_ap", "num_users", "num_ris_elements"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not is_perfect_square(self.num_ris_elements):
            raise ConfigError(
                f"num_ris_elements must be a perfect square for the planar grid, "
                f"got {self.num_ris_elements}"
            )
        for name in ("bandwidth_hz", "wavelength_m", "coherence_time_s",
                     "desired_recovery_time_s", "per_subproblem_time_s",
                     "area_half_width_m", "user_circle_radius_m"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be strictly positive")
        if self.ris_channel_mode not in ("los", "correlated"):
            raise ConfigError(f"unknown ris_channel_mode {self.ris_channel_mode!r}")
        if np.any(self.qos_rates <= 0):
            raise ConfigError("qos_rate_bps entries must be strictly positive")

    # -- derived linear-unit quantities ------------------------------------

    @property
    def sigma2_w(self) -> float:
        """Noise power in watts."""
        return dbm_to_watt(self.noise_power_dbm)

    @property
    def p_max_w(self) -> float:
        """Per-AP transmit power budget in watts."""
        return dbm_to_watt(self.max_tx_power_dbm)

    @property
    def qos_rates(self) -> np.ndarray:
        """Per-user rate demands in bit/s, shape (K,)."""
        r = np.asarray(self.qos_rate_bps, dtype=float)
        if r.ndim == 0:
            return np.full(self.num_users, float(r))
        if r.shape != (self.num_users,):
            raise ConfigError(
                f"qos_rate_bps must be scalar or length {self.num_users}, got {r.shape}"
            )
        return r

    @property
    def grid_side(self) -> int:
        return math.isqrt(self.num_ris_elements)

    def replace(self, **kw) -> "SystemConfig":
        d = asdict(self)
        d.update(kw)
        return SystemConfig(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class MetricWeights:
    """Weights of the resilience score and of the optimization objective.

    lambda_* weigh absorption / adaptation / recovery-speed in the scalar
    resilience score and must lie on the probability simplex.  alpha_adapt
    (gradient-norm reward) and alpha_robust (redundancy penalty) are per-user;
    nu_const is the dominating weight on the rate-demand gap and must dwarf
    every alpha.  alpha_v weighs the unit-modulus penalty of the phase stage.
    """

    lambda_abs: float = 1.0 / 3.0
    lambda_ada: float = 1.0 / 3.0
    lambda_rec: float = 1.0 / 3.0
    alpha_adapt: tuple[float, ...] = ()
    alpha_robust: tuple[float, ...] = ()
    nu_const: float = 1e3
    alpha_v: float = 1.0

    def __post_init__(self):
        lam = np.array([self.lambda_abs, self.lambda_ada, self.lambda_rec])
        if np.any(lam < 0) or abs(lam.sum() - 1.0) > 1e-9:
            raise ConfigError(f"lambda weights must be a probability simplex, got {lam}")
        amax = max([0.0, *self.alpha_adapt, *self.alpha_robust])
        if self.nu_const < 100.0 * amax:
            raise ConfigError(
                f"nu_const={self.nu_const} too small to dominate alphas (max {amax})"
            )

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([self.lambda_abs, self.lambda_ada, self.lambda_rec])

    def alphas(self, num_users: int) -> tuple[np.ndarray, np.ndarray]:
        a1 = np.asarray(self.alpha_adapt if self.alpha_adapt else np.zeros(num_users))
        a2 = np.asarray(self.alpha_robust if self.alpha_robust else np.zeros(num_users))
        if a1.shape != (num_users,) or a2.shape != (num_users,):
            raise ConfigError("alpha vectors must have one entry per user")
        return a1, a2

    def with_alphas(self, a1: np.ndarray, a2: np.ndarray) -> "MetricWeights":
        d = asdict(self)
        d["alpha_adapt"] = tuple(float(x) for x in a1)
        d["alpha_robust"] = tuple(float(x) for x in a2)
        return MetricWeights(**d)


@dataclass(frozen=True)
class SolverSettings:
    """Tolerances for the conic solver backend."""

    feas_tol: float = 1e-8
    gap_abs: float = 1e-8
    gap_rel: float = 1e-8
    max_iter: int = 200

    def loosened(self, tol: float = 1e-6) -> "SolverSettings":
        """Faster settings for use inside the alternating loop."""
        return SolverSettings(feas_tol=tol, gap_abs=tol, gap_rel=tol,
                              max_iter=self.max_iter)


# Penalty schedule for the unit-modulus relaxation: the weight starts at
# `initial` and is multiplied by `growth` at every phase-stage iteration,
# saturating at `cap`.
@dataclass(frozen=True)
class PenaltySchedule:
    initial: float = 0.5
    growth: float = 2.0
    cap: float = 32.0

    def at(self, phase_iteration: int) -> float:
        return float(min(self.initial * self.growth ** phase_iteration, self.cap))
