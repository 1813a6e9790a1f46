"""Link- and network-level performance quantities.

SINRs and Shannon rates per user, the phase-shift gradient of the RIS-only
rate, the rate-demand adaptation gap, the RIS redundancy gap, per-user
priorities derived from direct-channel strength, and the three-component
resilience score.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import ConfigError

LN2 = math.log(2.0)


@dataclass(frozen=True)
class BeamformingMatrix:
    """Per-user transmit beamformers stacked over APs; column k serves user k."""

    w: np.ndarray  # (N*L, K) complex
    num_aps: int

    @property
    def antennas_per_ap(self) -> int:
        return self.w.shape[0] // self.num_aps

    @property
    def num_users(self) -> int:
        return self.w.shape[1]

    def ap_block(self, n: int) -> np.ndarray:
        """Beamformer rows of AP n, shape (L, K)."""
        L = self.antennas_per_ap
        return self.w[n * L:(n + 1) * L, :]

    def per_ap_power(self) -> np.ndarray:
        """Transmit power spent by each AP, shape (N,)."""
        return np.array([np.sum(np.abs(self.ap_block(n)) ** 2) for n in range(self.num_aps)])


@dataclass(frozen=True)
class RateState:
    """Per-user SINRs and rates for effective and RIS-only links."""

    sinr: np.ndarray       # (K,)
    sinr_ris: np.ndarray   # (K,)
    rates: np.ndarray      # bit/s
    rates_ris: np.ndarray  # bit/s
    demands: np.ndarray    # bit/s

    @classmethod
    def from_sinrs(cls, gamma: np.ndarray, gamma_ris: np.ndarray,
                   bandwidth_hz: float, demands: np.ndarray) -> "RateState":
        return cls(sinr=np.asarray(gamma, dtype=float),
                   sinr_ris=np.asarray(gamma_ris, dtype=float),
                   rates=achievable_rate(gamma, bandwidth_hz),
                   rates_ris=achievable_rate(gamma_ris, bandwidth_hz),
                   demands=np.asarray(demands, dtype=float))


@dataclass(frozen=True)
class GradientTerms:
    """Intermediate products of the RIS-rate gradient for one user."""

    a: np.ndarray     # (K,) complex, a_i = v^H G^H w_i
    b: np.ndarray     # (K, M) complex, b_i = (w_i^H G v) G^H w_i
    grad: np.ndarray  # (M,) complex


def sinr(channel: np.ndarray, W, k: int, sigma2: float) -> float:
    """SINR of user k under channel vector ``channel`` and beamformers W.

    |c^H w_k|^2 over interference-plus-noise; pass the effective channel for
    the full-link SINR or the cascade-only channel for the RIS-only SINR.
    W may be a plain (N*L, K) array or a :class:`BeamformingMatrix`.
    """
    if sigma2 <= 0:
        raise ValueError("noise power must be strictly positive")
    W = getattr(W, "w", W)
    gains = np.abs(channel.conj() @ W) ** 2
    signal = gains[k]
    interference = gains.sum() - signal
    return float(signal / (interference + sigma2))


def achievable_rate(gamma: float | np.ndarray, bandwidth_hz: float):
    """Shannon rate B log2(1 + gamma) in bit/s."""
    return bandwidth_hz * np.log2(1.0 + np.asarray(gamma, dtype=float))


def ris_rate_gradient(v: np.ndarray, G_k: np.ndarray, W: np.ndarray,
                      sigma2: float, bandwidth_hz: float, k: int) -> np.ndarray:
    """Gradient of user k's RIS-only rate w.r.t. the phase-shift vector.

    Returns 2B (h_k h_k^H v - gamma * sum_{i != k} h_i h_i^H v)
    / (ln2 (N + D)) with h_i = G_k^H w_i, N = |v^H h_k|^2 and
    D = sum_{i != k} |v^H h_i|^2 + sigma2.  The returned vector g is twice
    the conjugate-coordinate Wirtinger derivative, so the first-order change
    of the rate along a complex perturbation dv is Re{g^H dv}.
    """
    hw = G_k.conj().T @ W           # (M, K), column i = G^H w_i
    proj = hw.conj().T @ v          # (K,), v^H h_i conj'd... see below
    # proj[i] = (G^H w_i)^H v = conj(v^H h_i); |proj| identical
    gains = np.abs(proj) ** 2
    N = gains[k]
    D = gains.sum() - N + sigma2
    gamma = N / D
    lead = hw[:, k] * (hw[:, k].conj() @ v)
    others = np.delete(np.arange(W.shape[1]), k)
    inter = (hw[:, others] * (hw[:, others].conj().T @ v)[None, :]).sum(axis=1)
    return 2.0 * bandwidth_hz * (lead - gamma * inter) / (LN2 * (N + D))


def gradient_terms(v: np.ndarray, G_k: np.ndarray, W: np.ndarray,
                   sigma2: float, bandwidth_hz: float, k: int) -> GradientTerms:
    """Same gradient assembled from the scalar/vector products a and b.

    Independent code path used to cross-check :func:`ris_rate_gradient`:
    a_i = v^H G^H w_i, b_i = (w_i^H G v) G^H w_i, and the gradient is
    2B (b_k - gamma_ris * sum_{i != k} b_i) / (ln2 (sum_i |a_i|^2 + sigma2)).
    """
    K = W.shape[1]
    a = np.array([np.vdot(v, G_k.conj().T @ W[:, i]) for i in range(K)])
    b = np.stack([(W[:, i].conj() @ (G_k @ v)) * (G_k.conj().T @ W[:, i]) for i in range(K)])
    others = [i for i in range(K) if i != k]
    denom_int = sum(abs(a[i]) ** 2 for i in others) + sigma2
    gamma_ris = abs(a[k]) ** 2 / denom_int
    grad = 2.0 * bandwidth_hz * (b[k] - gamma_ris * b[others].sum(axis=0)) \
        / (LN2 * (np.sum(np.abs(a) ** 2) + sigma2))
    return GradientTerms(a=a, b=b, grad=grad)


def adaptation_gap(rates: np.ndarray, demands: np.ndarray) -> float:
    """Network-wide rate-demand gap sum_k |r_k / r_k_des - 1|."""
    rates = np.asarray(rates, dtype=float)
    demands = np.asarray(demands, dtype=float)
    if np.any(demands <= 0):
        raise ValueError("demands must be strictly positive")
    return float(np.abs(rates / demands - 1.0).sum())


def redundancy_gap(rate: float, rate_ris: float) -> float:
    """Squared distance |r - r_ris|^2 between total and RIS-only rate, (bit/s)^2."""
    return float(abs(rate - rate_ris) ** 2)


def user_weights(channels) -> np.ndarray:
    """Per-user priorities from direct-channel strength, norm ratio in [0, 1].

    Works on the post-blockage aggregate direct channels (blocked entries are
    zero and thus drop out of the norms).  If every direct channel is gone
    the weights fall back to all-ones.
    """
    norms = np.linalg.norm(channels.aggregate, axis=1)
    top = norms.max()
    if top <= 0.0:
        return np.ones_like(norms)
    return norms / top


def resilience_components(rates_t0: np.ndarray, rates_tq: np.ndarray,
                          t0: float, tq: float, recovery_tolerance_s: float,
                          demands: np.ndarray) -> tuple[float, float, float]:
    """Absorption, adaptation and recovery-speed components of one disruption.

    Absorption averages the demand-normalized rates at disruption onset t0,
    adaptation the same at the recovered instant tq; recovery speed is 1 when
    tq - t0 fits the tolerated outage duration and decays like its inverse
    otherwise.
    """
    if tq < t0:
        raise ValueError(f"recovery time {tq} precedes disruption time {t0}")
    demands = np.asarray(demands, dtype=float)
    if demands.size == 0:
        raise ValueError("empty rate trajectory")
    r_abs = float(np.mean(np.asarray(rates_t0, dtype=float) / demands))
    r_ada = float(np.mean(np.asarray(rates_tq, dtype=float) / demands))
    dt = tq - t0
    r_rec = 1.0 if dt <= recovery_tolerance_s else recovery_tolerance_s / dt
    return r_abs, r_ada, r_rec


def resilience_score(components: tuple[float, float, float], lambdas: np.ndarray) -> float:
    """Simplex-weighted combination of the three resilience components."""
    lam = np.asarray(lambdas, dtype=float)
    if lam.shape != (3,) or np.any(lam < 0) or abs(lam.sum() - 1.0) > 1e-9:
        raise ConfigError(f"weights must lie on the probability simplex, got {lam}")
    return float(lam @ np.asarray(components, dtype=float))


@dataclass(frozen=True)
class ResilienceReport:
    """Scored outcome of one disruption, with the timeline that produced it."""

    r_abs: float
    r_ada: float
    r_rec: float
    r: float
    r_abs_raw: float
    r_ada_raw: float
    t0: float
    tq: float
    recovered: bool
    rates_t0: np.ndarray
    rates_tq: np.ndarray

    def to_dict(self) -> dict:
        return {
            "r_abs": self.r_abs, "r_ada": self.r_ada, "r_rec": self.r_rec, "r": self.r,
            "r_abs_raw": self.r_abs_raw, "r_ada_raw": self.r_ada_raw,
            "t0": self.t0, "tq": self.tq, "recovered": self.recovered,
            "rates_t0": list(map(float, self.rates_t0)),
            "rates_tq": list(map(float, self.rates_tq)),
        }


def score_disruption(rates_t0: np.ndarray, rates_tq: np.ndarray, t0: float, tq: float,
                     recovery_tolerance_s: float, demands: np.ndarray,
                     lambdas: np.ndarray, recovered: bool = True) -> ResilienceReport:
    """Build the full report; absorption/adaptation are capped at 1 for scoring."""
    raw_abs, raw_ada, r_rec = resilience_components(
        rates_t0, rates_tq, t0, tq, recovery_tolerance_s, demands)
    r_abs = min(raw_abs, 1.0)
    r_ada = min(raw_ada, 1.0)
    r = resilience_score((r_abs, r_ada, r_rec), lambdas)
    return ResilienceReport(r_abs=r_abs, r_ada=r_ada, r_rec=r_rec, r=r,
                            r_abs_raw=raw_abs, r_ada_raw=raw_ada,
                            t0=t0, tq=tq, recovered=recovered,
                            rates_t0=np.asarray(rates_t0, dtype=float),
                            rates_tq=np.asarray(rates_tq, dtype=float))
