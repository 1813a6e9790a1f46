"""Channel construction: direct Rayleigh links, LoS reflected links, cascades.

Direct AP-user links are Rayleigh with log-normal shadowing on top of a
log-distance pathloss; the reflected segments (AP-RIS and RIS-user) default
to deterministic LoS rays with per-element geometric phases.  A correlated
Rayleigh mode for the reflected segments is available for ablations.

Every random draw comes from a counter-based substream keyed by
(seed, purpose, indices), so the draw for one link never depends on how many
other links were sampled before it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SystemConfig
from .geometry import Geometry, ap_antenna_positions, ris_correlation_matrix

# substream purpose tags
_TAG_DIRECT = 0
_TAG_AP_RIS = 1
_TAG_RIS_USER = 2
TAG_PHASE_INIT = 3


def link_rng(seed: int, tag: int, *indices: int) -> np.random.Generator:
    """Independent generator for one (purpose, index...) substream."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(tag), *map(int, indices)]))


def pathloss_db(distance_m: float | np.ndarray, exponent: float, ref_db: float) -> np.ndarray:
    """Log-distance pathloss in dB at distance d: ref + 10*exponent*log10(d/1m)."""
    return ref_db + 10.0 * exponent * np.log10(np.asarray(distance_m, dtype=float))


def pathloss_amplitude(distance_m, exponent: float, ref_db: float) -> np.ndarray:
    """Amplitude scaling sqrt(linear pathloss gain)."""
    return 10.0 ** (-pathloss_db(distance_m, exponent, ref_db) / 20.0)


@dataclass(frozen=True)
class PhaseShiftVector:
    """Reflection coefficients of the RIS, v_m = |v_m| e^{j theta_m}.

    A finalized vector has exactly unit modulus per element; during
    optimization moduli may sit slightly inside (or, numerically, a hair
    outside) the unit disc.
    """

    v: np.ndarray      # complex (M,)
    theta: np.ndarray  # real (M,), radians in [0, 2pi)

    @classmethod
    def from_phases(cls, theta: np.ndarray) -> "PhaseShiftVector":
        theta = np.mod(np.asarray(theta, dtype=float), 2.0 * np.pi)
        return cls(v=np.exp(1j * theta), theta=theta)

    @classmethod
    def from_vector(cls, v: np.ndarray) -> "PhaseShiftVector":
        v = np.asarray(v, dtype=complex)
        return cls(v=v, theta=np.mod(np.angle(v), 2.0 * np.pi))

    def is_unit_modulus(self, tol: float = 1e-9) -> bool:
        return bool(np.max(np.abs(np.abs(self.v) - 1.0)) <= tol)


@dataclass(frozen=True)
class ChannelState:
    """All channel tensors of one coherence block, immutable once built.

    cascaded[k] = H @ diag(ris_user[k]) where H stacks the per-AP AP-RIS
    blocks; aggregate[k] stacks the direct links of user k across APs.
    Blocked (n, k) direct links are exactly zero.
    """

    direct: np.ndarray         # (N, K, L) complex
    ap_ris: np.ndarray         # (N, L, M) complex
    ris_user: np.ndarray       # (K, M) complex
    blockage_mask: np.ndarray  # (N, K) bool
    cascaded: np.ndarray       # (K, N*L, M) complex
    aggregate: np.ndarray      # (K, N*L) complex

    @property
    def num_aps(self) -> int:
        return self.direct.shape[0]

    @property
    def num_users(self) -> int:
        return self.direct.shape[1]

    @property
    def antennas_per_ap(self) -> int:
        return self.direct.shape[2]

    @property
    def num_ris_elements(self) -> int:
        return self.ris_user.shape[1]

    def stacked_ap_ris(self) -> np.ndarray:
        """AP-RIS blocks stacked over APs, shape (N*L, M)."""
        n, l, m = self.ap_ris.shape
        return self.ap_ris.reshape(n * l, m)


def cascade(H: np.ndarray, g_k: np.ndarray) -> np.ndarray:
    """Cascaded AP-RIS-user channel H diag(g_k); column m is H[:, m] * g_k[m]."""
    H = np.asarray(H)
    g_k = np.asarray(g_k)
    if H.shape[1] != g_k.shape[0]:
        raise ValueError(f"dimension mismatch: H has {H.shape[1]} columns, g has {g_k.shape[0]}")
    return H * g_k[None, :]


def effective_channel(h_k: np.ndarray, G_k: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Direct-plus-reflected channel h_k + G_k v."""
    h_k = np.asarray(h_k)
    G_k = np.asarray(G_k)
    v = np.asarray(v)
    if G_k.shape != (h_k.shape[0], v.shape[0]):
        raise ValueError(f"dimension mismatch: G is {G_k.shape}, h is {h_k.shape}, v is {v.shape}")
    return h_k + G_k @ v


def sample_direct_channel(seed: int, geometry: Geometry, config: SystemConfig,
                          n: int, k: int) -> np.ndarray:
    """One Rayleigh + log-normal-shadowing draw of the AP n -> user k link.

    h = sqrt(beta) z with z circularly-symmetric standard normal and
    beta(dB) = -(ref + 10 a log10 d) + X, X ~ N(0, shadowing_std^2).
    Deterministic in (seed, n, k).
    """
    d = float(np.linalg.norm(geometry.ap_positions[n] - geometry.user_positions[k]))
    if d <= 0.0:
        raise ValueError(f"AP {n} and user {k} are co-located")
    rng = link_rng(seed, _TAG_DIRECT, n, k)
    shadow_db = rng.normal(0.0, config.shadowing_std_db)
    beta_db = -pathloss_db(d, config.pathloss_exponent_direct, config.pathloss_ref_db) + shadow_db
    beta = 10.0 ** (beta_db / 10.0)
    L = config.antennas_per_ap
    z = (rng.standard_normal(L) + 1j * rng.standard_normal(L)) / np.sqrt(2.0)
    return np.sqrt(beta) * z


def build_los_channels(geometry: Geometry, config: SystemConfig
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic LoS reflected segments from exact element geometry.

    Every entry carries the phase e^{-j 2 pi d / wavelength} of its exact
    propagation distance and the amplitude of the segment pathloss at that
    distance.  Returns (ap_ris (N,L,M), ris_user (K,M)).
    """
    lam = config.wavelength_m
    alpha = config.pathloss_exponent_ris
    ref = config.pathloss_ref_db
    elems = geometry.ris_element_positions

    ap_ris = np.empty((config.num_aps, config.antennas_per_ap, config.num_ris_elements),
                      dtype=complex)
    for n in range(config.num_aps):
        ant = ap_antenna_positions(geometry, config, n)
        d = np.linalg.norm(ant[:, None, :] - elems[None, :, :], axis=-1)
        ap_ris[n] = pathloss_amplitude(d, alpha, ref) * np.exp(-2j * np.pi * d / lam)

    d_user = np.linalg.norm(geometry.user_positions[:, None, :] - elems[None, :, :], axis=-1)
    ris_user = pathloss_amplitude(d_user, alpha, ref) * np.exp(-2j * np.pi * d_user / lam)
    return ap_ris, ris_user


def build_correlated_ris_channels(seed: int, geometry: Geometry, config: SystemConfig
                                  ) -> tuple[np.ndarray, np.ndarray]:
    """Correlated-Rayleigh alternative for the reflected segments (ablation).

    Each AP-antenna row and each user vector is R^{1/2} z scaled by the
    centre-distance pathloss amplitude, with R the grid correlation matrix.
    """
    R = ris_correlation_matrix(geometry, config.wavelength_m)
    evals, evecs = np.linalg.eigh(R)
    root = (evecs * np.sqrt(np.clip(evals, 0.0, None))) @ evecs.conj().T
    alpha = config.pathloss_exponent_ris
    ref = config.pathloss_ref_db
    M = config.num_ris_elements

    ap_ris = np.empty((config.num_aps, config.antennas_per_ap, M), dtype=complex)
    for n in range(config.num_aps):
        d = float(np.linalg.norm(geometry.ap_positions[n] - geometry.ris_center))
        amp = pathloss_amplitude(d, alpha, ref)
        rng = link_rng(seed, _TAG_AP_RIS, n)
        for l in range(config.antennas_per_ap):
            z = (rng.standard_normal(M) + 1j * rng.standard_normal(M)) / np.sqrt(2.0)
            ap_ris[n, l] = amp * (root @ z)

    ris_user = np.empty((config.num_users, M), dtype=complex)
    for k in range(config.num_users):
        d = float(np.linalg.norm(geometry.user_positions[k] - geometry.ris_center))
        amp = pathloss_amplitude(d, alpha, ref)
        rng = link_rng(seed, _TAG_RIS_USER, k)
        z = (rng.standard_normal(M) + 1j * rng.standard_normal(M)) / np.sqrt(2.0)
        ris_user[k] = amp * (root @ z)
    return ap_ris, ris_user


def _assemble(direct: np.ndarray, ap_ris: np.ndarray, ris_user: np.ndarray,
              mask: np.ndarray) -> ChannelState:
    n, k, l = direct.shape
    direct = direct.copy()
    direct[mask] = 0.0
    H = ap_ris.reshape(n * l, -1)
    cascaded = np.stack([cascade(H, ris_user[i]) for i in range(k)])
    aggregate = direct.transpose(1, 0, 2).reshape(k, n * l)
    return ChannelState(direct=direct, ap_ris=ap_ris, ris_user=ris_user,
                        blockage_mask=mask.copy(), cascaded=cascaded, aggregate=aggregate)


def build_channel_state(config: SystemConfig, geometry: Geometry,
                        seed: int | None = None) -> ChannelState:
    """Sample every link of one coherence block."""
    seed = config.rng_seed if seed is None else seed
    N, K, L = config.num_aps, config.num_users, config.antennas_per_ap
    direct = np.empty((N, K, L), dtype=complex)
    for n in range(N):
        for k in range(K):
            direct[n, k] = sample_direct_channel(seed, geometry, config, n, k)
    if config.ris_channel_mode == "correlated":
        ap_ris, ris_user = build_correlated_ris_channels(seed, geometry, config)
    else:
        ap_ris, ris_user = build_los_channels(geometry, config)
    mask = np.zeros((N, K), dtype=bool)
    return _assemble(direct, ap_ris, ris_user, mask)


def with_blocked_user(channels: ChannelState, k: int) -> ChannelState:
    """New state with every direct link of user k removed."""
    mask = channels.blockage_mask.copy()
    mask[:, k] = True
    return _assemble(channels.direct, channels.ap_ris, channels.ris_user, mask)


# ---------------------------------------------------------------------------
# JSON serialization (complex entries as [re, im] pairs)
# ---------------------------------------------------------------------------

def _c2l(arr: np.ndarray) -> list:
    return np.stack([arr.real, arr.imag], axis=-1).tolist()


def _l2c(lst: list) -> np.ndarray:
    a = np.asarray(lst, dtype=float)
    return a[..., 0] + 1j * a[..., 1]


def channel_state_to_dict(state: ChannelState) -> dict:
    """Canonical serialization; cascades and aggregates are recomputed on load."""
    return {
        "schema": "channel-state-v1",
        "num_aps": state.num_aps,
        "num_users": state.num_users,
        "antennas_per_ap": state.antennas_per_ap,
        "num_ris_elements": state.num_ris_elements,
        "direct": _c2l(state.direct),
        "ap_ris": _c2l(state.ap_ris),
        "ris_user": _c2l(state.ris_user),
        "blockage_mask": state.blockage_mask.tolist(),
    }


def channel_state_from_dict(d: dict) -> ChannelState:
    if d.get("schema") != "channel-state-v1":
        raise ValueError(f"unsupported channel-state schema {d.get('schema')!r}")
    return _assemble(
        _l2c(d["direct"]),
        _l2c(d["ap_ris"]),
        _l2c(d["ris_user"]),
        np.asarray(d["blockage_mask"], dtype=bool),
    )
