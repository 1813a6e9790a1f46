"""Convex restrictions of the two alternating design subproblems.

Both stages minimize

    nu * sum_k |r_k/r_k_des - 1|  -  sum_k alpha1_k u_k  +  sum_k alpha2_k |r_k - r_k_ris|^2

over either the beamformers (phases fixed) or the phase shifts (beamformers
fixed), subject to per-AP power, rate/SINR coupling and a lower bound u_k on
the norm of the phase-gradient of the RIS-only rate.  The nonconvex SINR and
gradient-norm constraints are replaced by first-order restrictions around the
current iterate; everything lands in a :class:`~ris_resilience.conic.ConicProgram`
with nonnegative, second-order and exponential cones only.

Internally all rows live in a normalized space: channels are divided by the
noise standard deviation and rates / gradient-norm slacks by the bandwidth,
so every coefficient is O(1).  In raw SI units the same rows would mix 1e-13
channel gains with 1e7 bit/s rates and no interior-point method would be
happy.  The public expansion-point type (:class:`IterateState`) stays in
bit/s and watts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channels import ChannelState, PhaseShiftVector
from .config import MetricWeights, SystemConfig
from .conic import ConicProgram, ProgramBuilder
from .metrics import LN2, BeamformingMatrix

# strict-positivity floors for the expansion slacks (normalized space)
Q_FLOOR = 1e-9
U_FLOOR_BPS = 1e-6          # raw bit/s, per the gradient-norm slack contract
ETA_DEGENERATE = 1e-12      # on the normalized linearization direction
MU_DEGENERATE = 1e-6        # u/B below this makes the row hopelessly steep


@dataclass
class IterateState:
    """Expansion point of one alternating iteration (public SI units)."""

    w: BeamformingMatrix
    v: PhaseShiftVector
    rates: np.ndarray      # (K,) bit/s
    rates_ris: np.ndarray  # (K,) bit/s
    q: np.ndarray          # (K,) effective-link SINR slacks, dimensionless
    q_ris: np.ndarray      # (K,) RIS-only SINR slacks
    u: np.ndarray          # (K,) gradient-norm slacks, bit/s
    stage: str = "w"       # which subproblem runs next

    def check(self) -> None:
        if np.any(self.q < 0) or np.any(self.q_ris < 0):
            raise ValueError("SINR slacks must be nonnegative")
        if np.any(self.u <= 0):
            raise ValueError("gradient-norm slacks must be strictly positive")
        if np.any(self.rates < 0) or np.any(self.rates_ris < 0):
            raise ValueError("rates must be nonnegative")


@dataclass
class TaylorRow:
    """sum_i |z_i(x)|^2 + Re{lin^H x} + slack terms + const <= 0.

    x is the stage's complex variable (stacked beamformers, or the phase
    vector); z_i(x) = quad_vecs[i]^H x + quad_consts[i].  Slack terms refer
    to scalar variables by symbolic key, resolved at emission time.
    Evaluated at its expansion point the row equals the exact nonlinear
    constraint it restricts.
    """

    quad_vecs: np.ndarray     # (nq, Dx) complex
    quad_consts: np.ndarray   # (nq,) complex
    lin: np.ndarray           # (Dx,) complex
    slack_keys: list[tuple[str, int]]
    slack_coef: np.ndarray
    const: float
    name: str = ""
    # positive factor applied when the row is emitted into a program; rows
    # expanded around tiny slacks carry huge raw coefficients and are
    # rescaled into O(1) territory, which changes nothing geometrically
    scale: float = 1.0

    def value(self, x: np.ndarray, slacks: dict[tuple[str, int], float]) -> float:
        z = self.quad_vecs.conj() @ x + self.quad_consts if self.quad_vecs.size else np.zeros(0)
        quad = float(np.sum(np.abs(z) ** 2))
        lin = float(np.real(np.vdot(self.lin, x)))
        sl = float(sum(c * slacks[k] for k, c in zip(self.slack_keys, self.slack_coef)))
        return quad + lin + sl + self.const


# ---------------------------------------------------------------------------
# Normalized stage data
# ---------------------------------------------------------------------------

def _noise_std(config: SystemConfig) -> float:
    return math.sqrt(config.sigma2_w)


def scaled_iterate(state: IterateState, config: SystemConfig):
    """(W, v, rho, rho_ris, q, q_ris, mu) with rates and u divided by B."""
    B = config.bandwidth_hz
    q = np.maximum(state.q, Q_FLOOR)
    q_ris = np.maximum(state.q_ris, Q_FLOOR)
    mu = np.maximum(state.u, U_FLOOR_BPS) / B
    return (state.w.w, state.v.v, state.rates / B, state.rates_ris / B, q, q_ris, mu)


def beamforming_stage_channels(channels: ChannelState, v: np.ndarray,
                               config: SystemConfig):
    """Noise-normalized per-user channels for the beamforming stage.

    Returns (c_eff (K, NL), c_ris (K, NL), G_scaled (K, NL, M)).
    """
    sigma = _noise_std(config)
    c_ris = np.einsum("knm,m->kn", channels.cascaded, v) / sigma
    c_eff = channels.aggregate / sigma + c_ris
    return c_eff, c_ris, channels.cascaded / sigma


def phase_stage_scalars(channels: ChannelState, W: np.ndarray, config: SystemConfig):
    """Noise-normalized scalarizations for the phase stage.

    h_const[k, i] = w_i^H h_k / sigma, g_row[k, i] = w_i^H G_k / sigma and
    hw[k, i] = G_k^H w_i / sigma, so the effective-link product
    (h_k^eff)^H w_i has squared modulus |h_const[k,i] + g_row[k,i] @ v|^2.
    """
    sigma = _noise_std(config)
    h_const = (channels.aggregate.conj() @ W).conj() / sigma       # (K, K): w_i^H h_k
    g_row = np.einsum("j i, k j m -> k i m", W.conj(), channels.cascaded) / sigma
    hw = np.einsum("k j m, j i -> k i m", channels.cascaded.conj(), W) / sigma
    return h_const, g_row, hw


# ---------------------------------------------------------------------------
# Row builders (beamforming stage): x = stacked w, complex dim K*NL
# ---------------------------------------------------------------------------

def sinr_restriction_w(c: np.ndarray, W_tilde: np.ndarray, k: int, q_tilde: float,
                       slack: tuple[str, int], name: str = "") -> TaylorRow:
    """Convex restriction of q_k <= SINR_k(w) for a fixed channel c.

    The exact constraint, rewritten as interference + 1 - |c^H w_k|^2 / q <= 0,
    is restricted by expanding the fraction to first order around
    (w_tilde, q_tilde); the interference quadratic is kept exact.
    """
    if q_tilde <= 0:
        raise ValueError("expansion SINR slack must be strictly positive")
    NL, K = W_tilde.shape
    D = K * NL
    others = [i for i in range(K) if i != k]
    quad = np.zeros((len(others), D), dtype=complex)
    for j, i in enumerate(others):
        quad[j, i * NL:(i + 1) * NL] = c          # z_j = c^H w_i
    sig = complex(np.vdot(c, W_tilde[:, k]))       # c^H w_tilde_k
    n_tilde = abs(sig) ** 2
    lin = np.zeros(D, dtype=complex)
    lin[k * NL:(k + 1) * NL] = -(2.0 / q_tilde) * c * sig
    return TaylorRow(
        quad_vecs=quad, quad_consts=np.zeros(len(others), dtype=complex),
        lin=lin, slack_keys=[slack], slack_coef=np.array([n_tilde / q_tilde ** 2]),
        const=1.0, name=name, scale=min(q_tilde, 1.0),
    )


def gradient_norm_restriction_w(G_scaled: np.ndarray, v: np.ndarray,
                                W_tilde: np.ndarray, k: int, q_ris_tilde: float,
                                mu_tilde: float, name: str = "") -> TaylorRow | None:
    """Restriction of the gradient-norm bound for user k, beamforming stage.

    Encodes (in normalized units, after dividing by ln 2)

        sum_i |a_i(w)|^2 + 1 - T_k(w, q_ris, u) / ln2 <= 0,

    with a_i(w) = v^H G^H w_i and T_k the first-order expansion of
    2 ||b_k - q_ris sum_{i!=k} b_i|| / u around the current point, where
    b_i = (w_i^H G v)(G^H w_i).  Returns None when the expansion point is
    degenerate (vanishing eta, or a slack so small the fraction's slope
    dwarfs every other coefficient); the caller then pins u_k instead.
    """
    if mu_tilde <= 0:
        raise ValueError("gradient-norm slack must be strictly positive")
    if mu_tilde < MU_DEGENERATE:
        return None
    NL, K = W_tilde.shape
    D = K * NL
    Gv = G_scaled @ v                               # (NL,)
    hw = G_scaled.conj().T @ W_tilde                # (M, K), col i = G^H w_i
    a = hw.conj().T @ v                             # a_i = (G^H w_i)^H v = conj(v^H G^H w_i)
    a = a.conj()                                    # a_i = v^H G^H w_i
    b = hw * a.conj()[None, :]                      # b_i = conj(a_i) * hw_i  (M, K)
    others = [i for i in range(K) if i != k]
    b_others = b[:, others].sum(axis=1)
    eta = b[:, k] - q_ris_tilde * b_others
    eta_norm = float(np.linalg.norm(eta))
    if eta_norm < ETA_DEGENERATE:
        return None

    beta = 2.0 / mu_tilde
    # T = beta*|eta| - (beta/mu)*|eta|*(u - mu) + (beta/|eta|) * [ dq + dw ]
    t_const = beta * eta_norm
    coef_u = -(beta / mu_tilde) * eta_norm
    t_const += -coef_u * mu_tilde
    dq = -float(np.real(np.vdot(eta, b_others)))    # d|eta|/dq_ris * |eta|
    coef_q = (beta / eta_norm) * dq
    t_const += -coef_q * q_ris_tilde

    # first-order dependence on each w_i through b_i = (w_i^H G v)(G^H w_i):
    # Re{p_i^H dw_i} with p_i = zeta_i * (G v) + a_i * (G eta),
    # zeta_i = eta^H (G^H w_i); the i != k blocks carry -q_ris_tilde.
    Geta = G_scaled @ eta
    zeta = eta.conj() @ hw                          # (K,)
    lin_T = np.zeros(D, dtype=complex)
    for i in range(K):
        p = zeta[i] * Gv + a[i] * Geta
        scale = 1.0 if i == k else -q_ris_tilde
        lin_T[i * NL:(i + 1) * NL] = (beta / eta_norm) * scale * p
        t_const -= (beta / eta_norm) * scale * float(np.real(np.vdot(p, W_tilde[:, i])))

    quad = np.zeros((K, D), dtype=complex)
    for i in range(K):
        quad[i, i * NL:(i + 1) * NL] = Gv           # z_i = (G v)^H w_i = v^H G^H w_i
    return TaylorRow(
        quad_vecs=quad, quad_consts=np.zeros(K, dtype=complex),
        lin=-lin_T / LN2,
        slack_keys=[("q_ris", k), ("u", k)],
        slack_coef=np.array([-coef_q / LN2, -coef_u / LN2]),
        const=1.0 - t_const / LN2, name=name, scale=min(mu_tilde, 1.0),
    )


# ---------------------------------------------------------------------------
# Row builders (phase stage): x = v, complex dim M
# ---------------------------------------------------------------------------

def sinr_restriction_v(h_const: np.ndarray, g_row: np.ndarray, k: int,
                       v_tilde: np.ndarray, q_tilde: float,
                       slack: tuple[str, int], name: str = "") -> TaylorRow:
    """Phase-stage analogue of :func:`sinr_restriction_w`.

    The per-link products are affine scalars c_i(v) = h_const[i] + g_row[i] v
    (h_const = 0 recovers the RIS-only link); interference stays quadratic and
    the signal fraction |c_k(v)|^2 / q is expanded around (v_tilde, q_tilde).
    """
    if q_tilde <= 0:
        raise ValueError("expansion SINR slack must be strictly positive")
    K, M = g_row.shape
    others = [i for i in range(K) if i != k]
    quad = g_row[others].conj()
    quad_consts = h_const[others].astype(complex)
    c_tilde = complex(h_const[k] + g_row[k] @ v_tilde)
    n_tilde = abs(c_tilde) ** 2
    lin = -(2.0 / q_tilde) * g_row[k].conj() * c_tilde
    const = 1.0 - (2.0 / q_tilde) * float(np.real(np.conj(c_tilde) * h_const[k]))
    return TaylorRow(
        quad_vecs=quad, quad_consts=quad_consts, lin=lin,
        slack_keys=[slack], slack_coef=np.array([n_tilde / q_tilde ** 2]),
        const=const, name=name, scale=min(q_tilde, 1.0),
    )


def gradient_norm_restriction_v(hw_k: np.ndarray, v_tilde: np.ndarray, k: int,
                                q_ris_tilde: float, mu_tilde: float,
                                name: str = "") -> TaylorRow | None:
    """Restriction of the gradient-norm bound, phase stage.

    With beamformers fixed, b_i(v) = (hw_i hw_i^H) v is linear in v, so the
    norm argument is m(v, q) = (P_k - q sum_{i!=k} P_i) v with rank-one
    P_i = hw_i hw_i^H; the fraction 2||m||/u is expanded around
    (v_tilde, q_ris_tilde, mu_tilde).
    """
    if mu_tilde <= 0:
        raise ValueError("gradient-norm slack must be strictly positive")
    if mu_tilde < MU_DEGENERATE:
        return None
    M, K = hw_k.shape[1], hw_k.shape[0]
    proj = hw_k.conj() @ v_tilde                   # (K,), hw_i^H v
    b = hw_k * proj[:, None]                       # b_i = hw_i (hw_i^H v)
    others = [i for i in range(K) if i != k]
    b_others = b[others].sum(axis=0)
    eta = b[k] - q_ris_tilde * b_others
    eta_norm = float(np.linalg.norm(eta))
    if eta_norm < ETA_DEGENERATE:
        return None

    beta = 2.0 / mu_tilde
    t_const = beta * eta_norm
    coef_u = -(beta / mu_tilde) * eta_norm
    t_const += -coef_u * mu_tilde
    dq = -float(np.real(np.vdot(eta, b_others)))
    coef_q = (beta / eta_norm) * dq
    t_const += -coef_q * q_ris_tilde

    # m(v) = Mmat v with Mmat = P_k - q~ sum P_i (Hermitian); d||m|| along dv
    # is Re{(Mmat eta)^H dv} / ||eta||.
    etaproj = hw_k.conj() @ eta                    # (K,), hw_i^H eta
    Meta = hw_k[k] * etaproj[k] - q_ris_tilde * (hw_k[others] * etaproj[others, None]).sum(axis=0)
    lin_T = (beta / eta_norm) * Meta
    t_const -= (beta / eta_norm) * float(np.real(np.vdot(Meta, v_tilde)))

    return TaylorRow(
        quad_vecs=hw_k.copy(), quad_consts=np.zeros(K, dtype=complex),
        lin=-lin_T / LN2,
        slack_keys=[("q_ris", k), ("u", k)],
        slack_coef=np.array([-coef_q / LN2, -coef_u / LN2]),
        const=1.0 - t_const / LN2, name=name, scale=min(mu_tilde, 1.0),
    )


def modulus_penalty(v_tilde: np.ndarray, alpha_v: float) -> tuple[np.ndarray, float]:
    """Objective contribution of the unit-modulus penalty.

    Returns (lin, const) with the penalty equal to Re{lin^H v} + const; it is
    the negated first-order lower bound of alpha_v * sum_m |v_m|^2 around
    v_tilde, so minimizing it rewards pushing each modulus toward the unit
    boundary enforced by the accompanying |v_m| <= 1 rows.
    """
    lin = -2.0 * alpha_v * v_tilde.astype(complex)
    const = alpha_v * float(np.sum(np.abs(v_tilde) ** 2))
    return lin, const


# ---------------------------------------------------------------------------
# Exact constraint values (shared by tests and the engine's feasibility sync)
# ---------------------------------------------------------------------------

def exact_sinr_value_w(c: np.ndarray, W: np.ndarray, k: int, q: float) -> float:
    gains = np.abs(c.conj() @ W) ** 2
    return float(gains.sum() - gains[k] + 1.0 - gains[k] / q)


def exact_sinr_value_v(h_const: np.ndarray, g_row: np.ndarray, v: np.ndarray,
                       k: int, q: float) -> float:
    c = h_const + g_row @ v
    gains = np.abs(c) ** 2
    return float(gains.sum() - gains[k] + 1.0 - gains[k] / q)


def exact_gradient_value_w(G_scaled: np.ndarray, v: np.ndarray, W: np.ndarray,
                           k: int, q_ris: float, mu: float) -> float:
    hw = G_scaled.conj().T @ W
    a = (hw.conj().T @ v).conj()
    b = hw * a.conj()[None, :]
    others = [i for i in range(W.shape[1]) if i != k]
    m = b[:, k] - q_ris * b[:, others].sum(axis=1)
    return float(np.sum(np.abs(a) ** 2) + 1.0 - 2.0 * np.linalg.norm(m) / (LN2 * mu))


def exact_gradient_value_v(hw_k: np.ndarray, v: np.ndarray, k: int,
                           q_ris: float, mu: float) -> float:
    proj = hw_k.conj() @ v
    b = hw_k * proj[:, None]
    others = [i for i in range(hw_k.shape[0]) if i != k]
    m = b[k] - q_ris * b[others].sum(axis=0)
    return float(np.sum(np.abs(proj) ** 2) + 1.0 - 2.0 * np.linalg.norm(m) / (LN2 * mu))


def gradient_norm_slack_bound(G_scaled: np.ndarray, v: np.ndarray, W: np.ndarray,
                              k: int, q_ris: float) -> float:
    """Largest normalized u/B satisfying the exact gradient-norm constraint.

    2||b_k - q_ris sum_{i!=k} b_i|| / (ln2 (sum_i |a_i|^2 + 1)) at the given
    SINR slack; when q_ris equals the achieved RIS-only SINR this is exactly
    the norm of the rate gradient divided by the bandwidth.
    """
    hw = G_scaled.conj().T @ W
    a = (hw.conj().T @ v).conj()
    b = hw * a.conj()[None, :]
    others = [i for i in range(W.shape[1]) if i != k]
    m = b[:, k] - q_ris * b[:, others].sum(axis=1)
    return float(2.0 * np.linalg.norm(m) / (LN2 * (np.sum(np.abs(a) ** 2) + 1.0)))


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------

@dataclass
class StageLayout:
    """Variable offsets of one assembled subproblem (real-split complex x)."""

    kind: str          # "w" | "v"
    xdim: int          # complex dimension of the stage variable
    K: int
    num_aps: int
    off_x: int
    off_rho: int
    off_rho_ris: int
    off_q: int
    off_q_ris: int
    off_u: int
    off_psi: int
    off_delta: int
    bandwidth: float
    num_vars: int = 0

    def slack_index(self, key: tuple[str, int]) -> int:
        name, k = key
        base = {"rho": self.off_rho, "rho_ris": self.off_rho_ris, "q": self.off_q,
                "q_ris": self.off_q_ris, "u": self.off_u, "psi": self.off_psi,
                "delta": self.off_delta}[name]
        return base + k

    def complex_x(self, x: np.ndarray) -> np.ndarray:
        d = self.xdim
        return x[self.off_x:self.off_x + d] + 1j * x[self.off_x + d:self.off_x + 2 * d]

    def encode_x(self, xc: np.ndarray, out: np.ndarray) -> None:
        d = self.xdim
        out[self.off_x:self.off_x + d] = xc.real
        out[self.off_x + d:self.off_x + 2 * d] = xc.imag

    def decode(self, x: np.ndarray) -> dict:
        """Solution in SI units."""
        B = self.bandwidth
        K = self.K
        return {
            "x": self.complex_x(x),
            "rates": x[self.off_rho:self.off_rho + K] * B,
            "rates_ris": x[self.off_rho_ris:self.off_rho_ris + K] * B,
            "q": x[self.off_q:self.off_q + K].copy(),
            "q_ris": x[self.off_q_ris:self.off_q_ris + K].copy(),
            "u": x[self.off_u:self.off_u + K] * B,
            "psi": x[self.off_psi:self.off_psi + K].copy(),
            "delta": x[self.off_delta:self.off_delta + K].copy(),
        }


def _re_lin_expr(b: ProgramBuilder, p: np.ndarray, off: int, d: int,
                 extra_idx=(), extra_coef=(), const: float = 0.0):
    """Expression Re{p^H x} + extra + const over real-split x."""
    idx = np.concatenate([np.arange(off, off + d), np.arange(off + d, off + 2 * d),
                          np.asarray(extra_idx, dtype=int)])
    coef = np.concatenate([p.real, p.imag, np.asarray(extra_coef, dtype=float)])
    keep = coef != 0.0
    return b.expr(idx[keep], coef[keep], const)


def _z_exprs(b: ProgramBuilder, p: np.ndarray, c: complex, off: int, d: int):
    """(Re z, Im z) expressions for z = p^H x + c; Re{(jp)^H x} = Im{p^H x}."""
    re = _re_lin_expr(b, p, off, d, const=c.real)
    im = _re_lin_expr(b, 1j * p, off, d, const=c.imag)
    return re, im


def _emit_taylor_row(b: ProgramBuilder, row: TaylorRow, layout: StageLayout) -> None:
    # affine part A = Re{lin^H x} + slack terms + const; row is sum|z|^2 + A <= 0,
    # emitted as the equivalent s*sum|z|^2 + s*A <= 0 for the row's scale s > 0
    s = row.scale
    sidx = [layout.slack_index(k) for k in row.slack_keys]
    if row.quad_vecs.size == 0:
        b.add_constraint("nonneg", [
            _re_lin_expr(b, -s * row.lin, layout.off_x, layout.xdim,
                         extra_idx=sidx, extra_coef=-s * row.slack_coef,
                         const=-s * row.const)
        ], name=row.name)
        return
    # s*sum |z|^2 <= s*R  <=>  ((sR+1)/2, sqrt(s) z..., (sR-1)/2) in SOC
    head = _re_lin_expr(b, -0.5 * s * row.lin, layout.off_x, layout.xdim,
                        extra_idx=sidx, extra_coef=-0.5 * s * row.slack_coef,
                        const=0.5 * (1.0 - s * row.const))
    tail = _re_lin_expr(b, -0.5 * s * row.lin, layout.off_x, layout.xdim,
                        extra_idx=sidx, extra_coef=-0.5 * s * row.slack_coef,
                        const=0.5 * (-1.0 - s * row.const))
    rs = math.sqrt(s)
    zs = []
    for p, c in zip(row.quad_vecs, row.quad_consts):
        zs.extend(_z_exprs(b, rs * p, complex(rs * c), layout.off_x, layout.xdim))
    b.add_constraint("soc", [head, *zs, tail], name=row.name)


def _common_scaffold(b: ProgramBuilder, layout: StageLayout, demands_scaled: np.ndarray,
                     weights: MetricWeights, mu_t: np.ndarray,
                     alpha1: np.ndarray, alpha2: np.ndarray, pinned_u: list[int]):
    """Rate/SINR coupling, slack signs and objective epigraphs shared by both stages."""
    K = layout.K
    # r <= B log2(1+q)  <=>  (rho ln2, 1, 1+q) in Kexp, in bandwidth units
    for k in range(K):
        b.add_constraint("exp", [
            b.expr([layout.off_rho + k], [LN2]),
            b.expr([], [], 1.0),
            b.expr([layout.off_q + k], [1.0], 1.0),
        ], name=f"rate[{k}]")
        b.add_constraint("exp", [
            b.expr([layout.off_rho_ris + k], [LN2]),
            b.expr([], [], 1.0),
            b.expr([layout.off_q_ris + k], [1.0], 1.0),
        ], name=f"rate_ris[{k}]")
    nn = []
    for name in ("rho", "rho_ris", "q", "q_ris", "u"):
        base = layout.slack_index((name, 0))
        nn.extend(b.expr([base + k], [1.0]) for k in range(K))
    b.add_constraint("nonneg", nn, name="nonneg")

    for k in range(K):
        # psi_k >= |rho_k / demand_k - 1|
        b.add_constraint("nonneg", [
            b.expr([layout.off_psi + k, layout.off_rho + k],
                   [1.0, -1.0 / demands_scaled[k]], 1.0),
            b.expr([layout.off_psi + k, layout.off_rho + k],
                   [1.0, 1.0 / demands_scaled[k]], -1.0),
        ], name=f"gap[{k}]")
        b.add_obj(layout.off_psi + k, weights.nu_const)

        if alpha2[k] > 0.0:
            # delta_k >= (rho_k - rho_ris_k)^2
            b.add_constraint("soc", [
                b.expr([layout.off_delta + k], [0.5], 0.5),
                b.expr([layout.off_rho + k, layout.off_rho_ris + k], [1.0, -1.0]),
                b.expr([layout.off_delta + k], [0.5], -0.5),
            ], name=f"redundancy[{k}]")
            b.add_obj(layout.off_delta + k, float(alpha2[k]))
        else:
            b.add_constraint("zero", [b.expr([layout.off_delta + k], [1.0])],
                             name=f"delta_pin[{k}]")

        if k in pinned_u or alpha1[k] <= 0.0:
            b.add_constraint("zero", [b.expr([layout.off_u + k], [1.0], -mu_t[k])],
                             name=f"u_pin[{k}]")
        else:
            b.add_obj(layout.off_u + k, -float(alpha1[k]))


def assemble_beamforming_problem(state: IterateState, channels: ChannelState,
                                 weights: MetricWeights, config: SystemConfig
                                 ) -> tuple[ConicProgram, StageLayout]:
    """Build the beamforming-stage restriction around ``state`` (phases fixed)."""
    state.check()
    K = config.num_users
    NL = config.num_aps * config.antennas_per_ap
    W_t, v_t, rho_t, rho_ris_t, q_t, q_ris_t, mu_t = scaled_iterate(state, config)
    c_eff, c_ris, G_scaled = beamforming_stage_channels(channels, v_t, config)
    alpha1, alpha2 = weights.alphas(K)
    demands_scaled = config.qos_rates / config.bandwidth_hz

    b = ProgramBuilder()
    layout = StageLayout(
        kind="w", xdim=K * NL, K=K, num_aps=config.num_aps,
        off_x=b.add_vars(2 * K * NL, "w"),
        off_rho=b.add_vars(K, "rho"), off_rho_ris=b.add_vars(K, "rho_ris"),
        off_q=b.add_vars(K, "q"), off_q_ris=b.add_vars(K, "q_ris"),
        off_u=b.add_vars(K, "u"), off_psi=b.add_vars(K, "psi"),
        off_delta=b.add_vars(K, "delta"), bandwidth=config.bandwidth_hz,
    )

    grad_rows: dict[int, TaylorRow] = {}
    pinned: list[int] = []
    for k in range(K):
        if alpha1[k] > 0.0:
            row = gradient_norm_restriction_w(G_scaled[k], v_t, W_t, k,
                                              q_ris_t[k], mu_t[k], name=f"grad[{k}]")
            if row is None:
                pinned.append(k)
            else:
                grad_rows[k] = row

    _common_scaffold(b, layout, demands_scaled, weights, mu_t, alpha1, alpha2, pinned)

    # per-AP power: sqrt(P) >= Frobenius norm of that AP's beamformer block
    L = config.antennas_per_ap
    root_p = math.sqrt(config.p_max_w)
    for n in range(config.num_aps):
        exprs = [b.expr([], [], root_p)]
        for k in range(K):
            base = layout.off_x + k * 2 * NL
            rows = np.arange(n * L, (n + 1) * L)
            exprs.extend(b.expr([base + r], [1.0]) for r in rows)            # Re
            exprs.extend(b.expr([base + NL + r], [1.0]) for r in rows)       # Im
        b.add_constraint("soc", exprs, name=f"power[{n}]")

    for k in range(K):
        _emit_taylor_row(b, sinr_restriction_w(c_eff[k], W_t, k, q_t[k],
                                               ("q", k), name=f"sinr_eff[{k}]"), layout)
        _emit_taylor_row(b, sinr_restriction_w(c_ris[k], W_t, k, q_ris_t[k],
                                               ("q_ris", k), name=f"sinr_ris[{k}]"), layout)
    for k, row in grad_rows.items():
        _emit_taylor_row(b, row, layout)

    prog = b.build()
    layout.num_vars = prog.num_vars
    return prog, layout


def assemble_phase_problem(state: IterateState, channels: ChannelState,
                           weights: MetricWeights, config: SystemConfig,
                           penalty_weight: float | None = None
                           ) -> tuple[ConicProgram, StageLayout]:
    """Build the phase-stage restriction around ``state`` (beamformers fixed)."""
    state.check()
    K = config.num_users
    M = config.num_ris_elements
    W_t, v_t, rho_t, rho_ris_t, q_t, q_ris_t, mu_t = scaled_iterate(state, config)
    h_const, g_row, hw = phase_stage_scalars(channels, W_t, config)
    alpha1, alpha2 = weights.alphas(K)
    alpha_v = weights.alpha_v if penalty_weight is None else penalty_weight
    demands_scaled = config.qos_rates / config.bandwidth_hz

    b = ProgramBuilder()
    layout = StageLayout(
        kind="v", xdim=M, K=K, num_aps=config.num_aps,
        off_x=b.add_vars(2 * M, "v"),
        off_rho=b.add_vars(K, "rho"), off_rho_ris=b.add_vars(K, "rho_ris"),
        off_q=b.add_vars(K, "q"), off_q_ris=b.add_vars(K, "q_ris"),
        off_u=b.add_vars(K, "u"), off_psi=b.add_vars(K, "psi"),
        off_delta=b.add_vars(K, "delta"), bandwidth=config.bandwidth_hz,
    )

    grad_rows: dict[int, TaylorRow] = {}
    pinned: list[int] = []
    for k in range(K):
        if alpha1[k] > 0.0:
            row = gradient_norm_restriction_v(hw[k], v_t, k,
                                              q_ris_t[k], mu_t[k], name=f"grad[{k}]")
            if row is None:
                pinned.append(k)
            else:
                grad_rows[k] = row

    _common_scaffold(b, layout, demands_scaled, weights, mu_t, alpha1, alpha2, pinned)

    for k in range(K):
        _emit_taylor_row(b, sinr_restriction_v(h_const[k], g_row[k], k, v_t,
                                               q_t[k], ("q", k), name=f"sinr_eff[{k}]"),
                         layout)
        _emit_taylor_row(b, sinr_restriction_v(np.zeros(K, dtype=complex), g_row[k], k,
                                               v_t, q_ris_t[k], ("q_ris", k),
                                               name=f"sinr_ris[{k}]"), layout)
    for k, row in grad_rows.items():
        _emit_taylor_row(b, row, layout)

    if alpha_v > 0.0:
        lin, const = modulus_penalty(v_t, alpha_v)
        pen = _re_lin_expr(b, lin, layout.off_x, M)
        b.add_obj(pen.idx, pen.coef)
        b.obj_const += const
        for m in range(M):
            b.add_constraint("soc", [
                b.expr([], [], 1.0),
                b.expr([layout.off_x + m], [1.0]),
                b.expr([layout.off_x + M + m], [1.0]),
            ], name=f"modulus[{m}]")

    prog = b.build()
    layout.num_vars = prog.num_vars
    return prog, layout


def encode_state(state: IterateState, layout: StageLayout, config: SystemConfig,
                 demands: np.ndarray) -> np.ndarray:
    """Expansion point as a primal vector of the assembled program.

    Epigraph auxiliaries are set to their tight values, so the program
    objective at the encoded point equals the surrogate objective at the
    expansion point.
    """
    x = np.zeros(layout.num_vars)
    W_t, v_t, rho_t, rho_ris_t, q_t, q_ris_t, mu_t = scaled_iterate(state, config)
    layout.encode_x(W_t.T.reshape(-1) if layout.kind == "w" else v_t, x)
    K = layout.K
    x[layout.off_rho:layout.off_rho + K] = rho_t
    x[layout.off_rho_ris:layout.off_rho_ris + K] = rho_ris_t
    x[layout.off_q:layout.off_q + K] = q_t
    x[layout.off_q_ris:layout.off_q_ris + K] = q_ris_t
    x[layout.off_u:layout.off_u + K] = mu_t
    dem = demands / config.bandwidth_hz
    x[layout.off_psi:layout.off_psi + K] = np.abs(rho_t / dem - 1.0)
    x[layout.off_delta:layout.off_delta + K] = (rho_t - rho_ris_t) ** 2
    return x
