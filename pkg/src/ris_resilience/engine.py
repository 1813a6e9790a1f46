"""Alternating optimization over one or more coherence blocks.

One sub-iteration solves either the beamforming or the phase-shift
restriction around the current iterate and advances the simulated clock by
the configured per-subproblem compute time; a coherence block fits
floor(T_c / T_calc) of them.  Blockage events land on block boundaries;
recovery is detected from the record stream afterwards.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import channels as ch
from . import metrics, subproblems
from .channels import ChannelState, PhaseShiftVector, link_rng, TAG_PHASE_INIT
from .config import MetricWeights, PenaltySchedule, SolverSettings, SystemConfig
from .conic import solve
from .metrics import BeamformingMatrix
from .subproblems import IterateState


@dataclass(frozen=True)
class BlockageEvent:
    """One outage: every direct link of ``user`` removed at time ``time``."""

    time: float
    user: int
    policy: str = "strongest-next"


@dataclass
class StepRecord:
    z: int
    t: float
    stage: str
    status: str
    psi: float
    objective: float               # surrogate objective at the accepted iterate
    objective_at_expansion: float  # same program evaluated at its expansion point
    rates: np.ndarray              # allocated rates, bit/s
    rates_ris: np.ndarray
    event: bool = False            # first record after a blockage event
    n_blocked: int = 0


@dataclass
class ScenarioTimeline:
    records: list[StepRecord] = field(default_factory=list)
    events: list[BlockageEvent] = field(default_factory=list)

    def after(self, t: float) -> list[StepRecord]:
        return [r for r in self.records if r.t > t]

    def at(self, t: float) -> StepRecord:
        for r in self.records:
            if r.t == t:
                return r
        raise KeyError(f"no record at t={t}")


def project_unit_modulus(v) -> PhaseShiftVector:
    """Radial projection v_m -> e^{j arg v_m}; zero entries map to phase 0.

    Built from the phases, so v == e^{j theta} holds exactly and each
    modulus is 1 up to one ulp.
    """
    vec = v.v if isinstance(v, PhaseShiftVector) else np.asarray(v, dtype=complex)
    theta = np.where(np.abs(vec) > 0, np.angle(vec), 0.0)
    return PhaseShiftVector.from_phases(theta)


def exact_rate_state(w: np.ndarray, v: np.ndarray, channels: ChannelState,
                     config: SystemConfig) -> tuple[np.ndarray, np.ndarray]:
    """Exact effective and RIS-only SINRs achieved by (w, v)."""
    K = config.num_users
    sig2 = config.sigma2_w
    g_eff = np.empty(K)
    g_ris = np.empty(K)
    for k in range(K):
        c_ris = channels.cascaded[k] @ v
        c_eff = channels.aggregate[k] + c_ris
        g_eff[k] = metrics.sinr(c_eff, w, k, sig2)
        g_ris[k] = metrics.sinr(c_ris, w, k, sig2)
    return g_eff, g_ris


def exact_gradient_norms(w: np.ndarray, v: np.ndarray, channels: ChannelState,
                         config: SystemConfig) -> np.ndarray:
    """Per-user norm of the phase gradient of the RIS-only rate, bit/s."""
    K = config.num_users
    out = np.empty(K)
    for k in range(K):
        g = metrics.ris_rate_gradient(v, channels.cascaded[k], w, config.sigma2_w,
                                      config.bandwidth_hz, k)
        out[k] = np.linalg.norm(g)
    return out


def sync_to_feasible(state: IterateState, channels: ChannelState,
                     config: SystemConfig) -> IterateState:
    """Clamp carried slacks so the expansion point satisfies the exact constraints.

    The restriction rows guarantee q <= exact SINR for accepted solutions up
    to solver tolerance, and the gradient-norm row is not a restriction at
    all, so after every channel change or accepted step the slacks are pulled
    back inside the exact feasible set: q to the achieved SINRs, rates to the
    rate-log bound, u to the gradient-norm bound evaluated at the synced
    RIS-link slack.
    """
    g_eff, g_ris = exact_rate_state(state.w.w, state.v.v, channels, config)
    q = np.clip(state.q, 0.0, g_eff)
    q_ris = np.clip(state.q_ris, 0.0, g_ris)
    B = config.bandwidth_hz
    rates = np.clip(state.rates, 0.0, metrics.achievable_rate(q, B))
    rates_ris = np.clip(state.rates_ris, 0.0, metrics.achievable_rate(q_ris, B))
    sigma = math.sqrt(config.sigma2_w)
    # u sits exactly on its bound: the objective always pushes it there, and
    # an expansion strictly inside makes the next row needlessly steep
    u = np.empty(config.num_users)
    for k in range(config.num_users):
        u[k] = B * subproblems.gradient_norm_slack_bound(
            channels.cascaded[k] / sigma, state.v.v, state.w.w, k, q_ris[k])
    u = np.maximum(u, subproblems.U_FLOOR_BPS)
    return replace(state, rates=rates, rates_ris=rates_ris, q=q, q_ris=q_ris, u=u)


def initialize_iterates(channels: ChannelState, config: SystemConfig,
                        seed: int | None = None) -> IterateState:
    """Matched-filter beamformers, random phases, slacks from the achieved point.

    Each AP splits its power budget equally across users and points the
    per-user block along the effective channel; phases are uniform on
    [0, 2pi); the SINR slacks equal the achieved SINRs, rates the achieved
    rates clipped at demand, and u the achieved gradient norm (floored).
    """
    seed = config.rng_seed if seed is None else seed
    rng = link_rng(seed, TAG_PHASE_INIT)
    v = PhaseShiftVector.from_phases(rng.uniform(0.0, 2.0 * np.pi, config.num_ris_elements))

    N, L, K = config.num_aps, config.antennas_per_ap, config.num_users
    w = np.zeros((N * L, K), dtype=complex)
    h_eff = channels.aggregate + np.einsum("knm,m->kn", channels.cascaded, v.v)
    for n in range(N):
        rows = slice(n * L, (n + 1) * L)
        blocks = h_eff[:, rows]                       # (K, L)
        norms = np.linalg.norm(blocks, axis=1)
        live = norms > 0
        if not np.any(live):
            continue
        per_user = config.p_max_w / live.sum()
        for k in range(K):
            if live[k]:
                w[rows, k] = math.sqrt(per_user) * blocks[k] / norms[k]

    state = IterateState(
        w=BeamformingMatrix(w=w, num_aps=N), v=v,
        rates=np.zeros(K), rates_ris=np.zeros(K),
        q=np.zeros(K), q_ris=np.zeros(K),
        u=np.full(K, subproblems.U_FLOOR_BPS), stage="w",
    )
    g_eff, g_ris = exact_rate_state(w, v.v, channels, config)
    B = config.bandwidth_hz
    demands = config.qos_rates
    return replace(
        state,
        q=g_eff, q_ris=g_ris,
        rates=np.minimum(metrics.achievable_rate(g_eff, B), demands),
        rates_ris=np.minimum(metrics.achievable_rate(g_ris, B), demands),
        u=np.maximum(exact_gradient_norms(w, v.v, channels, config),
                     subproblems.U_FLOOR_BPS),
    )


def step(state: IterateState, channels: ChannelState, weights: MetricWeights,
         config: SystemConfig, settings: SolverSettings,
         penalty_weight: float | None = None) -> tuple[IterateState, StepRecord]:
    """One sub-iteration of the stage indicated by ``state.stage``.

    On an optimal or near-optimal solve the solution becomes the next
    expansion point (the other stage's variable is carried over); on solver
    failure the expansion point is kept.  The stage toggles either way.
    """
    if state.stage == "w":
        prog, layout = subproblems.assemble_beamforming_problem(state, channels,
                                                                weights, config)
    else:
        prog, layout = subproblems.assemble_phase_problem(state, channels, weights,
                                                          config, penalty_weight)
    x_exp = subproblems.encode_state(state, layout, config, config.qos_rates)
    obj_exp = prog.objective_value(x_exp)
    sol = solve(prog, settings)

    next_stage = "v" if state.stage == "w" else "w"
    if sol.usable:
        dec = layout.decode(sol.x)
        if state.stage == "w":
            NL = config.num_aps * config.antennas_per_ap
            w_new = dec["x"].reshape(config.num_users, NL).T
            cand = replace(state, w=BeamformingMatrix(w=w_new, num_aps=config.num_aps))
        else:
            cand = replace(state, v=PhaseShiftVector.from_vector(dec["x"]))
        cand = replace(cand, rates=dec["rates"], rates_ris=dec["rates_ris"],
                       q=dec["q"], q_ris=dec["q_ris"],
                       u=np.maximum(dec["u"], subproblems.U_FLOOR_BPS))
        cand = sync_to_feasible(cand, channels, config)
        obj_sol = sol.objective
    else:
        cand = state
        obj_sol = obj_exp

    record = StepRecord(
        z=0, t=0.0, stage=state.stage, status=sol.status,
        psi=metrics.adaptation_gap(cand.rates, config.qos_rates),
        objective=obj_sol, objective_at_expansion=obj_exp,
        rates=cand.rates.copy(), rates_ris=cand.rates_ris.copy(),
        n_blocked=int(np.all(channels.blockage_mask, axis=0).sum()),
    )
    return replace(cand, stage=next_stage), record


def run_coherence_interval(state: IterateState, channels: ChannelState,
                           weights: MetricWeights, config: SystemConfig,
                           settings: SolverSettings,
                           penalty: PenaltySchedule | None = None,
                           t_start: float = 0.0, z_start: int = 0,
                           event: bool = False) -> tuple[IterateState, list[StepRecord]]:
    """floor(T_c / T_calc) alternating sub-iterations, then phase projection.

    The first emitted record carries the ``event`` flag of a blockage that
    landed on this block boundary.  The returned state has unit-modulus
    phases and re-synced slacks.
    """
    if config.per_subproblem_time_s > config.coherence_time_s:
        raise ValueError("per-subproblem time exceeds the coherence time")
    penalty = penalty or PenaltySchedule()
    n_steps = int(math.floor(config.coherence_time_s / config.per_subproblem_time_s + 1e-9))
    records: list[StepRecord] = []
    t = t_start
    v_iters = 0
    for j in range(n_steps):
        pw = penalty.at(v_iters) if state.stage == "v" else None
        if state.stage == "v":
            v_iters += 1
        state, rec = step(state, channels, weights, config, settings, pw)
        t += config.per_subproblem_time_s
        rec.t = t
        rec.z = z_start + j + 1
        rec.event = event and j == 0
        records.append(rec)
    state = replace(state, v=project_unit_modulus(state.v))
    state = sync_to_feasible(state, channels, config)
    return state, records


def apply_blockage(channels: ChannelState, user: int | None = None
                   ) -> tuple[ChannelState, int]:
    """Remove all direct links of ``user`` (default: strongest unblocked one)."""
    blocked = np.all(channels.blockage_mask, axis=0)
    if user is None:
        norms = np.linalg.norm(channels.aggregate, axis=1)
        norms[blocked] = -np.inf
        if np.all(blocked):
            raise ValueError("every user is already blocked")
        user = int(np.argmax(norms))
    elif blocked[user]:
        raise ValueError(f"user {user} is already blocked")
    return ch.with_blocked_user(channels, user), user


def detect_recovery(records: list[StepRecord], t0: float, demands: np.ndarray,
                    eps_rec: float = 1e-2, plateau_len: int = 3
                    ) -> tuple[float, bool]:
    """Earliest recovered instant strictly after t0.

    Recovered means either (a) every allocated rate reaches its demand up to
    the relative slack eps_rec, or (b) the rate-demand gap has plateaued:
    its relative change stayed below eps_rec for ``plateau_len`` consecutive
    records.  If neither fires, the horizon end is returned flagged as not
    recovered.
    """
    tail = [r for r in records if r.t >= t0]
    if not tail or tail[0].t != t0:
        raise ValueError("t0 must coincide with a record")
    run = 0
    prev_psi = tail[0].psi
    for r in tail[1:]:
        if abs(r.psi - prev_psi) <= eps_rec * max(abs(prev_psi), 1e-12):
            run += 1
        else:
            run = 0
        prev_psi = r.psi
        if np.all(r.rates >= demands * (1.0 - eps_rec)):
            return r.t, True
        if run >= plateau_len:
            return r.t, True
    return tail[-1].t, False
