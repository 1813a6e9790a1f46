"""Experiment orchestration: blockage-recovery runs, element-count sweeps.

Every (method, seed) pair of one experiment consumes the identical channel
realization, so method comparisons are paired.  Outputs are deterministic
CSV files plus a manifest carrying the resolved configuration, a config hash
and per-file checksums; re-running from the manifest reproduces the CSVs
byte for byte.
"""
from __future__ import annotations

import concurrent.futures
import csv
import hashlib
import json
import multiprocessing
import os
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__
from .channels import build_channel_state
from .config import ConfigError, MetricWeights, PenaltySchedule, SolverSettings, SystemConfig
from .engine import (BlockageEvent, ScenarioTimeline, StepRecord, apply_blockage,
                     detect_recovery, initialize_iterates, run_coherence_interval,
                     sync_to_feasible)
from .geometry import build_geometry
from .metrics import ResilienceReport, score_disruption, user_weights

METHODS = ("proposed", "baseline", "robustness-only")

TIMELINE_SCHEMA = "timeline-v1"
ADAPTATION_SCHEMA = "adaptation-summary-v1"
SCALING_SCHEMA = "scaling-v1"


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything one experiment run depends on."""

    system: SystemConfig = SystemConfig()
    methods: tuple[str, ...] = METHODS
    seeds: tuple[int, ...] = tuple(range(20))
    num_blockages: int = 3
    m_sweep: tuple[int, ...] = (64, 100, 144, 196, 256)
    eps_recovery: float = 1e-2
    lambdas: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    solver_tol: float = 1e-6
    jobs: int = 1
    out_dir: str = "runs"

    def __post_init__(self):
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; choose from {METHODS}")
        if self.num_blockages >= self.system.num_users:
            raise ConfigError("cannot block every user; reduce num_blockages")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["system"] = self.system.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        d = dict(d)
        d["system"] = SystemConfig(**d["system"])
        for key in ("methods", "seeds", "m_sweep", "lambdas"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def method_weights(method: str, channels, base: MetricWeights | None = None) -> MetricWeights:
    """Map a method name to its objective weights on the current channels.

    proposed: both per-user weights follow the direct-channel strength rule;
    baseline: both zero (pure rate-gap minimization); robustness-only: only
    the redundancy weight is active.
    """
    base = base or MetricWeights()
    ratio = user_weights(channels)
    zero = np.zeros_like(ratio)
    if method == "proposed":
        return base.with_alphas(ratio, ratio)
    if method == "baseline":
        return base.with_alphas(zero, zero)
    if method == "robustness-only":
        return base.with_alphas(zero, ratio)
    raise ConfigError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# Single runs
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    method: str
    seed: int
    timeline: ScenarioTimeline
    reports: list[ResilienceReport]
    solver_failures: int
    total_steps: int


def run_blockage_sequence(system: SystemConfig, method: str, seed: int,
                          num_blockages: int, eps_recovery: float,
                          lambdas, solver_tol: float) -> RunResult:
    """One full run: a clean block, then ``num_blockages`` blocked blocks.

    Channels persist across the sequence (one story, not a re-draw); each
    blockage removes the strongest remaining user's direct links at the
    block boundary and is scored against the records of its own block.
    """
    geometry = build_geometry(system)
    channels = build_channel_state(system, geometry, seed=seed)
    settings = SolverSettings().loosened(solver_tol)
    penalty = PenaltySchedule()
    state = initialize_iterates(channels, system, seed=seed)
    weights = method_weights(method, channels)

    timeline = ScenarioTimeline()
    t, z = 0.0, 0
    state, recs = run_coherence_interval(state, channels, weights, system, settings,
                                         penalty, t_start=t, z_start=z)
    timeline.records.extend(recs)
    t, z = recs[-1].t, recs[-1].z

    reports: list[ResilienceReport] = []
    for _ in range(num_blockages):
        channels, blocked_user = apply_blockage(channels)
        timeline.events.append(BlockageEvent(time=t, user=blocked_user))
        weights = method_weights(method, channels)
        state = sync_to_feasible(state, channels, system)
        state, recs = run_coherence_interval(state, channels, weights, system,
                                             settings, penalty, t_start=t,
                                             z_start=z, event=True)
        timeline.records.extend(recs)
        t0 = recs[0].t
        tq, recovered = detect_recovery(recs, t0, system.qos_rates, eps_recovery)
        rates_t0 = recs[0].rates
        rates_tq = next(r for r in recs if r.t == tq).rates
        reports.append(score_disruption(rates_t0, rates_tq, t0, tq,
                                        system.desired_recovery_time_s,
                                        system.qos_rates, np.asarray(lambdas),
                                        recovered=recovered))
        t, z = recs[-1].t, recs[-1].z

    failures = sum(1 for r in timeline.records if r.status not in ("optimal", "near-optimal"))
    return RunResult(method=method, seed=seed, timeline=timeline, reports=reports,
                     solver_failures=failures, total_steps=len(timeline.records))


# ---------------------------------------------------------------------------
# CSV / manifest plumbing
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_timeline_csv(path: str, result: RunResult, system: SystemConfig) -> None:
    K = system.num_users
    demands = system.qos_rates
    header = ["schema", "method", "seed", "z", "t", "stage", "status", "event",
              "n_blocked", "psi", "objective", "mean_rate_ratio"]
    header += [f"rate_{k}" for k in range(K)] + [f"rate_ris_{k}" for k in range(K)]
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(header)
        for r in result.timeline.records:
            ratio = float(np.mean(r.rates / demands))
            row = [TIMELINE_SCHEMA, result.method, result.seed, r.z, _fmt(r.t),
                   r.stage, r.status, int(r.event), r.n_blocked, _fmt(r.psi),
                   _fmt(r.objective), _fmt(ratio)]
            row += [_fmt(x) for x in r.rates] + [_fmt(x) for x in r.rates_ris]
            wr.writerow(row)


ADAPTATION_FIELDS = ["schema", "method", "seed", "blockage", "blocked_user", "t0", "tq",
                     "recovered", "r_abs_raw", "r_abs", "r_ada_raw", "r_ada", "r_rec", "r"]


def adaptation_rows(result: RunResult) -> list[list]:
    rows = []
    for i, (rep, ev) in enumerate(zip(result.reports, result.timeline.events), start=1):
        rows.append([ADAPTATION_SCHEMA, result.method, result.seed, i, ev.user,
                     _fmt(rep.t0), _fmt(rep.tq), int(rep.recovered),
                     _fmt(rep.r_abs_raw), _fmt(rep.r_abs), _fmt(rep.r_ada_raw),
                     _fmt(rep.r_ada), _fmt(rep.r_rec), _fmt(rep.r)])
    return rows


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(spec: ExperimentSpec) -> str:
    return hashlib.sha256(
        json.dumps(spec.to_dict(), sort_keys=True).encode()
    ).hexdigest()


@dataclass
class RunManifest:
    kind: str
    spec: dict
    cfg_hash: str
    code_version: str
    seeds: list[int]
    outputs: list[dict]
    summary: dict

    def to_dict(self) -> dict:
        return {"schema": "run-manifest-v1", "kind": self.kind, "spec": self.spec,
                "config_hash": self.cfg_hash, "code_version": self.code_version,
                "seeds": self.seeds, "outputs": self.outputs, "summary": self.summary}


def emit_manifest(out_dir: str, kind: str, spec: ExperimentSpec,
                  rel_paths: list[str], summary: dict) -> str:
    outputs = [{"path": p, "sha256": sha256_file(os.path.join(out_dir, p))}
               for p in sorted(rel_paths)]
    man = RunManifest(kind=kind, spec=spec.to_dict(), cfg_hash=config_hash(spec),
                      code_version=__version__, seeds=list(spec.seeds),
                      outputs=outputs, summary=summary)
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as f:
        json.dump(man.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def verify_manifest(path: str) -> list[str]:
    """Re-hash every referenced file; returns a list of mismatch messages."""
    with open(path) as f:
        man = json.load(f)
    base = os.path.dirname(os.path.abspath(path))
    problems = []
    for entry in man["outputs"]:
        p = os.path.join(base, entry["path"])
        if not os.path.exists(p):
            problems.append(f"missing output {entry['path']}")
        elif sha256_file(p) != entry["sha256"]:
            problems.append(f"checksum mismatch for {entry['path']}")
    return problems


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

def _adapt_unit(args):
    spec_d, method, seed = args
    spec = ExperimentSpec.from_dict(spec_d)
    res = run_blockage_sequence(spec.system, method, seed, spec.num_blockages,
                                spec.eps_recovery, spec.lambdas, spec.solver_tol)
    rel = f"adapt_{method}_seed{seed}.csv"
    write_timeline_csv(os.path.join(spec.out_dir, rel), res, spec.system)
    return rel, adaptation_rows(res), res.solver_failures, res.total_steps


def _run_units(units, worker, jobs: int):
    if jobs <= 1:
        return [worker(u) for u in units]
    # spawn, not fork: the solver backend runs native threads, and forking a
    # threaded process can deadlock the children
    ctx = multiprocessing.get_context("spawn")
    with concurrent.futures.ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as ex:
        return list(ex.map(worker, units))


def run_adaptation_experiment(spec: ExperimentSpec) -> str:
    """Timeline + per-blockage summary CSVs for every (method, seed); manifest path."""
    os.makedirs(spec.out_dir, exist_ok=True)
    units = [(spec.to_dict(), m, s) for m in spec.methods for s in spec.seeds]
    results = _run_units(units, _adapt_unit, spec.jobs)

    rel_paths = [r[0] for r in results]
    summary_rows = [row for r in results for row in r[1]]
    failures = sum(r[2] for r in results)
    steps = sum(r[3] for r in results)

    summary_rel = "adaptation_summary.csv"
    with open(os.path.join(spec.out_dir, summary_rel), "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(ADAPTATION_FIELDS)
        for row in sorted(summary_rows, key=lambda r: (r[1], int(r[2]), int(r[3]))):
            wr.writerow(row)
    rel_paths.append(summary_rel)

    summary = {"solver_failures": failures, "total_steps": steps,
               "failure_fraction": failures / max(steps, 1)}
    return emit_manifest(spec.out_dir, "adaptation", spec, rel_paths, summary)


SCALING_FIELDS = ["schema", "M", "method", "seed", "kind",
                  "r", "r_abs", "r_ada", "r_rec", "r_ada_raw"]


def _scale_unit(args):
    spec_d, m_elems, method, seed = args
    spec = ExperimentSpec.from_dict(spec_d)
    system = spec.system.replace(num_ris_elements=m_elems)
    res = run_blockage_sequence(system, method, seed, num_blockages=2,
                                eps_recovery=spec.eps_recovery,
                                lambdas=spec.lambdas, solver_tol=spec.solver_tol)
    rep = res.reports[1]  # second blockage
    return ([SCALING_SCHEMA, m_elems, method, seed, "run", _fmt(rep.r), _fmt(rep.r_abs),
             _fmt(rep.r_ada), _fmt(rep.r_rec), _fmt(rep.r_ada_raw)],
            res.solver_failures, res.total_steps)


def run_scaling_experiment(spec: ExperimentSpec) -> str:
    """Resilience of the second blockage across the element-count sweep."""
    for m in spec.m_sweep:
        if int(np.sqrt(m)) ** 2 != m:
            raise ConfigError(f"sweep entry {m} is not a perfect square")
    os.makedirs(spec.out_dir, exist_ok=True)
    units = [(spec.to_dict(), m, meth, s)
             for m in spec.m_sweep for meth in spec.methods for s in spec.seeds]
    results = _run_units(units, _scale_unit, spec.jobs)
    rows = [r[0] for r in results]
    failures = sum(r[1] for r in results)
    steps = sum(r[2] for r in results)

    # aggregate rows: mean and a 95% normal-approximation CI half-width
    agg = []
    for m in spec.m_sweep:
        for meth in spec.methods:
            vals = np.array([float(r[5]) for r in rows if r[1] == m and r[2] == meth])
            mean = vals.mean()
            ci = 1.96 * vals.std(ddof=1) / np.sqrt(len(vals)) if len(vals) > 1 else 0.0
            agg.append([SCALING_SCHEMA, m, meth, -1, "mean", _fmt(mean), "", "", "", ""])
            agg.append([SCALING_SCHEMA, m, meth, -1, "ci95", _fmt(ci), "", "", "", ""])

    rel = "scaling.csv"
    with open(os.path.join(spec.out_dir, rel), "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(SCALING_FIELDS)
        for row in sorted(rows, key=lambda r: (int(r[1]), r[2], int(r[3]))):
            wr.writerow(row)
        for row in agg:
            wr.writerow(row)

    summary = {"solver_failures": failures, "total_steps": steps,
               "failure_fraction": failures / max(steps, 1)}
    return emit_manifest(spec.out_dir, "scaling", spec, [rel], summary)


def rerun_from_manifest(manifest_path: str, out_dir: str) -> str:
    """Repeat the experiment a manifest describes, into a fresh directory."""
    with open(manifest_path) as f:
        man = json.load(f)
    spec = ExperimentSpec.from_dict({**man["spec"], "out_dir": out_dir})
    if man["kind"] == "adaptation":
        return run_adaptation_experiment(spec)
    if man["kind"] == "scaling":
        return run_scaling_experiment(spec)
    raise ConfigError(f"unknown experiment kind {man['kind']!r}")
