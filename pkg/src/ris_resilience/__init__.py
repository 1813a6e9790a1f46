"""Resilience-guided beamforming and RIS phase design for cell-free downlinks."""

__version__ = "0.1.0"

from .config import (ConfigError, MetricWeights, PenaltySchedule, SolverSettings,
                     SystemConfig, dbm_to_watt, watt_to_dbm)
from .geometry import Geometry, build_geometry, ris_correlation_matrix
from .channels import (ChannelState, PhaseShiftVector, build_channel_state, cascade,
                       effective_channel, sample_direct_channel, with_blocked_user)
from .metrics import (BeamformingMatrix, GradientTerms, RateState, ResilienceReport,
                      achievable_rate, adaptation_gap, gradient_terms, redundancy_gap,
                      resilience_components, resilience_score, ris_rate_gradient,
                      score_disruption, sinr, user_weights)
from .conic import ConicProgram, Solution, dump_program, load_program, solve, validate
from .subproblems import (IterateState, assemble_beamforming_problem,
                          assemble_phase_problem, modulus_penalty)
from .engine import (BlockageEvent, ScenarioTimeline, StepRecord, apply_blockage,
                     detect_recovery, initialize_iterates, project_unit_modulus,
                     run_coherence_interval, step)
from .experiments import (METHODS, ExperimentSpec, method_weights,
                          run_adaptation_experiment, run_scaling_experiment,
                          verify_manifest)
