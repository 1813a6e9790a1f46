import csv
import json
import os
from pathlib import Path

import numpy as np
import pytest

from ris_resilience.channels import build_channel_state
from ris_resilience.config import ConfigError, SystemConfig
from ris_resilience.experiments import (ADAPTATION_SCHEMA, SCALING_SCHEMA,
                                        TIMELINE_SCHEMA, ExperimentSpec, config_hash,
                                        method_weights, rerun_from_manifest,
                                        run_adaptation_experiment,
                                        run_scaling_experiment, verify_manifest)
from ris_resilience.geometry import build_geometry

TINY_SYSTEM = dict(num_aps=2, antennas_per_ap=2, num_users=4, num_ris_elements=16,
                   coherence_time_s=0.04, per_subproblem_time_s=0.01,
                   qos_rate_bps=4e6, rng_seed=0)


def tiny_spec(out_dir, **kw):
    args = dict(system=SystemConfig(**TINY_SYSTEM), methods=("proposed", "baseline"),
                seeds=(0, 1), num_blockages=3, out_dir=str(out_dir), jobs=1)
    args.update(kw)
    return ExperimentSpec(**args)


@pytest.fixture(scope="module")
def adaptation_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("adapt")
    spec = tiny_spec(out)
    manifest = run_adaptation_experiment(spec)
    return spec, manifest


class TestMethodWeights:
    def test_mapping(self, small_config):
        chs = build_channel_state(small_config, build_geometry(small_config), seed=0)
        norms = np.linalg.norm(chs.aggregate, axis=1)
        ratio = norms / norms.max()
        w = method_weights("proposed", chs)
        np.testing.assert_allclose(w.alpha_adapt, ratio)
        np.testing.assert_allclose(w.alpha_robust, ratio)
        w = method_weights("baseline", chs)
        assert np.all(np.asarray(w.alpha_adapt) == 0)
        assert np.all(np.asarray(w.alpha_robust) == 0)
        w = method_weights("robustness-only", chs)
        assert np.all(np.asarray(w.alpha_adapt) == 0)
        np.testing.assert_allclose(w.alpha_robust, ratio)

    def test_unknown_method_rejected(self, small_config):
        chs = build_channel_state(small_config, build_geometry(small_config), seed=0)
        with pytest.raises(ConfigError):
            method_weights("other", chs)


def test_paired_channel_realizations(small_config):
    # every method consumes the identical channels for one seed
    geo = build_geometry(small_config)
    a = build_channel_state(small_config, geo, seed=11)
    b = build_channel_state(small_config, geo, seed=11)
    np.testing.assert_array_equal(a.direct, b.direct)
    np.testing.assert_array_equal(a.ris_user, b.ris_user)


def test_spec_validation():
    with pytest.raises(ConfigError):
        tiny_spec("x", methods=("nonsense",))
    with pytest.raises(ConfigError):
        tiny_spec("x", num_blockages=4)  # num_users == 4


class TestAdaptationExperiment:
    def test_every_timeline_has_three_events(self, adaptation_run):
        spec, _ = adaptation_run
        for method in spec.methods:
            for seed in spec.seeds:
                path = Path(spec.out_dir) / f"adapt_{method}_seed{seed}.csv"
                with open(path) as f:
                    rows = list(csv.DictReader(f))
                assert sum(int(r["event"]) for r in rows) == 3
                assert all(r["schema"] == TIMELINE_SCHEMA for r in rows)
                # 4 blocks x 4 sub-iterations
                assert len(rows) == 16
                stages = [r["stage"] for r in rows]
                assert stages == ["w", "v"] * 8

    def test_summary_schema_and_blockage_rows(self, adaptation_run):
        spec, _ = adaptation_run
        with open(Path(spec.out_dir) / "adaptation_summary.csv") as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == len(spec.methods) * len(spec.seeds) * 3
        assert all(r["schema"] == ADAPTATION_SCHEMA for r in rows)
        for r in rows:
            assert 0.0 <= float(r["r_abs"]) <= 1.0 + 1e-9
            assert 0.0 <= float(r["r"]) <= 1.0 + 1e-9
            assert float(r["r_rec"]) <= 1.0 + 1e-9

    def test_manifest_references_every_output(self, adaptation_run):
        spec, manifest = adaptation_run
        with open(manifest) as f:
            man = json.load(f)
        listed = {o["path"] for o in man["outputs"]}
        produced = {p.name for p in Path(spec.out_dir).glob("*.csv")}
        assert listed == produced
        assert man["config_hash"] == config_hash(spec)
        assert verify_manifest(manifest) == []

    def test_tampered_output_fails_verification(self, adaptation_run, tmp_path):
        spec, manifest = adaptation_run
        victim = Path(spec.out_dir) / "adaptation_summary.csv"
        original = victim.read_bytes()
        try:
            victim.write_bytes(original + b"tampered\n")
            problems = verify_manifest(manifest)
            assert any("adaptation_summary" in p for p in problems)
        finally:
            victim.write_bytes(original)

    def test_config_hash_deterministic(self, tmp_path):
        s1 = tiny_spec(tmp_path)
        s2 = tiny_spec(tmp_path)
        assert config_hash(s1) == config_hash(s2)
        assert config_hash(tiny_spec(tmp_path, seeds=(0,))) != config_hash(s1)

    def test_rerun_from_manifest_byte_identical(self, adaptation_run, tmp_path):
        spec, manifest = adaptation_run
        rerun_manifest = rerun_from_manifest(manifest, str(tmp_path / "again"))
        for p in Path(spec.out_dir).glob("*.csv"):
            twin = tmp_path / "again" / p.name
            assert twin.read_bytes() == p.read_bytes(), p.name

    def test_golden_summary(self, adaptation_run):
        spec, _ = adaptation_run
        golden = Path(__file__).parent / "data" / "golden_adaptation_summary.csv"
        produced = (Path(spec.out_dir) / "adaptation_summary.csv").read_bytes()
        if not golden.exists():
            pytest.skip("golden file not generated yet")
        assert produced == golden.read_bytes()


class TestScalingExperiment:
    def test_sweep_rows_and_aggregates(self, tmp_path):
        spec = tiny_spec(tmp_path, m_sweep=(9, 16), seeds=(0, 1),
                         methods=("proposed",))
        manifest = run_scaling_experiment(spec)
        with open(Path(spec.out_dir) / "scaling.csv") as f:
            rows = list(csv.DictReader(f))
        runs = [r for r in rows if r["kind"] == "run"]
        assert len(runs) == 2 * 2
        assert all(r["schema"] == SCALING_SCHEMA for r in rows)
        means = [r for r in rows if r["kind"] == "mean"]
        cis = [r for r in rows if r["kind"] == "ci95"]
        assert len(means) == 2 and len(cis) == 2
        for r in runs:
            assert 0.0 <= float(r["r"]) <= 1.0 + 1e-9
        assert verify_manifest(manifest) == []

    def test_non_square_sweep_rejected(self, tmp_path):
        spec = tiny_spec(tmp_path, m_sweep=(10,), methods=("proposed",))
        with pytest.raises(ConfigError):
            run_scaling_experiment(spec)


def test_parallel_jobs_give_identical_outputs(tmp_path):
    spec1 = tiny_spec(tmp_path / "serial", seeds=(0, 1), methods=("baseline",))
    spec2 = tiny_spec(tmp_path / "parallel", seeds=(0, 1), methods=("baseline",),
                      jobs=2)
    run_adaptation_experiment(spec1)
    run_adaptation_experiment(spec2)
    for p in sorted(Path(spec1.out_dir).glob("*.csv")):
        twin = Path(spec2.out_dir) / p.name
        assert twin.read_bytes() == p.read_bytes()
