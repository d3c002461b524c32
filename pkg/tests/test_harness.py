import json

import numpy as np
import pytest

from rieszflow.exceptions import ExperimentError, SupportTooCloseError
from rieszflow.exceptions.serialization import config_hash, read_grid, read_points, write_grid
from rieszflow.models.kernel import KernelSpec
from rieszflow.schemas.schemas import ExperimentConfig, NRun
from rieszflow.services import harness_service
from rieszflow.services.densities import bump


def small_config(tmp_path, **overrides) -> ExperimentConfig:
    data = {
        "name": "small",
        "kernel": {"d": 1, "s": 0.5},
        "density": {"name": "bump", "params": {"radius": 0.5}},
        "n_list": [8, 16],
        "T": 0.05,
        "n_samples": 2,
        "grid": {"L": 1.5, "n": 64},
        "output_dir": str(tmp_path / "out"),
    }
    data.update(overrides)
    return ExperimentConfig.model_validate(data)


def test_config_defaults_fill_empty_sections():
    config = ExperimentConfig.model_validate({"kernel": None, "grid": None, "name": "x"})
    assert config.kernel.d == 2
    assert config.grid.n == 128
    assert config.eta_fractions == [0.4, 0.2, 0.1]


def test_config_reads_yaml(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text("name: yaml\nkernel:\n  d: 1\n  s: 0.25\nn_list: [4, 8]\nT: 0.1\n", encoding="utf-8")
    config = ExperimentConfig.from_yaml(path)
    assert config.name == "yaml"
    assert config.spec == KernelSpec.build(1, 0.25)
    assert config.n_list == [4, 8]


@pytest.mark.parametrize(
    "overrides",
    [
        {"n_list": [16, 8]},
        {"n_list": []},
        {"T": 0.0},
        {"kernel": {"d": 2, "s": 1.2}},
        {"eta_fractions": [0.5, 1.0]},
        {"flow": {"beta": 1.0}},
    ],
)
def test_invalid_configs_are_rejected(tmp_path, overrides):
    with pytest.raises(ValueError):
        small_config(tmp_path, **overrides)


def test_eta_fractions_are_sorted_down(tmp_path):
    assert small_config(tmp_path, eta_fractions=[0.1, 0.3, 0.2]).eta_fractions == [0.3, 0.2, 0.1]


def test_sample_times(tmp_path):
    assert harness_service.sample_times(small_config(tmp_path)) == pytest.approx([0.0, 0.025, 0.05])


def test_sampling_is_reproducible():
    field = bump(KernelSpec.build(2, 0.5), 1.0, 32)
    first, _ = harness_service.sample_initial(field, 50, seed=3)
    again, _ = harness_service.sample_initial(field, 50, seed=3)
    other, _ = harness_service.sample_initial(field, 50, seed=4)
    assert np.array_equal(first.positions, again.positions)
    assert not np.array_equal(first.positions, other.positions)


def test_sample_size_changes_the_stream():
    field = bump(KernelSpec.build(1, 0.5), 1.0, 64)
    small, _ = harness_service.sample_initial(field, 10, seed=0)
    large, _ = harness_service.sample_initial(field, 20, seed=0)
    assert not np.array_equal(small.positions, large.positions[:10])


def test_samples_are_well_prepared():
    field = bump(KernelSpec.build(1, 0.5), 1.5, 128, radius=0.5)
    particles, report = harness_service.sample_initial(field, 1000, seed=1)
    assert particles.n == 1000
    assert report.relative_gap < 0.05
    assert report.mean == pytest.approx(report.density_mean, abs=0.05)
    assert np.all(np.abs(np.asarray(particles.positions)) <= 0.5 + field.dx)


def test_rejection_sampling_stays_in_the_support():
    field = bump(KernelSpec.build(2, 0.5), 1.0, 32, radius=0.4)
    particles, report = harness_service.sample_initial(field, 200, seed=2)
    assert 0.0 < report.acceptance <= 1.0
    assert np.all(np.linalg.norm(np.asarray(particles.positions), axis=-1) <= 0.4 + field.dx * np.sqrt(2.0))


def test_sampling_needs_a_probability_density():
    field = bump(KernelSpec.build(1, 0.5), 1.0, 64).scaled(2.0)
    with pytest.raises(ValueError):
        harness_service.sample_initial(field, 10, seed=0)


def test_single_run_series(tmp_path):
    config = small_config(tmp_path)
    run = harness_service.run_single_n(config, 8, out_dir=tmp_path)
    assert run.times == pytest.approx([0.0, 0.025, 0.05])
    assert len(run.E_N) == len(run.cond1) == len(run.cond2) == 3
    assert all(np.isfinite(run.E_N))
    assert run.radius == pytest.approx(8**-0.5)
    assert all(count >= 1 for count in run.balls)
    for name in ("trajectory_N8.csv", "scalars_N8.csv", "grid_N8.csv", "grid_N8_T.bin"):
        assert (tmp_path / name).exists()
    final = read_grid(tmp_path / "grid_N8_T.bin")
    assert final.t == pytest.approx(0.05)
    assert final.mass == pytest.approx(1.0)


def test_conditions_can_be_switched_off(tmp_path):
    run = harness_service.run_single_n(small_config(tmp_path, conditions=False), 8)
    assert run.cond1 == []
    assert run.balls == []


def test_module_errors_carry_the_particle_count(tmp_path):
    config = small_config(tmp_path, density={"name": "bump", "params": {"radius": 1.45}})
    with pytest.raises(ExperimentError) as info:
        harness_service.run_single_n(config, 8)
    assert info.value.n == 8
    assert isinstance(info.value.cause, SupportTooCloseError)


def test_convergence_writes_its_outputs(tmp_path):
    config = small_config(tmp_path, conditions=False)
    result = harness_service.run_convergence(config)
    assert [run.n for run in result.runs] == [8, 16]
    out = tmp_path / "out"
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config_hash"] == config_hash(config)
    assert manifest["kernel"]["d"] == 1
    lines = (out / "energies.csv").read_text().splitlines()
    assert lines[0] == "N,t,E_N,H_over_N2,field_energy,energy_gap"
    assert len(lines) == 1 + 2 * 3
    assert (out / "plot_energies.py").exists()
    assert result.holder_quotient is not None


def test_rate_fit():
    runs = [
        NRun(n=n, times=[0.0], E_N=[1.0 / n], H_over_N2=[0.0], field_energy=[0.0], energy_gap=[0.0], eta_N=[], radius=1.0)
        for n in (16, 64, 256, 1024)
    ]
    assert harness_service.fit_rate(runs) == pytest.approx(-1.0)
    assert harness_service.fit_rate(runs[:1]) is None


def test_config_hash_tracks_the_content(tmp_path):
    config = small_config(tmp_path)
    assert config_hash(config) == config_hash(small_config(tmp_path))
    assert config_hash(config) != config_hash(small_config(tmp_path, seed=1))


def test_grid_file_keeps_the_header(tmp_path):
    field = bump(KernelSpec.build(2, 0.5), 1.0, 16)
    loaded = read_grid(write_grid(field, tmp_path / "grid.bin"))
    assert (loaded.d, loaded.spec.s, loaded.L, loaded.n) == (2, 0.5, 1.0, 16)
    assert np.array_equal(loaded.values, field.values)


def test_points_from_files(tmp_path):
    (tmp_path / "points.json").write_text("[[0.0, 1.0], [2.0, 3.0]]")
    (tmp_path / "points.txt").write_text("0.0\n3.0\n10.0\n")
    assert read_points(tmp_path / "points.json").shape == (2, 2)
    assert read_points(tmp_path / "points.txt").tolist() == [[0.0], [3.0], [10.0]]


def test_unperturbed_stability_sits_at_the_floor(tmp_path):
    report = harness_service.run_stability(small_config(tmp_path), perturbation=0.0)
    assert report.distance == [0.0, 0.0, 0.0]
    assert report.at_floor
    assert report.within_envelope
    assert report.constant == pytest.approx(4.0)


def test_perturbed_stability_report(tmp_path):
    report = harness_service.run_stability(small_config(tmp_path), perturbation=0.1)
    assert len(report.distance) == len(report.envelope) == len(report.times)
    assert report.distance[0] > 0.0
    assert report.envelope[0] == pytest.approx(report.distance[0])
    assert report.envelope[-1] >= report.envelope[0]


def test_small_perturbation_stays_inside_the_envelope(tmp_path):
    report = harness_service.run_stability(small_config(tmp_path), perturbation=0.02)
    assert report.distance[0] > 0.0
    assert not report.at_floor
    assert report.within_envelope


def test_stability_distance_responds_quadratically(tmp_path):
    config = small_config(tmp_path)
    full = harness_service.run_stability(config, perturbation=0.02)
    half = harness_service.run_stability(config, perturbation=0.01)
    # D квадратична за різницею густин: половина збурення дає чверть відстані
    ratios = [a / b for a, b in zip(full.distance, half.distance)]
    assert ratios == pytest.approx([4.0] * len(ratios), rel=0.1)


def test_repeated_runs_write_identical_files(tmp_path):
    config = small_config(tmp_path)
    out = tmp_path / "out"

    def snapshot() -> dict:
        return {path.name: path.read_bytes() for path in sorted(out.iterdir())}

    harness_service.run_convergence(config)
    first = snapshot()
    harness_service.run_convergence(config)
    assert snapshot() == first
    assert {"trajectory_N8.csv", "grid_N16_T.bin", "energies.csv", "result.json"} <= set(first)


@pytest.mark.slow
@pytest.mark.parametrize("s", [0.0, 0.5])
def test_planar_convergence_trend(tmp_path, s):
    config = ExperimentConfig.model_validate(
        {
            "name": f"planar-s{s}",
            "kernel": {"d": 2, "s": s},
            "density": {"name": "bump"},
            "n_list": [64, 256, 1024, 4096],
            "T": 0.5,
            "n_samples": 1,
            "grid": {"L": 1.0, "n": 128},
            "conditions": False,
            "output_dir": str(tmp_path),
        }
    )
    result = harness_service.run_convergence(config)
    final_energy = [run.E_N[-1] for run in result.runs]
    final_gap = [abs(run.energy_gap[-1]) for run in result.runs]
    assert all(b < a for a, b in zip(final_energy, final_energy[1:]))
    assert result.rate is not None
    assert result.rate <= -0.2
    assert all(b < a for a, b in zip(final_gap, final_gap[1:]))
