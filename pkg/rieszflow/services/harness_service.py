import logging
import math
from functools import partial
from pathlib import Path
from typing import Optional

import numpy as np

from rieszflow.config import get_settings
from rieszflow.dependencies.storage import experiment_dir
from rieszflow.dependencies.workers import pool_map
from rieszflow.exceptions import ExperimentError, RejectionSamplingError, RieszflowError
from rieszflow.exceptions.serialization import (
    build_manifest,
    write_grid,
    write_grid_series_csv,
    write_json,
    write_rows_csv,
    write_scalar_series_csv,
    write_trajectory_csv,
)
from rieszflow.models.grid import GridField
from rieszflow.models.particles import FlowParameters, ParticleSystem
from rieszflow.schemas.schemas import ConvergenceResult, ExperimentConfig, NRun, StabilityReport, WellPreparedness
from rieszflow.services import balls_service
from rieszflow.services.densities import make_density, perturbed
from rieszflow.services.dynamics_service import integrate, pairwise_energy
from rieszflow.services.meanfield_service import (
    diagnostics,
    field_distance,
    field_energy,
    grid_sample,
    pde_step,
)
from rieszflow.services.modenergy_service import lp_gradient_distance, modulated_energy

logger = logging.getLogger(__name__)

MIN_ACCEPTANCE = 0.01
SAMPLE_BATCH = 4096
# Перевірки умов на кулях дорогі: O(N²) на кожен вузол квадратури
CONDITION_MAX_N = 256
RATE_FIT_POINTS = 3
ENVELOPE_MARGIN = 0.1
FLOOR_FACTOR = 10.0


def _rng(seed: int, n: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, n]))


def _cell_choice(field: GridField, rng: np.random.Generator, count: int) -> np.ndarray:
    """Обернена функція розподілу по масах комірок і рівномірне зміщення всередині комірки"""
    masses = field.values.reshape(-1)
    cdf = np.cumsum(masses)
    cells = np.searchsorted(cdf, rng.random(count) * cdf[-1], side="right")
    cells = np.minimum(cells, len(masses) - 1)
    index = np.stack(np.unravel_index(cells, field.values.shape), axis=-1)
    offsets = rng.random((count, field.d))
    return -field.L + (index + offsets) * field.dx


def _rejection(field: GridField, rng: np.random.Generator, count: int) -> tuple[np.ndarray, float]:
    """Вибірка з відхиленням: рівномірні пропозиції в обмежувальному прямокутнику носія"""
    support = np.argwhere(field.values > 0)
    lo = -field.L + support.min(axis=0) * field.dx
    hi = -field.L + (support.max(axis=0) + 1) * field.dx
    peak = float(np.max(field.values))
    accepted: list[np.ndarray] = []
    proposed = taken = 0
    while taken < count:
        batch = lo + (hi - lo) * rng.random((SAMPLE_BATCH, field.d))
        index = np.minimum(((batch + field.L) / field.dx).astype(int), field.n - 1)
        density = field.values[tuple(index.T)]
        keep = batch[rng.random(SAMPLE_BATCH) * peak < density]
        proposed += SAMPLE_BATCH
        accepted.append(keep)
        taken += len(keep)
        acceptance = taken / proposed
        if acceptance < MIN_ACCEPTANCE:
            raise RejectionSamplingError(f"Rejection sampling acceptance {acceptance:.4f} fell below {MIN_ACCEPTANCE}")
    return np.concatenate(accepted)[:count], taken / proposed


def sample_initial(
    field: GridField,
    n: int,
    seed: int,
    flow: FlowParameters = FlowParameters(),
) -> tuple[ParticleSystem, WellPreparedness]:
    """Н.о.р. вибірка з густини і перевірка N^{-2}H_N(x°) → ∬g dμ°dμ°"""
    if not field.is_probability:
        raise ValueError(f"Initial density must have unit mass, got {field.mass}")
    rng = _rng(seed, n)
    if field.d == 1:
        points, acceptance = _cell_choice(field, rng, n), 1.0
    else:
        points, acceptance = _rejection(field, rng, n)
    particles = ParticleSystem(spec=field.spec, positions=points, t=field.t, flow=flow)

    discrete = pairwise_energy(particles).interaction / n**2
    continuous = field_energy(field)
    centers = np.moveaxis(field.mesh, 0, -1).reshape(-1, field.d)
    density_mean = centers.T @ field.values.reshape(-1) * field.cell_volume
    report = WellPreparedness(
        n=n,
        seed=seed,
        discrete_energy=discrete,
        field_energy=continuous,
        relative_gap=abs(discrete - continuous) / max(abs(continuous), 1e-300),
        mean=points.mean(axis=0).tolist(),
        density_mean=density_mean.tolist(),
        acceptance=acceptance,
    )
    logger.debug(f"🎲 Вибірка N={n}: відносний розрив енергії {report.relative_gap:.3e}")
    return particles, report


def sample_times(config: ExperimentConfig) -> list[float]:
    return [config.T * k / config.n_samples for k in range(config.n_samples + 1)]


def initial_field(config: ExperimentConfig) -> GridField:
    return make_density(config.density.name, config.spec, config.grid.L, config.grid.n, **config.density.params)


def _conditions(config: ExperimentConfig, particles: ParticleSystem, field: GridField, radius: float):
    """cond1 при найменшому η, cond2 і L^p-відстань поза кулями"""
    balls = balls_service.grow_and_merge(particles.positions, radius)
    cond2 = balls_service.check_cond2(particles.positions, balls, config.spec)
    limit = balls_service.max_admissible_eta(particles.positions, balls)
    etas = [fraction * limit for fraction in config.eta_fractions]
    values = balls_service.check_cond1(particles.positions, balls, etas, config.spec, config.quadrature, workers=1)
    lp = None
    if config.lp_exponent is not None:
        lp = lp_gradient_distance(particles, field, balls, config.lp_exponent, 0.9 * field.L, config.quadrature)
    return len(balls), values[-1].value if values else None, cond2, lp


def run_single_n(config: ExperimentConfig, n: int, out_dir: Optional[Path] = None) -> NRun:
    """Один прогін: вибірка, частинки і сітка до T, E_N(t) у моменти вибірки"""
    t = 0.0
    try:
        field = initial_field(config)
        particles, prepared = sample_initial(field, n, config.seed, config.flow)
        record = integrate(particles, config.T, tol=config.tol, sample_dt=config.T / config.n_samples)
        times = [float(t) for t in record.times]
        radius = config.radius_override or balls_service.radius_schedule(n, config.spec.s)

        series: dict[str, list] = {key: [] for key in ("E_N", "H", "ff", "gap", "balls", "cond1", "cond2", "lp")}
        samples = []
        for k, t in enumerate(times):
            if t > field.t:
                field = pde_step(field, t - field.t, config.flow, config.grid.cfl)
            samples.append(grid_sample(field))
            snapshot = particles.moved(record.positions[k], t)
            report = modulated_energy(snapshot, field)
            ff = field_energy(field)
            h = pairwise_energy(snapshot).interaction / n**2
            series["E_N"].append(report.E_N)
            series["H"].append(h)
            series["ff"].append(ff)
            series["gap"].append(abs(h - ff))
            if config.conditions and n <= CONDITION_MAX_N:
                count, cond1, cond2, lp = _conditions(config, snapshot, field, radius)
                series["balls"].append(count)
                series["cond1"].append(cond1)
                series["cond2"].append(cond2)
                series["lp"].append(lp)

        if config.conditions and n > CONDITION_MAX_N:
            logger.warning(f"⚠️ N={n} > {CONDITION_MAX_N}: перевірки умов на кулях пропущено")

        run = NRun(
            n=n,
            times=times,
            E_N=series["E_N"],
            H_over_N2=series["H"],
            field_energy=series["ff"],
            energy_gap=series["gap"],
            eta_N=record.eta.tolist(),
            radius=radius,
            balls=series["balls"],
            cond1=series["cond1"],
            cond2=series["cond2"],
            lp_distance=series["lp"],
            well_prepared=prepared,
        )
    except RieszflowError as e:
        raise ExperimentError(e, n=n, t=t) from e

    if out_dir is not None:
        write_trajectory_csv(record, out_dir / f"trajectory_N{n}.csv")
        write_scalar_series_csv(record, out_dir / f"scalars_N{n}.csv")
        write_grid_series_csv(samples, out_dir / f"grid_N{n}.csv")
        write_grid(field, out_dir / f"grid_N{n}_T.bin")
    logger.info(f"✅ N={n}: E_N(T)={run.E_N[-1]:.6g}")
    return run


def fit_rate(runs: list[NRun]) -> Optional[float]:
    """Нахил log E_N(T) від log N по трьох найбільших N"""
    tail = sorted(runs, key=lambda run: run.n)[-RATE_FIT_POINTS:]
    if len(tail) < 2:
        return None
    values = np.array([run.E_N[-1] for run in tail])
    if np.any(values <= 0):
        logger.warning("⚠️ E_N(T) не додатна для деяких N: нахил не оцінюється")
        return None
    slope, _ = np.polyfit(np.log([run.n for run in tail]), np.log(values), 1)
    return float(slope)


def run_convergence(config: ExperimentConfig, output: bool = True) -> ConvergenceResult:
    """Збіжність μ_N до μ в модульованій енергії по списку N"""
    settings = get_settings()
    out_dir = experiment_dir(config) if output else None
    logger.info(f"🚀 Експеримент {config.name}: {config.spec.label}, N={config.n_list}, T={config.T}")

    worker = partial(run_single_n, config, out_dir=out_dir)
    runs = pool_map(worker, config.n_list, processes=True)

    field0 = initial_field(config)
    report = diagnostics(field0, sigma=0.5)
    result = ConvergenceResult(
        name=config.name,
        d=config.spec.d,
        s=config.spec.s,
        runs=sorted(runs, key=lambda run: run.n),
        rate=fit_rate(runs),
        holder_quotient=report.holder_quotient,
        grad_mu_lp=report.grad_mu_lp if config.spec.d == 1 and config.spec.is_log else None,
        manifest=build_manifest(config, config.spec, settings.CODE_VERSION),
    )

    if out_dir is not None:
        write_json(config, out_dir / "config.json")
        write_json(result.manifest, out_dir / "manifest.json")
        write_json(result, out_dir / "result.json")
        write_rows_csv(
            out_dir / "energies.csv",
            ["N", "t", "E_N", "H_over_N2", "field_energy", "energy_gap"],
            (
                {
                    "N": run.n,
                    "t": t,
                    "E_N": run.E_N[k],
                    "H_over_N2": run.H_over_N2[k],
                    "field_energy": run.field_energy[k],
                    "energy_gap": run.energy_gap[k],
                }
                for run in result.runs
                for k, t in enumerate(run.times)
            ),
        )
        write_plot_script(out_dir, "energies.csv")
    logger.info(f"🏁 {config.name}: нахил {result.rate}")
    return result


def _evolve(field: GridField, times: list[float], config: ExperimentConfig, cfl: float) -> list[GridField]:
    fields = [field]
    for t in times[1:]:
        field = pde_step(field, t - field.t, config.flow, cfl)
        fields.append(field)
    return fields


def run_stability(config: ExperimentConfig, perturbation: Optional[float] = None) -> StabilityReport:
    """D(t) між розв'язками з базової і збуреної густини та оцінка Гронуолла"""
    if perturbation is None:
        perturbation = config.perturbation
    times = sample_times(config)
    base = initial_field(config)
    other = perturbed(base, perturbation)

    first = _evolve(base, times, config, config.grid.cfl)
    second = _evolve(other, times, config, config.grid.cfl)
    refined = _evolve(base, times, config, config.grid.cfl / 2.0)
    floor = max(abs(field_distance(first[-1], refined[-1])), 1e-14)

    distances = [field_distance(a, b) for a, b in zip(first, second)]
    hess = np.array([grid_sample(field).sup_hess_h for field in second])
    constant = config.flow.pair_factor * config.flow.alpha * (config.spec.d + 1)
    integral = np.concatenate([[0.0], np.cumsum(0.5 * (hess[1:] + hess[:-1]) * np.diff(times))])
    envelope = [max(distances[0], 0.0) * math.exp(constant * value) for value in integral]

    within = all(dist <= env * (1.0 + ENVELOPE_MARGIN) + floor for dist, env in zip(distances, envelope))
    at_floor = all(abs(dist) < FLOOR_FACTOR * floor for dist in distances)
    logger.info(f"📈 Стабільність: D(T)={distances[-1]:.3e}, оцінка {envelope[-1]:.3e}, поріг {floor:.1e}")
    return StabilityReport(
        perturbation=perturbation,
        times=times,
        distance=distances,
        envelope=envelope,
        floor=floor,
        constant=constant,
        within_envelope=within,
        at_floor=at_floor,
    )


PLOT_TEMPLATE = '''"""Графік E_N(t) для кожного N"""
import csv
from collections import defaultdict

import matplotlib.pyplot as plt

series = defaultdict(list)
with open("{csv_name}", newline="") as f:
    for row in csv.DictReader(f):
        series[int(row["N"])].append((float(row["t"]), float(row["E_N"])))

for n, points in sorted(series.items()):
    t, e = zip(*points)
    plt.plot(t, e, label=f"N={{n}}")
plt.xlabel("t")
plt.ylabel("E_N(t)")
plt.legend()
plt.savefig("energies.png", dpi=150)
'''


def write_plot_script(out_dir: Path, csv_name: str) -> Path:
    path = out_dir / "plot_energies.py"
    path.write_text(PLOT_TEMPLATE.format(csv_name=csv_name), encoding="utf-8")
    return path
