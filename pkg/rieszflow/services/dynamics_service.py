import logging
from typing import Literal, Optional

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist

from rieszflow.exceptions import CoincidentPointsError, KernelDomainError, VelocityBlowUpError
from rieszflow.models.kernel import KernelSpec
from rieszflow.models.particles import (
    FlowParameters,
    PairwiseEnergy,
    ParticleSystem,
    TrajectoryRecord,
    min_pair_distance,
)
from rieszflow.services.integrator import AdaptiveIntegrator, rk4_solve

logger = logging.getLogger(__name__)

COLLISION_GUARD = 0.25
CHUNK_ROWS = 512
COINCIDENCE_RADIUS = 1e-14

Evaluator = Literal["direct", "cell_list"]


def perp(vectors: np.ndarray) -> np.ndarray:
    """Поворот на +π/2 на площині: (a, b) -> (-b, a)"""
    return np.stack([-vectors[..., 1], vectors[..., 0]], axis=-1)


def _gradient_factor(spec: KernelSpec, r2: np.ndarray) -> np.ndarray:
    """Множник f(r) з ∇g_s(x) = f(|x|)·x; для r = inf дає нуль"""
    if spec.is_log:
        return -1.0 / (spec.c_ds * r2)
    return -spec.s * r2 ** (-(spec.s + 2.0) / 2.0) / spec.c_ds


def pair_gradient_sums(spec: KernelSpec, points: np.ndarray, chunk: int = CHUNK_ROWS) -> np.ndarray:
    """G_i = Σ_{j≠i} ∇g_s(x_i - x_j) прямим підсумовуванням блоками рядків"""
    n = len(points)
    sums = np.zeros_like(points, dtype=float)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        diff = points[start:stop, None, :] - points[None, :, :]
        r2 = np.einsum("ijk,ijk->ij", diff, diff)
        rows = np.arange(start, stop)
        r2[rows - start, rows] = np.inf
        if np.any(r2 < COINCIDENCE_RADIUS**2):
            raise CoincidentPointsError("Two particles coincide")
        sums[start:stop] = np.einsum("ij,ijk->ik", _gradient_factor(spec, r2), diff)
    return sums


def pair_gradient_sums_cell_list(spec: KernelSpec, points: np.ndarray, cutoff: float) -> np.ndarray:
    """Те саме, але лише для пар ближче за cutoff (наближення з екрануванням)"""
    if cutoff <= 0:
        raise ValueError(f"Cutoff must be positive, got {cutoff}")
    tree = cKDTree(points)
    pairs = tree.query_pairs(cutoff, output_type="ndarray")
    sums = np.zeros_like(points, dtype=float)
    if len(pairs) == 0:
        return sums
    diff = points[pairs[:, 0]] - points[pairs[:, 1]]
    r2 = np.einsum("ij,ij->i", diff, diff)
    if np.any(r2 < COINCIDENCE_RADIUS**2):
        raise CoincidentPointsError("Two particles coincide")
    forces = _gradient_factor(spec, r2)[:, None] * diff
    np.add.at(sums, pairs[:, 0], forces)
    np.add.at(sums, pairs[:, 1], -forces)
    return sums


def velocity_parts(
    spec: KernelSpec,
    flow: FlowParameters,
    points: np.ndarray,
    evaluator: Evaluator = "direct",
    cutoff: Optional[float] = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Градієнтна, консервативна і потенціальна складові швидкості"""
    n = len(points)
    if n == 1:
        sums = np.zeros_like(points, dtype=float)
    elif evaluator == "cell_list":
        if cutoff is None:
            raise ValueError("The cell-list evaluator needs a cutoff radius")
        sums = pair_gradient_sums_cell_list(spec, points, cutoff)
    else:
        sums = pair_gradient_sums(spec, points)
    scale = flow.pair_factor / n
    gradient_part = -flow.alpha * scale * sums
    conservative_part = -flow.beta * scale * perp(sums) if flow.beta != 0.0 else np.zeros_like(sums)
    if flow.potential is not None:
        potential_part = -flow.potential.gradient(points)
    else:
        potential_part = np.zeros_like(sums)
    return gradient_part, conservative_part, potential_part


def velocities(sys: ParticleSystem, evaluator: Evaluator = "direct", cutoff: Optional[float] = None) -> np.ndarray:
    """v_i = -(αf/N)Σ∇g - (βf/N)Σ∇^⊥g - ∇V(x_i)"""
    parts = velocity_parts(sys.spec, sys.flow, sys.positions, evaluator, cutoff)
    v = parts[0] + parts[1] + parts[2]
    if not np.all(np.isfinite(v)):
        raise VelocityBlowUpError(f"Non-finite velocity at t={sys.t}")
    return v


def _interaction_energy(spec: KernelSpec, points: np.ndarray) -> float:
    if len(points) < 2:
        return 0.0
    r = pdist(points)
    if np.min(r) < COINCIDENCE_RADIUS:
        raise CoincidentPointsError("Two particles coincide")
    values = -np.log(r) / spec.c_ds if spec.is_log else r ** (-spec.s) / spec.c_ds
    # кожна невпорядкована пара входить двічі
    return 2.0 * float(np.sum(values))


def pairwise_energy(sys: ParticleSystem) -> PairwiseEnergy:
    """H̃_N = Σ_{i≠j} g_s(x_i - x_j) + N·Σ V(x_i), також поділене на N²"""
    interaction = _interaction_energy(sys.spec, sys.positions)
    potential = 0.0
    if sys.flow.potential is not None:
        potential = sys.n * float(np.sum(sys.flow.potential.value(sys.positions)))
    total = interaction + potential
    return PairwiseEnergy(
        interaction=interaction,
        potential=potential,
        total=total,
        normalized=total / sys.n**2,
    )


def hamiltonian(sys: ParticleSystem) -> float:
    return pairwise_energy(sys).total


def center_of_mass(points: np.ndarray) -> np.ndarray:
    return np.mean(points, axis=0)


def dispersion(points: np.ndarray) -> float:
    """N^{-2}Σ_{i≠j}|x_i - x_j|² = 2N^{-1}Σ|x_i - x̄|²"""
    centered = points - center_of_mass(points)
    return 2.0 * float(np.sum(centered * centered)) / len(points)


def expected_dispersion_rate(spec: KernelSpec, n: int, flow: FlowParameters = FlowParameters()) -> float:
    """2αf(N-1)/(N·c_{d,0}); для впорядкованих пар це 4(N-1)/(N·c)"""
    if not spec.is_log:
        raise KernelDomainError("The dispersion identity holds for s=0 only")
    return 2.0 * flow.alpha * flow.pair_factor * (n - 1) / (n * spec.c_ds)


def collision_guard(start: np.ndarray, end: np.ndarray) -> bool:
    """Крок допустимий, якщо жодна пара не зблизилась більше ніж у 4 рази"""
    if len(start) < 2:
        return True
    return bool(np.all(pdist(end) >= COLLISION_GUARD * pdist(start)))


def _rhs(sys: ParticleSystem, evaluator: Evaluator, cutoff: Optional[float]):
    spec, flow = sys.spec, sys.flow

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        parts = velocity_parts(spec, flow, y, evaluator, cutoff)
        v = parts[0] + parts[1] + parts[2]
        if not np.all(np.isfinite(v)):
            raise VelocityBlowUpError(f"Non-finite velocity at t={t}")
        return v

    return rhs


def integrate(
    sys: ParticleSystem,
    t_end: float,
    tol: float = 1e-8,
    sample_dt: Optional[float] = None,
    evaluator: Evaluator = "direct",
    cutoff: Optional[float] = None,
) -> TrajectoryRecord:
    """Інтегрує потік до t_end; sample_dt=None записує кожен прийнятий крок"""
    if t_end <= sys.t:
        raise ValueError(f"t_end={t_end} must be after the current time {sys.t}")
    if sample_dt is not None and sample_dt <= 0:
        raise ValueError(f"Sampling cadence must be positive, got {sample_dt}")

    rhs = _rhs(sys, evaluator, cutoff)
    integrator = AdaptiveIntegrator(rhs, tol=tol, guard=collision_guard)
    samples: list[tuple[float, np.ndarray]] = [(sys.t, np.array(sys.positions))]

    if sample_dt is None:
        integrator.advance(sys.t, sys.positions, t_end, on_step=lambda t, y: samples.append((t, y.copy())))
    else:
        count = int(np.floor((t_end - sys.t) / sample_dt + 1e-9))
        targets = [sys.t + k * sample_dt for k in range(1, count + 1)]
        if not targets or t_end - targets[-1] > 1e-12 * max(1.0, abs(t_end)):
            targets.append(t_end)
        targets[-1] = t_end
        t, y = sys.t, np.array(sys.positions)
        for target in targets:
            y = integrator.advance(t, y, target)
            t = target
            samples.append((t, y.copy()))

    logger.debug(
        f"Інтегрування N={sys.n} до t={t_end}: {integrator.accepted} прийнято, "
        f"{integrator.rejected} відхилено"
    )
    return _build_record(sys, samples, integrator.accepted, integrator.rejected)


def integrate_rk4(sys: ParticleSystem, t_end: float, dt: float) -> np.ndarray:
    """Еталонний розв'язок класичним RK4 з фіксованим кроком"""
    if t_end <= sys.t:
        raise ValueError(f"t_end={t_end} must be after the current time {sys.t}")
    return rk4_solve(_rhs(sys, "direct", None), sys.t, sys.positions, t_end, dt)


def _build_record(
    sys: ParticleSystem,
    samples: list[tuple[float, np.ndarray]],
    accepted: int,
    rejected: int,
) -> TrajectoryRecord:
    times = np.array([t for t, _ in samples])
    positions = np.stack([y for _, y in samples])
    snapshots = [sys.moved(y, t) for t, y in samples]
    return TrajectoryRecord(
        spec=sys.spec,
        flow=sys.flow,
        times=times,
        positions=positions,
        velocities=np.stack([velocities(snap) for snap in snapshots]),
        energies=np.array([hamiltonian(snap) for snap in snapshots]),
        eta=np.array([min_pair_distance(y) for y in positions]),
        com=np.stack([center_of_mass(y) for y in positions]),
        dispersion=np.array([dispersion(y) for y in positions]),
        accepted_steps=accepted,
        rejected_steps=rejected,
    )


def dissipation_residual(record: TrajectoryRecord) -> float:
    """max по інтервалах |ΔH/Δt + (2N/(αf))⟨Σ|v^grad|²⟩| відносно дисипації"""
    flow = record.flow
    if flow.potential is not None or flow.alpha <= 0.0:
        raise ValueError("The dissipation identity needs alpha > 0 and no external potential")
    if len(record.times) < 2:
        return 0.0
    n = record.n
    rates = []
    for y in record.positions:
        gradient_part = velocity_parts(record.spec, flow, y)[0]
        rates.append(float(np.sum(gradient_part * gradient_part)))
    rates = 2.0 * n / (flow.alpha * flow.pair_factor) * np.array(rates)

    dh_dt = np.diff(record.energies) / np.diff(record.times)
    expected = -0.5 * (rates[1:] + rates[:-1])
    scale = np.abs(expected)
    gap = np.abs(dh_dt - expected)
    relative = np.where(scale > 0, gap / np.where(scale > 0, scale, 1.0), np.where(gap > 0, np.inf, 0.0))
    return float(np.max(relative))


def dispersion_rate(record: TrajectoryRecord) -> float:
    """Нахил N^{-2}Σ_{i≠j}|x_ij|² у часі за найменшими квадратами"""
    if not record.spec.is_log:
        raise KernelDomainError("The dispersion identity holds for s=0 only")
    if len(record.times) < 2:
        raise ValueError("At least two samples are needed for a slope")
    slope, _ = np.polyfit(record.times, record.dispersion, 1)
    return float(slope)


def center_of_mass_drift(record: TrajectoryRecord) -> float:
    return float(np.max(np.linalg.norm(record.com - record.com[0], axis=-1)))
