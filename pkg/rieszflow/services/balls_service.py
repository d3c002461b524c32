import logging
from functools import partial
from typing import Optional, Sequence, Union

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import pdist, squareform

from rieszflow.dependencies.workers import pool_map
from rieszflow.exceptions import (
    BallConstructionError,
    InadmissibleEtaError,
    InadmissibleExponentError,
    UncoveredPointError,
)
from rieszflow.models.balls import Ball, BallCollection, MergeEvent
from rieszflow.models.kernel import KernelSpec
from rieszflow.models.particles import ParticleSystem, as_points, min_pair_distance
from rieszflow.models.reports import BallSlack, Cond1Value, ExtendedQuadrature, LowerBoundReport
from rieszflow.services import kernel_service
from rieszflow.services.modenergy_service import DEFAULT_QUADRATURE, region_energy, region_energy_terms

logger = logging.getLogger(__name__)

# Відносний допуск, у межах якого події дотику вважаються одночасними
TIE_TOL = 1e-12

Points = Union[ParticleSystem, np.ndarray, Sequence]


def _points(points: Points, d: Optional[int] = None) -> np.ndarray:
    if isinstance(points, ParticleSystem):
        return np.asarray(points.positions)
    return as_points(points, d)


def eta_N(points: Points) -> float:
    return min_pair_distance(_points(points))


def default_initial_radius(points: np.ndarray, R_target: float, eta_n: Optional[float] = None) -> float:
    """r₀ = min(η_N/4, R/(2N))"""
    if eta_n is None:
        eta_n = min_pair_distance(points)
    return min(eta_n / 4.0, R_target / (2.0 * len(points)))


def _tangency_ratios(centers: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """|c_k - c_l| / (r_k + r_l): множник росту до дотику кожної пари"""
    distances = squareform(pdist(centers))
    ratios = distances / (radii[:, None] + radii[None, :])
    np.fill_diagonal(ratios, np.inf)
    return ratios


class _GrowthState:
    """Поточні кулі процесу росту: центри, радіуси і покриті частинки"""

    def __init__(self, points: np.ndarray, r0: float):
        self.centers = points.copy()
        self.radii = np.full(len(points), r0)
        self.members: list[list[int]] = [[i] for i in range(len(points))]
        self.scale = 1.0
        self.events: list[MergeEvent] = []

    def grow(self, factor: float) -> None:
        self.radii = self.radii * factor
        self.scale *= factor

    def merge_touching(self) -> None:
        """Зливає дотичні й перекриті кулі, поки вони не стануть диз'юнктними"""
        while len(self.radii) > 1:
            touching = _tangency_ratios(self.centers, self.radii) <= 1.0 + TIE_TOL
            if not np.any(touching):
                return
            count, labels = connected_components(csr_matrix(touching), directed=False)
            centers, radii, members = [], [], []
            for label in range(count):
                group = np.flatnonzero(labels == label)
                r = float(np.sum(self.radii[group]))
                c = np.sum(self.radii[group, None] * self.centers[group], axis=0) / r
                if len(group) > 1:
                    parents = [
                        Ball(center=self.centers[k].tolist(), r=float(self.radii[k]), members=self.members[k])
                        for k in group
                    ]
                    self.events.append(MergeEvent(scale=self.scale, parents=parents, center=c.tolist(), r=r))
                    logger.debug(f"🔗 Злиття {len(group)} куль у B({c.round(6).tolist()}, {r:.6g})")
                centers.append(c)
                radii.append(r)
                members.append(sorted(i for k in group for i in self.members[k]))
            order = np.argsort([m[0] for m in members], kind="stable")
            self.centers = np.array(centers)[order]
            self.radii = np.array(radii)[order]
            self.members = [members[k] for k in order]

    def next_event(self) -> float:
        if len(self.radii) < 2:
            return np.inf
        return float(np.min(_tangency_ratios(self.centers, self.radii)))


def grow_and_merge(
    points: Points,
    R_target: float,
    eta_n: Optional[float] = None,
    r0: Optional[float] = None,
) -> BallCollection:
    """Ріст куль спільним множником з негайним злиттям дотичних, до Σr = R_target"""
    X = _points(points)
    n = len(X)
    if eta_n is None:
        eta_n = min_pair_distance(X)
    if eta_n <= 0:
        raise BallConstructionError("Points must be distinct")
    if r0 is None:
        r0 = default_initial_radius(X, R_target, eta_n)
    if not 0.0 < r0 < eta_n / 2.0:
        raise BallConstructionError(f"Initial radius r0={r0} must lie in (0, eta_N/2 = {eta_n / 2.0})")
    if R_target < n * r0:
        raise BallConstructionError(f"R_target={R_target} is smaller than N*r0 = {n * r0}")

    state = _GrowthState(X, r0)
    while True:
        state.merge_touching()
        to_target = R_target / float(np.sum(state.radii))
        event = state.next_event()
        if event > to_target * (1.0 + TIE_TOL):
            state.grow(to_target)
            break
        state.grow(event)

    balls = [
        Ball(center=c.tolist(), r=float(r), members=m) for c, r, m in zip(state.centers, state.radii, state.members)
    ]
    collection = BallCollection(R=R_target, balls=balls, merges=state.events)
    check_coverage(X, collection)
    logger.info(f"⚪ {n} частинок → {len(balls)} куль, R={R_target:.6g}, злиттів {len(state.events)}")
    return collection


def check_coverage(points: Points, balls: BallCollection) -> list[int]:
    """Номер кулі для кожної частинки; UncoveredPointError, якщо частинка поза кулями"""
    owners = []
    for i, x in enumerate(_points(points, balls.d)):
        owner = balls.covering_ball(x)
        if owner is None:
            raise UncoveredPointError(f"Point {i} at {x.tolist()} is not covered by any ball")
        owners.append(owner)
    return owners


def boundary_distances(points: Points, balls: BallCollection) -> np.ndarray:
    """dist(x_i, ∂B) до межі кулі, що містить x_i"""
    X = _points(points, balls.d)
    owners = check_coverage(X, balls)
    return np.array([max(balls.balls[k].distance_to_boundary(x), 0.0) for x, k in zip(X, owners)])


def check_cond2(points: Points, balls: BallCollection, spec: KernelSpec) -> float:
    """N^{-2} Σ g_s^+(dist(x_i, ∂B_N(R)))"""
    distances = boundary_distances(points, balls)
    n = len(distances)
    value = float(np.sum(kernel_service.g_plus(spec, distances))) / n**2
    if not np.isfinite(value):
        logger.warning("⚠️ Частинка лежить на межі кулі: g_s^+ нескінченна")
    return value


def max_admissible_eta(points: Points, balls: Optional[BallCollection] = None) -> float:
    """Найбільше η з 2η < η_N і B(x_i, η) всередині своєї кулі (точна межа, не включно)"""
    X = _points(points)
    bound = min_pair_distance(X) / 2.0
    if balls is not None:
        bound = min(bound, float(np.min(boundary_distances(X, balls))))
    return bound


def _check_cond1_eta(points: np.ndarray, balls: BallCollection, eta: float) -> None:
    limit = max_admissible_eta(points, balls)
    if not 0.0 < eta < limit:
        raise InadmissibleEtaError(f"eta={eta} must lie in (0, {limit:.6g})")


def _cond1_value(
    eta: float,
    points: np.ndarray,
    balls: BallCollection,
    spec: KernelSpec,
    quad: ExtendedQuadrature,
) -> Cond1Value:
    energy = region_energy(points, eta, balls, quad, spec=spec)
    return Cond1Value(eta=eta, value=energy - kernel_service.g(spec, eta) / len(points))


def check_cond1(
    points: Points,
    balls: BallCollection,
    eta_list: Sequence[float],
    spec: KernelSpec,
    quad: ExtendedQuadrature = DEFAULT_QUADRATURE,
    workers: Optional[int] = None,
) -> list[Cond1Value]:
    """region_energy(η) - g_s(η)/N для кожного η"""
    X = _points(points, spec.d)
    for eta in eta_list:
        _check_cond1_eta(X, balls, eta)
    evaluate = partial(_cond1_value, points=X, balls=balls, spec=spec, quad=quad)
    values = pool_map(evaluate, list(eta_list), workers)
    return sorted(values, key=lambda item: -item.eta)


def lower_bound_check(
    points: Points,
    balls: BallCollection,
    eta: float,
    spec: KernelSpec,
    quad: ExtendedQuadrature = DEFAULT_QUADRATURE,
) -> LowerBoundReport:
    """lhs = енергія в кулях, rhs = (1/N)(g_s(η) - g_s(R/N)), також по кожній кулі"""
    if spec.s > 1.0:
        raise InadmissibleExponentError(f"The lower bound is only available for s <= 1, got s={spec.s}")
    X = _points(points, spec.d)
    n = len(X)
    limit = min(min_pair_distance(X), balls.R / n)
    if not 0.0 < eta < limit:
        raise InadmissibleEtaError(f"eta={eta} must satisfy 0 < eta < min(eta_N, R/N) = {limit:.6g}")

    owners = check_coverage(X, balls)
    terms = region_energy_terms(X, eta, balls, quad, spec=spec)
    gap = kernel_service.g(spec, eta) - kernel_service.g(spec, balls.R / n)

    per_ball = []
    for index, (value, _) in enumerate(terms):
        charges = owners.count(index)
        rhs = charges / n**2 * gap
        per_ball.append(BallSlack(index=index, charges=charges, lhs=value, rhs=rhs, slack=value - rhs))

    lhs = float(sum(value for value, _ in terms))
    rhs = gap / n
    report = LowerBoundReport(
        eta=eta,
        lhs=lhs,
        rhs=rhs,
        slack=lhs - rhs,
        balls=per_ball,
        quadrature_error=float(sum(estimate for _, estimate in terms)),
    )
    if report.slack < -max(report.quadrature_error, 1e-4 * abs(rhs)):
        logger.warning(f"⚠️ Нижня оцінка порушена: slack={report.slack:.3e}")
    return report


def radius_schedule(n: int, s: float) -> float:
    """R_N = N^{-(1-s)/(2s)} для s > 0 і N^{-1/2} для s = 0"""
    if not 0.0 <= s < 1.0:
        raise InadmissibleExponentError(f"The radius schedule needs 0 <= s < 1, got s={s}")
    if n < 1:
        raise ValueError(f"N must be positive, got {n}")
    if s == 0.0:
        return n**-0.5
    return n ** (-(1.0 - s) / (2.0 * s))
