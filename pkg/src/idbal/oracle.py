"""Brute-force ground truth on small discrete problems.

Everything here is deliberately exhaustive or Monte Carlo: true errors by
summing over the pool, disagreement balls and regions by enumeration, the
propensity-restricted region by literal subset union when asked, and
estimator checks by resampling the full generative process. The learners
never call into this module; it exists to verify them and the estimators.

Masses and propensities from `random_instance` live on dyadic grids
(denominators 128 and 64), so sums and comparisons are exact in floating
point and independently coded oracles can agree to the last bit.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .data import Example, FeatureVector, LabelSource, LoggedTriple
from .hypotheses import FiniteClass
from .learners import PartitionPlan
from .policies import TablePolicy
from .rng import derive_rng

__all__ = [
    "DiscreteInstance",
    "random_instance",
    "true_error",
    "disagreement_mass",
    "dis_ball",
    "dis_region",
    "s_region",
    "adjusted_dis_coefficient",
    "UnbiasednessReport",
    "mc_unbiasedness",
    "variance_compare",
    "RateReport",
    "concentration_rate",
    "TheoryQuantities",
    "theory_sequences",
    "CheckRow",
    "run_verification_suite",
]


@dataclass(frozen=True)
class DiscreteInstance:
    """A finite generative problem: pool instances with masses, conditional
    label probabilities, a finite hypothesis class over the pool, and the
    logging propensity at each pool instance."""

    pool: tuple[FeatureVector, ...]
    masses: np.ndarray
    p1: np.ndarray
    classifiers: FiniteClass
    q0: np.ndarray

    def __post_init__(self):
        size = len(self.pool)
        masses = np.asarray(self.masses, dtype=float)
        p1 = np.asarray(self.p1, dtype=float)
        q0 = np.asarray(self.q0, dtype=float)
        if masses.shape != (size,) or p1.shape != (size,) or q0.shape != (size,):
            raise ValueError("masses, p1, and q0 must each have one entry per pool instance")
        if (masses < 0).any() or abs(float(masses.sum()) - 1.0) > 1e-12:
            raise ValueError("masses must be nonnegative and sum to 1")
        if ((p1 < 0) | (p1 > 1)).any() or ((q0 < 0) | (q0 > 1)).any():
            raise ValueError("p1 and q0 must be probabilities")
        if self.classifiers.labels.shape[1] != size:
            raise ValueError("hypothesis class pool must match the instance pool")
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "p1", p1)
        object.__setattr__(self, "q0", q0)
        errors = self.classifiers.labels * (1.0 - p1) + (1 - self.classifiers.labels) * p1
        per_member = errors @ masses
        object.__setattr__(self, "_true_errors", per_member)

    @property
    def true_errors(self) -> np.ndarray:
        return self._true_errors

    @property
    def h_star_index(self) -> int:
        return int(np.argmin(self._true_errors))  # first minimum: lowest index

    @property
    def nu(self) -> float:
        return float(self._true_errors[self.h_star_index])

    def logging_policy(self) -> TablePolicy:
        return TablePolicy({x: float(p) for x, p in zip(self.pool, self.q0)})

    def draw_examples(self, rng: np.random.Generator, count: int) -> list[Example]:
        picks = rng.choice(len(self.pool), size=count, p=self.masses)
        labels = rng.random(count) < self.p1[picks]
        return [Example(self.pool[i], int(y)) for i, y in zip(picks, labels)]

    def draw_logged(self, rng: np.random.Generator, count: int) -> list[LoggedTriple]:
        picks = rng.choice(len(self.pool), size=count, p=self.masses)
        labels = rng.random(count) < self.p1[picks]
        reveals = rng.random(count) < self.q0[picks]
        out = []
        for i, y, z in zip(picks, labels, reveals):
            if z:
                out.append(LoggedTriple(self.pool[i], 1, int(y), LabelSource.QUERIED))
            else:
                out.append(LoggedTriple(self.pool[i], 0))
        return out


def random_instance(
    seed: int,
    pool_size: int = 6,
    class_size: int = 8,
    force_low_propensity: bool = False,
) -> DiscreteInstance:
    """Seeded random fixture on dyadic grids (masses in 1/128ths, p1 in
    1/32nds, q0 in 1/64ths, all masses positive, member rows distinct).
    force_low_propensity plants one q0 value at or below 3/64."""
    if class_size > 2**pool_size:
        raise ValueError("cannot place that many distinct members on the pool")
    rng = derive_rng(seed, "fixture")
    pool = tuple(FeatureVector({1: float(i + 1)}) for i in range(pool_size))
    counts = np.ones(pool_size, dtype=int)
    counts += rng.multinomial(128 - pool_size, np.full(pool_size, 1.0 / pool_size))
    masses = counts / 128.0
    p1 = rng.integers(0, 33, pool_size) / 32.0
    rows: list[tuple[int, ...]] = []
    taken = set()
    while len(rows) < class_size:
        row = tuple(int(b) for b in rng.integers(0, 2, pool_size))
        if row not in taken:
            taken.add(row)
            rows.append(row)
    q0 = rng.integers(1, 65, pool_size) / 64.0
    if force_low_propensity:
        q0[rng.integers(0, pool_size)] = rng.integers(1, 4) / 64.0
    hclass = FiniteClass(pool, np.array(rows, dtype=np.int8))
    return DiscreteInstance(pool=pool, masses=masses, p1=p1, classifiers=hclass, q0=q0)


def _member_row(instance: DiscreteInstance, h) -> np.ndarray:
    if isinstance(h, (int, np.integer)):
        return instance.classifiers.labels[int(h)]
    return np.array([int(h.predict(x)) for x in instance.pool], dtype=np.int8)


def true_error(instance: DiscreteInstance, h) -> float:
    """Exact error of a member (by index) or any classifier total on the pool."""
    row = _member_row(instance, h)
    per_point = np.where(row == 1, 1.0 - instance.p1, instance.p1)
    return float(per_point @ instance.masses)


def disagreement_mass(instance: DiscreteInstance, i: int, j: int) -> float:
    """Mass of the pool points where members i and j differ."""
    labels = instance.classifiers.labels
    return float(instance.masses[labels[i] != labels[j]].sum())


def dis_ball(instance: DiscreteInstance, center: int, radius: float) -> tuple[int, ...]:
    """Members within disagreement mass radius of the center, by enumeration."""
    return tuple(
        j
        for j in range(len(instance.classifiers))
        if disagreement_mass(instance, center, j) <= radius
    )


def dis_region(instance: DiscreteInstance, members: Iterable[int]) -> tuple[int, ...]:
    """Pool indices where some pair of the given members disagrees."""
    rows = list(members)
    if not rows:
        return ()
    sub = instance.classifiers.labels[rows]
    mask = sub.min(axis=0) != sub.max(axis=0)
    return tuple(int(i) for i in np.nonzero(mask)[0])


def s_region(
    instance: DiscreteInstance,
    region: Iterable[int],
    alpha: float,
    variant: str = "restricted",
) -> tuple[int, ...]:
    """Propensity-restricted region.

    variant="restricted": region points whose propensity is within 1/alpha of
    the region's propensity floor. variant="literal": the union over all
    nonempty subsets A' of the region of the same filter applied inside A'
    (exhaustive; capped at 20 region points). The literal union always
    contains each point via its own singleton subset, so it equals the
    region; both are provided so that equivalence can be checked rather than
    assumed.
    """
    if alpha <= 0.0:
        raise ValueError("alpha must be positive")
    points = sorted(set(int(i) for i in region))
    if not points:
        return ()
    if variant == "restricted":
        floor = float(instance.q0[points].min())
        return tuple(i for i in points if instance.q0[i] <= floor + 1.0 / alpha)
    if variant == "literal":
        if len(points) > 20:
            raise ValueError("literal variant is exponential; region capped at 20 points")
        keep: set[int] = set()
        for size in range(1, len(points) + 1):
            for subset in itertools.combinations(points, size):
                floor = float(instance.q0[list(subset)].min())
                keep.update(i for i in subset if instance.q0[i] <= floor + 1.0 / alpha)
        return tuple(sorted(keep))
    raise ValueError(f"unknown variant {variant!r}")


def adjusted_dis_coefficient(
    instance: DiscreteInstance,
    r0: float,
    alpha: float,
    variant: str = "restricted",
) -> float:
    """sup over r > r0 of mass(s_region(DIS(ball(h*, r)), alpha)) / r.

    The ball is piecewise constant in r and 1/r is decreasing, so the
    supremum is attained either at one of the achievable disagreement-mass
    values above r0 or in the limit r -> r0 from above; both are enumerated.
    """
    if r0 < 0.0:
        raise ValueError("r0 cannot be negative")
    center = instance.h_star_index
    if r0 < 2.0 * instance.nu - 1e-12:
        raise ValueError("r0 must be at least twice the best achievable error")
    distances = sorted(
        {disagreement_mass(instance, center, j) for j in range(len(instance.classifiers))}
    )

    def mass_at(radius: float) -> float:
        members = dis_ball(instance, center, radius)
        region = dis_region(instance, members)
        kept = s_region(instance, region, alpha, variant)
        return float(instance.masses[list(kept)].sum()) if kept else 0.0

    best = 0.0
    for r in distances:
        if r > r0:
            best = max(best, mass_at(r) / r)
    limit_mass = mass_at(r0)
    if r0 > 0.0:
        best = max(best, limit_mass / r0)
    elif limit_mass > 0.0:
        best = math.inf
    return best


@dataclass(frozen=True)
class UnbiasednessReport:
    mean: float
    stderr: float
    true_value: float
    trials: int

    @property
    def deviation_in_stderr(self) -> float:
        if self.stderr == 0.0:
            return 0.0 if self.mean == self.true_value else math.inf
        return abs(self.mean - self.true_value) / self.stderr


def _simulate_estimates(
    instance: DiscreteInstance,
    h,
    m: int,
    n: int,
    trials: int,
    rng: np.random.Generator,
    q1: np.ndarray | None,
    want_is: bool,
    want_mis: bool,
) -> tuple[np.ndarray | None, np.ndarray | None]:
    """Per-trial estimator values from full resamples of the generative
    process; shared draws when both estimators are requested."""
    row = _member_row(instance, h)
    q0 = instance.q0
    q1 = np.ones(len(instance.pool)) if q1 is None else np.asarray(q1, dtype=float)
    total = m + n
    batch = max(1, int(2e7 // max(total, 1)))
    out_is: list[np.ndarray] = []
    out_mis: list[np.ndarray] = []
    remaining = trials
    while remaining > 0:
        b = min(batch, remaining)
        picks = rng.choice(len(instance.pool), size=(b, total), p=instance.masses)
        # label draw folded into the error event: P(h(x) != Y | x) is exactly
        # the per-point error probability, which is all the estimator sees
        err_prob = np.where(row == 1, 1.0 - instance.p1, instance.p1)
        wrong = rng.random((b, total)) < err_prob[picks]
        reveal_prob = np.concatenate(
            [q0[picks[:, :m]], q1[picks[:, m:]]], axis=1
        )
        revealed = rng.random((b, total)) < reveal_prob
        hits = wrong & revealed
        if want_mis:
            denom = m * q0[picks] + n * q1[picks]
            safe = np.where(denom > 0.0, denom, 1.0)
            out_mis.append(np.where(hits, 1.0 / safe, 0.0).sum(axis=1))
        if want_is:
            safe = np.where(reveal_prob > 0.0, reveal_prob, 1.0)
            out_is.append(np.where(hits, 1.0 / safe, 0.0).sum(axis=1) / total)
        remaining -= b
    return (
        np.concatenate(out_is) if want_is else None,
        np.concatenate(out_mis) if want_mis else None,
    )


def mc_unbiasedness(
    instance: DiscreteInstance,
    h,
    m: int,
    n: int,
    trials: int,
    seed: int = 0,
    q1: np.ndarray | None = None,
    estimator: str = "mis",
) -> UnbiasednessReport:
    """Resample the generative process and report the estimator's empirical
    mean, its standard error, and the exact target."""
    if estimator not in ("mis", "is"):
        raise ValueError(f"unknown estimator {estimator!r}")
    rng = derive_rng(seed, "mc-unbiasedness", estimator)
    est_is, est_mis = _simulate_estimates(
        instance, h, m, n, trials, rng, q1,
        want_is=estimator == "is", want_mis=estimator == "mis",
    )
    values = est_mis if estimator == "mis" else est_is
    mean = float(values.mean())
    stderr = float(values.std(ddof=1) / math.sqrt(trials)) if trials > 1 else math.inf
    return UnbiasednessReport(mean=mean, stderr=stderr, true_value=true_error(instance, h), trials=trials)


def variance_compare(
    instance: DiscreteInstance,
    h,
    m: int,
    n: int,
    trials: int,
    seed: int = 0,
    q1: np.ndarray | None = None,
) -> tuple[float, float]:
    """(variance of the per-phase estimator, variance of the balanced
    estimator) on shared draws."""
    rng = derive_rng(seed, "mc-variance")
    est_is, est_mis = _simulate_estimates(
        instance, h, m, n, trials, rng, q1, want_is=True, want_mis=True
    )
    return float(est_is.var(ddof=1)), float(est_mis.var(ddof=1))


@dataclass(frozen=True)
class RateReport:
    effective_sizes: tuple[int, ...]
    quantiles: tuple[float, ...]
    slope: float


def concentration_rate(
    instance: DiscreteInstance,
    pair: tuple[int, int],
    effective_sizes: Sequence[int],
    trials: int,
    seed: int = 0,
    q1: np.ndarray | None = None,
) -> RateReport:
    """Empirical 0.9-quantile of the deviation of the estimated error gap
    between two members from the true gap, at m = n = N for each N, plus the
    fitted log-log slope (about -1/2 when concentration goes as 1/sqrt(N))."""
    h1, h2 = pair
    gap_true = true_error(instance, h1) - true_error(instance, h2)
    quantiles: list[float] = []
    for size_index, size in enumerate(effective_sizes):
        rng = derive_rng(seed, "mc-rate", size_index)
        row1 = _member_row(instance, h1)
        row2 = _member_row(instance, h2)
        q0 = instance.q0
        qq1 = np.ones(len(instance.pool)) if q1 is None else np.asarray(q1, dtype=float)
        total = 2 * size
        batch = max(1, int(2e7 // total))
        devs: list[np.ndarray] = []
        remaining = trials
        while remaining > 0:
            b = min(batch, remaining)
            picks = rng.choice(len(instance.pool), size=(b, total), p=instance.masses)
            labels = rng.random((b, total)) < instance.p1[picks]
            reveal_prob = np.concatenate([q0[picks[:, :size]], qq1[picks[:, size:]]], axis=1)
            revealed = rng.random((b, total)) < reveal_prob
            denom = size * q0[picks] + size * qq1[picks]
            safe = np.where(denom > 0.0, denom, 1.0)
            wrong1 = row1[picks] != labels
            wrong2 = row2[picks] != labels
            est1 = np.where(wrong1 & revealed, 1.0 / safe, 0.0).sum(axis=1)
            est2 = np.where(wrong2 & revealed, 1.0 / safe, 0.0).sum(axis=1)
            devs.append(np.abs((est1 - est2) - gap_true))
            remaining -= b
        quantiles.append(float(np.quantile(np.concatenate(devs), 0.9)))
    sizes = np.asarray(effective_sizes, dtype=float)
    quant = np.asarray(quantiles)
    if (quant <= 0.0).any():
        slope = math.nan
    else:
        slope = float(np.polyfit(np.log(sizes), np.log(quant), 1)[0])
    return RateReport(tuple(int(s) for s in effective_sizes), tuple(quantiles), slope)


@dataclass(frozen=True)
class TheoryQuantities:
    """Spreadsheet-style evaluation of the deviation-driven sequences on a
    discrete instance, for a given partition plan.

    For k = 1..K (with delta_k = delta / ((k+1)(k+2)) and n_0 = 0):

        zeta_k = max over the previous region of
                 ln(2 * members / delta_k) / (m_{k-1} * q0(x) + n_{k-1})
        eps_k  = gamma2 * zeta_k + gamma2 * sqrt(zeta_k * nu)
        region_k = disagreement region of the ball of radius 2 nu + eps_k

    zeta is the floor-sensitivity constant max over region_1 of
    1 / (alpha * q0(x) + 1).
    """

    nu: float
    h_star_index: int
    zeta_k: tuple[float, ...]
    epsilon_k: tuple[float, ...]
    regions: tuple[tuple[int, ...], ...]
    zeta: float
    alpha: float
    gamma2: float


def theory_sequences(
    instance: DiscreteInstance,
    plan: PartitionPlan,
    delta: float,
    gamma2: float = 1.0,
) -> TheoryQuantities:
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if gamma2 <= 0.0:
        raise ValueError("gamma2 must be positive")
    members = len(instance.classifiers)
    nu = instance.nu
    center = instance.h_star_index
    region = tuple(range(len(instance.pool)))  # region_0 is everything
    zetas: list[float] = []
    epsilons: list[float] = []
    regions: list[tuple[int, ...]] = []
    for k in range(1, plan.K + 1):
        delta_k = delta / ((k + 1) * (k + 2))
        m_prev = plan.m_parts[k - 1]
        n_prev = 0 if k == 1 else plan.n_parts[k - 2]
        numerator = math.log(2.0 * members / delta_k)
        worst = 0.0
        for i in region:
            denominator = m_prev * float(instance.q0[i]) + n_prev
            term = math.inf if denominator <= 0.0 else numerator / denominator
            worst = max(worst, term)
        zeta_k = worst
        eps_k = gamma2 * zeta_k + gamma2 * math.sqrt(zeta_k * nu) if math.isfinite(zeta_k) else math.inf
        ball = dis_ball(instance, center, 2.0 * nu + eps_k)
        region = dis_region(instance, ball)
        zetas.append(zeta_k)
        epsilons.append(eps_k)
        regions.append(region)
    first_region = regions[0] if regions else ()
    zeta = max(
        (1.0 / (plan.alpha * float(instance.q0[i]) + 1.0) for i in first_region),
        default=0.0,
    )
    return TheoryQuantities(
        nu=nu,
        h_star_index=center,
        zeta_k=tuple(zetas),
        epsilon_k=tuple(epsilons),
        regions=tuple(regions),
        zeta=zeta,
        alpha=plan.alpha,
        gamma2=gamma2,
    )


@dataclass(frozen=True)
class CheckRow:
    name: str
    passed: bool
    statistic: float
    threshold: float
    details: str


def run_verification_suite(seed: int = 0, fixtures: int = 20, trials: int = 20000) -> list[CheckRow]:
    """Self-contained estimator and geometry checks; returns one row per check."""
    rows: list[CheckRow] = []
    for i in range(fixtures):
        instance = random_instance(seed=seed * 1000 + i, force_low_propensity=True)
        h = i % len(instance.classifiers)
        for estimator in ("mis", "is"):
            report = mc_unbiasedness(instance, h, m=8, n=8, trials=trials, seed=seed * 77 + i, estimator=estimator)
            rows.append(
                CheckRow(
                    name=f"unbiasedness-{estimator}-{i}",
                    passed=report.deviation_in_stderr <= 4.0,
                    statistic=report.deviation_in_stderr,
                    threshold=4.0,
                    details=f"mean {report.mean:.6g} true {report.true_value:.6g}",
                )
            )
        var_is, var_mis = variance_compare(instance, h, m=8, n=8, trials=trials, seed=seed * 77 + i)
        ratio = var_mis / var_is if var_is > 0.0 else (0.0 if var_mis == 0.0 else math.inf)
        rows.append(
            CheckRow(
                name=f"variance-dominance-{i}",
                passed=ratio <= 1.05,
                statistic=ratio,
                threshold=1.05,
                details=f"var_is {var_is:.6g} var_mis {var_mis:.6g}",
            )
        )
    instance = random_instance(seed=seed, pool_size=6, class_size=8)
    pair = (0, 1)
    rate = concentration_rate(instance, pair, [32, 64, 128, 256, 512], trials=max(trials, 4000), seed=seed)
    rows.append(
        CheckRow(
            name="concentration-slope",
            passed=bool(-0.65 <= rate.slope <= -0.35) if math.isfinite(rate.slope) else False,
            statistic=rate.slope,
            threshold=-0.5,
            details=" ".join(f"{q:.4g}" for q in rate.quantiles),
        )
    )
    mismatch = 0
    monotone_fail = 0
    for i in range(10):
        instance = random_instance(seed=seed * 31 + i)
        r0 = 2.0 * instance.nu
        base = adjusted_dis_coefficient(instance, r0, 1.0)
        for alpha in (2.0, 4.0, 8.0):
            if adjusted_dis_coefficient(instance, r0, alpha) > base + 1e-12:
                monotone_fail += 1
        region = dis_region(instance, tuple(range(len(instance.classifiers))))
        for alpha in (1.0, 2.0, 4.0):
            literal = s_region(instance, region, alpha, variant="literal")
            if literal != tuple(sorted(region)):
                mismatch += 1
    rows.append(
        CheckRow(
            name="theta-alpha-monotone",
            passed=monotone_fail == 0,
            statistic=float(monotone_fail),
            threshold=0.0,
            details="theta(r0, alpha) <= theta(r0, 1) over 10 fixtures",
        )
    )
    rows.append(
        CheckRow(
            name="literal-region-collapse",
            passed=mismatch == 0,
            statistic=float(mismatch),
            threshold=0.0,
            details="literal subset-union region equals the plain region",
        )
    )
    return rows
