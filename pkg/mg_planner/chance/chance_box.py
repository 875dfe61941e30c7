"""
Chance-constrained load model reduced to a rectangular uncertainty box

Loads are independent per coordinate. A box holding joint probability 1-eps
gets the same mass (1-eps)^(1/k) on each of its k non-degenerate coordinates,
split equally between both tails.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from scipy.stats import norm

from ..core_model.case import NetworkCase
from ..exceptions import CaseValidationError, ConfigurationError
from ..robust_engine.uncertainty import UncertaintyBox


logger = logging.getLogger(__name__)

MIN_SAMPLES = 10_000


class Family(Enum):
    NORMAL = "normal"     # dispersion = standard deviation
    UNIFORM = "uniform"   # dispersion = half-width


@dataclass(frozen=True)
class LoadDistribution:
    """Independent marginals for every active and reactive load, shapes (n, n_periods)"""
    family: Family
    p_mean: np.ndarray
    q_mean: np.ndarray
    p_dispersion: np.ndarray
    q_dispersion: np.ndarray

    def __post_init__(self):
        arrays = {name: np.array(getattr(self, name), dtype=float)
                  for name in ("p_mean", "q_mean", "p_dispersion", "q_dispersion")}
        shapes = {a.shape for a in arrays.values()}
        if len(shapes) != 1:
            raise ConfigurationError(f"Distribution arrays must share one shape, got {sorted(shapes)}")
        for name, array in arrays.items():
            if not np.all(np.isfinite(array)):
                raise ConfigurationError(f"{name} must be finite")
            array.setflags(write=False)
            object.__setattr__(self, name, array)
        if np.any(self.p_dispersion < 0) or np.any(self.q_dispersion < 0):
            raise ConfigurationError("Dispersions must be >= 0")
        object.__setattr__(self, "family", Family(self.family))

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.p_mean.shape

    @property
    def n_random(self) -> int:
        """Number of non-degenerate coordinates"""
        return int(np.count_nonzero(self.p_dispersion) + np.count_nonzero(self.q_dispersion))

    @classmethod
    def from_case(cls, case: NetworkCase) -> "LoadDistribution":
        """
        Build from the case's `uncertainty` section

        The section reads {"family": "normal"|"uniform"} plus either
        "relative_dispersion" (fraction of each load) or "dispersion" (absolute,
        scalar or per node).
        """
        section = case.uncertainty
        if not section:
            raise CaseValidationError("uncertainty", "section missing; needed for a chance-constrained box")
        try:
            family = Family(section.get("family", "normal"))
        except ValueError:
            raise CaseValidationError("uncertainty.family", f"unknown family {section.get('family')!r}")

        p, q = case.period_loads
        if "relative_dispersion" in section:
            rel = section["relative_dispersion"]
            if not isinstance(rel, (int, float)) or rel < 0:
                raise CaseValidationError("uncertainty.relative_dispersion", "expected a number >= 0")
            p_disp, q_disp = rel * p, rel * np.abs(q)
        elif "dispersion" in section:
            raw = np.asarray(section["dispersion"], dtype=float)
            if raw.ndim == 0:
                p_disp = np.full(p.shape, float(raw))
            elif raw.shape == (case.n,):
                p_disp = np.repeat(raw[:, None], case.n_periods, axis=1)
            else:
                raise CaseValidationError("uncertainty.dispersion", f"expected a scalar or {case.n} values")
            if np.any(p_disp < 0):
                raise CaseValidationError("uncertainty.dispersion", "expected values >= 0")
            ratio = np.divide(np.abs(q), p, out=np.zeros_like(p), where=p > 0)
            q_disp = p_disp * ratio
        else:
            raise CaseValidationError("uncertainty", "needs 'relative_dispersion' or 'dispersion'")
        return cls(family=family, p_mean=p, q_mean=q, p_dispersion=p_disp, q_dispersion=q_disp)

    def coordinate_mass(self, lo: np.ndarray, hi: np.ndarray, mean: np.ndarray, disp: np.ndarray) -> np.ndarray:
        """Probability of [lo, hi] for every coordinate (1 on degenerate coordinates containing the mean)"""
        mass = np.ones(mean.shape)
        random = disp > 0
        if self.family is Family.NORMAL:
            mass[random] = (norm.cdf(hi[random], mean[random], disp[random])
                            - norm.cdf(lo[random], mean[random], disp[random]))
        else:
            a, b = mean[random] - disp[random], mean[random] + disp[random]
            mass[random] = (np.clip(hi[random], a, b) - np.clip(lo[random], a, b)) / (b - a)
        fixed = ~random
        mass[fixed] = ((lo[fixed] <= mean[fixed]) & (mean[fixed] <= hi[fixed])).astype(float)
        return mass

    def sample(self, rng: np.random.Generator, size: int) -> Tuple[np.ndarray, np.ndarray]:
        shape = (size,) + self.shape
        if self.family is Family.NORMAL:
            p = rng.normal(self.p_mean, self.p_dispersion, size=shape)
            q = rng.normal(self.q_mean, self.q_dispersion, size=shape)
        else:
            p = rng.uniform(self.p_mean - self.p_dispersion, self.p_mean + self.p_dispersion, size=shape)
            q = rng.uniform(self.q_mean - self.q_dispersion, self.q_mean + self.q_dispersion, size=shape)
        return p, q


def _half_width(family: Family, disp: np.ndarray, mass: float) -> np.ndarray:
    if family is Family.NORMAL:
        return norm.ppf(0.5 * (1.0 + mass)) * disp
    return mass * disp


def chance_box(dist: LoadDistribution, epsilon: float) -> UncertaintyBox:
    """
    Equal-tail box holding probability 1 - epsilon

    Args:
        dist: Independent load marginals
        epsilon: Allowed violation probability, 0 < epsilon < 1

    Returns:
        UncertaintyBox; degenerate coordinates collapse to their mean
    """
    if not 0.0 < epsilon < 1.0:
        raise ConfigurationError(f"epsilon must lie in (0, 1), got {epsilon}")
    k = dist.n_random
    if k == 0:
        logger.info("All load dispersions are zero; the box is the deterministic point")
        return UncertaintyBox(p_lo=dist.p_mean, p_hi=dist.p_mean, q_lo=dist.q_mean, q_hi=dist.q_mean)

    mass = (1.0 - epsilon) ** (1.0 / k)
    hp = _half_width(dist.family, dist.p_dispersion, mass)
    hq = _half_width(dist.family, dist.q_dispersion, mass)
    logger.debug(f"Chance box: {k} random coordinates, per-coordinate mass {mass:.12f}")
    return UncertaintyBox(p_lo=dist.p_mean - hp, p_hi=dist.p_mean + hp,
                          q_lo=dist.q_mean - hq, q_hi=dist.q_mean + hq)


def box_mass(dist: LoadDistribution, box: UncertaintyBox) -> float:
    """Joint probability of the box under independent marginals"""
    mp = dist.coordinate_mass(box.p_lo, box.p_hi, dist.p_mean, dist.p_dispersion)
    mq = dist.coordinate_mass(box.q_lo, box.q_hi, dist.q_mean, dist.q_dispersion)
    return float(np.prod(mp) * np.prod(mq))


def verify_coverage(dist: LoadDistribution, box: UncertaintyBox, samples: int = 100_000, seed: int = 0,
                    blocks: int = 4, workers: Optional[int] = None) -> float:
    """
    Monte Carlo estimate of the probability that a draw lands in the box

    Args:
        dist: Load marginals
        box: Box to check
        samples: Number of draws (>= 10^4)
        seed: Root seed; each block gets its own spawned stream
        blocks: Number of independent sample blocks
        workers: Threads used over the blocks (defaults to blocks)

    Returns:
        Fraction of draws inside the box, reproducible for a fixed seed
    """
    if samples < MIN_SAMPLES:
        raise ConfigurationError(f"verify_coverage needs at least {MIN_SAMPLES} samples, got {samples}")
    if blocks < 1:
        raise ConfigurationError(f"blocks must be >= 1, got {blocks}")
    if box.shape != dist.shape:
        raise ConfigurationError(f"Box shape {box.shape} does not match distribution shape {dist.shape}")

    sizes = [samples // blocks + (1 if b < samples % blocks else 0) for b in range(blocks)]
    children = np.random.SeedSequence(seed).spawn(blocks)
    tol = 1e-12

    def count(block: int) -> int:
        rng = np.random.default_rng(children[block])
        p, q = dist.sample(rng, sizes[block])
        inside = ((p >= box.p_lo - tol) & (p <= box.p_hi + tol)
                  & (q >= box.q_lo - tol) & (q <= box.q_hi + tol))
        return int(inside.reshape(sizes[block], -1).all(axis=1).sum())

    with ThreadPoolExecutor(max_workers=workers or blocks) as pool:
        hits = sum(pool.map(count, range(blocks)))
    coverage = hits / samples
    logger.info(f"Coverage {coverage:.5f} over {samples} samples (seed {seed})")
    return coverage
