"""Confidence sets for the nuisance parameter.

Two providers ship:

* ``FullSpaceProvider`` -- always returns the whole nuisance space. Trivially
  valid at level 1 (gamma = 0) for every nuisance value.

* ``OracleQuantileProvider`` -- the central (gamma/2, 1 - gamma/2) quantile
  interval of a known nuisance distribution, independent of the observation.
  This is valid when the true nuisance values are drawn from that
  distribution, but NOT pointwise: a fixed nuisance value outside the
  interval is never covered. ``coverage_by_nu`` makes that failure visible.

Class-1 events in the analytic scenario carry no nuisance information
(their density is nuisance-free), so providers return the full space for
label 1 and constrain only label 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import genmodel
from .errors import ConfigError, NumericError
from .genmodel import GenerativeConfig, NuisanceSpace, PriorSpec


@dataclass(frozen=True)
class NuisanceRegion:
    """A subset of the nuisance space: disjoint closed intervals or categories."""

    intervals: tuple[tuple[float, float], ...] = ()
    categories: tuple[int, ...] = ()

    def __post_init__(self):
        if self.intervals and self.categories:
            raise ConfigError("a region is either continuous or discrete, not both")
        prev_hi = -np.inf
        for lo, hi in self.intervals:
            if lo > hi or lo < prev_hi:
                raise ConfigError("region intervals must be disjoint and sorted")
            prev_hi = hi

    @property
    def is_empty(self) -> bool:
        return not self.intervals and not self.categories

    def contains(self, nu) -> np.ndarray:
        nu = np.asarray(nu)
        if self.categories:
            return np.isin(nu, np.asarray(self.categories))
        out = np.zeros(np.shape(nu), dtype=bool)
        for lo, hi in self.intervals:
            out |= (nu >= lo) & (nu <= hi)
        return out

    def width(self) -> float:
        return float(sum(hi - lo for lo, hi in self.intervals))

    def to_dict(self) -> dict:
        return {"intervals": [list(iv) for iv in self.intervals], "categories": list(self.categories)}

    @staticmethod
    def from_dict(d: dict) -> "NuisanceRegion":
        return NuisanceRegion(
            intervals=tuple((float(a), float(b)) for a, b in d.get("intervals", [])),
            categories=tuple(int(c) for c in d.get("categories", [])),
        )

    def cache_key(self) -> tuple:
        return (self.intervals, self.categories)


def full_space_set(space: NuisanceSpace) -> NuisanceRegion:
    """The whole nuisance space as a region."""
    if space.is_continuous:
        return NuisanceRegion(intervals=(tuple(space.bounds),))
    return NuisanceRegion(categories=tuple(space.categories))


@dataclass(frozen=True)
class FullSpaceProvider:
    space: NuisanceSpace

    # Regions do not depend on the observation; checkers exploit this.
    x_independent = True

    @property
    def gamma(self) -> float:
        return 0.0

    def region(self, x, y: int) -> NuisanceRegion:
        return full_space_set(self.space)


@dataclass(frozen=True)
class OracleQuantileProvider:
    """Central quantile interval of a known nuisance distribution.

    Only meaningful for continuous distributions with quantiles. With
    gamma = 0 the interval degenerates to the full support.
    """

    gamma: float
    distribution: PriorSpec

    x_independent = True

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError("gamma must lie in [0, 1)")
        if self.distribution.kind == "discrete-weights":
            raise ConfigError("the oracle-quantile provider needs a continuous distribution")

    @property
    def space(self) -> NuisanceSpace:
        return self.distribution.support

    def region(self, x, y: int) -> NuisanceRegion:
        return oracle_quantile_set(self, x, y)


def oracle_quantile_set(provider: OracleQuantileProvider, x, y: int) -> NuisanceRegion:
    """Central (gamma/2, 1 - gamma/2) interval, intersected with the space.

    Independent of x by construction. Label 1 gets the full space: its
    class-conditional density carries no nuisance dependence, so no
    constraint is available or needed.
    """
    space = provider.space
    if y == 1:
        return full_space_set(space)
    g = provider.gamma
    if g == 0.0:
        return full_space_set(space)
    lo = provider.distribution.quantile(g / 2.0)
    hi = provider.distribution.quantile(1.0 - g / 2.0)
    slo, shi = space.bounds
    lo, hi = max(lo, slo), min(hi, shi)
    if not np.isfinite(lo) or not np.isfinite(hi) or hi - lo <= 0.0:
        raise NumericError(f"quantile interval degenerated at gamma={g}: [{lo}, {hi}]")
    return NuisanceRegion(intervals=((float(lo), float(hi)),))


def coverage_by_nu(
    provider,
    config: GenerativeConfig,
    nu_grid,
    n_per_point: int,
    seed: int,
    y: int = 0,
) -> list[dict]:
    """Empirical pointwise coverage of the provider over a nuisance grid.

    For each grid value, draws observations from p(x | y, nu) and reports the
    fraction whose region contains nu. Points more than three binomial
    standard errors below 1 - gamma are flagged.
    """
    if n_per_point < 100:
        raise ConfigError("n_per_point must be >= 100")
    gamma = provider.gamma
    target = 1.0 - gamma
    se = np.sqrt(max(gamma * target, 1e-12) / n_per_point)
    rows = []
    for k, nu in enumerate(np.atleast_1d(np.asarray(nu_grid, dtype=float))):
        xs = genmodel.sample_conditional(config, y, nu, n_per_point, seed, stream_base=16 * (k + 1))
        if getattr(provider, "x_independent", False):
            covered = np.full(n_per_point, bool(provider.region(xs[0], y).contains(nu)))
        else:
            covered = np.fromiter(
                (bool(provider.region(x, y).contains(nu)) for x in xs), dtype=bool, count=n_per_point
            )
        rate = float(np.mean(covered))
        rows.append(
            {
                "nu": float(nu),
                "coverage": rate,
                "target": target,
                "flagged": bool(rate < target - 3.0 * se),
            }
        )
    return rows


def marginal_coverage(
    provider,
    config: GenerativeConfig,
    n: int,
    seed: int,
    y: int = 0,
) -> float:
    """Empirical coverage when nu is drawn from the class-y nuisance prior."""
    if n < 100:
        raise ConfigError("n must be >= 100")
    prior = config.prior_for(y)
    u = genmodel.stream_rng(seed, 7).random(n)
    nus = prior.ppf(u)
    xs = genmodel.sample_conditional_vector(config, y, nus, seed, stream_base=8)
    if getattr(provider, "x_independent", False):
        covered = provider.region(xs[0], y).contains(nus)
    else:
        covered = np.fromiter(
            (bool(provider.region(x, y).contains(nu)) for x, nu in zip(xs, nus)), dtype=bool, count=n
        )
    return float(np.mean(covered))
