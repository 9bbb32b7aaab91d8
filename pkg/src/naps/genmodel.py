"""Synthetic generative processes with exact densities, CDFs and quantiles.

Two scenarios are implemented:

* ``analytic-exponential`` -- a scalar observation x in [0, 1]. Class 1 has
  density e^x / (e - 1); class 0 has a truncated-exponential density
  nu * exp(-nu x) / (1 - exp(-nu)) indexed by a nuisance parameter
  nu in [1, 10]. Both class-conditional CDFs invert in closed form, so
  sampling is exact inverse-CDF transform sampling.

* ``discrete-toy`` -- an 8-dimensional count observation. The nuisance
  parameter is one of four acquisition protocols; counts are independent
  Poissons whose log-rates are linear in (class, protocol). All rate
  constants are fixed below.

Randomness is counter-based (Philox) keyed by ``(seed, stream)``, so every
draw is reproducible regardless of how work is split up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import truncnorm

from .errors import ConfigError, DomainError

E_MINUS_1 = math.e - 1.0

SCENARIO_ANALYTIC = "analytic-exponential"
SCENARIO_DISCRETE = "discrete-toy"

# Sub-stream offsets within one dataset draw.
_STREAM_LABEL = 0
_STREAM_NUISANCE = 1
_STREAM_OBSERVATION = 2

# Discrete-toy constants: 4 protocols, 8 count dimensions. Log-rates are
# base + class_shift * y + protocol_shift[protocol]. Chosen so counts stay
# small (rates between roughly 0.5 and 8) and every (y, protocol) pair is
# distinguishable.
TOY_N_PROTOCOLS = 4
TOY_N_DIMS = 8
TOY_LOG_BASE = np.log(np.array([2.0, 3.5, 1.5, 4.0, 2.5, 1.8, 3.0, 1.2]))
TOY_CLASS_SHIFT = np.array([0.45, -0.30, 0.25, -0.50, 0.35, -0.20, 0.15, -0.40])
TOY_PROTOCOL_SHIFT = np.array(
    [
        [0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00],
        [0.20, -0.10, 0.15, -0.20, 0.10, -0.15, 0.05, -0.10],
        [-0.15, 0.25, -0.10, 0.10, -0.20, 0.20, -0.05, 0.15],
        [0.35, -0.25, 0.30, -0.35, 0.25, -0.30, 0.20, -0.25],
    ]
)

_FLOAT_FMT = "%.17g"


def stream_rng(seed: int, stream: int) -> np.random.Generator:
    """Counter-based generator keyed by (seed, stream).

    Distinct streams are statistically independent, and a given key always
    reproduces the same sequence.
    """
    if seed < 0 or stream < 0:
        raise ConfigError(f"seed and stream must be nonnegative, got ({seed}, {stream})")
    key = np.array([seed, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class NuisanceSpace:
    """Domain of the nuisance parameter: a closed interval or a finite set."""

    kind: str  # "continuous-interval" | "discrete-set"
    bounds: tuple[float, float] | None = None
    categories: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind == "continuous-interval":
            if self.bounds is None or not (self.bounds[0] < self.bounds[1]):
                raise ConfigError(f"continuous nuisance space needs lo < hi, got {self.bounds}")
        elif self.kind == "discrete-set":
            if not self.categories:
                raise ConfigError("discrete nuisance space needs a nonempty category list")
            if len(set(self.categories)) != len(self.categories):
                raise ConfigError("discrete nuisance categories must be unique")
        else:
            raise ConfigError(f"unknown nuisance space kind {self.kind!r}")

    @property
    def is_continuous(self) -> bool:
        return self.kind == "continuous-interval"

    def contains(self, nu) -> np.ndarray:
        nu = np.asarray(nu)
        if self.is_continuous:
            lo, hi = self.bounds
            return (nu >= lo) & (nu <= hi)
        return np.isin(nu, np.asarray(self.categories))

    def to_dict(self) -> dict:
        if self.is_continuous:
            return {"kind": self.kind, "bounds": list(self.bounds)}
        return {"kind": self.kind, "categories": list(self.categories)}

    @staticmethod
    def from_dict(d: dict) -> "NuisanceSpace":
        if d["kind"] == "continuous-interval":
            return NuisanceSpace(kind=d["kind"], bounds=(float(d["bounds"][0]), float(d["bounds"][1])))
        return NuisanceSpace(kind=d["kind"], categories=tuple(int(c) for c in d["categories"]))


ANALYTIC_SPACE = NuisanceSpace(kind="continuous-interval", bounds=(1.0, 10.0))
DISCRETE_SPACE = NuisanceSpace(kind="discrete-set", categories=tuple(range(TOY_N_PROTOCOLS)))


@dataclass(frozen=True)
class PriorSpec:
    """Distribution over the nuisance space.

    ``truncated-gaussian`` is truncated to the support interval and
    renormalized; ``sd`` is the standard deviation of the parent normal.
    """

    kind: str  # "uniform" | "truncated-gaussian" | "discrete-weights" | "point-mass"
    support: NuisanceSpace
    mean: float | None = None
    sd: float | None = None
    weights: tuple[float, ...] | None = None
    value: float | None = None

    def __post_init__(self):
        if self.kind in ("uniform", "truncated-gaussian") and not self.support.is_continuous:
            raise ConfigError(f"{self.kind} prior requires a continuous nuisance space")
        if self.kind == "truncated-gaussian":
            if self.mean is None or self.sd is None or self.sd <= 0:
                raise ConfigError("truncated-gaussian prior needs mean and sd > 0")
        elif self.kind == "discrete-weights":
            if self.support.is_continuous:
                raise ConfigError("discrete-weights prior requires a discrete nuisance space")
            w = self.weights
            if w is None or len(w) != len(self.support.categories):
                raise ConfigError("discrete-weights prior needs one weight per category")
            if any(wi < 0 for wi in w) or abs(sum(w) - 1.0) > 1e-12:
                raise ConfigError("discrete weights must be nonnegative and sum to 1")
        elif self.kind == "point-mass":
            if self.value is None or not bool(np.all(self.support.contains(self.value))):
                raise ConfigError("point-mass prior needs a value inside the support")
        elif self.kind != "uniform":
            raise ConfigError(f"unknown prior kind {self.kind!r}")

    def _tn(self):
        lo, hi = self.support.bounds
        a = (lo - self.mean) / self.sd
        b = (hi - self.mean) / self.sd
        return a, b

    def ppf(self, u: np.ndarray) -> np.ndarray:
        """Quantile transform of u in [0, 1]; used for inverse-CDF sampling."""
        u = np.asarray(u, dtype=float)
        if self.kind == "uniform":
            lo, hi = self.support.bounds
            return lo + u * (hi - lo)
        if self.kind == "truncated-gaussian":
            a, b = self._tn()
            return truncnorm.ppf(u, a, b, loc=self.mean, scale=self.sd)
        if self.kind == "point-mass":
            return np.full_like(u, self.value)
        cum = np.cumsum(self.weights)
        idx = np.searchsorted(cum, u, side="right")
        idx = np.minimum(idx, len(cum) - 1)
        return np.asarray(self.support.categories)[idx]

    def pdf(self, nu: np.ndarray) -> np.ndarray:
        """Density (continuous kinds) or mass (discrete kinds) at nu."""
        nu = np.asarray(nu, dtype=float)
        if self.kind == "uniform":
            lo, hi = self.support.bounds
            return np.where((nu >= lo) & (nu <= hi), 1.0 / (hi - lo), 0.0)
        if self.kind == "truncated-gaussian":
            a, b = self._tn()
            return truncnorm.pdf(nu, a, b, loc=self.mean, scale=self.sd)
        if self.kind == "point-mass":
            return np.where(nu == self.value, np.inf, 0.0)
        cats = np.asarray(self.support.categories, dtype=float)
        w = np.asarray(self.weights)
        scalar = nu.ndim == 0
        nu1 = np.atleast_1d(nu)
        out = np.zeros_like(nu1, dtype=float)
        for c, wi in zip(cats, w):
            out[nu1 == c] = wi
        return out[0] if scalar else out

    def quantile(self, q: float) -> float:
        if self.kind == "discrete-weights":
            raise ConfigError("quantiles are only defined for continuous or point priors")
        return float(self.ppf(np.asarray(q)))

    def mean_value(self) -> float:
        if self.kind == "uniform":
            lo, hi = self.support.bounds
            return 0.5 * (lo + hi)
        if self.kind == "truncated-gaussian":
            a, b = self._tn()
            return float(truncnorm.mean(a, b, loc=self.mean, scale=self.sd))
        if self.kind == "point-mass":
            return float(self.value)
        return float(np.dot(self.weights, np.asarray(self.support.categories, dtype=float)))

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "support": self.support.to_dict()}
        if self.kind == "truncated-gaussian":
            d.update(mean=self.mean, sd=self.sd)
        elif self.kind == "discrete-weights":
            d.update(weights=list(self.weights))
        elif self.kind == "point-mass":
            d.update(value=self.value)
        return d

    @staticmethod
    def from_dict(d: dict) -> "PriorSpec":
        support = NuisanceSpace.from_dict(d["support"])
        kind = d["kind"]
        if kind == "truncated-gaussian":
            return PriorSpec(kind=kind, support=support, mean=float(d["mean"]), sd=float(d["sd"]))
        if kind == "discrete-weights":
            return PriorSpec(kind=kind, support=support, weights=tuple(float(w) for w in d["weights"]))
        if kind == "point-mass":
            return PriorSpec(kind=kind, support=support, value=float(d["value"]))
        return PriorSpec(kind=kind, support=support)


def uniform_prior(space: NuisanceSpace = ANALYTIC_SPACE) -> PriorSpec:
    return PriorSpec(kind="uniform", support=space)


def truncated_gaussian_prior(mean: float, sd: float, space: NuisanceSpace = ANALYTIC_SPACE) -> PriorSpec:
    return PriorSpec(kind="truncated-gaussian", support=space, mean=mean, sd=sd)


def point_mass_prior(value: float, space: NuisanceSpace = ANALYTIC_SPACE) -> PriorSpec:
    return PriorSpec(kind="point-mass", support=space, value=value)


def discrete_prior(weights, space: NuisanceSpace = DISCRETE_SPACE) -> PriorSpec:
    return PriorSpec(kind="discrete-weights", support=space, weights=tuple(weights))


@dataclass(frozen=True)
class GenerativeConfig:
    """Complete description of one joint distribution over (y, nu, x)."""

    scenario: str
    class1_probability: float
    nuisance_prior_class0: PriorSpec
    nuisance_prior_class1: PriorSpec

    def __post_init__(self):
        if self.scenario not in (SCENARIO_ANALYTIC, SCENARIO_DISCRETE):
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if not 0.0 <= self.class1_probability <= 1.0:
            raise ConfigError("class1_probability must lie in [0, 1]")
        if self.nuisance_prior_class0.support != self.nuisance_prior_class1.support:
            raise ConfigError("class priors must share a common nuisance space")
        space = self.nuisance_prior_class0.support
        if self.scenario == SCENARIO_ANALYTIC and not space.is_continuous:
            raise ConfigError("analytic scenario requires a continuous nuisance space")
        if self.scenario == SCENARIO_DISCRETE and space.is_continuous:
            raise ConfigError("discrete toy requires a discrete nuisance space")

    @property
    def nuisance_space(self) -> NuisanceSpace:
        return self.nuisance_prior_class0.support

    def prior_for(self, y: int) -> PriorSpec:
        return self.nuisance_prior_class1 if y == 1 else self.nuisance_prior_class0

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "class1_probability": self.class1_probability,
            "nuisance_prior_class0": self.nuisance_prior_class0.to_dict(),
            "nuisance_prior_class1": self.nuisance_prior_class1.to_dict(),
        }

    @staticmethod
    def from_dict(d: dict) -> "GenerativeConfig":
        return GenerativeConfig(
            scenario=d["scenario"],
            class1_probability=float(d["class1_probability"]),
            nuisance_prior_class0=PriorSpec.from_dict(d["nuisance_prior_class0"]),
            nuisance_prior_class1=PriorSpec.from_dict(d["nuisance_prior_class1"]),
        )


def analytic_config(class1_probability: float, nuisance_prior: PriorSpec) -> GenerativeConfig:
    """Analytic scenario with a shared nuisance prior for both classes."""
    return GenerativeConfig(
        scenario=SCENARIO_ANALYTIC,
        class1_probability=class1_probability,
        nuisance_prior_class0=nuisance_prior,
        nuisance_prior_class1=nuisance_prior,
    )


# ---------------------------------------------------------------------------
# Analytic scenario: densities, CDFs, quantiles.
# ---------------------------------------------------------------------------


def _check_unit_interval(x, name="x"):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise DomainError(f"{name} must lie in [0, 1]")
    return x


def _check_nu(nu):
    nu = np.asarray(nu, dtype=float)
    lo, hi = ANALYTIC_SPACE.bounds
    if np.any(nu < lo) or np.any(nu > hi):
        raise DomainError(f"nu must lie in [{lo}, {hi}]")
    return nu


def density_class1(x):
    """Class-1 density e^x / (e - 1) on [0, 1]; strictly increasing."""
    x = _check_unit_interval(x)
    return np.exp(x) / E_MINUS_1


def density_class0(x, nu):
    """Class-0 density nu e^{-nu x} / (1 - e^{-nu}); strictly decreasing in x."""
    x = _check_unit_interval(x)
    nu = _check_nu(nu)
    return nu * np.exp(-nu * x) / (1.0 - np.exp(-nu))


def cdf_class1(x):
    """P[X <= x | Y=1] = (e^x - 1) / (e - 1)."""
    x = _check_unit_interval(x)
    return np.expm1(x) / E_MINUS_1


def quantile_class1(u):
    """Inverse of :func:`cdf_class1`: log(1 + u (e - 1))."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 0.0) or np.any(u > 1.0):
        raise DomainError("quantile level must lie in [0, 1]")
    # clip away one-ulp overshoot at the support endpoints
    return np.clip(np.log1p(u * E_MINUS_1), 0.0, 1.0)


def cdf_class0(x, nu):
    """P[X <= x | Y=0, nu] = (1 - e^{-nu x}) / (1 - e^{-nu})."""
    x = _check_unit_interval(x)
    nu = _check_nu(nu)
    return -np.expm1(-nu * x) / (1.0 - np.exp(-nu))


def quantile_class0(u, nu):
    """Inverse of :func:`cdf_class0` in x."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 0.0) or np.any(u > 1.0):
        raise DomainError("quantile level must lie in [0, 1]")
    nu = _check_nu(nu)
    return np.clip(-np.log1p(u * np.expm1(-nu)) / nu, 0.0, 1.0)


def survival_class0(x, nu):
    """P[X >= x | Y=0, nu] = (e^{-nu x} - e^{-nu}) / (1 - e^{-nu})."""
    x = _check_unit_interval(x)
    nu = _check_nu(nu)
    return (np.exp(-nu * x) - np.exp(-nu)) / (1.0 - np.exp(-nu))


def upper_quantile_class0(alpha, nu):
    """The x with P[X >= x | Y=0, nu] = alpha: -(1/nu) log(alpha (1-e^{-nu}) + e^{-nu}).

    alpha = 1 maps to the lower support point 0.
    """
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= 0.0) or np.any(alpha > 1.0):
        raise DomainError("upper-quantile level must lie in (0, 1]")
    nu = _check_nu(nu)
    return -np.log(alpha * (1.0 - np.exp(-nu)) + np.exp(-nu)) / nu


# ---------------------------------------------------------------------------
# Discrete toy: Poisson count vectors under four protocols.
# ---------------------------------------------------------------------------


def toy_rates(y: int, protocol) -> np.ndarray:
    """Poisson rate vector(s) for the given class and protocol(s)."""
    protocol = np.asarray(protocol, dtype=int)
    if np.any(protocol < 0) or np.any(protocol >= TOY_N_PROTOCOLS):
        raise DomainError(f"protocol must lie in 0..{TOY_N_PROTOCOLS - 1}")
    log_rate = TOY_LOG_BASE + TOY_CLASS_SHIFT * y + TOY_PROTOCOL_SHIFT[protocol]
    return np.exp(log_rate)


def toy_log_pmf(x: np.ndarray, y: int, protocol) -> np.ndarray:
    """Log-probability of count vectors x (n, 8) under (y, protocol)."""
    from scipy.special import gammaln

    x = np.asarray(x, dtype=float)
    rates = toy_rates(y, protocol)
    if x.ndim == 1:
        x = x[None, :]
    if rates.ndim == 1:
        rates = rates[None, :]
    return np.sum(x * np.log(rates) - rates - gammaln(x + 1.0), axis=-1)


# ---------------------------------------------------------------------------
# Datasets and sampling.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    """Immutable sample of (y, nu, x) rows from one generative configuration."""

    scenario: str
    y: np.ndarray
    nu: np.ndarray
    x: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        for arr in (self.y, self.nu, self.x):
            arr.flags.writeable = False
        if not (len(self.y) == len(self.nu) == len(self.x)):
            raise ConfigError("dataset columns must share one length")

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, mask: np.ndarray) -> "Dataset":
        return Dataset(self.scenario, self.y[mask].copy(), self.nu[mask].copy(), self.x[mask].copy(), self.seed)

    def save(self, path) -> None:
        """Write delimited text; floats keep 17 significant digits."""
        with open(path, "w", encoding="utf-8") as fh:
            if self.scenario == SCENARIO_ANALYTIC:
                fh.write("y,nu,x\n")
                for yi, ni, xi in zip(self.y, self.nu, self.x):
                    fh.write(f"{int(yi)},{_FLOAT_FMT % ni},{_FLOAT_FMT % xi}\n")
            else:
                cols = ",".join(f"x{j + 1}" for j in range(TOY_N_DIMS))
                fh.write(f"y,protocol,{cols}\n")
                for yi, ni, xi in zip(self.y, self.nu, self.x):
                    counts = ",".join(str(int(c)) for c in xi)
                    fh.write(f"{int(yi)},{int(ni)},{counts}\n")

    @staticmethod
    def load(path) -> "Dataset":
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip()
            rows = [line.strip().split(",") for line in fh if line.strip()]
        if header == "y,nu,x":
            y = np.array([int(r[0]) for r in rows], dtype=np.int8)
            nu = np.array([float(r[1]) for r in rows], dtype=float)
            x = np.array([float(r[2]) for r in rows], dtype=float)
            return Dataset(SCENARIO_ANALYTIC, y, nu, x)
        if header.startswith("y,protocol,"):
            y = np.array([int(r[0]) for r in rows], dtype=np.int8)
            nu = np.array([int(r[1]) for r in rows], dtype=np.int64)
            x = np.array([[int(c) for c in r[2:]] for r in rows], dtype=np.int64)
            return Dataset(SCENARIO_DISCRETE, y, nu, x)
        raise ConfigError(f"unrecognized dataset header {header!r} in {path}")


def sample_dataset(config: GenerativeConfig, n: int, seed: int, stream_base: int = 0) -> Dataset:
    """Draw n samples from the configured joint distribution.

    Labels, nuisance values and observations come from three separate
    Philox streams, so the draw is identical no matter how callers batch
    or parallelize around it.
    """
    if n < 1:
        raise ConfigError("n must be >= 1")
    if config.scenario == SCENARIO_DISCRETE:
        return sample_discrete_toy(config, n, seed, stream_base)

    u_label = stream_rng(seed, stream_base + _STREAM_LABEL).random(n)
    u_nu = stream_rng(seed, stream_base + _STREAM_NUISANCE).random(n)
    u_x = stream_rng(seed, stream_base + _STREAM_OBSERVATION).random(n)

    y = (u_label < config.class1_probability).astype(np.int8)
    nu = np.where(
        y == 1,
        config.nuisance_prior_class1.ppf(u_nu),
        config.nuisance_prior_class0.ppf(u_nu),
    )
    x = np.where(y == 1, quantile_class1(u_x), quantile_class0(u_x, nu))
    return Dataset(SCENARIO_ANALYTIC, y, nu, x, seed=seed)


def sample_discrete_toy(config: GenerativeConfig, n: int, seed: int, stream_base: int = 0) -> Dataset:
    """Draw n count-vector samples from the discrete-nuisance toy."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    if config.scenario != SCENARIO_DISCRETE:
        raise ConfigError("sample_discrete_toy requires the discrete-toy scenario")

    u_label = stream_rng(seed, stream_base + _STREAM_LABEL).random(n)
    u_nu = stream_rng(seed, stream_base + _STREAM_NUISANCE).random(n)
    rng_x = stream_rng(seed, stream_base + _STREAM_OBSERVATION)

    y = (u_label < config.class1_probability).astype(np.int8)
    protocol = np.where(
        y == 1,
        config.nuisance_prior_class1.ppf(u_nu),
        config.nuisance_prior_class0.ppf(u_nu),
    ).astype(np.int64)
    rates = np.where((y == 1)[:, None], toy_rates(1, protocol), toy_rates(0, protocol))
    x = rng_x.poisson(lam=rates).astype(np.int64)
    return Dataset(SCENARIO_DISCRETE, y, protocol, x, seed=seed)


def sample_conditional(
    config: GenerativeConfig, y: int, nu, n: int, seed: int, stream_base: int = 0
) -> np.ndarray:
    """Draw n observations x from p(x | y, nu) with nu held fixed."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    rng = stream_rng(seed, stream_base + _STREAM_OBSERVATION)
    if config.scenario == SCENARIO_ANALYTIC:
        u = rng.random(n)
        if y == 1:
            return quantile_class1(u)
        return quantile_class0(u, float(nu))
    rates = toy_rates(y, int(nu))
    return rng.poisson(lam=np.broadcast_to(rates, (n, TOY_N_DIMS))).astype(np.int64)


def sample_conditional_vector(
    config: GenerativeConfig, y: int, nus: np.ndarray, seed: int, stream_base: int = 0
) -> np.ndarray:
    """Draw x_i ~ p(x | y, nu_i) for a vector of nuisance values."""
    nus = np.asarray(nus)
    rng = stream_rng(seed, stream_base + _STREAM_OBSERVATION)
    if config.scenario == SCENARIO_ANALYTIC:
        u = rng.random(len(nus))
        if y == 1:
            return quantile_class1(u)
        return quantile_class0(u, nus.astype(float))
    rates = toy_rates(y, nus.astype(int))
    return rng.poisson(lam=rates).astype(np.int64)
