"""Probabilistic classifiers and the Bayes-factor test statistic.

The analytic classifier evaluates P(Y=1 | x) exactly, marginalizing the
class-0 nuisance parameter over its training prior with adaptive
Gauss-Kronrod quadrature (absolute tolerance 1e-9, enforced per point).
A histogram classifier provides an estimated posterior so the full
pipeline can also be exercised with a fitted model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad_vec
from scipy.optimize import brentq

from . import genmodel
from .errors import ConfigError, DomainError, NumericError
from .genmodel import SCENARIO_ANALYTIC, Dataset, GenerativeConfig, PriorSpec

POSTERIOR_CLIP = 1e-12

# Keeps peak memory of vectorized quadrature bounded.
_CHUNK = 1 << 18


def _marginal_density_class0(x: np.ndarray, prior: PriorSpec, tol: float) -> np.ndarray:
    """Integral of the class-0 density over the nuisance prior, per x."""
    if prior.kind == "point-mass":
        return genmodel.density_class0(x, prior.value)
    lo, hi = prior.support.bounds

    def integrand(nu):
        return genmodel.density_class0(x, nu) * prior.pdf(nu)

    result, err = quad_vec(integrand, lo, hi, epsabs=tol, epsrel=0.0, norm="max")
    if not np.isfinite(err) or err > 100.0 * tol:
        raise NumericError(
            f"nuisance quadrature did not converge: reported error {err:.3e} at tolerance {tol:.1e}"
        )
    return result


@dataclass(frozen=True)
class AnalyticMarginalClassifier:
    """Exact P(Y=1 | x) under a known generative configuration.

    The class-0 density is marginalized over the configured training prior;
    the class-1 density is nuisance-free in both scenarios' class-1 branch
    of the analytic model, so no integral is needed there.
    """

    config: GenerativeConfig
    quad_tol: float = 1e-9

    @property
    def kind(self) -> str:
        return "analytic-marginal"

    @property
    def class1_prior(self) -> float:
        return self.config.class1_probability

    def _joint_components(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        p1 = self.config.class1_probability
        if self.config.scenario == SCENARIO_ANALYTIC:
            num1 = p1 * genmodel.density_class1(x)
            num0 = (1.0 - p1) * _marginal_density_class0(x, self.config.nuisance_prior_class0, self.quad_tol)
            return num1, num0
        # Discrete toy: finite mixture over protocols.
        prior0 = self.config.nuisance_prior_class0
        prior1 = self.config.nuisance_prior_class1
        x2d = np.asarray(x)
        if x2d.ndim == 1:
            x2d = x2d[None, :]
        num1 = np.zeros(len(x2d))
        num0 = np.zeros(len(x2d))
        for j, cat in enumerate(prior0.support.categories):
            w0 = prior0.pdf(np.asarray(float(cat)))
            w1 = prior1.pdf(np.asarray(float(cat)))
            num0 += (1.0 - p1) * float(w0) * np.exp(genmodel.toy_log_pmf(x2d, 0, cat))
            num1 += p1 * float(w1) * np.exp(genmodel.toy_log_pmf(x2d, 1, cat))
        return num1, num0

    def posterior1(self, x) -> np.ndarray:
        """P(Y=1 | x), vectorized; chunked to bound quadrature memory."""
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        if self.config.scenario == SCENARIO_ANALYTIC:
            flat = np.atleast_1d(x)
            out = np.empty_like(flat)
            for start in range(0, len(flat), _CHUNK):
                chunk = flat[start : start + _CHUNK]
                num1, num0 = self._joint_components(chunk)
                out[start : start + _CHUNK] = num1 / (num1 + num0)
            return float(out[0]) if scalar else out
        num1, num0 = self._joint_components(x)
        out = num1 / (num1 + num0)
        return float(out[0]) if np.asarray(x).ndim == 1 else out

    def posterior1_given_nu(self, x, nu) -> np.ndarray:
        """P(Y=1 | x, nu) at a fixed nuisance value."""
        p1 = self.config.class1_probability
        if self.config.scenario == SCENARIO_ANALYTIC:
            num1 = p1 * genmodel.density_class1(x)
            num0 = (1.0 - p1) * genmodel.density_class0(x, nu)
            return num1 / (num1 + num0)
        x2d = np.asarray(x)
        one = x2d.ndim == 1
        if one:
            x2d = x2d[None, :]
        num1 = p1 * np.exp(genmodel.toy_log_pmf(x2d, 1, int(nu)))
        num0 = (1.0 - p1) * np.exp(genmodel.toy_log_pmf(x2d, 0, int(nu)))
        out = num1 / (num1 + num0)
        return float(out[0]) if one else out

    def posterior_mean_nu(self, x) -> np.ndarray:
        """Posterior mean of the nuisance parameter given x, mixing over classes.

        E[nu | x] = [p1 f1(x) m1 + p0 ∫ nu f0(x; nu) dπ0(nu)] / [p1 f1(x) + p0 ∫ f0(x; nu) dπ0(nu)]
        where m1 is the class-1 prior mean (the class-1 density carries no
        nuisance information).
        """
        if self.config.scenario != SCENARIO_ANALYTIC:
            raise ConfigError("posterior_mean_nu is defined for the analytic scenario only")
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        flat = np.atleast_1d(x)
        p1 = self.config.class1_probability
        prior0 = self.config.nuisance_prior_class0
        m1 = self.config.nuisance_prior_class1.mean_value()
        out = np.empty_like(flat)
        for start in range(0, len(flat), _CHUNK):
            chunk = flat[start : start + _CHUNK]
            f1 = genmodel.density_class1(chunk)
            if prior0.kind == "point-mass":
                f0bar = genmodel.density_class0(chunk, prior0.value)
                nu_f0bar = prior0.value * f0bar
            else:
                lo, hi = prior0.support.bounds

                def integrand(nu):
                    core = genmodel.density_class0(chunk, nu) * prior0.pdf(nu)
                    return np.concatenate([core, nu * core])

                res, err = quad_vec(integrand, lo, hi, epsabs=self.quad_tol, epsrel=0.0, norm="max")
                if not np.isfinite(err) or err > 100.0 * self.quad_tol:
                    raise NumericError(f"posterior-mean quadrature did not converge (error {err:.3e})")
                f0bar, nu_f0bar = res[: len(chunk)], res[len(chunk) :]
            num = p1 * f1 * m1 + (1.0 - p1) * nu_f0bar
            den = p1 * f1 + (1.0 - p1) * f0bar
            out[start : start + _CHUNK] = num / den
        return float(out[0]) if scalar else out

    def to_dict(self) -> dict:
        return {"kind": self.kind, "config": self.config.to_dict(), "quad_tol": self.quad_tol}


@dataclass(frozen=True)
class HistogramClassifier:
    """Per-bin class-1 frequency with add-one smoothing.

    Evaluation clamps x into the nearest bin, so the posterior is defined on
    the whole real line and stays strictly inside (0, 1).
    """

    bin_edges: np.ndarray
    bin_posterior: np.ndarray
    class1_prior: float

    @property
    def kind(self) -> str:
        return "histogram"

    def posterior1(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.bin_edges, x, side="right") - 1
        idx = np.clip(idx, 0, len(self.bin_posterior) - 1)
        out = self.bin_posterior[idx]
        return float(out) if x.ndim == 0 else out

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "bin_edges": self.bin_edges.tolist(),
            "bin_posterior": self.bin_posterior.tolist(),
            "class1_prior": self.class1_prior,
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    @staticmethod
    def from_dict(d: dict) -> "HistogramClassifier":
        return HistogramClassifier(
            bin_edges=np.asarray(d["bin_edges"], dtype=float),
            bin_posterior=np.asarray(d["bin_posterior"], dtype=float),
            class1_prior=float(d["class1_prior"]),
        )

    @staticmethod
    def load(path) -> "HistogramClassifier":
        with open(path, "r", encoding="utf-8") as fh:
            return HistogramClassifier.from_dict(json.load(fh))


def fit_histogram_classifier(dataset: Dataset, n_bins: int) -> HistogramClassifier:
    """Fit per-bin smoothed class-1 frequencies on [0, 1]."""
    if len(dataset) == 0:
        raise ConfigError("cannot fit a histogram classifier on an empty dataset")
    if n_bins < 1:
        raise ConfigError("n_bins must be >= 1")
    if dataset.scenario != SCENARIO_ANALYTIC:
        raise ConfigError("the histogram classifier applies to scalar observations in [0, 1]")
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    idx = np.clip(np.searchsorted(edges, dataset.x, side="right") - 1, 0, n_bins - 1)
    total = np.bincount(idx, minlength=n_bins).astype(float)
    ones = np.bincount(idx, weights=(dataset.y == 1).astype(float), minlength=n_bins)
    posterior = (ones + 1.0) / (total + 2.0)
    return HistogramClassifier(
        bin_edges=edges,
        bin_posterior=posterior,
        class1_prior=float(np.mean(dataset.y == 1)),
    )


def load_classifier(path) -> AnalyticMarginalClassifier | HistogramClassifier:
    with open(path, "r", encoding="utf-8") as fh:
        d = json.load(fh)
    if d["kind"] == "histogram":
        return HistogramClassifier.from_dict(d)
    if d["kind"] == "analytic-marginal":
        return AnalyticMarginalClassifier(
            config=GenerativeConfig.from_dict(d["config"]), quad_tol=float(d["quad_tol"])
        )
    raise ConfigError(f"unknown classifier kind {d['kind']!r}")


def save_classifier(model, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh, indent=2, sort_keys=True)


def bayes_factor_from_posterior(p_y: np.ndarray, prior_y: float, clip: float = POSTERIOR_CLIP):
    """Posterior-to-prior odds ratio, with clipping for boundary posteriors.

    Returns the statistic together with a mask marking entries whose
    posterior had to be clipped into [clip, 1 - clip].
    """
    if not 0.0 < prior_y < 1.0:
        raise DomainError("class prior must lie strictly inside (0, 1)")
    p_y = np.asarray(p_y, dtype=float)
    clipped = (p_y < clip) | (p_y > 1.0 - clip)
    p = np.clip(p_y, clip, 1.0 - clip)
    tau = (p * (1.0 - prior_y)) / ((1.0 - p) * prior_y)
    return tau, clipped


def bayes_factor(model, y: int, x, clip: float = POSTERIOR_CLIP) -> np.ndarray:
    """Bayes-factor statistic for label y at observation(s) x.

    The posterior odds of label y divided by its prior odds,
    [P(Y=y|x) P(Y != y)] / [P(Y != y|x) P(Y=y)]: a strictly increasing
    transform of the label-y posterior.
    """
    tau, _ = bayes_factor_with_flags(model, y, x, clip)
    return tau


def bayes_factor_with_flags(model, y: int, x, clip: float = POSTERIOR_CLIP):
    if y not in (0, 1):
        raise DomainError("label must be 0 or 1")
    p1 = np.asarray(model.posterior1(x), dtype=float)
    p_y = p1 if y == 1 else 1.0 - p1
    prior_y = model.class1_prior if y == 1 else 1.0 - model.class1_prior
    return bayes_factor_from_posterior(p_y, prior_y, clip)


def bayes_factor_statistic(model, y: int):
    """Statistic callable lambda(x) for use with the rejection machinery."""

    def stat(x):
        return bayes_factor(model, y, x)

    stat.statistic_id = f"bayes-factor-{y}"
    return stat


def x_at_bayes_factor(model, y: int, value: float, tol: float = 1e-12) -> float:
    """Invert the Bayes-factor statistic back to x-space.

    Valid for the analytic scenario, where the posterior (hence the
    statistic) is strictly monotone in x. Values outside the attainable
    range clamp to the corresponding endpoint.
    """
    lo_val = float(bayes_factor(model, y, 0.0))
    hi_val = float(bayes_factor(model, y, 1.0))
    lo, hi = (lo_val, hi_val) if lo_val <= hi_val else (hi_val, lo_val)
    if value <= lo:
        return 0.0 if lo_val <= hi_val else 1.0
    if value >= hi:
        return 1.0 if lo_val <= hi_val else 0.0
    return float(brentq(lambda x: float(bayes_factor(model, y, x)) - value, 0.0, 1.0, xtol=tol))
