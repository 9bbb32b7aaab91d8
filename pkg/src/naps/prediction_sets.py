"""Set-valued classifiers: nuisance-aware prediction sets and baselines.

A prediction set is a subset of {0, 1}. The nuisance-aware classifier
includes label y exactly when its Bayes-factor statistic exceeds a cutoff
obtained by inverting the label's rejection surface over a nuisance
confidence set. Baselines cover the standard single-cutoff construction,
class-conditional cutoffs, the cost-weighted point classifier, and a
plug-in variant that calibrates per nuisance bin but selects the bin with a
point estimate of the nuisance parameter (intentionally invalid; it exists
to quantify how badly point estimation fails).

Calibration quantiles use the lower empirical quantile: with n scores, the
level-alpha cutoff is the ceil(alpha * n)-th smallest. This is the
conservative choice for coverage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .classifier import bayes_factor_with_flags
from .cutoffs import (
    MODE_FPR,
    SCOPE_CONFIDENCE_SET,
    CutoffRequest,
    cutoff_for_region,
)
from .errors import ConfigError, SaturationError
from .genmodel import Dataset
from .rejection import NuBinning, RejectionSurface

_FLOAT_FMT = "%.17g"


@dataclass(frozen=True)
class LabelDecision:
    included: bool
    statistic: float
    cutoff: float | None
    saturated: bool = False
    clipped: bool = False


@dataclass(frozen=True)
class PredictionSet:
    """Subset of {0, 1} with the per-label audit trail."""

    members: tuple[int, ...]
    decisions: tuple[LabelDecision, LabelDecision]

    @property
    def is_empty(self) -> bool:
        return len(self.members) == 0

    @property
    def is_ambiguous(self) -> bool:
        return len(self.members) == 2

    def __contains__(self, label: int) -> bool:
        return label in self.members


def _members(include0: bool, include1: bool) -> tuple[int, ...]:
    out = []
    if include0:
        out.append(0)
    if include1:
        out.append(1)
    return tuple(out)


def lower_quantile(sorted_scores: np.ndarray, alpha: float) -> float:
    """ceil(alpha n)-th smallest of pre-sorted scores (1-based), floored at 1."""
    n = len(sorted_scores)
    if n == 0:
        raise ConfigError("cannot take a quantile of zero scores")
    k = int(math.ceil(alpha * n - 1e-9))
    k = min(max(k, 1), n)
    return float(sorted_scores[k - 1])


# ---------------------------------------------------------------------------
# Nuisance-aware prediction sets.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NapsSetClassifier:
    """Amortized set-valued classifier.

    Surfaces and providers are fitted once and treated as read-only;
    predictions for any number of points and any alpha reuse them without
    refitting. A saturated cutoff inversion includes the affected label
    (conservative for coverage) and flags the decision.
    """

    model: object
    surfaces: dict[int, RejectionSurface]
    providers: dict[int, object]

    def predict(self, x, alpha: float, gamma: float = 0.0) -> PredictionSet:
        batch = self.predict_batch(np.asarray([x], dtype=float), alpha, gamma)
        return batch.prediction_set(0)

    def predict_batch(self, xs, alpha: float, gamma: float = 0.0) -> "BatchPredictions":
        xs = np.asarray(xs, dtype=float)
        stats = {}
        clipped = {}
        cuts = {}
        saturated = {}
        for y in (0, 1):
            provider = self.providers[y]
            pgamma = getattr(provider, "gamma", None)
            if pgamma is not None and gamma != pgamma:
                raise ConfigError(
                    f"gamma={gamma} disagrees with the label-{y} provider's level {pgamma}"
                )
            stats[y], clipped[y] = bayes_factor_with_flags(self.model, y, xs)
            request = CutoffRequest(
                null_label=y,
                alpha=alpha,
                gamma=gamma,
                mode=MODE_FPR,
                scope=SCOPE_CONFIDENCE_SET,
                provider=provider,
            )
            cuts[y], saturated[y] = self._cutoffs(xs, request, provider, y)
        include0 = (stats[0] > cuts[0]) | saturated[0]
        include1 = (stats[1] > cuts[1]) | saturated[1]
        return BatchPredictions(
            x=xs,
            statistic0=stats[0],
            statistic1=stats[1],
            cutoff0=cuts[0],
            cutoff1=cuts[1],
            include0=include0,
            include1=include1,
            saturated0=saturated[0],
            saturated1=saturated[1],
            clipped0=clipped[0],
            clipped1=clipped[1],
        )

    def _cutoffs(self, xs, request: CutoffRequest, provider, y: int):
        """Per-point cutoffs; regions repeat across points, so results are
        cached by region identity."""
        surface = self.surfaces[y]
        cache: dict[tuple, tuple[float, bool]] = {}
        cut = np.empty(len(xs))
        sat = np.zeros(len(xs), dtype=bool)
        for i, x in enumerate(xs):
            region = provider.region(x, y)
            key = region.cache_key()
            if key not in cache:
                try:
                    cache[key] = (cutoff_for_region(surface, region, request).cutoff, False)
                except SaturationError:
                    cache[key] = (np.inf, True)
            cut[i], sat[i] = cache[key]
        return cut, sat


@dataclass(frozen=True)
class BatchPredictions:
    """Columnar batch output with the full audit trail."""

    x: np.ndarray
    statistic0: np.ndarray
    statistic1: np.ndarray
    cutoff0: np.ndarray
    cutoff1: np.ndarray
    include0: np.ndarray
    include1: np.ndarray
    saturated0: np.ndarray
    saturated1: np.ndarray
    clipped0: np.ndarray
    clipped1: np.ndarray

    def __len__(self) -> int:
        return len(self.x)

    def prediction_set(self, i: int) -> PredictionSet:
        d0 = LabelDecision(
            bool(self.include0[i]), float(self.statistic0[i]), float(self.cutoff0[i]),
            bool(self.saturated0[i]), bool(self.clipped0[i]),
        )
        d1 = LabelDecision(
            bool(self.include1[i]), float(self.statistic1[i]), float(self.cutoff1[i]),
            bool(self.saturated1[i]), bool(self.clipped1[i]),
        )
        return PredictionSet(_members(d0.included, d1.included), (d0, d1))

    def members_column(self) -> list[str]:
        out = []
        for i0, i1 in zip(self.include0, self.include1):
            out.append("01" if (i0 and i1) else ("0" if i0 else ("1" if i1 else "")))
        return out

    def save(self, path) -> None:
        """Delimited text: x, per-label statistics and cutoffs, membership, flags."""
        members = self.members_column()
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("x,statistic0,statistic1,cutoff0,cutoff1,members,flags\n")
            for i in range(len(self)):
                flags = []
                if self.saturated0[i] or self.saturated1[i]:
                    flags.append("saturated")
                if self.clipped0[i] or self.clipped1[i]:
                    flags.append("clipped")
                if members[i] == "":
                    flags.append("empty")
                fh.write(
                    ",".join(
                        [
                            _FLOAT_FMT % self.x[i],
                            _FLOAT_FMT % self.statistic0[i],
                            _FLOAT_FMT % self.statistic1[i],
                            _FLOAT_FMT % self.cutoff0[i],
                            _FLOAT_FMT % self.cutoff1[i],
                            members[i],
                            "|".join(flags),
                        ]
                    )
                    + "\n"
                )


def naps_predict(
    x,
    alpha: float,
    surfaces: dict[int, RejectionSurface],
    providers: dict[int, object],
    model,
    gamma: float = 0.0,
) -> PredictionSet:
    """One-shot nuisance-aware prediction set for a single observation."""
    clf = NapsSetClassifier(model=model, surfaces=surfaces, providers=providers)
    return clf.predict(x, alpha, gamma)


# ---------------------------------------------------------------------------
# Baselines.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StandardSetsBaseline:
    """Single cutoff on the true-label posterior score, calibrated marginally."""

    sorted_scores: np.ndarray

    @classmethod
    def fit(cls, model, calibration: Dataset) -> "StandardSetsBaseline":
        if len(calibration) == 0:
            raise ConfigError("standard sets need a nonempty calibration set")
        p1 = np.asarray(model.posterior1(calibration.x), dtype=float)
        scores = np.where(calibration.y == 1, p1, 1.0 - p1)
        return cls(sorted_scores=np.sort(scores))

    def cutoff(self, alpha: float) -> float:
        return lower_quantile(self.sorted_scores, alpha)

    def include_batch(self, p1_eval: np.ndarray, alpha: float) -> tuple[np.ndarray, np.ndarray]:
        c = self.cutoff(alpha)
        return (1.0 - p1_eval) > c, p1_eval > c


@dataclass(frozen=True)
class ClassConditionalBaseline:
    """Per-class cutoffs on per-class posterior scores."""

    sorted_scores0: np.ndarray
    sorted_scores1: np.ndarray

    @classmethod
    def fit(cls, model, calibration: Dataset) -> "ClassConditionalBaseline":
        p1 = np.asarray(model.posterior1(calibration.x), dtype=float)
        m0 = calibration.y == 0
        m1 = calibration.y == 1
        if not np.any(m0) or not np.any(m1):
            raise ConfigError("class-conditional sets need calibration samples of both classes")
        return cls(
            sorted_scores0=np.sort(1.0 - p1[m0]),
            sorted_scores1=np.sort(p1[m1]),
        )

    def cutoffs(self, alpha: float) -> tuple[float, float]:
        return (
            lower_quantile(self.sorted_scores0, alpha),
            lower_quantile(self.sorted_scores1, alpha),
        )

    def include_batch(self, p1_eval: np.ndarray, alpha: float) -> tuple[np.ndarray, np.ndarray]:
        c0, c1 = self.cutoffs(alpha)
        return (1.0 - p1_eval) > c0, p1_eval > c1


@dataclass(frozen=True)
class PlugInConditionalBaseline:
    """Class-conditional cutoffs per nuisance bin, looked up at a point estimate.

    Calibration scores are the nuisance-conditional posteriors evaluated at
    each sample's own posterior-mean nuisance estimate, grouped by the
    sample's true nuisance bin. At prediction time the bin is chosen by the
    estimate instead, which is exactly why this construction undercovers:
    the estimate systematically lands in bins whose score distribution does
    not match the event's true one.
    """

    binning: NuBinning
    cell_scores0: tuple[np.ndarray | None, ...]
    cell_scores1: tuple[np.ndarray | None, ...]

    @classmethod
    def fit(cls, model, calibration: Dataset, binning: NuBinning) -> "PlugInConditionalBaseline":
        if getattr(model, "kind", "") != "analytic-marginal":
            raise ConfigError("the plug-in baseline needs the analytic classifier")
        nu_hat = np.asarray(model.posterior_mean_nu(calibration.x), dtype=float)
        p1_plug = np.asarray(model.posterior1_given_nu(calibration.x, nu_hat), dtype=float)
        cells = binning.cell_index(calibration.nu)
        scores0, scores1 = [], []
        for cell in range(binning.n_cells):
            in_cell = cells == cell
            s0 = np.sort(1.0 - p1_plug[in_cell & (calibration.y == 0)])
            s1 = np.sort(p1_plug[in_cell & (calibration.y == 1)])
            # Bins the calibration nuisance never visits stay unusable; they
            # only matter if a point estimate selects one at prediction time.
            scores0.append(s0 if len(s0) else None)
            scores1.append(s1 if len(s1) else None)
        return cls(binning=binning, cell_scores0=tuple(scores0), cell_scores1=tuple(scores1))

    def include_batch(self, model, xs: np.ndarray, alpha: float) -> tuple[np.ndarray, np.ndarray]:
        nu_hat = np.asarray(model.posterior_mean_nu(xs), dtype=float)
        p1_plug = np.asarray(model.posterior1_given_nu(xs, nu_hat), dtype=float)
        cells = self.binning.cell_index(nu_hat)
        needed = np.unique(cells)
        for c in needed:
            if self.cell_scores0[c] is None or self.cell_scores1[c] is None:
                raise ConfigError(
                    f"plug-in baseline: bin {int(c)} selected by the point estimate "
                    f"has no calibration samples of some class"
                )
        c0 = np.array(
            [lower_quantile(self.cell_scores0[c], alpha) if self.cell_scores0[c] is not None else np.nan
             for c in range(self.binning.n_cells)]
        )
        c1 = np.array(
            [lower_quantile(self.cell_scores1[c], alpha) if self.cell_scores1[c] is not None else np.nan
             for c in range(self.binning.n_cells)]
        )
        return (1.0 - p1_plug) > c0[cells], p1_plug > c1[cells]


def _single_point_set(model, x, include0: bool, include1: bool, c0: float, c1: float) -> PredictionSet:
    p1 = float(np.asarray(model.posterior1(x), dtype=float))
    d0 = LabelDecision(bool(include0), 1.0 - p1, c0)
    d1 = LabelDecision(bool(include1), p1, c1)
    return PredictionSet(_members(bool(include0), bool(include1)), (d0, d1))


def standard_set_predict(x, alpha: float, model, calibration: Dataset) -> PredictionSet:
    """Standard prediction set at one observation (fits the cutoff inline)."""
    baseline = StandardSetsBaseline.fit(model, calibration)
    p1 = np.asarray(model.posterior1(np.atleast_1d(np.asarray(x, dtype=float))), dtype=float)
    inc0, inc1 = baseline.include_batch(p1, alpha)
    c = baseline.cutoff(alpha)
    return _single_point_set(model, x, inc0[0], inc1[0], c, c)


def class_conditional_set_predict(x, alpha: float, model, calibration: Dataset) -> PredictionSet:
    baseline = ClassConditionalBaseline.fit(model, calibration)
    p1 = np.asarray(model.posterior1(np.atleast_1d(np.asarray(x, dtype=float))), dtype=float)
    inc0, inc1 = baseline.include_batch(p1, alpha)
    c0, c1 = baseline.cutoffs(alpha)
    return _single_point_set(model, x, inc0[0], inc1[0], c0, c1)


def plug_in_conditional_predict(
    x, alpha: float, model, calibration: Dataset, binning: NuBinning
) -> PredictionSet:
    baseline = PlugInConditionalBaseline.fit(model, calibration, binning)
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    inc0, inc1 = baseline.include_batch(model, xs, alpha)
    return _single_point_set(model, x, inc0[0], inc1[0], math.nan, math.nan)


def bayes_point_predict(x, model, costs: tuple[float, float] = (1.0, 1.0)) -> int:
    """Cost-weighted point classifier: 1 iff P(Y=1 | x) > c0 / (c0 + c1).

    Ties break toward label 1 (an arbitrary, documented choice).
    """
    c0, c1 = costs
    if c0 <= 0 or c1 <= 0:
        raise ConfigError("costs must be positive")
    threshold = c0 / (c0 + c1)
    p1 = float(np.asarray(model.posterior1(x), dtype=float))
    return 1 if p1 >= threshold else 0


def bayes_point_batch(p1_eval: np.ndarray, costs: tuple[float, float] = (1.0, 1.0)) -> np.ndarray:
    c0, c1 = costs
    if c0 <= 0 or c1 <= 0:
        raise ConfigError("costs must be positive")
    return (p1_eval >= c0 / (c0 + c1)).astype(np.int8)
