"""End-to-end experiment runner.

Generates train/calibration/evaluation data, fits the classifier and the
per-label rejection surfaces once, evaluates every configured set-valued
method over a grid of miscoverage levels, and aggregates coverage, power,
precision and ambiguity tables with binomial standard errors. Also hosts
the gamma power sweep, the rejection-probability invariance check, and the
PIT diagnostic driver used by the CLI.

Everything is deterministic given the experiment seed: sampling uses
counter-based streams keyed off fixed role offsets, and reports serialize
with stable key order and full float precision.
"""

from __future__ import annotations

import json
import math
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import genmodel
from .classifier import (
    AnalyticMarginalClassifier,
    bayes_factor_from_posterior,
    fit_histogram_classifier,
    load_classifier,
    save_classifier,
)
from .cutoffs import (
    MODE_FPR,
    SCOPE_CONFIDENCE_SET,
    CutoffRequest,
    analytic_oracle_cutoffs,
    cutoff_for_region,
)
from .errors import ConfigError, SaturationError
from .genmodel import SCENARIO_ANALYTIC, Dataset, GenerativeConfig, PriorSpec
from .nuisance import FullSpaceProvider, OracleQuantileProvider, full_space_set
from .prediction_sets import (
    ClassConditionalBaseline,
    PlugInConditionalBaseline,
    StandardSetsBaseline,
    bayes_point_batch,
)
from .rejection import (
    NuBinning,
    RejectionSurface,
    cutoff_grid_from_values,
    fit_surface,
    make_param_bins,
    pit_diagnostics,
)

REPORT_SCHEMA_VERSION = 1

# Stream-role offsets; keep sampling independent across pipeline stages.
STREAM_TRAIN = 1 << 8
STREAM_CALIBRATION = 2 << 8
STREAM_EVALUATION = 3 << 8
STREAM_TARGET_CHECK = 4 << 8
STREAM_SWEEP = 5 << 8
STREAM_DIAGNOSE = 6 << 8
STREAM_PERTURB = 7 << 8
STREAM_MC_BASE = 1 << 16

METHOD_KINDS = ("naps", "standard", "class-conditional", "plug-in", "bayes-point")


@dataclass(frozen=True)
class GammaRule:
    """gamma as a fixed value or a fixed multiple of alpha."""

    kind: str = "fixed"  # "fixed" | "alpha-multiple"
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("fixed", "alpha-multiple"):
            raise ConfigError(f"unknown gamma rule {self.kind!r}")
        if self.value < 0:
            raise ConfigError("gamma rule value must be nonnegative")

    def gamma_for(self, alpha: float) -> float:
        g = self.value if self.kind == "fixed" else self.value * alpha
        if g >= alpha:
            raise ConfigError(f"gamma rule yields gamma={g} >= alpha={alpha}")
        return g

    def to_dict(self) -> dict:
        return {"kind": self.kind, "value": self.value}

    @staticmethod
    def from_dict(d) -> "GammaRule":
        if isinstance(d, (int, float)):
            return GammaRule(kind="fixed", value=float(d))
        return GammaRule(kind=d.get("kind", "fixed"), value=float(d.get("value", 0.0)))


@dataclass(frozen=True)
class MethodSpec:
    name: str
    kind: str
    gamma_rule: GammaRule = field(default_factory=GammaRule)
    provider: str = "full-space"  # "full-space" | "oracle-quantile"
    costs: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        if self.kind not in METHOD_KINDS:
            raise ConfigError(f"unknown method kind {self.kind!r}")
        if self.provider not in ("full-space", "oracle-quantile"):
            raise ConfigError(f"unknown provider {self.provider!r}")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "gamma_rule": self.gamma_rule.to_dict(),
            "provider": self.provider,
            "costs": list(self.costs),
        }

    @staticmethod
    def from_dict(d: dict) -> "MethodSpec":
        return MethodSpec(
            name=d.get("name", d["kind"]),
            kind=d["kind"],
            gamma_rule=GammaRule.from_dict(d.get("gamma_rule", 0.0)),
            provider=d.get("provider", "full-space"),
            costs=tuple(d.get("costs", (1.0, 1.0))),
        )


def default_methods() -> tuple[MethodSpec, ...]:
    return (
        MethodSpec(name="naps", kind="naps"),
        MethodSpec(
            name="naps-oracle",
            kind="naps",
            gamma_rule=GammaRule(kind="alpha-multiple", value=0.01),
            provider="oracle-quantile",
        ),
        MethodSpec(name="standard", kind="standard"),
        MethodSpec(name="class-conditional", kind="class-conditional"),
    )


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = SCENARIO_ANALYTIC
    class1_probability: float = 0.5
    train_prior: PriorSpec = None
    target_prior: PriorSpec = None
    n_train: int = 100_000
    n_calibration: int = 200_000
    n_evaluation: int = 50_000
    alphas: tuple[float, ...] = (0.05, 0.1, 0.2)
    methods: tuple[MethodSpec, ...] = field(default_factory=default_methods)
    nu_bins: int = 20
    nu_bin_scheme: str = "equal"  # "equal" | "geometric"
    report_nu_bins: int = 10
    cutoff_grid_size: int = 200
    classifier: str = "analytic-marginal"  # or "histogram"
    histogram_bins: int = 64
    seed: int = 0
    output_dir: str | None = None

    def __post_init__(self):
        if self.train_prior is None or self.target_prior is None:
            raise ConfigError("train_prior and target_prior are required")
        if min(self.n_train, self.n_calibration, self.n_evaluation) < 1:
            raise ConfigError("dataset sizes must be >= 1")
        if not self.alphas or any(not 0.0 < a < 1.0 for a in self.alphas):
            raise ConfigError("alphas must lie strictly inside (0, 1)")
        if self.nu_bin_scheme not in ("equal", "geometric"):
            raise ConfigError(f"unknown binning scheme {self.nu_bin_scheme!r}")
        if self.classifier not in ("analytic-marginal", "histogram"):
            raise ConfigError(f"unknown classifier {self.classifier!r}")
        names = [m.name for m in self.methods]
        if len(set(names)) != len(names):
            raise ConfigError("method names must be unique")
        # Gamma rules must stay feasible across the whole alpha grid.
        for m in self.methods:
            if m.kind == "naps":
                for a in self.alphas:
                    m.gamma_rule.gamma_for(a)

    def generative(self, which: str) -> GenerativeConfig:
        prior = self.train_prior if which == "train" else self.target_prior
        return GenerativeConfig(
            scenario=self.scenario,
            class1_probability=self.class1_probability,
            nuisance_prior_class0=prior,
            nuisance_prior_class1=prior,
        )

    def binning(self) -> NuBinning:
        return NuBinning.for_space(
            self.train_prior.support, self.nu_bins, scheme=self.nu_bin_scheme
        )

    def report_binning(self) -> NuBinning:
        return NuBinning.for_space(self.train_prior.support, self.report_nu_bins)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "class1_probability": self.class1_probability,
            "train_prior": self.train_prior.to_dict(),
            "target_prior": self.target_prior.to_dict(),
            "n_train": self.n_train,
            "n_calibration": self.n_calibration,
            "n_evaluation": self.n_evaluation,
            "alphas": list(self.alphas),
            "methods": [m.to_dict() for m in self.methods],
            "nu_bins": self.nu_bins,
            "nu_bin_scheme": self.nu_bin_scheme,
            "report_nu_bins": self.report_nu_bins,
            "cutoff_grid_size": self.cutoff_grid_size,
            "classifier": self.classifier,
            "histogram_bins": self.histogram_bins,
            "seed": self.seed,
            "output_dir": self.output_dir,
        }

    @staticmethod
    def from_dict(d: dict) -> "ExperimentConfig":
        kwargs = dict(d)
        kwargs["train_prior"] = PriorSpec.from_dict(d["train_prior"])
        kwargs["target_prior"] = PriorSpec.from_dict(d["target_prior"])
        kwargs["alphas"] = tuple(float(a) for a in d["alphas"])
        if "methods" in d:
            kwargs["methods"] = tuple(MethodSpec.from_dict(m) for m in d["methods"])
        known = set(ExperimentConfig.__dataclass_fields__)
        unknown = set(kwargs) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        return ExperimentConfig(**kwargs)

    @staticmethod
    def from_json_file(path) -> "ExperimentConfig":
        if not os.path.exists(path):
            raise ConfigError(f"configuration file not found: {path}")
        with open(path, "r", encoding="utf-8") as fh:
            try:
                return ExperimentConfig.from_dict(json.load(fh))
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"malformed configuration {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Fitted pipeline: classifier plus per-label rejection surfaces.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Pipeline:
    model: object
    binning: NuBinning
    surfaces: dict[int, RejectionSurface]

    def save(self, out_dir: str) -> None:
        os.makedirs(out_dir, exist_ok=True)
        save_classifier(self.model, os.path.join(out_dir, "classifier.json"))
        for y in (0, 1):
            self.surfaces[y].save(os.path.join(out_dir, f"surface_bf{y}.json"))

    @staticmethod
    def load(model_dir: str) -> "Pipeline":
        for name in ("classifier.json", "surface_bf0.json", "surface_bf1.json"):
            if not os.path.exists(os.path.join(model_dir, name)):
                raise ConfigError(f"missing fitted artifact {name} in {model_dir}")
        model = load_classifier(os.path.join(model_dir, "classifier.json"))
        surfaces = {
            y: RejectionSurface.load(os.path.join(model_dir, f"surface_bf{y}.json")) for y in (0, 1)
        }
        return Pipeline(model=model, binning=surfaces[0].binning, surfaces=surfaces)


def build_model(config: ExperimentConfig):
    if config.classifier == "analytic-marginal":
        return AnalyticMarginalClassifier(config.generative("train"))
    train = genmodel.sample_dataset(
        config.generative("train"), config.n_train, config.seed, stream_base=STREAM_TRAIN
    )
    return fit_histogram_classifier(train, config.histogram_bins)


def fit_pipeline(config: ExperimentConfig, calibration: Dataset | None = None) -> Pipeline:
    """Fit the classifier and both Bayes-factor rejection surfaces."""
    model = build_model(config)
    if calibration is None:
        calibration = genmodel.sample_dataset(
            config.generative("train"), config.n_calibration, config.seed, stream_base=STREAM_CALIBRATION
        )
    p1 = np.asarray(model.posterior1(calibration.x), dtype=float)
    binning = config.binning()
    surfaces = {}
    for y in (0, 1):
        p_y = p1 if y == 1 else 1.0 - p1
        prior_y = model.class1_prior if y == 1 else 1.0 - model.class1_prior
        tau, _ = bayes_factor_from_posterior(p_y, prior_y)
        grid = cutoff_grid_from_values(tau, config.cutoff_grid_size)
        surfaces[y] = fit_surface(
            calibration,
            statistic=None,
            grid=grid,
            binning=binning,
            statistic_id=f"bayes-factor-{y}",
            seed=config.seed,
            statistic_values=tau,
        )
    return Pipeline(model=model, binning=binning, surfaces=surfaces)


def _provider_for(spec: MethodSpec, config: ExperimentConfig, gamma: float):
    if spec.provider == "oracle-quantile":
        return OracleQuantileProvider(gamma=gamma, distribution=config.target_prior)
    return FullSpaceProvider(space=config.train_prior.support)


def naps_cutoffs_for_alpha(
    pipeline: Pipeline, config: ExperimentConfig, spec: MethodSpec, alpha: float
) -> tuple[dict[int, float], dict[int, bool], float, dict[int, dict]]:
    """Per-label statistic cutoffs for one NAPS method at one alpha.

    Both shipped providers build regions that do not depend on the
    observation, so the cutoff is shared by every evaluation point.
    A saturated label is flagged; its cutoff becomes -inf (always include).
    """
    gamma = spec.gamma_rule.gamma_for(alpha)
    provider = _provider_for(spec, config, gamma)
    cutoffs: dict[int, float] = {}
    saturated: dict[int, bool] = {}
    regions: dict[int, dict] = {}
    for y in (0, 1):
        request = CutoffRequest(
            null_label=y,
            alpha=alpha,
            gamma=gamma,
            mode=MODE_FPR,
            scope=SCOPE_CONFIDENCE_SET,
            provider=provider,
        )
        region = provider.region(None, y)
        regions[y] = region.to_dict()
        try:
            cutoffs[y] = cutoff_for_region(pipeline.surfaces[y], region, request).cutoff
            saturated[y] = False
        except SaturationError:
            cutoffs[y] = -math.inf
            saturated[y] = True
    return cutoffs, saturated, gamma, regions


# ---------------------------------------------------------------------------
# Metrics.
# ---------------------------------------------------------------------------


def _rate(numer: int, denom: int) -> tuple[float | None, float | None]:
    if denom == 0:
        return None, None
    p = numer / denom
    return float(p), float(math.sqrt(p * (1.0 - p) / denom))


def _segment_metrics(y, include0, include1, mask) -> dict:
    n = int(np.sum(mask))
    inc_true = np.where(y == 1, include1, include0)[mask]
    inc_other = np.where(y == 1, include0, include1)[mask]
    both = (include0 & include1)[mask]
    empty = (~include0 & ~include1)[mask]
    coverage, coverage_se = _rate(int(np.sum(inc_true)), n)
    power, power_se = _rate(int(np.sum(~inc_other)), n)
    ambiguity, _ = _rate(int(np.sum(both)), n)
    empty_rate, _ = _rate(int(np.sum(empty)), n)
    size = float(np.mean(include0[mask].astype(float) + include1[mask].astype(float))) if n else None
    return {
        "n": n,
        "coverage": coverage,
        "coverage_se": coverage_se,
        "power": power,
        "power_se": power_se,
        "ambiguity_rate": ambiguity,
        "empty_rate": empty_rate,
        "mean_set_size": size,
    }


def compute_metrics(y, nu, include0, include1, report_binning: NuBinning) -> dict:
    """Coverage/power/precision tables: marginal, per class, per (class, bin)."""
    y = np.asarray(y)
    include0 = np.asarray(include0, dtype=bool)
    include1 = np.asarray(include1, dtype=bool)
    n = len(y)
    all_mask = np.ones(n, dtype=bool)

    single0 = include0 & ~include1
    single1 = include1 & ~include0
    counts = {
        "n": n,
        "empty": int(np.sum(~include0 & ~include1)),
        "single_0": int(np.sum(single0)),
        "single_1": int(np.sum(single1)),
        "both": int(np.sum(include0 & include1)),
        "single_0_correct": int(np.sum(single0 & (y == 0))),
        "single_1_correct": int(np.sum(single1 & (y == 1))),
    }
    precision0, precision0_se = _rate(counts["single_0_correct"], counts["single_0"])
    precision1, precision1_se = _rate(counts["single_1_correct"], counts["single_1"])

    out = {
        "marginal": _segment_metrics(y, include0, include1, all_mask),
        "precision": {
            "0": {"value": precision0, "se": precision0_se, "n": counts["single_0"]},
            "1": {"value": precision1, "se": precision1_se, "n": counts["single_1"]},
        },
        "by_class": {
            "0": _segment_metrics(y, include0, include1, y == 0),
            "1": _segment_metrics(y, include0, include1, y == 1),
        },
        "counts": counts,
    }

    cells = report_binning.cell_index(nu)
    by_bin: dict[str, list] = {"0": [], "1": []}
    for label in (0, 1):
        for cell in range(report_binning.n_cells):
            mask = (y == label) & (cells == cell)
            seg = _segment_metrics(y, include0, include1, mask)
            if report_binning.is_continuous:
                lo, hi = report_binning.cell_bounds(cell)
                seg["nu_bin"] = {"index": cell, "lo": lo, "hi": hi}
            else:
                seg["nu_bin"] = {"index": cell, "category": int(report_binning.categories[cell])}
            by_bin[str(label)].append(seg)
    out["by_class_nu_bin"] = by_bin
    return out


@dataclass
class MetricsReport:
    data: dict

    def method_alpha(self, method: str, alpha: float) -> dict:
        return self.data["methods"][method]["alphas"][_alpha_key(alpha)]

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.data, fh, indent=2, sort_keys=True)

    @staticmethod
    def from_json(path) -> "MetricsReport":
        with open(path, "r", encoding="utf-8") as fh:
            return MetricsReport(data=json.load(fh))

    def write_long_table(self, path) -> None:
        """Plot-ready long format: method, alpha, segment, metric, value, se, n."""
        rows = []
        for method, mdata in sorted(self.data["methods"].items()):
            for akey, tables in sorted(mdata["alphas"].items()):
                segments = [("marginal", tables["marginal"])]
                segments += [(f"y={c}", tables["by_class"][c]) for c in ("0", "1")]
                for c in ("0", "1"):
                    for seg in tables["by_class_nu_bin"][c]:
                        label = f"y={c},bin={seg['nu_bin']['index']}"
                        segments.append((label, seg))
                for seg_name, seg in segments:
                    for metric in ("coverage", "power", "ambiguity_rate", "empty_rate", "mean_set_size"):
                        value = seg.get(metric)
                        se = seg.get(metric + "_se", "")
                        rows.append(
                            (method, akey, seg_name, metric, value, se, seg["n"])
                        )
                for c in ("0", "1"):
                    p = tables["precision"][c]
                    rows.append((method, akey, f"predicted={c}", "precision", p["value"], p["se"], p["n"]))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("method,alpha,segment,metric,value,se,n\n")
            for row in rows:
                fh.write(",".join("" if v is None else str(v) for v in row) + "\n")


def _alpha_key(alpha: float) -> str:
    return repr(float(alpha))


def run_experiment(config: ExperimentConfig, pipeline: Pipeline | None = None) -> MetricsReport:
    """Run the full protocol and aggregate metrics per method and alpha.

    Passing a pre-fitted pipeline skips refitting entirely; results are
    bit-identical either way because evaluation data depend only on the
    seed, not on the fitting stage.
    """
    if pipeline is None:
        pipeline = fit_pipeline(config)
    evaluation = genmodel.sample_dataset(
        config.generative("target"), config.n_evaluation, config.seed, stream_base=STREAM_EVALUATION
    )
    model = pipeline.model
    p1_eval = np.asarray(model.posterior1(evaluation.x), dtype=float)
    prior1 = model.class1_prior
    tau_eval = {
        0: bayes_factor_from_posterior(1.0 - p1_eval, 1.0 - prior1)[0],
        1: bayes_factor_from_posterior(p1_eval, prior1)[0],
    }

    needs_calibration = any(m.kind in ("standard", "class-conditional", "plug-in") for m in config.methods)
    calibration = None
    baselines: dict[str, object] = {}
    if needs_calibration:
        calibration = genmodel.sample_dataset(
            config.generative("train"), config.n_calibration, config.seed, stream_base=STREAM_CALIBRATION
        )
    for spec in config.methods:
        if spec.kind == "standard":
            baselines[spec.name] = StandardSetsBaseline.fit(model, calibration)
        elif spec.kind == "class-conditional":
            baselines[spec.name] = ClassConditionalBaseline.fit(model, calibration)
        elif spec.kind == "plug-in":
            baselines[spec.name] = PlugInConditionalBaseline.fit(model, calibration, pipeline.binning)

    report_binning = config.report_binning()
    methods_out: dict[str, dict] = {}
    for spec in config.methods:
        alphas_out = {}
        for alpha in config.alphas:
            extra: dict = {}
            if spec.kind == "naps":
                cuts, saturated, gamma, regions = naps_cutoffs_for_alpha(pipeline, config, spec, alpha)
                include0 = tau_eval[0] > cuts[0]
                include1 = tau_eval[1] > cuts[1]
                extra = {
                    "gamma": gamma,
                    "cutoff0": cuts[0],
                    "cutoff1": cuts[1],
                    "nuisance_regions": {"0": regions[0], "1": regions[1]},
                    "saturated_labels": [y for y in (0, 1) if saturated[y]],
                }
            elif spec.kind == "standard":
                include0, include1 = baselines[spec.name].include_batch(p1_eval, alpha)
            elif spec.kind == "class-conditional":
                include0, include1 = baselines[spec.name].include_batch(p1_eval, alpha)
            elif spec.kind == "plug-in":
                include0, include1 = baselines[spec.name].include_batch(model, evaluation.x, alpha)
            else:  # bayes-point
                labels = bayes_point_batch(p1_eval, spec.costs)
                include0 = labels == 0
                include1 = labels == 1
            tables = compute_metrics(evaluation.y, evaluation.nu, include0, include1, report_binning)
            tables.update(extra)
            alphas_out[_alpha_key(alpha)] = tables
        methods_out[spec.name] = {"kind": spec.kind, "alphas": alphas_out}

    config_echo = config.to_dict()
    config_echo.pop("output_dir")  # report content must not depend on its destination
    return MetricsReport(
        data={
            "schema_version": REPORT_SCHEMA_VERSION,
            "config": config_echo,
            "n_evaluation": len(evaluation),
            "methods": methods_out,
        }
    )


# ---------------------------------------------------------------------------
# Gamma power sweep.
# ---------------------------------------------------------------------------


def gamma_sweep(config: ExperimentConfig, alpha: float, gamma_grid) -> dict:
    """Closed-form class-0 cutoff and Monte Carlo power across gamma values.

    Uses the oracle quantile region of the target nuisance distribution.
    Entries with gamma >= alpha are reported as skipped.
    """
    if config.scenario != SCENARIO_ANALYTIC:
        raise ConfigError("the gamma sweep is defined for the analytic scenario")
    evaluation = genmodel.sample_dataset(
        config.generative("target"), config.n_evaluation, config.seed, stream_base=STREAM_SWEEP
    )
    x1_class = evaluation.x[evaluation.y == 1]
    x0_class = evaluation.x[evaluation.y == 0]
    space = config.target_prior.support
    rows = []
    for gamma in np.asarray(gamma_grid, dtype=float):
        if gamma >= alpha:
            warnings.warn(f"gamma={gamma:g} >= alpha={alpha:g}; sweep entry skipped")
            rows.append({"gamma": float(gamma), "skipped": True, "reason": "gamma >= alpha"})
            continue
        if gamma == 0.0:
            region = full_space_set(space)
        else:
            provider = OracleQuantileProvider(gamma=float(gamma), distribution=config.target_prior)
            region = provider.region(None, 0)
        oracle = analytic_oracle_cutoffs(alpha, float(gamma), region)
        power1 = float(np.mean(x1_class >= oracle.x0_star)) if len(x1_class) else None
        power0 = float(np.mean(x0_class <= oracle.x1_star)) if len(x0_class) else None
        rows.append(
            {
                "gamma": float(gamma),
                "skipped": False,
                "x0_star": oracle.x0_star,
                "x1_star": oracle.x1_star,
                "arg_nu": oracle.arg_nu,
                "power_y1": power1,
                "power_y0": power0,
            }
        )
    active = [r for r in rows if not r["skipped"]]
    best = min(active, key=lambda r: r["x0_star"]) if active else None
    return {
        "alpha": alpha,
        "rows": rows,
        "n_skipped": sum(r["skipped"] for r in rows),
        "minimizing_gamma": None if best is None else best["gamma"],
        "min_x0_star": None if best is None else best["x0_star"],
    }


# ---------------------------------------------------------------------------
# Invariance of the rejection probability under the target shift.
# ---------------------------------------------------------------------------


def invariance_check(
    config: ExperimentConfig,
    perturb_scale: float | None = None,
    min_cell_count: int = 5000,
    pipeline: Pipeline | None = None,
) -> dict:
    """Compare the train-fitted surface against target-data rejection rates.

    Within each (label, nuisance-bin) cell, the empirical CDF of the
    statistic on target-prior draws should match the calibration fit up to
    sampling noise; conditioning on (y, nu) removes the shift. Passing
    ``perturb_scale`` multiplies the class-0 rate parameter when generating
    target observations (while recording the unscaled nuisance), which
    breaks the shared-likelihood assumption and should blow up the
    distances.

    Cells with fewer target samples than ``min_cell_count`` are skipped:
    their empirical CDFs are too noisy to certify a sup-distance bound.
    """
    if pipeline is None:
        pipeline = fit_pipeline(config)
    surface = pipeline.surfaces[0]
    model = pipeline.model
    target = genmodel.sample_dataset(
        config.generative("target"), config.n_calibration, config.seed, stream_base=STREAM_TARGET_CHECK
    )
    x = np.array(target.x)
    if perturb_scale is not None:
        if config.scenario != SCENARIO_ANALYTIC:
            raise ConfigError("the likelihood perturbation applies to the analytic scenario")
        mask = target.y == 0
        u = genmodel.stream_rng(config.seed, STREAM_PERTURB).random(int(np.sum(mask)))
        nu_eff = target.nu[mask] * perturb_scale
        # Inverse-CDF draw from the scaled-rate density; bypasses the domain
        # check on purpose, the perturbed rate leaves the nominal family.
        x[mask] = -np.log1p(u * np.expm1(-nu_eff)) / nu_eff

    p1 = np.asarray(model.posterior1(x), dtype=float)
    tau0 = bayes_factor_from_posterior(1.0 - p1, 1.0 - model.class1_prior)[0]
    cells = surface.binning.cell_index(target.nu)
    rows = []
    skipped = []
    for y in (0, 1):
        for cell in range(surface.binning.n_cells):
            sel = tau0[(target.y == y) & (cells == cell)]
            entry = {"y": y, "bin": cell, "n_target": int(len(sel))}
            if surface.binning.is_continuous:
                lo, hi = surface.binning.cell_bounds(cell)
                entry.update(nu_lo=lo, nu_hi=hi)
            if len(sel) < min_cell_count:
                skipped.append(entry)
                continue
            ecdf = np.searchsorted(np.sort(sel), surface.grid, side="right") / len(sel)
            entry["sup_distance"] = float(np.max(np.abs(ecdf - surface.values[y, cell])))
            rows.append(entry)
    if skipped:
        warnings.warn(
            f"invariance check: {len(skipped)} cells below {min_cell_count} target samples skipped"
        )
    max_sup = max((r["sup_distance"] for r in rows), default=None)
    return {
        "perturb_scale": perturb_scale,
        "min_cell_count": min_cell_count,
        "cells": rows,
        "skipped": skipped,
        "max_sup_distance": max_sup,
    }


# ---------------------------------------------------------------------------
# PIT diagnostics driver.
# ---------------------------------------------------------------------------


def run_pit_diagnostics(
    config: ExperimentConfig,
    n_param_bins: int = 2,
    pipeline: Pipeline | None = None,
    n_eval: int | None = None,
) -> dict:
    """PIT tables for the nuisance-aware surface and a one-bin control.

    The one-bin surface deliberately ignores the nuisance parameter; its
    per-bin PIT failures demonstrate why marginal calibration is not enough.
    """
    if pipeline is None:
        pipeline = fit_pipeline(config)
    model = pipeline.model
    n = n_eval if n_eval is not None else config.n_evaluation
    eval_ds = genmodel.sample_dataset(
        config.generative("train"), n, config.seed, stream_base=STREAM_DIAGNOSE
    )
    p1 = np.asarray(model.posterior1(eval_ds.x), dtype=float)
    tau0 = bayes_factor_from_posterior(1.0 - p1, 1.0 - model.class1_prior)[0]

    calibration = genmodel.sample_dataset(
        config.generative("train"), config.n_calibration, config.seed, stream_base=STREAM_CALIBRATION
    )
    p1_cal = np.asarray(model.posterior1(calibration.x), dtype=float)
    tau0_cal = bayes_factor_from_posterior(1.0 - p1_cal, 1.0 - model.class1_prior)[0]
    grid = cutoff_grid_from_values(tau0_cal, config.cutoff_grid_size)
    space = config.train_prior.support
    one_bin = NuBinning.for_space(space, 1)
    flat_surface = fit_surface(
        calibration,
        statistic=None,
        grid=grid,
        binning=one_bin,
        statistic_id="bayes-factor-0",
        seed=config.seed,
        statistic_values=tau0_cal,
    )

    bins = make_param_bins(space, n_param_bins)
    aware = _pit_with_values(pipeline.surfaces[0], eval_ds, tau0, bins)
    flat = _pit_with_values(flat_surface, eval_ds, tau0, bins)
    return {
        "n_evaluation": int(n),
        "bins": [b.label() for b in bins],
        "nuisance_aware": [r.to_dict() for r in aware],
        "nuisance_ignoring": [r.to_dict() for r in flat],
    }


def _pit_with_values(surface, eval_ds, values, bins):
    return pit_diagnostics(surface, eval_ds, lambda xs: values, bins)
