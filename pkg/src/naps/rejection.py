"""Estimating the rejection probability of a test statistic.

The target object is W(C; y, nu) = P(lambda(X) <= C | y, nu), estimated from
calibration data by:

1. augmenting each calibration point i with indicator records
   Z_{i,j} = 1{lambda(x_i) <= C_j} over a fixed cutoff grid C_1 < ... < C_K;
2. within each (label, nuisance-bin) cell, isotonic least-squares regression
   of Z on C via pool-adjacent-violators.

Smoothness across the nuisance parameter is handled purely by binning, so
the estimate is a per-cell monotone step function in C. Both slices of the
fitted surface double as the classifier's FPR and TPR curves, which is what
the cutoff machinery inverts.

Goodness of fit is checked by the probability integral transform: if the
surface is well estimated, W(lambda(X); y, nu) evaluated on fresh simulator
draws is uniform within every parameter-space bin.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import BinningError, ConfigError, DomainError, SaturationError
from .genmodel import Dataset, NuisanceSpace

KS_BAND_COEFFICIENT = 1.36  # asymptotic two-sided 95% Kolmogorov-Smirnov band


def pool_adjacent_violators(values, weights=None) -> np.ndarray:
    """Weighted least-squares isotonic (nondecreasing) regression.

    Classic pool-adjacent-violators: scan left to right, merging adjacent
    blocks whose means violate monotonicity into weighted averages.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or len(values) == 0:
        raise ConfigError("pool_adjacent_violators needs a nonempty 1-d array")
    if weights is None:
        weights = np.ones_like(values)
    else:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != values.shape or np.any(weights <= 0):
            raise ConfigError("weights must be positive and match the values")

    # Blocks as (mean, weight, count) triples on a stack.
    means: list[float] = []
    wsum: list[float] = []
    count: list[int] = []
    for v, w in zip(values, weights):
        means.append(float(v))
        wsum.append(float(w))
        count.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m2, w2, c2 = means.pop(), wsum.pop(), count.pop()
            m1, w1, c1 = means.pop(), wsum.pop(), count.pop()
            w = w1 + w2
            means.append((m1 * w1 + m2 * w2) / w)
            wsum.append(w)
            count.append(c1 + c2)
    out = np.empty_like(values)
    pos = 0
    for m, c in zip(means, count):
        out[pos : pos + c] = m
        pos += c
    return out


@dataclass(frozen=True)
class NuBinning:
    """Partition of the nuisance space into cells.

    Continuous spaces use half-open interval bins [e_j, e_{j+1}) with the
    last bin closed; discrete spaces use one cell per category.
    """

    edges: np.ndarray | None = None
    categories: tuple[int, ...] | None = None

    def __post_init__(self):
        if (self.edges is None) == (self.categories is None):
            raise ConfigError("binning needs either edges or categories, not both")
        if self.edges is not None:
            e = np.asarray(self.edges, dtype=float)
            if e.ndim != 1 or len(e) < 2 or np.any(np.diff(e) <= 0):
                raise ConfigError("bin edges must be strictly increasing with >= 2 entries")
            e.flags.writeable = False

    @classmethod
    def equal_width(cls, lo: float, hi: float, n_bins: int) -> "NuBinning":
        return cls(edges=np.linspace(lo, hi, n_bins + 1))

    @classmethod
    def geometric(cls, lo: float, hi: float, n_bins: int) -> "NuBinning":
        return cls(edges=np.geomspace(lo, hi, n_bins + 1))

    @classmethod
    def discrete(cls, categories) -> "NuBinning":
        return cls(categories=tuple(int(c) for c in categories))

    @classmethod
    def for_space(cls, space: NuisanceSpace, n_bins: int = 20, scheme: str = "equal") -> "NuBinning":
        if space.is_continuous:
            lo, hi = space.bounds
            if scheme == "geometric":
                return cls.geometric(lo, hi, n_bins)
            return cls.equal_width(lo, hi, n_bins)
        return cls.discrete(space.categories)

    @property
    def is_continuous(self) -> bool:
        return self.edges is not None

    @property
    def n_cells(self) -> int:
        return len(self.edges) - 1 if self.is_continuous else len(self.categories)

    def cell_index(self, nu) -> np.ndarray:
        """Cell index per nuisance value; raises if any value is out of support."""
        nu = np.asarray(nu)
        if self.is_continuous:
            nu = nu.astype(float)
            if np.any(nu < self.edges[0]) or np.any(nu > self.edges[-1]):
                raise DomainError("nuisance value outside the binning support")
            idx = np.searchsorted(self.edges, nu, side="right") - 1
            return np.minimum(idx, self.n_cells - 1)
        lookup = {c: i for i, c in enumerate(self.categories)}
        flat = np.atleast_1d(nu)
        try:
            idx = np.array([lookup[int(v)] for v in flat], dtype=int)
        except KeyError as exc:
            raise DomainError(f"unknown nuisance category {exc.args[0]}") from None
        return idx if nu.ndim else idx[0]

    def representatives(self) -> np.ndarray:
        """One representative nuisance value per cell (interval midpoints)."""
        if self.is_continuous:
            return 0.5 * (self.edges[:-1] + self.edges[1:])
        return np.asarray(self.categories)

    def cell_bounds(self, i: int) -> tuple[float, float]:
        if not self.is_continuous:
            raise ConfigError("cell_bounds applies to continuous binnings")
        return float(self.edges[i]), float(self.edges[i + 1])

    def cells_intersecting(self, region) -> np.ndarray:
        """Indices of cells with nonempty intersection with a nuisance region."""
        if getattr(region, "is_empty", False):
            return np.array([], dtype=int)
        if self.is_continuous:
            hit = np.zeros(self.n_cells, dtype=bool)
            for lo, hi in region.intervals:
                # Half-open cells; a region endpoint touching a cell edge
                # counts, which can only widen the search (conservative).
                hit |= (self.edges[:-1] <= hi) & (self.edges[1:] >= lo)
            return np.nonzero(hit)[0]
        keep = [i for i, c in enumerate(self.categories) if c in region.categories]
        return np.asarray(keep, dtype=int)

    def to_dict(self) -> dict:
        if self.is_continuous:
            return {"edges": np.asarray(self.edges).tolist()}
        return {"categories": list(self.categories)}

    @staticmethod
    def from_dict(d: dict) -> "NuBinning":
        if "edges" in d:
            return NuBinning(edges=np.asarray(d["edges"], dtype=float))
        return NuBinning(categories=tuple(int(c) for c in d["categories"]))


@dataclass(frozen=True)
class CutoffGrid:
    """Strictly sorted cutoffs at which the rejection probability is fitted."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or len(v) < 2 or np.any(np.diff(v) <= 0):
            raise ConfigError("cutoff grid must be strictly sorted with >= 2 entries")
        v.flags.writeable = False

    def __len__(self) -> int:
        return len(self.values)


def sample_cutoff_grid(calibration: Dataset, statistic, grid_size: int, seed: int | None = None) -> CutoffGrid:
    """Cutoff grid from the empirical distribution of the statistic.

    Uses the K mid-quantile levels (j - 0.5) / K with linear interpolation,
    de-duplicated. Deterministic; the seed argument is accepted for
    interface stability but unused.
    """
    values = np.asarray(statistic(calibration.x), dtype=float)
    return cutoff_grid_from_values(values, grid_size)


def cutoff_grid_from_values(values: np.ndarray, grid_size: int) -> CutoffGrid:
    if grid_size < 2:
        raise ConfigError("grid_size must be >= 2")
    values = np.asarray(values, dtype=float)
    if len(values) == 0 or np.min(values) == np.max(values):
        raise ConfigError("statistic is degenerate: cannot build a cutoff grid")
    levels = (np.arange(grid_size) + 0.5) / grid_size
    grid = np.unique(np.quantile(values, levels, method="linear"))
    if len(grid) < 2:
        raise ConfigError("statistic is too discrete: fewer than 2 distinct grid cutoffs")
    return CutoffGrid(values=grid)


@dataclass(frozen=True)
class AugmentedRecords:
    """Columnar (y, nu, cutoff, z) records; one row per (sample, grid point)."""

    y: np.ndarray
    nu: np.ndarray
    cutoff: np.ndarray
    z: np.ndarray

    def __len__(self) -> int:
        return len(self.z)


def augment(calibration: Dataset, statistic, grid: CutoffGrid) -> AugmentedRecords:
    """Expand calibration data into indicator records over the cutoff grid.

    Produces exactly B * K records; record (i, j) carries
    Z = 1{lambda(x_i) <= C_j}.
    """
    if len(calibration) == 0:
        raise ConfigError("calibration dataset is empty")
    lam = np.asarray(statistic(calibration.x), dtype=float)
    if lam.shape != (len(calibration),):
        raise ConfigError("statistic must return one value per calibration sample")
    if np.any(~np.isfinite(lam)):
        bad = int(np.nonzero(~np.isfinite(lam))[0][0])
        raise ConfigError(f"statistic evaluation failed at calibration sample {bad}")
    K = len(grid)
    z = (lam[:, None] <= grid.values[None, :]).astype(np.int8).ravel()
    return AugmentedRecords(
        y=np.repeat(calibration.y, K),
        nu=np.repeat(calibration.nu, K),
        cutoff=np.tile(grid.values, len(calibration)),
        z=z,
    )


@dataclass(frozen=True)
class RejectionSurface:
    """Fitted monotone step functions W(C; y, nu-bin) on a shared grid.

    ``values[y, cell]`` is nondecreasing over the grid with range in [0, 1].
    Below the first grid point the surface is 0 by convention; above the
    last it stays at the fitted maximum.
    """

    statistic_id: str
    binning: NuBinning
    grid: np.ndarray
    values: np.ndarray  # shape (2, n_cells, K)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if v.shape != (2, self.binning.n_cells, len(g)):
            raise ConfigError("surface values must have shape (2, n_cells, len(grid))")
        if np.any(np.diff(v, axis=-1) < -1e-12):
            raise ConfigError("fitted surface must be nondecreasing along the grid")
        g.flags.writeable = False
        v.flags.writeable = False

    def rejection_probability(self, cutoff, y: int, nu) -> np.ndarray:
        """Step-function lookup of W(cutoff; y, nu)."""
        cell = self.binning.cell_index(nu)
        return self._eval_cells(np.asarray(cutoff, dtype=float), y, cell)

    def rejection_probability_batch(self, cutoffs, y_arr, nu_arr) -> np.ndarray:
        """Per-sample lookup W(cutoff_i; y_i, nu_i)."""
        cutoffs = np.asarray(cutoffs, dtype=float)
        y_arr = np.asarray(y_arr)
        cells = self.binning.cell_index(nu_arr)
        idx = np.searchsorted(self.grid, cutoffs, side="right") - 1
        below = idx < 0
        out = self.values[y_arr, cells, np.clip(idx, 0, len(self.grid) - 1)]
        out[below] = 0.0
        return out

    def _eval_cells(self, cutoff: np.ndarray, y: int, cell) -> np.ndarray:
        idx = np.searchsorted(self.grid, cutoff, side="right") - 1
        scalar = idx.ndim == 0
        idx = np.atleast_1d(idx)
        vals = np.where(idx < 0, 0.0, self.values[y, cell, np.clip(idx, 0, len(self.grid) - 1)])
        return float(vals[0]) if scalar else vals

    def fitted_max(self, y: int, nu) -> float:
        cell = int(self.binning.cell_index(nu))
        return float(self.values[y, cell, -1])

    def invert(self, beta: float, y: int, nu) -> float:
        """Generalized inverse: smallest grid cutoff with W >= beta."""
        cell = int(self.binning.cell_index(nu))
        return self.invert_cell(beta, y, cell)

    def invert_cell(self, beta: float, y: int, cell: int) -> float:
        if not 0.0 <= beta <= 1.0:
            raise DomainError("beta must lie in [0, 1]")
        vals = self.values[y, cell]
        pos = int(np.searchsorted(vals, beta, side="left"))
        if pos >= len(vals):
            raise SaturationError(
                f"target level {beta} exceeds the fitted maximum {vals[-1]:.6f} "
                f"in cell (y={y}, bin={cell})",
                attainable_max=float(vals[-1]),
            )
        return float(self.grid[pos])

    def to_dict(self) -> dict:
        return {
            "statistic_id": self.statistic_id,
            "binning": self.binning.to_dict(),
            "grid": np.asarray(self.grid).tolist(),
            "values": np.asarray(self.values).tolist(),
            "metadata": self.metadata,
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)

    @staticmethod
    def from_dict(d: dict) -> "RejectionSurface":
        return RejectionSurface(
            statistic_id=d["statistic_id"],
            binning=NuBinning.from_dict(d["binning"]),
            grid=np.asarray(d["grid"], dtype=float),
            values=np.asarray(d["values"], dtype=float),
            metadata=d.get("metadata", {}),
        )

    @staticmethod
    def load(path) -> "RejectionSurface":
        with open(path, "r", encoding="utf-8") as fh:
            return RejectionSurface.from_dict(json.load(fh))


def fit_rejection_surface(
    records: AugmentedRecords,
    binning: NuBinning,
    statistic_id: str = "statistic",
    metadata: dict | None = None,
) -> RejectionSurface:
    """Isotonic fit of the augmented records, cell by cell.

    Every (label, bin) cell that appears must carry records at every grid
    cutoff (augmentation guarantees this); any populated label with an empty
    cell is a binning error.
    """
    grid = np.unique(records.cutoff)
    if len(grid) < 2:
        raise ConfigError("records carry fewer than 2 distinct cutoffs")
    K = len(grid)
    n_cells = binning.n_cells
    cells = binning.cell_index(records.nu)
    col = np.searchsorted(grid, records.cutoff)

    values = np.zeros((2, n_cells, K))
    for y in (0, 1):
        mask = records.y == y
        if not np.any(mask):
            # Label absent from the records entirely: leave a flat-zero slice.
            continue
        flat = cells[mask] * K + col[mask]
        counts = np.bincount(flat, minlength=n_cells * K).reshape(n_cells, K)
        sums = np.bincount(flat, weights=records.z[mask].astype(float), minlength=n_cells * K).reshape(
            n_cells, K
        )
        for cell in range(n_cells):
            if counts[cell].sum() == 0:
                raise BinningError(f"no records in cell (y={y}, bin={cell})")
            if np.any(counts[cell] == 0):
                raise BinningError(f"cell (y={y}, bin={cell}) is missing grid cutoffs")
            means = sums[cell] / counts[cell]
            values[y, cell] = np.clip(pool_adjacent_violators(means, counts[cell]), 0.0, 1.0)
    meta = dict(metadata or {})
    meta.setdefault("n_records", len(records))
    return RejectionSurface(
        statistic_id=statistic_id, binning=binning, grid=grid, values=values, metadata=meta
    )


def fit_surface(
    calibration: Dataset,
    statistic,
    grid: CutoffGrid,
    binning: NuBinning,
    statistic_id: str = "statistic",
    seed: int | None = None,
    statistic_values: np.ndarray | None = None,
) -> RejectionSurface:
    """Fit the surface directly from calibration data.

    Equivalent to ``fit_rejection_surface(augment(...), ...)`` but never
    materializes the B * K augmented records: within a cell, the per-cutoff
    mean of the indicators is the cell's empirical CDF of the statistic,
    which is already nondecreasing, so the isotonic fit resolves to it.
    Callers that already evaluated the statistic can pass the values.
    """
    if len(calibration) == 0:
        raise ConfigError("calibration dataset is empty")
    if statistic_values is not None:
        lam = np.asarray(statistic_values, dtype=float)
    else:
        lam = np.asarray(statistic(calibration.x), dtype=float)
    cells = binning.cell_index(calibration.nu)
    K = len(grid)
    values = np.zeros((2, binning.n_cells, K))
    for y in (0, 1):
        mask = calibration.y == y
        if not np.any(mask):
            continue
        lam_y = lam[mask]
        cells_y = cells[mask]
        for cell in range(binning.n_cells):
            sel = np.sort(lam_y[cells_y == cell])
            if len(sel) == 0:
                raise BinningError(f"no calibration samples in cell (y={y}, bin={cell})")
            ecdf = np.searchsorted(sel, grid.values, side="right") / len(sel)
            values[y, cell] = np.clip(pool_adjacent_violators(ecdf, np.full(K, float(len(sel)))), 0.0, 1.0)
    metadata = {
        "n_calibration": len(calibration),
        "grid_size": K,
        "seed": seed,
    }
    return RejectionSurface(
        statistic_id=statistic_id, binning=binning, grid=grid.values.copy(), values=values, metadata=metadata
    )


# ---------------------------------------------------------------------------
# Probability-integral-transform diagnostics.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParamBin:
    """One bin of the parameter space (a label plus a nuisance slice)."""

    y: int
    nu_lo: float | None = None
    nu_hi: float | None = None
    categories: tuple[int, ...] | None = None

    def label(self) -> str:
        if self.categories is not None:
            return f"y={self.y},protocols={list(self.categories)}"
        return f"y={self.y},nu=[{self.nu_lo:g},{self.nu_hi:g})"

    def mask(self, y: np.ndarray, nu: np.ndarray) -> np.ndarray:
        m = y == self.y
        if self.categories is not None:
            return m & np.isin(nu, np.asarray(self.categories))
        return m & (nu >= self.nu_lo) & (nu < self.nu_hi)


def make_param_bins(space: NuisanceSpace, n_nu_bins: int) -> list[ParamBin]:
    """Partition {0,1} x nuisance-space into 2 * n_nu_bins rectangular bins."""
    bins = []
    if space.is_continuous:
        lo, hi = space.bounds
        edges = np.linspace(lo, hi, n_nu_bins + 1)
        edges[-1] = np.nextafter(hi, np.inf)  # closed upper edge
        for y in (0, 1):
            for j in range(n_nu_bins):
                bins.append(ParamBin(y=y, nu_lo=float(edges[j]), nu_hi=float(edges[j + 1])))
    else:
        cats = list(space.categories)
        chunks = np.array_split(np.asarray(cats), min(n_nu_bins, len(cats)))
        for y in (0, 1):
            for chunk in chunks:
                bins.append(ParamBin(y=y, categories=tuple(int(c) for c in chunk)))
    return bins


def ks_distance_uniform(pit: np.ndarray) -> float:
    """Exact Kolmogorov-Smirnov distance of a sample against Uniform(0, 1)."""
    u = np.sort(np.asarray(pit, dtype=float))
    n = len(u)
    if n == 0:
        raise ConfigError("cannot compute a KS distance on an empty sample")
    hi = np.max(np.arange(1, n + 1) / n - u)
    lo = np.max(u - np.arange(0, n) / n)
    return float(max(hi, lo))


@dataclass(frozen=True)
class PitBinResult:
    bin_label: str
    n: int
    ks_distance: float | None
    ks_band: float | None
    within_band: bool | None
    cdf_grid: np.ndarray | None
    skipped: bool = False

    def to_dict(self) -> dict:
        return {
            "bin": self.bin_label,
            "n": self.n,
            "ks_distance": self.ks_distance,
            "ks_band": self.ks_band,
            "within_band": self.within_band,
            "skipped": self.skipped,
            "cdf_grid": None if self.cdf_grid is None else np.asarray(self.cdf_grid).tolist(),
        }


def pit_diagnostics(
    surface: RejectionSurface,
    eval_dataset: Dataset,
    statistic,
    param_bins: list[ParamBin],
    pp_grid_size: int = 100,
) -> list[PitBinResult]:
    """Per-bin PIT table with KS distances against Uniform(0, 1).

    Empty bins are flagged and skipped rather than raising; the 95% KS band
    1.36 / sqrt(n) is reported per bin but never enforced here.
    """
    lam = np.asarray(statistic(eval_dataset.x), dtype=float)
    pit = surface.rejection_probability_batch(lam, eval_dataset.y, eval_dataset.nu)
    levels = np.linspace(0.0, 1.0, pp_grid_size)
    results = []
    for pb in param_bins:
        mask = pb.mask(eval_dataset.y, eval_dataset.nu)
        n = int(np.sum(mask))
        if n == 0:
            warnings.warn(f"PIT bin {pb.label()} is empty; skipped")
            results.append(
                PitBinResult(pb.label(), 0, None, None, None, None, skipped=True)
            )
            continue
        sample = pit[mask]
        ks = ks_distance_uniform(sample)
        band = KS_BAND_COEFFICIENT / np.sqrt(n)
        cdf = np.searchsorted(np.sort(sample), levels, side="right") / n
        results.append(
            PitBinResult(pb.label(), n, ks, float(band), bool(ks <= band), cdf)
        )
    counted = sum(r.n for r in results)
    if counted != len(eval_dataset):
        # Bins are expected to partition the parameter space.
        raise ConfigError(
            f"parameter bins do not partition the evaluation set: {counted} != {len(eval_dataset)}"
        )
    return results
