"""Rejection cutoffs: fixed-nuisance, uniform, and data-dependent.

All cutoffs are read off a fitted rejection surface by generalized
inversion. FPR control at level alpha with a (1 - gamma) nuisance
confidence set inverts at beta = alpha - gamma and takes the infimum of the
per-cell inverses over cells intersecting the set; TPR control inverts the
opposite label's slice at beta = alpha + gamma and takes the supremum.
gamma = 0 with the full space reproduces the uniform cutoff exactly.

For the analytic scenario the same quantities exist in closed form in
x-space; ``analytic_oracle_cutoffs`` computes them by a dense grid sweep
with golden-section refinement and serves as the ground truth the
surface-based path is tested against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, NumericError, SaturationError
from .genmodel import E_MINUS_1, upper_quantile_class0
from .nuisance import NuisanceRegion, full_space_set
from .rejection import RejectionSurface

MODE_FPR = "fpr"
MODE_TPR = "tpr"

SCOPE_FIXED = "fixed"
SCOPE_UNIFORM = "uniform"
SCOPE_CONFIDENCE_SET = "confidence-set"


@dataclass(frozen=True)
class CutoffRequest:
    """What to control (FPR or TPR), at which level, over which nuisance scope."""

    null_label: int
    alpha: float
    gamma: float = 0.0
    mode: str = MODE_FPR
    scope: str = SCOPE_UNIFORM
    nu0: float | None = None
    provider: object | None = None

    def __post_init__(self):
        if self.null_label not in (0, 1):
            raise ConfigError("null_label must be 0 or 1")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.mode not in (MODE_FPR, MODE_TPR):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.scope not in (SCOPE_FIXED, SCOPE_UNIFORM, SCOPE_CONFIDENCE_SET):
            raise ConfigError(f"unknown scope {self.scope!r}")
        if self.scope == SCOPE_FIXED:
            if self.nu0 is None:
                raise ConfigError("fixed scope needs nu0")
            if self.gamma != 0.0:
                raise ConfigError("fixed scope requires gamma = 0")
        if self.scope == SCOPE_CONFIDENCE_SET and self.provider is None:
            raise ConfigError("confidence-set scope needs a provider")
        if not 0.0 <= self.gamma:
            raise ConfigError("gamma must be nonnegative")
        beta = self.beta
        if not 0.0 < beta < 1.0:
            raise ConfigError(
                f"inversion level beta = {beta} out of (0, 1); "
                f"check gamma <= alpha (FPR) or alpha + gamma < 1 (TPR)"
            )

    @property
    def beta(self) -> float:
        return self.alpha - self.gamma if self.mode == MODE_FPR else self.alpha + self.gamma

    @property
    def slice_label(self) -> int:
        """Which label's rejection-probability slice is inverted."""
        return self.null_label if self.mode == MODE_FPR else 1 - self.null_label


@dataclass(frozen=True)
class CutoffResult:
    cutoff: float
    beta: float
    arg_nu: tuple[float, ...]
    scope: str
    mode: str
    cells: tuple[int, ...] = ()
    saturated: bool = False


def fixed_nu_cutoff(surface: RejectionSurface, request: CutoffRequest) -> CutoffResult:
    """Cutoff controlling FPR (or TPR) at one pinned nuisance value."""
    if request.scope != SCOPE_FIXED:
        raise ConfigError("fixed_nu_cutoff needs a fixed-scope request")
    y = request.slice_label
    cell = int(surface.binning.cell_index(request.nu0))
    cut = surface.invert_cell(request.beta, y, cell)
    return CutoffResult(
        cutoff=cut,
        beta=request.beta,
        arg_nu=(float(request.nu0),),
        scope=request.scope,
        mode=request.mode,
        cells=(cell,),
    )


def _optimize_over_cells(
    surface: RejectionSurface, request: CutoffRequest, cells: np.ndarray
) -> CutoffResult:
    """Exhaustive optimum of the per-cell generalized inverses.

    The surface is piecewise constant across nuisance bins, so evaluating
    every candidate cell is exact on the representable class; ties report
    every attaining representative, smallest first.
    """
    y = request.slice_label
    reps = surface.binning.representatives()
    saturated_cells = []
    cand = np.empty(len(cells))
    for i, cell in enumerate(cells):
        try:
            cand[i] = surface.invert_cell(request.beta, y, int(cell))
        except SaturationError:
            saturated_cells.append(int(cell))
            cand[i] = np.nan
    if saturated_cells:
        raise SaturationError(
            f"inversion at beta={request.beta} saturated in cells {saturated_cells} "
            f"(y={y})",
            attainable_max=float(np.min(surface.values[y, saturated_cells, -1])),
        )
    optimum = float(np.min(cand) if request.mode == MODE_FPR else np.max(cand))
    hit = cells[np.nonzero(cand == optimum)[0]]
    arg = tuple(sorted(float(reps[c]) for c in hit))
    return CutoffResult(
        cutoff=optimum,
        beta=request.beta,
        arg_nu=arg,
        scope=request.scope,
        mode=request.mode,
        cells=tuple(int(c) for c in hit),
    )


def uniform_cutoff(surface: RejectionSurface, request: CutoffRequest) -> CutoffResult:
    """Cutoff controlling the target rate uniformly over the nuisance space."""
    if request.scope not in (SCOPE_UNIFORM,):
        raise ConfigError("uniform_cutoff needs a uniform-scope request")
    cells = np.arange(surface.binning.n_cells)
    return _optimize_over_cells(surface, request, cells)


def data_dependent_cutoff(surface: RejectionSurface, x, request: CutoffRequest) -> CutoffResult:
    """Cutoff optimized over a (1 - gamma) nuisance confidence set at x."""
    if request.scope != SCOPE_CONFIDENCE_SET:
        raise ConfigError("data_dependent_cutoff needs a confidence-set request")
    region_label = request.null_label if request.mode == MODE_FPR else 1 - request.null_label
    region = request.provider.region(x, region_label)
    return cutoff_for_region(surface, region, request)


def cutoff_for_region(
    surface: RejectionSurface, region: NuisanceRegion, request: CutoffRequest
) -> CutoffResult:
    if region.is_empty:
        raise NumericError("nuisance confidence set is empty; no cutoff is defined")
    cells = surface.binning.cells_intersecting(region)
    if len(cells) == 0:
        raise NumericError("nuisance confidence set does not intersect the fitted binning")
    return _optimize_over_cells(surface, request, cells)


# ---------------------------------------------------------------------------
# Closed-form x-space oracles for the analytic scenario.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OracleCutoffs:
    x0_star: float
    x1_star: float
    arg_nu: float


def class0_cutoff_curve(nu, alpha: float, gamma: float = 0.0) -> np.ndarray:
    """x with P[X >= x | Y=0, nu] = alpha - gamma, elementwise in nu."""
    beta = alpha - gamma
    if beta <= 0.0:
        raise DomainError("alpha - gamma must be positive")
    if beta > 1.0:
        raise DomainError("alpha - gamma must be at most 1")
    return upper_quantile_class0(beta, nu)


def class1_cutoff(alpha: float) -> float:
    """x with P[X <= x | Y=1] = alpha; free of the nuisance parameter."""
    if not 0.0 <= alpha <= 1.0:
        raise DomainError("alpha must lie in [0, 1]")
    return float(np.log1p(alpha * E_MINUS_1))


def _golden_max(fn, lo: float, hi: float, tol: float = 1e-12) -> tuple[float, float]:
    """Golden-section maximization on [lo, hi]; returns (argmax, max)."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = fn(d)
    arg = 0.5 * (a + b)
    return arg, fn(arg)


def analytic_oracle_cutoffs(
    alpha: float,
    gamma: float,
    region: NuisanceRegion,
    grid_points: int = 2000,
) -> OracleCutoffs:
    """Closed-form x-space cutoffs for the analytic scenario.

    The class-0 cutoff is the supremum of the closed-form per-nu cutoff over
    the region, found by a dense sweep with golden-section refinement around
    the grid optimum (boundary optima are kept as-is).
    """
    if region.is_empty or not region.intervals:
        raise ConfigError("the analytic oracle needs a nonempty continuous region")
    x1 = class1_cutoff(alpha)

    def curve(nu):
        return class0_cutoff_curve(nu, alpha, gamma)

    best_val = -np.inf
    best_arg = None
    for lo, hi in region.intervals:
        if hi == lo:
            val = float(curve(np.asarray(lo)))
            if val > best_val:
                best_val, best_arg = val, lo
            continue
        grid = np.linspace(lo, hi, grid_points)
        vals = curve(grid)
        k = int(np.argmax(vals))
        if 0 < k < len(grid) - 1:
            arg, val = _golden_max(lambda t: float(curve(np.asarray(t))), grid[k - 1], grid[k + 1])
        else:
            arg, val = float(grid[k]), float(vals[k])
        if val > best_val:
            best_val, best_arg = val, arg
    return OracleCutoffs(x0_star=float(best_val), x1_star=x1, arg_nu=float(best_arg))
