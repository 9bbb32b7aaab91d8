import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import naps
from naps import genmodel as gm
from naps import rejection as rj
from naps.errors import BinningError, ConfigError, DomainError, SaturationError

UQ0_005_NU1 = 0.9175778871209889


def identity_statistic(xs):
    return np.asarray(xs, dtype=float)


def minimax_isotonic(values, weights):
    """O(n^3) reference: fitted_k = max_{i<=k} min_{j>=k} weighted mean of [i..j]."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    n = len(values)
    out = np.empty(n)
    for k in range(n):
        best = -np.inf
        for i in range(k + 1):
            worst = np.inf
            for j in range(k, n):
                seg = slice(i, j + 1)
                worst = min(worst, np.average(values[seg], weights=weights[seg]))
            best = max(best, worst)
        out[k] = best
    return out


def test_pav_hand_case():
    fitted = rj.pool_adjacent_violators(np.array([1.0, 0.0, 1.0]))
    assert np.allclose(fitted, [0.5, 0.5, 1.0])


def test_pav_weighted_hand_case():
    fitted = rj.pool_adjacent_violators(np.array([1.0, 0.0]), np.array([1.0, 3.0]))
    assert np.allclose(fitted, [0.25, 0.25])


def test_pav_monotone_input_is_identity():
    vals = np.array([0.0, 0.2, 0.2, 0.9, 1.0])
    assert np.array_equal(rj.pool_adjacent_violators(vals), vals)


@given(
    data=st.lists(
        st.tuples(
            st.floats(min_value=-5, max_value=5, allow_nan=False),
            st.floats(min_value=0.1, max_value=4, allow_nan=False),
        ),
        min_size=1,
        max_size=18,
    )
)
@settings(max_examples=120, deadline=None)
def test_pav_matches_minimax_reference(data):
    values = np.array([d[0] for d in data])
    weights = np.array([d[1] for d in data])
    fitted = rj.pool_adjacent_violators(values, weights)
    assert np.all(np.diff(fitted) >= -1e-12)
    assert np.allclose(fitted, minimax_isotonic(values, weights), atol=1e-9)
    # idempotent
    assert np.allclose(rj.pool_adjacent_violators(fitted, weights), fitted, atol=1e-12)


def test_cutoff_grid_hand_case():
    grid = rj.cutoff_grid_from_values(np.array([1.0, 2.0, 3.0, 4.0]), 2)
    assert np.allclose(grid.values, [1.75, 3.25])


def test_cutoff_grid_sorted_and_deduplicated():
    grid = rj.cutoff_grid_from_values(np.array([0.0, 0.0, 0.0, 1.0, 1.0, 2.0]), 12)
    assert np.all(np.diff(grid.values) > 0)


def test_cutoff_grid_degenerate_statistic():
    with pytest.raises(ConfigError):
        rj.cutoff_grid_from_values(np.full(10, 3.0), 4)


def test_sample_cutoff_grid_deterministic(uniform_gen):
    ds = gm.sample_dataset(uniform_gen, 500, seed=1)
    a = rj.sample_cutoff_grid(ds, identity_statistic, 16, seed=0)
    b = rj.sample_cutoff_grid(ds, identity_statistic, 16, seed=99)
    assert np.array_equal(a.values, b.values)


def _tiny_dataset(lams, y=None, nu=None):
    n = len(lams)
    return naps.Dataset(
        gm.SCENARIO_ANALYTIC,
        np.zeros(n, dtype=np.int8) if y is None else np.asarray(y, dtype=np.int8),
        np.full(n, 2.0) if nu is None else np.asarray(nu, dtype=float),
        np.asarray(lams, dtype=float),
    )


def test_augment_indicator_hand_case():
    ds = _tiny_dataset([0.2, 0.8])
    grid = rj.CutoffGrid(values=np.array([0.5, 0.9]))
    records = rj.augment(ds, identity_statistic, grid)
    # record (i, j) order: sample-major
    assert np.array_equal(records.z, [1, 1, 0, 1])
    assert np.array_equal(records.cutoff, [0.5, 0.9, 0.5, 0.9])


def test_augment_count_contract():
    ds = _tiny_dataset([0.1, 0.5, 0.9])
    grid = rj.CutoffGrid(values=np.array([0.2, 0.4, 0.6, 0.8]))
    records = rj.augment(ds, identity_statistic, grid)
    assert len(records) == 3 * 4


def test_augment_rows_monotone_along_grid(uniform_gen):
    ds = gm.sample_dataset(uniform_gen, 50, seed=2)
    grid = rj.cutoff_grid_from_values(ds.x, 8)
    records = rj.augment(ds, identity_statistic, grid)
    z = records.z.reshape(len(ds), len(grid))
    assert np.all(np.diff(z.astype(int), axis=1) >= 0)


def test_fit_records_hand_case_single_cell():
    binning = rj.NuBinning.equal_width(1.0, 10.0, 1)
    records = rj.AugmentedRecords(
        y=np.zeros(3, dtype=np.int8),
        nu=np.full(3, 2.0),
        cutoff=np.array([1.0, 2.0, 3.0]),
        z=np.array([1, 0, 1], dtype=np.int8),
    )
    surface = rj.fit_rejection_surface(records, binning)
    assert np.allclose(surface.values[0, 0], [0.5, 0.5, 1.0])


def test_fit_records_all_zero_cell():
    binning = rj.NuBinning.equal_width(1.0, 10.0, 1)
    records = rj.AugmentedRecords(
        y=np.zeros(4, dtype=np.int8),
        nu=np.full(4, 3.0),
        cutoff=np.array([1.0, 2.0, 1.0, 2.0]),
        z=np.zeros(4, dtype=np.int8),
    )
    surface = rj.fit_rejection_surface(records, binning)
    assert np.array_equal(surface.values[0, 0], [0.0, 0.0])


def test_fit_records_empty_cell_raises(uniform_gen):
    ds = gm.sample_dataset(uniform_gen, 200, seed=3)
    grid = rj.cutoff_grid_from_values(ds.x, 8)
    records = rj.augment(ds, identity_statistic, grid)
    # Binning extends past the sampled support, so the top cell is empty.
    binning = rj.NuBinning(edges=np.array([1.0, 10.0, 20.0]))
    with pytest.raises(BinningError, match="bin=1"):
        rj.fit_rejection_surface(records, binning)


def test_fit_surface_equals_records_path(uniform_gen):
    ds = gm.sample_dataset(uniform_gen, 3000, seed=4)
    grid = rj.cutoff_grid_from_values(ds.x, 32)
    binning = rj.NuBinning.equal_width(1.0, 10.0, 5)
    fused = rj.fit_surface(ds, identity_statistic, grid, binning)
    from_records = rj.fit_rejection_surface(rj.augment(ds, identity_statistic, grid), binning)
    assert np.array_equal(fused.values, from_records.values)
    assert np.array_equal(fused.grid, from_records.grid)


def sup_distance_to_ecdf(surface, y, cell, lams):
    lams = np.sort(lams)
    ecdf = np.arange(1, len(lams) + 1) / len(lams)
    fitted = surface._eval_cells(lams, y, cell)
    return float(np.max(np.abs(fitted - ecdf)))


def test_single_bin_fit_reproduces_ecdf(uniform_gen):
    ds = gm.sample_dataset(uniform_gen, 100_000, seed=5)
    grid = rj.cutoff_grid_from_values(ds.x, 200)
    binning = rj.NuBinning.equal_width(1.0, 10.0, 1)
    surface = rj.fit_surface(ds, identity_statistic, grid, binning)
    for y in (0, 1):
        lams = ds.x[ds.y == y]
        assert sup_distance_to_ecdf(surface, y, 0, lams) <= 0.01


def test_eval_boundary_conventions():
    binning = rj.NuBinning.equal_width(1.0, 10.0, 1)
    surface = rj.RejectionSurface(
        statistic_id="s",
        binning=binning,
        grid=np.array([0.0, 1.0, 2.0]),
        values=np.array([[[0.25, 0.5, 0.75]], [[0.1, 0.2, 1.0]]]),
    )
    assert surface.rejection_probability(-0.5, 0, 2.0) == 0.0
    assert surface.rejection_probability(0.0, 0, 2.0) == 0.25
    assert surface.rejection_probability(1.5, 0, 2.0) == 0.5
    assert surface.rejection_probability(99.0, 0, 2.0) == 0.75  # stays at the fitted max
    assert surface.rejection_probability(99.0, 1, 2.0) == 1.0


def test_invert_contracts():
    binning = rj.NuBinning.equal_width(1.0, 10.0, 1)
    surface = rj.RejectionSurface(
        statistic_id="s",
        binning=binning,
        grid=np.array([0.0, 1.0, 2.0, 3.0]),
        values=np.array([[[0.1, 0.4, 0.4, 0.9]], [[0.0, 0.3, 0.6, 1.0]]]),
    )
    assert surface.invert(0.0, 0, 2.0) == 0.0  # smallest grid cutoff
    for beta in (0.05, 0.1, 0.3, 0.4, 0.7, 0.9):
        c = surface.invert(beta, 0, 2.0)
        assert surface.rejection_probability(c, 0, 2.0) >= beta
    # ties resolve to the smaller cutoff
    assert surface.invert(0.4, 0, 2.0) == 1.0
    # round trip: inverting an attained level returns a cutoff no larger
    for c_in in (1.0, 2.0, 3.0):
        w = surface.rejection_probability(c_in, 0, 2.0)
        assert surface.invert(w, 0, 2.0) <= c_in
    with pytest.raises(SaturationError) as err:
        surface.invert(0.95, 0, 2.0)
    assert err.value.attainable_max == pytest.approx(0.9)


def test_w_matches_closed_form_cdf(uniform_gen):
    # statistic = x itself; a narrow bin centered at nu = 2
    ds = gm.sample_dataset(uniform_gen, 2_000_000, seed=6)
    grid = rj.cutoff_grid_from_values(ds.x, 200)
    binning = rj.NuBinning(edges=np.array([1.0, 1.95, 2.05, 10.0]))
    surface = rj.fit_surface(ds, identity_statistic, grid, binning)
    for x0 in np.linspace(0.05, 0.95, 10):
        expected = 1.0 - gm.survival_class0(x0, 2.0)
        got = surface.rejection_probability(x0, 0, 2.0)
        assert abs(got - expected) <= 0.02


def test_invert_recovers_upper_quantile(uniform_gen):
    ds = gm.sample_dataset(uniform_gen, 1_000_000, seed=7)
    grid = rj.cutoff_grid_from_values(ds.x, 400)
    binning = rj.NuBinning(edges=np.array([1.0, 1.1, 10.0]))
    surface = rj.fit_surface(ds, identity_statistic, grid, binning)
    # beta = 0.95 on the CDF scale is the alpha = 0.05 upper tail in x
    cut = surface.invert(0.95, 0, 1.02)
    assert abs(cut - UQ0_005_NU1) <= 0.02


def test_surface_is_read_only(pipeline):
    # prediction is amortized: fitted surfaces are immutable shared inputs
    with pytest.raises(ValueError):
        pipeline.surfaces[0].values[0, 0, 0] = 0.123
    with pytest.raises(ValueError):
        pipeline.surfaces[0].grid[0] = -1.0


def test_surface_roundtrip_bit_exact(tmp_path, pipeline):
    surface = pipeline.surfaces[0]
    path = tmp_path / "surface.json"
    surface.save(path)
    loaded = rj.RejectionSurface.load(path)
    assert np.array_equal(loaded.grid, surface.grid)
    assert np.array_equal(loaded.values, surface.values)
    assert loaded.statistic_id == surface.statistic_id
    assert loaded.binning.to_dict() == surface.binning.to_dict()


def test_binning_cells():
    binning = rj.NuBinning.equal_width(1.0, 10.0, 9)
    assert binning.n_cells == 9
    idx = binning.cell_index(np.array([1.0, 2.0, 9.9999, 10.0]))
    assert idx.tolist() == [0, 1, 8, 8]
    with pytest.raises(DomainError):
        binning.cell_index(0.5)
    reps = binning.representatives()
    assert reps[0] == pytest.approx(1.5)
    geo = rj.NuBinning.geometric(1.0, 10.0, 4)
    assert geo.edges[0] == pytest.approx(1.0)
    assert geo.edges[-1] == pytest.approx(10.0)
    disc = rj.NuBinning.discrete((0, 1, 2))
    assert disc.cell_index(np.array([2, 0])).tolist() == [2, 0]
    with pytest.raises(DomainError):
        disc.cell_index(np.array([5]))


def test_binning_region_intersection():
    from naps.nuisance import NuisanceRegion

    binning = rj.NuBinning.equal_width(1.0, 10.0, 9)
    region = NuisanceRegion(intervals=((3.8, 4.2),))
    cells = binning.cells_intersecting(region)
    assert cells.tolist() == [2, 3]
    # point-touches at cell edges are kept on both sides (widening is conservative)
    region2 = NuisanceRegion(intervals=((4.0, 5.0),))
    assert binning.cells_intersecting(region2).tolist() == [2, 3, 4]
    assert binning.cells_intersecting(NuisanceRegion()).tolist() == []


def test_binning_roundtrip():
    for binning in (rj.NuBinning.equal_width(1.0, 10.0, 7), rj.NuBinning.discrete((0, 1, 3))):
        again = rj.NuBinning.from_dict(binning.to_dict())
        assert again.to_dict() == binning.to_dict()


# --- PIT diagnostics ---------------------------------------------------------


def exact_surface(n_nu_cells=200, n_grid=2000):
    """Surface holding the closed-form conditional CDFs at cell centers."""
    binning = rj.NuBinning.equal_width(1.0, 10.0, n_nu_cells)
    grid = np.linspace(1e-6, 1.0 - 1e-6, n_grid)
    centers = binning.representatives()
    values = np.empty((2, n_nu_cells, n_grid))
    for cell, center in enumerate(centers):
        values[0, cell] = gm.cdf_class0(grid, center)
        values[1, cell] = gm.cdf_class1(grid)
    return rj.RejectionSurface(statistic_id="x", binning=binning, grid=grid, values=values)


def test_pit_exact_w_is_uniform(uniform_gen):
    surface = exact_surface()
    ds = gm.sample_dataset(uniform_gen, 100_000, seed=8)
    bins = rj.make_param_bins(gm.ANALYTIC_SPACE, 2)
    results = rj.pit_diagnostics(surface, ds, identity_statistic, bins)
    assert len(results) == 4
    for r in results:
        assert r.ks_distance <= 0.02


def test_pit_constant_half_degenerates(uniform_gen):
    binning = rj.NuBinning.equal_width(1.0, 10.0, 1)
    surface = rj.RejectionSurface(
        statistic_id="x",
        binning=binning,
        grid=np.array([-1.0, 2.0]),
        values=np.full((2, 1, 2), 0.5),
    )
    ds = gm.sample_dataset(uniform_gen, 5000, seed=9)
    results = rj.pit_diagnostics(surface, ds, identity_statistic, rj.make_param_bins(gm.ANALYTIC_SPACE, 1))
    for r in results:
        assert r.ks_distance >= 0.45


def test_pit_partition_counts(uniform_gen):
    surface = exact_surface(20, 200)
    ds = gm.sample_dataset(uniform_gen, 20_000, seed=10)
    bins = rj.make_param_bins(gm.ANALYTIC_SPACE, 4)
    results = rj.pit_diagnostics(surface, ds, identity_statistic, bins)
    assert sum(r.n for r in results) == len(ds)


def test_pit_empty_bin_skipped(uniform_gen):
    surface = exact_surface(20, 200)
    ds = gm.sample_dataset(uniform_gen, 2000, seed=11)
    only_class0 = ds.subset(ds.y == 0)
    bins = rj.make_param_bins(gm.ANALYTIC_SPACE, 1)
    results = rj.pit_diagnostics(surface, only_class0, identity_statistic, bins)
    skipped = [r for r in results if r.skipped]
    assert len(skipped) == 1 and skipped[0].bin_label.startswith("y=1")


def test_pit_non_partition_raises(uniform_gen):
    surface = exact_surface(20, 200)
    ds = gm.sample_dataset(uniform_gen, 2000, seed=12)
    bins = [rj.ParamBin(y=0, nu_lo=1.0, nu_hi=5.0)]  # misses most of the space
    with pytest.raises(ConfigError):
        rj.pit_diagnostics(surface, ds, identity_statistic, bins)


def test_ks_distance_uniform():
    assert rj.ks_distance_uniform(np.linspace(1e-6, 1 - 1e-6, 10_000)) < 2e-4
    assert rj.ks_distance_uniform(np.full(100, 0.5)) == pytest.approx(0.5, abs=1e-9)
