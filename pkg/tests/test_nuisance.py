import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import naps
from naps import genmodel as gm
from naps import nuisance as nu
from naps.errors import ConfigError, NumericError

# central 95% interval of N(4, sd=0.1); truncation to [1, 10] is 30 sigma out
ORACLE_95_INTERVAL = (3.8040036015459946, 4.1959963984540054)


def test_full_space_set_identity():
    region = nu.full_space_set(gm.ANALYTIC_SPACE)
    assert region.intervals == ((1.0, 10.0),)
    disc = nu.full_space_set(gm.DISCRETE_SPACE)
    assert disc.categories == (0, 1, 2, 3)


def test_full_space_always_covers():
    region = nu.full_space_set(gm.ANALYTIC_SPACE)
    assert np.all(region.contains(np.linspace(1, 10, 77)))


def test_oracle_quantile_interval_value():
    provider = nu.OracleQuantileProvider(gamma=0.05, distribution=naps.truncated_gaussian_prior(4.0, 0.1))
    region = provider.region(x=None, y=0)
    (lo, hi), = region.intervals
    assert lo == pytest.approx(ORACLE_95_INTERVAL[0], abs=1e-7)
    assert hi == pytest.approx(ORACLE_95_INTERVAL[1], abs=1e-7)


def test_oracle_gamma_zero_is_full_support():
    provider = nu.OracleQuantileProvider(gamma=0.0, distribution=naps.truncated_gaussian_prior(4.0, 0.1))
    assert provider.region(None, 0).intervals == ((1.0, 10.0),)


def test_oracle_full_space_for_class1():
    # class-1 observations carry no nuisance information in this model
    provider = nu.OracleQuantileProvider(gamma=0.1, distribution=naps.truncated_gaussian_prior(4.0, 0.1))
    assert provider.region(None, 1).intervals == ((1.0, 10.0),)


def test_oracle_center_always_covered():
    dist = naps.truncated_gaussian_prior(4.0, 0.1)
    for gamma in (0.001, 0.05, 0.5, 0.99):
        provider = nu.OracleQuantileProvider(gamma=gamma, distribution=dist)
        assert bool(provider.region(None, 0).contains(4.0))


@given(
    g=st.tuples(
        st.floats(min_value=1e-6, max_value=0.99, allow_nan=False),
        st.floats(min_value=1e-6, max_value=0.99, allow_nan=False),
    )
)
@settings(max_examples=40, deadline=None)
def test_oracle_width_nonincreasing_in_gamma(g):
    g1, g2 = sorted(g)
    dist = naps.truncated_gaussian_prior(4.0, 0.1)
    w1 = nu.OracleQuantileProvider(gamma=g1, distribution=dist).region(None, 0).width()
    w2 = nu.OracleQuantileProvider(gamma=g2, distribution=dist).region(None, 0).width()
    assert w2 <= w1 + 1e-12


def test_oracle_degenerate_interval_error():
    dist = naps.PriorSpec(kind="point-mass", support=gm.ANALYTIC_SPACE, value=4.0)
    provider = nu.OracleQuantileProvider(gamma=0.1, distribution=dist)
    with pytest.raises(NumericError):
        provider.region(None, 0)


def test_oracle_rejects_discrete_distribution():
    weights = (0.25, 0.25, 0.25, 0.25)
    dist = naps.PriorSpec(kind="discrete-weights", support=gm.DISCRETE_SPACE, weights=weights)
    with pytest.raises(ConfigError):
        nu.OracleQuantileProvider(gamma=0.1, distribution=dist)


def test_region_validation_and_roundtrip():
    region = nu.NuisanceRegion(intervals=((1.5, 2.0), (3.0, 4.0)))
    again = nu.NuisanceRegion.from_dict(region.to_dict())
    assert again == region
    assert region.width() == pytest.approx(1.5)
    assert not region.contains(2.5)
    assert region.contains(np.array([1.7, 3.5])).all()
    with pytest.raises(ConfigError):
        nu.NuisanceRegion(intervals=((3.0, 4.0), (3.5, 5.0)))
    empty = nu.NuisanceRegion()
    assert empty.is_empty


def test_coverage_by_nu_full_space(uniform_gen):
    provider = nu.FullSpaceProvider(space=gm.ANALYTIC_SPACE)
    rows = nu.coverage_by_nu(provider, uniform_gen, np.linspace(1, 10, 5), 200, seed=1)
    assert all(r["coverage"] == 1.0 and not r["flagged"] for r in rows)


def test_coverage_by_nu_oracle_flags_outside_point(uniform_gen):
    provider = nu.OracleQuantileProvider(gamma=0.05, distribution=naps.truncated_gaussian_prior(4.0, 0.1))
    rows = nu.coverage_by_nu(provider, uniform_gen, np.array([1.0, 4.0]), 500, seed=2)
    at_1 = rows[0]
    at_4 = rows[1]
    assert at_1["coverage"] == 0.0 and at_1["flagged"]
    assert at_4["coverage"] == 1.0 and not at_4["flagged"]


def test_marginal_coverage_matched_distribution():
    # nu drawn from the same distribution the quantile interval is built on
    gamma = 0.1
    target = naps.truncated_gaussian_prior(4.0, 0.1)
    cfg = naps.analytic_config(0.5, target)
    provider = nu.OracleQuantileProvider(gamma=gamma, distribution=target)
    cov = nu.marginal_coverage(provider, cfg, n=20_000, seed=3)
    se = np.sqrt(gamma * (1 - gamma) / 20_000)
    assert cov >= 1 - gamma - 3 * se
