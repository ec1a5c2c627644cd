import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msa.field_core import GraphFamily, GridSpec, ScalarField, TimeSpec
from msa.norms import (
    SUP,
    WEAK_L1,
    LorentzParams,
    MeasuredSample,
    concentrating_profile,
    counterexample_pair,
    graded_edges,
    hyperbolic_profile,
    interpolate_nested,
    interpolation_gap,
    joint_norm,
    lorentz_norm,
    mixed_norm,
    norm,
    slice_norms,
    strong_norm,
    weak_norm,
)
from msa.utils import DomainError, ParameterError

values = st.lists(
    st.one_of(st.just(0.0), st.floats(min_value=1e-3, max_value=1e3)), min_size=1, max_size=30
)
exponents = st.floats(min_value=0.25, max_value=6.0)


def _sample(vals, seed=0):
    weights = np.random.default_rng(seed).uniform(0.1, 1.0, len(vals))
    return MeasuredSample(np.array(vals), weights)


def test_indicator_norms():
    indicator = MeasuredSample(np.array([1.0, 1.0, 0.0, 0.0]), 0.25)
    assert weak_norm(indicator, 1.0) == pytest.approx(0.5)
    assert weak_norm(indicator, 2.0) == pytest.approx(math.sqrt(0.5))
    assert strong_norm(indicator, 2.0) == pytest.approx(math.sqrt(0.5))
    assert lorentz_norm(indicator, LorentzParams(2.0, 2.0)) == pytest.approx(math.sqrt(0.5))
    # (q1 / q2)^(1/q2) mu^(1/q1) for an indicator
    assert lorentz_norm(indicator, LorentzParams(1.0, 2.0)) == pytest.approx(
        math.sqrt(0.5) * 0.5
    )
    assert norm(indicator, SUP) == 1.0


def test_weak_norm_groups_ties():
    sample = MeasuredSample(np.array([2.0, 1.0, 1.0, 1.0]), 1.0)
    assert weak_norm(sample, 1.0) == pytest.approx(4.0)


def test_params_kind_and_validation():
    assert WEAK_L1.kind == "weak"
    assert SUP.kind == "sup"
    assert LorentzParams(2.0, 2.0).kind == "strong"
    assert LorentzParams(1.0, 2.0).kind == "lorentz"
    with pytest.raises(ParameterError, match="Primary exponent"):
        LorentzParams(0.0)
    with pytest.raises(ParameterError, match="finite exponents"):
        lorentz_norm(MeasuredSample(np.ones(2), 1.0), LorentzParams(1.0))
    with pytest.raises(ParameterError, match="weights"):
        MeasuredSample(np.ones(2), np.array([1.0, 0.0]))


def test_infinite_values():
    sample = MeasuredSample(np.array([1.0, np.inf]), 1.0)
    assert math.isinf(weak_norm(sample, 1.0))
    assert math.isinf(strong_norm(sample, 2.0))
    assert math.isinf(strong_norm(sample, math.inf))


@given(values, exponents)
@settings(deadline=None)
def test_strong_norm_is_diagonal_lorentz_norm(vals, q):
    sample = _sample(vals)
    assert lorentz_norm(sample, LorentzParams(q, q)) == pytest.approx(
        strong_norm(sample, q), rel=1e-9, abs=1e-12
    )


@given(values, exponents, st.floats(min_value=0.01, max_value=100.0))
@settings(deadline=None)
def test_homogeneity(vals, q, c):
    sample = _sample(vals)
    scaled = MeasuredSample(c * sample.values, sample.weights)
    assert weak_norm(scaled, q) == pytest.approx(c * weak_norm(sample, q), rel=1e-9, abs=1e-12)
    assert strong_norm(scaled, q) == pytest.approx(
        c * strong_norm(sample, q), rel=1e-9, abs=1e-12
    )


@given(values, exponents, exponents)
@settings(deadline=None)
def test_weak_below_lorentz_and_strong(vals, q1, q2):
    sample = _sample(vals)
    lorentz = lorentz_norm(sample, LorentzParams(q1, q2))
    assert weak_norm(sample, q1) <= (q2 / q1) ** (1.0 / q2) * lorentz * (1 + 1e-9) + 1e-12
    assert weak_norm(sample, q1) <= strong_norm(sample, q1) * (1 + 1e-9) + 1e-12


@given(values, exponents, exponents, st.floats(min_value=0.0, max_value=1.0), st.booleans())
@settings(deadline=None)
def test_log_convexity_in_inverse_exponent(vals, q0, q1, theta, weak):
    assert interpolation_gap(_sample(vals), q0, q1, theta, weak) <= 1.0 + 1e-9


def test_mixed_and_joint_norms_of_constant():
    grid = GridSpec.box(4, 0.0, 1.0, rank=2)
    time = TimeSpec(4, 0.25, 0.0)
    f = ScalarField(grid, np.full((4, 4, 4), 3.0), time)
    gamma = GraphFamily.whole_domain(grid, time)
    np.testing.assert_allclose(slice_norms(f, gamma, LorentzParams(2.0, 2.0)), 3.0)
    assert mixed_norm(f, gamma, SUP, LorentzParams(2.0, 2.0)) == pytest.approx(3.0)
    assert mixed_norm(f, gamma, WEAK_L1, WEAK_L1, nearest=True) == pytest.approx(3.0)
    assert joint_norm(f, gamma, WEAK_L1) == pytest.approx(3.0)


def test_callables_get_time_and_points():
    grid = GridSpec.box(4, 0.0, 1.0)
    time = TimeSpec(2, 0.5, 0.5)
    gamma = GraphFamily.whole_domain(grid, time)
    inner = slice_norms(lambda t, x: np.full(len(x), t), gamma, SUP)
    np.testing.assert_allclose(inner, [0.5, 1.0])


def test_profiles():
    u1 = concentrating_profile(0.1)
    x = np.array([[0.2], [0.5]])
    np.testing.assert_allclose(u1(0.1, x), [math.e, 0.0])
    assert hyperbolic_profile(0.5, np.array([[0.25]]))[0] == pytest.approx(8.0)
    with pytest.raises(ParameterError, match="epsilon"):
        concentrating_profile(0.0)

    u1, u2 = counterexample_pair(0.1, (8, 16))
    assert u1.data.shape == (8, 16)
    assert u1.time.times[0] == pytest.approx(1 / 16)
    assert u1.data[0, 0] == pytest.approx(math.exp(0.625))
    assert u1.data[0, -1] == 0.0
    assert u2.data[0, 0] == pytest.approx(512.0)


def test_graded_edges():
    edges, points = graded_edges(1e-4, 1.1, 1e-2)
    assert edges[0] == 0.0
    assert edges[-1] == 1.0
    assert np.all(np.diff(edges) > 0)
    assert np.diff(edges).max() <= 1.5e-2
    assert np.all((points > edges[:-1]) & (points < edges[1:]))
    with pytest.raises(ParameterError):
        graded_edges(1e-2, 1.1, 1e-3)


def test_interpolate_nested_rejects_exponents():
    grid = GridSpec.box(4, 0.0, 1.0)
    gamma = GraphFamily.whole_domain(grid, TimeSpec(2, 0.5, 0.5))

    def f(t, x):
        return np.ones(len(x))

    with pytest.raises(DomainError, match="Branch a"):
        interpolate_nested(f, gamma, "a", 0.6, 0.5)
    with pytest.raises(DomainError, match="Unknown interpolation branch"):
        interpolate_nested(f, gamma, "c", 0.2, 0.5)
    result = interpolate_nested(f, gamma, "a", 0.25, 0.5)
    assert result.p == pytest.approx(1.5)
    assert result.measured <= result.bound * (1 + 1e-9)


def test_interpolate_nested_time_branch():
    grid = GridSpec.box(4, 0.0, 1.0)
    gamma = GraphFamily.whole_domain(grid, TimeSpec(2, 0.5, 0.5))

    def f(t, x):
        return np.ones(len(x))

    with pytest.raises(DomainError, match="Branch b"):
        interpolate_nested(f, gamma, "b", 0.5, 0.5)
    result = interpolate_nested(f, gamma, "b", 0.25, 0.5)
    assert result.p == pytest.approx(0.5)
    assert result.q == pytest.approx(1.5)
    assert result.measured == pytest.approx(1.0)
    assert result.measured <= result.bound * (1 + 1e-9)
