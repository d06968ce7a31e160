import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pdcqkd.channel import (
    ChannelParams,
    class_stats,
    error_rate,
    error_yield_table,
    photon_yield,
    transmittance,
    yield_table,
)
from pdcqkd.mathkit import DomainError
from pdcqkd.oracle import oracle_distribution
from pdcqkd.source import HeraldClass, SignalDistribution, SourceParams, signal_distribution


def _point(weight, m=1, k=0, n_cut=3):
    table = np.zeros((n_cut + 1, n_cut + 1))
    table[m, k] = weight
    return SignalDistribution(table, 0.0)


@pytest.mark.parametrize("distance, expected", [(0, 1.0), (50, 0.1), (100, 0.01)])
def test_transmittance(distance, expected):
    assert transmittance(0.2, distance) == pytest.approx(expected, rel=1e-14)


def test_transmittance_rejects_negative():
    with pytest.raises(DomainError):
        transmittance(0.2, -1)


@pytest.mark.parametrize("kwargs", [dict(alpha=-0.1), dict(eta_d=1.1), dict(dark=1.0), dict(e_d=0.6)])
def test_channel_validation(kwargs):
    with pytest.raises(DomainError):
        ChannelParams(**kwargs)


def test_vacuum_yield():
    assert photon_yield(0, 0, ChannelParams(dark=0.0)) == 0.0
    pd = 1e-6
    assert photon_yield(0, 0, ChannelParams(dark=pd)) == pytest.approx(2 * pd * (1 - pd), rel=1e-12)


def test_single_photon_yield_is_transmittance():
    ch = ChannelParams(distance=30, dark=0.0)
    assert photon_yield(1, 0, ch) == pytest.approx(ch.t, rel=1e-14)


def test_error_rate_examples():
    ch = ChannelParams(dark=0.0, e_d=0.015)
    assert error_rate(1, 0, ch)[1] == pytest.approx(0.015)
    assert error_rate(0, 1, ch)[1] == pytest.approx(0.985)
    assert error_rate(0, 0, ChannelParams(dark=1e-6))[1] == pytest.approx(0.5)
    assert error_rate(0, 0, ChannelParams(dark=0.0)) == (0.0, 0.0)


@given(st.integers(0, 8), st.integers(0, 8), st.floats(0, 300), st.floats(0, 0.5), st.floats(0, 1e-3))
def test_error_yield_bounded_and_swap_symmetric(m, k, distance, e_d, dark):
    ch = ChannelParams(distance=distance, e_d=e_d, dark=dark)
    ey, _ = error_rate(m, k, ch, "H")
    y = photon_yield(m, k, ch)
    assert 0.0 <= ey <= y + 1e-15 and y <= 1.0
    assert error_rate(m, k, ch, "H") == pytest.approx(error_rate(k, m, ch, "V"), abs=1e-15)
    assert error_rate(m, k, ch, "+") == error_rate(m, k, ch, "H")


@given(
    st.sampled_from([(1, 0), (0, 1), (2, 0), (0, 4), (6, 0), (1, 1)]),
    st.floats(0.0, 0.3),
    st.floats(0.0, 0.3),
)
def test_yield_monotone_in_transmittance_below_saturation(state, t1, t2):
    lo, hi = sorted((t1, t2))
    y_lo = photon_yield(*state, ChannelParams(eta_d=lo, dark=0.0))
    y_hi = photon_yield(*state, ChannelParams(eta_d=hi, dark=0.0))
    assert y_hi >= y_lo - 1e-15


def test_yield_can_fall_for_bright_two_mode_states():
    # many photons in both modes make exclusive clicks rarer as t grows
    assert photon_yield(6, 6, ChannelParams(eta_d=0.3, dark=0.0)) < photon_yield(
        6, 6, ChannelParams(eta_d=0.1, dark=0.0)
    )


def test_tables_match_scalar_functions():
    ch = ChannelParams(distance=40)
    y = yield_table(5, ch)
    w = error_yield_table(5, ch, "V")
    for m in range(6):
        for k in range(6 - m):
            assert y[m, k] == pytest.approx(photon_yield(m, k, ch), rel=1e-14)
            assert w[m, k] == pytest.approx(error_rate(m, k, ch, "V")[0], rel=1e-14)
    assert y[5, 5] == 0.0


def test_class_stats_single_photon_point():
    ch = ChannelParams(distance=20, dark=0.0)
    stats = class_stats(_point(0.3), ch, "H")
    assert stats.gain == pytest.approx(0.3 * ch.t, rel=1e-14)
    assert stats.qber == pytest.approx(ch.e_d, rel=1e-12)


def test_class_stats_zero_weight():
    stats = class_stats(_point(0.0), ChannelParams(), "H")
    assert stats.gain == 0.0 and stats.qber == 0.0


def test_class_stats_projects_for_diagonal_nominal():
    stats = class_stats(_point(0.2), ChannelParams(dark=0.0), "+")
    # |H> in the diagonal basis: half right, half wrong before misalignment
    assert stats.qber == pytest.approx(0.5, abs=1e-12)


def test_class_stats_refuses_x_table_for_z_nominal():
    from pdcqkd.source import project_x_basis

    with pytest.raises(DomainError):
        class_stats(project_x_basis(_point(0.1)), ChannelParams(), "H")


def test_class_stats_against_oracle_composition():
    src = SourceParams(0.05, n_cut=8)
    ch = ChannelParams(distance=50)
    ref = oracle_distribution(src, HeraldClass.H)
    gain_ref = float(np.sum(ref.table * yield_table(8, ch)))
    stats = class_stats(signal_distribution(src, HeraldClass.H), ch, "V")
    assert stats.gain == pytest.approx(gain_ref, abs=1e-9)


def test_dark_count_floor_at_long_distance():
    src = SourceParams(0.01)
    dist = signal_distribution(src, HeraldClass.H)
    pd = 1e-6
    stats = class_stats(dist, ChannelParams(distance=5000, dark=pd), "V")
    assert stats.gain == pytest.approx(dist.total() * 2 * pd * (1 - pd), rel=1e-9)
    assert stats.qber == pytest.approx(0.5, abs=1e-9)
