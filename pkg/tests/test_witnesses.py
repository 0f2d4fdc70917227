import math

import numpy as np
import pytest

from errors import DomainError
from fock_core import ClickProbabilities, PhotonNumberDistribution, make_bernoulli, make_geometric, make_poisson
from sources import QuantumDotConfig, SpdcConfig, quantum_dot_state, spdc_pulsed_heralded
from witnesses import (
    DepthMethod,
    Feature,
    approximate_attenuated_state,
    attenuation_db,
    attenuation_trajectory,
    classify,
    depth_bisection,
    fiber_range,
    nc_approx,
    nc_exact,
    nc_exact_margin,
    qng_approx,
    qng_depth_closed_form,
    transmittance,
    wigner_negativity_threshold,
    with_fiber_range,
)


@pytest.mark.parametrize("mean", [0.1, 0.5, 1.0, 2.0, 5.0])
def test_coherent_states_sit_on_the_nc_border(mean):
    dist = make_poisson(mean)
    assert abs(nc_exact_margin(dist)) < 1e-12
    assert nc_exact(dist) is False


def test_nc_exact_on_weak_single_photon_state():
    p1, p2 = 0.00999, 1e-8
    dist = PhotonNumberDistribution.from_probs([1.0 - p1 - p2, p1, p2])
    assert nc_exact(dist)


def test_approximate_witnesses():
    p = ClickProbabilities.from_values(0.1, 1e-5)
    assert nc_approx(p)
    assert qng_approx(p)
    assert not qng_approx(ClickProbabilities.from_values(0.1, 1e-3))
    assert nc_approx(ClickProbabilities.from_values(0.1, 1e-3))


def test_wigner_threshold():
    threshold = wigner_negativity_threshold(0.8)
    assert threshold.t_threshold == pytest.approx(0.625)
    assert threshold.attainable
    assert not wigner_negativity_threshold(0.5).attainable
    with pytest.raises(DomainError):
        wigner_negativity_threshold(0.0)


@pytest.mark.parametrize("eta", [0.1, 0.5, 1.0])
def test_ideal_state_keeps_every_feature_to_the_scan_floor(eta):
    dist = make_bernoulli(eta)
    for feature in (Feature.QNG, Feature.NC):
        report = depth_bisection(dist, feature)
        assert report.infinite
        assert report.verified_to_db == 60.0
        assert report.describe() == "infinite (verified to 60 dB)"
    for T in (1.0, 0.9, 0.5, 0.3):
        attainable = wigner_negativity_threshold(eta * T).attainable
        assert attainable == (eta * T > 0.5)


def test_classify_labels():
    assert classify(make_poisson(0.5)).label == "unclassified"
    assert classify(make_bernoulli(0.9)).label == "wigner_negative"
    assert classify(make_bernoulli(0.3)).label == "quantum_non_gaussian"
    assert classify(ClickProbabilities.from_values(0.1, 0.004)).label == "nonclassical"
    verdict = classify(ClickProbabilities.from_values(0.1, 1e-5))
    assert verdict.nc_exact is None
    assert verdict.margins.qng_approx == pytest.approx(2.0 / 3.0 * 1e-3 - 1e-5)


def test_closed_form_depth():
    report = qng_depth_closed_form(ClickProbabilities.from_values(0.1, 1e-5))
    assert report.method == DepthMethod.CLOSED_FORM
    assert report.t_min == pytest.approx(0.015)
    assert report.depth_db == pytest.approx(18.24, abs=0.01)
    assert not report.approximation_warning


def test_closed_form_edge_cases():
    not_qng = qng_depth_closed_form(ClickProbabilities.from_values(0.1, 1e-3))
    assert not not_qng.witnessed
    assert not_qng.depth_db == 0.0

    single_photon = qng_depth_closed_form(ClickProbabilities.from_values(0.4, 0.0))
    assert single_photon.infinite
    assert math.isinf(single_photon.depth_db)

    assert qng_depth_closed_form(ClickProbabilities.from_values(0.5, 0.06)).approximation_warning


def _grid():
    for p1 in (0.1, 0.2, 0.3, 0.4, 0.5):
        for ratio in (1e-3, 3e-4, 1e-4, 3e-5):
            yield p1, ratio * p1


@pytest.mark.parametrize("p1,p2", list(_grid()))
def test_bisection_agrees_with_closed_form_for_small_multiphoton_share(p1, p2):
    dist = PhotonNumberDistribution.from_probs([1.0 - p1 - p2, p1, p2])
    closed = qng_depth_closed_form(ClickProbabilities.from_values(p1, p2))
    exact = depth_bisection(dist)
    assert exact.method == DepthMethod.BISECTION
    assert exact.depth_db >= closed.depth_db - 1e-3
    assert abs(exact.depth_db - closed.depth_db) <= 0.1 * closed.depth_db
    assert not exact.non_monotonic


def test_nc_depth_exceeds_qng_depth():
    cfg = SpdcConfig(kind="spdc_pulsed", g=0.05, tau_s=2e-9, repetition_rate_hz=1e7, eta_signal=0.5)
    dist = spdc_pulsed_heralded(cfg).state
    qng = depth_bisection(dist, Feature.QNG)
    nc = depth_bisection(dist, Feature.NC)
    assert 0.0 < qng.depth_db < nc.depth_db


def test_state_without_qng_has_zero_depth():
    report = depth_bisection(make_geometric(0.3))
    assert not report.witnessed
    assert report.depth_db == 0.0


def test_trajectory_slope_tends_to_two():
    dist = spdc_pulsed_heralded(
        SpdcConfig(kind="spdc_pulsed", g=0.05, tau_s=2e-9, repetition_rate_hz=1e7, eta_signal=0.4)
    ).state
    points = attenuation_trajectory(dist, [40.0, 50.0])
    slope = math.log(points[1].p2plus / points[0].p2plus) / math.log(points[1].p1 / points[0].p1)
    assert slope == pytest.approx(2.0, rel=0.01)


def test_approximate_attenuated_state_scales_linearly_and_quadratically():
    approx = approximate_attenuated_state(ClickProbabilities.from_values(0.2, 1e-3), 0.1)
    assert approx.p1 == pytest.approx(0.02)
    assert approx.p2plus == pytest.approx(1e-5)
    assert approx.p0 == pytest.approx(1.0 - 0.02 - 1e-5)


def test_attenuation_conversions():
    assert attenuation_db(0.5) == pytest.approx(3.0103, abs=1e-4)
    assert math.isinf(attenuation_db(0.0))
    assert transmittance(10.0) == pytest.approx(0.1)
    with pytest.raises(DomainError):
        transmittance(-1.0)


def test_fiber_ranges():
    assert fiber_range(31.8, 4.0) == pytest.approx(7.95, rel=1e-3)
    assert fiber_range(31.8, 0.177) == pytest.approx(179.66, rel=1e-3)
    with pytest.raises(DomainError):
        fiber_range(10.0, 0.0)
    report = with_fiber_range(qng_depth_closed_form(ClickProbabilities.from_values(0.1, 1e-5)), 0.2)
    assert report.fiber_km == pytest.approx(report.depth_db / 0.2)
    assert np.isclose(report.loss_db_per_km, 0.2)


def _qng_click_grid():
    for p1 in (0.01, 0.05, 0.2, 0.5, 0.9):
        for share in (0.0, 0.1, 0.5, 0.9, 0.99, 1.01, 2.0):
            p2 = share * 2.0 / 3.0 * p1 ** 3
            if p1 + p2 <= 1.0:
                yield ClickProbabilities.from_values(p1, p2)


def test_approximate_nc_survives_the_conservative_map():
    rng = np.random.default_rng(5)
    for _ in range(500):
        p1 = rng.uniform(1e-4, 0.6)
        p = ClickProbabilities.from_values(p1, rng.uniform(0.0, 0.99) * 0.5 * p1 ** 2)
        assert nc_approx(p)
        for T in (1.0, 0.7, 0.3, 1e-2, 1e-4, 1e-6):
            assert nc_approx(approximate_attenuated_state(p, T))


def test_qng_verdict_agrees_with_closed_form_depth():
    for p in _qng_click_grid():
        report = qng_depth_closed_form(p)
        assert report.witnessed == qng_approx(p)
        if qng_approx(p):
            assert report.t_min < 1.0


@pytest.mark.parametrize("factor", [1.5, 2.0, 4.0])
def test_closed_form_depth_gains_thirty_log_factor(factor):
    base = qng_depth_closed_form(ClickProbabilities.from_values(0.05, 1e-6))
    scaled = qng_depth_closed_form(ClickProbabilities.from_values(0.05 * factor, 1e-6))
    assert abs(scaled.depth_db - base.depth_db - 30.0 * math.log10(factor)) < 1e-9


def test_heralded_geometric_depth_near_closed_form():
    g = 0.01
    dist = PhotonNumberDistribution.from_probs([0.0] + [(1.0 - g) * g ** k for k in range(25)])
    closed = qng_depth_closed_form(ClickProbabilities.from_values(0.99, 0.01))
    assert closed.depth_db == pytest.approx(18.1, abs=0.05)
    exact = depth_bisection(dist)
    assert abs(exact.depth_db - closed.depth_db) <= 0.1 * closed.depth_db


def test_weak_single_photon_state_dual_method_agreement():
    p1, p2 = 0.00999, 1e-8
    dist = PhotonNumberDistribution.from_probs([1.0 - p1 - p2, p1, p2, 0.0])
    closed = qng_depth_closed_form(ClickProbabilities.from_values(p1, p2))
    exact = depth_bisection(dist)
    assert exact.depth_db == pytest.approx(closed.depth_db, rel=0.01)


def test_trajectory_starts_at_the_input_and_decreases():
    dist = spdc_pulsed_heralded(
        SpdcConfig(kind="spdc_pulsed", g=0.05, tau_s=2e-9, repetition_rate_hz=1e7, eta_signal=0.5)
    ).state
    points = attenuation_trajectory(dist, [0.0, 1.0, 3.0, 10.0, 20.0, 40.0])
    assert points[0].transmittance == 1.0
    assert points[0].p1 == pytest.approx(dist[1], abs=1e-12)
    assert points[0].p2plus == pytest.approx(1.0 - dist[0] - dist[1], abs=1e-12)
    assert all(a.p1 > b.p1 for a, b in zip(points, points[1:]))
    assert all(a.p2plus > b.p2plus for a, b in zip(points, points[1:]))


def test_trajectory_of_the_ideal_state_has_no_multiphoton_part():
    points = attenuation_trajectory(make_bernoulli(0.8), [0.0, 3.0, 30.0])
    assert [pt.p2plus for pt in points] == [0.0, 0.0, 0.0]
    assert points[0].p1 == pytest.approx(0.8)


@pytest.mark.parametrize("dist", [
    make_poisson(0.0),
    quantum_dot_state(QuantumDotConfig(eta_col=0.0, lambda_bg=0.0)),
])
def test_vacuum_state_has_no_depth(dist):
    assert dist.n_max == 0
    for feature in (Feature.QNG, Feature.NC):
        report = depth_bisection(dist, feature)
        assert not report.witnessed
        assert report.depth_db == 0.0
    assert depth_bisection(dist).describe() == "not QNG (depth 0 dB)"
    points = attenuation_trajectory(dist, [0.0, 3.0])
    assert [(pt.p1, pt.p2plus) for pt in points] == [(0.0, 0.0), (0.0, 0.0)]
